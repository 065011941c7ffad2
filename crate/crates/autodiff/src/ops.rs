use ndarray::{concatenate, s, Axis, Zip};

use crate::rng::uniform01;
use crate::tape::{Op, Segment};
use crate::{shape_of, Error, Float, Matrix, Result, Tape, Var};

fn mismatch<F>(op: &'static str, a: &Matrix<F>, b: &Matrix<F>) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: shape_of(a),
        rhs: shape_of(b),
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> Error {
    Error::InvalidArgument {
        op,
        msg: msg.into(),
    }
}

impl<F: Float> Tape<F> {
    fn unary(&self, a: Var, f: impl Fn(&Matrix<F>) -> Matrix<F>, op: Op<F>) -> Var {
        let value = f(&self.value(a));
        let rg = self.rg(&[a]);
        self.push(value, op, rg)
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        name: &'static str,
        check: impl Fn(&Matrix<F>, &Matrix<F>) -> bool,
        f: impl Fn(&Matrix<F>, &Matrix<F>) -> Matrix<F>,
        op: Op<F>,
    ) -> Result<Var> {
        let value = {
            let (va, vb) = (self.value(a), self.value(b));
            if !check(&va, &vb) {
                return Err(mismatch(name, &va, &vb));
            }
            f(&va, &vb)
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// `[m, k] × [k, n] → [m, n]`
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(
            a,
            b,
            "matmul",
            |x, y| x.ncols() == y.nrows(),
            |x, y| x.dot(y),
            Op::MatMul(a, b),
        )
    }

    /// `[m, k] × [n, k]ᵀ → [m, n]`; the layout used for weight matrices.
    pub fn matmul_t(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(
            a,
            b,
            "matmul_t",
            |x, y| x.ncols() == y.ncols(),
            |x, y| x.dot(&y.t()),
            Op::MatMulT(a, b),
        )
    }

    pub fn transpose(&self, a: Var) -> Var {
        self.unary(a, |x| x.t().as_standard_layout().into_owned(), Op::Transpose(a))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x.dim() == y.dim(), |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -F::one());
        self.add(a, nb)
    }

    /// Adds a `[1, c]` row to every row of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        self.binary(
            a,
            row,
            "add_row",
            |x, r| r.nrows() == 1 && r.ncols() == x.ncols(),
            |x, r| x + r,
            Op::AddRow(a, row),
        )
    }

    /// Multiplies every row of `a` by a `[1, c]` row, elementwise.
    pub fn mul_row(&self, a: Var, row: Var) -> Result<Var> {
        self.binary(
            a,
            row,
            "mul_row",
            |x, r| r.nrows() == 1 && r.ncols() == x.ncols(),
            |x, r| x * r,
            Op::MulRow(a, row),
        )
    }

    /// Scales row `i` of `a` by `col[i, 0]`.
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var> {
        self.binary(
            a,
            col,
            "mul_col",
            |x, c| c.ncols() == 1 && c.nrows() == x.nrows(),
            |x, c| x * c,
            Op::MulCol(a, col),
        )
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x.dim() == y.dim(), |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&self, a: Var, s: F) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&self, a: Var, s: F) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    /// Concatenates along `axis` (0 = rows, 1 = columns).
    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(invalid("concat", "needs at least one part and axis 0 or 1"));
        }
        let value = {
            let vals: Vec<_> = parts.iter().map(|p| self.value(*p)).collect();
            let other = 1 - axis;
            let want = vals[0].shape()[other];
            if let Some(bad) = vals.iter().find(|v| v.shape()[other] != want) {
                return Err(mismatch("concat", &vals[0], bad));
            }
            let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
            concatenate(Axis(axis), &views).expect("shapes checked")
        };
        let rg = self.rg(parts);
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = {
            let v = self.value(a);
            if start + len > v.ncols() {
                return Err(invalid(
                    "split",
                    format!("columns {start}..{} out of {:?}", start + len, v.shape()),
                ));
            }
            v.slice(s![.., start..start + len]).to_owned()
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceCols { a, start }, rg))
    }

    pub fn slice_rows(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let value = {
            let v = self.value(a);
            if start + len > v.nrows() {
                return Err(invalid(
                    "slice_rows",
                    format!("rows {start}..{} out of {:?}", start + len, v.shape()),
                ));
            }
            v.slice(s![start..start + len, ..]).to_owned()
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SliceRows { a, start }, rg))
    }

    /// Splits columns into consecutive chunks of the given widths.
    pub fn split(&self, a: Var, widths: &[usize]) -> Result<Vec<Var>> {
        let total: usize = widths.iter().sum();
        let (_, cols) = self.shape(a);
        if total != cols {
            return Err(invalid(
                "split",
                format!("widths sum to {total}, input has {cols} columns"),
            ));
        }
        let mut start = 0;
        widths
            .iter()
            .map(|w| {
                let v = self.slice_cols(a, start, *w);
                start += w;
                v
            })
            .collect()
    }

    /// Row `idx[k]` of `table` becomes row `k` of the output.
    pub fn embedding_lookup(&self, table: Var, idx: &[usize]) -> Result<Var> {
        let value = {
            let t = self.value(table);
            if let Some(bad) = idx.iter().find(|&&i| i >= t.nrows()) {
                return Err(invalid(
                    "embedding_lookup",
                    format!("index {bad} out of {} rows", t.nrows()),
                ));
            }
            t.select(Axis(0), idx)
        };
        let rg = self.rg(&[table]);
        Ok(self.push(
            value,
            Op::GatherRows {
                a: table,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// Output row `k` is `Σ w · a[i]` over `rows[k]`, summed in list order.
    pub fn weighted_rows(&self, a: Var, rows: Vec<Vec<(usize, F)>>) -> Result<Var> {
        let value = {
            let t = self.value(a);
            let mut out = Matrix::zeros((rows.len(), t.ncols()));
            for (k, terms) in rows.iter().enumerate() {
                let mut dst = out.row_mut(k);
                for &(i, w) in terms {
                    if i >= t.nrows() {
                        return Err(invalid("weighted_rows", format!("row {i} out of range")));
                    }
                    dst.scaled_add(w, &t.row(i));
                }
            }
            out
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::WeightedRows { a, rows }, rg))
    }

    /// Row-major reshape.
    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = {
            let v = self.value(a);
            if v.len() != rows * cols {
                return Err(Error::ShapeMismatch {
                    op: "reshape",
                    lhs: shape_of(&v),
                    rhs: vec![rows, cols],
                });
            }
            let flat: Vec<F> = v.iter().copied().collect();
            Matrix::from_shape_vec((rows, cols), flat).expect("length checked")
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Softmax over each row.
    pub fn softmax(&self, a: Var) -> Var {
        self.unary(a, softmax_rows, Op::Softmax(a))
    }

    /// Per-row standardization to zero mean and unit variance.
    pub fn normalize(&self, a: Var, eps: F) -> Var {
        let (value, inv_std) = {
            let x = self.value(a);
            let c = F::from_f64(x.ncols() as f64);
            let mut out = x.to_owned();
            let mut inv_std = Vec::with_capacity(x.nrows());
            for mut row in out.rows_mut() {
                let mean = row.iter().copied().sum::<F>() / c;
                row.mapv_inplace(|v| v - mean);
                let var = row.iter().map(|&v| v * v).sum::<F>() / c;
                let is = F::one() / (var + eps).sqrt();
                row.mapv_inplace(|v| v * is);
                inv_std.push(is);
            }
            (out, inv_std)
        };
        let rg = self.rg(&[a]);
        self.push(value, Op::Normalize { a, inv_std }, rg)
    }

    /// Layer normalization with a `[1, c]` gain and bias.
    pub fn layer_norm(&self, a: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let n = self.normalize(a, eps);
        let g = self.mul_row(n, gain)?;
        self.add_row(g, bias)
    }

    /// Inverted dropout: at train time each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`; identity in
    /// evaluation mode. The mask is a pure function of `seed` and the
    /// element index.
    pub fn dropout(&self, a: Var, p: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid("dropout", format!("p = {p} outside [0, 1)")));
        }
        if !self.is_training() || p == 0.0 {
            return Ok(a);
        }
        let keep = F::from_f64(1.0 / (1.0 - p));
        let (value, mask) = {
            let x = self.value(a);
            let mut mask = Matrix::zeros(x.dim());
            for (k, m) in mask.iter_mut().enumerate() {
                if uniform01(seed, k as u64) >= p {
                    *m = keep;
                }
            }
            (&*x * &mask, mask)
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Dropout { a, mask }, rg))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.mapv(|v| F::one() / (F::one() + (-v).exp())),
            Op::Sigmoid(a),
        )
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, |x| x.mapv(|v| v.tanh()), Op::Tanh(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(
            a,
            |x| x.mapv(|v| if v > F::zero() { v } else { F::zero() }),
            Op::Relu(a),
        )
    }

    /// Sliding windows of `width` consecutive rows inside each segment,
    /// flattened into rows of length `width · cols`.
    pub fn unfold(&self, a: Var, segments: &[Segment], width: usize) -> Result<Var> {
        let value = {
            let x = self.value(a);
            let c = x.ncols();
            let mut count = 0;
            for seg in segments {
                if seg.end > x.nrows() || seg.len() < width || width == 0 {
                    return Err(invalid(
                        "conv1d",
                        format!(
                            "segment {seg:?} shorter than width {width} or outside {} rows",
                            x.nrows()
                        ),
                    ));
                }
                count += seg.len() - width + 1;
            }
            let mut out = Matrix::zeros((count, width * c));
            let mut r = 0;
            for seg in segments {
                for t in seg.start..=seg.end - width {
                    let mut dst = out.row_mut(r);
                    for k in 0..width {
                        dst.slice_mut(s![k * c..(k + 1) * c]).assign(&x.row(t + k));
                    }
                    r += 1;
                }
            }
            out
        };
        let rg = self.rg(&[a]);
        Ok(self.push(
            value,
            Op::Unfold {
                a,
                segments: segments.to_vec(),
                width,
            },
            rg,
        ))
    }

    /// One-dimensional convolution over the rows (time axis) of `x`
    /// (`[len, c_in]`) with `weight` of shape `[c_out, width · c_in]`.
    pub fn conv1d(&self, x: Var, weight: Var, bias: Var, width: usize) -> Result<Var> {
        let (len, _) = self.shape(x);
        let windows = self.unfold(x, std::slice::from_ref(&(0..len)), width)?;
        let y = self.matmul_t(windows, weight)?;
        self.add_row(y, bias)
    }

    /// Column-wise maximum inside each row segment: `[segments, cols]`.
    pub fn segment_max(&self, a: Var, segments: &[Segment]) -> Result<Var> {
        let (value, argmax) = {
            let x = self.value(a);
            let c = x.ncols();
            let mut out = Matrix::zeros((segments.len(), c));
            let mut argmax = vec![0usize; segments.len() * c];
            for (k, seg) in segments.iter().enumerate() {
                if seg.is_empty() || seg.end > x.nrows() {
                    return Err(invalid(
                        "max_pool1d",
                        format!("bad segment {seg:?} for {} rows", x.nrows()),
                    ));
                }
                for j in 0..c {
                    let mut best = seg.start;
                    for i in seg.clone() {
                        if x[[i, j]] > x[[best, j]] {
                            best = i;
                        }
                    }
                    out[[k, j]] = x[[best, j]];
                    argmax[k * c + j] = best;
                }
            }
            (out, argmax)
        };
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::SegmentMax { a, argmax }, rg))
    }

    /// Max pooling along rows with the given window and stride.
    pub fn max_pool1d(&self, a: Var, window: usize, stride: usize) -> Result<Var> {
        let (len, _) = self.shape(a);
        if window == 0 || stride == 0 || window > len {
            return Err(invalid(
                "max_pool1d",
                format!("window {window}, stride {stride} over length {len}"),
            ));
        }
        let segments: Vec<Segment> = (0..=len - window)
            .step_by(stride)
            .map(|s| s..s + window)
            .collect();
        self.segment_max(a, &segments)
    }

    /// Mean negative log-likelihood of `targets` under row-softmaxed
    /// `logits`.
    pub fn cross_entropy(&self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (value, probs) = {
            let x = self.value(logits);
            if targets.len() != x.nrows() {
                return Err(invalid(
                    "cross_entropy",
                    format!("{} targets for {} rows", targets.len(), x.nrows()),
                ));
            }
            if let Some(bad) = targets.iter().find(|&&t| t >= x.ncols()) {
                return Err(invalid("cross_entropy", format!("target {bad} out of range")));
            }
            let probs = softmax_rows(&x);
            let mut total = F::zero();
            for (row, &t) in x.rows().into_iter().zip(targets) {
                let m = row.iter().copied().fold(F::neg_infinity(), F::max_val);
                let lse = row.iter().map(|&v| (v - m).exp()).sum::<F>().ln() + m;
                total += lse - row[t];
            }
            let n = F::from_f64(targets.len() as f64);
            (Matrix::from_elem((1, 1), total / n), probs)
        };
        let rg = self.rg(&[logits]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&self, a: Var) -> Var {
        self.unary(a, |x| Matrix::from_elem((1, 1), x.sum()), Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        self.unary(
            a,
            |x| Matrix::from_elem((1, 1), x.sum() / F::from_f64(x.len() as f64)),
            Op::Mean(a),
        )
    }

    /// Column sums as a `[1, c]` row.
    pub fn sum_rows(&self, a: Var) -> Var {
        self.unary(a, |x| x.sum_axis(Axis(0)).insert_axis(Axis(0)), Op::SumRows(a))
    }

    /// `out[i, 0] = a[i, idx[i]]`
    pub fn pick(&self, a: Var, idx: &[usize]) -> Result<Var> {
        let value = {
            let x = self.value(a);
            if idx.len() != x.nrows() || idx.iter().any(|&j| j >= x.ncols()) {
                return Err(invalid(
                    "pick",
                    format!("{} indices for {:?}", idx.len(), x.shape()),
                ));
            }
            Matrix::from_shape_fn((idx.len(), 1), |(i, _)| x[[i, idx[i]]])
        };
        let rg = self.rg(&[a]);
        Ok(self.push(
            value,
            Op::Pick {
                a,
                idx: idx.to_vec(),
            },
            rg,
        ))
    }

    /// `ln(max(a, min))`; the gradient is zero where the clamp is active.
    pub fn ln_clamp(&self, a: Var, min: F) -> Var {
        self.unary(a, |x| x.mapv(|v| v.max_val(min).ln()), Op::LnClamp { a, min })
    }
}

pub(crate) fn softmax_rows<F: Float>(x: &Matrix<F>) -> Matrix<F> {
    let mut out = x.to_owned();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max_val);
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

pub(crate) fn zip_map<F: Float>(
    a: &Matrix<F>,
    b: &Matrix<F>,
    f: impl Fn(F, F) -> F,
) -> Matrix<F> {
    let mut out = Matrix::zeros(a.dim());
    Zip::from(&mut out)
        .and(a)
        .and(b)
        .for_each(|o, &x, &y| *o = f(x, y));
    out
}
