use ndarray::{s, Axis};

use crate::ops::zip_map;
use crate::tape::{accumulate, Node, Op, Var};
use crate::{Float, Matrix};

/// Pushes the output gradient `g` of node `i` onto its inputs.
pub(crate) fn propagate<F: Float>(
    nodes: &[Node<F>],
    i: usize,
    g: &Matrix<F>,
    grads: &mut [Option<Matrix<F>>],
) {
    let val = |v: Var| &nodes[v.0].value;
    let wants = |v: Var| nodes[v.0].requires_grad;
    let mut send = |v: Var, gv: Matrix<F>| {
        if nodes[v.0].requires_grad {
            accumulate(grads, v, gv);
        }
    };
    let out = &nodes[i].value;

    match &nodes[i].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if wants(*a) {
                send(*a, g.dot(&val(*b).t()));
            }
            if wants(*b) {
                send(*b, val(*a).t().dot(g));
            }
        }
        Op::MatMulT(a, b) => {
            // out = a bᵀ
            if wants(*a) {
                send(*a, g.dot(val(*b)));
            }
            if wants(*b) {
                send(*b, g.t().dot(val(*a)));
            }
        }
        Op::Transpose(a) => send(*a, g.t().as_standard_layout().into_owned()),
        Op::Add(a, b) => {
            send(*a, g.clone());
            send(*b, g.clone());
        }
        Op::AddRow(a, r) => {
            send(*a, g.clone());
            if wants(*r) {
                send(*r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
        }
        Op::MulRow(a, r) => {
            if wants(*a) {
                send(*a, g * val(*r));
            }
            if wants(*r) {
                send(*r, (g * val(*a)).sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
        }
        Op::MulCol(a, c) => {
            if wants(*a) {
                send(*a, g * val(*c));
            }
            if wants(*c) {
                send(*c, (g * val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1)));
            }
        }
        Op::Mul(a, b) => {
            if wants(*a) {
                send(*a, g * val(*b));
            }
            if wants(*b) {
                send(*b, g * val(*a));
            }
        }
        Op::Scale(a, s) => send(*a, g * *s),
        Op::AddScalar(a) => send(*a, g.clone()),
        Op::Concat { parts, axis } => {
            let mut start = 0;
            for p in parts {
                let len = val(*p).shape()[*axis];
                if wants(*p) {
                    let piece = if *axis == 0 {
                        g.slice(s![start..start + len, ..]).to_owned()
                    } else {
                        g.slice(s![.., start..start + len]).to_owned()
                    };
                    send(*p, piece);
                }
                start += len;
            }
        }
        Op::SliceCols { a, start } => {
            let mut full = Matrix::zeros(val(*a).dim());
            full.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
            send(*a, full);
        }
        Op::SliceRows { a, start } => {
            let mut full = Matrix::zeros(val(*a).dim());
            full.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
            send(*a, full);
        }
        Op::GatherRows { a, idx } => {
            let mut full = Matrix::zeros(val(*a).dim());
            for (k, &r) in idx.iter().enumerate() {
                let mut dst = full.row_mut(r);
                dst += &g.row(k);
            }
            send(*a, full);
        }
        Op::WeightedRows { a, rows } => {
            let mut full = Matrix::zeros(val(*a).dim());
            for (k, terms) in rows.iter().enumerate() {
                for &(r, w) in terms {
                    full.row_mut(r).scaled_add(w, &g.row(k));
                }
            }
            send(*a, full);
        }
        Op::Reshape(a) => {
            let flat: Vec<F> = g.iter().copied().collect();
            send(
                *a,
                Matrix::from_shape_vec(val(*a).dim(), flat).expect("reshape is size-preserving"),
            );
        }
        Op::Softmax(a) => {
            // dx = y ⊙ (g − Σ g⊙y)
            let mut dx = zip_map(g, out, |gi, yi| gi * yi);
            for (mut row, y) in dx.rows_mut().into_iter().zip(out.rows()) {
                let dot = row.sum();
                row.zip_mut_with(&y, |d, &yi| *d -= yi * dot);
            }
            send(*a, dx);
        }
        Op::Normalize { a, inv_std } => {
            // y = (x − μ)·s;  dx = s·(g − mean(g) − y·mean(g⊙y))
            let c = F::from_f64(out.ncols() as f64);
            let mut dx = g.to_owned();
            for ((mut row, y), &is) in dx.rows_mut().into_iter().zip(out.rows()).zip(inv_std) {
                let mean_g = row.sum() / c;
                let mean_gy = row.iter().zip(y.iter()).map(|(&gi, &yi)| gi * yi).sum::<F>() / c;
                row.zip_mut_with(&y, |d, &yi| *d = is * (*d - mean_g - yi * mean_gy));
            }
            send(*a, dx);
        }
        Op::Dropout { a, mask } => send(*a, g * mask),
        Op::Sigmoid(a) => send(*a, zip_map(g, out, |gi, y| gi * y * (F::one() - y))),
        Op::Tanh(a) => send(*a, zip_map(g, out, |gi, y| gi * (F::one() - y * y))),
        Op::Relu(a) => send(
            *a,
            zip_map(g, val(*a), |gi, x| if x > F::zero() { gi } else { F::zero() }),
        ),
        Op::Unfold { a, segments, width } => {
            let x = val(*a);
            let c = x.ncols();
            let mut full = Matrix::zeros(x.dim());
            let mut r = 0;
            for seg in segments {
                for t in seg.start..=seg.end - width {
                    for k in 0..*width {
                        let mut dst = full.row_mut(t + k);
                        dst += &g.slice(s![r, k * c..(k + 1) * c]);
                    }
                    r += 1;
                }
            }
            send(*a, full);
        }
        Op::SegmentMax { a, argmax } => {
            let c = g.ncols();
            let mut full = Matrix::zeros(val(*a).dim());
            for k in 0..g.nrows() {
                for j in 0..c {
                    full[[argmax[k * c + j], j]] += g[[k, j]];
                }
            }
            send(*a, full);
        }
        Op::CrossEntropy {
            logits,
            targets,
            probs,
        } => {
            let scale = g[[0, 0]] / F::from_f64(targets.len() as f64);
            let mut dx = probs.clone();
            for (r, &t) in targets.iter().enumerate() {
                dx[[r, t]] -= F::one();
            }
            dx.mapv_inplace(|v| v * scale);
            send(*logits, dx);
        }
        Op::Sum(a) => send(*a, Matrix::from_elem(val(*a).dim(), g[[0, 0]])),
        Op::Mean(a) => {
            let x = val(*a);
            let n = F::from_f64(x.len() as f64);
            send(*a, Matrix::from_elem(x.dim(), g[[0, 0]] / n));
        }
        Op::SumRows(a) => {
            let x = val(*a);
            let mut full = Matrix::zeros(x.dim());
            for mut row in full.rows_mut() {
                row.assign(&g.row(0));
            }
            send(*a, full);
        }
        Op::Pick { a, idx } => {
            let mut full = Matrix::zeros(val(*a).dim());
            for (r, &j) in idx.iter().enumerate() {
                full[[r, j]] = g[[r, 0]];
            }
            send(*a, full);
        }
        Op::LnClamp { a, min } => send(
            *a,
            zip_map(g, val(*a), |gi, x| if x > *min { gi / x } else { F::zero() }),
        ),
    }
}
