//! Gradient checks for every primitive, shared by the autodiff tests and
//! the workspace acceptance suite.

use gt_autodiff::rng::uniform01;
use gt_autodiff::{grad_check, GradCheckConfig, GradCheckReport, Matrix, Result, Tape, Var};

pub type Reports = Vec<(&'static str, GradCheckReport)>;

pub fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    Matrix::from_shape_fn((rows, cols), |(i, j)| {
        2.0 * uniform01(seed, (i * cols + j) as u64) - 1.0
    })
}

/// Contracts an arbitrary-shaped output with fixed random weights so every
/// output coordinate contributes to the scalar.
pub fn contract(tape: &Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(out);
    let w = tape.constant(random(r, c, seed ^ 0xABCD));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

pub fn cfg(tol: f64) -> GradCheckConfig {
    GradCheckConfig {
        tol,
        ..GradCheckConfig::default()
    }
}

fn check(
    out: &mut Reports,
    name: &'static str,
    f: impl Fn(&Tape<f64>, &[Var]) -> Result<Var>,
    inputs: &[Matrix<f64>],
    tol: f64,
) {
    let report = grad_check(f, inputs, &cfg(tol)).unwrap();
    out.push((name, report));
}

/// One report per primitive on shapes and values drawn from `seed`.
pub fn primitive_reports(seed: u64) -> Reports {
    let mut reports = Vec::new();
    let out = &mut reports;
    let dim = |k: u64, lo: usize, hi: usize| lo + (uniform01(seed, 1000 + k) * (hi - lo) as f64) as usize;
    let (m, k, n) = (dim(0, 1, 5), dim(1, 1, 5), dim(2, 1, 5));
    let a = random(m, k, seed);
    let b = random(k, n, seed + 1);
    let bt = random(n, k, seed + 2);
    let same = random(m, k, seed + 3);
    let row = random(1, k, seed + 4);
    let col = random(m, 1, seed + 5);
    let s = seed;

    check(out, "matmul", |t, x| contract(t, t.matmul(x[0], x[1])?, s), &[a.clone(), b.clone()], 1e-5);
    check(out, "matmul_t", |t, x| contract(t, t.matmul_t(x[0], x[1])?, s), &[a.clone(), bt], 1e-5);
    check(out, "transpose", |t, x| contract(t, t.transpose(x[0]), s), &[a.clone()], 1e-5);
    check(out, "add", |t, x| contract(t, t.add(x[0], x[1])?, s), &[a.clone(), same.clone()], 1e-5);
    check(out, "sub", |t, x| contract(t, t.sub(x[0], x[1])?, s), &[a.clone(), same.clone()], 1e-5);
    check(out, "mul", |t, x| contract(t, t.mul(x[0], x[1])?, s), &[a.clone(), same.clone()], 1e-5);
    check(out, "add_row", |t, x| contract(t, t.add_row(x[0], x[1])?, s), &[a.clone(), row.clone()], 1e-5);
    check(out, "mul_row", |t, x| contract(t, t.mul_row(x[0], x[1])?, s), &[a.clone(), row.clone()], 1e-5);
    check(out, "mul_col", |t, x| contract(t, t.mul_col(x[0], x[1])?, s), &[a.clone(), col], 1e-5);
    check(out, "scale", |t, x| contract(t, t.scale(x[0], 1.7), s), &[a.clone()], 1e-5);
    check(out, "add_scalar", |t, x| contract(t, t.add_scalar(x[0], 0.3), s), &[a.clone()], 1e-5);
    check(out, 
        "concat",
        |t, x| {
            let c0 = t.concat(&[x[0], x[1]], 0)?;
            let c1 = t.concat(&[x[0], x[1]], 1)?;
            let a = contract(t, c0, s)?;
            let b = contract(t, c1, s + 9)?;
            t.add(a, b)
        },
        &[a.clone(), same.clone()],
        1e-5,
    );
    check(out, 
        "split",
        |t, x| {
            let (_, c) = t.shape(x[0]);
            let parts = t.split(x[0], &[c / 2, c - c / 2])?;
            let p = t.concat(&[parts[1], parts[0]], 1)?;
            contract(t, p, s)
        },
        &[a.clone()],
        1e-5,
    );
    check(out, 
        "slice_rows",
        |t, x| contract(t, t.slice_rows(x[0], 0, 1)?, s),
        &[a.clone()],
        1e-5,
    );
    check(out, 
        "embedding_lookup",
        |t, x| {
            let (r, _) = t.shape(x[0]);
            let idx: Vec<usize> = (0..5).map(|i| (i * 7 + 3) % r).collect();
            contract(t, t.embedding_lookup(x[0], &idx)?, s)
        },
        &[a.clone()],
        1e-5,
    );
    check(out, 
        "weighted_rows",
        |t, x| {
            let (r, _) = t.shape(x[0]);
            let rows = vec![vec![(0, 0.5), (r - 1, 0.5)], vec![(r / 2, 1.0)]];
            contract(t, t.weighted_rows(x[0], rows)?, s)
        },
        &[a.clone()],
        1e-5,
    );
    check(out, 
        "reshape",
        |t, x| {
            let (r, c) = t.shape(x[0]);
            contract(t, t.reshape(x[0], c, r)?, s)
        },
        &[a.clone()],
        1e-5,
    );
    check(out, "softmax", |t, x| contract(t, t.softmax(x[0]), s), &[a.clone()], 1e-5);
    let wide = random(m, k + 2, seed + 6);
    let gain = random(1, k + 2, seed + 7);
    let bias = random(1, k + 2, seed + 8);
    check(out, 
        "layer_norm",
        |t, x| contract(t, t.layer_norm(x[0], x[1], x[2], 1e-6)?, s),
        &[wide.clone(), gain, bias],
        1e-5,
    );
    check(out, "sigmoid", |t, x| contract(t, t.sigmoid(x[0]), s), &[a.clone()], 1e-5);
    check(out, "tanh", |t, x| contract(t, t.tanh(x[0]), s), &[a.clone()], 1e-5);
    check(out, "relu", |t, x| contract(t, t.relu(x[0]), s), &[a.clone()], 1e-5);

    let len = dim(3, 3, 8);
    let cin = dim(4, 1, 4);
    let cout = dim(5, 1, 4);
    let seq = random(len, cin, seed + 10);
    let w = random(cout, 3 * cin, seed + 11);
    let cb = random(1, cout, seed + 12);
    check(out, 
        "conv1d",
        |t, x| contract(t, t.conv1d(x[0], x[1], x[2], 3)?, s),
        &[seq.clone(), w, cb],
        1e-5,
    );
    check(out, 
        "max_pool1d",
        |t, x| contract(t, t.max_pool1d(x[0], 2, 1)?, s),
        &[seq.clone()],
        1e-5,
    );
    let targets: Vec<usize> = (0..m).map(|i| (i * 3 + seed as usize) % k).collect();
    check(out, 
        "cross_entropy",
        |t, x| t.cross_entropy(x[0], &targets),
        &[a.clone()],
        1e-5,
    );
    check(out, "mean", |t, x| Ok(t.mean(t.mul(x[0], x[0])?)), &[a.clone()], 1e-5);
    check(out, "sum_rows", |t, x| contract(t, t.sum_rows(x[0]), s), &[a.clone()], 1e-5);
    check(out, 
        "pick",
        |t, x| contract(t, t.pick(x[0], &targets)?, s),
        &[a.clone()],
        1e-5,
    );
    let pos = a.mapv(|v| v.abs() + 0.5);
    check(out, "ln", |t, x| contract(t, t.ln_clamp(x[0], 1e-12), s), &[pos], 1e-5);
    check(out, 
        "dropout",
        |t, x| contract(t, t.dropout(x[0], 0.3, 5)?, s),
        &[a.clone()],
        1e-5,
    );
    reports
}
