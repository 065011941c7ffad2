//! Central finite-difference gradient checking at `f64`.

use crate::rng::mix;
use crate::{Error, Matrix, ParamStore, Result, Tape, Var};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Perturbation half-width.
    pub eps: f64,
    /// Pass threshold on the maximum relative error.
    pub tol: f64,
    /// Denominator floor, so that near-zero gradients are compared on an
    /// absolute scale.
    pub floor: f64,
    /// Coordinates checked per tensor; larger tensors are subsampled.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-5,
            floor: 1e-4,
            max_coords: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(tensor, flat index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
    pub passed: bool,
}

fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn coords(len: usize, cfg: &GradCheckConfig, salt: u64) -> Vec<usize> {
    if len <= cfg.max_coords {
        return (0..len).collect();
    }
    let mut picked: Vec<usize> = (0..cfg.max_coords as u64)
        .map(|k| (mix(cfg.seed ^ salt, k) % len as u64) as usize)
        .collect();
    picked.sort_unstable();
    picked.dedup();
    picked
}

fn finite_scalar(tape: &Tape<f64>, out: Var) -> Result<f64> {
    if let Some(op) = tape.first_non_finite() {
        return Err(Error::NonFinite { op });
    }
    if tape.shape(out) != (1, 1) {
        return Err(Error::NotScalar(vec![tape.shape(out).0, tape.shape(out).1]));
    }
    Ok(tape.scalar(out))
}

struct Tally {
    max: f64,
    worst: (usize, usize),
    checked: usize,
}

impl Tally {
    fn record(&mut self, err: f64, at: (usize, usize)) {
        self.checked += 1;
        if err > self.max || err.is_nan() {
            self.max = err;
            self.worst = at;
        }
    }

    fn report(self, tol: f64) -> GradCheckReport {
        GradCheckReport {
            passed: self.max < tol,
            max_rel_err: self.max,
            worst: self.worst,
            checked: self.checked,
        }
    }
}

/// Compares the tape gradient of scalar-valued `f` with respect to each of
/// `inputs` against central differences.
pub fn grad_check<Fun>(
    f: Fun,
    inputs: &[Matrix<f64>],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    Fun: Fn(&Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Matrix<f64>], grads: bool| -> Result<(f64, Vec<Option<Matrix<f64>>>)> {
        let tape = Tape::new(false);
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), grads)).collect();
        let out = f(&tape, &vars)?;
        let value = finite_scalar(&tape, out)?;
        if grads {
            tape.backward(out)?;
        }
        Ok((value, vars.iter().map(|v| tape.grad(*v)).collect()))
    };

    let (_, analytic) = eval(inputs, true)?;
    let mut tally = Tally {
        max: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    let mut xs = inputs.to_vec();
    for (t, input) in inputs.iter().enumerate() {
        let g = analytic[t]
            .clone()
            .unwrap_or_else(|| Matrix::zeros(input.dim()));
        for k in coords(input.len(), cfg, t as u64) {
            let orig = input.as_slice_memory_order().unwrap()[k];
            xs[t].as_slice_memory_order_mut().unwrap()[k] = orig + cfg.eps;
            let (plus, _) = eval(&xs, false)?;
            xs[t].as_slice_memory_order_mut().unwrap()[k] = orig - cfg.eps;
            let (minus, _) = eval(&xs, false)?;
            xs[t].as_slice_memory_order_mut().unwrap()[k] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = g.as_slice_memory_order().unwrap()[k];
            tally.record(rel_err(a, numeric, cfg.floor), (t, k));
        }
    }
    Ok(tally.report(cfg.tol))
}

/// Same check, against every parameter in `store` read by `f`.
pub fn grad_check_params<Fun>(
    f: Fun,
    store: &mut ParamStore<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    Fun: Fn(&Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let tape = Tape::new(false);
    let out = f(&tape, store)?;
    finite_scalar(&tape, out)?;
    tape.backward(out)?;
    let analytic = tape.param_grads();

    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let tape = Tape::new(false);
        let out = f(&tape, store)?;
        finite_scalar(&tape, out)
    };
    let mut tally = Tally {
        max: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (id, g) in analytic {
        for k in coords(g.len(), cfg, id.index() as u64) {
            let orig = store.value(id).as_slice().unwrap()[k];
            store.value_mut(id).as_slice_mut().unwrap()[k] = orig + cfg.eps;
            let plus = eval(store)?;
            store.value_mut(id).as_slice_mut().unwrap()[k] = orig - cfg.eps;
            let minus = eval(store)?;
            store.value_mut(id).as_slice_mut().unwrap()[k] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            tally.record(
                rel_err(g.as_slice().unwrap()[k], numeric, cfg.floor),
                (id.index(), k),
            );
        }
    }
    Ok(tally.report(cfg.tol))
}
