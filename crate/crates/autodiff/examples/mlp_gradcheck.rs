// Fits a two-layer network to XOR with plain gradient descent, then checks
// its parameter gradients against central differences.
//
// ```bash
// cargo run -p gt-autodiff --example mlp_gradcheck
// ```

use gt_autodiff::{grad_check_params, GradCheckConfig, Init, Matrix, ParamId, ParamStore, Result, Tape, Var};

struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Mlp {
    fn new(store: &mut ParamStore<f64>) -> Self {
        Self {
            w1: store.add("w1", (2, 8), Init::Xavier),
            b1: store.add("b1", (1, 8), Init::Zeros),
            w2: store.add("w2", (8, 2), Init::Xavier),
            b2: store.add("b2", (1, 2), Init::Zeros),
        }
    }

    fn loss(&self, tape: &Tape<f64>, store: &ParamStore<f64>, x: &Matrix<f64>, y: &[usize]) -> Result<Var> {
        let x = tape.constant(x.clone());
        let h = tape.matmul(x, tape.param(store, self.w1))?;
        let h = tape.tanh(tape.add_row(h, tape.param(store, self.b1))?);
        let logits = tape.matmul(h, tape.param(store, self.w2))?;
        let logits = tape.add_row(logits, tape.param(store, self.b2))?;
        tape.cross_entropy(logits, y)
    }
}

pub fn run_example() -> Result<()> {
    let x = Matrix::from_shape_vec((4, 2), vec![0., 0., 0., 1., 1., 0., 1., 1.]).unwrap();
    let y = [0, 1, 1, 0];
    let mut store = ParamStore::new(3);
    let mlp = Mlp::new(&mut store);

    for step in 0..=600 {
        let tape = Tape::new(true);
        let loss = mlp.loss(&tape, &store, &x, &y)?;
        tape.backward(loss)?;
        store.zero_grad();
        store.accumulate(&tape);
        for id in store.ids().collect::<Vec<_>>() {
            let g = store.grad(id).clone();
            store.value_mut(id).scaled_add(-0.5, &g);
        }
        if step % 150 == 0 {
            println!("step {step:>3}  loss {:.5}", tape.scalar(loss));
        }
    }

    let report = grad_check_params(|tape, store| mlp.loss(tape, store, &x, &y), &mut store, &GradCheckConfig::default())?;
    println!(
        "gradient check over {} coordinates: max rel err {:.2e}, passed {}",
        report.checked, report.max_rel_err, report.passed
    );
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
