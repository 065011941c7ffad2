#[allow(dead_code)]
mod mlp_gradcheck {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mlp_gradcheck.rs"));
}

#[test]
fn mlp_gradcheck_runs() {
    mlp_gradcheck::run_example().expect("mlp_gradcheck runs");
}
