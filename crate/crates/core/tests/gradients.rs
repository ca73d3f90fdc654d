#[path = "support/gradcheck.rs"]
mod gradcheck;

use gradcheck::{model_check, op_checks, tiny_config, tiny_example, TOLERANCE};
use protolens::model::ModelParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_op_matches_finite_differences() {
    for seed in 0..5 {
        for (op, err) in op_checks(seed) {
            assert!(err < TOLERANCE, "{op} (seed {seed}): relative error {err:e}");
        }
    }
}

#[test]
fn one_step_model_graph_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for seed in 0..3 {
        let params = ModelParams::<f64>::init(tiny_config(seed), 9).unwrap();
        let ex = tiny_example(&mut rng, 9);
        let err = model_check(&params, &ex);
        assert!(err < TOLERANCE, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn multi_step_model_graph_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = ModelParams::<f64>::init(tiny_config(3), 8).unwrap();
    let mut ex = tiny_example(&mut rng, 8);
    ex.target_ids = vec![6, 7, 2];
    let err = model_check(&params, &ex);
    assert!(err < TOLERANCE, "relative error {err:e}");
}
