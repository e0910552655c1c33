//! Finite-difference validation of analytic gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::store::ParamStore;
use crate::tensor::tape::{Tape, TensorRef};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub passed: bool,
    pub checked: usize,
    pub max_rel_err: f64,
    /// (coordinate, analytic, numeric) of the worst offender
    pub worst: Option<(usize, f64, f64)>,
    pub tolerance: f64,
}

const MAX_COORDS: usize = 64;
const FD_STEP: f64 = 1e-5;

/// Compare analytic grads against central differences of `eval`.
/// Coordinates above MAX_COORDS are subsampled with `seed`.
pub fn compare_against_numeric<F>(
    input: &[f64],
    analytic: &[f64],
    mut eval: F,
    tolerance: f64,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let mut coords: Vec<usize> = (0..input.len()).collect();
    if coords.len() > MAX_COORDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        coords.shuffle(&mut rng);
        coords.truncate(MAX_COORDS);
    }
    let mut max_rel_err = 0.0;
    let mut worst = None;
    let mut x = input.to_vec();
    for &c in &coords {
        let orig = x[c];
        x[c] = orig + FD_STEP;
        let up = eval(&x);
        x[c] = orig - FD_STEP;
        let down = eval(&x);
        x[c] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = (analytic[c] - numeric).abs() / numeric.abs().max(1.0);
        if rel > max_rel_err {
            max_rel_err = rel;
            worst = Some((c, analytic[c], numeric));
        }
    }
    GradCheckReport {
        passed: max_rel_err <= tolerance,
        checked: coords.len(),
        max_rel_err,
        worst,
        tolerance,
    }
}

/// Check a scalar graph built from a single differentiable input tensor.
/// `build` must be a pure function of the input values.
pub fn check_gradients<F>(
    input: &[f64],
    shape: &[usize],
    build: F,
    tolerance: f64,
    seed: u64,
) -> GradCheckReport
where
    F: Fn(&mut Tape, TensorRef) -> TensorRef,
{
    let store = ParamStore::new();
    let eval = |x: &[f64]| -> f64 {
        let mut tape = Tape::new(&store);
        let t = tape.input(x.to_vec(), shape.to_vec());
        let loss = build(&mut tape, t);
        tape.value(loss)[0]
    };
    let mut tape = Tape::new(&store);
    let t = tape.input(input.to_vec(), shape.to_vec());
    let loss = build(&mut tape, t);
    let grads = tape.backward(loss).expect("backward failed in gradcheck");
    let analytic = grads.of(t).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; input.len()]);
    compare_against_numeric(input, &analytic, eval, tolerance, seed)
}

/// Check gradients w.r.t. a named parameter of a store-backed graph.
pub fn check_param_gradients<F>(
    store: &ParamStore,
    param_name: &str,
    build: F,
    tolerance: f64,
    seed: u64,
) -> GradCheckReport
where
    F: Fn(&mut Tape) -> TensorRef,
{
    let pid = store.id(param_name).expect("unknown param in gradcheck");
    let mut tape = Tape::new(store);
    let loss = build(&mut tape);
    let grads = tape.backward(loss).expect("backward failed in gradcheck");
    let analytic = grads.param_grads()[pid]
        .clone()
        .unwrap_or_else(|| vec![0.0; store.get(pid).numel()]);
    drop(tape);
    let input = store.get(pid).data.clone();
    let mut perturbed = store.clone();
    compare_against_numeric(
        &input,
        &analytic,
        |x| {
            perturbed.get_mut(pid).data.copy_from_slice(x);
            let mut tape = Tape::new(&perturbed);
            let loss = build(&mut tape);
            tape.value(loss)[0]
        },
        tolerance,
        seed,
    )
}
