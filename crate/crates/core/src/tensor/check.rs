//! Finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};

/// Worst relative gradient error over all inputs,
/// `‖g_tape − g_fd‖₂ / max(‖g_tape‖₂, ‖g_fd‖₂)`.
///
/// `f` builds the computation from the input leaves; its output is reduced to
/// a scalar by a fixed random projection so every output element contributes.
pub fn gradient_check(inputs: &[Tensor<f64>], f: impl Fn(&mut Tape<f64>, &[Var]) -> Var, step: f64) -> f64 {
    let probe = |values: &[Tensor<f64>]| -> (Tape<f64>, Vec<Var>, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let proj = Tensor::from_fn(tape.value(out).shape(), |_| rng.random_range(-1.0..1.0));
        let proj = tape.constant(proj);
        let weighted = tape.mul(out, proj);
        let loss = tape.sum(weighted);
        (tape, vars, loss)
    };
    let (tape, vars, loss) = probe(inputs);
    let grads = tape.backward(loss);
    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        let mut numeric = Tensor::zeros(inputs[k].shape());
        let mut perturbed = inputs.to_vec();
        for e in 0..inputs[k].len() {
            let orig = inputs[k].data()[e];
            perturbed[k].data_mut()[e] = orig + step;
            let (t, _, l) = probe(&perturbed);
            let up = t.value(l).data()[0];
            perturbed[k].data_mut()[e] = orig - step;
            let (t, _, l) = probe(&perturbed);
            let down = t.value(l).data()[0];
            perturbed[k].data_mut()[e] = orig;
            numeric.data_mut()[e] = (up - down) / (2.0 * step);
        }
        let mut diff = analytic.clone();
        diff.add_scaled(-1.0, &numeric);
        let scale = analytic.norm_l2().max(numeric.norm_l2());
        if scale > 1e-300 {
            worst = worst.max(diff.norm_l2() / scale);
        }
    }
    worst
}
