//! Shared test oracles: central finite differences against the autodiff
//! engine, and seeded random input generators.

use orc::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Central finite differences of `f` at `x` with step `eps`.
pub fn numerical_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let plus = f(&probe);
        probe[i] = x[i] - eps;
        let minus = f(&probe);
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Buffers the loss is differentiated against (`diff`) and constants it also
/// consumes (`fixed`, e.g. labels and teacher logits).
pub struct GradCase<'a> {
    pub diff: Vec<(&'a [f64], Vec<usize>)>,
    pub fixed: Vec<(&'a [f64], Vec<usize>)>,
}

/// Asserts that the analytic gradient of `build`'s scalar output w.r.t.
/// every `diff` input matches central finite differences within `tol`
/// relative error (absolute for gradients below 1).
pub fn assert_grad_matches(
    case: &GradCase,
    build: impl Fn(&[Tensor], &[Tensor]) -> Tensor,
    eps: f64,
    tol: f64,
    context: &str,
) {
    let params: Vec<Tensor> = case
        .diff
        .iter()
        .map(|(d, s)| Tensor::param(d.to_vec(), s).unwrap())
        .collect();
    let consts: Vec<Tensor> = case
        .fixed
        .iter()
        .map(|(d, s)| Tensor::from_vec(d.to_vec(), s).unwrap())
        .collect();
    let loss = build(&params, &consts);
    assert_eq!(loss.numel(), 1, "{context}: loss must be scalar");
    loss.backward().unwrap();

    for (i, (data, shape)) in case.diff.iter().enumerate() {
        let analytic = params[i]
            .grad()
            .unwrap_or_else(|| panic!("{context}: no analytic gradient for input {i}"));
        let f = |probe: &[f64]| {
            let tensors: Vec<Tensor> = case
                .diff
                .iter()
                .enumerate()
                .map(|(j, (d, s))| {
                    let buf = if j == i { probe.to_vec() } else { d.to_vec() };
                    Tensor::from_vec(buf, s).unwrap()
                })
                .collect();
            let consts: Vec<Tensor> = case
                .fixed
                .iter()
                .map(|(d, s)| Tensor::from_vec(d.to_vec(), s).unwrap())
                .collect();
            build(&tensors, &consts).item().unwrap()
        };
        let numeric = numerical_grad(f, data, eps);
        for (j, (av, nv)) in analytic.iter().zip(&numeric).enumerate() {
            let scale = nv.abs().max(1.0);
            assert!(
                (av - nv).abs() / scale <= tol,
                "{context}: input {i} entry {j} (shape {shape:?}): analytic {av} vs numeric {nv}"
            );
        }
    }
}

pub fn rand_vec(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values bounded away from zero (for relu kinks and divisors).
pub fn rand_vec_away_from_zero(rng: &mut ChaCha8Rng, len: usize, margin: f64, hi: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            sign * rng.gen_range(margin..hi)
        })
        .collect()
}

/// Values with pairwise gaps above `gap` (keeps argmax stable under FD).
pub fn rand_vec_separated(rng: &mut ChaCha8Rng, len: usize, gap: f64) -> Vec<f64> {
    loop {
        let v = rand_vec(rng, len, -3.0, 3.0);
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).all(|w| w[1] - w[0] > gap) {
            return v;
        }
    }
}

/// Random one-hot rows `[rows, classes]`.
pub fn rand_one_hot(rng: &mut ChaCha8Rng, rows: usize, classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * classes];
    for r in 0..rows {
        out[r * classes + rng.gen_range(0..classes)] = 1.0;
    }
    out
}
