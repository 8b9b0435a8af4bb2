//! Offline check that the MLP kernel can approximate the triple-root
//! square polynomial whose maxima sit at ranks 1, 2, and k+1 — the shape
//! a scorer needs to prefer exactly those ranks.

use tgsample_core::nn::{LinearInit, Mlp};
use tgsample_core::optim::{AdamConfig, ParamStore};
use tgsample_core::seeds::{stream, Purpose};
use tgsample_core::tape::Graph;
use tgsample_core::tensor::Tensor;

#[test]
fn mlp_fits_triple_root_polynomial_over_ranks() {
    let k = 5usize;
    let poly = |x: f64| -((x - 1.0).powi(2) * (x - 2.0).powi(2) * (x - (k as f64 + 1.0)).powi(2));

    let xs: Vec<f64> = (1..=32).map(|r| r as f64).collect();
    let raw: Vec<f64> = xs.iter().map(|&x| poly(x)).collect();
    let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    // Normalized inputs/targets; the error bound is relative to the range
    // either way.
    let inputs: Vec<f64> = xs.iter().map(|&x| x / 32.0).collect();
    let targets: Vec<f64> = raw.iter().map(|&y| (y - lo) / range).collect();

    let mut store: ParamStore<f64> = ParamStore::new();
    let mut rng = stream(3, Purpose::Init, 0, 0);
    let mlp = Mlp::register(
        &mut store,
        "fit",
        &[1, 48, 48, 1],
        &mut rng,
        LinearInit::InvSqrt,
    );

    let x_t = Tensor::from_vec(32, 1, inputs);
    let adam = AdamConfig::with_lr(5e-3);
    for _ in 0..4000 {
        let mut g = Graph::new();
        let x = g.constant(x_t.clone());
        let pred = mlp.forward(&mut g, &store, x);
        let y = g.constant(Tensor::from_vec(32, 1, targets.clone()));
        let diff = g.sub(pred, y);
        let sq = g.mul(diff, diff);
        let loss = g.mean_all(sq);
        let grads = g.backward(loss);
        store.accumulate(&grads);
        store.adam_step(&adam).unwrap();
    }

    let mut g = Graph::new();
    let x = g.constant(x_t);
    let pred = mlp.forward(&mut g, &store, x);
    let worst = g
        .value(pred)
        .data()
        .iter()
        .zip(targets.iter())
        .map(|(p, t)| (p - t).abs())
        .fold(0.0f64, f64::max);
    // Max approximation error below 0.1 of the polynomial's range. (The
    // three maxima differ from their neighbors by ~1e-7 of the range, so
    // argmax recovery is beyond this tolerance by construction.)
    assert!(worst < 0.1, "max normalized error {worst}");
}
