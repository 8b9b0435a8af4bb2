//! Layers over the tape: linear, MLP, Time2Vec, and the token/channel
//! mixer, plus parameter initialization and the standalone loss helpers.

use crate::optim::ParamStore;
use crate::scalar::Real;
use crate::tape::{Graph, Var};
use crate::tensor::{Tensor, TensorError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("time2vec needs dimension >= 2, got {0}")]
    TimeDimTooSmall(usize),
    #[error("labels must be binary 0/1")]
    NonBinaryLabel,
}

/// Linear-layer weight initialization.
///
/// The default draws from U(-1/sqrt(d_in), +1/sqrt(d_in)). `SqrtLiteral`
/// draws from U(-sqrt(d_in), +sqrt(d_in)) instead, which diverges for
/// d_in > 1 and exists only so both readings of the init rule can be run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LinearInit {
    #[default]
    InvSqrt,
    SqrtLiteral,
}

pub fn init_linear_weight<T: Real>(
    d_in: usize,
    d_out: usize,
    rng: &mut ChaCha8Rng,
    init: LinearInit,
) -> Tensor<T> {
    let bound = match init {
        LinearInit::InvSqrt => 1.0 / (d_in.max(1) as f64).sqrt(),
        LinearInit::SqrtLiteral => (d_in.max(1) as f64).sqrt(),
    };
    let data = (0..d_in * d_out)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::from_vec(d_in, d_out, data)
}

/// Standard-normal init (Box-Muller), used for the learnable node table.
pub fn init_normal<T: Real>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let data = (0..rows * cols)
        .map(|_| {
            let u1: f64 = 1.0 - rng.random::<f64>();
            let u2: f64 = rng.random::<f64>();
            T::from_f64((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
        })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

/// Dense layer`x W + b` with parameters registered in a store.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut ChaCha8Rng,
        init: LinearInit,
    ) -> Self {
        let w = format!("{name}.w");
        let b = format!("{name}.b");
        store
            .register(&w, init_linear_weight(d_in, d_out, rng, init))
            .unwrap();
        store.register(&b, Tensor::zeros(1, d_out)).unwrap();
        Linear { w, b, d_in, d_out }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let w = g.param_leaf(&self.w, store.value(&self.w));
        let b = g.param_leaf(&self.b, store.value(&self.b));
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}

/// Feedforward stack of linears with ReLU between layers (none after the
/// last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        dims: &[usize],
        rng: &mut ChaCha8Rng,
        init: LinearInit,
    ) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least input and output dims");
        let layers = (0..dims.len() - 1)
            .map(|i| {
                Linear::register(
                    store,
                    &format!("{name}.{i}"),
                    dims[i],
                    dims[i + 1],
                    rng,
                    init,
                )
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h);
            if i != last {
                h = g.relu(h);
            }
        }
        h
    }
}

/// Time2Vec encoder: one linear channel plus `dim - 1` sine channels.
#[derive(Clone, Debug)]
pub struct Time2VecLayer {
    pub omega: String,
    pub bias: String,
    pub dim: usize,
}

impl Time2VecLayer {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NnError> {
        if dim < 2 {
            return Err(NnError::TimeDimTooSmall(dim));
        }
        let omega = format!("{name}.omega");
        let bias = format!("{name}.bias");
        store
            .register(&omega, init_linear_weight(1, dim, rng, LinearInit::InvSqrt))
            .unwrap();
        store.register(&bias, Tensor::zeros(1, dim)).unwrap();
        Ok(Time2VecLayer { omega, bias, dim })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, times: &[T]) -> Var {
        let omega = g.param_leaf(&self.omega, store.value(&self.omega));
        let bias = g.param_leaf(&self.bias, store.value(&self.bias));
        g.time2vec(omega, bias, times)
    }
}

/// Token-mixing + channel-mixing block with residual connections, followed
/// by a mean-pool over tokens.
///
/// Takes `m` token tensors of shape [n, d] (n is a batch of independent
/// items) and returns [n, d]. Token mixing runs across the m positions per
/// (item, channel); channel mixing is a per-token MLP across d.
#[derive(Clone, Debug)]
pub struct Mixer {
    pub m: usize,
    pub d: usize,
    token_in: Linear,
    token_out: Linear,
    channel_in: Linear,
    channel_out: Linear,
}

impl Mixer {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        m: usize,
        d: usize,
        rng: &mut ChaCha8Rng,
        init: LinearInit,
    ) -> Self {
        assert!(m >= 1 && d >= 1);
        Mixer {
            m,
            d,
            token_in: Linear::register(store, &format!("{name}.tok_in"), m, m, rng, init),
            token_out: Linear::register(store, &format!("{name}.tok_out"), m, m, rng, init),
            channel_in: Linear::register(store, &format!("{name}.ch_in"), d, d, rng, init),
            channel_out: Linear::register(store, &format!("{name}.ch_out"), d, d, rng, init),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, tokens: &[Var]) -> Var {
        assert_eq!(
            tokens.len(),
            self.m,
            "mixer got {} tokens, expected {}",
            tokens.len(),
            self.m
        );
        let (n, d) = g.value(tokens[0]).shape();
        assert_eq!(d, self.d, "mixer channel width mismatch");

        // Token mixing: tokens become columns of a [n*d, m] matrix.
        let stacked = g.stack_cols(tokens);
        let h = self.token_in.forward(g, store, stacked);
        let h = g.relu(h);
        let mixed = self.token_out.forward(g, store, h);

        let mut pooled: Option<Var> = None;
        for (q, &tok) in tokens.iter().enumerate() {
            let delta = g.take_token_column(mixed, q, n, d);
            let tok = g.add(tok, delta);
            // Channel mixing with residual.
            let h = self.channel_in.forward(g, store, tok);
            let h = g.relu(h);
            let dlt = self.channel_out.forward(g, store, h);
            let tok = g.add(tok, dlt);
            pooled = Some(match pooled {
                None => tok,
                Some(acc) => g.add(acc, tok),
            });
        }
        let sum = pooled.expect("mixer over zero tokens");
        g.scale(sum, T::one() / T::from_usize(self.m))
    }
}

/// Plain (non-tape) affine map with the contract checks the tape asserts.
pub fn linear_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>, NnError> {
    if x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols() {
        return Err(TensorError::ShapeMismatch {
            expected: vec![x.cols(), w.cols()],
            got: vec![w.rows(), b.cols()],
        }
        .into());
    }
    let mut out = x.matmul(w);
    for r in 0..out.rows() {
        out.add_assign_row(r, b.row_slice(0));
    }
    if !out.all_finite() {
        return Err(TensorError::NonFinite {
            op: "linear_forward",
        }
        .into());
    }
    Ok(out)
}

/// Summed binary cross-entropy with the standard 1e-7 probability clamp.
pub fn bce_loss<T: Real>(p: &[T], y: &[T]) -> Result<T, NnError> {
    assert_eq!(p.len(), y.len());
    let eps = T::from_f64(1e-7);
    let mut loss = T::zero();
    for (&pi, &yi) in p.iter().zip(y.iter()) {
        if yi != T::zero() && yi != T::one() {
            return Err(NnError::NonBinaryLabel);
        }
        let pc = pi.max(eps).min(T::one() - eps);
        loss -= yi * pc.ln() + (T::one() - yi) * (T::one() - pc).ln();
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{grad_check, ParamStore};
    use crate::seeds::{stream, Purpose};

    fn rng(n: u64) -> ChaCha8Rng {
        stream(n, Purpose::Init, 0, 0)
    }

    #[test]
    fn linear_identity_passes_input_through() {
        let x = Tensor::from_vec(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]);
        let eye = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::zeros(1, 2);
        assert_eq!(linear_forward(&x, &eye, &b).unwrap(), x);
    }

    #[test]
    fn linear_hand_arithmetic() {
        let x = Tensor::from_vec(1, 2, vec![1.0f64, 2.0]);
        let w = Tensor::from_vec(2, 1, vec![1.0, 1.0]);
        let b = Tensor::row(vec![0.5]);
        assert_eq!(linear_forward(&x, &w, &b).unwrap().item(), 3.5);
    }

    #[test]
    fn linear_shape_mismatch_errors() {
        let x = Tensor::from_vec(1, 3, vec![1.0f64, 2.0, 3.0]);
        let w = Tensor::from_vec(2, 1, vec![1.0, 1.0]);
        let b = Tensor::row(vec![0.0]);
        assert!(linear_forward(&x, &w, &b).is_err());
    }

    #[test]
    fn bias_gradient_is_row_count() {
        // d sum(xW + b) / d b = n per component.
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng(3);
        let lin = Linear::register(&mut store, "l", 2, 3, &mut r, LinearInit::InvSqrt);
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(4, 2, vec![1.0; 8]));
        let y = lin.forward(&mut g, &store, x);
        let loss = g.sum_all(y);
        let grads = g.backward(loss);
        let gb = grads
            .dense
            .iter()
            .find(|(n, _)| n == "l.b")
            .map(|(_, g)| g)
            .unwrap();
        assert!(gb.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn mlp_zero_final_layer_outputs_zero() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng(4);
        let mlp = Mlp::register(&mut store, "m", &[3, 8, 1], &mut r, LinearInit::InvSqrt);
        store.set_value("m.1.w", Tensor::zeros(8, 1)).unwrap();
        store.set_value("m.1.b", Tensor::zeros(1, 1)).unwrap();
        for trial in 0..5 {
            let mut g = Graph::new();
            let x = g.constant(Tensor::row(vec![trial as f64, -1.0, 2.5]));
            let y = mlp.forward(&mut g, &store, x);
            assert_eq!(g.value(y).item(), 0.0);
        }
    }

    #[test]
    fn single_layer_mlp_is_linear_forward() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng(5);
        let mlp = Mlp::register(&mut store, "m", &[2, 2], &mut r, LinearInit::InvSqrt);
        let x = Tensor::from_vec(1, 2, vec![0.4, -0.7]);
        let direct = linear_forward(&x, store.value("m.0.w"), store.value("m.0.b")).unwrap();
        let mut g = Graph::new();
        let xv = g.constant(x);
        let y = mlp.forward(&mut g, &store, xv);
        assert_eq!(g.value(y), &direct);
    }

    #[test]
    fn time2vec_rejects_dim_below_two() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng(6);
        assert!(Time2VecLayer::register(&mut store, "t", 1, &mut r).is_err());
    }

    #[test]
    fn time2vec_omega_gradient_is_cosine() {
        // At t = 1, b = 0: d sin(w)/dw = cos(w) for the sine channels.
        let mut store: ParamStore<f64> = ParamStore::new();
        store
            .register("t.omega", Tensor::row(vec![0.3, 0.9, 1.7]))
            .unwrap();
        store.register("t.bias", Tensor::zeros(1, 3)).unwrap();
        let layer = Time2VecLayer {
            omega: "t.omega".into(),
            bias: "t.bias".into(),
            dim: 3,
        };
        let mut g = Graph::new();
        let enc = layer.forward(&mut g, &store, &[1.0]);
        let loss = g.sum_all(enc);
        let grads = g.backward(loss);
        let gw = grads
            .dense
            .iter()
            .find(|(n, _)| n == "t.omega")
            .map(|(_, g)| g)
            .unwrap();
        assert!((gw.at(0, 0) - 1.0).abs() < 1e-12); // linear channel
        assert!((gw.at(0, 1) - 0.9f64.cos()).abs() < 1e-12);
        assert!((gw.at(0, 2) - 1.7f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn mixer_identical_tokens_with_zero_token_mixing() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng(7);
        let mixer = Mixer::register(&mut store, "x", 2, 4, &mut r, LinearInit::InvSqrt);
        store.set_value("x.tok_out.w", Tensor::zeros(2, 2)).unwrap();
        store.set_value("x.tok_out.b", Tensor::zeros(1, 2)).unwrap();

        let shared = Tensor::row(vec![0.1, -0.4, 0.9, 0.2]);
        let mut g = Graph::new();
        let t0 = g.constant(shared.clone());
        let t1 = g.constant(shared.clone());
        let out = mixer.forward(&mut g, &store, &[t0, t1]);

        // With token mixing zeroed, the output is the channel-MLP of the
        // shared token (mean over two identical tokens).
        let mut g2 = Graph::new();
        let t = g2.constant(shared);
        let h = mixer.channel_in.forward(&mut g2, &store, t);
        let h = g2.relu(h);
        let d = mixer.channel_out.forward(&mut g2, &store, h);
        let want = g2.add(t, d);
        for c in 0..4 {
            assert!((g.value(out).at(0, c) - g2.value(want).at(0, c)).abs() < 1e-14);
        }
    }

    #[test]
    fn mixer_is_token_order_sensitive() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng(8);
        let mixer = Mixer::register(&mut store, "x", 2, 4, &mut r, LinearInit::InvSqrt);
        let a = Tensor::row(vec![1.0, 0.0, -1.0, 0.5]);
        let b = Tensor::row(vec![-0.2, 0.8, 0.3, -0.9]);

        let mut g = Graph::new();
        let (va, vb) = (g.constant(a.clone()), g.constant(b.clone()));
        let out = mixer.forward(&mut g, &store, &[va, vb]);
        let fwd = g.value(out).clone();
        let mut g = Graph::new();
        let (va, vb) = (g.constant(a), g.constant(b));
        let out = mixer.forward(&mut g, &store, &[vb, va]);
        let rev = g.value(out).clone();
        assert_ne!(fwd, rev);
    }

    #[test]
    fn mixer_gradients_match_finite_differences() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut r = rng(9);
        let mixer = Mixer::register(&mut store, "x", 3, 5, &mut r, LinearInit::InvSqrt);
        let toks: Vec<Tensor<f64>> = (0..3)
            .map(|i| {
                Tensor::from_vec(
                    2,
                    5,
                    (0..10)
                        .map(|j| ((i * 10 + j) as f64 * 0.37).sin())
                        .collect(),
                )
            })
            .collect();
        let err = grad_check(
            &mut store,
            |g, s| {
                let vars: Vec<Var> = toks.iter().map(|t| g.constant(t.clone())).collect();
                let out = mixer.forward(g, s, &vars);
                g.sum_all(out)
            },
            1e-5,
        );
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn bce_hand_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_loss(&[0.5f64], &[1.0]).unwrap() - ln2).abs() < 1e-12);
        assert!(bce_loss(&[1.0f64 - 1e-7], &[1.0]).unwrap() < 2e-7);
        assert!((bce_loss(&[0.5f64, 0.5], &[1.0, 0.0]).unwrap() - 2.0 * ln2).abs() < 1e-12);
        assert!(bce_loss(&[0.5f64], &[0.5]).is_err());
    }

    #[test]
    fn literal_sqrt_init_is_wider() {
        let mut r1 = rng(10);
        let mut r2 = rng(10);
        let w1: Tensor<f64> = init_linear_weight(16, 16, &mut r1, LinearInit::InvSqrt);
        let w2: Tensor<f64> = init_linear_weight(16, 16, &mut r2, LinearInit::SqrtLiteral);
        let max1 = w1.data().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        let max2 = w2.data().iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        assert!(max1 <= 0.25 && max2 > 1.0);
    }
}
