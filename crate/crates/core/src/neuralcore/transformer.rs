use rand::Rng;

use super::attention::{attention_backward, attention_forward, AttentionCache, AttentionWeights, BlockLayout};
use super::ops::{
    apply_mask, dropout_mask, layer_norm_backward, layer_norm_forward, linear, linear_backward, relu,
    relu_backward, LayerNormCache, LAYER_NORM_EPS,
};
use super::params::{glorot, Gradients, ParameterSet};
use super::{NnError, Tensor};

/// Feed-forward inner width as a multiple of the model width.
pub const FFL_EXPANSION: usize = 4;

const ATTN: [&str; 8] = ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"];

/// Borrowed weights of one post-norm transformer encoder layer.
pub struct TransformerWeights<'a> {
    pub attn: AttentionWeights<'a>,
    pub ln1_gamma: &'a Tensor,
    pub ln1_beta: &'a Tensor,
    pub w1: &'a Tensor,
    pub b1: &'a Tensor,
    pub w2: &'a Tensor,
    pub b2: &'a Tensor,
    pub ln2_gamma: &'a Tensor,
    pub ln2_beta: &'a Tensor,
}

impl<'a> TransformerWeights<'a> {
    pub fn from_params(params: &'a ParameterSet, prefix: &str) -> Result<Self, NnError> {
        let get = |suffix: &str| params.get(&format!("{prefix}.{suffix}"));
        Ok(Self {
            attn: AttentionWeights {
                wq: get("attn.wq")?,
                bq: get("attn.bq")?,
                wk: get("attn.wk")?,
                bk: get("attn.bk")?,
                wv: get("attn.wv")?,
                bv: get("attn.bv")?,
                wo: get("attn.wo")?,
                bo: get("attn.bo")?,
            },
            ln1_gamma: get("ln1.gamma")?,
            ln1_beta: get("ln1.beta")?,
            w1: get("ffl.w1")?,
            b1: get("ffl.b1")?,
            w2: get("ffl.w2")?,
            b2: get("ffl.b2")?,
            ln2_gamma: get("ln2.gamma")?,
            ln2_beta: get("ln2.beta")?,
        })
    }
}

/// Registers a freshly initialised layer of width `d` under `prefix`.
pub fn init_transformer_layer(params: &mut ParameterSet, prefix: &str, d: usize, rng: &mut impl Rng) {
    for name in ATTN {
        let t = if name.starts_with('w') {
            glorot(d, d, rng)
        } else {
            Tensor::zeros(&[d])
        };
        params.insert(format!("{prefix}.attn.{name}"), t);
    }
    let inner = FFL_EXPANSION * d;
    params.insert(format!("{prefix}.ffl.w1"), glorot(d, inner, rng));
    params.insert(format!("{prefix}.ffl.b1"), Tensor::zeros(&[inner]));
    params.insert(format!("{prefix}.ffl.w2"), glorot(inner, d, rng));
    params.insert(format!("{prefix}.ffl.b2"), Tensor::zeros(&[d]));
    for ln in ["ln1", "ln2"] {
        params.insert(format!("{prefix}.{ln}.gamma"), Tensor::vector(vec![1.0; d]));
        params.insert(format!("{prefix}.{ln}.beta"), Tensor::zeros(&[d]));
    }
}

/// Inference pass: `Ĥ = LN(X + MHA(X))`, `out = LN(Ĥ + FFL(Ĥ))`.
pub fn transformer_layer(x: &Tensor, weights: &TransformerWeights<'_>, n_heads: usize) -> Result<Tensor, NnError> {
    let layout = BlockLayout::square(x.rows());
    Ok(transformer_forward(x, weights, n_heads, layout, None)?.0)
}

/// Dropout applied to both sublayer outputs before the residual sum.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SublayerDropout {
    pub rate: f64,
    pub seed: u64,
}

pub(crate) struct TransformerCache {
    pub attn: AttentionCache,
    attn_mask: Option<Vec<f64>>,
    ln1: LayerNormCache,
    h: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    ffl_mask: Option<Vec<f64>>,
    ln2: LayerNormCache,
}

pub(crate) fn transformer_forward(
    x: &Tensor,
    w: &TransformerWeights<'_>,
    n_heads: usize,
    layout: BlockLayout,
    dropout: Option<SublayerDropout>,
) -> Result<(Tensor, TransformerCache), NnError> {
    let (a, attn) = attention_forward(x, x, x, &w.attn, n_heads, None, layout)?;
    let attn_mask = dropout.map(|d| dropout_mask(a.len(), d.rate, d.seed));
    let a = match &attn_mask {
        Some(m) => apply_mask(&a, m),
        None => a,
    };
    let (h, ln1) = layer_norm_forward(&x.add(&a)?, w.ln1_gamma, w.ln1_beta, LAYER_NORM_EPS)?;
    let hidden_pre = linear(&h, w.w1, w.b1)?;
    let hidden = relu(&hidden_pre);
    let f = linear(&hidden, w.w2, w.b2)?;
    let ffl_mask = dropout.map(|d| dropout_mask(f.len(), d.rate, d.seed ^ 0x9e37_79b9_7f4a_7c15));
    let f = match &ffl_mask {
        Some(m) => apply_mask(&f, m),
        None => f,
    };
    let (out, ln2) = layer_norm_forward(&h.add(&f)?, w.ln2_gamma, w.ln2_beta, LAYER_NORM_EPS)?;
    Ok((
        out,
        TransformerCache {
            attn,
            attn_mask,
            ln1,
            h,
            hidden_pre,
            hidden,
            ffl_mask,
            ln2,
        },
    ))
}

/// Backpropagates `dy` through one layer, accumulating parameter gradients
/// under `prefix`, and returns the gradient w.r.t. the layer input.
pub(crate) fn transformer_backward(
    cache: &TransformerCache,
    w: &TransformerWeights<'_>,
    prefix: &str,
    dy: &Tensor,
    grads: &mut Gradients,
) -> Result<Tensor, NnError> {
    let acc = |grads: &mut Gradients, name: &str, g: &Tensor| grads.accumulate(&format!("{prefix}.{name}"), g);

    let ln2 = layer_norm_backward(&cache.ln2, w.ln2_gamma, dy);
    acc(grads, "ln2.gamma", &ln2.dgamma);
    acc(grads, "ln2.beta", &ln2.dbeta);
    // residual: d(h + f) splits into both branches
    let mut df = ln2.dx.clone();
    if let Some(m) = &cache.ffl_mask {
        df = apply_mask(&df, m);
    }
    let g2 = linear_backward(&cache.hidden, w.w2, &df)?;
    acc(grads, "ffl.w2", &g2.dw);
    acc(grads, "ffl.b2", &g2.db);
    let dpre = relu_backward(&cache.hidden_pre, &g2.dx);
    let g1 = linear_backward(&cache.h, w.w1, &dpre)?;
    acc(grads, "ffl.w1", &g1.dw);
    acc(grads, "ffl.b1", &g1.db);
    let mut dh = ln2.dx;
    dh.add_assign(&g1.dx)?;

    let ln1 = layer_norm_backward(&cache.ln1, w.ln1_gamma, &dh);
    acc(grads, "ln1.gamma", &ln1.dgamma);
    acc(grads, "ln1.beta", &ln1.dbeta);
    let mut da = ln1.dx.clone();
    if let Some(m) = &cache.attn_mask {
        da = apply_mask(&da, m);
    }
    let ga = attention_backward(&cache.attn, &w.attn, &da)?;
    for (name, g) in ATTN.iter().zip([
        &ga.dwq, &ga.dbq, &ga.dwk, &ga.dbk, &ga.dwv, &ga.dbv, &ga.dwo, &ga.dbo,
    ]) {
        acc(grads, &format!("attn.{name}"), g);
    }
    let mut dx = ln1.dx;
    dx.add_assign(&ga.dxq)?;
    dx.add_assign(&ga.dxk)?;
    dx.add_assign(&ga.dxv)?;
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralcore::gradcheck::{grad_check_by_tensor, GradCheckConfig};
    use crate::neuralcore::ops::layer_norm;
    use crate::neuralcore::params::normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(d: usize, seed: u64) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterSet::new();
        init_transformer_layer(&mut p, "t", d, &mut rng);
        // nonzero biases and affine terms so their gradients are exercised
        for name in p.names().map(str::to_string).collect::<Vec<_>>() {
            if name.contains(".b") || name.ends_with("gamma") || name.ends_with("beta") {
                let shape = p.get(&name).unwrap().shape().to_vec();
                let noise = normal(&shape, 0.1, &mut rng);
                p.get_mut(&name).unwrap().add_assign(&noise).unwrap();
            }
        }
        p
    }

    #[test]
    fn output_shape_matches_input() {
        let p = layer(8, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = normal(&[5, 8], 1.0, &mut rng);
        let w = TransformerWeights::from_params(&p, "t").unwrap();
        assert_eq!(transformer_layer(&x, &w, 2).unwrap().shape(), &[5, 8]);
    }

    #[test]
    fn zero_sublayers_reduce_to_double_layer_norm() {
        let mut p = layer(8, 3);
        for name in p.names().map(str::to_string).collect::<Vec<_>>() {
            let t = p.get_mut(&name).unwrap();
            let fill = if name.ends_with("gamma") { 1.0 } else { 0.0 };
            t.data_mut().iter_mut().for_each(|v| *v = fill);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = normal(&[3, 8], 1.0, &mut rng);
        let w = TransformerWeights::from_params(&p, "t").unwrap();
        let y = transformer_layer(&x, &w, 2).unwrap();
        let ones = Tensor::vector(vec![1.0; 8]);
        let zeros = Tensor::zeros(&[8]);
        let once = layer_norm(&x, &ones, &zeros, LAYER_NORM_EPS).unwrap();
        let twice = layer_norm(&once, &ones, &zeros, LAYER_NORM_EPS).unwrap();
        assert!(y.max_abs_diff(&twice) < 1e-12);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let d = 8;
        let params = layer(d, 5);
        let w = TransformerWeights::from_params(&params, "t").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for dropout in [None, Some(SublayerDropout { rate: 0.2, seed: 77 })] {
            // finite differences are meaningless across a relu kink, so redraw
            // inputs until every pre-activation is well clear of zero
            let x = loop {
                let x = normal(&[4, d], 1.0, &mut rng);
                let (_, cache) = transformer_forward(&x, &w, 2, BlockLayout::square(4), dropout).unwrap();
                if cache.hidden_pre.data().iter().all(|v| v.abs() > 1e-2) {
                    break x;
                }
            };
            let probe = normal(&[4, d], 1.0, &mut rng);
            let loss = |p: &ParameterSet| {
                let w = TransformerWeights::from_params(p, "t").unwrap();
                let (y, cache) = transformer_forward(&x, &w, 2, BlockLayout::square(4), dropout).unwrap();
                let l: f64 = y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum();
                let mut g = Gradients::new();
                transformer_backward(&cache, &w, "t", &probe, &mut g).unwrap();
                (l, g)
            };
            // the key projection gradient is small enough that h=1e-3 truncation
            // error alone sits near the tolerance
            let config = GradCheckConfig { step: 1e-4, ..GradCheckConfig::default() };
            let report = grad_check_by_tensor(loss, &params, &config);
            for (name, err) in report {
                assert!(err <= 1e-4, "{name}: relative error {err} (dropout {dropout:?})");
            }
        }
    }
}
