use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::interaction::{interaction_features, similarity_backward, INTERACTION_FEATURES};
use super::{MSenseConfig, MSenseError};
use crate::encoders::ChannelTriple;
use crate::fsutil::write_atomic;
use crate::neuralcore::{
    apply_mask, dropout_mask, glorot, init_transformer_layer, linear, linear_backward, normal, positional_encoding,
    softmax, softmax_backward, transformer_backward, transformer_forward, weighted_nll, BlockLayout, Gradients,
    ParameterSet, SublayerDropout, Tensor, TransformerCache, TransformerWeights,
};

/// Slot roles in the fusion sequence, in order.
pub const SLOT_NAMES: [&str; 4] = ["fuse", "xsem", "xintent", "xreact"];
pub const SNAPSHOT_VERSION: u32 = 1;

const FUSE_TOKEN: &str = "fuse.token";
const FUSE_SLOTS: &str = "fuse.slots";
const FUSE_LAYER: &str = "fuse.layer";
const HEAD_W: &str = "head.w";
const HEAD_B: &str = "head.b";

fn story_prefix(layer: usize) -> String {
    format!("story.{layer}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct MSenseModel {
    pub config: MSenseConfig,
    pub params: ParameterSet,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format_version: u32,
    config: MSenseConfig,
    params: serde_json::Value,
}

impl MSenseModel {
    /// Fresh parameters drawn from `config.seed`. Parameters of disabled
    /// stages are not created.
    pub fn new(config: MSenseConfig) -> Result<Self, MSenseError> {
        config.validate()?;
        let d = config.d;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParameterSet::new();
        if config.use_fusion {
            let scale = 1.0 / (d as f64).sqrt();
            params.insert(FUSE_TOKEN, normal(&[d], scale, &mut rng));
            params.insert(FUSE_SLOTS, normal(&[SLOT_NAMES.len(), d], scale, &mut rng));
            init_transformer_layer(&mut params, FUSE_LAYER, d, &mut rng);
        }
        if config.use_story_encoder {
            for l in 0..config.n_layers {
                init_transformer_layer(&mut params, &story_prefix(l), d, &mut rng);
            }
        }
        params.insert(HEAD_W, glorot(d + INTERACTION_FEATURES, 3, &mut rng));
        params.insert(HEAD_B, Tensor::zeros(&[3]));
        Ok(Self { config, params })
    }

    /// Slot roles present in the fusion sequence; disabled channels drop out.
    pub fn slot_roles(&self) -> Vec<usize> {
        let mut roles = vec![0, 1];
        if self.config.use_intent {
            roles.push(2);
        }
        if self.config.use_emotion {
            roles.push(3);
        }
        roles
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(Snapshot {
            format_version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            params: self.params.to_json(),
        })
        .expect("snapshot serialises")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self, MSenseError> {
        let snap: Snapshot = serde_json::from_value(value).map_err(|e| MSenseError::Format(e.to_string()))?;
        if snap.format_version != SNAPSHOT_VERSION {
            return Err(MSenseError::Format(format!(
                "unsupported model format version {}",
                snap.format_version
            )));
        }
        let params = ParameterSet::from_json(snap.params)?;
        let template = MSenseModel::new(snap.config.clone())?;
        let names: Vec<&str> = template.params.names().collect();
        if names != params.names().collect::<Vec<_>>() {
            return Err(MSenseError::Format("parameter names do not match the configuration".into()));
        }
        for (name, t) in template.params.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(MSenseError::Format(format!("parameter `{name}` has the wrong shape")));
            }
        }
        Ok(Self {
            config: snap.config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), MSenseError> {
        let bytes = serde_json::to_vec(&self.to_json()).map_err(|e| MSenseError::Format(e.to_string()))?;
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MSenseError> {
        let bytes = std::fs::read(path)?;
        let value = serde_json::from_slice(&bytes).map_err(|e| MSenseError::Format(e.to_string()))?;
        Self::from_json(value)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Inference,
    /// Dropout masks are derived from `seed`.
    Training { seed: u64 },
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn site_seed(seed: u64, site: u64) -> u64 {
    splitmix(seed ^ splitmix(site))
}

const SITE_FUSION: u64 = 1;
const SITE_FUSED: u64 = 2;
const SITE_STORY: u64 = 16;

/// Everything the backward pass needs from one narrative's forward pass.
pub(crate) struct ForwardCache {
    pub(crate) len: usize,
    pub(crate) k1: usize,
    pub(crate) fusion: Option<TransformerCache>,
    fused_mask: Option<Vec<f64>>,
    story: Vec<TransformerCache>,
    c: Tensor,
    e: Tensor,
    pub(crate) probs: Tensor,
}

fn check_channels(model: &MSenseModel, ch: &ChannelTriple) -> Result<(), MSenseError> {
    if ch.width() != model.config.d {
        return Err(MSenseError::Shape(format!(
            "channels have width {}, model expects {}",
            ch.width(),
            model.config.d
        )));
    }
    if ch.is_empty() {
        return Err(MSenseError::Shape("narrative has no sentences".into()));
    }
    Ok(())
}

fn slot_matrix(model: &MSenseModel, rows: &[&[f64]; 3], len: usize) -> Result<Tensor, MSenseError> {
    let d = model.config.d;
    let roles = model.slot_roles();
    let k1 = roles.len();
    let token = model.params.get(FUSE_TOKEN)?;
    let slots = model.params.get(FUSE_SLOTS)?;
    let mut x = Tensor::zeros(&[len * k1, d]);
    for i in 0..len {
        for (j, &role) in roles.iter().enumerate() {
            let src = match role {
                0 => token.data(),
                r => &rows[r - 1][i * d..(i + 1) * d],
            };
            for ((o, s), t) in x.row_mut(i * k1 + j).iter_mut().zip(src).zip(slots.row(role)) {
                *o = s + t;
            }
        }
    }
    Ok(x)
}

pub(crate) fn forward_cached(model: &MSenseModel, ch: &ChannelTriple, mode: Mode) -> Result<ForwardCache, MSenseError> {
    check_channels(model, ch)?;
    let cfg = &model.config;
    let (len, d) = (ch.len(), cfg.d);
    let dropout = |site: u64| match mode {
        Mode::Training { seed } if cfg.dropout > 0.0 => Some(SublayerDropout {
            rate: cfg.dropout,
            seed: site_seed(seed, site),
        }),
        _ => None,
    };

    let k1 = model.slot_roles().len();
    let (h, fusion, fused_mask) = if cfg.use_fusion {
        let rows = [ch.sem.rows.data(), ch.intent.rows.data(), ch.react.rows.data()];
        let x = slot_matrix(model, &rows, len)?;
        let w = TransformerWeights::from_params(&model.params, FUSE_LAYER)?;
        let (out, cache) = transformer_forward(&x, &w, cfg.n_heads, BlockLayout::square(k1), dropout(SITE_FUSION))?;
        let mut h = Tensor::zeros(&[len, d]);
        for i in 0..len {
            h.row_mut(i).copy_from_slice(out.row(i * k1));
        }
        let mask = dropout(SITE_FUSED).map(|s| dropout_mask(h.len(), s.rate, s.seed));
        let h = match &mask {
            Some(m) => apply_mask(&h, m),
            None => h,
        };
        (h, Some(cache), mask)
    } else {
        (ch.sem.rows.clone(), None, None)
    };

    let mut story = Vec::new();
    let c = if cfg.use_story_encoder {
        let mut c = h.add(&positional_encoding(len, d)?)?;
        for l in 0..cfg.n_layers {
            let w = TransformerWeights::from_params(&model.params, &story_prefix(l))?;
            let (out, cache) = transformer_forward(&c, &w, cfg.n_heads, BlockLayout::square(len), dropout(SITE_STORY + l as u64))?;
            story.push(cache);
            c = out;
        }
        c
    } else {
        h
    };

    let e = interaction_features(&c, cfg.window, cfg.use_interaction);
    let logits = linear(&e, model.params.get(HEAD_W)?, model.params.get(HEAD_B)?)?;
    let probs = softmax(&logits);
    Ok(ForwardCache {
        len,
        k1,
        fusion,
        fused_mask,
        story,
        c,
        e,
        probs,
    })
}

pub(crate) fn backward(model: &MSenseModel, cache: &ForwardCache, dprobs: &Tensor) -> Result<Gradients, MSenseError> {
    let cfg = &model.config;
    let d = cfg.d;
    let mut grads = Gradients::new();

    let dlogits = softmax_backward(&cache.probs, dprobs);
    let head = linear_backward(&cache.e, model.params.get(HEAD_W)?, &dlogits)?;
    grads.accumulate(HEAD_W, &head.dw);
    grads.accumulate(HEAD_B, &head.db);

    let mut dc = Tensor::zeros(&[cache.len, d]);
    for i in 0..cache.len {
        dc.row_mut(i).copy_from_slice(&head.dx.row(i)[..d]);
    }
    if cfg.use_interaction {
        let mut dfeat = Tensor::zeros(&[cache.len, INTERACTION_FEATURES]);
        for i in 0..cache.len {
            dfeat.row_mut(i).copy_from_slice(&head.dx.row(i)[d..]);
        }
        dc.add_assign(&similarity_backward(&cache.c, cfg.window, &dfeat))?;
    }

    for (l, layer_cache) in cache.story.iter().enumerate().rev() {
        let prefix = story_prefix(l);
        let w = TransformerWeights::from_params(&model.params, &prefix)?;
        dc = transformer_backward(layer_cache, &w, &prefix, &dc, &mut grads)?;
    }

    if let Some(fusion) = &cache.fusion {
        let dh = match &cache.fused_mask {
            Some(m) => apply_mask(&dc, m),
            None => dc,
        };
        let k1 = cache.k1;
        let mut dy = Tensor::zeros(&[cache.len * k1, d]);
        for i in 0..cache.len {
            dy.row_mut(i * k1).copy_from_slice(dh.row(i));
        }
        let w = TransformerWeights::from_params(&model.params, FUSE_LAYER)?;
        let dx = transformer_backward(fusion, &w, FUSE_LAYER, &dy, &mut grads)?;
        let roles = model.slot_roles();
        let mut dtoken = Tensor::zeros(&[d]);
        let mut dslots = Tensor::zeros(&[SLOT_NAMES.len(), d]);
        for i in 0..cache.len {
            for (j, &role) in roles.iter().enumerate() {
                let g = dx.row(i * k1 + j);
                for (acc, v) in dslots.row_mut(role).iter_mut().zip(g) {
                    *acc += v;
                }
                if role == 0 {
                    for (acc, v) in dtoken.data_mut().iter_mut().zip(g) {
                        *acc += v;
                    }
                }
            }
        }
        grads.accumulate(FUSE_TOKEN, &dtoken);
        grads.accumulate(FUSE_SLOTS, &dslots);
    }
    Ok(grads)
}

/// Summed class-weighted negative log-likelihood over the narrative's
/// sentences, with gradients for every model parameter.
pub fn loss_and_gradients(
    model: &MSenseModel,
    channels: &ChannelTriple,
    labels: &[usize],
    class_weights: &[f64; 3],
    mode: Mode,
) -> Result<(f64, Gradients), MSenseError> {
    if labels.len() != channels.len() {
        return Err(MSenseError::Shape(format!(
            "{} labels for {} sentences",
            labels.len(),
            channels.len()
        )));
    }
    let cache = forward_cached(model, channels, mode)?;
    let (loss, dprobs) = weighted_nll(&cache.probs, labels, class_weights);
    let grads = backward(model, &cache, &dprobs)?;
    Ok((loss, grads))
}

/// Inference probabilities, `L × 3`.
pub fn forward(channels: &ChannelTriple, model: &MSenseModel) -> Result<Tensor, MSenseError> {
    Ok(forward_cached(model, channels, Mode::Inference)?.probs)
}

/// Fused vector for one sentence; the semantic row itself when fusion is off.
pub fn fuse(h_sem: &[f64], h_int: &[f64], h_emo: &[f64], model: &MSenseModel) -> Result<Vec<f64>, MSenseError> {
    let d = model.config.d;
    if h_sem.len() != d || h_int.len() != d || h_emo.len() != d {
        return Err(MSenseError::Shape(format!(
            "fusion inputs have widths {}, {}, {}; expected {d}",
            h_sem.len(),
            h_int.len(),
            h_emo.len()
        )));
    }
    if !model.config.use_fusion {
        return Ok(h_sem.to_vec());
    }
    let k1 = model.slot_roles().len();
    let x = slot_matrix(model, &[h_sem, h_int, h_emo], 1)?;
    let w = TransformerWeights::from_params(&model.params, FUSE_LAYER)?;
    let (out, _) = transformer_forward(&x, &w, model.config.n_heads, BlockLayout::square(k1), None)?;
    Ok(out.row(0).to_vec())
}

/// Context-aware sentence rows; identity when the story encoder is off.
pub fn encode_story(h: &Tensor, model: &MSenseModel) -> Result<Tensor, MSenseError> {
    let cfg = &model.config;
    if !cfg.use_story_encoder {
        return Ok(h.clone());
    }
    let mut c = h.add(&positional_encoding(h.rows(), cfg.d)?)?;
    for l in 0..cfg.n_layers {
        let w = TransformerWeights::from_params(&model.params, &story_prefix(l))?;
        c = transformer_forward(&c, &w, cfg.n_heads, BlockLayout::square(h.rows()), None)?.0;
    }
    Ok(c)
}

/// Softmax rows over the interaction-augmented sentence vectors.
pub fn classify(e: &Tensor, model: &MSenseModel) -> Result<Tensor, MSenseError> {
    Ok(softmax(&linear(e, model.params.get(HEAD_W)?, model.params.get(HEAD_B)?)?))
}

/// Attention of the `[FUSE]` query over the four slots per sentence,
/// averaged over heads. Disabled channels get weight 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionAttentionMap {
    pub narrative_id: String,
    pub weights: Vec<[f64; 4]>,
}

impl FusionAttentionMap {
    pub fn mean(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for w in &self.weights {
            for k in 0..4 {
                m[k] += w[k] / self.weights.len() as f64;
            }
        }
        m
    }
}

pub(crate) fn fusion_attention(model: &MSenseModel, ch: &ChannelTriple) -> Result<Vec<[f64; 4]>, MSenseError> {
    if !model.config.use_fusion {
        return Err(MSenseError::FusionDisabled);
    }
    let cache = forward_cached(model, ch, Mode::Inference)?;
    let fusion = cache.fusion.as_ref().expect("fusion enabled");
    let roles = model.slot_roles();
    let heads = fusion.attn.n_heads();
    let mut out = Vec::with_capacity(cache.len);
    for i in 0..cache.len {
        let mut w = [0.0; 4];
        for h in 0..heads {
            // first row of the block is the [FUSE] query
            let probs = &fusion.attn.probs(i, h)[..cache.k1];
            for (j, &role) in roles.iter().enumerate() {
                w[role] += probs[j] / heads as f64;
            }
        }
        out.push(w);
    }
    Ok(out)
}
