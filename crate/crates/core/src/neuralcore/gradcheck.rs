use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, ParameterSet};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference half step.
    pub step: f64,
    /// Coordinates checked per tensor; smaller tensors are checked in full.
    pub coords_per_tensor: usize,
    /// Gradients smaller than this are compared in absolute terms.
    pub magnitude_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            coords_per_tensor: 64,
            magnitude_floor: 1e-3,
            seed: 0,
        }
    }
}

/// Compares the analytic gradients returned by `loss_fn` against central
/// differences and returns the largest relative error
/// `|a - n| / max(|a|, |n|, floor)` seen over the checked coordinates.
pub fn grad_check<F>(loss_fn: F, params: &ParameterSet, config: &GradCheckConfig) -> f64
where
    F: Fn(&ParameterSet) -> (f64, Gradients),
{
    grad_check_by_tensor(loss_fn, params, config)
        .into_iter()
        .map(|(_, e)| e)
        .fold(0.0, f64::max)
}

/// Worst relative error per parameter tensor, in name order.
pub fn grad_check_by_tensor<F>(loss_fn: F, params: &ParameterSet, config: &GradCheckConfig) -> Vec<(String, f64)>
where
    F: Fn(&ParameterSet) -> (f64, Gradients),
{
    let (_, analytic) = loss_fn(params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = Vec::new();
    let mut probe = params.clone();
    for (name, tensor) in params.iter() {
        let mut worst = 0.0f64;
        let n = tensor.len();
        let coords: Vec<usize> = if n <= config.coords_per_tensor {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, config.coords_per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for idx in coords {
            let original = tensor.data()[idx];
            probe.get_mut(name).expect("same names").data_mut()[idx] = original + config.step;
            let plus = loss_fn(&probe).0;
            probe.get_mut(name).expect("same names").data_mut()[idx] = original - config.step;
            let minus = loss_fn(&probe).0;
            probe.get_mut(name).expect("same names").data_mut()[idx] = original;
            let numeric = (plus - minus) / (2.0 * config.step);
            let a = analytic.get(name).map_or(0.0, |g| g.data()[idx]);
            let denom = a.abs().max(numeric.abs()).max(config.magnitude_floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
        report.push((name.to_string(), worst));
    }
    report
}
