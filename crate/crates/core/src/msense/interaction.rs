//! Windowed context similarity: for each sentence, cosines between its
//! vector and the means of the `s` sentences on either side.

use crate::neuralcore::Tensor;

pub const INTERACTION_FEATURES: usize = 3;

/// Cosine similarity, defined as 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Adds `g · ∂cos(a,b)/∂a` into `da` and `g · ∂cos(a,b)/∂b` into `db`.
fn cosine_backward(a: &[f64], b: &[f64], g: f64, da: &mut [f64], db: &mut [f64]) {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 || g == 0.0 {
        return;
    }
    let c = dot(a, b) / (na * nb);
    let inv = 1.0 / (na * nb);
    for k in 0..a.len() {
        da[k] += g * (b[k] * inv - c * a[k] / (na * na));
        db[k] += g * (a[k] * inv - c * b[k] / (nb * nb));
    }
}

fn windows(i: usize, len: usize, s: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let left = i.saturating_sub(s)..i;
    let right = (i + 1).min(len)..(i + s + 1).min(len);
    (left, right)
}

fn window_mean(c: &Tensor, rows: std::ops::Range<usize>) -> Vec<f64> {
    let mut m = vec![0.0; c.cols()];
    if rows.is_empty() {
        return m;
    }
    let n = rows.len() as f64;
    for r in rows {
        for (acc, v) in m.iter_mut().zip(c.row(r)) {
            *acc += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// `L × 3` feature block: `[cos(c, left), cos(c, right), cos(left, right)]`.
pub(crate) fn similarity_features(c: &Tensor, s: usize) -> Tensor {
    let len = c.rows();
    let mut out = Vec::with_capacity(len * INTERACTION_FEATURES);
    for i in 0..len {
        let (l, r) = windows(i, len, s);
        let left = window_mean(c, l);
        let right = window_mean(c, r);
        let ci = c.row(i);
        out.extend([cosine(ci, &left), cosine(ci, &right), cosine(&left, &right)]);
    }
    Tensor::matrix(len, INTERACTION_FEATURES, out).expect("three features per row")
}

/// Gradient w.r.t. `c` given the gradient of [`similarity_features`].
pub(crate) fn similarity_backward(c: &Tensor, s: usize, dfeat: &Tensor) -> Tensor {
    let (len, d) = (c.rows(), c.cols());
    let mut dc = Tensor::zeros(&[len, d]);
    let mut dleft = vec![0.0; d];
    let mut dright = vec![0.0; d];
    let mut dci = vec![0.0; d];
    for i in 0..len {
        let (l, r) = windows(i, len, s);
        let left = window_mean(c, l.clone());
        let right = window_mean(c, r.clone());
        let g = dfeat.row(i);
        dleft.iter_mut().for_each(|v| *v = 0.0);
        dright.iter_mut().for_each(|v| *v = 0.0);
        dci.iter_mut().for_each(|v| *v = 0.0);
        let ci = c.row(i);
        cosine_backward(ci, &left, g[0], &mut dci, &mut dleft);
        let mut tmp = vec![0.0; d];
        cosine_backward(ci, &right, g[1], &mut tmp, &mut dright);
        for k in 0..d {
            dci[k] += tmp[k];
        }
        cosine_backward(&left, &right, g[2], &mut dleft, &mut dright);
        for (acc, v) in dc.row_mut(i).iter_mut().zip(&dci) {
            *acc += v;
        }
        for (range, grad) in [(l, &dleft), (r, &dright)] {
            if range.is_empty() {
                continue;
            }
            let n = range.len() as f64;
            for row in range {
                for (acc, v) in dc.row_mut(row).iter_mut().zip(grad.iter()) {
                    *acc += v / n;
                }
            }
        }
    }
    dc
}

/// `L × (d+3)`: each row of `c` followed by its similarity features, or by
/// zeros when `enabled` is false.
pub fn interaction_features(c: &Tensor, s: usize, enabled: bool) -> Tensor {
    let (len, d) = (c.rows(), c.cols());
    let feats = enabled.then(|| similarity_features(c, s));
    let width = d + INTERACTION_FEATURES;
    let mut out = Vec::with_capacity(len * width);
    for i in 0..len {
        out.extend_from_slice(c.row(i));
        match &feats {
            Some(f) => out.extend_from_slice(f.row(i)),
            None => out.extend([0.0; INTERACTION_FEATURES]),
        }
    }
    Tensor::matrix(len, width, out).expect("row width is d + 3")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_row_has_zero_features() {
        let e = interaction_features(&random(1, 4, 0), 2, true);
        assert_eq!(&e.row(0)[4..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn identical_rows_give_unit_cosines_inside() {
        let c = Tensor::from_rows(&vec![vec![0.5, -1.0, 2.0]; 5]).unwrap();
        let e = interaction_features(&c, 2, true);
        for i in 1..4 {
            for v in &e.row(i)[3..] {
                assert!((v - 1.0).abs() < 1e-12);
            }
        }
        // the first row has no left window
        assert_eq!(e.row(0)[3], 0.0);
    }

    #[test]
    fn matches_direct_windowed_computation() {
        let c = random(6, 5, 3);
        let e = interaction_features(&c, 2, true);
        let rows = c.to_rows();
        let mean = |idx: &[usize]| -> Vec<f64> {
            let mut m = vec![0.0; 5];
            for &r in idx {
                for k in 0..5 {
                    m[k] += rows[r][k] / idx.len() as f64;
                }
            }
            m
        };
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                d / (na * nb)
            }
        };
        let windows: [(&[usize], &[usize]); 6] = [
            (&[], &[1, 2]),
            (&[0], &[2, 3]),
            (&[0, 1], &[3, 4]),
            (&[1, 2], &[4, 5]),
            (&[2, 3], &[5]),
            (&[3, 4], &[]),
        ];
        for (i, (l, r)) in windows.iter().enumerate() {
            let (lm, rm) = (mean(l), mean(r));
            let expected = [cos(&rows[i], &lm), cos(&rows[i], &rm), cos(&lm, &rm)];
            for k in 0..3 {
                assert!((e.row(i)[5 + k] - expected[k]).abs() < 1e-10);
            }
            assert_eq!(&e.row(i)[..5], &rows[i][..]);
        }
    }

    #[test]
    fn disabled_features_are_zero() {
        let e = interaction_features(&random(4, 3, 1), 2, false);
        for i in 0..4 {
            assert_eq!(&e.row(i)[3..], &[0.0; 3]);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let c = random(5, 4, 9);
        let probe = random(5, 3, 10);
        let loss = |c: &Tensor| -> f64 {
            similarity_features(c, 2).data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };
        let dc = similarity_backward(&c, 2, &probe);
        let h = 1e-6;
        for k in 0..c.len() {
            let mut plus = c.clone();
            plus.data_mut()[k] += h;
            let mut minus = c.clone();
            minus.data_mut()[k] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((numeric - dc.data()[k]).abs() < 1e-7, "coordinate {k}: {numeric} vs {}", dc.data()[k]);
        }
    }
}
