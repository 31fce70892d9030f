//! Elementwise activations, softmax, and the cross-entropy family.

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Lower clip bound applied to probabilities before taking logs.
pub const PROB_EPSILON: f64 = 1e-12;

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Softmax over a slice, computed after subtracting the maximum.
pub fn softmax_slice(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Log-softmax over a slice; avoids `log(0)` for very negative logits.
pub fn log_softmax_slice(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    v.iter().map(|&x| x - max - log_sum).collect()
}

/// Softmax over every element of `v`, treated as one vector.
pub fn softmax(v: &Tensor) -> Tensor {
    Tensor::new(v.shape().to_vec(), softmax_slice(v.data())).expect("same shape")
}

pub fn clip_probability(y: f64) -> f64 {
    y.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}

/// Multi-class cross entropy `-Σ t_i log(y_i)` with clipped probabilities.
pub fn cross_entropy(t: &Tensor, y: &Tensor) -> Result<f64> {
    if t.len() != y.len() {
        return Err(NnError::Mismatch(format!(
            "target length {} vs output length {}",
            t.len(),
            y.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&ti, &yi)) in t.data().iter().zip(y.data()).enumerate() {
        if !yi.is_finite() || yi > 1.0 {
            return Err(NnError::Domain(format!("probability y[{i}] = {yi}")));
        }
        if ti > 0.0 {
            if yi <= 0.0 {
                return Err(NnError::Domain(format!("y[{i}] = {yi} with positive target {ti}")));
            }
            total -= ti * clip_probability(yi).ln();
        }
    }
    Ok(total)
}

/// Single-output specialization `-[t log y + (1-t) log(1-y)]`.
pub fn binary_cross_entropy(t: f64, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return Err(NnError::Domain(format!("probability {y} outside [0, 1]")));
    }
    if (t > 0.0 && y <= 0.0) || (t < 1.0 && y >= 1.0) {
        return Err(NnError::Domain(format!(
            "probability {y} leaves target {t} with zero likelihood"
        )));
    }
    let yc = clip_probability(y);
    Ok(-(t * yc.ln() + (1.0 - t) * (1.0 - yc).ln()))
}

/// Derivative of binary cross entropy with respect to `y`, evaluated at the
/// clipped probability so saturated outputs keep a usable gradient.
pub fn binary_cross_entropy_grad(t: f64, y: f64) -> f64 {
    let yc = clip_probability(y);
    (y - t) / (yc * (1.0 - yc))
}

/// Loss functions usable at a network's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Per-element binary cross entropy (sigmoid outputs).
    BinaryCrossEntropy,
    /// `-Σ t log y` over probability outputs.
    CrossEntropy,
    /// `½ Σ (y - t)²`.
    SquaredError,
    /// `Σ t·y`, linear in the output.
    Linear,
}

impl Loss {
    pub fn value(&self, y: &Tensor, t: &Tensor) -> Result<f64> {
        check_same_len(y, t)?;
        match self {
            Loss::BinaryCrossEntropy => y
                .data()
                .iter()
                .zip(t.data())
                .map(|(&yi, &ti)| binary_cross_entropy(ti, yi))
                .sum(),
            Loss::CrossEntropy => cross_entropy(t, y),
            Loss::SquaredError => Ok(0.5
                * y.data()
                    .iter()
                    .zip(t.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()),
            Loss::Linear => Ok(y.data().iter().zip(t.data()).map(|(a, b)| a * b).sum()),
        }
    }

    pub fn gradient(&self, y: &Tensor, t: &Tensor) -> Result<Tensor> {
        check_same_len(y, t)?;
        let data = y
            .data()
            .iter()
            .zip(t.data())
            .map(|(&yi, &ti)| match self {
                Loss::BinaryCrossEntropy => binary_cross_entropy_grad(ti, yi),
                Loss::CrossEntropy => {
                    if ti == 0.0 {
                        0.0
                    } else {
                        -ti / clip_probability(yi)
                    }
                }
                Loss::SquaredError => yi - ti,
                Loss::Linear => ti,
            })
            .collect();
        Tensor::new(y.shape().to_vec(), data)
    }
}

fn check_same_len(y: &Tensor, t: &Tensor) -> Result<()> {
    if y.len() != t.len() {
        return Err(NnError::Mismatch(format!(
            "output length {} vs target length {}",
            y.len(),
            t.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> Tensor {
        Tensor::vector(data.to_vec())
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&v(&[-2.0, 0.0, 3.0])).data(), &[0.0, 0.0, 3.0]);
        assert_eq!(relu(&v(&[0.0; 4])).data(), &[0.0; 4]);
        assert_eq!(relu(&v(&[0.5, -0.5])).data(), &[0.5, 0.0]);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(50.0) - 1.0).abs() < 1e-9);
        assert!((sigmoid_scalar(1.7) + sigmoid_scalar(-1.7) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_slice(&[0.0, 0.0]), vec![0.5, 0.5]);
        for c in [-700.0, 0.0, 3.5, 900.0] {
            for p in softmax_slice(&[c, c, c]) {
                assert!((p - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        // 1/(1+e) and e/(1+e) to double precision.
        let p = softmax_slice(&[1.0, 2.0]);
        assert!((p[0] - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert!((p[1] - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_examples() {
        let near_perfect = cross_entropy(&v(&[0.0, 1.0, 0.0]), &v(&[0.1, 1.0 - 2e-9, 0.0])).unwrap();
        assert!(near_perfect.abs() < 1e-8);
        let uniform = cross_entropy(&v(&[1.0, 0.0]), &v(&[0.5, 0.5])).unwrap();
        assert!((uniform - std::f64::consts::LN_2).abs() < 1e-15);
        let binary = binary_cross_entropy(1.0, 0.25).unwrap();
        assert!((binary - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_domain_errors() {
        assert!(matches!(
            cross_entropy(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])),
            Err(NnError::Domain(_))
        ));
        assert!(binary_cross_entropy(1.0, 0.0).is_err());
        assert!(binary_cross_entropy(0.0, 1.0).is_err());
        assert!(cross_entropy(&v(&[1.0]), &v(&[0.5, 0.5])).is_err());
    }

    proptest! {
        #[test]
        fn relu_idempotent(xs in prop::collection::vec(-1e6f64..1e6, 1..32)) {
            let t = v(&xs);
            prop_assert_eq!(relu(&relu(&t)), relu(&t));
        }

        #[test]
        fn sigmoid_range_and_monotone(a in -30f64..30.0, b in -30f64..30.0) {
            let (sa, sb) = (sigmoid_scalar(a), sigmoid_scalar(b));
            prop_assert!(sa > 0.0 && sa < 1.0);
            if a <= b { prop_assert!(sa <= sb); }
        }

        #[test]
        fn softmax_normalized_and_argmax(xs in prop::collection::vec(-50f64..50.0, 1..16), shift in -100f64..100.0) {
            let p = softmax_slice(&xs);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let argmax = |s: &[f64]| s.iter().enumerate().fold(0, |b, (i, &x)| if x > s[b] { i } else { b });
            prop_assert_eq!(argmax(&xs), argmax(&p));
            let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
            for (a, b) in softmax_slice(&shifted).iter().zip(&p) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cross_entropy_nonnegative(xs in prop::collection::vec(-10f64..10.0, 2..8), k in 0usize..8) {
            let y = v(&softmax_slice(&xs));
            let mut t = vec![0.0; xs.len()];
            t[k % xs.len()] = 1.0;
            prop_assert!(cross_entropy(&v(&t), &y).unwrap() >= 0.0);
        }
    }
}
