//! Central-difference verification of `Network::backward_with`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::{Mode, Network};
use crate::ops::Loss;
use crate::tensor::Tensor;

/// Perturbation used for central differences.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so parameters with vanishing
/// gradients are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    pub parameter: String,
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Compares backpropagated gradients against central differences on every
/// parameter element.
///
/// Every forward pass is run in training mode with a dropout stream reseeded
/// from `dropout_seed`, so masks stay fixed across perturbations.
pub fn gradient_check(
    net: &mut Network,
    x: &Tensor,
    target: &Tensor,
    loss: Loss,
    dropout_seed: u64,
) -> Result<GradientCheckReport> {
    let eval = |net: &Network| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let (y, _) = net.forward_with(x.clone(), Mode::Train, &mut rng)?;
        loss.value(&y, target)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let (y, trace) = net.forward_with(x.clone(), Mode::Train, &mut rng)?;
    let (grads, _) = net.backward_with(&trace, loss.gradient(&y, target)?, false)?;
    let names = net.parameter_names();

    let mut report = GradientCheckReport {
        max_relative_error: 0.0,
        parameter: String::new(),
        element: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (p_index, analytic) in grads.tensors().iter().enumerate() {
        for e in 0..analytic.len() {
            let original = param_value(net, p_index, e);
            set_param(net, p_index, e, original + FINITE_DIFFERENCE_STEP);
            let plus = eval(net)?;
            set_param(net, p_index, e, original - FINITE_DIFFERENCE_STEP);
            let minus = eval(net)?;
            set_param(net, p_index, e, original);

            let numeric = (plus - minus) / (2.0 * FINITE_DIFFERENCE_STEP);
            let a = analytic.data()[e];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report = GradientCheckReport {
                    max_relative_error: err,
                    parameter: names[p_index].clone(),
                    element: e,
                    analytic: a,
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}

fn param_value(net: &Network, index: usize, element: usize) -> f64 {
    net.parameters().nth(index).expect("parameter index").data()[element]
}

fn set_param(net: &mut Network, index: usize, element: usize, value: f64) {
    net.parameters_mut().nth(index).expect("parameter index").data_mut()[element] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::LayerSpec;
    use rand::Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_net_linear_loss_is_exact() {
        let mut net = Network::new(&[5], vec![LayerSpec::dense(3)], 2).unwrap();
        let report = gradient_check(
            &mut net,
            &random_tensor(&[5], 1),
            &random_tensor(&[3], 2),
            Loss::Linear,
            0,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 5 * 3 + 3);
    }

    #[test]
    fn two_layer_net_matches_finite_differences() {
        for seed in 0..4 {
            let mut net = Network::new(
                &[6],
                vec![
                    LayerSpec::dense(8),
                    LayerSpec::relu(),
                    LayerSpec::dense(2),
                    LayerSpec::sigmoid(),
                ],
                seed,
            )
            .unwrap();
            let target = Tensor::vector(vec![1.0, 0.0]);
            let report = gradient_check(
                &mut net,
                &random_tensor(&[6], 100 + seed),
                &target,
                Loss::BinaryCrossEntropy,
                0,
            )
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn conv_pool_chain_matches_finite_differences() {
        let mut net = Network::new(
            &[6, 6, 2],
            vec![
                LayerSpec::conv(3, 3),
                LayerSpec::relu(),
                LayerSpec::pool(2),
                LayerSpec::conv(2, 3),
                LayerSpec::Flatten,
                LayerSpec::dense(1),
                LayerSpec::sigmoid(),
            ],
            7,
        )
        .unwrap();
        let report = gradient_check(
            &mut net,
            &random_tensor(&[6, 6, 2], 3),
            &Tensor::scalar(1.0),
            Loss::BinaryCrossEntropy,
            0,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }

    #[test]
    fn dropout_mask_is_held_fixed() {
        let mut net = Network::new(
            &[8],
            vec![
                LayerSpec::dense(16),
                LayerSpec::relu(),
                LayerSpec::dropout(0.5),
                LayerSpec::dense(1),
                LayerSpec::sigmoid(),
            ],
            4,
        )
        .unwrap();
        let report = gradient_check(
            &mut net,
            &random_tensor(&[8], 9),
            &Tensor::scalar(0.0),
            Loss::BinaryCrossEntropy,
            1234,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-4, "{report:?}");
    }
}
