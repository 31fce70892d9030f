use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NnError, Result};
use crate::layer::{Layer, LayerCache, LayerSpec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Activations retained by a forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct Trace {
    mode: Mode,
    caches: Vec<LayerCache>,
}

impl Trace {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// One gradient tensor per network parameter, in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            tensors: net.parameters().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.scale(factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A sequential chain of layers with materialized parameters.
///
/// `forward_with`/`backward_with` are pure over `&self` and may be called
/// concurrently; `forward`/`backward` keep the last training trace inside
/// the network for the common single-caller case.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    seed: u64,
    dropout_rng: ChaCha8Rng,
    cached: Option<Trace>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl Network {
    /// Builds the chain and initializes weights from `seed`.
    pub fn new(input_shape: &[usize], specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::assemble(input_shape, specs, seed, |spec, shape| {
            Ok(Layer::init_params(spec, shape, &mut rng))
        })
    }

    /// Builds the chain with given parameters (weight then bias per layer).
    pub fn from_parameters(
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        params: Vec<Tensor>,
        seed: u64,
    ) -> Result<Self> {
        let mut params = params.into_iter();
        let net = Self::assemble(input_shape, specs, seed, |spec, shape| {
            spec.param_shapes(shape)
                .into_iter()
                .map(|expected| {
                    let p = params
                        .next()
                        .ok_or_else(|| NnError::Mismatch("fewer parameter tensors than layers require".into()))?;
                    if p.shape() != expected.as_slice() {
                        return Err(NnError::Mismatch(format!(
                            "parameter shape {:?}, layer expects {expected:?}",
                            p.shape()
                        )));
                    }
                    Ok(p)
                })
                .collect()
        })?;
        if params.next().is_some() {
            return Err(NnError::Mismatch("more parameter tensors than layers require".into()));
        }
        Ok(net)
    }

    fn assemble(
        input_shape: &[usize],
        specs: Vec<LayerSpec>,
        seed: u64,
        mut params_for: impl FnMut(&LayerSpec, &[usize]) -> Result<Vec<Tensor>>,
    ) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(NnError::EmptyShape(input_shape.to_vec()));
        }
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (index, spec) in specs.into_iter().enumerate() {
            spec.validate(index)?;
            let output_shape = spec.output_shape(index, &shape)?;
            let params = params_for(&spec, &shape)?;
            layers.push(Layer {
                spec,
                input_shape: shape,
                output_shape: output_shape.clone(),
                params,
            });
            shape = output_shape;
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            seed,
            dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ 0xD50F_0A7E),
            cached: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.output_shape())
            .unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn parameters(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params.iter())
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params.iter_mut())
    }

    /// `layer{index}.weight` / `layer{index}.bias`, aligned with `parameters()`.
    pub fn parameter_names(&self) -> Vec<String> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                ["weight", "bias"]
                    .into_iter()
                    .take(l.params.len())
                    .map(move |n| format!("layer{i}.{n}"))
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map(Tensor::len).sum()
    }

    /// Inference-mode forward pass; dropout is the identity.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward_with(x.clone(), Mode::Infer, &mut rng).map(|(y, _)| y)
    }

    /// Forward pass drawing dropout masks from `rng`.
    pub fn forward_with(&self, x: Tensor, mode: Mode, rng: &mut dyn RngCore) -> Result<(Tensor, Trace)> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(NnError::InputShape {
                expected: self.input_shape.clone(),
                found: x.shape().to_vec(),
            });
        }
        let train = mode == Mode::Train;
        let mut caches = Vec::with_capacity(if train { self.layers.len() } else { 0 });
        let mut current = x;
        for layer in &self.layers {
            let (out, cache) = layer.forward(current, train, rng);
            if train {
                caches.push(cache);
            }
            current = out;
        }
        Ok((current, Trace { mode, caches }))
    }

    /// Backpropagates `grad` (dLoss/dOutput) through a training trace.
    ///
    /// The input gradient is only computed when `need_input_grad` is set.
    pub fn backward_with(
        &self,
        trace: &Trace,
        grad: Tensor,
        need_input_grad: bool,
    ) -> Result<(Gradients, Option<Tensor>)> {
        if trace.mode != Mode::Train || trace.caches.len() != self.layers.len() {
            return Err(NnError::NoCachedForward);
        }
        if grad.shape() != self.output_shape() {
            return Err(NnError::Mismatch(format!(
                "loss gradient shape {:?}, network output {:?}",
                grad.shape(),
                self.output_shape()
            )));
        }
        let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); self.layers.len()];
        let mut current = Some(grad);
        for (index, (layer, cache)) in self.layers.iter().zip(&trace.caches).enumerate().rev() {
            let g = current.take().expect("gradient flows to every layer");
            let want_input = index > 0 || need_input_grad;
            let (dx, params) = layer.backward(cache, g, want_input);
            per_layer[index] = params;
            current = dx;
            if index == 0 && !need_input_grad {
                current = None;
            }
        }
        Ok((
            Gradients {
                tensors: per_layer.into_iter().flatten().collect(),
            },
            current,
        ))
    }

    /// Forward pass using the network's own dropout stream; a training pass
    /// is retained for the next `backward` call.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut rng = self.dropout_rng.clone();
        let result = self.forward_with(x.clone(), mode, &mut rng);
        self.dropout_rng = rng;
        let (y, trace) = result?;
        self.cached = (mode == Mode::Train).then_some(trace);
        Ok(y)
    }

    /// Gradients for the last training-mode `forward`; consumes the trace.
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<Gradients> {
        let trace = self.cached.take().ok_or(NnError::NoCachedForward)?;
        self.backward_with(&trace, loss_grad.clone(), false).map(|(g, _)| g)
    }

    /// Restarts the dropout stream used by `forward`.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::Loss;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_one_by_one_conv_returns_input() {
        let net = Network::from_parameters(
            &[2, 2, 1],
            vec![LayerSpec::conv(1, 1)],
            vec![t(&[1, 1, 1, 1], &[1.0]), t(&[1], &[0.0])],
            0,
        )
        .unwrap();
        let x = t(&[2, 2, 1], &[0.3, -1.0, 2.0, 7.5]);
        assert_eq!(net.infer(&x).unwrap(), x);
    }

    #[test]
    fn max_pool_takes_window_max() {
        let net = Network::new(&[2, 2, 1], vec![LayerSpec::pool(2)], 0).unwrap();
        let y = net.infer(&t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn all_ones_kernel_center_sums_window() {
        // Same padding keeps 3×3 output; the centre equals the valid convolution.
        let net = Network::from_parameters(
            &[3, 3, 1],
            vec![LayerSpec::conv(1, 3)],
            vec![Tensor::filled(&[3, 3, 1, 1], 1.0), t(&[1], &[0.0])],
            0,
        )
        .unwrap();
        let y = net.infer(&Tensor::filled(&[3, 3, 1], 1.0)).unwrap();
        assert_eq!(y.at(&[1, 1, 0]), 9.0);
        assert_eq!(y.at(&[0, 0, 0]), 4.0);
        assert_eq!(y.at(&[0, 1, 0]), 6.0);
    }

    #[test]
    fn input_shape_mismatch_is_reported() {
        let net = Network::new(&[4, 4, 3], vec![LayerSpec::conv(2, 3)], 0).unwrap();
        let err = net.infer(&Tensor::zeros(&[4, 4, 1])).unwrap_err();
        assert!(matches!(err, NnError::InputShape { .. }));
    }

    #[test]
    fn build_names_offending_layer() {
        let err = Network::new(&[4, 4, 3], vec![LayerSpec::conv(2, 3), LayerSpec::dense(4)], 0).unwrap_err();
        match err {
            NnError::LayerShape { index, kind, .. } => {
                assert_eq!(index, 1);
                assert_eq!(kind, "dense");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(Network::new(&[4], vec![LayerSpec::dropout(1.0)], 0).is_err());
        assert!(Network::new(&[4, 4, 1], vec![LayerSpec::pool(0)], 0).is_err());
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut net = Network::new(&[3], vec![LayerSpec::dense(2)], 1).unwrap();
        assert!(matches!(
            net.backward(&Tensor::zeros(&[2])),
            Err(NnError::NoCachedForward)
        ));
        net.forward(&Tensor::zeros(&[3]), Mode::Infer).unwrap();
        assert!(matches!(
            net.backward(&Tensor::zeros(&[2])),
            Err(NnError::NoCachedForward)
        ));
    }

    #[test]
    fn dense_at_optimum_has_zero_gradients() {
        let mut net = Network::from_parameters(
            &[2],
            vec![LayerSpec::dense(1)],
            vec![t(&[2, 1], &[2.0, -1.0]), t(&[1], &[0.5])],
            0,
        )
        .unwrap();
        let x = t(&[2], &[1.0, 3.0]);
        let target = t(&[1], &[2.0 - 3.0 + 0.5]);
        let y = net.forward(&x, Mode::Train).unwrap();
        let g = net
            .backward(&Loss::SquaredError.gradient(&y, &target).unwrap())
            .unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn relu_blocks_gradient_for_negative_preactivation() {
        let mut net = Network::from_parameters(
            &[1],
            vec![LayerSpec::dense(1), LayerSpec::relu()],
            vec![t(&[1, 1], &[1.0]), t(&[1], &[-5.0])],
            0,
        )
        .unwrap();
        net.forward(&t(&[1], &[1.0]), Mode::Train).unwrap();
        let g = net.backward(&t(&[1], &[1.0])).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn dropout_is_identity_in_inference() {
        let net = Network::new(&[64], vec![LayerSpec::dropout(0.5)], 3).unwrap();
        let x = Tensor::filled(&[64], 1.0);
        assert_eq!(net.infer(&x).unwrap(), x);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (y, _) = net.forward_with(x, Mode::Train, &mut rng).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(y.data().contains(&0.0));
    }

    #[test]
    fn forward_is_deterministic_for_seed() {
        let specs = vec![
            LayerSpec::conv(3, 3),
            LayerSpec::relu(),
            LayerSpec::pool(2),
            LayerSpec::Flatten,
            LayerSpec::dense(5),
            LayerSpec::dropout(0.3),
            LayerSpec::dense(1),
            LayerSpec::sigmoid(),
        ];
        let a = Network::new(&[6, 6, 2], specs.clone(), 11).unwrap();
        let b = Network::new(&[6, 6, 2], specs, 11).unwrap();
        assert_eq!(a, b);
        let x = Tensor::new(vec![6, 6, 2], (0..72).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let run = |n: &Network| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            n.forward_with(x.clone(), Mode::Train, &mut rng).unwrap().0
        };
        let (ya, yb) = (run(&a), run(&b));
        assert_eq!(ya.data()[0].to_bits(), yb.data()[0].to_bits());
        assert!(ya.all_finite());
    }

    #[test]
    fn parameter_names_align_with_parameters() {
        let net = Network::new(
            &[4, 4, 1],
            vec![
                LayerSpec::conv(2, 3),
                LayerSpec::relu(),
                LayerSpec::Flatten,
                LayerSpec::dense(3),
            ],
            0,
        )
        .unwrap();
        assert_eq!(
            net.parameter_names(),
            vec!["layer0.weight", "layer0.bias", "layer3.weight", "layer3.bias"]
        );
        assert_eq!(net.parameters().count(), 4);
        assert_eq!(net.parameter_count(), 3 * 3 * 2 + 2 + 32 * 3 + 3);
    }
}
