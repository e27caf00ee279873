//! Small feed-forward network engine: dense, 1D convolution, pooling,
//! flatten and normalization layers with backpropagation, trained by Adam.

mod layer;
mod loss;
mod train;

pub use layer::{
    Activation, Layer, LayerCache, LayerKind, LayerSpec, NormStats, PoolMode, Shape, NORM_EPS,
};
pub use loss::{loss_and_grad, Loss, OutputHead, HEAD_FLOOR};
pub use train::{train, Adam, History, OptimizerConfig};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::PredictiveDistribution;
use crate::{Error, Result};

/// Version of the serialized network document.
pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// A built network: resolved layers, flat parameters and the output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct Network {
    input: Shape,
    layers: Vec<Layer>,
    head: OutputHead,
    params: Vec<f64>,
}

/// Activations retained by a training forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<f64>>,
    pub caches: Vec<LayerCache>,
    pub batch: usize,
}

/// Builds a network whose final layer feeds `head` directly.
///
/// Weights are Glorot-uniform from `seed`; biases and normalization shifts
/// start at zero, normalization scales at one.
pub fn build(specs: &[LayerSpec], head: OutputHead, input: Shape, seed: u64) -> Result<Network> {
    let mut net = Network::from_specs(specs, head, input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &net.layers {
        let w = &mut net.params[layer.offset..layer.offset + layer.n_params];
        match (layer.spec.kind, layer.fans()) {
            (_, Some((fan_in, fan_out))) => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in &mut w[..layer.n_weights()] {
                    *v = rng.random_range(-limit..limit);
                }
            }
            (LayerKind::Normalization, None) => w[..layer.n_weights()].fill(1.0),
            _ => {}
        }
    }
    Ok(net)
}

impl Network {
    /// Resolves shapes and allocates zero parameters.
    pub fn from_specs(specs: &[LayerSpec], head: OutputHead, input: Shape) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Shape {
                layer: 0,
                message: "network has no layers".into(),
            });
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        let mut offset = 0;
        for (i, spec) in specs.iter().enumerate() {
            let layer = Layer::new(*spec, shape, offset, i)?;
            offset += layer.n_params;
            shape = layer.output;
            layers.push(layer);
        }
        if shape.size() != head.n_outputs() {
            return Err(Error::Shape {
                layer: specs.len() - 1,
                message: format!(
                    "final layer yields {}×{} values but the head reads {}",
                    shape.len,
                    shape.channels,
                    head.n_outputs()
                ),
            });
        }
        Ok(Network {
            input,
            layers,
            head,
            params: vec![0.0; offset],
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn input_size(&self) -> usize {
        self.input.size()
    }

    pub fn n_outputs(&self) -> usize {
        self.head.n_outputs()
    }

    pub fn head(&self) -> OutputHead {
        self.head
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Parameters of layer `index`: weights first, then biases.
    pub fn layer_params_mut(&mut self, index: usize) -> &mut [f64] {
        let l = &self.layers[index];
        &mut self.params[l.offset..l.offset + l.n_params]
    }

    pub fn layer_norm_mut(&mut self, index: usize) -> Option<&mut NormStats> {
        self.layers[index].norm.as_mut()
    }

    fn check_input(&self, x: &[f64]) -> Result<usize> {
        let sz = self.input.size();
        if x.len() % sz != 0 {
            return Err(Error::Shape {
                layer: 0,
                message: format!("input of {} values is not a multiple of {sz}", x.len()),
            });
        }
        Ok(x.len() / sz)
    }

    /// Raw outputs for a batch of inputs laid out sample after sample.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = self.check_input(x)?;
        let mut cache = LayerCache::default();
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&self.params, &cur, batch, &mut cache);
        }
        Ok(cur)
    }

    /// Forward pass keeping every intermediate for [`Network::backward`].
    /// With `update_norm`, normalization layers first fold the incoming batch
    /// into their running statistics.
    pub fn forward_trace(&mut self, x: &[f64], update_norm: bool) -> Result<Trace> {
        let batch = self.check_input(x)?;
        let mut trace = Trace {
            acts: vec![x.to_vec()],
            caches: Vec::with_capacity(self.layers.len()),
            batch,
        };
        for i in 0..self.layers.len() {
            if update_norm {
                let ch = self.layers[i].input.channels;
                if let Some(stats) = self.layers[i].norm.as_mut() {
                    stats.accumulate(&trace.acts[i], ch);
                }
            }
            let mut cache = LayerCache::default();
            let out = self.layers[i].forward(&self.params, &trace.acts[i], batch, &mut cache);
            trace.acts.push(out);
            trace.caches.push(cache);
        }
        Ok(trace)
    }

    /// Parameter gradient for output gradient `d_out`; also returns the
    /// gradient wrt the input.
    pub fn backward(&self, trace: &Trace, d_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut d = d_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward(
                &self.params,
                &trace.acts[i],
                &trace.acts[i + 1],
                &d,
                trace.batch,
                &trace.caches[i],
                &mut grad,
            );
        }
        (grad, d)
    }

    /// Parameter gradient only; skips the input gradient of the first layer.
    pub fn param_gradient(&self, trace: &Trace, d_out: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.params.len()];
        let mut d = d_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            d = layer.backward_impl(
                &self.params,
                &trace.acts[i],
                &trace.acts[i + 1],
                &d,
                trace.batch,
                &trace.caches[i],
                &mut grad,
                i > 0,
            );
        }
        grad
    }

    /// Predictive distributions for a batch; `None` for point heads.
    pub fn predict_distributions(&self, x: &[f64]) -> Result<Option<Vec<PredictiveDistribution>>> {
        if matches!(self.head, OutputHead::Point { .. }) {
            return Ok(None);
        }
        let raw = self.forward(x)?;
        raw.chunks_exact(2)
            .map(|o| {
                self.head
                    .distribution(o)
                    .ok_or_else(|| Error::NonFinite(format!("head cannot read outputs {o:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    #[serde(flatten)]
    spec: LayerSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm: Option<NormStats>,
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    format_version: u32,
    input_shape: Shape,
    head: OutputHead,
    layers: Vec<LayerDoc>,
}

impl From<Network> for NetworkDoc {
    fn from(net: Network) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerDoc {
                spec: l.spec,
                params: net.params[l.offset..l.offset + l.n_params].to_vec(),
                norm: l.norm.clone(),
            })
            .collect();
        NetworkDoc {
            format_version: NETWORK_FORMAT_VERSION,
            input_shape: net.input,
            head: net.head,
            layers,
        }
    }
}

impl TryFrom<NetworkDoc> for Network {
    type Error = String;

    fn try_from(doc: NetworkDoc) -> core::result::Result<Self, String> {
        if doc.format_version != NETWORK_FORMAT_VERSION {
            return Err(format!(
                "unsupported network format version {}",
                doc.format_version
            ));
        }
        let specs: Vec<LayerSpec> = doc.layers.iter().map(|l| l.spec).collect();
        let mut net =
            Network::from_specs(&specs, doc.head, doc.input_shape).map_err(|e| format!("{e}"))?;
        for (i, ld) in doc.layers.into_iter().enumerate() {
            let l = &mut net.layers[i];
            if ld.params.len() != l.n_params {
                return Err(format!(
                    "layer {i} stores {} parameters, expected {}",
                    ld.params.len(),
                    l.n_params
                ));
            }
            net.params[l.offset..l.offset + l.n_params].copy_from_slice(&ld.params);
            match (&mut l.norm, ld.norm) {
                (Some(stats), Some(saved)) => {
                    if saved.mean.len() != stats.mean.len() || saved.var.len() != stats.var.len() {
                        return Err(format!(
                            "layer {i} normalization statistics have the wrong width"
                        ));
                    }
                    *stats = saved;
                }
                (None, None) => {}
                _ => {
                    return Err(format!(
                        "layer {i} normalization statistics do not match its kind"
                    ))
                }
            }
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn dense_build_dimensions() {
        let net = build(
            &[LayerSpec::dense(28, Activation::Elu)],
            OutputHead::Point { outputs: 28 },
            Shape::features(3),
            1,
        )
        .unwrap();
        assert_eq!(net.layers()[0].n_params, 3 * 28 + 28);
        assert_eq!(net.layers()[0].n_weights(), 84);
        assert!(net.params()[84..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn conv_build_dimensions() {
        let specs = [
            LayerSpec::conv1d(24, 3, Activation::Relu),
            LayerSpec::flatten(),
        ];
        let net = build(
            &specs,
            OutputHead::Point { outputs: 14 * 24 },
            Shape::sequence(16, 3),
            1,
        )
        .unwrap();
        assert_eq!(net.layers()[0].output, Shape::sequence(14, 24));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let specs = [
            LayerSpec::dense(4, Activation::Relu),
            LayerSpec::conv1d(2, 3, Activation::Relu),
        ];
        match build(
            &specs,
            OutputHead::Point { outputs: 1 },
            Shape::features(3),
            0,
        ) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("{other:?}"),
        }
        match build(
            &[LayerSpec::dense(3, Activation::Linear)],
            OutputHead::TnExpExp,
            Shape::features(3),
            0,
        ) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seeded_build_is_deterministic() {
        let specs = [
            LayerSpec::dense(8, Activation::Elu),
            LayerSpec::dense(2, Activation::Linear),
        ];
        let a = build(&specs, OutputHead::TnExpExp, Shape::features(3), 42).unwrap();
        let b = build(&specs, OutputHead::TnExpExp, Shape::features(3), 42).unwrap();
        let c = build(&specs, OutputHead::TnExpExp, Shape::features(3), 43).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let specs = [
            LayerSpec::dense(5, Activation::Relu),
            LayerSpec::dense(1, Activation::Linear),
        ];
        let net = Network::from_specs(&specs, OutputHead::Point { outputs: 1 }, Shape::features(3))
            .unwrap();
        assert_eq!(
            net.forward(&[1.0, -2.0, 3.0, 0.5, 0.5, 0.5]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn identity_dense() {
        let mut net = Network::from_specs(
            &[LayerSpec::dense(3, Activation::Linear)],
            OutputHead::Point { outputs: 3 },
            Shape::features(3),
        )
        .unwrap();
        for i in 0..3 {
            net.layer_params_mut(0)[i * 3 + i] = 1.0;
        }
        let x = [1.5, -2.0, 7.25, 0.0, 3.0, -1.0];
        assert_eq!(net.forward(&x).unwrap(), x.to_vec());
    }

    fn all_kinds_net(seed: u64) -> Network {
        let specs = [
            LayerSpec::conv1d(4, 3, Activation::Elu),
            LayerSpec::normalization(),
            LayerSpec::max_pool(2),
            LayerSpec::conv1d(3, 2, Activation::Relu),
            LayerSpec::avg_pool(2),
            LayerSpec::flatten(),
            LayerSpec::dense(5, Activation::Exponential),
            LayerSpec::dense(2, Activation::Linear),
        ];
        let mut net = build(
            &specs,
            OutputHead::Point { outputs: 2 },
            Shape::sequence(11, 2),
            seed,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for v in net.params_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
        let stats = net.layer_norm_mut(1).unwrap();
        for c in 0..4 {
            stats.mean[c] = rng.random_range(-0.5..0.5);
            stats.var[c] = rng.random_range(0.5..2.0);
        }
        net
    }

    #[test]
    fn json_round_trip() {
        let net = all_kinds_net(3);
        let json = serde_json::to_string(&net).unwrap();
        let back: Network = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
        let x: Vec<f64> = (0..22).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert!(serde_json::from_str::<Network>(
            &json.replace("\"format_version\":1", "\"format_version\":9")
        )
        .is_err());
    }

    /// Every layer kind and activation: backprop against central differences
    /// of a fixed linear functional of the outputs.
    #[test]
    fn backprop_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..50u64 {
            let mut net = all_kinds_net(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let batch = 3;
            let x: Vec<f64> = (0..batch * 22)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let wts: Vec<f64> = (0..batch * 2)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let objective = |n: &Network, x: &[f64]| -> f64 {
                n.forward(x)
                    .unwrap()
                    .iter()
                    .zip(&wts)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let trace = net.forward_trace(&x, false).unwrap();
            let (grad, dx) = net.backward(&trace, &wts);
            for k in 0..net.params().len() {
                let orig = net.params()[k];
                net.params_mut()[k] = orig + h;
                let fp = objective(&net, &x);
                net.params_mut()[k] = orig - h;
                let fm = objective(&net, &x);
                net.params_mut()[k] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let err = (fd - grad[k]).abs() / fd.abs().max(1e-4);
                // Max-pool and relu kinks are measure-zero but can sit
                // within h of a random draw; allow only for tiny gradients.
                assert!(
                    err < 1e-4 || (fd - grad[k]).abs() < 1e-7,
                    "seed {seed} param {k}: {} vs {fd}",
                    grad[k]
                );
            }
            for k in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (objective(&net, &xp) - objective(&net, &xm)) / (2.0 * h);
                let err = (fd - dx[k]).abs() / fd.abs().max(1e-4);
                assert!(
                    err < 1e-4 || (fd - dx[k]).abs() < 1e-7,
                    "seed {seed} input {k}: {} vs {fd}",
                    dx[k]
                );
            }
        }
    }

    #[test]
    fn normalization_statistics_accumulate() {
        let mut net = build(
            &[LayerSpec::normalization()],
            OutputHead::Point { outputs: 2 },
            Shape::features(2),
            0,
        )
        .unwrap();
        net.forward_trace(&[1.0, 10.0, 3.0, 30.0], true).unwrap();
        net.forward_trace(&[5.0, 10.0, 5.0, 10.0], true).unwrap();
        let stats = net.layers()[0].norm.clone().unwrap();
        assert_eq!(stats.batches, 2);
        assert_eq!(stats.mean, vec![3.5, 15.0]);
        assert_eq!(stats.var, vec![0.5, 50.0]);
    }
}
