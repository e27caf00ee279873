//! Networks wrapped with input standardization and target scaling.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dist::{Family, LogNormalMV, PredictiveDistribution};
use crate::nn::{
    build, train, Activation, LayerSpec, Loss, Network, OptimizerConfig, OutputHead, Shape,
};
use crate::{Error, Result};

use super::window::disjoint_starts;

/// Shrinks the initial output-layer weights so the first predictions sit at
/// the bias values.
const OUTPUT_INIT_SHRINK: f64 = 0.1;

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-channel standardization of `rows`, each holding `width` values
/// grouped as time steps of `channels`.
fn fit_standardizer(rows: &[f64], channels: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; channels];
    let mut sd = vec![1.0; channels];
    for c in 0..channels {
        let (m, s) = mean_sd(rows.iter().skip(c).step_by(channels).copied());
        mean[c] = m;
        sd[c] = if s > 1e-12 { s } else { 1.0 };
    }
    (mean, sd)
}

fn standardize(rows: &[f64], mean: &[f64], sd: &[f64]) -> Vec<f64> {
    let c = mean.len();
    rows.iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % c]) / sd[i % c])
        .collect()
}

fn positive_scale(mean: f64, sd: f64) -> f64 {
    if sd > 1e-9 * (1.0 + mean.abs()) {
        sd
    } else {
        mean.abs().max(1.0)
    }
}

fn check_rows(rows: &[f64], width: usize, targets: &[f64], t_width: usize) -> Result<usize> {
    if width == 0 || rows.len() % width != 0 || targets.len() * width != rows.len() * t_width {
        return Err(Error::Validation(format!(
            "{} input values of width {width} do not pair with {} targets of width {t_width}",
            rows.len(),
            targets.len()
        )));
    }
    let n = rows.len() / width;
    if n == 0 {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    Ok(n)
}

fn output_layer(width: usize) -> LayerSpec {
    LayerSpec::dense(width, Activation::Linear)
}

fn set_output_init(net: &mut Network, bias: &[f64]) {
    let last = net.layers().len() - 1;
    let n_w = net.layers()[last].n_weights();
    let p = net.layer_params_mut(last);
    p[..n_w].iter_mut().for_each(|w| *w *= OUTPUT_INIT_SHRINK);
    p[n_w..].copy_from_slice(bias);
}

/// A distributional network: standardized inputs, targets divided by a
/// positive scale and the family's output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledNet {
    pub features: Vec<String>,
    pub family: Family,
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    pub target_scale: f64,
    pub epochs: usize,
    pub network: Network,
}

fn head_for(family: Family) -> Result<OutputHead> {
    match family {
        Family::Tn => Ok(OutputHead::TnExpExp),
        Family::Cn0 => Ok(OutputHead::Cn0CubeExp),
        Family::Ln => Ok(OutputHead::LnMoments),
        Family::Cl0 => Err(Error::Config(
            "no network head reads a censored logistic law".into(),
        )),
    }
}

impl ScaledNet {
    /// Trains on `rows` (one feature vector per target) with the CRPS of
    /// `family`.
    pub fn fit(
        features: Vec<String>,
        rows: &[f64],
        targets: &[f64],
        hidden: &[LayerSpec],
        opt: &OptimizerConfig,
        family: Family,
        seed: u64,
    ) -> Result<Self> {
        let width = features.len();
        check_rows(rows, width, targets, 1)?;
        let head = head_for(family)?;
        let loss = head.crps_loss().expect("distributional head");
        let (input_mean, input_sd) = fit_standardizer(rows, width);
        let x = standardize(rows, &input_mean, &input_sd);
        let (t_mean, t_sd) = mean_sd(targets.iter().copied());
        let target_scale = positive_scale(t_mean, t_sd);
        let y: Vec<f64> = targets.iter().map(|t| t / target_scale).collect();
        let (m0, s0) = (t_mean / target_scale, (t_sd / target_scale).max(0.05));

        let mut specs = hidden.to_vec();
        specs.push(output_layer(2));
        let mut net = build(&specs, head, Shape::features(width), seed)?;
        let bias = match family {
            Family::Tn => [m0.exp(), s0.exp()],
            Family::Cn0 => [m0.powi(3), s0.exp()],
            _ => [m0.max(1e-3), s0 * s0],
        };
        set_output_init(&mut net, &bias);
        let opt = OptimizerConfig {
            seed,
            ..opt.clone()
        };
        let (network, history) = train(&net, &x, &y, &opt, loss)?;
        Ok(ScaledNet {
            features,
            family,
            input_mean,
            input_sd,
            target_scale,
            epochs: history.train_loss.len(),
            network,
        })
    }

    pub fn predict(&self, rows: &[f64]) -> Result<Vec<PredictiveDistribution>> {
        let x = standardize(rows, &self.input_mean, &self.input_sd);
        let dists = self
            .network
            .predict_distributions(&x)?
            .expect("distributional head");
        let s = self.target_scale;
        dists
            .into_iter()
            .map(|d| match d {
                PredictiveDistribution::Ln(ln) => Ok(PredictiveDistribution::Ln(
                    LogNormalMV::from_moments(ln.mean * s, ln.variance * s * s)?,
                )),
                other => {
                    let [p1, p2] = other.params();
                    PredictiveDistribution::from_params(other.family(), p1 * s, p2 * s)
                }
            })
            .collect()
    }
}

/// A point forecaster, either per case (`seq_len = 1`) or
/// sequence-to-sequence over slices of `seq_len` time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNet {
    pub features: Vec<String>,
    pub seq_len: usize,
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    pub target_mean: f64,
    pub target_sd: f64,
    pub epochs: usize,
    pub network: Network,
}

/// C1Daux: a point forecaster over sequences.
pub type SequenceNet = PointNet;

impl PointNet {
    /// `rows` holds `seq_len × features` values per sample and `targets`
    /// `seq_len` values per sample.
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        features: Vec<String>,
        seq_len: usize,
        rows: &[f64],
        targets: &[f64],
        hidden: &[LayerSpec],
        opt: &OptimizerConfig,
        loss: Loss,
        seed: u64,
    ) -> Result<Self> {
        let channels = features.len();
        check_rows(rows, seq_len * channels, targets, seq_len)?;
        if !matches!(loss, Loss::Mae | Loss::Mse) {
            return Err(Error::Config(format!(
                "point forecaster cannot use {loss:?}"
            )));
        }
        let (input_mean, input_sd) = fit_standardizer(rows, channels);
        let x = standardize(rows, &input_mean, &input_sd);
        let (target_mean, sd) = mean_sd(targets.iter().copied());
        let target_sd = positive_scale(target_mean, sd);
        let y: Vec<f64> = targets
            .iter()
            .map(|t| (t - target_mean) / target_sd)
            .collect();

        let mut specs = hidden.to_vec();
        specs.push(output_layer(seq_len));
        let input = if seq_len == 1 {
            Shape::features(channels)
        } else {
            Shape::sequence(seq_len, channels)
        };
        let mut net = build(&specs, OutputHead::Point { outputs: seq_len }, input, seed)?;
        set_output_init(&mut net, &vec![0.0; seq_len]);
        let opt = OptimizerConfig {
            seed,
            ..opt.clone()
        };
        let (network, history) = train(&net, &x, &y, &opt, loss)?;
        Ok(PointNet {
            features,
            seq_len,
            input_mean,
            input_sd,
            target_mean,
            target_sd,
            epochs: history.train_loss.len(),
            network,
        })
    }

    /// One value per target position of every sample.
    pub fn predict(&self, rows: &[f64]) -> Result<Vec<f64>> {
        let x = standardize(rows, &self.input_mean, &self.input_sd);
        let out = self.network.forward(&x)?;
        Ok(out
            .into_iter()
            .map(|o| self.target_mean + self.target_sd * o)
            .collect())
    }

    /// Predicts every step of a series of feature rows through disjoint
    /// slices; steps covered twice keep the earlier slice's value.
    pub fn predict_series(&self, series: &[f64]) -> Result<Vec<f64>> {
        let c = self.features.len();
        let n = series.len() / c;
        let starts = disjoint_starts(n, self.seq_len);
        if starts.is_empty() {
            return Err(Error::InsufficientData(format!(
                "series of {n} steps is shorter than the slice length {}",
                self.seq_len
            )));
        }
        let mut rows = Vec::with_capacity(starts.len() * self.seq_len * c);
        for &s in &starts {
            rows.extend_from_slice(&series[s * c..(s + self.seq_len) * c]);
        }
        let pred = self.predict(&rows)?;
        let mut out = vec![f64::NAN; n];
        for (k, &s) in starts.iter().enumerate() {
            for j in 0..self.seq_len {
                if out[s + j].is_nan() {
                    out[s + j] = pred[k * self.seq_len + j];
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opt(max_epochs: usize) -> OptimizerConfig {
        OptimizerConfig {
            initial_lr: 0.01,
            schedule: vec![],
            batch_size: 128,
            max_epochs,
            patience: 10,
            val_fraction: 0.2,
            seed: 0,
            restore_best: false,
        }
    }

    #[test]
    fn constant_target_point_forecast() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..10.0)).collect();
        let targets = vec![4.2; 500];
        let hidden = [
            LayerSpec::dense(5, Activation::Relu),
            LayerSpec::dense(15, Activation::Relu),
        ];
        let net = PointNet::fit(
            vec!["a".into(), "b".into()],
            1,
            &rows,
            &targets,
            &hidden,
            &opt(50),
            Loss::Mae,
            3,
        )
        .unwrap();
        for p in net.predict(&rows[..20]).unwrap() {
            assert!((p - 4.2).abs() < 1e-2, "{p}");
        }
    }

    #[test]
    fn scaled_tn_net_tracks_location() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 3000;
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..n {
            let m: f64 = rng.random_range(2.0..12.0);
            rows.push(m);
            let d = PredictiveDistribution::Tn(crate::dist::TruncNormal::new(m, 1.0));
            targets.push(d.sample(&mut rng));
        }
        let net = ScaledNet::fit(
            vec!["m".into()],
            &rows,
            &targets,
            &[LayerSpec::dense(16, Activation::Elu)],
            &opt(60),
            Family::Tn,
            7,
        )
        .unwrap();
        let d = net.predict(&[4.0, 10.0]).unwrap();
        assert!((d[0].params()[0] - 4.0).abs() < 0.4, "{:?}", d[0]);
        assert!((d[1].params()[0] - 10.0).abs() < 0.4, "{:?}", d[1]);
        assert!((d[1].params()[1] - 1.0).abs() < 0.3, "{:?}", d[1]);
    }

    #[test]
    fn series_prediction_covers_every_step() {
        let rows: Vec<f64> = (0..40 * 8).map(|i| (i as f64 * 0.1).sin()).collect();
        let targets: Vec<f64> = (0..40 * 4).map(|i| (i as f64 * 0.2).sin()).collect();
        let hidden = [
            LayerSpec::conv1d(3, 2, Activation::Relu),
            LayerSpec::flatten(),
        ];
        let net = PointNet::fit(
            vec!["a".into(), "b".into()],
            4,
            &rows,
            &targets,
            &hidden,
            &opt(3),
            Loss::Mae,
            1,
        )
        .unwrap();
        let series: Vec<f64> = (0..10 * 2).map(|i| i as f64 * 0.05).collect();
        let pred = net.predict_series(&series).unwrap();
        assert_eq!(pred.len(), 10);
        assert!(pred.iter().all(|p| p.is_finite()));
        // Steps 6 and 7 come from the second slice, not the tail slice.
        let second = net.predict(&series[8..16]).unwrap();
        assert_eq!(&pred[4..8], &second[..]);
    }
}
