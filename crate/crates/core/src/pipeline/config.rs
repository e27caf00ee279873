use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Variable;
use crate::dist::Family;
use crate::nn::{Activation, LayerSpec, Loss, OptimizerConfig};
use crate::stats::Feature;
use crate::{Error, Result};

use super::window::SliceConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spatial {
    /// Separate parameters per station.
    Local,
    /// One parameter set shared by all stations.
    Regional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    PerLeadTime,
    /// Leads below 24 h and from 24 h on are pooled separately.
    HalfDayPooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Training days preceding each validation day (`ℓ_tp`).
    pub train_days: u32,
    pub spatial: Spatial,
}

/// A network architecture with its inputs and optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Hidden layers; the output layer is added from the head.
    pub hidden: Vec<LayerSpec>,
    pub features: Vec<Feature>,
    pub optimizer: OptimizerConfig,
    /// Loss of point forecasters; distributional networks use the CRPS of
    /// their family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<Loss>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1dConfig {
    #[serde(flatten)]
    pub net: NetConfig,
    pub slices: SliceConfig,
}

/// Every hyperparameter of the calibration workflows for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variable: Variable,
    pub window: WindowConfig,
    /// Architecture shared by MLP-S and MLPex; `features` are the MLP-S
    /// inputs, MLPex appends the two auxiliary forecasts.
    pub mlp: NetConfig,
    pub aux_mlp: NetConfig,
    pub aux_c1d: C1dConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Emos,
    MlpS,
    Mlpex,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Emos => "emos",
            MethodKind::MlpS => "mlps",
            MethodKind::Mlpex => "mlpex",
        }
    }

    /// Lead-time pooling the method trains with.
    pub fn pooling(self) -> Pooling {
        match self {
            MethodKind::Emos => Pooling::PerLeadTime,
            _ => Pooling::HalfDayPooled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub family: Family,
}

impl MethodSpec {
    pub fn new(kind: MethodKind, family: Family) -> Self {
        MethodSpec { kind, family }
    }

    /// Label such as `emos-tn` or `mlpex-cn0`.
    pub fn name(&self) -> String {
        format!("{}-{}", self.kind.as_str(), self.family.as_str())
    }

    pub fn parse(name: &str) -> Result<Self> {
        let (k, f) = name.split_once('-').ok_or_else(|| {
            Error::Config(format!(
                "method '{name}' is not of the form <kind>-<family>"
            ))
        })?;
        let kind = match k {
            "emos" => MethodKind::Emos,
            "mlps" | "mlp-s" | "mlp_s" => MethodKind::MlpS,
            "mlpex" => MethodKind::Mlpex,
            other => return Err(Error::Config(format!("unknown method kind '{other}'"))),
        };
        Ok(MethodSpec {
            kind,
            family: f.parse()?,
        })
    }

    /// Rejects families the variable or method does not support.
    pub fn validate_for(&self, variable: Variable) -> Result<()> {
        let ok = match (variable, self.family) {
            (Variable::WindSpeed, Family::Tn | Family::Ln) => true,
            (Variable::Ghi, Family::Cn0) => true,
            (Variable::Ghi, Family::Cl0) => self.kind == MethodKind::Emos,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} is not available for {}",
                self.name(),
                variable.as_str()
            )))
        }
    }
}

fn optimizer(batch_size: usize, schedule: Vec<(usize, f64)>) -> OptimizerConfig {
    OptimizerConfig {
        initial_lr: 0.01,
        schedule,
        batch_size,
        max_epochs: 100,
        patience: 10,
        val_fraction: 0.2,
        seed: 0,
        restore_best: false,
    }
}

fn halving() -> Vec<(usize, f64)> {
    [8, 28, 48, 68].iter().map(|&e| (e, 0.5)).collect()
}

fn decay() -> Vec<(usize, f64)> {
    (3..=59).map(|e| (e, 0.97)).collect()
}

impl PipelineConfig {
    /// Hyperparameters of the wind-speed study.
    pub fn wind_paper() -> Self {
        use Activation::{Elu, Relu};
        PipelineConfig {
            variable: Variable::WindSpeed,
            window: WindowConfig {
                train_days: 51,
                spatial: Spatial::Local,
            },
            mlp: NetConfig {
                hidden: vec![LayerSpec::dense(28, Elu)],
                features: vec![Feature::Ctrl, Feature::EnsMean, Feature::Std],
                optimizer: optimizer(1024, halving()),
                loss: None,
            },
            aux_mlp: NetConfig {
                hidden: vec![LayerSpec::dense(5, Relu), LayerSpec::dense(15, Relu)],
                features: vec![Feature::Mean, Feature::Std],
                optimizer: optimizer(1024, decay()),
                loss: Some(Loss::Mae),
            },
            aux_c1d: C1dConfig {
                net: NetConfig {
                    hidden: vec![
                        LayerSpec::conv1d(24, 3, Relu),
                        LayerSpec::max_pool(2),
                        LayerSpec::flatten(),
                        LayerSpec::dense(25, Relu),
                    ],
                    features: vec![Feature::Ctrl, Feature::EnsMean, Feature::Std],
                    optimizer: optimizer(512, decay()),
                    loss: Some(Loss::Mae),
                },
                slices: SliceConfig {
                    window_len: 16,
                    shift: 4,
                },
            },
        }
    }

    /// Hyperparameters of the irradiance study.
    pub fn ghi_paper() -> Self {
        use Activation::{Exponential, Relu};
        PipelineConfig {
            variable: Variable::Ghi,
            window: WindowConfig {
                train_days: 31,
                spatial: Spatial::Regional,
            },
            mlp: NetConfig {
                hidden: vec![LayerSpec::dense(35, Exponential)],
                features: vec![
                    Feature::Ctrl,
                    Feature::EnsMean,
                    Feature::Std,
                    Feature::LeadSlot,
                    Feature::P0,
                ],
                optimizer: optimizer(1024, halving()),
                loss: None,
            },
            aux_mlp: NetConfig {
                hidden: vec![LayerSpec::dense(32, Relu), LayerSpec::normalization()],
                features: vec![
                    Feature::Ctrl,
                    Feature::EnsMean,
                    Feature::Std,
                    Feature::LeadSlot,
                ],
                optimizer: optimizer(1024, decay()),
                loss: Some(Loss::Mae),
            },
            aux_c1d: C1dConfig {
                net: NetConfig {
                    hidden: vec![
                        LayerSpec::conv1d(35, 5, Relu),
                        LayerSpec::avg_pool(2),
                        LayerSpec::conv1d(16, 2, Relu),
                        LayerSpec::flatten(),
                        LayerSpec::dense(30, Relu),
                    ],
                    features: vec![Feature::Mean, Feature::Std],
                    optimizer: optimizer(512, decay()),
                    loss: Some(Loss::Mae),
                },
                slices: SliceConfig {
                    window_len: 12,
                    shift: 1,
                },
            },
        }
    }

    pub fn paper(variable: Variable) -> Self {
        match variable {
            Variable::WindSpeed => Self::wind_paper(),
            Variable::Ghi => Self::ghi_paper(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.train_days == 0 {
            return Err(Error::Config(
                "training window must span at least one day".into(),
            ));
        }
        for (name, net) in [
            ("mlp", &self.mlp),
            ("aux_mlp", &self.aux_mlp),
            ("aux_c1d", &self.aux_c1d.net),
        ] {
            net.optimizer
                .validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            if net.features.is_empty() {
                return Err(Error::Config(format!("{name}: no input features")));
            }
        }
        for (name, net) in [("aux_mlp", &self.aux_mlp), ("aux_c1d", &self.aux_c1d.net)] {
            if !matches!(net.loss, Some(Loss::Mae | Loss::Mse)) {
                return Err(Error::Config(format!(
                    "{name}: point forecaster needs an mae or mse loss"
                )));
            }
        }
        self.aux_c1d.slices.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [PipelineConfig::wind_paper(), PipelineConfig::ghi_paper()] {
            cfg.validate().unwrap();
            let json = serde_json::to_string_pretty(&cfg).unwrap();
            let back: PipelineConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn wind_schedules() {
        let w = PipelineConfig::wind_paper();
        assert_eq!(w.mlp.optimizer.lr_at(68), 0.01 / 16.0);
        assert_eq!(w.aux_mlp.optimizer.schedule.len(), 57);
        assert_eq!(w.aux_mlp.optimizer.schedule.first(), Some(&(3, 0.97)));
        assert_eq!(w.aux_mlp.optimizer.schedule.last(), Some(&(59, 0.97)));
    }

    #[test]
    fn method_names() {
        let m = MethodSpec::parse("mlpex-tn").unwrap();
        assert_eq!(m, MethodSpec::new(MethodKind::Mlpex, Family::Tn));
        assert_eq!(m.name(), "mlpex-tn");
        assert!(MethodSpec::parse("mlps-cl0")
            .unwrap()
            .validate_for(Variable::Ghi)
            .is_err());
        assert!(MethodSpec::parse("emos-cl0")
            .unwrap()
            .validate_for(Variable::Ghi)
            .is_ok());
        assert!(MethodSpec::parse("emos-cn0")
            .unwrap()
            .validate_for(Variable::WindSpeed)
            .is_err());
        assert!(MethodSpec::parse("nope").is_err());
    }
}
