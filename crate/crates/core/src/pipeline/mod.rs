//! Rolling-window calibration workflows: EMOS per lead time, MLP-S and the
//! two-step MLPex with its auxiliary point forecasters.

mod config;
mod method;
mod model;
mod window;

pub use config::{
    C1dConfig, MethodKind, MethodSpec, NetConfig, PipelineConfig, Pooling, Spatial, WindowConfig,
};
pub use method::{
    aux_forecasts, emos_samples_by_pool, fit_emos_pool, predict, predict_run, train_aux_nets,
    train_c1daux, train_emos, train_method, train_mlp_s, train_mlpaux, train_mlpex,
    train_mlpex_with, train_pooled_nets, Aux, AuxNets, CalibratedForecast, EmosArtifact,
    EmosPoolFit, MethodArtifact, MlpArtifact, MlpExArtifact, AUX_FEATURES,
};
pub use model::{PointNet, ScaledNet, SequenceNet};
pub use window::{
    disjoint_starts, make_disjoint_slices, make_overlapping_slices, pool_name, pool_of,
    rolling_window, window_cases, Scope, SliceConfig,
};

/// Derives an independent seed for a named sub-task.
pub fn derive_seed(base: u64, label: &str, parts: &[i64]) -> u64 {
    let mut h = mix(base ^ 0x5EED);
    for b in label.bytes() {
        h = mix(h ^ b as u64);
    }
    for &p in parts {
        h = mix(h ^ p as u64);
    }
    h
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
