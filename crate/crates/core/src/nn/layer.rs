//! Layer definitions and their batched forward/backward kernels.
//!
//! Activations of one sample are stored as a `len × channels` matrix in
//! row-major order; a batch is the samples laid out back to back.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// Unused when std is linked elsewhere in the build graph, which supplies
// inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Variance offset of the normalization layer.
pub const NORM_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub len: usize,
    pub channels: usize,
}

impl Shape {
    pub fn features(n: usize) -> Self {
        Shape {
            len: 1,
            channels: n,
        }
    }

    pub fn sequence(len: usize, channels: usize) -> Self {
        Shape { len, channels }
    }

    pub fn size(&self) -> usize {
        self.len * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Elu,
    Relu,
    Exponential,
    #[default]
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
            Activation::Exponential => z.exp(),
            Activation::Linear => z,
        }
    }

    /// Derivative at pre-activation `z`, given `y = apply(z)`.
    #[inline]
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Exponential => y,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerKind {
    Dense { units: usize },
    Conv1d { filters: usize, kernel_size: usize },
    Pool1d { mode: PoolMode, pool_size: usize },
    Flatten,
    Normalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default)]
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Dense { units },
            activation,
        }
    }

    pub fn conv1d(filters: usize, kernel_size: usize, activation: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Conv1d {
                filters,
                kernel_size,
            },
            activation,
        }
    }

    pub fn max_pool(pool_size: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Pool1d {
                mode: PoolMode::Max,
                pool_size,
            },
            activation: Activation::Linear,
        }
    }

    pub fn avg_pool(pool_size: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Pool1d {
                mode: PoolMode::Avg,
                pool_size,
            },
            activation: Activation::Linear,
        }
    }

    pub fn flatten() -> Self {
        LayerSpec {
            kind: LayerKind::Flatten,
            activation: Activation::Linear,
        }
    }

    pub fn normalization() -> Self {
        LayerSpec {
            kind: LayerKind::Normalization,
            activation: Activation::Linear,
        }
    }

    /// Output shape for `input`, or a description of why it does not chain.
    pub fn output_shape(&self, input: Shape) -> core::result::Result<Shape, alloc::string::String> {
        if input.size() == 0 {
            return Err(format!(
                "empty input shape {}×{}",
                input.len, input.channels
            ));
        }
        match self.kind {
            LayerKind::Dense { units } => {
                if units == 0 {
                    return Err("dense layer with zero units".into());
                }
                Ok(Shape {
                    len: input.len,
                    channels: units,
                })
            }
            LayerKind::Conv1d {
                filters,
                kernel_size,
            } => {
                if filters == 0 || kernel_size == 0 {
                    return Err("conv1d needs positive filters and kernel size".into());
                }
                if kernel_size > input.len {
                    return Err(format!(
                        "kernel size {kernel_size} exceeds sequence length {}",
                        input.len
                    ));
                }
                Ok(Shape {
                    len: input.len - kernel_size + 1,
                    channels: filters,
                })
            }
            LayerKind::Pool1d { pool_size, .. } => {
                if pool_size == 0 {
                    return Err("pool size must be positive".into());
                }
                if pool_size > input.len {
                    return Err(format!(
                        "pool size {pool_size} exceeds sequence length {}",
                        input.len
                    ));
                }
                Ok(Shape {
                    len: (input.len - pool_size) / pool_size + 1,
                    channels: input.channels,
                })
            }
            LayerKind::Flatten => Ok(Shape::features(input.size())),
            LayerKind::Normalization => Ok(input),
        }
    }

    /// Trainable parameter count for the given input shape.
    pub fn n_params(&self, input: Shape) -> usize {
        match self.kind {
            LayerKind::Dense { units } => input.channels * units + units,
            LayerKind::Conv1d {
                filters,
                kernel_size,
            } => filters * kernel_size * input.channels + filters,
            LayerKind::Pool1d { .. } | LayerKind::Flatten => 0,
            LayerKind::Normalization => 2 * input.channels,
        }
    }
}

/// Non-trainable statistics of a normalization layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Batches averaged into the statistics so far.
    pub batches: u64,
}

impl NormStats {
    pub fn new(channels: usize) -> Self {
        NormStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            batches: 0,
        }
    }

    /// Folds the per-channel statistics of `x` into the cumulative average.
    pub fn accumulate(&mut self, x: &[f64], channels: usize) {
        let rows = x.len() / channels;
        if rows == 0 {
            return;
        }
        let k = self.batches as f64;
        for c in 0..channels {
            let mean = x.iter().skip(c).step_by(channels).sum::<f64>() / rows as f64;
            let var = x
                .iter()
                .skip(c)
                .step_by(channels)
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / rows as f64;
            self.mean[c] = (self.mean[c] * k + mean) / (k + 1.0);
            self.var[c] = (self.var[c] * k + var) / (k + 1.0);
        }
        self.batches += 1;
    }
}

/// A layer with its resolved shapes and location in the flat parameter
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
    pub offset: usize,
    pub n_params: usize,
    pub norm: Option<NormStats>,
}

/// Per-layer values kept from the forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct LayerCache {
    /// Layer output before the activation.
    pub pre: Vec<f64>,
    /// Source index of every max-pool output.
    pub argmax: Vec<usize>,
}

impl Layer {
    pub fn new(spec: LayerSpec, input: Shape, offset: usize, index: usize) -> Result<Self> {
        let output = spec.output_shape(input).map_err(|message| Error::Shape {
            layer: index,
            message,
        })?;
        let norm =
            matches!(spec.kind, LayerKind::Normalization).then(|| NormStats::new(input.channels));
        Ok(Layer {
            spec,
            input,
            output,
            offset,
            n_params: spec.n_params(input),
            norm,
        })
    }

    /// Glorot-uniform fan-in/fan-out of the weight tensor, if any.
    pub fn fans(&self) -> Option<(usize, usize)> {
        match self.spec.kind {
            LayerKind::Dense { units } => Some((self.input.channels, units)),
            LayerKind::Conv1d {
                filters,
                kernel_size,
            } => Some((kernel_size * self.input.channels, kernel_size * filters)),
            _ => None,
        }
    }

    /// Number of leading entries of this layer's parameters that are weights
    /// (the rest are biases, or the shift of a normalization layer).
    pub fn n_weights(&self) -> usize {
        match self.spec.kind {
            LayerKind::Dense { units } => self.input.channels * units,
            LayerKind::Conv1d {
                filters,
                kernel_size,
            } => filters * kernel_size * self.input.channels,
            LayerKind::Normalization => self.input.channels,
            _ => 0,
        }
    }

    /// Computes the layer output (after activation) for a batch of `batch`
    /// samples.
    pub fn forward(&self, p: &[f64], x: &[f64], batch: usize, cache: &mut LayerCache) -> Vec<f64> {
        let w = &p[self.offset..self.offset + self.n_params];
        let in_sz = self.input.size();
        let out_sz = self.output.size();
        let mut pre = vec![0.0; batch * out_sz];
        cache.argmax.clear();
        match self.spec.kind {
            LayerKind::Dense { units } => {
                let cin = self.input.channels;
                let (wm, bias) = w.split_at(cin * units);
                for (xr, zr) in x.chunks_exact(cin).zip(pre.chunks_exact_mut(units)) {
                    zr.copy_from_slice(bias);
                    for (i, &xi) in xr.iter().enumerate() {
                        if xi != 0.0 {
                            let row = &wm[i * units..(i + 1) * units];
                            for (z, &wv) in zr.iter_mut().zip(row) {
                                *z += xi * wv;
                            }
                        }
                    }
                }
            }
            LayerKind::Conv1d {
                filters,
                kernel_size,
            } => {
                let cin = self.input.channels;
                let span = kernel_size * cin;
                let (wm, bias) = w.split_at(filters * span);
                let wt = transpose(wm, filters, span);
                for b in 0..batch {
                    let xs = &x[b * in_sz..(b + 1) * in_sz];
                    let zs = &mut pre[b * out_sz..(b + 1) * out_sz];
                    for t in 0..self.output.len {
                        // The window over all input channels is contiguous.
                        let win = &xs[t * cin..t * cin + span];
                        let zt = &mut zs[t * filters..(t + 1) * filters];
                        zt.copy_from_slice(bias);
                        for (j, &xj) in win.iter().enumerate() {
                            for (z, &wv) in zt.iter_mut().zip(&wt[j * filters..(j + 1) * filters]) {
                                *z += xj * wv;
                            }
                        }
                    }
                }
            }
            LayerKind::Pool1d { mode, pool_size } => {
                let c = self.input.channels;
                if mode == PoolMode::Max {
                    cache.argmax.resize(batch * out_sz, 0);
                }
                for b in 0..batch {
                    for t in 0..self.output.len {
                        for ch in 0..c {
                            let o = b * out_sz + t * c + ch;
                            let base = b * in_sz + t * pool_size * c + ch;
                            match mode {
                                PoolMode::Max => {
                                    let mut best = base;
                                    for j in 1..pool_size {
                                        let idx = base + j * c;
                                        if x[idx] > x[best] {
                                            best = idx;
                                        }
                                    }
                                    pre[o] = x[best];
                                    cache.argmax[o] = best;
                                }
                                PoolMode::Avg => {
                                    pre[o] = (0..pool_size).map(|j| x[base + j * c]).sum::<f64>()
                                        / pool_size as f64;
                                }
                            }
                        }
                    }
                }
            }
            LayerKind::Flatten => pre.copy_from_slice(x),
            LayerKind::Normalization => {
                let c = self.input.channels;
                let stats = self
                    .norm
                    .as_ref()
                    .expect("normalization layer has statistics");
                let (gamma, beta) = w.split_at(c);
                for (xr, zr) in x.chunks_exact(c).zip(pre.chunks_exact_mut(c)) {
                    for ch in 0..c {
                        let xhat = (xr[ch] - stats.mean[ch]) / (stats.var[ch] + NORM_EPS).sqrt();
                        zr[ch] = gamma[ch] * xhat + beta[ch];
                    }
                }
            }
        }
        let act = self.spec.activation;
        let out = if act == Activation::Linear {
            pre.clone()
        } else {
            pre.iter().map(|&z| act.apply(z)).collect()
        };
        cache.pre = pre;
        out
    }

    /// Backpropagates `dy` (gradient wrt this layer's output) and returns the
    /// gradient wrt its input; parameter gradients are accumulated into
    /// `grad`.
    pub fn backward(
        &self,
        p: &[f64],
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        batch: usize,
        cache: &LayerCache,
        grad: &mut [f64],
    ) -> Vec<f64> {
        self.backward_impl(p, x, y, dy, batch, cache, grad, true)
    }

    /// As [`Layer::backward`]; with `need_dx == false` the returned input
    /// gradient is all zeros.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_impl(
        &self,
        p: &[f64],
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        batch: usize,
        cache: &LayerCache,
        grad: &mut [f64],
        need_dx: bool,
    ) -> Vec<f64> {
        let act = self.spec.activation;
        let dz: Vec<f64> = if act == Activation::Linear {
            dy.to_vec()
        } else {
            dy.iter()
                .zip(&cache.pre)
                .zip(y)
                .map(|((&d, &z), &yv)| d * act.derivative(z, yv))
                .collect()
        };
        let w = &p[self.offset..self.offset + self.n_params];
        let g = &mut grad[self.offset..self.offset + self.n_params];
        let in_sz = self.input.size();
        let out_sz = self.output.size();
        let mut dx = vec![0.0; batch * in_sz];
        match self.spec.kind {
            LayerKind::Dense { units } => {
                let cin = self.input.channels;
                let (wm, _) = w.split_at(cin * units);
                let (gw, gb) = g.split_at_mut(cin * units);
                for ((xr, dzr), dxr) in x
                    .chunks_exact(cin)
                    .zip(dz.chunks_exact(units))
                    .zip(dx.chunks_exact_mut(cin))
                {
                    for (b, &d) in gb.iter_mut().zip(dzr) {
                        *b += d;
                    }
                    for i in 0..cin {
                        let xi = xr[i];
                        if xi != 0.0 {
                            for (gv, &d) in gw[i * units..(i + 1) * units].iter_mut().zip(dzr) {
                                *gv += xi * d;
                            }
                        }
                        if need_dx {
                            dxr[i] = dot(&wm[i * units..(i + 1) * units], dzr);
                        }
                    }
                }
            }
            LayerKind::Conv1d {
                filters,
                kernel_size,
            } => {
                let cin = self.input.channels;
                let span = kernel_size * cin;
                let (wm, _) = w.split_at(filters * span);
                let (gw, gb) = g.split_at_mut(filters * span);
                // Weight gradient accumulated as [span][filters].
                let mut gwt = vec![0.0; filters * span];
                for b in 0..batch {
                    let xs = &x[b * in_sz..(b + 1) * in_sz];
                    let dxs = &mut dx[b * in_sz..(b + 1) * in_sz];
                    let dzs = &dz[b * out_sz..(b + 1) * out_sz];
                    for t in 0..self.output.len {
                        let win = &xs[t * cin..t * cin + span];
                        let dzt = &dzs[t * filters..(t + 1) * filters];
                        for (gv, &d) in gb.iter_mut().zip(dzt) {
                            *gv += d;
                        }
                        for (j, &xj) in win.iter().enumerate() {
                            if xj != 0.0 {
                                for (gv, &d) in
                                    gwt[j * filters..(j + 1) * filters].iter_mut().zip(dzt)
                                {
                                    *gv += xj * d;
                                }
                            }
                        }
                        if need_dx {
                            let dwin = &mut dxs[t * cin..t * cin + span];
                            for (f, &d) in dzt.iter().enumerate() {
                                if d != 0.0 {
                                    for (dv, &wv) in
                                        dwin.iter_mut().zip(&wm[f * span..(f + 1) * span])
                                    {
                                        *dv += d * wv;
                                    }
                                }
                            }
                        }
                    }
                }
                for (j, row) in gwt.chunks_exact(filters).enumerate() {
                    for (f, &v) in row.iter().enumerate() {
                        gw[f * span + j] += v;
                    }
                }
            }
            LayerKind::Pool1d { mode, pool_size } => {
                let c = self.input.channels;
                for b in 0..batch {
                    for t in 0..self.output.len {
                        for ch in 0..c {
                            let o = b * out_sz + t * c + ch;
                            match mode {
                                PoolMode::Max => dx[cache.argmax[o]] += dz[o],
                                PoolMode::Avg => {
                                    let base = b * in_sz + t * pool_size * c + ch;
                                    let share = dz[o] / pool_size as f64;
                                    for j in 0..pool_size {
                                        dx[base + j * c] += share;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerKind::Flatten => dx.copy_from_slice(&dz),
            LayerKind::Normalization => {
                let c = self.input.channels;
                let stats = self
                    .norm
                    .as_ref()
                    .expect("normalization layer has statistics");
                let (gamma, _) = w.split_at(c);
                let (gg, gbeta) = g.split_at_mut(c);
                for ((xr, dzr), dxr) in x
                    .chunks_exact(c)
                    .zip(dz.chunks_exact(c))
                    .zip(dx.chunks_exact_mut(c))
                {
                    for ch in 0..c {
                        let inv = 1.0 / (stats.var[ch] + NORM_EPS).sqrt();
                        let xhat = (xr[ch] - stats.mean[ch]) * inv;
                        gg[ch] += dzr[ch] * xhat;
                        gbeta[ch] += dzr[ch];
                        dxr[ch] = dzr[ch] * gamma[ch] * inv;
                    }
                }
            }
        }
        dx
    }
}

/// Row-major `[rows][cols]` to `[cols][rows]`.
fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

/// Dot product with four partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
