//! LSTM with forget gate, optional diagonal peepholes, and a linear head.
//!
//! Per layer and timestep:
//!
//! ```text
//! i_t = σ(W_xi x_t + W_hi h_{t−1} [+ w_ci ∘ c_{t−1}] + b_i)
//! f_t = σ(W_xf x_t + W_hf h_{t−1} [+ w_cf ∘ c_{t−1}] + b_f)
//! c_t = f_t ∘ c_{t−1} + i_t ∘ tanh(W_xc x_t + W_hc h_{t−1} + b_c)
//! o_t = σ(W_xo x_t + W_ho h_{t−1} [+ w_co ∘ c_t] + b_o)
//! h_t = o_t ∘ tanh(c_t)
//! ```
//!
//! The final hidden state of the last layer feeds a scalar linear head.
//! All parameters live in one flat vector so the optimizer and the
//! finite-difference checker can treat them uniformly.

mod gradcheck;
mod persist;
mod train;

pub use gradcheck::gradient_check;
pub use persist::{load_network, save_network, NETWORK_FORMAT_VERSION};
pub use train::{train, train_with_report, Scaler, TrainConfig, TrainReport};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::alignment::TensorBatch;
use crate::error::{Error, Result};
use crate::rng::RandomSeed;

/// Gate order inside the stacked kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub inputs: usize,
    pub cells: usize,
    pub w_x: usize,
    pub w_h: usize,
    pub bias: usize,
    pub peep: Option<usize>,
}

impl LayerLayout {
    fn len(&self) -> usize {
        let n = self.cells;
        4 * n * self.inputs + 4 * n * n + 4 * n + self.peep.map_or(0, |_| 3 * n)
    }
}

/// Flat parameter vector plus the offsets of every tensor in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub layers: Vec<LayerLayout>,
    pub head_w: usize,
    pub head_b: usize,
    pub data: Vec<f64>,
}

impl LstmParams {
    /// All-zero parameters for the given architecture.
    pub fn zeros(features: usize, cells: &[usize], peepholes: bool) -> Result<Self> {
        if features == 0 || cells.is_empty() || cells.contains(&0) {
            return Err(Error::shape("LSTM needs >= 1 feature and non-empty layers"));
        }
        let mut layers = Vec::with_capacity(cells.len());
        let mut off = 0;
        let mut inputs = features;
        for &n in cells {
            let w_x = off;
            let w_h = w_x + 4 * n * inputs;
            let bias = w_h + 4 * n * n;
            let peep = peepholes.then_some(bias + 4 * n);
            let l = LayerLayout {
                inputs,
                cells: n,
                w_x,
                w_h,
                bias,
                peep,
            };
            off += l.len();
            layers.push(l);
            inputs = n;
        }
        let head_w = off;
        let head_b = head_w + inputs;
        Ok(LstmParams {
            layers,
            head_w,
            head_b,
            data: vec![0.0; head_b + 1],
        })
    }

    /// Glorot-uniform input kernels, orthogonal recurrent kernels, zero
    /// biases except the forget gate (1.0), zero peepholes.
    pub fn init(features: usize, cells: &[usize], peepholes: bool, seed: RandomSeed) -> Result<Self> {
        let mut p = Self::zeros(features, cells, peepholes)?;
        let mut rng = seed.rng();
        for l in p.layers.clone() {
            let n = l.cells;
            let limit = (6.0 / (l.inputs + 4 * n) as f64).sqrt();
            for v in &mut p.data[l.w_x..l.w_x + 4 * n * l.inputs] {
                *v = rng.random_range(-limit..limit);
            }
            let q = orthonormal_columns(4 * n, n, &mut rng);
            p.data[l.w_h..l.w_h + 4 * n * n].copy_from_slice(&q);
            for u in 0..n {
                p.data[l.bias + n + u] = 1.0;
            }
        }
        let last = p.last_cells();
        let limit = (6.0 / (last + 1) as f64).sqrt();
        for v in &mut p.data[p.head_w..p.head_w + last] {
            *v = rng.random_range(-limit..limit);
        }
        Ok(p)
    }

    pub fn features(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn last_cells(&self) -> usize {
        self.layers.last().map_or(0, |l| l.cells)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn peepholes(&self) -> bool {
        self.layers.iter().any(|l| l.peep.is_some())
    }

    pub fn head_weights(&self) -> &[f64] {
        &self.data[self.head_w..self.head_w + self.last_cells()]
    }

    pub fn head_weights_mut(&mut self) -> &mut [f64] {
        let (a, b) = (self.head_w, self.head_w + self.last_cells());
        &mut self.data[a..b]
    }

    pub fn head_bias(&self) -> f64 {
        self.data[self.head_b]
    }

    pub fn set_head_bias(&mut self, v: f64) {
        self.data[self.head_b] = v;
    }

    /// `W_x·` rows of one gate in layer `l`, row-major `cells × inputs`.
    pub fn input_kernel(&self, l: usize, gate: Gate) -> &[f64] {
        let lay = &self.layers[l];
        let sz = lay.cells * lay.inputs;
        let start = lay.w_x + gate as usize * sz;
        &self.data[start..start + sz]
    }

    /// `W_h·` rows of one gate in layer `l`, row-major `cells × cells`.
    pub fn recurrent_kernel(&self, l: usize, gate: Gate) -> &[f64] {
        let lay = &self.layers[l];
        let sz = lay.cells * lay.cells;
        let start = lay.w_h + gate as usize * sz;
        &self.data[start..start + sz]
    }

    pub fn bias(&self, l: usize, gate: Gate) -> &[f64] {
        let lay = &self.layers[l];
        let start = lay.bias + gate as usize * lay.cells;
        &self.data[start..start + lay.cells]
    }

    pub fn bias_mut(&mut self, l: usize, gate: Gate) -> &mut [f64] {
        let lay = self.layers[l];
        let start = lay.bias + gate as usize * lay.cells;
        &mut self.data[start..start + lay.cells]
    }

    /// Peephole vector (`Input`, `Forget` or `Output`), if enabled.
    pub fn peephole(&self, l: usize, gate: Gate) -> Option<&[f64]> {
        let lay = &self.layers[l];
        let slot = match gate {
            Gate::Input => 0,
            Gate::Forget => 1,
            Gate::Output => 2,
            Gate::Cell => return None,
        };
        lay.peep
            .map(|p| &self.data[p + slot * lay.cells..p + (slot + 1) * lay.cells])
    }

    /// Named tensors with shapes, in storage order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let n = l.cells;
            out.push((format!("layer{i}.w_x"), vec![4 * n, l.inputs], l.w_x..l.w_h));
            out.push((format!("layer{i}.w_h"), vec![4 * n, n], l.w_h..l.bias));
            out.push((format!("layer{i}.bias"), vec![4 * n], l.bias..l.bias + 4 * n));
            if let Some(p) = l.peep {
                out.push((format!("layer{i}.peephole"), vec![3, n], p..p + 3 * n));
            }
        }
        out.push(("head.w".into(), vec![self.last_cells()], self.head_w..self.head_b));
        out.push(("head.b".into(), vec![1], self.head_b..self.head_b + 1));
        out
    }
}

fn orthonormal_columns<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    // Modified Gram–Schmidt on Gaussian columns; row-major rows × cols.
    let mut colv: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while colv.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| StandardNormal.sample(rng)).collect();
        for q in &colv {
            let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            colv.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (c, v) in colv.iter().enumerate() {
        for r in 0..rows {
            out[r * cols + c] = v[r];
        }
    }
    out
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate activations of one cell step, kept for backpropagation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GateCache {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// One step of layer `l`: returns `(h_t, c_t, cache)`.
pub fn cell_step(
    params: &LstmParams,
    l: usize,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, GateCache)> {
    let lay = params
        .layers
        .get(l)
        .ok_or_else(|| Error::shape(format!("no layer {l}")))?;
    let n = lay.cells;
    if x.len() != lay.inputs || h_prev.len() != n || c_prev.len() != n {
        return Err(Error::shape(format!(
            "layer {l} expects x:{} h:{n} c:{n}, got x:{} h:{} c:{}",
            lay.inputs,
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut z = vec![0.0; 4 * n];
    preactivation(params, lay, x, h_prev, &mut z);
    let mut cache = GateCache {
        input: vec![0.0; n],
        forget: vec![0.0; n],
        candidate: vec![0.0; n],
        output: vec![0.0; n],
        c_prev: c_prev.to_vec(),
        c: vec![0.0; n],
        tanh_c: vec![0.0; n],
    };
    let mut h = vec![0.0; n];
    activate(
        params,
        lay,
        &z,
        c_prev,
        &mut cache.input,
        &mut cache.forget,
        &mut cache.candidate,
        &mut cache.output,
        &mut cache.c,
        &mut cache.tanh_c,
        &mut h,
    );
    Ok((h, cache.c.clone(), cache))
}

#[inline]
fn preactivation(params: &LstmParams, lay: &LayerLayout, x: &[f64], h_prev: &[f64], z: &mut [f64]) {
    let n = lay.cells;
    let d = lay.inputs;
    let wx = &params.data[lay.w_x..lay.w_x + 4 * n * d];
    let wh = &params.data[lay.w_h..lay.w_h + 4 * n * n];
    let b = &params.data[lay.bias..lay.bias + 4 * n];
    for r in 0..4 * n {
        let mut s = b[r];
        let row = &wx[r * d..(r + 1) * d];
        for (w, xv) in row.iter().zip(x) {
            s += w * xv;
        }
        let row = &wh[r * n..(r + 1) * n];
        for (w, hv) in row.iter().zip(h_prev) {
            s += w * hv;
        }
        z[r] = s;
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn activate(
    params: &LstmParams,
    lay: &LayerLayout,
    z: &[f64],
    c_prev: &[f64],
    gi: &mut [f64],
    gf: &mut [f64],
    gg: &mut [f64],
    go: &mut [f64],
    c: &mut [f64],
    tc: &mut [f64],
    h: &mut [f64],
) {
    let n = lay.cells;
    let peep = lay.peep.map(|p| &params.data[p..p + 3 * n]);
    for u in 0..n {
        let (pi, pf, po) = match peep {
            Some(p) => (p[u], p[n + u], p[2 * n + u]),
            None => (0.0, 0.0, 0.0),
        };
        gi[u] = sigmoid(z[u] + pi * c_prev[u]);
        gf[u] = sigmoid(z[n + u] + pf * c_prev[u]);
        gg[u] = z[2 * n + u].tanh();
        c[u] = gf[u] * c_prev[u] + gi[u] * gg[u];
        go[u] = sigmoid(z[3 * n + u] + po * c[u]);
        tc[u] = c[u].tanh();
        h[u] = go[u] * tc[u];
    }
}

/// Activations of one layer over a whole sequence, `T × n` each.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerTrace {
    pub inputs: Vec<f64>,
    pub gi: Vec<f64>,
    pub gf: Vec<f64>,
    pub gg: Vec<f64>,
    pub go: Vec<f64>,
    pub c: Vec<f64>,
    pub tc: Vec<f64>,
    pub h: Vec<f64>,
    /// Inverted-dropout multipliers applied to `inputs` (empty = none).
    pub mask: Vec<f64>,
}

/// Forward pass of one sequence. `masks[l]` (if non-empty) multiplies the
/// inputs of layer `l` at every timestep.
pub(crate) fn forward_trace(
    params: &LstmParams,
    seq: &[f64],
    timesteps: usize,
    masks: &[Vec<f64>],
) -> (f64, Vec<LayerTrace>) {
    let mut traces: Vec<LayerTrace> = Vec::with_capacity(params.layers.len());
    let mut z = Vec::new();
    for (li, lay) in params.layers.iter().enumerate() {
        let n = lay.cells;
        let d = lay.inputs;
        let mut inputs = match li {
            0 => seq.to_vec(),
            _ => traces[li - 1].h.clone(),
        };
        let mask = masks.get(li).cloned().unwrap_or_default();
        if !mask.is_empty() {
            for t in 0..timesteps {
                for (v, m) in inputs[t * d..(t + 1) * d].iter_mut().zip(&mask) {
                    *v *= m;
                }
            }
        }
        let mut tr = LayerTrace {
            inputs,
            gi: vec![0.0; timesteps * n],
            gf: vec![0.0; timesteps * n],
            gg: vec![0.0; timesteps * n],
            go: vec![0.0; timesteps * n],
            c: vec![0.0; timesteps * n],
            tc: vec![0.0; timesteps * n],
            h: vec![0.0; timesteps * n],
            mask,
        };
        z.resize(4 * n, 0.0);
        let zeros = vec![0.0; n];
        for t in 0..timesteps {
            let (h_prev, c_prev) = if t == 0 {
                (zeros.clone(), zeros.clone())
            } else {
                (
                    tr.h[(t - 1) * n..t * n].to_vec(),
                    tr.c[(t - 1) * n..t * n].to_vec(),
                )
            };
            preactivation(params, lay, &tr.inputs[t * d..(t + 1) * d], &h_prev, &mut z);
            let s = t * n..(t + 1) * n;
            activate(
                params,
                lay,
                &z,
                &c_prev,
                &mut tr.gi[s.clone()],
                &mut tr.gf[s.clone()],
                &mut tr.gg[s.clone()],
                &mut tr.go[s.clone()],
                &mut tr.c[s.clone()],
                &mut tr.tc[s.clone()],
                &mut tr.h[s],
            );
        }
        traces.push(tr);
    }
    let last = traces.last().expect("at least one layer");
    let n = params.last_cells();
    let h_final = &last.h[(timesteps - 1) * n..timesteps * n];
    let y = params.head_bias()
        + params
            .head_weights()
            .iter()
            .zip(h_final)
            .map(|(w, h)| w * h)
            .sum::<f64>();
    (y, traces)
}

/// Backpropagates `dy = ∂L/∂ŷ` through one sequence, accumulating into `grad`.
pub(crate) fn backward_trace(
    params: &LstmParams,
    traces: &[LayerTrace],
    timesteps: usize,
    dy: f64,
    grad: &mut [f64],
) {
    let n_last = params.last_cells();
    let last = traces.last().expect("at least one layer");
    let h_final = &last.h[(timesteps - 1) * n_last..timesteps * n_last];
    for (g, h) in grad[params.head_w..params.head_b].iter_mut().zip(h_final) {
        *g += dy * h;
    }
    grad[params.head_b] += dy;

    // External gradient on each layer's hidden outputs, T × n.
    let mut dh_ext = vec![0.0; timesteps * n_last];
    for (u, w) in params.head_weights().iter().enumerate() {
        dh_ext[(timesteps - 1) * n_last + u] = dy * w;
    }

    for li in (0..params.layers.len()).rev() {
        let lay = params.layers[li];
        let tr = &traces[li];
        let n = lay.cells;
        let d = lay.inputs;
        let mut dx = if li > 0 { vec![0.0; timesteps * d] } else { Vec::new() };
        let mut dh_next = vec![0.0; n];
        let mut dc_next = vec![0.0; n];
        let mut dz = vec![0.0; 4 * n];
        let peep = lay.peep.map(|p| params.data[p..p + 3 * n].to_vec());
        for t in (0..timesteps).rev() {
            let s = t * n;
            let mut dc_prev = vec![0.0; n];
            for u in 0..n {
                let dh = dh_ext[s + u] + dh_next[u];
                let o = tr.go[s + u];
                let i = tr.gi[s + u];
                let f = tr.gf[s + u];
                let g = tr.gg[s + u];
                let tc = tr.tc[s + u];
                let c = tr.c[s + u];
                let c_prev = if t == 0 { 0.0 } else { tr.c[s - n + u] };
                let do_pre = dh * tc * o * (1.0 - o);
                let mut dc = dc_next[u] + dh * o * (1.0 - tc * tc);
                if let Some(p) = &peep {
                    dc += do_pre * p[2 * n + u];
                }
                let di_pre = dc * g * i * (1.0 - i);
                let df_pre = dc * c_prev * f * (1.0 - f);
                let dg_pre = dc * i * (1.0 - g * g);
                dc_prev[u] = dc * f;
                if let (Some(p), Some(off)) = (&peep, lay.peep) {
                    dc_prev[u] += di_pre * p[u] + df_pre * p[n + u];
                    grad[off + u] += di_pre * c_prev;
                    grad[off + n + u] += df_pre * c_prev;
                    grad[off + 2 * n + u] += do_pre * c;
                }
                dz[u] = di_pre;
                dz[n + u] = df_pre;
                dz[2 * n + u] = dg_pre;
                dz[3 * n + u] = do_pre;
            }
            let x_t = &tr.inputs[t * d..(t + 1) * d];
            let h_prev: &[f64] = if t == 0 { &[] } else { &tr.h[s - n..s] };
            for r in 0..4 * n {
                let dzr = dz[r];
                if dzr == 0.0 {
                    continue;
                }
                grad[lay.bias + r] += dzr;
                let gw = &mut grad[lay.w_x + r * d..lay.w_x + (r + 1) * d];
                for (g, xv) in gw.iter_mut().zip(x_t) {
                    *g += dzr * xv;
                }
                if t > 0 {
                    let gh = &mut grad[lay.w_h + r * n..lay.w_h + (r + 1) * n];
                    for (g, hv) in gh.iter_mut().zip(h_prev) {
                        *g += dzr * hv;
                    }
                }
            }
            // dh_{t−1} = W_hᵀ dz, dx_t = W_xᵀ dz
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            let wh = &params.data[lay.w_h..lay.w_h + 4 * n * n];
            let wx = &params.data[lay.w_x..lay.w_x + 4 * n * d];
            for r in 0..4 * n {
                let dzr = dz[r];
                if dzr == 0.0 {
                    continue;
                }
                for (acc, w) in dh_next.iter_mut().zip(&wh[r * n..(r + 1) * n]) {
                    *acc += dzr * w;
                }
                if li > 0 {
                    let dxt = &mut dx[t * d..(t + 1) * d];
                    for (acc, w) in dxt.iter_mut().zip(&wx[r * d..(r + 1) * d]) {
                        *acc += dzr * w;
                    }
                }
            }
            dc_next = dc_prev;
        }
        if li > 0 {
            if !tr.mask.is_empty() {
                for t in 0..timesteps {
                    for (v, m) in dx[t * d..(t + 1) * d].iter_mut().zip(&tr.mask) {
                        *v *= m;
                    }
                }
            }
            dh_ext = dx;
        }
    }
}

/// Mean squared error over a batch and its gradient (no dropout).
pub fn loss_and_gradient(params: &LstmParams, batch: &TensorBatch) -> Result<(f64, Vec<f64>)> {
    check_batch(params, batch)?;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.batch as f64;
    for b in 0..batch.batch {
        let (y, traces) = forward_trace(params, batch.sequence(b), batch.timesteps, &[]);
        let e = y - batch.targets[b];
        loss += e * e * scale;
        backward_trace(params, &traces, batch.timesteps, 2.0 * e * scale, &mut grad);
    }
    Ok((loss, grad))
}

/// Mean squared error without gradient.
pub fn loss(params: &LstmParams, batch: &TensorBatch) -> Result<f64> {
    let preds = forward_params(params, batch)?;
    Ok(preds
        .iter()
        .zip(&batch.targets)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / batch.batch as f64)
}

fn check_batch(params: &LstmParams, batch: &TensorBatch) -> Result<()> {
    if batch.features != params.features() {
        return Err(Error::shape(format!(
            "batch has {} features, network expects {}",
            batch.features,
            params.features()
        )));
    }
    if batch.timesteps == 0 || batch.batch == 0 {
        return Err(Error::shape("empty batch"));
    }
    Ok(())
}

/// Sequence-to-one predictions on already-standardized inputs.
pub fn forward_params(params: &LstmParams, batch: &TensorBatch) -> Result<Vec<f64>> {
    check_batch(params, batch)?;
    Ok((0..batch.batch)
        .map(|b| forward_trace(params, batch.sequence(b), batch.timesteps, &[]).0)
        .collect())
}

/// A trained network: parameters, training configuration, input scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNetwork {
    pub params: LstmParams,
    pub config: TrainConfig,
    pub scaler: Scaler,
}

impl LstmNetwork {
    /// Deterministic, dropout-free predictions on raw (unscaled) inputs.
    pub fn forward(&self, batch: &TensorBatch) -> Result<Vec<f64>> {
        let scaled = self.scaler.transform(batch)?;
        forward_params(&self.params, &scaled)
    }

    /// Prediction for one raw sequence (`timesteps × features`).
    pub fn predict_sequence(&self, seq: &[f64], timesteps: usize) -> Result<f64> {
        let f = self.params.features();
        if seq.len() != timesteps * f || timesteps == 0 {
            return Err(Error::shape(format!(
                "sequence of length {} is not {timesteps} × {f}",
                seq.len()
            )));
        }
        let scaled = self.scaler.transform_slice(seq);
        Ok(forward_trace(&self.params, &scaled, timesteps, &[]).0)
    }

    pub fn n_parameters(&self) -> usize {
        self.params.len()
    }
}

/// Number of trainable parameters for an architecture.
pub fn parameter_count(features: usize, cells: &[usize], peepholes: bool) -> usize {
    LstmParams::zeros(features.max(1), cells, peepholes)
        .map(|p| p.len())
        .unwrap_or(0)
}
