//! Iterative baseline: gradient descent with full backpropagation through
//! time for the all-to-all and gated architectures.
//!
//! Unlike the non-iterative pipeline (which trains only the readout), this
//! baseline trains every parameter - input weights, recurrence/gate weights,
//! biases, and readout - by reverse-mode differentiation through the same
//! per-cell recurrences. The unroll is full (no truncation); desk-scale lag
//! counts make truncated variants unnecessary.

use std::time::{Duration, Instant};

use crate::arch::{ArchKind, ArchitectureSpec, WeightSet};
use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::tensor::{uniform_fill, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct BpttConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

impl Default for BpttConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 0.01,
            optimizer: Optimizer::Adam,
        }
    }
}

/// Per-epoch training record; times are cumulative from the start of
/// training.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub epoch_mse: Vec<f64>,
    pub cumulative_time: Vec<Duration>,
    pub total: Duration,
}

/// First cumulative time at which the training MSE reached `target`, if it
/// ever did.
pub fn time_to_target(trace: &TrainTrace, target_mse: f64) -> Option<Duration> {
    trace
        .epoch_mse
        .iter()
        .position(|m| *m <= target_mse)
        .map(|idx| trace.cumulative_time[idx])
}

/// Flat parameter vector with a fixed per-architecture layout, so one
/// optimizer state covers every tensor.
#[derive(Debug, Clone)]
struct FlatParams {
    data: Vec<f64>,
    s: usize,
    m: usize,
    q: usize,
    kind: ArchKind,
}

impl FlatParams {
    fn label_layout(kind: ArchKind, s: usize, m: usize, q: usize) -> usize {
        match kind {
            ArchKind::FullyConnected => s * m + m + m * m * q + m,
            ArchKind::Lstm => 4 * (s * m + m + m) + m,
            ArchKind::Gru => 3 * (s * m + m + m) + m,
            _ => 0,
        }
    }

    fn zeros_like(spec: &ArchitectureSpec) -> Self {
        Self {
            data: vec![0.0; Self::label_layout(spec.kind, spec.s, spec.m, spec.q)],
            s: spec.s,
            m: spec.m,
            q: spec.q,
            kind: spec.kind,
        }
    }

    fn pack(spec: &ArchitectureSpec, ws: &WeightSet) -> Self {
        let mut p = Self::zeros_like(spec);
        match spec.kind {
            ArchKind::FullyConnected => {
                let (sm, m) = (spec.s * spec.m, spec.m);
                p.data[..sm].copy_from_slice(ws.w.data());
                p.data[sm..sm + m].copy_from_slice(ws.b.data());
                let alpha = ws.alpha.as_ref().unwrap();
                p.data[sm + m..sm + m + alpha.len()].copy_from_slice(alpha.data());
                let off = sm + m + alpha.len();
                p.data[off..off + m].copy_from_slice(&ws.beta);
            }
            ArchKind::Lstm | ArchKind::Gru => {
                let gates: &[crate::arch::GateWeights] = match spec.kind {
                    ArchKind::Lstm => ws.lstm.as_ref().unwrap(),
                    _ => ws.gru.as_ref().unwrap(),
                };
                let mut off = 0;
                for g in gates {
                    p.data[off..off + g.w.len()].copy_from_slice(g.w.data());
                    off += g.w.len();
                    p.data[off..off + g.u.len()].copy_from_slice(g.u.data());
                    off += g.u.len();
                    p.data[off..off + g.b.len()].copy_from_slice(g.b.data());
                    off += g.b.len();
                }
                p.data[off..off + spec.m].copy_from_slice(&ws.beta);
            }
            _ => unreachable!(),
        }
        p
    }

    fn unpack(&self, base: &WeightSet) -> WeightSet {
        let mut ws = base.clone();
        match self.kind {
            ArchKind::FullyConnected => {
                let (sm, m) = (self.s * self.m, self.m);
                ws.w.data_mut().copy_from_slice(&self.data[..sm]);
                ws.b.data_mut().copy_from_slice(&self.data[sm..sm + m]);
                let alpha = ws.alpha.as_mut().unwrap();
                let alen = alpha.len();
                alpha
                    .data_mut()
                    .copy_from_slice(&self.data[sm + m..sm + m + alen]);
                ws.beta = self.data[sm + m + alen..sm + m + alen + m].to_vec();
            }
            ArchKind::Lstm | ArchKind::Gru => {
                let gates: &mut [crate::arch::GateWeights] = match self.kind {
                    ArchKind::Lstm => ws.lstm.as_mut().unwrap().as_mut_slice(),
                    _ => ws.gru.as_mut().unwrap().as_mut_slice(),
                };
                let mut off = 0;
                for g in gates.iter_mut() {
                    let wl = g.w.len();
                    g.w.data_mut().copy_from_slice(&self.data[off..off + wl]);
                    off += wl;
                    let ul = g.u.len();
                    g.u.data_mut().copy_from_slice(&self.data[off..off + ul]);
                    off += ul;
                    let bl = g.b.len();
                    g.b.data_mut().copy_from_slice(&self.data[off..off + bl]);
                    off += bl;
                }
                ws.beta = self.data[off..off + self.m].to_vec();
            }
            _ => unreachable!(),
        }
        ws
    }

    // Flat index helpers. Gate `gi` occupies a (W, u, b) segment of size
    // S*M + 2M starting at gi * (S*M + 2M).
    #[inline]
    fn gate_w(&self, gi: usize, s: usize, j: usize) -> usize {
        gi * (self.s * self.m + 2 * self.m) + s * self.m + j
    }
    #[inline]
    fn gate_u(&self, gi: usize, j: usize) -> usize {
        gi * (self.s * self.m + 2 * self.m) + self.s * self.m + j
    }
    #[inline]
    fn gate_b(&self, gi: usize, j: usize) -> usize {
        gi * (self.s * self.m + 2 * self.m) + self.s * self.m + self.m + j
    }
    #[inline]
    fn gate_beta(&self, n_gates: usize, j: usize) -> usize {
        n_gates * (self.s * self.m + 2 * self.m) + j
    }
    // FullyConnected segments.
    #[inline]
    fn fc_w(&self, s: usize, j: usize) -> usize {
        s * self.m + j
    }
    #[inline]
    fn fc_b(&self, j: usize) -> usize {
        self.s * self.m + j
    }
    #[inline]
    fn fc_alpha(&self, j: usize, l: usize, k: usize) -> usize {
        self.s * self.m + self.m + (j * self.m + l) * self.q + k
    }
    #[inline]
    fn fc_beta(&self, j: usize) -> usize {
        self.s * self.m + self.m + self.m * self.m * self.q + j
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    fn apply(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grads[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Scratch tensors for one sample's forward/backward pass.
struct PassScratch {
    /// Hidden outputs, `M x Q`.
    h: Vec<f64>,
    /// Gate outputs per step: LSTM `[o, c_tilde, lambda, in]`, GRU
    /// `[h_tilde, z, r]`, each `M x Q`.
    gate: Vec<f64>,
    /// LSTM carry per step, `M x Q`.
    c: Vec<f64>,
    /// Reverse-pass accumulators.
    dh: Vec<f64>,
}

impl PassScratch {
    fn new(m: usize, q: usize, banks: usize) -> Self {
        Self {
            h: vec![0.0; m * q],
            gate: vec![0.0; banks * m * q],
            c: vec![0.0; m * q],
            dh: vec![0.0; m * q],
        }
    }
}

/// Train all weights by minibatch gradient descent through the unrolled
/// recurrence. Returns the trained weights and the per-epoch trace.
pub fn bptt_fit(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    cfg: &BpttConfig,
    seed: u64,
) -> Result<(WeightSet, TrainTrace)> {
    if !matches!(
        spec.kind,
        ArchKind::FullyConnected | ArchKind::Lstm | ArchKind::Gru
    ) {
        return Err(Error::UnsupportedArch(
            "the iterative baseline covers the all-to-all and gated architectures",
        ));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::Config("epochs and batch size must be >= 1".into()));
    }
    if ds.s != spec.s || ds.q != spec.q {
        return Err(Error::Dimension(format!(
            "dataset has S={}, Q={} but spec wants S={}, Q={}",
            ds.s, ds.q, spec.s, spec.q
        )));
    }

    let mut rng = SeededRng::new(seed);
    let mut base = WeightSet::sample(spec, &mut rng)?;
    // The baseline also trains the readout, so it starts random too.
    base.beta = uniform_fill(&mut rng, &[spec.m], -1.0, 1.0)?
        .into_data();

    let mut params = FlatParams::pack(spec, &base);
    let mut grads = vec![0.0; params.data.len()];
    let mut adam = AdamState::new(params.data.len());
    let n_train = ds.n_train;
    let banks = match spec.kind {
        ArchKind::Lstm => 4,
        ArchKind::Gru => 3,
        _ => 1,
    };
    let mut scratch = PassScratch::new(spec.m, spec.q, banks);

    let start = Instant::now();
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    let mut cumulative_time = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let mut row = 0;
        while row < n_train {
            let batch = row..(row + cfg.batch_size).min(n_train);
            grads.fill(0.0);
            let b_len = batch.len() as f64;
            for i in batch.clone() {
                let yhat = forward(spec, &params, ds, i, &mut scratch);
                let dyhat = 2.0 * (yhat - ds.y.get1(i)) / b_len;
                backward(spec, &params, ds, i, dyhat, &mut scratch, &mut grads);
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.apply(&mut params.data, &grads, cfg.learning_rate),
                Optimizer::Sgd => {
                    for (p, g) in params.data.iter_mut().zip(&grads) {
                        *p -= cfg.learning_rate * g;
                    }
                }
            }
            row = batch.end;
        }
        let mse = train_mse(spec, &params, ds, &mut scratch);
        if !mse.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_mse.push(mse);
        cumulative_time.push(start.elapsed());
    }

    let total = start.elapsed();
    Ok((
        params.unpack(&base),
        TrainTrace {
            epoch_mse,
            cumulative_time,
            total,
        },
    ))
}

/// Verify the reverse-mode gradients against central finite differences of
/// the full-batch loss on the given dataset. Returns the maximum relative
/// error over all parameters. Diagnostic entry point for the verification
/// suites; quadratic in the parameter count, so keep the instance small.
pub fn finite_difference_max_rel_error(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    seed: u64,
) -> Result<f64> {
    if !matches!(
        spec.kind,
        ArchKind::FullyConnected | ArchKind::Lstm | ArchKind::Gru
    ) {
        return Err(Error::UnsupportedArch(
            "gradient checking covers the architectures the baseline trains",
        ));
    }
    let mut rng = SeededRng::new(seed);
    let mut base = WeightSet::sample(spec, &mut rng)?;
    base.beta = uniform_fill(&mut rng, &[spec.m], -1.0, 1.0)?.into_data();
    let params = FlatParams::pack(spec, &base);
    let banks = match spec.kind {
        ArchKind::Lstm => 4,
        ArchKind::Gru => 3,
        _ => 1,
    };
    let mut sc = PassScratch::new(spec.m, spec.q, banks);

    let loss_at = |p: &FlatParams, sc: &mut PassScratch| -> f64 {
        let mut acc = 0.0;
        for i in 0..ds.n() {
            let yhat = forward(spec, p, ds, i, sc);
            let d = yhat - ds.y.get1(i);
            acc += d * d;
        }
        acc / ds.n() as f64
    };

    let mut analytic = vec![0.0; params.data.len()];
    let n = ds.n() as f64;
    for i in 0..ds.n() {
        let yhat = forward(spec, &params, ds, i, &mut sc);
        let dyhat = 2.0 * (yhat - ds.y.get1(i)) / n;
        backward(spec, &params, ds, i, dyhat, &mut sc, &mut analytic);
    }

    let mut max_rel = 0.0_f64;
    for pi in 0..params.data.len() {
        let eps = 1e-5 * params.data[pi].abs().max(1.0);
        let mut plus = params.clone();
        plus.data[pi] += eps;
        let mut minus = params.clone();
        minus.data[pi] -= eps;
        let fd = (loss_at(&plus, &mut sc) - loss_at(&minus, &mut sc)) / (2.0 * eps);
        let denom = analytic[pi].abs().max(fd.abs()).max(1e-8);
        max_rel = max_rel.max((analytic[pi] - fd).abs() / denom);
    }
    Ok(max_rel)
}

/// Full-batch training MSE under the current parameters.
fn train_mse(
    spec: &ArchitectureSpec,
    params: &FlatParams,
    ds: &TimeSeriesDataset,
    scratch: &mut PassScratch,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..ds.n_train {
        let yhat = forward(spec, params, ds, i, scratch);
        let d = yhat - ds.y.get1(i);
        acc += d * d;
    }
    acc / ds.n_train as f64
}

/// Forward pass for one sample, storing per-step activations for the
/// reverse pass. Returns the readout.
fn forward(
    spec: &ArchitectureSpec,
    p: &FlatParams,
    ds: &TimeSeriesDataset,
    i: usize,
    sc: &mut PassScratch,
) -> f64 {
    let (m, q, s_dim) = (spec.m, spec.q, spec.s);
    let x_row = ds.x.row(i);
    let acts = &spec.activations;
    match spec.kind {
        ArchKind::FullyConnected => {
            for t in 1..=q {
                for j in 0..m {
                    let mut acc = 0.0;
                    for s in 0..s_dim {
                        acc += p.data[p.fc_w(s, j)] * x_row[s * q + (t - 1)];
                    }
                    acc += p.data[p.fc_b(j)];
                    for k in 1..t {
                        let h_past = sc.h[j * q + (t - k - 1)];
                        for l in 0..m {
                            acc += p.data[p.fc_alpha(j, l, k - 1)] * h_past;
                        }
                    }
                    sc.h[j * q + (t - 1)] = acts.g.apply(acc);
                }
            }
        }
        ArchKind::Lstm => {
            let gate_acts = [acts.o, acts.c, acts.lambda, acts.inp];
            for t in 1..=q {
                for j in 0..m {
                    let h_prev = if t > 1 { sc.h[j * q + (t - 2)] } else { 0.0 };
                    let c_prev = if t > 1 { sc.c[j * q + (t - 2)] } else { 0.0 };
                    let mut gate_out = [0.0; 4];
                    for gi in 0..4 {
                        let mut a = 0.0;
                        for s in 0..s_dim {
                            a += p.data[p.gate_w(gi, s, j)] * x_row[s * q + (t - 1)];
                        }
                        a = a + p.data[p.gate_u(gi, j)] * h_prev;
                        a += p.data[p.gate_b(gi, j)];
                        gate_out[gi] = gate_acts[gi].apply(a);
                        sc.gate[(gi * m + j) * q + (t - 1)] = gate_out[gi];
                    }
                    let [o, c_tilde, lambda, inp] = gate_out;
                    let c = lambda * c_prev + inp * c_tilde;
                    sc.c[j * q + (t - 1)] = c;
                    sc.h[j * q + (t - 1)] = o * acts.f.apply(c);
                }
            }
        }
        ArchKind::Gru => {
            for t in 1..=q {
                for j in 0..m {
                    let h_prev = if t > 1 { sc.h[j * q + (t - 2)] } else { 0.0 };
                    // Banks: candidate 0, update 1, reset 2 (declaration
                    // order of the gate weights).
                    let mut a_z = 0.0;
                    for s in 0..s_dim {
                        a_z += p.data[p.gate_w(1, s, j)] * x_row[s * q + (t - 1)];
                    }
                    a_z = a_z + p.data[p.gate_u(1, j)] * h_prev;
                    a_z += p.data[p.gate_b(1, j)];
                    let z = acts.z.apply(a_z);

                    let mut a_r = 0.0;
                    for s in 0..s_dim {
                        a_r += p.data[p.gate_w(2, s, j)] * x_row[s * q + (t - 1)];
                    }
                    a_r = a_r + p.data[p.gate_u(2, j)] * h_prev;
                    a_r += p.data[p.gate_b(2, j)];
                    let r = acts.r.apply(a_r);

                    let mut a_c = 0.0;
                    for s in 0..s_dim {
                        a_c += p.data[p.gate_w(0, s, j)] * x_row[s * q + (t - 1)];
                    }
                    a_c = a_c + p.data[p.gate_u(0, j)] * (r * h_prev);
                    a_c += p.data[p.gate_b(0, j)];
                    let h_tilde = acts.f.apply(a_c);

                    sc.gate[j * q + (t - 1)] = h_tilde;
                    sc.gate[(m + j) * q + (t - 1)] = z;
                    sc.gate[(2 * m + j) * q + (t - 1)] = r;
                    sc.h[j * q + (t - 1)] = (1.0 - z) * h_prev + z * h_tilde;
                }
            }
        }
        _ => unreachable!(),
    }
    let mut yhat = 0.0;
    for j in 0..m {
        let beta_j = match spec.kind {
            ArchKind::FullyConnected => p.data[p.fc_beta(j)],
            ArchKind::Lstm => p.data[p.gate_beta(4, j)],
            ArchKind::Gru => p.data[p.gate_beta(3, j)],
            _ => unreachable!(),
        };
        yhat += beta_j * sc.h[j * q + (q - 1)];
    }
    yhat
}

/// Reverse pass for one sample; `sc` must hold the forward activations.
fn backward(
    spec: &ArchitectureSpec,
    p: &FlatParams,
    ds: &TimeSeriesDataset,
    i: usize,
    dyhat: f64,
    sc: &mut PassScratch,
    grads: &mut [f64],
) {
    let (m, q, s_dim) = (spec.m, spec.q, spec.s);
    let x_row = ds.x.row(i);
    let acts = &spec.activations;
    sc.dh.fill(0.0);

    match spec.kind {
        ArchKind::FullyConnected => {
            for j in 0..m {
                grads[p.fc_beta(j)] += dyhat * sc.h[j * q + (q - 1)];
                sc.dh[j * q + (q - 1)] = dyhat * p.data[p.fc_beta(j)];
            }
            for t in (1..=q).rev() {
                for j in 0..m {
                    let h_t = sc.h[j * q + (t - 1)];
                    let dpre = sc.dh[j * q + (t - 1)] * acts.g.derivative_from_output(h_t);
                    if dpre == 0.0 {
                        continue;
                    }
                    for s in 0..s_dim {
                        grads[p.fc_w(s, j)] += dpre * x_row[s * q + (t - 1)];
                    }
                    grads[p.fc_b(j)] += dpre;
                    for k in 1..t {
                        let h_past = sc.h[j * q + (t - k - 1)];
                        let mut a_sum = 0.0;
                        for l in 0..m {
                            grads[p.fc_alpha(j, l, k - 1)] += dpre * h_past;
                            a_sum += p.data[p.fc_alpha(j, l, k - 1)];
                        }
                        sc.dh[j * q + (t - k - 1)] += dpre * a_sum;
                    }
                }
            }
        }
        ArchKind::Lstm => {
            let gate_acts = [acts.o, acts.c, acts.lambda, acts.inp];
            for j in 0..m {
                grads[p.gate_beta(4, j)] += dyhat * sc.h[j * q + (q - 1)];
                sc.dh[j * q + (q - 1)] = dyhat * p.data[p.gate_beta(4, j)];
            }
            for j in 0..m {
                let mut dc_carry = 0.0;
                for t in (1..=q).rev() {
                    let idx = |gi: usize| (gi * m + j) * q + (t - 1);
                    let o = sc.gate[idx(0)];
                    let c_tilde = sc.gate[idx(1)];
                    let lambda = sc.gate[idx(2)];
                    let inp = sc.gate[idx(3)];
                    let c = sc.c[j * q + (t - 1)];
                    let c_prev = if t > 1 { sc.c[j * q + (t - 2)] } else { 0.0 };
                    let h_prev = if t > 1 { sc.h[j * q + (t - 2)] } else { 0.0 };
                    let dh = sc.dh[j * q + (t - 1)];

                    let phi_c = acts.f.apply(c);
                    let d_o = dh * phi_c;
                    let dc_total =
                        dh * o * acts.f.derivative_from_output(phi_c) + dc_carry;
                    let d_lambda = dc_total * c_prev;
                    let d_inp = dc_total * c_tilde;
                    let d_ctilde = dc_total * inp;
                    dc_carry = dc_total * lambda;

                    let d_acts = [
                        d_o * gate_acts[0].derivative_from_output(o),
                        d_ctilde * gate_acts[1].derivative_from_output(c_tilde),
                        d_lambda * gate_acts[2].derivative_from_output(lambda),
                        d_inp * gate_acts[3].derivative_from_output(inp),
                    ];
                    let mut dh_prev = 0.0;
                    for gi in 0..4 {
                        let da = d_acts[gi];
                        if da == 0.0 {
                            continue;
                        }
                        for s in 0..s_dim {
                            grads[p.gate_w(gi, s, j)] += da * x_row[s * q + (t - 1)];
                        }
                        grads[p.gate_u(gi, j)] += da * h_prev;
                        grads[p.gate_b(gi, j)] += da;
                        dh_prev += da * p.data[p.gate_u(gi, j)];
                    }
                    if t > 1 {
                        sc.dh[j * q + (t - 2)] += dh_prev;
                    }
                }
            }
        }
        ArchKind::Gru => {
            for j in 0..m {
                grads[p.gate_beta(3, j)] += dyhat * sc.h[j * q + (q - 1)];
                sc.dh[j * q + (q - 1)] = dyhat * p.data[p.gate_beta(3, j)];
            }
            for j in 0..m {
                for t in (1..=q).rev() {
                    let h_tilde = sc.gate[j * q + (t - 1)];
                    let z = sc.gate[(m + j) * q + (t - 1)];
                    let r = sc.gate[(2 * m + j) * q + (t - 1)];
                    let h_prev = if t > 1 { sc.h[j * q + (t - 2)] } else { 0.0 };
                    let dh = sc.dh[j * q + (t - 1)];
                    if dh == 0.0 {
                        continue;
                    }

                    let dz = dh * (h_tilde - h_prev);
                    let d_htilde = dh * z;
                    let mut dh_prev = dh * (1.0 - z);

                    let da_c = d_htilde * acts.f.derivative_from_output(h_tilde);
                    for s in 0..s_dim {
                        grads[p.gate_w(0, s, j)] += da_c * x_row[s * q + (t - 1)];
                    }
                    grads[p.gate_u(0, j)] += da_c * (r * h_prev);
                    grads[p.gate_b(0, j)] += da_c;
                    let dr = da_c * p.data[p.gate_u(0, j)] * h_prev;
                    dh_prev += da_c * p.data[p.gate_u(0, j)] * r;

                    let da_z = dz * acts.z.derivative_from_output(z);
                    for s in 0..s_dim {
                        grads[p.gate_w(1, s, j)] += da_z * x_row[s * q + (t - 1)];
                    }
                    grads[p.gate_u(1, j)] += da_z * h_prev;
                    grads[p.gate_b(1, j)] += da_z;
                    dh_prev += da_z * p.data[p.gate_u(1, j)];

                    let da_r = dr * acts.r.derivative_from_output(r);
                    for s in 0..s_dim {
                        grads[p.gate_w(2, s, j)] += da_r * x_row[s * q + (t - 1)];
                    }
                    grads[p.gate_u(2, j)] += da_r * h_prev;
                    grads[p.gate_b(2, j)] += da_r;
                    dh_prev += da_r * p.data[p.gate_u(2, j)];

                    if t > 1 {
                        sc.dh[j * q + (t - 2)] += dh_prev;
                    }
                }
            }
        }
        _ => unreachable!(),
    }
}
