//! The six recurrent architectures as pure per-cell step functions.
//!
//! Each hidden value `h[i, j, t]` depends only on the sample's input window,
//! column-`j` weights, and that same cell's earlier history (plus the teacher
//! signal for output-feedback architectures). That independence is what lets
//! the execution backends assign one worker per `(i, j)` cell.
//!
//! Conventions shared by every backend:
//! - history and teacher values at non-positive time indices are zero;
//! - output-feedback terms use the true target (teacher forcing) during
//!   hidden-state construction, since the readout does not exist yet;
//! - the error feedback of the NARMAX form is held at zero during
//!   construction for the same causality reason;
//! - LSTM/GRU recurrent gate weights are diagonal (one scalar per neuron),
//!   keeping each cell self-contained.

use crate::error::{Error, Result};
use crate::tensor::{uniform_fill, Activation, DenseTensor, SeededRng};

/// Which recurrence a network uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Elman,
    Jordan,
    Narmax,
    FullyConnected,
    Lstm,
    Gru,
}

impl ArchKind {
    pub const ALL: [ArchKind; 6] = [
        ArchKind::Elman,
        ArchKind::Jordan,
        ArchKind::Narmax,
        ArchKind::FullyConnected,
        ArchKind::Lstm,
        ArchKind::Gru,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Elman => "elman",
            ArchKind::Jordan => "jordan",
            ArchKind::Narmax => "narmax",
            ArchKind::FullyConnected => "fully",
            ArchKind::Lstm => "lstm",
            ArchKind::Gru => "gru",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "elman" => Ok(ArchKind::Elman),
            "jordan" => Ok(ArchKind::Jordan),
            "narmax" => Ok(ArchKind::Narmax),
            "fully" | "fully_connected" | "fullyconnected" => Ok(ArchKind::FullyConnected),
            "lstm" => Ok(ArchKind::Lstm),
            "gru" => Ok(ArchKind::Gru),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }

    /// Whether the cell feeds back from targets rather than its own history.
    pub fn uses_teacher(self) -> bool {
        matches!(self, ArchKind::Jordan | ArchKind::Narmax)
    }
}

/// Activation assignment for the hidden neuron and every gate role.
/// Roles not used by an architecture are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivationSet {
    /// Hidden-neuron activation (Elman/Jordan/NARMAX/FullyConnected).
    pub g: Activation,
    /// LSTM cell-output squasher and GRU candidate squasher.
    pub f: Activation,
    /// LSTM output gate.
    pub o: Activation,
    /// LSTM candidate squasher.
    pub c: Activation,
    /// LSTM forget gate.
    pub lambda: Activation,
    /// LSTM input gate.
    pub inp: Activation,
    /// GRU update gate.
    pub z: Activation,
    /// GRU reset gate.
    pub r: Activation,
}

impl Default for ActivationSet {
    fn default() -> Self {
        Self {
            g: Activation::Sigmoid,
            f: Activation::Tanh,
            o: Activation::Sigmoid,
            c: Activation::Tanh,
            lambda: Activation::Sigmoid,
            inp: Activation::Sigmoid,
            z: Activation::Sigmoid,
            r: Activation::Sigmoid,
        }
    }
}

/// Hyperparameters of one network: architecture, sizes, and activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    /// Hidden neuron count.
    pub m: usize,
    /// Lag count (time steps per window).
    pub q: usize,
    /// Input dimension.
    pub s: usize,
    /// Output-feedback length (NARMAX only).
    pub f_len: usize,
    /// Error-feedback length (NARMAX only).
    pub r_len: usize,
    pub activations: ActivationSet,
}

impl ArchitectureSpec {
    pub fn new(kind: ArchKind, m: usize, q: usize, s: usize) -> Result<Self> {
        if m == 0 || q == 0 || s == 0 {
            return Err(Error::Config(format!(
                "M, Q, S must all be >= 1 (got M={m}, Q={q}, S={s})"
            )));
        }
        Ok(Self {
            kind,
            m,
            q,
            s,
            f_len: 0,
            r_len: 0,
            activations: ActivationSet::default(),
        })
    }

    pub fn elman(m: usize, q: usize, s: usize) -> Result<Self> {
        Self::new(ArchKind::Elman, m, q, s)
    }

    pub fn jordan(m: usize, q: usize, s: usize) -> Result<Self> {
        Self::new(ArchKind::Jordan, m, q, s)
    }

    pub fn narmax(m: usize, q: usize, s: usize, f_len: usize, r_len: usize) -> Result<Self> {
        let mut spec = Self::new(ArchKind::Narmax, m, q, s)?;
        spec.f_len = f_len;
        spec.r_len = r_len;
        Ok(spec)
    }

    pub fn fully_connected(m: usize, q: usize, s: usize) -> Result<Self> {
        Self::new(ArchKind::FullyConnected, m, q, s)
    }

    pub fn lstm(m: usize, q: usize, s: usize) -> Result<Self> {
        Self::new(ArchKind::Lstm, m, q, s)
    }

    pub fn gru(m: usize, q: usize, s: usize) -> Result<Self> {
        Self::new(ArchKind::Gru, m, q, s)
    }
}

/// One gate's parameters: an `S x M` input block, a diagonal recurrent
/// weight per neuron, and a bias per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct GateWeights {
    pub w: DenseTensor,
    pub u: DenseTensor,
    pub b: DenseTensor,
}

/// All fixed random parameters plus the learned readout.
///
/// Every field except `beta` is frozen at sampling time; `beta` starts empty
/// and is filled in by the least-squares solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    /// Input weights, `S x M`.
    pub w: DenseTensor,
    /// Hidden biases, `M`.
    pub b: DenseTensor,
    /// Recurrence weights: `M x Q` (Elman/Jordan), `M x M x Q`
    /// (FullyConnected), absent otherwise.
    pub alpha: Option<DenseTensor>,
    /// Output feedback weights `M x F` (NARMAX).
    pub w_out_fb: Option<DenseTensor>,
    /// Error feedback weights `M x R` (NARMAX).
    pub w_err_fb: Option<DenseTensor>,
    /// LSTM gates in order: output, candidate, forget, input.
    pub lstm: Option<[GateWeights; 4]>,
    /// GRU gates in order: candidate, update, reset.
    pub gru: Option<[GateWeights; 3]>,
    /// Readout, length `M`; empty until trained.
    pub beta: Vec<f64>,
}

impl WeightSet {
    /// Draw all fixed weights uniform `[-1, 1)` in a fixed documented order:
    /// `W`, `b`, then the architecture's recurrence tensors (gate triples in
    /// declaration order, `w`/`u`/`b` within each gate).
    pub fn sample(spec: &ArchitectureSpec, rng: &mut SeededRng) -> Result<Self> {
        let (m, q, s) = (spec.m, spec.q, spec.s);
        let w = uniform_fill(rng, &[s, m], -1.0, 1.0)?;
        let b = uniform_fill(rng, &[m], -1.0, 1.0)?;
        let mut ws = WeightSet {
            w,
            b,
            alpha: None,
            w_out_fb: None,
            w_err_fb: None,
            lstm: None,
            gru: None,
            beta: Vec::new(),
        };
        match spec.kind {
            ArchKind::Elman | ArchKind::Jordan => {
                ws.alpha = Some(uniform_fill(rng, &[m, q], -1.0, 1.0)?);
            }
            ArchKind::FullyConnected => {
                ws.alpha = Some(uniform_fill(rng, &[m, m, q], -1.0, 1.0)?);
            }
            ArchKind::Narmax => {
                if spec.f_len > 0 {
                    ws.w_out_fb = Some(uniform_fill(rng, &[m, spec.f_len], -1.0, 1.0)?);
                }
                if spec.r_len > 0 {
                    ws.w_err_fb = Some(uniform_fill(rng, &[m, spec.r_len], -1.0, 1.0)?);
                }
            }
            ArchKind::Lstm => {
                let mut gates = Vec::with_capacity(4);
                for _ in 0..4 {
                    gates.push(GateWeights {
                        w: uniform_fill(rng, &[s, m], -1.0, 1.0)?,
                        u: uniform_fill(rng, &[m], -1.0, 1.0)?,
                        b: uniform_fill(rng, &[m], -1.0, 1.0)?,
                    });
                }
                let arr: [GateWeights; 4] = gates.try_into().expect("4 gates");
                ws.lstm = Some(arr);
            }
            ArchKind::Gru => {
                let mut gates = Vec::with_capacity(3);
                for _ in 0..3 {
                    gates.push(GateWeights {
                        w: uniform_fill(rng, &[s, m], -1.0, 1.0)?,
                        u: uniform_fill(rng, &[m], -1.0, 1.0)?,
                        b: uniform_fill(rng, &[m], -1.0, 1.0)?,
                    });
                }
                let arr: [GateWeights; 3] = gates.try_into().expect("3 gates");
                ws.gru = Some(arr);
            }
        }
        Ok(ws)
    }

    /// Zero-initialized weights with the right shapes (handy in tests).
    pub fn zeros(spec: &ArchitectureSpec) -> Result<Self> {
        let (m, q, s) = (spec.m, spec.q, spec.s);
        let zero_gate = |s: usize, m: usize| -> Result<GateWeights> {
            Ok(GateWeights {
                w: DenseTensor::zeros(&[s, m])?,
                u: DenseTensor::zeros(&[m])?,
                b: DenseTensor::zeros(&[m])?,
            })
        };
        Ok(WeightSet {
            w: DenseTensor::zeros(&[s, m])?,
            b: DenseTensor::zeros(&[m])?,
            alpha: match spec.kind {
                ArchKind::Elman | ArchKind::Jordan => Some(DenseTensor::zeros(&[m, q])?),
                ArchKind::FullyConnected => Some(DenseTensor::zeros(&[m, m, q])?),
                _ => None,
            },
            w_out_fb: if spec.kind == ArchKind::Narmax && spec.f_len > 0 {
                Some(DenseTensor::zeros(&[m, spec.f_len])?)
            } else {
                None
            },
            w_err_fb: if spec.kind == ArchKind::Narmax && spec.r_len > 0 {
                Some(DenseTensor::zeros(&[m, spec.r_len])?)
            } else {
                None
            },
            lstm: if spec.kind == ArchKind::Lstm {
                Some([
                    zero_gate(s, m)?,
                    zero_gate(s, m)?,
                    zero_gate(s, m)?,
                    zero_gate(s, m)?,
                ])
            } else {
                None
            },
            gru: if spec.kind == ArchKind::Gru {
                Some([zero_gate(s, m)?, zero_gate(s, m)?, zero_gate(s, m)?])
            } else {
                None
            },
            beta: Vec::new(),
        })
    }
}

/// Teacher signal for output-feedback architectures: the true target at an
/// earlier window position, zero at non-positive times.
///
/// For sample `i` with window `X[i, :, 1..=Q]`, the true output at window
/// time `tau` is the target-feature value one step ahead of lag `tau`; for
/// `tau < Q` that value is already present in the window as `X[i, 0, tau+1]`,
/// and at `tau = Q` it is `Y[i]`.
#[derive(Debug, Clone, Copy)]
pub struct TeacherSignal<'a> {
    /// Row `i` of X, laid out `S x Q`.
    pub x_row: &'a [f64],
    pub y_i: f64,
    pub q: usize,
}

impl<'a> TeacherSignal<'a> {
    #[inline]
    pub fn y(&self, tau: i64) -> f64 {
        if tau <= 0 {
            0.0
        } else if (tau as usize) < self.q {
            // X[i, 0, tau + 1] in 1-based lag indexing.
            self.x_row[tau as usize]
        } else {
            self.y_i
        }
    }
}

/// Per-cell view handed to a step function: one sample row, one neuron
/// column, one time step, plus accessors for this cell's own past.
#[derive(Debug, Clone, Copy)]
pub struct CellContext<'a> {
    /// Row `i` of X, laid out `S x Q`.
    pub x_row: &'a [f64],
    /// Neuron column `j`.
    pub neuron: usize,
    /// 1-based time step.
    pub t: usize,
    /// Lag count (stride of `x_row`).
    pub q: usize,
    /// This cell's history: `hist[tau - 1] = h[i, j, tau]` for `tau < t`.
    pub hist: &'a [f64],
    /// Teacher signal (Jordan/NARMAX).
    pub teacher: Option<TeacherSignal<'a>>,
    /// Previous carry state (LSTM), zero at `t = 1`.
    pub c_prev: f64,
}

impl<'a> CellContext<'a> {
    /// Input value `X[i, s, t]` for this context's time step.
    #[inline]
    pub fn x(&self, s: usize) -> f64 {
        self.x_row[s * self.q + (self.t - 1)]
    }

    /// History value `h[i, j, tau]`, zero for `tau <= 0`.
    #[inline]
    pub fn h_at(&self, tau: i64) -> f64 {
        if tau <= 0 {
            0.0
        } else {
            self.hist[tau as usize - 1]
        }
    }

    #[inline]
    fn input_preact(&self, w: &DenseTensor, b: &DenseTensor) -> f64 {
        let j = self.neuron;
        let m = w.dims()[1];
        let s_dim = w.dims()[0];
        let mut acc = 0.0;
        for s in 0..s_dim {
            acc += w.data()[s * m + j] * self.x(s);
        }
        acc + b.get1(j)
    }

    /// Gate pre-activation: `W_g[:, j] . x(t) + u_g[j] * h_prev + b_g[j]`.
    #[inline]
    fn gate_preact(&self, gate: &GateWeights, h_prev: f64) -> f64 {
        let j = self.neuron;
        let m = gate.w.dims()[1];
        let s_dim = gate.w.dims()[0];
        let mut acc = 0.0;
        for s in 0..s_dim {
            acc += gate.w.data()[s * m + j] * self.x(s);
        }
        acc + gate.u.get1(j) * h_prev + gate.b.get1(j)
    }
}

/// Context-recurrent cell: feedback from this cell's own history.
pub fn step_elman(ctx: &CellContext, spec: &ArchitectureSpec, w: &WeightSet) -> f64 {
    let alpha = w.alpha.as_ref().expect("elman alpha");
    let j = ctx.neuron;
    let mut acc = ctx.input_preact(&w.w, &w.b);
    for k in 1..ctx.t {
        acc += alpha.get2(j, k - 1) * ctx.h_at(ctx.t as i64 - k as i64);
    }
    spec.activations.g.apply(acc)
}

/// Output-recurrent cell: feedback from earlier true outputs (teacher forced).
pub fn step_jordan(ctx: &CellContext, spec: &ArchitectureSpec, w: &WeightSet) -> f64 {
    let alpha = w.alpha.as_ref().expect("jordan alpha");
    let teacher = ctx.teacher.expect("jordan teacher signal");
    let j = ctx.neuron;
    let mut acc = ctx.input_preact(&w.w, &w.b);
    for k in 1..ctx.t {
        acc += alpha.get2(j, k - 1) * teacher.y(ctx.t as i64 - k as i64);
    }
    spec.activations.g.apply(acc)
}

/// Output- and error-feedback cell; the error stream is zero during
/// hidden-state construction.
pub fn step_narmax(ctx: &CellContext, spec: &ArchitectureSpec, w: &WeightSet) -> f64 {
    let teacher = ctx.teacher.expect("narmax teacher signal");
    let j = ctx.neuron;
    let mut acc = ctx.input_preact(&w.w, &w.b);
    if let Some(wf) = &w.w_out_fb {
        for l in 1..=spec.f_len {
            acc += wf.get2(j, l - 1) * teacher.y(ctx.t as i64 - l as i64);
        }
    }
    if let Some(we) = &w.w_err_fb {
        for l in 1..=spec.r_len {
            // e(t - l) is identically zero here; the term is kept so the
            // weights stay live for prediction-time refinement.
            acc += we.get2(j, l - 1) * 0.0;
        }
    }
    spec.activations.g.apply(acc)
}

/// All-to-all recurrence in its literal per-cell form: the inner neuron sum
/// scales this cell's own history.
pub fn step_fully_connected(ctx: &CellContext, spec: &ArchitectureSpec, w: &WeightSet) -> f64 {
    let alpha = w.alpha.as_ref().expect("fully-connected alpha");
    let j = ctx.neuron;
    let m = spec.m;
    let mut acc = ctx.input_preact(&w.w, &w.b);
    for k in 1..=spec.q {
        let h = ctx.h_at(ctx.t as i64 - k as i64);
        for l in 0..m {
            acc += alpha.get3(j, l, k - 1) * h;
        }
    }
    spec.activations.g.apply(acc)
}

/// Gated cell with carry state; returns `(h, c)`.
pub fn step_lstm(ctx: &CellContext, spec: &ArchitectureSpec, w: &WeightSet) -> (f64, f64) {
    let gates = w.lstm.as_ref().expect("lstm gates");
    let acts = &spec.activations;
    let h_prev = ctx.h_at(ctx.t as i64 - 1);
    let c_prev = ctx.c_prev;
    let o = acts.o.apply(ctx.gate_preact(&gates[0], h_prev));
    let c_tilde = acts.c.apply(ctx.gate_preact(&gates[1], h_prev));
    let lambda = acts.lambda.apply(ctx.gate_preact(&gates[2], h_prev));
    let inp = acts.inp.apply(ctx.gate_preact(&gates[3], h_prev));
    let c = lambda * c_prev + inp * c_tilde;
    let h = o * acts.f.apply(c);
    (h, c)
}

/// Update/reset-gated cell.
pub fn step_gru(ctx: &CellContext, spec: &ArchitectureSpec, w: &WeightSet) -> f64 {
    let gates = w.gru.as_ref().expect("gru gates");
    let acts = &spec.activations;
    let h_prev = ctx.h_at(ctx.t as i64 - 1);
    let j = ctx.neuron;
    let cand = &gates[0];
    let upd = &gates[1];
    let rst = &gates[2];
    let z = acts.z.apply(ctx.gate_preact(upd, h_prev));
    let r = acts.r.apply(ctx.gate_preact(rst, h_prev));
    // Candidate reads the reset-scaled previous state through the diagonal
    // recurrent weight.
    let m = cand.w.dims()[1];
    let mut a_c = 0.0;
    for s in 0..spec.s {
        a_c += cand.w.data()[s * m + j] * ctx.x(s);
    }
    a_c = a_c + cand.u.get1(j) * (r * h_prev);
    a_c += cand.b.get1(j);
    let h_tilde = acts.f.apply(a_c);
    (1.0 - z) * h_prev + z * h_tilde
}
