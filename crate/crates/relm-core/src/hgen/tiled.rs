//! Tiled-parallel block executor.
//!
//! A block owns a `BS x BS` patch of cells and processes each time step in
//! cooperative tile phases: slices of the weight/input tensors are staged
//! into block-local buffers, a barrier separates staging from use, and every
//! cell then consumes the staged slice. Cell history lives in block-local
//! storage for the whole recurrence, so history reads never touch the global
//! tensor; the global output is written exactly once per `(i, j, t)`.
//!
//! On this CPU realization a single worker owns the whole block and executes
//! its cells in phase order, which is observationally equivalent to the
//! cooperative schedule because cells only interact at barriers. The
//! [`PhaseGuard`] enforces the barrier protocol: staged data must not be
//! consumed in the phase that wrote it until a barrier has been crossed.
//!
//! Accumulation runs elementwise in ascending index order across phases, so
//! every cell performs the identical floating-point operation sequence as
//! the sequential and flat-parallel backends.

use std::time::Instant;

use super::tally::Tally;
use super::{Inputs, SharedH};
use crate::arch::{ArchKind, ArchitectureSpec};

/// Staging buffer identifiers for the barrier protocol.
mod buf {
    pub const W: usize = 0;
    pub const X: usize = 1;
    pub const ALPHA: usize = 2;
    pub const TEACH: usize = 3;
    pub const BIAS: usize = 4;
    pub const GATE_CONST: usize = 5;
    pub const COUNT: usize = 6;
}

/// Tracks the stage/barrier/consume ordering within a block.
#[derive(Debug, Default)]
pub(crate) struct PhaseGuard {
    phase: u64,
    synced: u64,
    staged: [u64; buf::COUNT],
}

impl PhaseGuard {
    #[inline]
    pub fn begin_phase(&mut self) {
        self.phase += 1;
    }

    #[inline]
    pub fn staged(&mut self, buf: usize) {
        self.staged[buf] = self.phase;
    }

    /// All staging performed so far becomes visible.
    #[inline]
    pub fn barrier(&mut self) {
        self.synced = self.phase;
    }

    /// Assert the buffer's staged data has passed a barrier.
    #[inline]
    pub fn consume(&self, buf: usize) {
        assert!(
            self.staged[buf] <= self.synced,
            "tile phase consumed buffer {buf} before the barrier"
        );
    }
}

/// Block-local scratch: staging buffers, per-cell accumulators, and the
/// cell-local history/carry storage.
pub(crate) struct BlockScratch {
    bs: usize,
    /// Tile width; equals the block size.
    tw: usize,
    /// Cell-local history, `bs*bs x Q`.
    h_loc: Vec<f64>,
    /// Cell-local carry state.
    c_loc: Vec<f64>,
    /// Per-cell accumulators (one bank per gate for the gated forms).
    acc: Vec<f64>,
    /// Staged weight slices (one bank per gate), `gates x bs x tw`.
    w_sh: Vec<f64>,
    /// Staged input slices, `bs x tw`.
    x_sh: Vec<f64>,
    /// Staged recurrence-weight slices, `bs x tw` (or `bs x M` all-to-all).
    a_sh: Vec<f64>,
    /// Staged teacher values, `bs x tw`.
    y_sh: Vec<f64>,
    /// Staged biases, one per column.
    b_sh: Vec<f64>,
    /// Staged diagonal gate weights and gate biases, `gates x bs` each.
    u_sh: Vec<f64>,
    bg_sh: Vec<f64>,
    guard: PhaseGuard,
    pub time_staging: bool,
    pub staging_nanos: u64,
}

impl BlockScratch {
    pub fn new(spec: &ArchitectureSpec, block_size: usize) -> Self {
        let bs = block_size;
        let tw = block_size;
        let (gates, acc_banks) = match spec.kind {
            ArchKind::Lstm => (4, 4),
            ArchKind::Gru => (3, 3),
            _ => (1, 1),
        };
        let a_width = match spec.kind {
            ArchKind::FullyConnected => spec.m,
            ArchKind::Narmax => tw,
            _ => tw,
        };
        Self {
            bs,
            tw,
            h_loc: vec![0.0; bs * bs * spec.q],
            c_loc: vec![0.0; if spec.kind == ArchKind::Lstm { bs * bs } else { 0 }],
            acc: vec![0.0; bs * bs * acc_banks],
            w_sh: vec![0.0; gates * bs * tw],
            x_sh: vec![0.0; bs * tw],
            a_sh: vec![0.0; bs * a_width],
            y_sh: vec![0.0; bs * tw],
            b_sh: vec![0.0; bs],
            u_sh: vec![0.0; gates * bs],
            bg_sh: vec![0.0; gates * bs],
            guard: PhaseGuard::default(),
            time_staging: false,
            staging_nanos: 0,
        }
    }

    #[inline]
    fn stage_timer(&self) -> Option<Instant> {
        self.time_staging.then(Instant::now)
    }

    #[inline]
    fn stage_done(&mut self, t0: Option<Instant>) {
        if let Some(t0) = t0 {
            self.staging_nanos += t0.elapsed().as_nanos() as u64;
        }
    }
}

/// Execute the block `[r0, r0+br) x [c0, c0+bc)` of the cell grid.
pub(crate) fn run_block_tiled<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    match inp.spec.kind {
        ArchKind::Elman => block_context_recurrent(inp, h, r0, c0, br, bc, scratch, tally, false),
        ArchKind::Jordan => block_context_recurrent(inp, h, r0, c0, br, bc, scratch, tally, true),
        ArchKind::Narmax => block_narmax(inp, h, r0, c0, br, bc, scratch, tally),
        ArchKind::FullyConnected => block_fully(inp, h, r0, c0, br, bc, scratch, tally),
        ArchKind::Lstm => block_lstm(inp, h, r0, c0, br, bc, scratch, tally),
        ArchKind::Gru => block_gru(inp, h, r0, c0, br, bc, scratch, tally),
    }
}

#[inline]
fn flat(inp: &Inputs, local_i: usize, j: usize, t: usize) -> usize {
    (local_i * inp.m + j) * inp.q + (t - 1)
}

/// Stage `b[Col]` for every column of the block (one load per column,
/// reused by the column's cells for the whole run).
fn stage_bias<T: Tally>(
    inp: &Inputs,
    c0: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    scratch.guard.begin_phase();
    let t0 = scratch.stage_timer();
    for c in 0..bc {
        scratch.b_sh[c] = inp.weights.b.get1(c0 + c);
    }
    scratch.stage_done(t0);
    scratch.guard.staged(buf::BIAS);
    tally.staged_const(1);
    scratch.guard.barrier();
}

/// Stage the dot-product slices for tile `tile` at time `t` and accumulate
/// the partial products into `acc` (single bank). Returns nothing; the
/// accumulation order is globally ascending in the input index.
#[allow(clippy::too_many_arguments)]
fn dot_phases<T: Tally>(
    inp: &Inputs,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    t: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    let (s_dim, q, m) = (inp.s, inp.q, inp.m);
    let tw = scratch.tw;
    let bs = scratch.bs;
    let wd = inp.weights.w.data();
    let n_tiles = s_dim.div_ceil(tw);
    for tile in 0..n_tiles {
        let off = tile * tw;
        let w = tw.min(s_dim - off);
        scratch.guard.begin_phase();
        let t0 = scratch.stage_timer();
        for c in 0..bc {
            let j = c0 + c;
            for sp in 0..w {
                scratch.w_sh[c * tw + sp] = wd[(off + sp) * m + j];
            }
        }
        for r in 0..br {
            let x_row = inp.x_row(inp.rows.start + r0 + r);
            for sp in 0..w {
                scratch.x_sh[r * tw + sp] = x_row[(off + sp) * q + (t - 1)];
            }
        }
        scratch.stage_done(t0);
        scratch.guard.staged(buf::W);
        scratch.guard.staged(buf::X);
        tally.staged_slice(w as u64); // weight slice
        tally.staged_slice(w as u64); // input slice
        scratch.guard.barrier();
        tally.dot_phase();
        scratch.guard.consume(buf::W);
        scratch.guard.consume(buf::X);
        for r in 0..br {
            for c in 0..bc {
                let a = &mut scratch.acc[r * bs + c];
                for sp in 0..w {
                    tally.flop(2);
                    *a += scratch.w_sh[c * tw + sp] * scratch.x_sh[r * tw + sp];
                }
            }
        }
    }
}

/// Elman/Jordan block program; `teacher_feedback` selects whether the
/// recurrence consumes cell history or staged teacher values.
#[allow(clippy::too_many_arguments)]
fn block_context_recurrent<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
    teacher_feedback: bool,
) {
    let q = inp.q;
    let (bs, tw) = (scratch.bs, scratch.tw);
    let alpha = inp.weights.alpha.as_ref().unwrap().data();
    let g = inp.spec.activations.g;
    let m_u64 = inp.m as u64;
    let jordan_feedback_flops = m_u64 * (2 * inp.s as u64 + 1);

    stage_bias(inp, c0, bc, scratch, tally);
    // History slots are only read after this block wrote them (lag k < t),
    // so the reused scratch needs no clearing here.

    for t in 1..=q {
        scratch.acc[..bs * bs].fill(0.0);
        dot_phases(inp, r0, c0, br, bc, t, scratch, tally);

        scratch.guard.consume(buf::BIAS);
        for r in 0..br {
            for c in 0..bc {
                tally.flop(1);
                scratch.acc[r * bs + c] += scratch.b_sh[c];
            }
        }

        // Recurrence sum in ceil(t / TW) tile phases over the lag axis;
        // lag k == t consumes the zero pad.
        let n_tiles = t.div_ceil(tw);
        for tile in 0..n_tiles {
            let off = tile * tw;
            let kw = tw.min(t - off);
            scratch.guard.begin_phase();
            let t0 = scratch.stage_timer();
            for c in 0..bc {
                let j = c0 + c;
                for kp in 0..kw {
                    scratch.a_sh[c * tw + kp] = alpha[j * q + (off + kp)];
                }
            }
            if teacher_feedback {
                for r in 0..br {
                    let teacher = inp.teacher(inp.rows.start + r0 + r);
                    for kp in 0..kw {
                        let k = off + kp + 1;
                        scratch.y_sh[r * tw + kp] = teacher.y(t as i64 - k as i64);
                    }
                }
            }
            scratch.stage_done(t0);
            scratch.guard.staged(buf::ALPHA);
            tally.staged_slice(kw as u64);
            if teacher_feedback {
                scratch.guard.staged(buf::TEACH);
                tally.staged_slice(kw as u64);
            }
            scratch.guard.barrier();
            scratch.guard.consume(buf::ALPHA);
            if teacher_feedback {
                scratch.guard.consume(buf::TEACH);
            }
            for r in 0..br {
                for c in 0..bc {
                    let cell = r * bs + c;
                    let a = &mut scratch.acc[cell];
                    for kp in 0..kw {
                        let k = off + kp + 1;
                        if teacher_feedback {
                            tally.flop(jordan_feedback_flops);
                            *a += scratch.a_sh[c * tw + kp] * scratch.y_sh[r * tw + kp];
                        } else {
                            tally.flop(2);
                            let hv = if k < t {
                                scratch.h_loc[cell * q + (t - k - 1)]
                            } else {
                                0.0
                            };
                            *a += scratch.a_sh[c * tw + kp] * hv;
                        }
                    }
                }
            }
        }

        for r in 0..br {
            for c in 0..bc {
                let cell = r * bs + c;
                let v = g.apply(scratch.acc[cell]);
                scratch.h_loc[cell * q + (t - 1)] = v;
                tally.write(1);
                h.write(flat(inp, r0 + r, c0 + c, t), v);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn block_narmax<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    let q = inp.q;
    let (bs, tw) = (scratch.bs, scratch.tw);
    let g = inp.spec.activations.g;
    let f_len = inp.spec.f_len;
    let r_len = inp.spec.r_len;
    let wf = inp.weights.w_out_fb.as_ref().map(|t| t.data());
    let we = inp.weights.w_err_fb.as_ref().map(|t| t.data());

    stage_bias(inp, c0, bc, scratch, tally);

    for t in 1..=q {
        scratch.acc[..bs * bs].fill(0.0);
        dot_phases(inp, r0, c0, br, bc, t, scratch, tally);

        scratch.guard.consume(buf::BIAS);
        for r in 0..br {
            for c in 0..bc {
                tally.flop(1);
                scratch.acc[r * bs + c] += scratch.b_sh[c];
            }
        }

        // Output feedback over lags 1..=F in tile phases.
        if let Some(wf) = wf {
            for tile in 0..f_len.div_ceil(tw) {
                let off = tile * tw;
                let lw = tw.min(f_len - off);
                scratch.guard.begin_phase();
                let t0 = scratch.stage_timer();
                for c in 0..bc {
                    let j = c0 + c;
                    for lp in 0..lw {
                        scratch.a_sh[c * tw + lp] = wf[j * f_len + (off + lp)];
                    }
                }
                for r in 0..br {
                    let teacher = inp.teacher(inp.rows.start + r0 + r);
                    for lp in 0..lw {
                        let l = off + lp + 1;
                        scratch.y_sh[r * tw + lp] = teacher.y(t as i64 - l as i64);
                    }
                }
                scratch.stage_done(t0);
                scratch.guard.staged(buf::ALPHA);
                scratch.guard.staged(buf::TEACH);
                tally.staged_slice(lw as u64);
                tally.staged_slice(lw as u64);
                scratch.guard.barrier();
                scratch.guard.consume(buf::ALPHA);
                scratch.guard.consume(buf::TEACH);
                for r in 0..br {
                    for c in 0..bc {
                        let a = &mut scratch.acc[r * bs + c];
                        for lp in 0..lw {
                            tally.flop(2);
                            *a += scratch.a_sh[c * tw + lp] * scratch.y_sh[r * tw + lp];
                        }
                    }
                }
            }
        }

        // Error feedback: weights staged, the error stream itself is zero
        // during construction.
        if let Some(we) = we {
            for tile in 0..r_len.div_ceil(tw) {
                let off = tile * tw;
                let lw = tw.min(r_len - off);
                scratch.guard.begin_phase();
                let t0 = scratch.stage_timer();
                for c in 0..bc {
                    let j = c0 + c;
                    for lp in 0..lw {
                        scratch.a_sh[c * tw + lp] = we[j * r_len + (off + lp)];
                    }
                }
                scratch.stage_done(t0);
                scratch.guard.staged(buf::ALPHA);
                tally.staged_slice(lw as u64);
                scratch.guard.barrier();
                scratch.guard.consume(buf::ALPHA);
                for r in 0..br {
                    for c in 0..bc {
                        let a = &mut scratch.acc[r * bs + c];
                        for lp in 0..lw {
                            tally.flop(2);
                            *a += scratch.a_sh[c * tw + lp] * 0.0;
                        }
                    }
                }
            }
        }

        for r in 0..br {
            for c in 0..bc {
                let v = g.apply(scratch.acc[r * bs + c]);
                tally.write(1);
                h.write(flat(inp, r0 + r, c0 + c, t), v);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn block_fully<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    let (m, q) = (inp.m, inp.q);
    let bs = scratch.bs;
    let alpha = inp.weights.alpha.as_ref().unwrap().data();
    let g = inp.spec.activations.g;

    stage_bias(inp, c0, bc, scratch, tally);

    for t in 1..=q {
        scratch.acc[..bs * bs].fill(0.0);
        dot_phases(inp, r0, c0, br, bc, t, scratch, tally);

        scratch.guard.consume(buf::BIAS);
        for r in 0..br {
            for c in 0..bc {
                tally.flop(0); // bias add unpriced in this row's model
                scratch.acc[r * bs + c] += scratch.b_sh[c];
            }
        }

        // One phase per lag: each column stages its M recurrence weights for
        // that lag (an all-to-all slice is already M wide).
        for k in 1..=q {
            scratch.guard.begin_phase();
            let t0 = scratch.stage_timer();
            for c in 0..bc {
                let j = c0 + c;
                for l in 0..m {
                    scratch.a_sh[c * m + l] = alpha[(j * m + l) * q + (k - 1)];
                }
            }
            scratch.stage_done(t0);
            scratch.guard.staged(buf::ALPHA);
            tally.staged_slice(m as u64);
            scratch.guard.barrier();
            scratch.guard.consume(buf::ALPHA);
            for r in 0..br {
                for c in 0..bc {
                    let cell = r * bs + c;
                    let hv = if k < t {
                        scratch.h_loc[cell * q + (t - k - 1)]
                    } else {
                        0.0
                    };
                    let a = &mut scratch.acc[cell];
                    for l in 0..m {
                        tally.flop(2);
                        *a += scratch.a_sh[c * m + l] * hv;
                    }
                    tally.flop(1); // per-lag fold
                }
            }
        }

        for r in 0..br {
            for c in 0..bc {
                let cell = r * bs + c;
                let v = g.apply(scratch.acc[cell]);
                scratch.h_loc[cell * q + (t - 1)] = v;
                tally.write(1);
                h.write(flat(inp, r0 + r, c0 + c, t), v);
            }
        }
    }
}

/// Stage the per-column diagonal recurrent weights and gate biases once per
/// block (reused across all time steps).
fn stage_gate_consts<T: Tally>(
    gates: &[crate::arch::GateWeights],
    c0: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    scratch.guard.begin_phase();
    let t0 = scratch.stage_timer();
    let bs = scratch.bs;
    for (gi, gate) in gates.iter().enumerate() {
        for c in 0..bc {
            scratch.u_sh[gi * bs + c] = gate.u.get1(c0 + c);
            scratch.bg_sh[gi * bs + c] = gate.b.get1(c0 + c);
        }
    }
    scratch.stage_done(t0);
    scratch.guard.staged(buf::GATE_CONST);
    tally.staged_const(2 * gates.len() as u64);
    scratch.guard.barrier();
}

/// Stage the input slice plus one weight slice per gate, then accumulate the
/// partial gate products (bank `gi` of `acc`).
#[allow(clippy::too_many_arguments)]
fn gate_dot_phases<T: Tally>(
    inp: &Inputs,
    gates: &[crate::arch::GateWeights],
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    t: usize,
    flop_per_elem: u64,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    let (s_dim, q, m) = (inp.s, inp.q, inp.m);
    let (bs, tw) = (scratch.bs, scratch.tw);
    let n_gates = gates.len();
    for tile in 0..s_dim.div_ceil(tw) {
        let off = tile * tw;
        let w = tw.min(s_dim - off);
        scratch.guard.begin_phase();
        let t0 = scratch.stage_timer();
        for (gi, gate) in gates.iter().enumerate() {
            let wd = gate.w.data();
            for c in 0..bc {
                let j = c0 + c;
                for sp in 0..w {
                    scratch.w_sh[(gi * bs + c) * tw + sp] = wd[(off + sp) * m + j];
                }
            }
        }
        for r in 0..br {
            let x_row = inp.x_row(inp.rows.start + r0 + r);
            for sp in 0..w {
                scratch.x_sh[r * tw + sp] = x_row[(off + sp) * q + (t - 1)];
            }
        }
        scratch.stage_done(t0);
        scratch.guard.staged(buf::W);
        scratch.guard.staged(buf::X);
        tally.staged_slice(w as u64); // input slice
        for _ in 0..n_gates {
            tally.staged_slice(w as u64); // one weight slice per gate
        }
        scratch.guard.barrier();
        tally.dot_phase();
        scratch.guard.consume(buf::W);
        scratch.guard.consume(buf::X);
        for r in 0..br {
            for c in 0..bc {
                for gi in 0..n_gates {
                    let a = &mut scratch.acc[gi * bs * bs + r * bs + c];
                    for sp in 0..w {
                        tally.flop(flop_per_elem);
                        *a += scratch.w_sh[(gi * bs + c) * tw + sp]
                            * scratch.x_sh[r * tw + sp];
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn block_lstm<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    let q = inp.q;
    let bs = scratch.bs;
    let gates = inp.weights.lstm.as_ref().unwrap();
    let acts = &inp.spec.activations;

    // The gated cell reads no plain bias; only the gate constants stage.
    stage_gate_consts(gates.as_slice(), c0, bc, scratch, tally);
    // The carry is read at t = 1, so it must be cleared per block; history
    // slots are only read after being written within the block.
    scratch.c_loc[..bs * bs].fill(0.0);

    for t in 1..=q {
        scratch.acc[..bs * bs * 4].fill(0.0);
        gate_dot_phases(inp, gates.as_slice(), r0, c0, br, bc, t, 2, scratch, tally);

        scratch.guard.consume(buf::GATE_CONST);
        for r in 0..br {
            for c in 0..bc {
                let cell = r * bs + c;
                let h_prev = if t > 1 {
                    scratch.h_loc[cell * q + (t - 2)]
                } else {
                    0.0
                };
                let mut pre = [0.0; 4];
                for gi in 0..4 {
                    tally.flop(3);
                    let mut a = scratch.acc[gi * bs * bs + cell];
                    a = a + scratch.u_sh[gi * bs + c] * h_prev;
                    a += scratch.bg_sh[gi * bs + c];
                    pre[gi] = a;
                }
                let o = acts.o.apply(pre[0]);
                let c_tilde = acts.c.apply(pre[1]);
                let lambda = acts.lambda.apply(pre[2]);
                let inp_gate = acts.inp.apply(pre[3]);
                tally.flop(4);
                let cv = lambda * scratch.c_loc[cell] + inp_gate * c_tilde;
                tally.flop(2);
                let hv = o * acts.f.apply(cv);
                scratch.c_loc[cell] = cv;
                scratch.h_loc[cell * q + (t - 1)] = hv;
                tally.write(5);
                h.write(flat(inp, r0 + r, c0 + c, t), hv);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn block_gru<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    scratch: &mut BlockScratch,
    tally: &mut T,
) {
    let q = inp.q;
    let bs = scratch.bs;
    let gates = inp.weights.gru.as_ref().unwrap();
    let acts = &inp.spec.activations;

    stage_gate_consts(gates.as_slice(), c0, bc, scratch, tally);

    // Accumulator banks follow the gate declaration order:
    // candidate (0), update (1), reset (2).
    for t in 1..=q {
        scratch.acc[..bs * bs * 3].fill(0.0);
        gate_dot_phases(inp, gates.as_slice(), r0, c0, br, bc, t, 1, scratch, tally);

        scratch.guard.consume(buf::GATE_CONST);
        for r in 0..br {
            for c in 0..bc {
                let cell = r * bs + c;
                let h_prev = if t > 1 {
                    scratch.h_loc[cell * q + (t - 2)]
                } else {
                    0.0
                };
                tally.flop(4);
                let mut a_z = scratch.acc[bs * bs + cell];
                a_z = a_z + scratch.u_sh[bs + c] * h_prev;
                a_z += scratch.bg_sh[bs + c];
                let z = acts.z.apply(a_z);

                tally.flop(4);
                let mut a_r = scratch.acc[2 * bs * bs + cell];
                a_r = a_r + scratch.u_sh[2 * bs + c] * h_prev;
                a_r += scratch.bg_sh[2 * bs + c];
                let r_gate = acts.r.apply(a_r);

                tally.flop(5);
                let mut a_c = scratch.acc[cell];
                a_c = a_c + scratch.u_sh[c] * (r_gate * h_prev);
                a_c += scratch.bg_sh[c];
                let h_tilde = acts.f.apply(a_c);

                tally.flop(4);
                let hv = (1.0 - z) * h_prev + z * h_tilde;
                scratch.h_loc[cell * q + (t - 1)] = hv;
                tally.write(3);
                h.write(flat(inp, r0 + r, c0 + c, t), hv);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_guard_accepts_stage_barrier_consume() {
        let mut g = PhaseGuard::default();
        g.begin_phase();
        g.staged(buf::W);
        g.barrier();
        g.consume(buf::W);
    }

    #[test]
    #[should_panic(expected = "before the barrier")]
    fn phase_guard_rejects_consume_before_barrier() {
        let mut g = PhaseGuard::default();
        g.begin_phase();
        g.staged(buf::W);
        g.barrier();
        g.consume(buf::W);
        // Next phase restages but forgets the barrier.
        g.begin_phase();
        g.staged(buf::W);
        g.consume(buf::W);
    }
}
