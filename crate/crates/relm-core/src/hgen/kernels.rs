//! Flat-parallel per-cell programs.
//!
//! Each cell `(i, j)` runs its full `t = 1..=Q` recurrence, reading history
//! from the global output tensor (slots this same cell wrote earlier) and
//! writing one global slot per step. The tally hooks charge the memory-
//! operation/FLOP cost model at the exact program points the counting
//! analysis attributes them to; `NoTally` erases them entirely.
//!
//! Counting conventions (documented once here, applied per architecture):
//! - a dot product of length S costs 2S reads (weight + input) and 2S FLOPs
//!   (multiply + accumulate), except the update/reset-gated form whose cost
//!   row prices fused multiply-accumulates at one FLOP per element;
//! - the context-recurrence loop runs `k = 1..=t` with a zero pad at
//!   `k = t`, so its trip count (and charge) is `t` per step;
//! - the output-feedback form charges its feedback term as if the earlier
//!   readout were reloaded per neuron (2M reads) and recomputed per neuron
//!   (M(2S+1) FLOPs); the executed arithmetic uses the teacher signal, which
//!   is what makes single-pass training possible in the first place;
//! - the all-to-all form re-charges the history load per inner neuron term,
//!   loops the full lag range every step, prices the bias add at zero, and
//!   adds one fold FLOP per lag, matching its closed-form row verbatim;
//! - the gated forms charge the input slice once per step (it is reused by
//!   every gate), materialize their gate values as writes, and price the
//!   state/output squashes at one FLOP each.

use super::tally::Tally;
use super::{Inputs, SharedH};
use crate::arch::ArchKind;

/// Run every cell of the block `[r0, r0+br) x [c0, c0+bc)`.
pub(crate) fn run_block_basic<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    r0: usize,
    c0: usize,
    br: usize,
    bc: usize,
    tally: &mut T,
) {
    for r in 0..br {
        let local_i = r0 + r;
        let i = inp.rows.start + local_i;
        for c in 0..bc {
            let j = c0 + c;
            match inp.spec.kind {
                ArchKind::Elman => cell_elman(inp, h, local_i, i, j, tally),
                ArchKind::Jordan => cell_jordan(inp, h, local_i, i, j, tally),
                ArchKind::Narmax => cell_narmax(inp, h, local_i, i, j, tally),
                ArchKind::FullyConnected => cell_fully(inp, h, local_i, i, j, tally),
                ArchKind::Lstm => cell_lstm(inp, h, local_i, i, j, tally),
                ArchKind::Gru => cell_gru(inp, h, local_i, i, j, tally),
            }
        }
    }
}

#[inline]
fn flat(inp: &Inputs, local_i: usize, j: usize, t: usize) -> usize {
    (local_i * inp.m + j) * inp.q + (t - 1)
}

#[inline]
fn input_dot<T: Tally>(inp: &Inputs, x_row: &[f64], j: usize, t: usize, tally: &mut T) -> f64 {
    let (m, q) = (inp.m, inp.q);
    let wd = inp.weights.w.data();
    let mut acc = 0.0;
    for s in 0..inp.s {
        tally.read(2);
        tally.flop(2);
        acc += wd[s * m + j] * x_row[s * q + (t - 1)];
    }
    acc
}

fn cell_elman<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    local_i: usize,
    i: usize,
    j: usize,
    tally: &mut T,
) {
    let _ = i;
    let q = inp.q;
    let x_row = inp.x_row(inp.rows.start + local_i);
    let alpha = inp.weights.alpha.as_ref().unwrap().data();
    let g = inp.spec.activations.g;
    for t in 1..=q {
        let mut acc = input_dot(inp, x_row, j, t, tally);
        tally.read(1);
        tally.flop(1);
        acc += inp.weights.b.get1(j);
        for k in 1..=t {
            tally.read(2);
            tally.flop(2);
            let hv = if k < t {
                h.read(flat(inp, local_i, j, t - k))
            } else {
                0.0 // zero pad at k == t
            };
            acc += alpha[j * q + (k - 1)] * hv;
        }
        tally.write(1);
        h.write(flat(inp, local_i, j, t), g.apply(acc));
    }
}

fn cell_jordan<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    local_i: usize,
    i: usize,
    j: usize,
    tally: &mut T,
) {
    let q = inp.q;
    let x_row = inp.x_row(i);
    let teacher = inp.teacher(i);
    let alpha = inp.weights.alpha.as_ref().unwrap().data();
    let g = inp.spec.activations.g;
    let m = inp.m as u64;
    let feedback_flops = m * (2 * inp.s as u64 + 1);
    for t in 1..=q {
        let mut acc = input_dot(inp, x_row, j, t, tally);
        tally.read(1);
        tally.flop(1);
        acc += inp.weights.b.get1(j);
        for k in 1..=t {
            tally.read(1); // alpha[j, k]
            // Feedback charge: the cost row models reloading the M readout
            // terms and recomputing each neuron's input product.
            tally.read(2 * m);
            tally.flop(feedback_flops);
            acc += alpha[j * q + (k - 1)] * teacher.y(t as i64 - k as i64);
        }
        tally.write(1);
        h.write(flat(inp, local_i, j, t), g.apply(acc));
    }
}

fn cell_narmax<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    local_i: usize,
    i: usize,
    j: usize,
    tally: &mut T,
) {
    let q = inp.q;
    let x_row = inp.x_row(i);
    let teacher = inp.teacher(i);
    let g = inp.spec.activations.g;
    let f_len = inp.spec.f_len;
    let r_len = inp.spec.r_len;
    let wf = inp.weights.w_out_fb.as_ref().map(|t| t.data());
    let we = inp.weights.w_err_fb.as_ref().map(|t| t.data());
    for t in 1..=q {
        let mut acc = input_dot(inp, x_row, j, t, tally);
        tally.read(1);
        tally.flop(1);
        acc += inp.weights.b.get1(j);
        if let Some(wf) = wf {
            for l in 1..=f_len {
                tally.read(2);
                tally.flop(2);
                acc += wf[j * f_len + (l - 1)] * teacher.y(t as i64 - l as i64);
            }
        }
        if let Some(we) = we {
            for l in 1..=r_len {
                tally.read(2);
                tally.flop(2);
                // e(t - l) is zero during construction; the term stays live
                // for prediction-time refinement.
                acc += we[j * r_len + (l - 1)] * 0.0;
            }
        }
        tally.write(1);
        h.write(flat(inp, local_i, j, t), g.apply(acc));
    }
}

fn cell_fully<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    local_i: usize,
    i: usize,
    j: usize,
    tally: &mut T,
) {
    let _ = i;
    let (m, q) = (inp.m, inp.q);
    let x_row = inp.x_row(inp.rows.start + local_i);
    let alpha = inp.weights.alpha.as_ref().unwrap().data();
    let g = inp.spec.activations.g;
    for t in 1..=q {
        let mut acc = input_dot(inp, x_row, j, t, tally);
        tally.read(1);
        tally.flop(0); // bias add unpriced in this row's model
        acc += inp.weights.b.get1(j);
        for k in 1..=q {
            // Full lag range every step, zero-padded below t.
            let hv = if k < t {
                h.read(flat(inp, local_i, j, t - k))
            } else {
                0.0
            };
            let base = (j * m) * q + (k - 1);
            for l in 0..m {
                tally.read(2); // the model reloads both factors per term
                tally.flop(2);
                acc += alpha[base + l * q] * hv;
            }
            tally.flop(1); // per-lag fold
        }
        tally.write(1);
        h.write(flat(inp, local_i, j, t), g.apply(acc));
    }
}

fn cell_lstm<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    local_i: usize,
    i: usize,
    j: usize,
    tally: &mut T,
) {
    let _ = i;
    let (m, q, s_dim) = (inp.m, inp.q, inp.s);
    let x_row = inp.x_row(inp.rows.start + local_i);
    let gates = inp.weights.lstm.as_ref().unwrap();
    let acts = &inp.spec.activations;
    let mut c_prev = 0.0;
    for t in 1..=q {
        tally.read(s_dim as u64); // input slice staged once per step
        let h_prev = if t > 1 {
            h.read(flat(inp, local_i, j, t - 1))
        } else {
            0.0
        };
        let mut pre = [0.0; 4];
        for (gi, gate) in gates.iter().enumerate() {
            let wd = gate.w.data();
            let mut a = 0.0;
            for s in 0..s_dim {
                tally.read(1); // gate input weight
                tally.flop(2);
                a += wd[s * m + j] * x_row[s * q + (t - 1)];
            }
            tally.read(3); // diagonal recurrent weight, previous output, bias
            tally.flop(3);
            a = a + gate.u.get1(j) * h_prev;
            a += gate.b.get1(j);
            pre[gi] = a;
        }
        let o = acts.o.apply(pre[0]);
        let c_tilde = acts.c.apply(pre[1]);
        let lambda = acts.lambda.apply(pre[2]);
        let inp_gate = acts.inp.apply(pre[3]);
        tally.read(1); // previous carry
        tally.flop(4); // two products, one add, candidate squash
        let c = lambda * c_prev + inp_gate * c_tilde;
        tally.flop(2); // output squash and product
        let hv = o * acts.f.apply(c);
        c_prev = c;
        // The model materializes the four gate values alongside the output.
        tally.write(5);
        h.write(flat(inp, local_i, j, t), hv);
    }
}

fn cell_gru<T: Tally>(
    inp: &Inputs,
    h: &SharedH,
    local_i: usize,
    i: usize,
    j: usize,
    tally: &mut T,
) {
    let _ = i;
    let (m, q, s_dim) = (inp.m, inp.q, inp.s);
    let x_row = inp.x_row(inp.rows.start + local_i);
    let gates = inp.weights.gru.as_ref().unwrap();
    let (cand, upd, rst) = (&gates[0], &gates[1], &gates[2]);
    let acts = &inp.spec.activations;
    for t in 1..=q {
        tally.read(s_dim as u64); // input slice staged once per step
        tally.read(1); // previous output staged for the gates
        let h_prev = if t > 1 {
            h.read(flat(inp, local_i, j, t - 1))
        } else {
            0.0
        };

        let mut a_z = 0.0;
        let wd = upd.w.data();
        for s in 0..s_dim {
            tally.read(1);
            tally.flop(1); // fused multiply-accumulate pricing in this row
            a_z += wd[s * m + j] * x_row[s * q + (t - 1)];
        }
        tally.read(2); // u_z, b_z
        tally.flop(4); // recurrent product, add, bias add, gate squash
        a_z = a_z + upd.u.get1(j) * h_prev;
        a_z += upd.b.get1(j);
        let z = acts.z.apply(a_z);

        let mut a_r = 0.0;
        let wd = rst.w.data();
        for s in 0..s_dim {
            tally.read(1);
            tally.flop(1);
            a_r += wd[s * m + j] * x_row[s * q + (t - 1)];
        }
        tally.read(2); // u_r, b_r
        tally.flop(4);
        a_r = a_r + rst.u.get1(j) * h_prev;
        a_r += rst.b.get1(j);
        let r = acts.r.apply(a_r);

        let mut a_c = 0.0;
        let wd = cand.w.data();
        for s in 0..s_dim {
            tally.read(1);
            tally.flop(1);
            a_c += wd[s * m + j] * x_row[s * q + (t - 1)];
        }
        tally.read(2); // u_f, b_f
        tally.flop(5); // reset product, recurrent product, add, bias, squash
        a_c = a_c + cand.u.get1(j) * (r * h_prev);
        a_c += cand.b.get1(j);
        let h_tilde = acts.f.apply(a_c);

        tally.read(1); // previous output again for the convex combination
        tally.flop(4); // 1-z, two products, add
        let hv = (1.0 - z) * h_prev + z * h_tilde;

        // Update and reset values materialize alongside the output.
        tally.write(3);
        h.write(flat(inp, local_i, j, t), hv);
    }
}
