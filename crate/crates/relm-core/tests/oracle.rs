//! Independent brute-force evaluators for the six recurrences, written as
//! literal nested loops against the published formulas and kept separate
//! from the library's execution paths. The sequential backend must agree
//! with them elementwise.

use relm_core::arch::{ArchKind, ArchitectureSpec, WeightSet};
use relm_core::dataset::TimeSeriesDataset;
use relm_core::hgen;
use relm_core::tensor::{uniform_fill, SeededRng};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn random_dataset(n: usize, s: usize, q: usize, seed: u64) -> TimeSeriesDataset {
    let mut rng = SeededRng::new(seed);
    let x = uniform_fill(&mut rng, &[n, s, q], -1.0, 1.0).unwrap();
    let y = uniform_fill(&mut rng, &[n], -1.0, 1.0).unwrap();
    TimeSeriesDataset::from_parts(x, y).unwrap()
}

/// True output at window time tau for sample i: the target-feature value one
/// step ahead of lag tau (zero at non-positive tau).
fn teacher_y(ds: &TimeSeriesDataset, i: usize, tau: i64) -> f64 {
    if tau <= 0 {
        0.0
    } else if (tau as usize) < ds.q {
        ds.x.get3(i, 0, tau as usize) // X[i, 0, tau+1] in 1-based lags
    } else {
        ds.y.get1(i)
    }
}

/// Naive evaluation of every architecture, cell by cell, straight from the
/// per-step formulas with zero-padded history.
fn naive_h(ds: &TimeSeriesDataset, spec: &ArchitectureSpec, w: &WeightSet) -> Vec<Vec<Vec<f64>>> {
    let (n, m, q, s_dim) = (ds.n(), spec.m, spec.q, spec.s);
    let mut h = vec![vec![vec![0.0; q + 1]; m]; n]; // h[i][j][t], t 1-based
    let mut c = vec![vec![vec![0.0; q + 1]; m]; n];

    for i in 0..n {
        for j in 0..m {
            for t in 1..=q {
                let mut pre = 0.0;
                for s in 0..s_dim {
                    pre += w.w.get2(s, j) * ds.x.get3(i, s, t - 1);
                }
                pre += w.b.get1(j);
                let v = match spec.kind {
                    ArchKind::Elman => {
                        let alpha = w.alpha.as_ref().unwrap();
                        for k in 1..=q {
                            let hv = if (t as i64 - k as i64) >= 1 {
                                h[i][j][t - k]
                            } else {
                                0.0
                            };
                            pre += alpha.get2(j, k - 1) * hv;
                        }
                        sigmoid(pre)
                    }
                    ArchKind::Jordan => {
                        let alpha = w.alpha.as_ref().unwrap();
                        for k in 1..=q {
                            pre += alpha.get2(j, k - 1) * teacher_y(ds, i, t as i64 - k as i64);
                        }
                        sigmoid(pre)
                    }
                    ArchKind::Narmax => {
                        if let Some(wf) = &w.w_out_fb {
                            for l in 1..=spec.f_len {
                                pre += wf.get2(j, l - 1) * teacher_y(ds, i, t as i64 - l as i64);
                            }
                        }
                        // error feedback is zero during construction
                        sigmoid(pre)
                    }
                    ArchKind::FullyConnected => {
                        let alpha = w.alpha.as_ref().unwrap();
                        for k in 1..=q {
                            let hv = if (t as i64 - k as i64) >= 1 {
                                h[i][j][t - k]
                            } else {
                                0.0
                            };
                            for l in 0..m {
                                pre += alpha.get3(j, l, k - 1) * hv;
                            }
                        }
                        sigmoid(pre)
                    }
                    ArchKind::Lstm => {
                        let gates = w.lstm.as_ref().unwrap();
                        let h_prev = if t > 1 { h[i][j][t - 1] } else { 0.0 };
                        let c_prev = if t > 1 { c[i][j][t - 1] } else { 0.0 };
                        let gate = |gi: usize| -> f64 {
                            let mut a = 0.0;
                            for s in 0..s_dim {
                                a += gates[gi].w.get2(s, j) * ds.x.get3(i, s, t - 1);
                            }
                            a + gates[gi].u.get1(j) * h_prev + gates[gi].b.get1(j)
                        };
                        let o = sigmoid(gate(0));
                        let c_tilde = gate(1).tanh();
                        let lambda = sigmoid(gate(2));
                        let inp = sigmoid(gate(3));
                        c[i][j][t] = lambda * c_prev + inp * c_tilde;
                        o * c[i][j][t].tanh()
                    }
                    ArchKind::Gru => {
                        let gates = w.gru.as_ref().unwrap();
                        let h_prev = if t > 1 { h[i][j][t - 1] } else { 0.0 };
                        let gate = |gi: usize, rec: f64| -> f64 {
                            let mut a = 0.0;
                            for s in 0..s_dim {
                                a += gates[gi].w.get2(s, j) * ds.x.get3(i, s, t - 1);
                            }
                            a + gates[gi].u.get1(j) * rec + gates[gi].b.get1(j)
                        };
                        let z = sigmoid(gate(1, h_prev));
                        let r = sigmoid(gate(2, h_prev));
                        let h_tilde = gate(0, r * h_prev).tanh();
                        (1.0 - z) * h_prev + z * h_tilde
                    }
                };
                // pre is consumed inside the match arms for the gated kinds.
                h[i][j][t] = v;
            }
        }
    }
    h
}

fn check_arch(kind: ArchKind, n: usize, m: usize, q: usize, s: usize, seed: u64) {
    let spec = match kind {
        ArchKind::Narmax => ArchitectureSpec::narmax(m, q, s, 2, 2).unwrap(),
        k => ArchitectureSpec::new(k, m, q, s).unwrap(),
    };
    let mut rng = SeededRng::new(seed);
    let w = WeightSet::sample(&spec, &mut rng).unwrap();
    let ds = random_dataset(n, s, q, seed + 1000);
    let got = hgen::compute_h_sequential(&ds, &spec, &w, 0..n).unwrap();
    let want = naive_h(&ds, &spec, &w);
    let mut max_diff = 0.0_f64;
    for i in 0..n {
        for j in 0..m {
            for t in 1..=q {
                max_diff = max_diff.max((got.h.get3(i, j, t - 1) - want[i][j][t]).abs());
            }
        }
    }
    assert!(
        max_diff <= 1e-12,
        "{kind:?} (n={n}, M={m}, Q={q}, S={s}): max diff {max_diff}"
    );
}

#[test]
fn sequential_matches_naive_elman_reference_case() {
    check_arch(ArchKind::Elman, 2, 2, 3, 1, 7);
}

#[test]
fn sequential_matches_naive_all_architectures() {
    for kind in ArchKind::ALL {
        check_arch(kind, 4, 3, 5, 2, 11);
        check_arch(kind, 3, 2, 8, 1, 13);
    }
}

#[test]
fn lstm_gate_shapes_nontrivial() {
    // Guard against silently degenerate weight draws in the oracle runs.
    let spec = ArchitectureSpec::lstm(3, 5, 2).unwrap();
    let mut rng = SeededRng::new(11);
    let w = WeightSet::sample(&spec, &mut rng).unwrap();
    let gates = w.lstm.as_ref().unwrap();
    for g in gates {
        assert!(g.w.data().iter().any(|v| v.abs() > 1e-3));
        assert!(g.u.data().iter().any(|v| v.abs() > 1e-3));
    }
}
