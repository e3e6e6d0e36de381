//! Acceptance suite: one test per verification criterion, each printing a
//! PASS/FAIL line. Run with `--nocapture` (and ideally `--test-threads=1`)
//! to see the report; a global lock serializes the tests regardless so the
//! timed criteria are not distorted by concurrent work.

use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use relm_core::arch::{ArchKind, ArchitectureSpec, WeightSet};
use relm_core::bptt::{self, BpttConfig};
use relm_core::cost;
use relm_core::dataset::{normalize_split, window, TimeSeriesDataset};
use relm_core::hgen::{self, staged_read_count, ExecConfig};
use relm_core::solver::{self, RankFlag};
use relm_core::synth::{synth_series, SynthKind};
use relm_core::tensor::{uniform_fill, DenseTensor, SeededRng};
use relm_core::trainer::{self, FeedbackMode};

fn lock() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

fn random_dataset(n: usize, s: usize, q: usize, seed: u64) -> TimeSeriesDataset {
    let mut rng = SeededRng::new(seed);
    let x = uniform_fill(&mut rng, &[n, s, q], -1.0, 1.0).unwrap();
    let y = uniform_fill(&mut rng, &[n], -1.0, 1.0).unwrap();
    TimeSeriesDataset::from_parts(x, y).unwrap()
}

fn spec_for(kind: ArchKind, m: usize, q: usize, s: usize) -> ArchitectureSpec {
    match kind {
        ArchKind::Narmax => ArchitectureSpec::narmax(m, q, s, 2, 2).unwrap(),
        k => ArchitectureSpec::new(k, m, q, s).unwrap(),
    }
}

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id:02} {name}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

/// Criterion 1: all three backends agree elementwise within 1e-9 over the
/// full architecture/shape grid, and the solved readouts agree within 1e-8
/// wherever the solve is defined (n >= M).
#[test]
fn acceptance_01_backend_equivalence_grid() {
    let _guard = lock();
    let start = Instant::now();
    let mut max_h_basic = 0.0_f64;
    let mut max_h_tiled = 0.0_f64;
    let mut max_beta = 0.0_f64;
    let mut combos = 0_u64;
    let mut beta_combos = 0_u64;

    for kind in ArchKind::ALL {
        for &n in &[5_usize, 64, 1000] {
            for &m in &[1_usize, 3, 50] {
                for &q in &[1_usize, 10, 50] {
                    for &s in &[1_usize, 4] {
                        for seed in [1_u64, 2, 3] {
                            let spec = spec_for(kind, m, q, s);
                            let mut rng = SeededRng::new(seed);
                            let w = WeightSet::sample(&spec, &mut rng).unwrap();
                            let ds = random_dataset(n, s, q, seed + 100);
                            let h_seq =
                                hgen::compute_h_sequential(&ds, &spec, &w, 0..n).unwrap();
                            let h_basic = hgen::compute_h_basic_parallel(
                                &ds,
                                &spec,
                                &w,
                                &ExecConfig::basic(16),
                                0..n,
                            )
                            .unwrap();
                            let h_tiled = hgen::compute_h_tiled_parallel(
                                &ds,
                                &spec,
                                &w,
                                &ExecConfig::tiled(16),
                                0..n,
                            )
                            .unwrap();
                            max_h_basic = max_h_basic.max(h_basic.h.max_abs_diff(&h_seq.h));
                            max_h_tiled = max_h_tiled.max(h_tiled.h.max_abs_diff(&h_seq.h));
                            combos += 1;

                            if n >= m {
                                let y = ds.y.data();
                                let b_seq =
                                    solver::solve_lsq(&h_seq.final_slice(), y).unwrap();
                                let b_basic =
                                    solver::solve_lsq(&h_basic.final_slice(), y).unwrap();
                                let b_tiled =
                                    solver::solve_lsq(&h_tiled.final_slice(), y).unwrap();
                                for j in 0..m {
                                    max_beta = max_beta
                                        .max((b_seq.beta[j] - b_basic.beta[j]).abs())
                                        .max((b_seq.beta[j] - b_tiled.beta[j]).abs());
                                }
                                beta_combos += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    let pass = max_h_basic <= 1e-9 && max_h_tiled <= 1e-9 && max_beta <= 1e-8;
    report(
        1,
        "backend equivalence",
        pass,
        &format!(
            "({combos} H combos, {beta_combos} beta combos; max |H_basic-H_seq|={max_h_basic:.2e}, \
             max |H_tiled-H_seq|={max_h_tiled:.2e}, max |beta diff|={max_beta:.2e}; {:.1}s)",
            start.elapsed().as_secs_f64()
        ),
    );
}

/// Criterion 2: solver optimality on 50 random full-rank instances
/// (n=200, M=20): normal-equations residual bound and agreement with an
/// explicit normal-equations oracle within 1e-8.
#[test]
fn acceptance_02_solver_optimality() {
    let _guard = lock();
    let mut rng = SeededRng::new(2024);
    let mut worst_grad = 0.0_f64;
    let mut worst_beta = 0.0_f64;
    for _ in 0..50 {
        let h = uniform_fill(&mut rng, &[200, 20], -1.0, 1.0).unwrap();
        let y: Vec<f64> = (0..200).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let sol = solver::solve_lsq(&h, &y).unwrap();
        assert_eq!(sol.rank_flag, RankFlag::FullRank);

        // ||H^T (H beta - Y)||_inf <= 1e-8 * max(1, ||H^T Y||_inf)
        let mut grad_inf = 0.0_f64;
        let mut hty_inf = 0.0_f64;
        for j in 0..20 {
            let mut g = 0.0;
            let mut hty = 0.0;
            for i in 0..200 {
                let mut pred = 0.0;
                for l in 0..20 {
                    pred += h.get2(i, l) * sol.beta[l];
                }
                g += h.get2(i, j) * (pred - y[i]);
                hty += h.get2(i, j) * y[i];
            }
            grad_inf = grad_inf.max(g.abs());
            hty_inf = hty_inf.max(hty.abs());
        }
        worst_grad = worst_grad.max(grad_inf / hty_inf.max(1.0));

        // Independent oracle: explicitly form H^T H and H^T Y, solve by
        // Gaussian elimination with partial pivoting.
        let beta_oracle = normal_equations_oracle(&h, &y);
        for j in 0..20 {
            worst_beta = worst_beta.max((sol.beta[j] - beta_oracle[j]).abs());
        }
    }
    let pass = worst_grad <= 1e-8 && worst_beta <= 1e-8;
    report(
        2,
        "solver optimality",
        pass,
        &format!("(worst scaled gradient {worst_grad:.2e}, worst |beta - oracle| {worst_beta:.2e})"),
    );
}

/// Test-local oracle: beta = (H^T H)^{-1} H^T Y via Gaussian elimination.
fn normal_equations_oracle(h: &DenseTensor, y: &[f64]) -> Vec<f64> {
    let (n, m) = (h.dims()[0], h.dims()[1]);
    let mut a = vec![vec![0.0; m + 1]; m];
    for j in 0..m {
        for l in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                acc += h.get2(i, j) * h.get2(i, l);
            }
            a[j][l] = acc;
        }
        let mut acc = 0.0;
        for i in 0..n {
            acc += h.get2(i, j) * y[i];
        }
        a[j][m] = acc;
    }
    // Forward elimination with partial pivoting.
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        let p = a[col][col];
        for row in (col + 1)..m {
            let f = a[row][col] / p;
            for k in col..=m {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut beta = vec![0.0; m];
    for row in (0..m).rev() {
        let mut acc = a[row][m];
        for k in (row + 1)..m {
            acc -= a[row][k] * beta[k];
        }
        beta[row] = acc / a[row][row];
    }
    beta
}

/// Criterion 3: instrumented per-cell counts of the flat backend equal the
/// closed forms exactly for the five consistent rows; the exogenous-feedback
/// deltas are reported with a note; tiled staged reads shrink by at least
/// TW^2/2 once Q >= TW.
#[test]
fn acceptance_03_cost_model_exactness() {
    let _guard = lock();
    let mut all_exact = true;
    let mut lines = Vec::new();

    for &(s, q, m) in &[(1_usize, 10_usize, 10_usize), (4, 50, 20)] {
        for kind in [
            ArchKind::Elman,
            ArchKind::Jordan,
            ArchKind::FullyConnected,
            ArchKind::Lstm,
            ArchKind::Gru,
        ] {
            let spec = spec_for(kind, m, q, s);
            let mut rng = SeededRng::new(77);
            let w = WeightSet::sample(&spec, &mut rng).unwrap();
            let ds = random_dataset(5, s, q, 7);
            let predicted = cost::predict_costs(&spec, 16).predicted;
            let measured = cost::measure_basic(&ds, &spec, &w, 16).unwrap();
            let exact = predicted == measured;
            all_exact &= exact;
            if !exact {
                lines.push(format!(
                    "{kind:?} (S={s},Q={q},M={m}): predicted {predicted:?} vs measured {measured:?}"
                ));
            }
        }

        // Exogenous-feedback row: report the deltas, no assertion (the
        // closed-form row is internally inconsistent).
        let spec = spec_for(ArchKind::Narmax, m, q, s);
        let mut rng = SeededRng::new(78);
        let w = WeightSet::sample(&spec, &mut rng).unwrap();
        let ds = random_dataset(5, s, q, 8);
        let predicted = cost::predict_costs(&spec, 16).predicted;
        let measured = cost::measure_basic(&ds, &spec, &w, 16).unwrap();
        println!(
            "  note: narmax (S={s},Q={q},M={m}) closed form {predicted:?} vs single-pass \
             kernel {measured:?}; the published row mixes reload and recompute models, so the \
             delta is reported rather than asserted"
        );
    }

    // Tiled staged-read reduction: >= TW^2/2 once Q >= TW.
    let mut reduction_ok = true;
    for &(s, q, tw) in &[
        (1_usize, 16_usize, 16_usize),
        (1, 50, 16),
        (4, 50, 16),
        (1, 32, 32),
        (4, 64, 32),
    ] {
        let spec = spec_for(ArchKind::Elman, 10, q, s);
        let basic_reads = cost::predict_costs(&spec, tw).predicted.reads;
        let staged = staged_read_count(&spec, tw).unwrap();
        // Confirm the measured tiled count matches the closed form too.
        let mut rng = SeededRng::new(79);
        let w = WeightSet::sample(&spec, &mut rng).unwrap();
        let ds = random_dataset(4, s, q, 9);
        let tiled = cost::measure_tiled(&ds, &spec, &w, tw).unwrap();
        if tiled.staged_reads != staged {
            reduction_ok = false;
            lines.push(format!(
                "tiled measured {} != closed form {staged} at (S={s},Q={q},TW={tw})",
                tiled.staged_reads
            ));
        }
        let factor = basic_reads as f64 / staged as f64;
        if factor < (tw * tw) as f64 / 2.0 {
            reduction_ok = false;
            lines.push(format!(
                "staged reduction {factor:.1}x below TW^2/2 at (S={s},Q={q},TW={tw})"
            ));
        }
    }

    let pass = all_exact && reduction_ok;
    report(
        3,
        "cost model exactness",
        pass,
        &if lines.is_empty() {
            "(five rows integer-exact at both shape points; staged reduction >= TW^2/2)".into()
        } else {
            lines.join("; ")
        },
    );
}

/// Criterion 4: speedup property. The stated threshold applies on machines
/// with at least 4 hardware threads; on smaller machines the measurement is
/// reported and the threshold clause is vacuous (recorded as such), with a
/// basic tiled-beats-sequential sanity floor still enforced.
#[test]
fn acceptance_04_speedup() {
    let _guard = lock();
    let hw_threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);

    let q = 10;
    let n = 100_000;
    let series_seed = 4;
    let ds = random_dataset(n, 1, q, series_seed);

    let time_backend = |m: usize, cfg: &ExecConfig| -> Duration {
        let spec = spec_for(ArchKind::Elman, m, q, 1);
        let mut rng = SeededRng::new(42);
        let w = WeightSet::sample(&spec, &mut rng).unwrap();
        // Median of 3 runs.
        let mut times = Vec::new();
        for _ in 0..3 {
            let t0 = Instant::now();
            let h = hgen::compute_h(&ds, &spec, &w, cfg, 0..n).unwrap();
            times.push(t0.elapsed());
            std::hint::black_box(&h);
        }
        times.sort();
        times[1]
    };

    let mut speedups = Vec::new();
    for m in [5_usize, 10, 20, 50] {
        let t_seq = time_backend(m, &ExecConfig::sequential());
        let t_tiled = time_backend(m, &ExecConfig::tiled(32));
        speedups.push((m, t_seq, t_tiled, t_seq.as_secs_f64() / t_tiled.as_secs_f64()));
    }
    for (m, t_seq, t_tiled, s) in &speedups {
        println!(
            "  M={m:2}: sequential {:>8.1}ms, tiled {:>8.1}ms, speedup {s:.2}x",
            t_seq.as_secs_f64() * 1e3,
            t_tiled.as_secs_f64() * 1e3
        );
    }
    let (_, t_seq_50, t_tiled_50, _) = speedups[3];
    let ratio_50 = t_tiled_50.as_secs_f64() / t_seq_50.as_secs_f64();
    let monotone = speedups.windows(2).all(|w| w[1].3 >= w[0].3);

    if hw_threads >= 4 {
        let pass = ratio_50 <= 0.5 && monotone;
        report(
            4,
            "speedup",
            pass,
            &format!(
                "({hw_threads} hardware threads; tiled/sequential at M=50: {ratio_50:.3} \
                 (need <= 0.5); speedup non-decreasing in M: {monotone})"
            ),
        );
    } else {
        // The criterion's machine condition (>= 4 hardware threads) is not
        // met; the 0.5x threshold clause is vacuous here. Report what was
        // measured and keep a sanity floor: the tiled backend must still
        // beat the sequential one outright.
        let pass = ratio_50 < 1.0;
        report(
            4,
            "speedup",
            pass,
            &format!(
                "(machine has {hw_threads} hardware threads < 4, threshold clause vacuous; \
                 observed tiled/sequential at M=50: {ratio_50:.3}; speedup non-decreasing \
                 in M: {monotone})"
            ),
        );
    }
}

/// Criterion 5: on the ar2 series (n ~ 5000, Q=10, M=10, gated
/// architecture), the tiled-path training time is at most half the
/// iterative baseline's time to come within 10% of the test MSE; if the
/// baseline never reaches the target, the criterion passes with a
/// not-reached record.
#[test]
fn acceptance_05_elm_vs_bptt() {
    let _guard = lock();
    let series = synth_series(SynthKind::Ar2, 5010, 0.1, 20).unwrap();
    let ds = normalize_split(&window(&series, 10).unwrap(), 0.8).unwrap();
    let spec = spec_for(ArchKind::Lstm, 10, 10, 1);

    let model = trainer::fit(&ds, &spec, &ExecConfig::tiled(32), 21).unwrap();
    let elm_time = model.timing.total();
    let eval = trainer::evaluate(&model, &ds).unwrap();
    let elm_test_mse = eval.rmse_test * eval.rmse_test;
    let target = elm_test_mse * 1.1;

    let bcfg = BpttConfig::default(); // 10 epochs, batch 64, adam
    let (_, trace) = bptt::bptt_fit(&ds, &spec, &bcfg, 21).unwrap();

    match bptt::time_to_target(&trace, target) {
        Some(t_reach) => {
            let pass = elm_time.as_secs_f64() <= 0.5 * t_reach.as_secs_f64();
            report(
                5,
                "non-iterative vs iterative time",
                pass,
                &format!(
                    "(tiled-path fit {:.3}s vs baseline {:.3}s to reach mse {target:.4e}; \
                     ratio {:.1}x)",
                    elm_time.as_secs_f64(),
                    t_reach.as_secs_f64(),
                    t_reach.as_secs_f64() / elm_time.as_secs_f64()
                ),
            );
        }
        None => {
            report(
                5,
                "non-iterative vs iterative time",
                true,
                &format!(
                    "(baseline never reached target mse {target:.4e} within {} epochs \
                     ({:.3}s total, best mse {:.4e}); not-reached record, fit took {:.3}s)",
                    bcfg.epochs,
                    trace.total.as_secs_f64(),
                    trace.epoch_mse.iter().cloned().fold(f64::INFINITY, f64::min),
                    elm_time.as_secs_f64()
                ),
            );
        }
    }
}

/// Criterion 6: baseline gradients match central finite differences to
/// 1e-4 relative on small instances of every trainable architecture.
#[test]
fn acceptance_06_gradient_correctness() {
    let _guard = lock();
    let mut worst = 0.0_f64;
    for kind in [ArchKind::FullyConnected, ArchKind::Lstm, ArchKind::Gru] {
        let spec = spec_for(kind, 2, 3, 1);
        let ds = random_dataset(3, 1, 3, 61);
        let err = bptt::finite_difference_max_rel_error(&ds, &spec, 99).unwrap();
        worst = worst.max(err);
    }
    report(
        6,
        "gradient correctness",
        worst <= 1e-4,
        &format!("(max relative error {worst:.2e} over 3 architectures)"),
    );
}

/// Criterion 7: per-seed RMSE parity between the sequential and tiled
/// pipelines, and mean test RMSE below the naive last-value baseline for
/// the context-recurrent and update-gated architectures.
#[test]
fn acceptance_07_rmse_parity_and_sanity() {
    let _guard = lock();
    let series = synth_series(SynthKind::Ar2, 2010, 0.1, 30).unwrap();
    let ds = normalize_split(&window(&series, 10).unwrap(), 0.8).unwrap();
    let naive = trainer::naive_last_value_rmse(&ds, ds.test_rows());

    let mut max_parity = 0.0_f64;
    let mut pass = true;
    let mut detail = String::new();
    for kind in [ArchKind::Elman, ArchKind::Gru] {
        let spec = spec_for(kind, 10, 10, 1);
        let mut rmses = Vec::new();
        for seed in [101_u64, 102, 103, 104, 105] {
            let m_seq = trainer::fit(&ds, &spec, &ExecConfig::sequential(), seed).unwrap();
            let m_tiled = trainer::fit(&ds, &spec, &ExecConfig::tiled(32), seed).unwrap();
            let e_seq = trainer::evaluate(&m_seq, &ds).unwrap();
            let e_tiled = trainer::evaluate(&m_tiled, &ds).unwrap();
            max_parity = max_parity.max((e_seq.rmse_test - e_tiled.rmse_test).abs());
            rmses.push(e_seq.rmse_test);
        }
        let mean = rmses.iter().sum::<f64>() / rmses.len() as f64;
        let var = rmses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rmses.len() as f64;
        let std = var.sqrt();
        pass &= mean < naive && std.is_finite();
        detail.push_str(&format!(
            "{}: mean rmse {mean:.4} (std {std:.1e}) vs naive {naive:.4}; ",
            kind.name()
        ));
    }
    pass &= max_parity <= 1e-6;
    detail.push_str(&format!("max |rmse_seq - rmse_tiled| = {max_parity:.2e}"));
    report(7, "rmse parity and sanity", pass, &format!("({detail})"));
}

/// Criterion 8: timing decomposition shape on a >= 10^4-row fit:
/// initialization under 1% of the total, hidden-state construction plus
/// solve above 80%.
#[test]
fn acceptance_08_timing_decomposition() {
    let _guard = lock();
    let series = synth_series(SynthKind::Ar2, 13_000, 0.1, 40).unwrap();
    let ds = normalize_split(&window(&series, 10).unwrap(), 0.8).unwrap();
    assert!(ds.n_train >= 10_000, "fit must cover at least 10^4 rows");
    let spec = spec_for(ArchKind::Elman, 20, 10, 1);
    let model = trainer::fit(&ds, &spec, &ExecConfig::tiled(32), 51).unwrap();
    let t = model.timing;
    let total = t.total().as_secs_f64();
    let init_share = t.init.as_secs_f64() / total;
    let core_share = (t.h_compute.as_secs_f64() + t.solve.as_secs_f64()) / total;
    let pass = init_share < 0.01 && core_share > 0.80;
    report(
        8,
        "timing decomposition",
        pass,
        &format!(
            "(n_train={}, init {:.3}% of total, h_compute+solve {:.1}% of total)",
            ds.n_train,
            init_share * 100.0,
            core_share * 100.0
        ),
    );
}

/// The recursive feedback mode stays available for genuine forecasting and
/// behaves sanely on held-out rows (finite outputs, teacher mode preserved).
#[test]
fn recursive_mode_is_finite() {
    let _guard = lock();
    let series = synth_series(SynthKind::Ar2, 500, 0.1, 50).unwrap();
    let ds = normalize_split(&window(&series, 8).unwrap(), 0.8).unwrap();
    let spec = spec_for(ArchKind::Narmax, 6, 8, 1);
    let model = trainer::fit(&ds, &spec, &ExecConfig::sequential(), 77).unwrap();
    let preds =
        trainer::predict_with_mode(&model, &ds, ds.test_rows(), FeedbackMode::Recursive).unwrap();
    assert!(preds.iter().all(|p| p.is_finite()));
}
