//! End-to-end non-iterative training pipeline: sample weights, build the
//! hidden tensor with the configured backend, solve for the readout, score.

use std::ops::Range;
use std::time::{Duration, Instant};

use crate::arch::{ArchKind, ArchitectureSpec, WeightSet};
use crate::dataset::{NormParams, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::hgen::{self, Backend, ExecConfig};
use crate::solver::{self, RankFlag};
use crate::tensor::{self, SeededRng};

/// How output-feedback architectures obtain earlier outputs at prediction
/// time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// Use the true targets, matching the training convention (evaluation on
    /// held-out data).
    TeacherForced,
    /// Feed the model's own earlier readout back in (genuine forecasting).
    Recursive,
}

/// Wall-clock breakdown of one fit. The transfer fields are zero on
/// CPU-resident runs but remain part of the record so the decomposition
/// always sums to the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingBreakdown {
    pub init: Duration,
    pub transfer_in: Duration,
    pub h_compute: Duration,
    pub solve: Duration,
    pub transfer_out: Duration,
}

impl TimingBreakdown {
    pub fn total(&self) -> Duration {
        self.init + self.transfer_in + self.h_compute + self.solve + self.transfer_out
    }

    pub fn zero() -> Self {
        Self {
            init: Duration::ZERO,
            transfer_in: Duration::ZERO,
            h_compute: Duration::ZERO,
            solve: Duration::ZERO,
            transfer_out: Duration::ZERO,
        }
    }
}

/// A fitted model: fixed weights plus the solved readout, with everything
/// needed to reproduce the run bit-for-bit.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: ArchitectureSpec,
    pub weights: WeightSet,
    pub norm: Option<NormParams>,
    pub seed: u64,
    pub rng_id: String,
    pub backend: Backend,
    pub block_size: usize,
    pub timing: TimingBreakdown,
    pub rank_flag: RankFlag,
    pub ridge_lambda: f64,
}

/// RMSE report over the train/test split, in normalized units plus the
/// original scale of the target.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rmse_train: f64,
    pub rmse_test: f64,
    pub rmse_train_denorm: f64,
    pub rmse_test_denorm: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Fit a model: draw `W`, `alpha`, `b` (and gates) from the seeded RNG,
/// build `H` on the training rows with the configured backend, and solve
/// `H(Q) beta = Y` by least squares.
pub fn fit(
    ds: &TimeSeriesDataset,
    spec: &ArchitectureSpec,
    cfg: &ExecConfig,
    seed: u64,
) -> Result<TrainedModel> {
    let n_train = ds.n_train;
    if n_train < spec.m {
        return Err(Error::Underdetermined {
            n: n_train,
            m: spec.m,
        });
    }

    let t0 = Instant::now();
    let mut rng = SeededRng::new(seed);
    let mut weights = WeightSet::sample(spec, &mut rng)?;
    let t1 = Instant::now();

    let hidden = hgen::compute_h(ds, spec, &weights, cfg, 0..n_train)?;
    let h_final = hidden.final_slice();
    let t2 = Instant::now();

    let sol = solver::solve_lsq(&h_final, &ds.y.data()[..n_train])?;
    let t3 = Instant::now();

    weights.beta = sol.beta;
    Ok(TrainedModel {
        spec: spec.clone(),
        weights,
        norm: ds.norm.clone(),
        seed,
        rng_id: tensor::RNG_ID.to_string(),
        backend: cfg.backend,
        block_size: cfg.block_size,
        timing: TimingBreakdown {
            init: t1 - t0,
            transfer_in: Duration::ZERO,
            h_compute: t2 - t1,
            solve: t3 - t2,
            transfer_out: Duration::ZERO,
        },
        rank_flag: sol.rank_flag,
        ridge_lambda: sol.ridge_lambda,
    })
}

/// Readout over the final hidden slice for the requested rows, rebuilding
/// `H` under the training-time teacher-forcing convention.
pub fn predict(model: &TrainedModel, ds: &TimeSeriesDataset, rows: Range<usize>) -> Result<Vec<f64>> {
    predict_with_mode(model, ds, rows, FeedbackMode::TeacherForced)
}

pub fn predict_with_mode(
    model: &TrainedModel,
    ds: &TimeSeriesDataset,
    rows: Range<usize>,
    mode: FeedbackMode,
) -> Result<Vec<f64>> {
    if model.weights.beta.len() != model.spec.m {
        return Err(Error::Config("model has no trained readout".into()));
    }
    match mode {
        FeedbackMode::TeacherForced => {
            let cfg = ExecConfig {
                backend: model.backend,
                block_size: model.block_size,
                ..ExecConfig::sequential()
            };
            let hidden = hgen::compute_h(ds, &model.spec, &model.weights, &cfg, rows)?;
            let h_final = hidden.final_slice();
            let beta = &model.weights.beta;
            let (n, m) = (h_final.dims()[0], h_final.dims()[1]);
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += beta[j] * h_final.get2(i, j);
                }
                out.push(acc);
            }
            Ok(out)
        }
        FeedbackMode::Recursive => predict_recursive(model, ds, rows),
    }
}

/// Recursive (self-feedback) prediction for output-feedback architectures:
/// the readout at each earlier step replaces the teacher signal, and the
/// error stream stays zero (no true outputs are available when genuinely
/// forecasting). Architectures without output feedback reduce to the
/// teacher-forced path evaluated sequentially.
fn predict_recursive(
    model: &TrainedModel,
    ds: &TimeSeriesDataset,
    rows: Range<usize>,
) -> Result<Vec<f64>> {
    let spec = &model.spec;
    // Without output feedback, recursive and teacher-forced prediction
    // coincide.
    if !spec.kind.uses_teacher() {
        return predict_with_mode(model, ds, rows, FeedbackMode::TeacherForced);
    }
    let w = &model.weights;
    let beta = &w.beta;
    let (m, q, s_dim) = (spec.m, spec.q, spec.s);
    if rows.end > ds.n() {
        return Err(Error::Dimension(format!(
            "row range {rows:?} out of bounds for n={}",
            ds.n()
        )));
    }

    let g = spec.activations.g;
    let mut out = Vec::with_capacity(rows.len());
    let mut h_all = vec![0.0; m * q];
    let mut yhat = vec![0.0; q + 1]; // yhat[tau], tau in 1..=Q (index 0 unused)

    for i in rows {
        let x_row = ds.x.row(i);
        h_all.fill(0.0);
        yhat.fill(0.0);
        for t in 1..=q {
            for j in 0..m {
                let wd = w.w.data();
                let mut acc = 0.0;
                for s in 0..s_dim {
                    acc += wd[s * m + j] * x_row[s * q + (t - 1)];
                }
                acc += w.b.get1(j);
                let v = match spec.kind {
                    ArchKind::Jordan => {
                        let alpha = w.alpha.as_ref().unwrap();
                        for k in 1..t {
                            acc += alpha.get2(j, k - 1) * yhat[t - k];
                        }
                        g.apply(acc)
                    }
                    ArchKind::Narmax => {
                        if let Some(wf) = &w.w_out_fb {
                            for l in 1..=spec.f_len {
                                let y_fb = if l < t { yhat[t - l] } else { 0.0 };
                                acc += wf.get2(j, l - 1) * y_fb;
                            }
                        }
                        // Error feedback stays zero when forecasting.
                        g.apply(acc)
                    }
                    _ => unreachable!("handled by the teacher-forced path"),
                };
                h_all[j * q + (t - 1)] = v;
            }
            let mut pred_t = 0.0;
            for j in 0..m {
                pred_t += beta[j] * h_all[j * q + (t - 1)];
            }
            yhat[t] = pred_t;
        }
        out.push(yhat[q]);
    }
    Ok(out)
}

/// RMSE over train and test rows, in normalized units and the target's
/// original scale.
pub fn evaluate(model: &TrainedModel, ds: &TimeSeriesDataset) -> Result<EvalReport> {
    let preds = predict(model, ds, 0..ds.n())?;
    let rmse_over = |rows: Range<usize>| -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in rows.clone() {
            let d = preds[i] - ds.y.get1(i);
            acc += d * d;
        }
        (acc / rows.len() as f64).sqrt()
    };
    let rmse_train = rmse_over(ds.train_rows());
    let rmse_test = rmse_over(ds.test_rows());
    let scale = ds.norm.as_ref().map_or(1.0, |n| n.target_std());
    Ok(EvalReport {
        rmse_train,
        rmse_test,
        rmse_train_denorm: rmse_train * scale,
        rmse_test_denorm: rmse_test * scale,
        n_train: ds.n_train,
        n_test: ds.n_test(),
    })
}

/// RMSE of the naive last-value predictor (`y_hat =` newest lag of the
/// target feature) over the given rows, in normalized units.
pub fn naive_last_value_rmse(ds: &TimeSeriesDataset, rows: Range<usize>) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in rows.clone() {
        let d = ds.x.get3(i, 0, ds.q - 1) - ds.y.get1(i);
        acc += d * d;
    }
    (acc / rows.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{normalize_split, window};
    use crate::synth::{synth_series, SynthKind};
    use crate::test_util::random_dataset;

    #[test]
    fn planted_readout_is_recovered() {
        // Build H from fixed weights, plant Y = H(Q) beta*, and check fit
        // recovers beta* through the full pipeline.
        let spec = ArchitectureSpec::elman(4, 3, 1).unwrap();
        let seed = 42;
        let mut rng = SeededRng::new(seed);
        let weights = WeightSet::sample(&spec, &mut rng).unwrap();
        let mut ds = random_dataset(60, 1, 3, 7);
        let hidden = hgen::compute_h_sequential(&ds, &spec, &weights, 0..60).unwrap();
        let h_final = hidden.final_slice();
        let beta_star = [0.5, -1.25, 2.0, 0.75];
        for i in 0..60 {
            let mut acc = 0.0;
            for j in 0..4 {
                acc += h_final.get2(i, j) * beta_star[j];
            }
            ds.y.data_mut()[i] = acc;
        }
        let model = fit(&ds, &spec, &ExecConfig::sequential(), seed).unwrap();
        for (b, b_star) in model.weights.beta.iter().zip(&beta_star) {
            assert!((b - b_star).abs() < 1e-6, "{b} vs {b_star}");
        }
        let preds = predict(&model, &ds, 0..60).unwrap();
        for i in 0..60 {
            assert!((preds[i] - ds.y.get1(i)).abs() < 1e-6);
        }
    }

    #[test]
    fn backends_give_identical_beta() {
        let spec = ArchitectureSpec::gru(5, 4, 1).unwrap();
        let ds = random_dataset(100, 1, 4, 3);
        let m_seq = fit(&ds, &spec, &ExecConfig::sequential(), 11).unwrap();
        let m_tiled = fit(&ds, &spec, &ExecConfig::tiled(16), 11).unwrap();
        for (a, b) in m_seq.weights.beta.iter().zip(&m_tiled.weights.beta) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn too_few_train_rows_rejected() {
        let spec = ArchitectureSpec::elman(8, 2, 1).unwrap();
        let ds = random_dataset(7, 1, 2, 3);
        assert!(matches!(
            fit(&ds, &spec, &ExecConfig::sequential(), 1),
            Err(Error::Underdetermined { n: 7, m: 8 })
        ));
    }

    #[test]
    fn zero_beta_predicts_zero() {
        let spec = ArchitectureSpec::elman(2, 2, 1).unwrap();
        let ds = random_dataset(10, 1, 2, 5);
        let mut model = fit(&ds, &spec, &ExecConfig::sequential(), 2).unwrap();
        model.weights.beta = vec![0.0, 0.0];
        let preds = predict(&model, &ds, 0..10).unwrap();
        assert!(preds.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn scalar_readout() {
        // M = 1, beta = [2], H final value 0.5 (zero weights) -> 1.0.
        let spec = ArchitectureSpec::elman(1, 2, 1).unwrap();
        let ds = random_dataset(4, 1, 2, 6);
        let mut model = fit(&ds, &spec, &ExecConfig::sequential(), 2).unwrap();
        model.weights = WeightSet::zeros(&spec).unwrap();
        model.weights.beta = vec![2.0];
        let preds = predict(&model, &ds, 0..4).unwrap();
        for p in preds {
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_predictions_score_zero() {
        let spec = ArchitectureSpec::elman(4, 3, 1).unwrap();
        let mut ds = random_dataset(50, 1, 3, 9);
        let model = fit(&ds, &spec, &ExecConfig::sequential(), 4).unwrap();
        let preds = predict(&model, &ds, 0..50).unwrap();
        for (i, p) in preds.iter().enumerate() {
            ds.y.data_mut()[i] = *p;
        }
        let refit = TrainedModel {
            weights: model.weights.clone(),
            ..model
        };
        let report = evaluate(&refit, &ds).unwrap();
        assert!(report.rmse_train < 1e-12);
    }

    #[test]
    fn constant_predictor_rmse_equals_std() {
        // Evaluating y_hat == mean(Y_test) gives RMSE == population std of
        // Y_test; checked through the report arithmetic directly.
        let ds = random_dataset(40, 1, 2, 12);
        let rows = 0..40;
        let mean = rows.clone().map(|i| ds.y.get1(i)).sum::<f64>() / 40.0;
        let std = (rows.clone().map(|i| (ds.y.get1(i) - mean).powi(2)).sum::<f64>() / 40.0).sqrt();
        let rmse = (rows.clone().map(|i| (mean - ds.y.get1(i)).powi(2)).sum::<f64>() / 40.0).sqrt();
        assert!((rmse - std).abs() < 1e-12);
    }

    #[test]
    fn ar2_beats_naive_baseline() {
        let series = synth_series(SynthKind::Ar2, 1500, 0.1, 3).unwrap();
        let ds = normalize_split(&window(&series, 10).unwrap(), 0.8).unwrap();
        let spec = ArchitectureSpec::elman(10, 10, 1).unwrap();
        let model = fit(&ds, &spec, &ExecConfig::sequential(), 3).unwrap();
        let report = evaluate(&model, &ds).unwrap();
        let naive = naive_last_value_rmse(&ds, ds.test_rows());
        assert!(
            report.rmse_test < naive,
            "model rmse {} vs naive {}",
            report.rmse_test,
            naive
        );
    }

    #[test]
    fn timing_fields_sum_to_total() {
        let spec = ArchitectureSpec::lstm(3, 4, 1).unwrap();
        let ds = random_dataset(64, 1, 4, 8);
        let model = fit(&ds, &spec, &ExecConfig::basic(16), 5).unwrap();
        let t = model.timing;
        assert_eq!(
            t.total(),
            t.init + t.transfer_in + t.h_compute + t.solve + t.transfer_out
        );
    }

    #[test]
    fn recursive_mode_differs_from_teacher_forcing_for_jordan() {
        let series = synth_series(SynthKind::Ar2, 400, 0.2, 8).unwrap();
        let ds = normalize_split(&window(&series, 6).unwrap(), 0.8).unwrap();
        let spec = ArchitectureSpec::jordan(6, 6, 1).unwrap();
        let model = fit(&ds, &spec, &ExecConfig::sequential(), 21).unwrap();
        let teacher = predict(&model, &ds, ds.test_rows()).unwrap();
        let recursive =
            predict_with_mode(&model, &ds, ds.test_rows(), FeedbackMode::Recursive).unwrap();
        assert_eq!(teacher.len(), recursive.len());
        assert!(teacher
            .iter()
            .zip(&recursive)
            .any(|(a, b)| (a - b).abs() > 1e-12));
    }
}
