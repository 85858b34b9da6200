//! Replication-study drivers shared by the CLI and the acceptance suite.
//!
//! A synthetic study draws ground truth and data per replication, selects
//! each estimator's hyperparameter by holdout validation, and scores the
//! refitted estimate by expected out-of-sample log-likelihood against the
//! generating covariance. Equivalent-data-requirement sweeps can be attached
//! per (baseline, challenger) pair; by default the challenger re-runs its
//! cross-validation on every prefix.
//!
//! Replications run in parallel over a work queue with per-replication
//! derived seeds, and results are reduced in replication order, so the
//! parallelism degree never changes the output.

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_estimator, grid_for, EstimatorKind, HyperParam};
use crate::factor::FactorModelEstimate;
use crate::likelihood::expected_loglik;
use crate::linalg::CovMatrix;
use crate::metrics::{aggregate, equivalent_data_requirement, EdrParams, EdrStatus};
use crate::select::{holdout_select, HoldoutPlan, ProtocolSpec};
use crate::synth::{derive_seed, gen_nonuniform, gen_uniform, SynthSpec};

/// Configuration of a synthetic replication study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthStudyConfig {
    pub m: usize,
    pub k_star: usize,
    pub sigma_f: f64,
    /// 0 for the uniform-residual generator, positive for the nonuniform one.
    #[serde(default)]
    pub sigma_r: f64,
    pub n_values: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_k_grid", deserialize_with = "usize_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_lambda_grid", deserialize_with = "f64_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// (baseline, challenger) pairs to sweep the equivalent data requirement
    /// for, per replication.
    #[serde(default)]
    pub edr_pairs: Vec<(EstimatorKind, EstimatorKind)>,
    /// Step size for the sweeps; defaults to 0.02 for uniform studies and
    /// 0.10 for nonuniform ones when absent.
    #[serde(default)]
    pub edr_alpha: Option<f64>,
    /// Reuse the hyperparameter selected on the full data when evaluating
    /// prefixes instead of re-running cross-validation per prefix.
    #[serde(default)]
    pub edr_reuse_params: bool,
}

/// Candidate grids in config files are either explicit lists or inclusive
/// `{"start", "step", "stop"}` triples.
#[derive(Deserialize)]
#[serde(untagged)]
enum GridSpec<T> {
    List(Vec<T>),
    Triple { start: T, step: T, stop: T },
}

fn f64_grid<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<f64>, D::Error> {
    match GridSpec::<f64>::deserialize(de)? {
        GridSpec::List(v) => Ok(v),
        GridSpec::Triple { start, step, stop } => {
            if !(step > 0.0) || stop < start {
                return Err(serde::de::Error::custom(
                    "grid triple needs positive step and stop >= start",
                ));
            }
            let mut values = Vec::new();
            let mut i = 0usize;
            loop {
                let v = start + step * i as f64;
                if v > stop + 1e-12 * step {
                    break;
                }
                values.push(v);
                i += 1;
            }
            Ok(values)
        }
    }
}

fn usize_grid<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<Vec<usize>, D::Error> {
    match GridSpec::<usize>::deserialize(de)? {
        GridSpec::List(v) => Ok(v),
        GridSpec::Triple { start, step, stop } => {
            if step == 0 || stop < start {
                return Err(serde::de::Error::custom(
                    "grid triple needs positive step and stop >= start",
                ));
            }
            Ok((start..=stop).step_by(step).collect())
        }
    }
}

fn default_k_grid() -> Vec<usize> {
    (0..=15).collect()
}

fn default_lambda_grid() -> Vec<f64> {
    (0..16).map(|i| 100.0 + 20.0 * i as f64).collect()
}

fn default_train_fraction() -> f64 {
    0.7
}

impl SynthStudyConfig {
    pub fn edr_alpha(&self) -> f64 {
        self.edr_alpha
            .unwrap_or(if self.sigma_r > 0.0 { 0.10 } else { 0.02 })
    }
}

/// One estimator's outcome on one replication.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRow {
    pub n: usize,
    pub replication: usize,
    pub estimator: EstimatorKind,
    pub selected: HyperParam,
    /// Expected out-of-sample log-likelihood against the generating
    /// covariance.
    pub oos_loglik: f64,
}

/// One equivalent-data-requirement sweep outcome.
#[derive(Debug, Clone, Serialize)]
pub struct EdrRow {
    pub n: usize,
    pub replication: usize,
    pub baseline: EstimatorKind,
    pub challenger: EstimatorKind,
    pub gamma: f64,
    pub status: EdrStatus,
}

/// Aggregate over replications for one (n, estimator) cell.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub n: usize,
    pub estimator: EstimatorKind,
    /// `log2(N / M)`: the data-availability axis studies are plotted on.
    pub log2_n_over_m: f64,
    pub mean: f64,
    pub ci95: f64,
}

/// Aggregate of the EDR sweeps for one (n, pair) cell.
#[derive(Debug, Clone, Serialize)]
pub struct EdrAggregateRow {
    pub n: usize,
    pub baseline: EstimatorKind,
    pub challenger: EstimatorKind,
    pub log2_n_over_m: f64,
    pub mean: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthStudyResult {
    pub rows: Vec<ReplicationRow>,
    pub edr_rows: Vec<EdrRow>,
    pub aggregates: Vec<AggregateRow>,
    pub edr_aggregates: Vec<EdrAggregateRow>,
}

/// Select a hyperparameter by holdout validation and refit, for one
/// estimator on one dataset.
pub fn cv_fit(
    kind: EstimatorKind,
    data: &Dataset,
    k_grid: &[usize],
    lambda_grid: &[f64],
    plan: &HoldoutPlan,
) -> Result<(HyperParam, FactorModelEstimate)> {
    let grid = grid_for(kind, k_grid, lambda_grid);
    let selection = holdout_select(
        |stats, param| fit_estimator(kind, stats, param),
        &grid,
        data,
        plan,
    )?;
    Ok((selection.param, selection.estimate))
}

fn generate(spec: &SynthSpec) -> Result<(Dataset, CovMatrix)> {
    let (data, truth) = if spec.sigma_r > 0.0 {
        gen_nonuniform(spec)?
    } else {
        gen_uniform(spec)?
    };
    Ok((data, truth.sigma_star))
}

/// Run the full study described by `cfg`.
pub fn run_synth_study(cfg: &SynthStudyConfig) -> Result<SynthStudyResult> {
    if cfg.replications == 0 || cfg.n_values.is_empty() || cfg.estimators.is_empty() {
        return Err(Error::parameter(
            "study needs replications, sample sizes, and estimators",
        ));
    }
    let edr_params = EdrParams::new(cfg.edr_alpha())?;

    let mut tasks: Vec<(usize, usize)> = Vec::new();
    for &n in &cfg.n_values {
        for rep in 0..cfg.replications {
            tasks.push((n, rep));
        }
    }

    let per_task: Vec<Result<(Vec<ReplicationRow>, Vec<EdrRow>)>> = tasks
        .par_iter()
        .map(|&(n, rep)| {
            let task_seed = derive_seed(cfg.seed, (n as u64) << 20 | rep as u64);
            let spec = SynthSpec {
                m: cfg.m,
                k_star: cfg.k_star,
                sigma_f: cfg.sigma_f,
                n,
                sigma_r: cfg.sigma_r,
                seed: derive_seed(task_seed, 0),
            };
            let (data, sigma_star) = generate(&spec)?;
            let plan = HoldoutPlan {
                train_fraction: cfg.train_fraction,
                seed: derive_seed(task_seed, 1),
            };

            let mut rows = Vec::new();
            for &kind in &cfg.estimators {
                let (selected, estimate) =
                    cv_fit(kind, &data, &cfg.k_grid, &cfg.lambda_grid, &plan)?;
                rows.push(ReplicationRow {
                    n,
                    replication: rep,
                    estimator: kind,
                    selected,
                    oos_loglik: expected_loglik(estimate.sigma(), &sigma_star),
                });
            }

            let mut edr_rows = Vec::new();
            for &(baseline, challenger) in &cfg.edr_pairs {
                // Fixed per-estimator parameters for the reuse policy come
                // from a one-time selection on the full data.
                let mut fixed_params = std::collections::HashMap::new();
                if cfg.edr_reuse_params {
                    for kind in [baseline, challenger] {
                        let (param, _) =
                            cv_fit(kind, &data, &cfg.k_grid, &cfg.lambda_grid, &plan)?;
                        fixed_params.insert(kind, param);
                    }
                }
                let evaluator = |kind: &EstimatorKind, subset: &Dataset| {
                    let est = match fixed_params.get(kind) {
                        Some(param) => {
                            let stats = crate::linalg::SampleStats::from_dataset(subset);
                            fit_estimator(*kind, &stats, param)?
                        }
                        None => cv_fit(*kind, subset, &cfg.k_grid, &cfg.lambda_grid, &plan)?.1,
                    };
                    Ok(expected_loglik(est.sigma(), &sigma_star))
                };
                let outcome = equivalent_data_requirement(
                    &baseline,
                    &challenger,
                    &data,
                    &edr_params,
                    evaluator,
                )?;
                edr_rows.push(EdrRow {
                    n,
                    replication: rep,
                    baseline,
                    challenger,
                    gamma: outcome.gamma,
                    status: outcome.status,
                });
            }
            Ok((rows, edr_rows))
        })
        .collect();

    let mut rows = Vec::new();
    let mut edr_rows = Vec::new();
    for outcome in per_task {
        let (r, e) = outcome?;
        rows.extend(r);
        edr_rows.extend(e);
    }

    // Aggregates in (n, estimator) order.
    let mut aggregates = Vec::new();
    for &n in &cfg.n_values {
        for &kind in &cfg.estimators {
            let scores: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n && r.estimator == kind)
                .map(|r| r.oos_loglik)
                .collect();
            if scores.len() >= 2 {
                let agg = aggregate(&scores)?;
                aggregates.push(AggregateRow {
                    n,
                    estimator: kind,
                    log2_n_over_m: (n as f64 / cfg.m as f64).log2(),
                    mean: agg.mean,
                    ci95: agg.ci95,
                });
            }
        }
    }
    let mut edr_aggregates = Vec::new();
    for &n in &cfg.n_values {
        for &(baseline, challenger) in &cfg.edr_pairs {
            let gammas: Vec<f64> = edr_rows
                .iter()
                .filter(|r| r.n == n && r.baseline == baseline && r.challenger == challenger)
                .map(|r| r.gamma)
                .collect();
            if gammas.len() >= 2 {
                let agg = aggregate(&gammas)?;
                edr_aggregates.push(EdrAggregateRow {
                    n,
                    baseline,
                    challenger,
                    log2_n_over_m: (n as f64 / cfg.m as f64).log2(),
                    mean: agg.mean,
                    ci95: agg.ci95,
                });
            }
        }
    }

    Ok(SynthStudyResult {
        rows,
        edr_rows,
        aggregates,
        edr_aggregates,
    })
}

impl SynthStudyResult {
    /// Full replication report for one (n, estimator) cell.
    pub fn report_for(
        &self,
        n: usize,
        estimator: EstimatorKind,
    ) -> Result<crate::metrics::ExperimentReport> {
        let mut scores = Vec::new();
        let mut selected = Vec::new();
        for row in self.rows.iter().filter(|r| r.n == n && r.estimator == estimator) {
            scores.push(row.oos_loglik);
            selected.push(row.selected.to_string());
        }
        crate::metrics::ExperimentReport::from_scores(scores, selected)
    }

    /// Tidy per-replication CSV: one row per (n, replication, estimator).
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("n,replication,estimator,selected,oos_loglik\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.n, r.replication, r.estimator, r.selected, r.oos_loglik
            ));
        }
        out
    }

    /// Aggregate CSV with the log2(N/M) plotting axis.
    pub fn aggregates_csv(&self) -> String {
        let mut out = String::from("n,estimator,log2_n_over_m,mean,ci95\n");
        for r in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.n, r.estimator, r.log2_n_over_m, r.mean, r.ci95
            ));
        }
        out
    }

    /// Per-replication and aggregate EDR CSV blocks.
    pub fn edr_csv(&self) -> String {
        let mut out = String::from("n,replication,baseline,challenger,gamma,status\n");
        for r in &self.edr_rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:?}\n",
                r.n, r.replication, r.baseline, r.challenger, r.gamma, r.status
            ));
        }
        out
    }

    pub fn edr_aggregates_csv(&self) -> String {
        let mut out = String::from("n,baseline,challenger,log2_n_over_m,mean,ci95\n");
        for r in &self.edr_aggregates {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.n, r.baseline, r.challenger, r.log2_n_over_m, r.mean, r.ci95
            ));
        }
        out
    }
}

/// Configuration of the time-series protocol run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealProtocolConfig {
    pub estimators: Vec<EstimatorKind>,
    pub window_sizes: Vec<usize>,
    #[serde(default = "default_real_k_grid", deserialize_with = "usize_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_real_lambda_grid", deserialize_with = "f64_grid")]
    pub lambda_grid: Vec<f64>,
    /// Validation anchors; defaults to 1200, 1210, ..., 1290.
    #[serde(default)]
    pub validation_anchors: Option<Vec<usize>>,
    /// Evaluation anchors; defaults to 1300, 1310, ..., 1390.
    #[serde(default)]
    pub evaluation_anchors: Option<Vec<usize>>,
    #[serde(default = "default_test_len")]
    pub test_len: usize,
}

fn default_real_k_grid() -> Vec<usize> {
    (0..=40).collect()
}

fn default_real_lambda_grid() -> Vec<f64> {
    (0..=40).map(|i| 200.0 + 10.0 * i as f64).collect()
}

fn default_test_len() -> usize {
    10
}

/// One (estimator, window size) protocol outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolRow {
    pub estimator: EstimatorKind,
    pub window_n: usize,
    pub selected: HyperParam,
    pub out_of_sample: f64,
    pub evaluation_scores: Vec<f64>,
}

/// Run the select-then-evaluate protocol for every estimator and window size.
pub fn run_real_protocol(
    cfg: &RealProtocolConfig,
    series: &Dataset,
) -> Result<Vec<ProtocolRow>> {
    if cfg.estimators.is_empty() || cfg.window_sizes.is_empty() {
        return Err(Error::parameter("need estimators and window sizes"));
    }
    let mut rows = Vec::new();
    for &window_n in &cfg.window_sizes {
        let mut spec = ProtocolSpec::standard(window_n);
        if let Some(v) = &cfg.validation_anchors {
            spec.validation_anchors = v.clone();
        }
        if let Some(e) = &cfg.evaluation_anchors {
            spec.evaluation_anchors = e.clone();
        }
        spec.test_len = cfg.test_len;
        for &kind in &cfg.estimators {
            let grid = grid_for(kind, &cfg.k_grid, &cfg.lambda_grid);
            let report = crate::select::realdata_protocol(
                |stats, param| fit_estimator(kind, stats, param),
                &grid,
                series,
                &spec,
            )?;
            rows.push(ProtocolRow {
                estimator: kind,
                window_n,
                selected: report.selected,
                out_of_sample: report.out_of_sample,
                evaluation_scores: report.evaluation_scores,
            });
        }
    }
    Ok(rows)
}

/// Tidy CSV for the protocol rows.
pub fn protocol_csv(rows: &[ProtocolRow]) -> String {
    let mut out = String::from("estimator,window_n,selected,out_of_sample\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.estimator, r.window_n, r.selected, r.out_of_sample
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SynthStudyConfig {
        SynthStudyConfig {
            m: 12,
            k_star: 2,
            sigma_f: 4.0,
            sigma_r: 0.0,
            n_values: vec![24],
            replications: 3,
            seed: 7,
            estimators: vec![EstimatorKind::Urm, EstimatorKind::Utm],
            k_grid: (0..=4).collect(),
            lambda_grid: vec![2.0, 6.0, 12.0, 20.0],
            train_fraction: 0.7,
            edr_pairs: vec![],
            edr_alpha: None,
            edr_reuse_params: false,
        }
    }

    #[test]
    fn study_is_deterministic() {
        let cfg = tiny_config();
        let a = run_synth_study(&cfg).unwrap();
        let b = run_synth_study(&cfg).unwrap();
        assert_eq!(a.rows.len(), 6);
        for (x, y) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(x.oos_loglik, y.oos_loglik);
            assert_eq!(x.selected, y.selected);
        }
        assert_eq!(a.aggregates.len(), 2);
    }

    #[test]
    fn csv_shapes() {
        let cfg = tiny_config();
        let result = run_synth_study(&cfg).unwrap();
        let csv = result.replications_csv();
        assert_eq!(csv.lines().count(), 1 + 6);
        assert!(csv.starts_with("n,replication,estimator,selected,oos_loglik"));
        let agg = result.aggregates_csv();
        assert_eq!(agg.lines().count(), 1 + 2);
    }

    #[test]
    fn edr_pair_produces_rows() {
        let mut cfg = tiny_config();
        cfg.replications = 2;
        cfg.edr_pairs = vec![(EstimatorKind::Urm, EstimatorKind::Utm)];
        cfg.edr_alpha = Some(0.25);
        let result = run_synth_study(&cfg).unwrap();
        assert_eq!(result.edr_rows.len(), 2);
        for row in &result.edr_rows {
            assert!(row.gamma > 0.0 && row.gamma <= 1.0);
        }
        assert_eq!(result.edr_aggregates.len(), 1);
    }

    #[test]
    fn grid_triples_deserialize() {
        let cfg: SynthStudyConfig = serde_json::from_str(
            r#"{"m": 8, "k_star": 1, "sigma_f": 2.0, "n_values": [16], "replications": 2,
                "seed": 3, "estimators": ["urm"],
                "k_grid": {"start": 0, "step": 2, "stop": 6},
                "lambda_grid": {"start": 100.0, "step": 20.0, "stop": 160.0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.k_grid, vec![0, 2, 4, 6]);
        assert_eq!(cfg.lambda_grid, vec![100.0, 120.0, 140.0, 160.0]);
        let report_input: SynthStudyConfig = serde_json::from_str(
            r#"{"m": 8, "k_star": 1, "sigma_f": 2.0, "n_values": [16], "replications": 2,
                "seed": 3, "estimators": ["urm"], "k_grid": [0, 1, 2]}"#,
        )
        .unwrap();
        assert_eq!(report_input.k_grid, vec![0, 1, 2]);
    }

    #[test]
    fn report_for_collects_cell() {
        let cfg = tiny_config();
        let result = run_synth_study(&cfg).unwrap();
        let report = result.report_for(24, EstimatorKind::Utm).unwrap();
        assert_eq!(report.per_replication.len(), 3);
        assert_eq!(report.selected_params.len(), 3);
        assert!(report.ci95 >= 0.0);
    }

    #[test]
    fn selection_concentrates_near_true_rank() {
        // Factor-count selection on easy data should recover K_* = 3 as the
        // mode across seeds.
        let cfg = SynthStudyConfig {
            m: 20,
            k_star: 3,
            sigma_f: 6.0,
            sigma_r: 0.0,
            n_values: vec![80],
            replications: 20,
            seed: 123,
            estimators: vec![EstimatorKind::Urm],
            k_grid: (0..=8).collect(),
            lambda_grid: vec![1.0],
            train_fraction: 0.7,
            edr_pairs: vec![],
            edr_alpha: None,
            edr_reuse_params: false,
        };
        let result = run_synth_study(&cfg).unwrap();
        let mut counts = std::collections::HashMap::new();
        for row in &result.rows {
            if let HyperParam::FactorCount(k) = row.selected {
                *counts.entry(k).or_insert(0usize) += 1;
            }
        }
        let mode = counts.iter().max_by_key(|(_, &c)| c).map(|(&k, _)| k).unwrap();
        assert_eq!(mode, 3, "selected-K histogram: {counts:?}");
    }
}
