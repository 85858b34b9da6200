//! Hyperparameter selection and out-of-sample testing protocols.
//!
//! Two selection schemes are provided:
//!
//! * [`holdout_select`]: a single random split into a partial training set
//!   (roughly 70%) and a validation set; every grid candidate is fitted on
//!   the training part and scored by average validation log-likelihood, the
//!   winner is refitted on the full data.
//! * [`sliding_window_test`] / [`realdata_protocol`]: for ordered series,
//!   train on an N-day window ending at an anchor day, score the total
//!   log-likelihood of the following ten (by default) days; parameters are
//!   selected on one block of anchors and evaluated on a later block.
//!
//! Candidates that produce a singular estimate score negative infinity and
//! therefore rank last without special handling; candidates whose fit errors
//! out are treated the same way.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::factor::FactorModelEstimate;
use crate::likelihood::{avg_loglik, total_loglik};
use crate::linalg::SampleStats;

/// A single-holdout cross-validation plan.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoldoutPlan {
    /// Fraction of observations used for the partial training set; the
    /// training row count is `ceil(fraction * N)`.
    pub train_fraction: f64,
    /// Seed for the random split.
    pub seed: u64,
}

impl HoldoutPlan {
    pub fn new(seed: u64) -> Self {
        HoldoutPlan {
            train_fraction: 0.7,
            seed,
        }
    }
}

/// A strictly increasing candidate list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid<P> {
    values: Vec<P>,
}

impl<P: PartialOrd + Clone> ParamGrid<P> {
    pub fn new(values: Vec<P>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::parameter("parameter grid must be non-empty"));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::parameter(
                "parameter grid must be strictly increasing",
            ));
        }
        Ok(ParamGrid { values })
    }

    /// Grid from an inclusive `(start, step, stop)` triple.
    pub fn from_triple(start: f64, step: f64, stop: f64) -> Result<ParamGrid<f64>> {
        if !(step > 0.0) || stop < start {
            return Err(Error::parameter(
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
        ParamGrid::new(values)
    }

    pub fn values(&self) -> &[P] {
        &self.values
    }
}

/// Outcome of a holdout selection.
#[derive(Debug, Clone)]
pub struct Selection<P> {
    /// The winning hyperparameter (first in grid order on ties).
    pub param: P,
    /// Estimate refitted on the full data with the winning parameter.
    pub estimate: FactorModelEstimate,
    /// Average validation log-likelihood per candidate, in grid order.
    /// Candidates whose fit failed score negative infinity.
    pub validation_scores: Vec<f64>,
    pub n_train: usize,
    pub n_valid: usize,
}

/// Select a hyperparameter by single-holdout validation and refit on the
/// full data.
///
/// The split is a deterministic function of the plan's seed: a seeded
/// shuffle of row indices, with the first `ceil(fraction * N)` rows going to
/// the partial training set. Ties between candidates go to the earlier grid
/// entry (the smaller value for ascending grids).
pub fn holdout_select<P, F>(
    fit: F,
    grid: &[P],
    data: &Dataset,
    plan: &HoldoutPlan,
) -> Result<Selection<P>>
where
    P: Clone + Sync + Send,
    F: Fn(&SampleStats, &P) -> Result<FactorModelEstimate> + Sync,
{
    if grid.is_empty() {
        return Err(Error::parameter("parameter grid must be non-empty"));
    }
    if !(plan.train_fraction > 0.0 && plan.train_fraction < 1.0) {
        return Err(Error::parameter(
            "train fraction must be strictly between 0 and 1",
        ));
    }
    let n = data.n();
    let n_train = ((plan.train_fraction * n as f64).ceil() as usize).min(n);
    let n_valid = n - n_train;
    if n_train == 0 || n_valid == 0 {
        return Err(Error::parameter(format!(
            "holdout split needs both parts non-empty: N={n} at fraction {} gives {n_train}/{n_valid}",
            plan.train_fraction
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(plan.seed);
    indices.shuffle(&mut rng);
    let train = data.subset(&indices[..n_train])?;
    let valid = data.subset(&indices[n_train..])?;

    let train_stats = SampleStats::from_dataset(&train);
    let validation_scores: Vec<f64> = grid
        .par_iter()
        .map(|param| match fit(&train_stats, param) {
            Ok(est) => avg_loglik(est.sigma(), &valid),
            Err(_) => f64::NEG_INFINITY,
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, &score) in validation_scores.iter().enumerate() {
        if score > f64::NEG_INFINITY && best.map_or(true, |(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    let (best_idx, _) = best.ok_or_else(|| {
        Error::Selection("every candidate scored negative infinity on the validation set".into())
    })?;

    let full_stats = SampleStats::from_dataset(data);
    let estimate = fit(&full_stats, &grid[best_idx])?;
    Ok(Selection {
        param: grid[best_idx].clone(),
        estimate,
        validation_scores,
        n_train,
        n_valid,
    })
}

/// One sliding-window evaluation: train on the window of `window_n` rows
/// ending at the anchor, score the following `test_len` rows.
///
/// Day indices are 1-based: the anchor `t` trains on days `t-N+1..=t` and
/// tests on days `t+1..=t+test_len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// Training window size N.
    pub window_n: usize,
    /// Anchor day (1-based).
    pub t: usize,
    /// Test horizon.
    pub test_len: usize,
}

impl WindowSpec {
    pub fn new(window_n: usize, t: usize) -> Self {
        WindowSpec {
            window_n,
            t,
            test_len: 10,
        }
    }

    fn validate(&self, series_len: usize) -> Result<()> {
        if self.window_n == 0 || self.test_len == 0 {
            return Err(Error::parameter("window and test lengths must be positive"));
        }
        if self.t < self.window_n {
            return Err(Error::parameter(format!(
                "anchor day {} leaves no room for a training window of {}",
                self.t, self.window_n
            )));
        }
        if self.t + self.test_len > series_len {
            return Err(Error::parameter(format!(
                "test window {}..={} runs past the series (length {series_len})",
                self.t + 1,
                self.t + self.test_len
            )));
        }
        Ok(())
    }
}

/// Train `fit` on the window and return the total log-likelihood of the test
/// rows under the fitted covariance.
pub fn sliding_window_test<F>(fit: F, series: &Dataset, spec: &WindowSpec) -> Result<f64>
where
    F: FnOnce(&Dataset) -> Result<FactorModelEstimate>,
{
    spec.validate(series.n())?;
    let train = series.row_range(spec.t - spec.window_n..spec.t)?;
    let test = series.row_range(spec.t..spec.t + spec.test_len)?;
    let estimate = fit(&train)?;
    Ok(total_loglik(estimate.sigma(), &test))
}

/// Anchors and window size for the full select-then-evaluate protocol on a
/// time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub window_n: usize,
    /// Anchor days (1-based) used to select the hyperparameter.
    pub validation_anchors: Vec<usize>,
    /// Anchor days used to measure out-of-sample performance.
    pub evaluation_anchors: Vec<usize>,
    pub test_len: usize,
}

impl ProtocolSpec {
    /// The default anchor layout for a 1400-row series: estimates every ten
    /// days, selection on days 1200..=1290 and evaluation on 1300..=1390.
    pub fn standard(window_n: usize) -> Self {
        ProtocolSpec {
            window_n,
            validation_anchors: (0..10).map(|j| 1200 + 10 * j).collect(),
            evaluation_anchors: (0..10).map(|j| 1300 + 10 * j).collect(),
            test_len: 10,
        }
    }
}

/// Result of the select-then-evaluate protocol for one learner.
#[derive(Debug, Clone, Serialize)]
pub struct ProtocolReport<P> {
    pub selected: P,
    /// Total validation log-likelihood per candidate, grid order.
    pub validation_totals: Vec<f64>,
    /// Per-evaluation-anchor test totals with the selected parameter.
    pub evaluation_scores: Vec<f64>,
    /// Average per-observation out-of-sample log-likelihood: the sum of the
    /// evaluation totals divided by (number of anchors x test length).
    pub out_of_sample: f64,
}

/// Select the hyperparameter that maximizes the summed window scores over
/// the validation anchors, then report the average out-of-sample
/// log-likelihood over the evaluation anchors.
pub fn realdata_protocol<P, F>(
    fit: F,
    grid: &[P],
    series: &Dataset,
    spec: &ProtocolSpec,
) -> Result<ProtocolReport<P>>
where
    P: Clone + Sync + Send,
    F: Fn(&SampleStats, &P) -> Result<FactorModelEstimate> + Sync,
{
    if grid.is_empty() {
        return Err(Error::parameter("parameter grid must be non-empty"));
    }
    if spec.validation_anchors.is_empty() || spec.evaluation_anchors.is_empty() {
        return Err(Error::parameter("anchor lists must be non-empty"));
    }
    for &t in spec
        .validation_anchors
        .iter()
        .chain(spec.evaluation_anchors.iter())
    {
        WindowSpec {
            window_n: spec.window_n,
            t,
            test_len: spec.test_len,
        }
        .validate(series.n())?;
    }

    // Anchor windows are shared across candidates: compute the training
    // statistics once per anchor.
    let prepared: Vec<(SampleStats, Dataset)> = spec
        .validation_anchors
        .iter()
        .map(|&t| {
            let train = series.row_range(t - spec.window_n..t)?;
            let test = series.row_range(t..t + spec.test_len)?;
            Ok((SampleStats::from_dataset(&train), test))
        })
        .collect::<Result<_>>()?;

    let validation_totals: Vec<f64> = grid
        .par_iter()
        .map(|param| {
            prepared
                .iter()
                .map(|(stats, test)| match fit(stats, param) {
                    Ok(est) => total_loglik(est.sigma(), test),
                    Err(_) => f64::NEG_INFINITY,
                })
                .sum::<f64>()
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, &score) in validation_totals.iter().enumerate() {
        if score > f64::NEG_INFINITY && best.map_or(true, |(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    let (best_idx, _) = best.ok_or_else(|| {
        Error::Selection(
            "every candidate scored negative infinity across validation anchors".into(),
        )
    })?;
    let selected = grid[best_idx].clone();

    let evaluation_scores: Vec<f64> = spec
        .evaluation_anchors
        .par_iter()
        .map(|&t| {
            sliding_window_test(
                |train| fit(&SampleStats::from_dataset(train), &selected),
                series,
                &WindowSpec {
                    window_n: spec.window_n,
                    t,
                    test_len: spec.test_len,
                },
            )
        })
        .collect::<Result<_>>()?;

    let denom = (spec.evaluation_anchors.len() * spec.test_len) as f64;
    let out_of_sample = evaluation_scores.iter().sum::<f64>() / denom;
    Ok(ProtocolReport {
        selected,
        validation_totals,
        evaluation_scores,
        out_of_sample,
    })
}
