//! Experiment aggregation: confidence intervals and the equivalent data
//! requirement.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Mean and normal-approximation 95% confidence half-width. The standard
/// error uses the 1/n variance estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub ci95: f64,
}

/// Aggregate a list of at least two scores.
pub fn aggregate(scores: &[f64]) -> Result<Aggregate> {
    if scores.len() < 2 {
        return Err(Error::parameter(
            "aggregation needs at least two scores",
        ));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let ci95 = 1.96 * (var / n).sqrt();
    Ok(Aggregate { mean, ci95 })
}

/// Replication-level experiment summary: every score, the hyperparameter
/// each replication selected, and the normal-approximation aggregate.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub per_replication: Vec<f64>,
    pub selected_params: Vec<String>,
    pub mean: f64,
    pub ci95: f64,
}

impl ExperimentReport {
    pub fn from_scores(per_replication: Vec<f64>, selected_params: Vec<String>) -> Result<Self> {
        if per_replication.len() != selected_params.len() {
            return Err(Error::parameter(
                "scores and selected parameters must align",
            ));
        }
        let agg = aggregate(&per_replication)?;
        Ok(ExperimentReport {
            per_replication,
            selected_params,
            mean: agg.mean,
            ci95: agg.ci95,
        })
    }
}

/// Step size for the equivalent-data-requirement sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdrParams {
    /// Fraction removed per step; 0.02 for uniform-residual experiments and
    /// 0.10 for nonuniform ones.
    pub alpha: f64,
}

impl EdrParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::parameter(
                "step size must be strictly between 0 and 1",
            ));
        }
        Ok(EdrParams { alpha })
    }
}

/// How the returned fraction was determined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdrStatus {
    /// The crossing was bracketed and linearly interpolated.
    Interpolated,
    /// The challenger scored below the baseline already on the full data;
    /// gamma = 1 is returned as a flag value.
    BaselineBetterAtFull,
    /// The challenger still beat the baseline at the smallest tested prefix;
    /// gamma is the smallest tested fraction.
    FloorReached,
}

/// Result of an equivalent-data-requirement evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct EdrOutcome {
    /// Fraction of the data the challenger needs to match the baseline's
    /// full-data score.
    pub gamma: f64,
    pub status: EdrStatus,
    /// Baseline score on the full data.
    pub baseline: f64,
    /// `(gamma_i, challenger score on the gamma_i prefix)` for each step
    /// taken, in sweep order.
    pub trace: Vec<(f64, f64)>,
}

/// Fraction of training data the challenger `u2` needs to match the
/// baseline `u1`'s full-data out-of-sample score.
///
/// The data prefix shrinks in steps of `alpha` (prefix sets are nested);
/// when the challenger's score first drops below the baseline, the crossing
/// fraction is linearly interpolated between the last two steps. Prefix row
/// counts are `round(gamma * N)` clamped to at least one row.
pub fn equivalent_data_requirement<L, E>(
    u1: &L,
    u2: &L,
    data: &Dataset,
    params: &EdrParams,
    evaluator: E,
) -> Result<EdrOutcome>
where
    E: Fn(&L, &Dataset) -> Result<f64>,
{
    let n = data.n();
    let baseline = evaluator(u1, data)?;
    if !baseline.is_finite() && baseline != f64::NEG_INFINITY {
        return Err(Error::input("baseline score is not comparable"));
    }

    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut i = 0usize;
    loop {
        let gamma = 1.0 - i as f64 * params.alpha;
        if gamma <= 0.0 {
            let (g_last, _) = *trace.last().expect("at least the full prefix was tested");
            return Ok(EdrOutcome {
                gamma: g_last,
                status: EdrStatus::FloorReached,
                baseline,
                trace,
            });
        }
        let rows = ((gamma * n as f64).round() as usize).max(1);
        let prefix = data.prefix(rows)?;
        let score = evaluator(u2, &prefix)?;
        trace.push((gamma, score));
        if score < baseline {
            if i == 0 {
                return Ok(EdrOutcome {
                    gamma: 1.0,
                    status: EdrStatus::BaselineBetterAtFull,
                    baseline,
                    trace,
                });
            }
            let (_, prev_score) = trace[i - 1];
            let gamma = gamma + params.alpha * (baseline - score) / (prev_score - score);
            return Ok(EdrOutcome {
                gamma,
                status: EdrStatus::Interpolated,
                baseline,
                trace,
            });
        }
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn dummy_data(n: usize) -> Dataset {
        Dataset::new(DMatrix::from_fn(n, 1, |i, _| i as f64 + 0.5)).unwrap()
    }

    #[test]
    fn aggregate_constant_list_has_zero_width() {
        let agg = aggregate(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(agg.mean, 2.0);
        assert_eq!(agg.ci95, 0.0);
    }

    #[test]
    fn aggregate_two_points() {
        let agg = aggregate(&[0.0, 2.0]).unwrap();
        assert_eq!(agg.mean, 1.0);
        assert_relative_eq!(agg.ci95, 1.96 / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(agg.ci95, 1.3859, max_relative = 1e-4);
    }

    #[test]
    fn aggregate_needs_two_scores() {
        assert!(aggregate(&[1.0]).is_err());
    }

    #[test]
    fn aggregate_standard_normal_ci() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let draws: Vec<f64> = (0..100)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let agg = aggregate(&draws).unwrap();
        // CI half-width should be near 1.96/10 = 0.196, within 30%.
        assert!((agg.ci95 - 0.196).abs() < 0.3 * 0.196, "ci95 = {}", agg.ci95);
    }

    #[test]
    fn identical_learners_with_increasing_score_give_exactly_one() {
        // Score strictly increasing in prefix length; U1 = U2 means the
        // interpolation lands exactly on the full-data endpoint.
        let data = dummy_data(100);
        let eval = |_l: &(), d: &Dataset| Ok(d.n() as f64);
        let out =
            equivalent_data_requirement(&(), &(), &data, &EdrParams::new(0.1).unwrap(), eval)
                .unwrap();
        assert_eq!(out.gamma, 1.0);
        assert_eq!(out.status, EdrStatus::Interpolated);
    }

    #[test]
    fn hand_built_interpolation() {
        // Challenger scores 10 at gamma=1 and 8 at gamma=0.9 against a
        // baseline of 9: gamma = 0.9 + 0.1 * (9-8)/(10-8) = 0.95.
        let data = dummy_data(10);
        let eval = |l: &u8, d: &Dataset| {
            Ok(match (*l, d.n()) {
                (1, _) => 9.0,
                (2, 10) => 10.0,
                (2, 9) => 8.0,
                _ => panic!("unexpected prefix"),
            })
        };
        let out = equivalent_data_requirement(&1u8, &2u8, &data, &EdrParams::new(0.1).unwrap(), eval)
            .unwrap();
        assert_relative_eq!(out.gamma, 0.95, max_relative = 1e-12);
        assert_eq!(out.status, EdrStatus::Interpolated);
    }

    #[test]
    fn weaker_challenger_flags_full_data() {
        let data = dummy_data(10);
        let eval = |l: &u8, _d: &Dataset| Ok(if *l == 1 { 5.0 } else { 3.0 });
        let out = equivalent_data_requirement(&1u8, &2u8, &data, &EdrParams::new(0.1).unwrap(), eval)
            .unwrap();
        assert_eq!(out.gamma, 1.0);
        assert_eq!(out.status, EdrStatus::BaselineBetterAtFull);
    }

    #[test]
    fn unbeatable_challenger_hits_floor() {
        let data = dummy_data(10);
        let eval = |l: &u8, _d: &Dataset| Ok(if *l == 1 { 5.0 } else { 100.0 });
        let out = equivalent_data_requirement(&1u8, &2u8, &data, &EdrParams::new(0.3).unwrap(), eval)
            .unwrap();
        assert_eq!(out.status, EdrStatus::FloorReached);
        assert!(out.gamma > 0.0 && out.gamma <= 1.0);
    }

    #[test]
    fn prefixes_are_nested_and_shrinking() {
        let data = dummy_data(50);
        let mut sizes: Vec<usize> = Vec::new();
        let eval = |l: &u8, d: &Dataset| {
            if *l == 2 {
                // Record challenger prefix sizes through an out-of-band cell.
                Ok(d.n() as f64)
            } else {
                Ok(20.0)
            }
        };
        let out = equivalent_data_requirement(&1u8, &2u8, &data, &EdrParams::new(0.2).unwrap(), eval)
            .unwrap();
        for (gamma, score) in &out.trace {
            sizes.push(*score as usize);
            assert!(*gamma > 0.0 && *gamma <= 1.0);
        }
        for w in sizes.windows(2) {
            assert!(w[1] < w[0], "prefixes must strictly shrink: {sizes:?}");
        }
    }

    #[test]
    fn step_size_validated() {
        assert!(EdrParams::new(0.0).is_err());
        assert!(EdrParams::new(1.0).is_err());
        assert!(EdrParams::new(0.02).is_ok());
    }
}
