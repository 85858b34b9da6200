//! Synthetic factor-model generators with reproducible seeding.
//!
//! Ground truth is built as `Sigma_* = F_*^{1/2} F_*^{T/2} + R_*` where the
//! factor directions are a Haar-distributed orthonormal frame, the factor
//! scales are Gaussian, and the residual is either the identity (uniform
//! case) or `diag(e^{r_1}, ..., e^{r_M})` with `r_i ~ N(0, sigma_r^2)`
//! (nonuniform case). Samples are drawn through the factor form
//! `x = F^{1/2} z + R^{1/2} w`, which costs O(MK) per observation.
//!
//! All randomness flows through a single seeded ChaCha12 generator, so equal
//! seeds give bit-identical output. Replication studies derive per-index
//! seeds with [`derive_seed`] and stay deterministic regardless of how the
//! replications are scheduled.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::CovMatrix;

/// Specification of one synthetic draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Dimension M.
    pub m: usize,
    /// True factor count.
    pub k_star: usize,
    /// Factor scale standard deviation.
    pub sigma_f: f64,
    /// Number of samples to draw.
    pub n: usize,
    /// Log-standard-deviation of the residual variances; 0 selects the
    /// uniform case `R_* = I`.
    pub sigma_r: f64,
    /// RNG seed.
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.k_star > self.m {
            return Err(Error::parameter(format!(
                "true factor count {} exceeds dimension {}",
                self.k_star, self.m
            )));
        }
        if self.m == 0 || self.n == 0 {
            return Err(Error::parameter("dimension and sample count must be positive"));
        }
        if !(self.sigma_f > 0.0) {
            return Err(Error::parameter("factor scale must be positive"));
        }
        if self.sigma_r < 0.0 {
            return Err(Error::parameter("residual log-std must be nonnegative"));
        }
        Ok(())
    }
}

/// The generating model behind a synthetic dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub sigma_star: CovMatrix,
    /// M x K_* square-root factor matrix (columns are scaled orthonormal
    /// directions).
    pub loadings_star: DMatrix<f64>,
    /// Diagonal of the residual part.
    pub residual_star: DVector<f64>,
    /// Seed the draw was made with.
    pub seed: u64,
}

impl GroundTruth {
    /// Serializable sidecar for persisting the ground truth next to a
    /// generated dataset.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "seed": self.seed,
            "m": self.sigma_star.dim(),
            "k_star": self.loadings_star.ncols(),
            "residual_star": self.residual_star.iter().copied().collect::<Vec<f64>>(),
            "loadings_star": matrix_rows(&self.loadings_star),
        })
    }
}

fn matrix_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows())
        .map(|i| (0..mat.ncols()).map(|j| mat[(i, j)]).collect())
        .collect()
}

/// Generate a uniform-residual instance: `R_* = I`.
pub fn gen_uniform(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let residual = DVector::from_element(spec.m, 1.0);
    generate(spec, residual, &mut rng)
}

/// Generate a nonuniform-residual instance:
/// `R_* = diag(e^{r_1}, ..., e^{r_M})` with `r_i ~ N(0, sigma_r^2)`.
pub fn gen_nonuniform(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    if !(spec.sigma_r > 0.0) {
        return Err(Error::parameter(
            "nonuniform generation needs a positive residual log-std",
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let residual = DVector::from_fn(spec.m, |_, _| {
        (spec.sigma_r * rng.sample::<f64, _>(StandardNormal)).exp()
    });
    generate(spec, residual, &mut rng)
}

fn generate(
    spec: &SynthSpec,
    residual: DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> Result<(Dataset, GroundTruth)> {
    let (m, k) = (spec.m, spec.k_star);

    // Haar-distributed orthonormal frame: QR of a standard Gaussian matrix.
    let frame = if k == 0 {
        DMatrix::zeros(m, 0)
    } else {
        let g = DMatrix::from_fn(m, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        qr.q()
    };

    // Factor scales f_k ~ N(0, sigma_f^2); the square-root factor matrix has
    // columns f_k * phi_k.
    let mut loadings = frame;
    for j in 0..k {
        let f: f64 = spec.sigma_f * rng.sample::<f64, _>(StandardNormal);
        loadings.column_mut(j).scale_mut(f);
    }

    let mut sigma_star = &loadings * loadings.transpose();
    for i in 0..m {
        sigma_star[(i, i)] += residual[i];
    }
    let sigma_star = CovMatrix::symmetrized(sigma_star);

    // x = F^{1/2} z + R^{1/2} w, drawn row by row.
    let sqrt_res = residual.map(f64::sqrt);
    let mut samples = DMatrix::zeros(spec.n, m);
    let mut z = DVector::zeros(k);
    for row in 0..spec.n {
        for d in 0..k {
            z[d] = rng.sample::<f64, _>(StandardNormal);
        }
        let common = &loadings * &z;
        for i in 0..m {
            let noise: f64 = rng.sample::<f64, _>(StandardNormal);
            samples[(row, i)] = common[i] + sqrt_res[i] * noise;
        }
    }

    Ok((
        Dataset::new(samples)?,
        GroundTruth {
            sigma_star,
            loadings_star: loadings,
            residual_star: residual,
            seed: spec.seed,
        },
    ))
}

/// Deterministically derive an independent seed for a replication index.
/// SplitMix64 finalizer over the pair, so nearby indices land far apart.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sample_covariance;
    use approx::assert_relative_eq;

    fn base_spec() -> SynthSpec {
        SynthSpec {
            m: 8,
            k_star: 3,
            sigma_f: 5.0,
            n: 20,
            sigma_r: 0.0,
            seed: 12345,
        }
    }

    #[test]
    fn zero_factors_gives_identity_truth() {
        let spec = SynthSpec {
            k_star: 0,
            ..base_spec()
        };
        let (_, truth) = gen_uniform(&spec).unwrap();
        assert!((truth.sigma_star.matrix() - DMatrix::identity(8, 8)).amax() < 1e-15);
    }

    #[test]
    fn truth_spectrum_is_spiked() {
        let spec = base_spec();
        let (_, truth) = gen_uniform(&spec).unwrap();
        let eig = crate::linalg::eigh_desc(&truth.sigma_star);
        // K_* eigenvalues are f_k^2 + 1, the remaining M - K_* are exactly 1.
        for j in 0..3 {
            let f2 = truth.loadings_star.column(j).norm_squared();
            let expect = f2 + 1.0;
            let found = eig
                .values()
                .iter()
                .any(|&v| (v - expect).abs() <= 1e-8 * expect.max(1.0));
            assert!(found, "spike {expect} missing from spectrum");
        }
        for j in 3..8 {
            assert_relative_eq!(eig.values()[j], 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        let spec = SynthSpec {
            m: 30,
            k_star: 6,
            ..base_spec()
        };
        let (_, truth) = gen_uniform(&spec).unwrap();
        // Normalize columns back to unit length before the Gram check.
        let mut frame = truth.loadings_star.clone();
        for j in 0..6 {
            let norm = frame.column(j).norm();
            frame.column_mut(j).scale_mut(1.0 / norm);
        }
        let gram = frame.transpose() * frame;
        assert!((gram - DMatrix::identity(6, 6)).amax() <= 1e-10);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = base_spec();
        let (a, ta) = gen_uniform(&spec).unwrap();
        let (b, tb) = gen_uniform(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.sigma_star.matrix(), tb.sigma_star.matrix());
        let other = SynthSpec {
            seed: 54321,
            ..spec
        };
        let (c, _) = gen_uniform(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn nonuniform_requires_positive_sigma_r() {
        assert!(gen_nonuniform(&base_spec()).is_err());
    }

    #[test]
    fn nonuniform_log_residual_moments() {
        // Law of large numbers: at M = 2000 the sample moments of log R_ii
        // are close to (0, sigma_r^2).
        let spec = SynthSpec {
            m: 2000,
            k_star: 0,
            sigma_f: 1.0,
            n: 1,
            sigma_r: 0.8,
            seed: 99,
        };
        let (_, truth) = gen_nonuniform(&spec).unwrap();
        let logs: Vec<f64> = truth.residual_star.iter().map(|r| r.ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64;
        assert!(mean.abs() < 0.06, "mean of log residuals {mean}");
        assert_relative_eq!(var, 0.64, max_relative = 0.12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_uniform(&SynthSpec {
            k_star: 9,
            ..base_spec()
        })
        .is_err());
        assert!(gen_uniform(&SynthSpec {
            sigma_f: 0.0,
            ..base_spec()
        })
        .is_err());
    }

    #[test]
    fn empirical_covariance_approaches_truth() {
        let spec = SynthSpec {
            m: 5,
            k_star: 2,
            sigma_f: 2.0,
            n: 1_000_000,
            sigma_r: 0.0,
            seed: 7,
        };
        let (data, truth) = gen_uniform(&spec).unwrap();
        let sam = sample_covariance(&data);
        let scale = truth.sigma_star.matrix().amax();
        let err = (sam.matrix() - truth.sigma_star.matrix()).amax() / scale;
        assert!(err < 0.01, "empirical covariance off by {err}");
    }

    #[test]
    fn ground_truth_sidecar_is_serializable() {
        let (_, truth) = gen_uniform(&base_spec()).unwrap();
        let json = truth.to_json();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["m"], 8);
        assert_eq!(json["k_star"], 3);
        assert_eq!(json["residual_star"].as_array().unwrap().len(), 8);
        assert_eq!(json["loadings_star"].as_array().unwrap().len(), 8);
    }

    #[test]
    fn derived_seeds_differ() {
        let s0 = derive_seed(42, 0);
        let s1 = derive_seed(42, 1);
        let s2 = derive_seed(43, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, s2);
        assert_eq!(s0, derive_seed(42, 0));
    }
}
