//! Monte Carlo harness: matrix ensembles, the production iteration loop on
//! packed symmetric storage, and seeded, trial-parallel moment estimation.
//!
//! Determinism contract: a report depends only on the configuration
//! (including the seed), never on the worker count. Each trial owns an RNG
//! derived from `(seed, trial index)` and runs single-threaded; aggregation
//! folds trials in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use wickamp_core::amp::{empirical_moments, FloatPoly, MatrixLike, OnsagerMode};
use wickamp_core::poly::ScaledPolynomial;
use wickamp_core::rational::{rational_to_f64, Rational};
use wickamp_core::se::{predicted_moment, se_sequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// Entries `N(0, 1/N)`.
    Gaussian,
    /// Entries `±1/sqrt(N)`.
    Rademacher,
    /// Entries uniform on `[-sqrt(3/N), sqrt(3/N)]`.
    UniformScaled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    AllOnes,
    /// Independent `N(0, tau0_sq)` entries.
    SubGaussianIid { tau0_sq: Rational },
}

#[derive(Debug, Clone)]
pub struct AmpConfig {
    pub n: usize,
    pub t_max: usize,
    pub f: Vec<ScaledPolynomial>,
    pub ensemble: Ensemble,
    pub init: InitKind,
    pub seed: u64,
    pub trials: usize,
    pub onsager: OnsagerMode,
    /// Pass when `|empirical - predicted| <= max(tol_abs, z_score * stderr)`.
    pub tol_abs: f64,
    pub z_score: f64,
}

impl AmpConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::BadConfig("dimension must be at least 2".into()));
        }
        if self.trials < 1 {
            return Err(SimError::BadConfig("need at least one trial".into()));
        }
        if self.f.len() < self.t_max {
            return Err(SimError::BadConfig(format!(
                "need {} nonlinearities for t_max, have {}",
                self.t_max,
                self.f.len()
            )));
        }
        if !self.f.first().map_or(false, ScaledPolynomial::is_identity) {
            return Err(SimError::BadConfig("the time-0 nonlinearity must be z".into()));
        }
        Ok(())
    }

    pub fn tau0_sq(&self) -> Rational {
        match &self.init {
            InitKind::AllOnes => Rational::from_integer(1.into()),
            InitKind::SubGaussianIid { tau0_sq } => tau0_sq.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("iterate became non-finite in trial {trial} at step {step}")]
    NonFinite { trial: usize, step: usize },
    #[error("exhaustive mode needs the rademacher ensemble and dimension <= 4, got {0}")]
    ExhaustiveTooLarge(usize),
}

/// Symmetric matrix with zero diagonal, strict upper triangle stored
/// row-major.
#[derive(Debug, Clone)]
pub struct PackedSymmetric {
    n: usize,
    upper: Vec<f64>,
}

impl PackedSymmetric {
    pub fn from_upper(n: usize, upper: Vec<f64>) -> Self {
        assert_eq!(upper.len(), n * (n - 1) / 2);
        PackedSymmetric { n, upper }
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        // offset of row i = sum_{r<i} (n-1-r)
        i * (self.n - 1) - i * (i + 1) / 2 + (j - 1)
    }

    /// One pass computing both `sum_j A_ij u_j` and `sum_j A_ij^2 w_j`.
    pub fn apply_both(&self, u: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut lin = vec![0.0; n];
        let mut sq = vec![0.0; n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.upper[k];
                k += 1;
                lin[i] += a * u[j];
                lin[j] += a * u[i];
                let a2 = a * a;
                sq[i] += a2 * w[j];
                sq[j] += a2 * w[i];
            }
        }
        (lin, sq)
    }
}

impl MatrixLike for PackedSymmetric {
    fn size(&self) -> usize {
        self.n
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else if i < j {
            self.upper[self.index(i, j)]
        } else {
            self.upper[self.index(j, i)]
        }
    }
}

/// Samples a symmetric zero-diagonal matrix with i.i.d. upper-triangle
/// entries of mean zero and variance `1/N`.
pub fn sample_matrix(n: usize, ensemble: Ensemble, rng: &mut ChaCha12Rng) -> PackedSymmetric {
    let count = n * (n - 1) / 2;
    let mut upper = Vec::with_capacity(count);
    match ensemble {
        Ensemble::Gaussian => {
            let scale = (1.0 / n as f64).sqrt();
            for _ in 0..count {
                let z: f64 = StandardNormal.sample(rng);
                upper.push(scale * z);
            }
        }
        Ensemble::Rademacher => {
            let scale = (1.0 / n as f64).sqrt();
            for _ in 0..count {
                let sign: bool = rng.random();
                upper.push(if sign { scale } else { -scale });
            }
        }
        Ensemble::UniformScaled => {
            let bound = (3.0 / n as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("valid range");
            for _ in 0..count {
                upper.push(dist.sample(rng));
            }
        }
    }
    PackedSymmetric::from_upper(n, upper)
}

fn sample_init(cfg: &AmpConfig, rng: &mut ChaCha12Rng) -> Vec<f64> {
    match &cfg.init {
        InitKind::AllOnes => vec![1.0; cfg.n],
        InitKind::SubGaussianIid { tau0_sq } => {
            let sd = rational_to_f64(tau0_sq).sqrt();
            (0..cfg.n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                })
                .collect()
        }
    }
}

/// The iteration on packed storage, one combined matrix pass per step.
/// Matches `wickamp_core::amp::run_amp` on the same inputs.
pub fn run_amp_packed(
    a: &PackedSymmetric,
    f: &[FloatPoly],
    x0: &[f64],
    t_max: usize,
    onsager: OnsagerMode,
) -> Result<Vec<Vec<f64>>, wickamp_core::amp::AmpError> {
    let n = a.size();
    assert_eq!(x0.len(), n);
    assert!(f.len() >= t_max);
    let mut iterates: Vec<Vec<f64>> = Vec::with_capacity(t_max);
    let mut prev: Vec<f64> = Vec::new();
    let mut cur = x0.to_vec();
    for t in 0..t_max {
        let ft = &f[t];
        let fx: Vec<f64> = cur.iter().map(|&x| ft.eval(x)).collect();
        let dfx: Vec<f64> = cur.iter().map(|&x| ft.eval_deriv(x)).collect();
        let (lin, sq) = a.apply_both(&fx, &dfx);
        let deriv_mean: f64 = dfx.iter().sum::<f64>() / n as f64;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let correction = if t == 0 {
                0.0
            } else {
                let prev_term = f[t - 1].eval(prev[i]);
                match onsager {
                    OnsagerMode::PaperExact => sq[i] * prev_term,
                    OnsagerMode::MeanField => deriv_mean * prev_term,
                    OnsagerMode::Disabled => 0.0,
                }
            };
            next[i] = lin[i] - correction;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(wickamp_core::amp::AmpError::NonFinite { step: t + 1 });
        }
        prev = std::mem::replace(&mut cur, next);
        iterates.push(cur.clone());
    }
    let _ = prev;
    Ok(iterates)
}

/// One `(t, m)` cell of a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: usize,
    pub m: u32,
    pub empirical: f64,
    pub stderr: f64,
    /// Exact prediction as `numerator/denominator`.
    pub predicted: String,
    pub predicted_f64: f64,
    pub abs_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub ensemble: Ensemble,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub tol_abs: f64,
    pub z_score: f64,
    pub rows: Vec<MomentRow>,
    pub all_pass: bool,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha12Rng {
    // splitmix64 over (seed, trial) for independent streams
    let mut z = seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ChaCha12Rng::seed_from_u64(z ^ (z >> 31))
}

/// Per-trial moment table: `values[t-1][k]` for the k-th requested power.
fn run_trial(cfg: &AmpConfig, ms: &[u32], trial: usize) -> Result<Vec<Vec<f64>>, SimError> {
    let mut rng = trial_rng(cfg.seed, trial);
    let a = sample_matrix(cfg.n, cfg.ensemble, &mut rng);
    let x0 = sample_init(cfg, &mut rng);
    let fs: Vec<FloatPoly> = cfg.f.iter().map(FloatPoly::from_scaled).collect();
    let iterates = run_amp_packed(&a, &fs, &x0, cfg.t_max, cfg.onsager)
        .map_err(|wickamp_core::amp::AmpError::NonFinite { step }| SimError::NonFinite {
            trial,
            step,
        })?;
    Ok(iterates
        .iter()
        .map(|x| empirical_moments(x, ms).into_iter().map(|(_, v)| v).collect())
        .collect())
}

fn aggregate(
    cfg: &AmpConfig,
    ms: &[u32],
    per_trial: Vec<Vec<Vec<f64>>>,
) -> ExperimentReport {
    let scaled: Vec<ScaledPolynomial> = cfg.f.clone();
    let st = se_sequence(&scaled, cfg.t_max, cfg.tau0_sq(), None);
    let trials = per_trial.len();
    let mut rows = Vec::new();
    for t in 1..=cfg.t_max {
        for (k, &m) in ms.iter().enumerate() {
            let values: Vec<f64> = per_trial.iter().map(|tr| tr[t - 1][k]).collect();
            let mean = wickamp_core::amp::compensated_sum(values.iter().copied())
                / trials as f64;
            let stderr = if trials > 1 {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (trials - 1) as f64;
                (var / trials as f64).sqrt()
            } else {
                0.0
            };
            let predicted = predicted_moment(&st.tau2[t], m);
            let predicted_f64 = rational_to_f64(&predicted);
            let abs_error = (mean - predicted_f64).abs();
            let pass = abs_error <= cfg.tol_abs.max(cfg.z_score * stderr);
            rows.push(MomentRow {
                t,
                m,
                empirical: mean,
                stderr,
                predicted: predicted.to_string(),
                predicted_f64,
                abs_error,
                pass,
            });
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    ExperimentReport {
        ensemble: cfg.ensemble,
        n: cfg.n,
        trials,
        seed: cfg.seed,
        tol_abs: cfg.tol_abs,
        z_score: cfg.z_score,
        rows,
        all_pass,
    }
}

/// Runs `trials` independent replicates and compares the averaged moments
/// with the exact predictions. Trials run in parallel on the current rayon
/// pool; results are identical for any pool size.
pub fn monte_carlo(cfg: &AmpConfig, ms: &[u32]) -> Result<ExperimentReport, SimError> {
    cfg.validate()?;
    let per_trial: Result<Vec<_>, SimError> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_trial(cfg, ms, trial))
        .collect();
    Ok(aggregate(cfg, ms, per_trial?))
}

/// Exhaustive mode: averages over every sign pattern of the Rademacher
/// ensemble instead of sampling. Requires `n <= 4`; the trial count is
/// ignored and `2^(n(n-1)/2)` patterns are enumerated.
pub fn exhaustive_rademacher(cfg: &AmpConfig, ms: &[u32]) -> Result<ExperimentReport, SimError> {
    cfg.validate()?;
    if cfg.ensemble != Ensemble::Rademacher || cfg.n > 4 {
        return Err(SimError::ExhaustiveTooLarge(cfg.n));
    }
    if cfg.init != InitKind::AllOnes {
        return Err(SimError::BadConfig("exhaustive mode uses the all-ones start".into()));
    }
    let n = cfg.n;
    let pairs = n * (n - 1) / 2;
    let scale = (1.0 / n as f64).sqrt();
    let fs: Vec<FloatPoly> = cfg.f.iter().map(FloatPoly::from_scaled).collect();
    let x0 = vec![1.0; n];
    let mut per_trial = Vec::with_capacity(1 << pairs);
    for bits in 0u64..(1 << pairs) {
        let upper: Vec<f64> = (0..pairs)
            .map(|k| if bits >> k & 1 == 0 { scale } else { -scale })
            .collect();
        let a = PackedSymmetric::from_upper(n, upper);
        let iterates = run_amp_packed(&a, &fs, &x0, cfg.t_max, cfg.onsager)
            .map_err(|wickamp_core::amp::AmpError::NonFinite { step }| SimError::NonFinite {
                trial: bits as usize,
                step,
            })?;
        per_trial.push(
            iterates
                .iter()
                .map(|x| empirical_moments(x, ms).into_iter().map(|(_, v)| v).collect())
                .collect(),
        );
    }
    Ok(aggregate(cfg, ms, per_trial))
}

#[cfg(test)]
mod tests {
    use super::*;
    use wickamp_core::oracle::{exact_moment_rademacher, IterationForm};
    use wickamp_core::poly::Polynomial;
    use wickamp_core::rational::rat_int;

    fn base_config(n: usize, trials: usize, ensemble: Ensemble) -> AmpConfig {
        AmpConfig {
            n,
            t_max: 2,
            f: vec![
                Polynomial::identity().into(),
                Polynomial::from_ints(&[0, 1, 1]).into(),
            ],
            ensemble,
            init: InitKind::AllOnes,
            seed: 7,
            trials,
            onsager: OnsagerMode::PaperExact,
            tol_abs: 0.05,
            z_score: 3.0,
        }
    }

    #[test]
    fn matrices_symmetric_zero_diagonal() {
        for ensemble in [Ensemble::Gaussian, Ensemble::Rademacher, Ensemble::UniformScaled] {
            let mut rng = trial_rng(42, 0);
            let a = sample_matrix(5, ensemble, &mut rng);
            for i in 0..5 {
                assert_eq!(a.get(i, i), 0.0);
                for j in 0..5 {
                    assert_eq!(a.get(i, j), a.get(j, i));
                }
            }
        }
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let mut rng = trial_rng(1, 0);
        let a = sample_matrix(4, Ensemble::Rademacher, &mut rng);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((a.get(i, j).abs() - 0.5).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut r1 = trial_rng(9, 3);
        let mut r2 = trial_rng(9, 3);
        let a = sample_matrix(6, Ensemble::Gaussian, &mut r1);
        let b = sample_matrix(6, Ensemble::Gaussian, &mut r2);
        assert_eq!(a.upper(), b.upper());
    }

    #[test]
    fn packed_matches_reference_iteration() {
        let mut rng = trial_rng(5, 1);
        let a = sample_matrix(6, Ensemble::Gaussian, &mut rng);
        let f = [
            FloatPoly::new(vec![0.0, 1.0]),
            FloatPoly::new(vec![0.5, 0.0, 0.5]),
            FloatPoly::new(vec![0.0, -1.0, 0.0, 0.25]),
        ];
        let x0 = vec![1.0; 6];
        for onsager in [OnsagerMode::PaperExact, OnsagerMode::MeanField, OnsagerMode::Disabled] {
            let fast = run_amp_packed(&a, &f, &x0, 3, onsager).unwrap();
            let reference = wickamp_core::amp::run_amp(&a, &f, &x0, 3, onsager).unwrap();
            for (xf, xr) in fast.iter().zip(&reference) {
                for (u, v) in xf.iter().zip(xr) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_deterministic_across_pool_sizes() {
        let cfg = base_config(40, 6, Ensemble::Gaussian);
        let ms = [1, 2];
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let r1 = pool1.install(|| monte_carlo(&cfg, &ms)).unwrap();
        let r3 = pool3.install(|| monte_carlo(&cfg, &ms)).unwrap();
        for (a, b) in r1.rows.iter().zip(&r3.rows) {
            assert_eq!(a.empirical.to_bits(), b.empirical.to_bits());
            assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        }
    }

    /// Exhaustive sign enumeration agrees with the exact rational oracle for
    /// the same node iteration, to floating-point roundoff.
    #[test]
    fn exhaustive_bridge_to_exact_oracle() {
        let f_core = [Polynomial::identity(), Polynomial::from_ints(&[0, 1, 1])];
        for n in [2usize, 3] {
            let mut cfg = base_config(n, 1, Ensemble::Rademacher);
            cfg.t_max = 2;
            let report = exhaustive_rademacher(&cfg, &[1, 2]).unwrap();
            for row in report.rows.iter().filter(|r| r.t == 2) {
                let exact =
                    exact_moment_rademacher(&f_core, 2, row.m, n, IterationForm::Onsager)
                        .unwrap();
                // The oracle averages (x_1)^m; the report averages over all
                // coordinates, which agree by symmetry of the full average.
                let want = rational_to_f64(&exact.value);
                assert!(
                    (row.empirical - want).abs() < 1e-12,
                    "n={n} m={} got {} want {}",
                    row.m,
                    row.empirical,
                    want
                );
            }
        }
    }

    #[test]
    fn identity_nonlinearity_matches_prediction() {
        let mut cfg = base_config(600, 8, Ensemble::Gaussian);
        cfg.f = vec![Polynomial::identity().into(), Polynomial::identity().into()];
        let report = monte_carlo(&cfg, &[1, 2]).unwrap();
        assert!(report.all_pass, "rows: {:?}", report.rows);
    }

    #[test]
    fn tau0_from_init() {
        let mut cfg = base_config(4, 1, Ensemble::Gaussian);
        cfg.init = InitKind::SubGaussianIid { tau0_sq: rat_int(2) };
        assert_eq!(cfg.tau0_sq(), rat_int(2));
    }
}
