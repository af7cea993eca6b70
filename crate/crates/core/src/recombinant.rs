//! Recombinant growth: combinatorial explosion of idea combinations and the
//! extreme-value law for the best of K idea draws.
//!
//! For any continuous, strictly increasing F, `K * Fbar(Z_K)` is distributed
//! exactly as `K * min(U_1..U_K)` for standard uniforms, which tends to
//! Exp(1) as K grows. The Monte Carlo here checks that law family by family.

use rand::distr::OpenClosed01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

use crate::error::{domain, Checker, FieldError, ModelError, Result};
use crate::rng::stream_rng;

/// `log2(Z) = A^phi` where `Z = 2^(A^phi)` counts every subset (including
/// the empty one) of the accessible knowledge elements. `Z` itself is
/// never formed.
pub fn log2_combinations(a_stock: f64, phi_access: f64) -> Result<f64> {
    if !(a_stock >= 0.0) {
        return Err(domain("a_stock", a_stock, "must be >= 0"));
    }
    if !(phi_access > 0.0 && phi_access <= 1.0) {
        return Err(domain("phi_access", phi_access, "must lie in (0, 1]"));
    }
    Ok(a_stock.powf(phi_access))
}

/// Idea-quality distributions with closed-form survival and inverse survival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailDistribution {
    Exponential {
        rate: f64,
    },
    /// Uniform on `(0, b)`.
    Uniform {
        b: f64,
    },
    Pareto {
        xm: f64,
        shape: f64,
    },
    Lognormal {
        mu: f64,
        sigma: f64,
    },
    Weibull {
        scale: f64,
        shape: f64,
    },
}

impl Default for TailDistribution {
    fn default() -> Self {
        TailDistribution::Exponential { rate: 1.0 }
    }
}

impl TailDistribution {
    pub fn name(&self) -> &'static str {
        match self {
            TailDistribution::Exponential { .. } => "exponential",
            TailDistribution::Uniform { .. } => "uniform",
            TailDistribution::Pareto { .. } => "pareto",
            TailDistribution::Lognormal { .. } => "lognormal",
            TailDistribution::Weibull { .. } => "weibull",
        }
    }

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        match *self {
            TailDistribution::Exponential { rate } => c.positive("rate", rate),
            TailDistribution::Uniform { b } => c.positive("b", b),
            TailDistribution::Pareto { xm, shape } => {
                c.positive("xm", xm);
                c.positive("shape", shape);
            }
            TailDistribution::Lognormal { mu, sigma } => {
                c.finite("mu", mu);
                c.positive("sigma", sigma);
            }
            TailDistribution::Weibull { scale, shape } => {
                c.positive("scale", scale);
                c.positive("shape", shape);
            }
        }
        c.finish()
    }

    /// `Fbar(x) = P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            TailDistribution::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            TailDistribution::Uniform { b } => ((b - x) / b).clamp(0.0, 1.0),
            TailDistribution::Pareto { xm, shape } => {
                if x <= xm {
                    1.0
                } else {
                    (shape * (xm / x).ln()).exp()
                }
            }
            TailDistribution::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    0.5 * erfc((x.ln() - mu) / (sigma * SQRT_2))
                }
            }
            TailDistribution::Weibull { scale, shape } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-(x / scale).powf(shape)).exp()
                }
            }
        }
    }

    /// `Fbar^{-1}(u)` for `u` in `(0, 1]`.
    pub fn inverse_survival(&self, u: f64) -> f64 {
        match *self {
            TailDistribution::Exponential { rate } => -u.ln() / rate,
            TailDistribution::Uniform { b } => b - b * u,
            TailDistribution::Pareto { xm, shape } => xm * (-u.ln() / shape).exp(),
            TailDistribution::Lognormal { mu, sigma } => {
                if u >= 1.0 {
                    0.0
                } else {
                    (mu + sigma * SQRT_2 * erfc_inv(2.0 * u)).exp()
                }
            }
            TailDistribution::Weibull { scale, shape } => scale * (-u.ln()).powf(1.0 / shape),
        }
    }

    /// Inverse-transform sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(OpenClosed01);
        self.inverse_survival(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvtRunConfig {
    pub k_draws: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// For each replicate, the statistic `K * Fbar(max of K draws)`.
///
/// Replicate `r` draws from stream `(seed, r)`, so the output does not
/// depend on how replicates are scheduled across threads.
pub fn draw_max_statistic(dist: &TailDistribution, cfg: &EvtRunConfig) -> Result<Vec<f64>> {
    let problems = dist.validate();
    if let Some(p) = problems.first() {
        return Err(ModelError::Input(format!("{} distribution: {p}", dist.name())));
    }
    if cfg.k_draws == 0 || cfg.replicates == 0 {
        return Err(ModelError::Input("k_draws and replicates must both be >= 1".into()));
    }
    let k = cfg.k_draws as f64;
    Ok((0..cfg.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(cfg.seed, r);
            let z_max = (0..cfg.k_draws)
                .map(|_| dist.sample(&mut rng))
                .fold(f64::NEG_INFINITY, f64::max);
            k * dist.survival(z_max)
        })
        .collect())
}

/// Quality of the best idea when the exponential shock is `eps_exp`:
/// `Fbar^{-1}(eps / K)`.
pub fn quantile_frontier(dist: &TailDistribution, k_draws: f64, eps_exp: f64) -> Result<f64> {
    if !(eps_exp > 0.0) {
        return Err(domain("eps_exp", eps_exp, "must be > 0"));
    }
    if !(k_draws > 0.0) {
        return Err(domain("k_draws", k_draws, "must be > 0"));
    }
    let ratio = eps_exp / k_draws;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(domain("eps_exp / k_draws", ratio, "must lie in (0, 1)"));
    }
    Ok(dist.inverse_survival(ratio))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvtDiagnostics {
    pub mean: f64,
    pub ks_distance: f64,
    pub pass: bool,
}

/// Sample mean and one-sample Kolmogorov-Smirnov distance to Exp(1).
pub fn evt_diagnostics(m_values: &[f64], ks_threshold: f64) -> Result<EvtDiagnostics> {
    if m_values.is_empty() {
        return Err(ModelError::Input("no m-values".into()));
    }
    let n = m_values.len() as f64;
    let mut sorted = m_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks_distance = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = -(-x.max(0.0)).exp_m1();
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            (hi - cdf).max(cdf - lo)
        })
        .fold(0.0, f64::max);
    let mean = m_values.iter().sum::<f64>() / n;
    Ok(EvtDiagnostics {
        mean,
        ks_distance,
        pass: ks_distance < ks_threshold,
    })
}

/// Exact finite-K moments of `K * min(U_1..U_K)`: `(mean, std dev)`.
pub fn exact_moments(k_draws: usize) -> (f64, f64) {
    let k = k_draws as f64;
    let mean = k / (k + 1.0);
    let var = k * k * k / ((k + 1.0) * (k + 1.0) * (k + 2.0));
    (mean, var.sqrt())
}

/// Parameter block for an extreme-value scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvtScenario {
    pub distribution: TailDistribution,
    pub k_draws: usize,
    pub replicates: usize,
    pub ks_threshold: f64,
}

impl Default for EvtScenario {
    fn default() -> Self {
        Self {
            distribution: TailDistribution::default(),
            k_draws: 1000,
            replicates: 2000,
            ks_threshold: 0.05,
        }
    }
}

impl EvtScenario {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        (
            "distribution",
            "idea-quality law {family: exponential|uniform|pareto|lognormal|weibull, ...parameters}",
        ),
        ("k_draws", "idea draws per replicate K (>= 1)"),
        ("replicates", "Monte Carlo replicates (>= 1)"),
        ("ks_threshold", "pass bound on the KS distance to Exp(1) (> 0)"),
    ];

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.nested("distribution", self.distribution.validate());
        c.require(self.k_draws >= 1, "k_draws", "must be >= 1");
        c.require(self.replicates >= 1, "replicates", "must be >= 1");
        c.positive("ks_threshold", self.ks_threshold);
        c.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvtReport {
    pub family: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub replicates: usize,
    pub mean: f64,
    pub ks: f64,
    pub pass: bool,
    pub exact_mean: f64,
    pub mean_tolerance: f64,
    pub mean_within_3sigma: bool,
}

pub fn run(scn: &EvtScenario, seed: u64) -> Result<(EvtReport, Vec<f64>)> {
    let cfg = EvtRunConfig {
        k_draws: scn.k_draws,
        replicates: scn.replicates,
        seed,
    };
    let m = draw_max_statistic(&scn.distribution, &cfg)?;
    let diag = evt_diagnostics(&m, scn.ks_threshold)?;
    let (exact_mean, sd) = exact_moments(scn.k_draws);
    let mean_tolerance = 3.0 * sd / (scn.replicates as f64).sqrt();
    Ok((
        EvtReport {
            family: scn.distribution.name().to_string(),
            k: scn.k_draws,
            replicates: scn.replicates,
            mean: diag.mean,
            ks: diag.ks_distance,
            pass: diag.pass,
            exact_mean,
            mean_tolerance,
            mean_within_3sigma: (diag.mean - exact_mean).abs() <= mean_tolerance,
        },
        m,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn families() -> Vec<TailDistribution> {
        vec![
            TailDistribution::Exponential { rate: 1.0 },
            TailDistribution::Uniform { b: 1.0 },
            TailDistribution::Pareto { xm: 1.0, shape: 2.5 },
            TailDistribution::Lognormal { mu: 0.0, sigma: 1.0 },
            TailDistribution::Weibull { scale: 1.0, shape: 1.5 },
        ]
    }

    #[test]
    fn log2_combination_examples() {
        assert_eq!(log2_combinations(16.0, 0.5).unwrap(), 4.0);
        assert_eq!(log2_combinations(0.0, 0.7).unwrap(), 0.0);
        assert!(log2_combinations(1.0, 0.0).is_err());
        assert!(log2_combinations(-1.0, 0.5).is_err());
    }

    #[test]
    fn subset_count_matches_binomial_sum() {
        // Accessing 3 elements: C(3,0) + C(3,1) + C(3,2) + C(3,3) = 8.
        assert_eq!(log2_combinations(3.0, 1.0).unwrap().exp2(), 8.0);
    }

    #[test]
    fn survival_roundtrip_each_family() {
        for d in families() {
            for &u in &[0.9, 0.5, 1e-3, 1e-9, 1e-30] {
                let x = d.inverse_survival(u);
                let back = d.survival(x);
                let tol = if matches!(d, TailDistribution::Uniform { .. }) {
                    1e-15 / u
                } else {
                    1e-9
                };
                assert!(((back - u) / u).abs() < tol.max(1e-12), "{} at u={u}: {back}", d.name());
            }
        }
    }

    #[test]
    fn deep_tail_precision() {
        let e = TailDistribution::Exponential { rate: 2.0 };
        let x = e.inverse_survival(1e-300);
        assert!(((e.survival(x) - 1e-300) / 1e-300).abs() < 1e-9);
        let p = TailDistribution::Pareto { xm: 1.0, shape: 1.0 };
        assert!(((p.survival(p.inverse_survival(1e-200)) - 1e-200) / 1e-200).abs() < 1e-9);
    }

    #[test]
    fn single_draw_is_uniform() {
        let cfg = EvtRunConfig {
            k_draws: 1,
            replicates: 20_000,
            seed: 3,
        };
        let m = draw_max_statistic(&TailDistribution::Weibull { scale: 2.0, shape: 0.7 }, &cfg).unwrap();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        let sigma = (1.0f64 / 12.0 / m.len() as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma);
        assert!(m.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn mean_matches_beta_scaling_for_every_family() {
        for d in families() {
            let cfg = EvtRunConfig {
                k_draws: 50,
                replicates: 4000,
                seed: 17,
            };
            let m = draw_max_statistic(&d, &cfg).unwrap();
            let (mean, sd) = exact_moments(50);
            let got = m.iter().sum::<f64>() / m.len() as f64;
            assert!(
                (got - mean).abs() < 3.0 * sd / (4000f64).sqrt(),
                "{}: {got} vs {mean}",
                d.name()
            );
        }
    }

    #[test]
    fn exponential_large_k_passes_ks() {
        let cfg = EvtRunConfig {
            k_draws: 10_000,
            replicates: 2000,
            seed: 2024,
        };
        let m = draw_max_statistic(&TailDistribution::Exponential { rate: 1.0 }, &cfg).unwrap();
        let d = evt_diagnostics(&m, 0.05).unwrap();
        assert!(d.pass, "ks {}", d.ks_distance);
    }

    #[test]
    fn draws_are_reproducible() {
        for d in families() {
            let cfg = EvtRunConfig {
                k_draws: 100,
                replicates: 200,
                seed: 99,
            };
            let a = draw_max_statistic(&d, &cfg).unwrap();
            let b = draw_max_statistic(&d, &cfg).unwrap();
            assert_eq!(
                a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
            assert_eq!(evt_diagnostics(&a, 0.05).unwrap(), evt_diagnostics(&b, 0.05).unwrap());
        }
    }

    #[test]
    fn invalid_family_rejected() {
        let cfg = EvtRunConfig {
            k_draws: 10,
            replicates: 10,
            seed: 1,
        };
        assert!(draw_max_statistic(&TailDistribution::Pareto { xm: 1.0, shape: -1.0 }, &cfg).is_err());
        let bad: std::result::Result<TailDistribution, _> = serde_json::from_str(r#"{"family":"normal","mu":0}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn quantile_frontier_examples() {
        let e = std::f64::consts::E;
        let exp1 = TailDistribution::Exponential { rate: 1.0 };
        assert!((quantile_frontier(&exp1, e, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let uni = TailDistribution::Uniform { b: 1.0 };
        assert_eq!(quantile_frontier(&uni, 4.0, 1.0).unwrap(), 0.75);
        assert!(quantile_frontier(&uni, 1.0, 2.0).is_err());
        assert!(quantile_frontier(&uni, 1.0, 0.0).is_err());
    }

    #[test]
    fn quantile_frontier_monotone_in_k() {
        for d in families() {
            let mut prev = f64::NEG_INFINITY;
            for i in 1..60 {
                let k = 2f64.powf(i as f64 * 0.5);
                let q = quantile_frontier(&d, k, 0.7).unwrap();
                assert!(q >= prev, "{} K={k}", d.name());
                prev = q;
                let resid = (k * d.survival(q) - 0.7) / 0.7;
                let tol = if matches!(d, TailDistribution::Uniform { .. }) {
                    1e-15 * k
                } else {
                    1e-9
                };
                assert!(resid.abs() < tol.max(1e-9), "{} K={k}: {resid}", d.name());
            }
        }
    }

    #[test]
    fn ks_of_plotting_positions() {
        let n = 500;
        let m: Vec<f64> = (1..=n).map(|i| -(1.0 - (i as f64 - 0.5) / n as f64).ln()).collect();
        let d = evt_diagnostics(&m, 0.05).unwrap();
        assert!(d.ks_distance < 1.0 / n as f64);
        assert!(d.pass);
    }

    #[test]
    fn ks_of_constant_sequence_fails() {
        let d = evt_diagnostics(&[3.0; 100], 0.05).unwrap();
        assert!(!d.pass && d.ks_distance > 0.9);
        assert!(evt_diagnostics(&[], 0.05).is_err());
    }

    proptest::proptest! {
        #[test]
        fn quantile_frontier_hits_its_target(family in 0usize..5, log_k in 0.0f64..6.0, frac in 0.001f64..0.999) {
            let d = &families()[family];
            let k = 10f64.powf(log_k);
            let eps = frac * k.min(10.0);
            let q = quantile_frontier(d, k, eps).unwrap();
            let rel = (k * d.survival(q) - eps) / eps;
            proptest::prop_assert!(rel.abs() < 1e-9, "{} K={} eps={}: {}", d.name(), k, eps, rel);
        }
    }
}
