//! Cybernetic alignment loop.
//!
//! Error `eps = E - O`, control `dA/dt = gamma * eps`, ideation
//! `dO/dt = phi(A) + noise`, and a meta layer that moves the sensitivity
//! `gamma` by `theta * (eps_{k+1}^2 - eps_k^2)` after every step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::error::{Checker, FieldError, ModelError, Result};
use crate::rng::stream_rng;
use crate::series::Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackParams {
    pub gamma0: f64,
    pub theta_meta: f64,
    pub phi_gain: f64,
    pub noise_sd: f64,
    /// Target per step; a table holds its last value past the end.
    pub e_target: Series,
    pub o0: f64,
    pub a0: f64,
    pub dt: f64,
    pub horizon: usize,
    /// `settled` means the tail-half error stays strictly below this.
    pub settle_threshold: f64,
    /// When set, the run's checks require `settled` to match.
    pub expect_settled: Option<bool>,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            theta_meta: 0.0,
            phi_gain: 1.0,
            noise_sd: 0.0,
            e_target: Series::Constant(1.0),
            o0: 0.0,
            a0: 0.0,
            dt: 1e-3,
            horizon: 6284,
            settle_threshold: 1e-3,
            expect_settled: None,
        }
    }
}

impl FeedbackParams {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        ("gamma0", "initial sensitivity (>= 0)"),
        ("theta_meta", "meta-learning rate (signed)"),
        ("phi_gain", "linear gain in phi(A) = phi_gain * A"),
        ("noise_sd", "std of the ideation shock per unit time (>= 0)"),
        ("e_target", "target: a number or a per-step table (last value held)"),
        ("o0", "initial ideation output"),
        ("a0", "initial alignment signal"),
        ("dt", "step size (> 0)"),
        ("horizon", "number of steps (>= 1)"),
        ("settle_threshold", "tail-half |eps| bound for the settled flag (> 0)"),
        ("expect_settled", "optional expected value of the settled flag"),
    ];

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.non_negative("gamma0", self.gamma0);
        c.finite("theta_meta", self.theta_meta);
        c.finite("phi_gain", self.phi_gain);
        c.non_negative("noise_sd", self.noise_sd);
        c.require(!self.e_target.is_empty_table(), "e_target", "table must not be empty");
        c.require(
            self.e_target.values().iter().all(|v| v.is_finite()),
            "e_target",
            "entries must be finite",
        );
        c.finite("o0", self.o0);
        c.finite("a0", self.a0);
        c.positive("dt", self.dt);
        c.require(self.horizon >= 1, "horizon", "must be >= 1");
        c.positive("settle_threshold", self.settle_threshold);
        c.finish()
    }

    /// The closed-form oscillator case: no meta learning, no noise, unit gains.
    pub fn is_conservative(&self) -> bool {
        self.theta_meta == 0.0 && self.noise_sd == 0.0 && self.gamma0 == 1.0 && self.phi_gain == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackState {
    pub t: f64,
    #[serde(rename = "O")]
    pub o_val: f64,
    #[serde(rename = "A")]
    pub a_sig: f64,
    pub gamma: f64,
    #[serde(rename = "eps")]
    pub eps_err: f64,
}

fn rk4_step(o: f64, a: f64, target: f64, gamma: f64, dt: f64, phi: &impl Fn(f64) -> f64) -> (f64, f64) {
    let deriv = |o: f64, a: f64| (phi(a), gamma * (target - o));
    let (k1o, k1a) = deriv(o, a);
    let (k2o, k2a) = deriv(o + 0.5 * dt * k1o, a + 0.5 * dt * k1a);
    let (k3o, k3a) = deriv(o + 0.5 * dt * k2o, a + 0.5 * dt * k2a);
    let (k4o, k4a) = deriv(o + dt * k3o, a + dt * k3a);
    (
        o + dt / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o),
        a + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
    )
}

/// Integrates the loop with a caller-supplied `phi`; returns `horizon + 1` states.
pub fn simulate_loop_with<R, F>(params: &FeedbackParams, phi: F, rng: &mut R) -> Result<Vec<FeedbackState>>
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    if let Some(e) = params.validate().into_iter().next() {
        return Err(ModelError::Input(e.to_string()));
    }
    let dt = params.dt;
    let shock_scale = params.noise_sd * dt.sqrt();
    let (mut o, mut a, mut gamma) = (params.o0, params.a0, params.gamma0);
    let mut eps = params.e_target.at(0) - o;
    let mut traj = Vec::with_capacity(params.horizon + 1);
    traj.push(FeedbackState {
        t: 0.0,
        o_val: o,
        a_sig: a,
        gamma,
        eps_err: eps,
    });
    for k in 0..params.horizon {
        let (o_next, a_next) = rk4_step(o, a, params.e_target.at(k), gamma, dt, &phi);
        o = o_next;
        a = a_next;
        if shock_scale > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            o += shock_scale * z;
        }
        let eps_next = params.e_target.at(k + 1) - o;
        gamma = (gamma + params.theta_meta * (eps_next * eps_next - eps * eps)).max(0.0);
        eps = eps_next;
        let step = k + 1;
        for (field, v) in [("O", o), ("A", a), ("gamma", gamma), ("eps", eps)] {
            if !v.is_finite() {
                return Err(ModelError::Divergence { step, field });
            }
        }
        traj.push(FeedbackState {
            t: step as f64 * dt,
            o_val: o,
            a_sig: a,
            gamma,
            eps_err: eps,
        });
    }
    Ok(traj)
}

/// Linear `phi(A) = phi_gain * A`, noise from stream 0 of `seed`.
pub fn simulate_loop(params: &FeedbackParams, seed: u64) -> Result<Vec<FeedbackState>> {
    let gain = params.phi_gain;
    simulate_loop_with(params, |a| gain * a, &mut stream_rng(seed, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopDiagnostics {
    pub energy_drift: f64,
    pub max_abs_eps: f64,
    pub settled: bool,
}

pub fn loop_diagnostics(traj: &[FeedbackState], settle_threshold: f64) -> Result<LoopDiagnostics> {
    let first = traj
        .first()
        .ok_or_else(|| ModelError::Input("empty trajectory".into()))?;
    let energy = |s: &FeedbackState| s.eps_err * s.eps_err + s.a_sig * s.a_sig;
    let e0 = energy(first);
    let energy_drift = traj.iter().map(|s| (energy(s) - e0).abs()).fold(0.0, f64::max);
    let max_abs_eps = traj[traj.len() / 2..]
        .iter()
        .map(|s| s.eps_err.abs())
        .fold(0.0, f64::max);
    Ok(LoopDiagnostics {
        energy_drift,
        max_abs_eps,
        settled: max_abs_eps < settle_threshold,
    })
}

/// Sample whose time is closest to `t`.
pub fn nearest_state(traj: &[FeedbackState], t: f64) -> Option<&FeedbackState> {
    traj.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
}

pub fn trajectory_checks(params: &FeedbackParams, traj: &[FeedbackState]) -> Vec<Check> {
    let mut checks = vec![Check::new(
        "gamma_non_negative",
        traj.iter().all(|s| s.gamma >= 0.0),
        "sensitivity never recorded below zero",
    )];
    let Ok(diag) = loop_diagnostics(traj, params.settle_threshold) else {
        return checks;
    };
    if params.is_conservative() {
        checks.push(Check::new(
            "energy_conserved",
            diag.energy_drift < 1e-6,
            format!("max |eps^2 + A^2 - E0| = {:e}", diag.energy_drift),
        ));
    }
    if let Some(expected) = params.expect_settled {
        checks.push(Check::new(
            "settled_as_expected",
            diag.settled == expected,
            format!(
                "settled = {}, tail max |eps| = {:e}, expected {expected}",
                diag.settled, diag.max_abs_eps
            ),
        ));
    }
    checks
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn harmonic() -> FeedbackParams {
        FeedbackParams::default()
    }

    #[test]
    fn harmonic_matches_closed_form() {
        let p = harmonic();
        let traj = simulate_loop(&p, 0).unwrap();
        assert_eq!(traj.len(), p.horizon + 1);
        let max_err = traj
            .iter()
            .map(|s| (s.o_val - (1.0 - s.t.cos())).abs().max((s.a_sig - s.t.sin()).abs()))
            .fold(0.0, f64::max);
        assert!(max_err < 1e-9, "{max_err}");
        let at_pi = nearest_state(&traj, PI).unwrap();
        assert!((at_pi.o_val - 2.0).abs() < 1e-6);
        let diag = loop_diagnostics(&traj, p.settle_threshold).unwrap();
        assert!(diag.energy_drift < 1e-6, "{}", diag.energy_drift);
        assert!(!diag.settled);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |dt: f64| {
            let p = FeedbackParams {
                dt,
                horizon: (1.0 / dt).round() as usize,
                ..harmonic()
            };
            let last = *simulate_loop(&p, 0).unwrap().last().unwrap();
            (last.o_val - (1.0 - 1f64.cos())).abs()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn decoupled_loop_drifts_linearly() {
        let p = FeedbackParams {
            gamma0: 0.0,
            a0: 0.5,
            o0: 0.2,
            phi_gain: 2.0,
            horizon: 1000,
            ..harmonic()
        };
        for s in simulate_loop(&p, 0).unwrap() {
            assert_eq!(s.a_sig, 0.5);
            assert!((s.o_val - (0.2 + 1.0 * s.t)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_error_is_stationary() {
        let p = FeedbackParams {
            e_target: Series::Constant(0.7),
            o0: 0.7,
            horizon: 500,
            ..harmonic()
        };
        let traj = simulate_loop(&p, 0).unwrap();
        assert!(traj
            .iter()
            .all(|s| s.eps_err == 0.0 && s.a_sig == 0.0 && s.o_val == 0.7));
        let diag = loop_diagnostics(&traj, p.settle_threshold).unwrap();
        assert!(diag.settled);
        assert_eq!(diag.max_abs_eps, 0.0);
    }

    #[test]
    fn error_identity_holds_at_every_step() {
        let p = FeedbackParams {
            e_target: Series::Table(vec![1.0, 1.2, 0.8, 1.0]),
            noise_sd: 0.3,
            theta_meta: 0.5,
            horizon: 200,
            dt: 0.01,
            ..harmonic()
        };
        for (k, s) in simulate_loop(&p, 9).unwrap().iter().enumerate() {
            assert_eq!(s.eps_err, p.e_target.at(k) - s.o_val);
        }
    }

    #[test]
    fn large_meta_rate_clamps_and_never_settles() {
        let p = FeedbackParams {
            theta_meta: 5.0,
            horizon: 20_000,
            expect_settled: Some(false),
            ..harmonic()
        };
        let traj = simulate_loop(&p, 0).unwrap();
        assert!(traj.iter().any(|s| s.gamma == 0.0));
        assert!(loop_diagnostics(&traj, p.settle_threshold).unwrap().energy_drift > 0.5);
        for c in trajectory_checks(&p, &traj) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn noise_is_seeded() {
        let p = FeedbackParams {
            noise_sd: 0.1,
            horizon: 300,
            ..harmonic()
        };
        assert_eq!(simulate_loop(&p, 4).unwrap(), simulate_loop(&p, 4).unwrap());
        assert_ne!(simulate_loop(&p, 4).unwrap(), simulate_loop(&p, 5).unwrap());
    }

    #[test]
    fn custom_phi_hook() {
        let p = FeedbackParams {
            gamma0: 0.0,
            a0: 2.0,
            horizon: 100,
            dt: 0.01,
            ..harmonic()
        };
        let traj = simulate_loop_with(&p, |a| a * a, &mut stream_rng(0, 0)).unwrap();
        assert!((traj.last().unwrap().o_val - 4.0).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let p = FeedbackParams {
            gamma0: 0.0,
            a0: 1.0,
            horizon: 100,
            dt: 1.0,
            ..harmonic()
        };
        let err = simulate_loop_with(&p, |a| if a > 0.0 { f64::MAX } else { 0.0 }, &mut stream_rng(0, 0));
        assert!(
            matches!(err, Err(ModelError::Divergence { step: 1, field: "O" })),
            "{err:?}"
        );
    }

    #[test]
    fn validation_lists_every_problem() {
        let p = FeedbackParams {
            dt: 0.0,
            horizon: 0,
            noise_sd: -1.0,
            ..harmonic()
        };
        let fields: Vec<_> = p.validate().into_iter().map(|e| e.field).collect();
        assert_eq!(fields, vec!["noise_sd", "dt", "horizon"]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn gamma_never_negative(theta in -10.0f64..10.0, noise in 0.0f64..1.0, seed in any::<u64>()) {
                let p = FeedbackParams { theta_meta: theta, noise_sd: noise, horizon: 400, dt: 0.01, ..harmonic() };
                if let Ok(traj) = simulate_loop(&p, seed) {
                    prop_assert!(traj.iter().all(|s| s.gamma >= 0.0));
                }
            }

            #[test]
            fn conserved_for_any_start(o0 in -2.0f64..2.0, a0 in -2.0f64..2.0) {
                let p = FeedbackParams { o0, a0, dt: 1e-2, horizon: 700, ..harmonic() };
                let traj = simulate_loop(&p, 0).unwrap();
                prop_assert!(loop_diagnostics(&traj, 1e-3).unwrap().energy_drift < 1e-6);
            }
        }
    }
}
