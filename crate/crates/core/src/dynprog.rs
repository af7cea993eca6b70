//! Finite research MDP: value iteration, policy evaluation, surpluses and
//! sensitivity of optimal values to a reward parameter.
//!
//! Shocks have finite support, so every expectation is an exact weighted sum
//! over `transitions[s][a][k]` with weights `shocks[k].prob`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::error::{domain, Checker, FieldError, ModelError, Result};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shock {
    pub prob: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    /// `rewards[s][a]`.
    pub rewards: Vec<Vec<f64>>,
    pub shocks: Vec<Shock>,
    /// `transitions[s][a][k]`: next state after action `a` in `s` under shock `k`.
    pub transitions: Vec<Vec<Vec<usize>>>,
    pub beta: f64,
}

impl MdpSpec {
    pub fn n_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_actions(&self) -> usize {
        self.rewards.first().map_or(0, Vec::len)
    }

    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        let (ns, na) = (self.n_states(), self.n_actions());
        c.require(ns >= 1, "rewards", "need at least one state");
        c.require(na >= 1, "rewards", "need at least one action");
        c.require(
            self.rewards.iter().all(|row| row.len() == na),
            "rewards",
            format!("every state must list {na} action rewards"),
        );
        c.require(
            self.rewards.iter().flatten().all(|r| r.is_finite()),
            "rewards",
            "entries must be finite",
        );
        c.require(!self.shocks.is_empty(), "shocks", "need at least one shock");
        c.require(
            self.shocks.iter().all(|s| s.prob >= 0.0 && s.prob <= 1.0),
            "shocks",
            "probabilities must lie in [0, 1]",
        );
        let total: f64 = self.shocks.iter().map(|s| s.prob).sum();
        c.require(
            (total - 1.0).abs() <= 1e-12,
            "shocks",
            format!("probabilities must sum to 1, got {total}"),
        );
        let nk = self.shocks.len();
        let shape_ok = self.transitions.len() == ns
            && self
                .transitions
                .iter()
                .all(|row| row.len() == na && row.iter().all(|cell| cell.len() == nk));
        c.require(shape_ok, "transitions", format!("must be {ns} x {na} x {nk}"));
        c.require(
            self.transitions.iter().flatten().flatten().all(|&s| s < ns),
            "transitions",
            format!("next states must be < {ns}"),
        );
        c.require(
            self.beta > 0.0 && self.beta < 1.0,
            "beta",
            format!("must lie in (0, 1), got {}", self.beta),
        );
        c.finish()
    }

    pub fn validate(&self) -> Result<()> {
        match self.field_errors().into_iter().next() {
            None => Ok(()),
            Some(e) => Err(ModelError::Input(e.to_string())),
        }
    }

    fn check_policy(&self, policy: &[usize]) -> Result<()> {
        if policy.len() != self.n_states() {
            return Err(ModelError::Input(format!(
                "policy has {} entries for {} states",
                policy.len(),
                self.n_states()
            )));
        }
        if let Some(&a) = policy.iter().find(|&&a| a >= self.n_actions()) {
            return Err(ModelError::Input(format!(
                "policy action {a} out of range for {} actions",
                self.n_actions()
            )));
        }
        Ok(())
    }

    fn q_value(&self, values: &[f64], s: usize, a: usize) -> f64 {
        let expected: f64 = self
            .shocks
            .iter()
            .zip(&self.transitions[s][a])
            .map(|(shock, &next)| shock.prob * values[next])
            .sum();
        self.rewards[s][a] + self.beta * expected
    }

    /// One Bellman backup; returns the new values and the greedy policy.
    pub fn backup(&self, values: &[f64]) -> (Vec<f64>, Vec<usize>) {
        (0..self.n_states())
            .map(|s| {
                let mut best = (self.q_value(values, s, 0), 0);
                for a in 1..self.n_actions() {
                    let q = self.q_value(values, s, a);
                    if q > best.0 {
                        best = (q, a);
                    }
                }
                best
            })
            .unzip()
    }

    /// Random instance with uniform rewards in [0, 1), random shock weights and
    /// uniformly drawn transitions.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, n_shocks: usize, beta: f64) -> Self {
        let rewards = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.random::<f64>()).collect())
            .collect();
        let raw: Vec<f64> = (0..n_shocks).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        let mut shocks: Vec<Shock> = raw
            .iter()
            .enumerate()
            .map(|(k, w)| Shock {
                prob: w / total,
                label: format!("shock{k}"),
            })
            .collect();
        let head: f64 = shocks[..n_shocks - 1].iter().map(|s| s.prob).sum();
        shocks[n_shocks - 1].prob = 1.0 - head;
        let transitions = (0..n_states)
            .map(|_| {
                (0..n_actions)
                    .map(|_| (0..n_shocks).map(|_| rng.random_range(0..n_states)).collect())
                    .collect()
            })
            .collect();
        Self {
            rewards,
            shocks,
            transitions,
            beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm of every update, in order.
    #[serde(skip)]
    pub residual_history: Vec<f64>,
}

impl Solution {
    /// Geometric-mean contraction factor over the last `window` updates.
    pub fn tail_rate(&self, window: usize) -> Option<f64> {
        let h = &self.residual_history;
        let w = window.min(h.len().saturating_sub(1));
        if w == 0 {
            return None;
        }
        let (first, last) = (h[h.len() - 1 - w], h[h.len() - 1]);
        Some((last / first).powf(1.0 / w as f64))
    }
}

/// Relative allowance when comparing a measured contraction rate with beta.
/// For a single-state chain the exact rate equals beta, so the comparison is
/// only meaningful up to rounding of the ratio itself.
pub const RATE_SLACK: f64 = 1e-12;

/// Double-double accumulator. Iterates close to convergence differ by far
/// less than one ulp of the values, so plain `f64` residuals would be
/// dominated by cancellation noise.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    fn new(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Self {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add(self, other: Self) -> Self {
        let s = self.hi + other.hi;
        let v = s - self.hi;
        let e = (self.hi - (s - v)) + (other.hi - v);
        Self::new(s, e + self.lo + other.lo)
    }

    fn scale(self, c: f64) -> Self {
        let p = self.hi * c;
        Self::new(p, self.hi.mul_add(c, -p) + self.lo * c)
    }

    fn minus(self, other: Self) -> f64 {
        (self.hi - other.hi) + (self.lo - other.lo)
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

impl MdpSpec {
    fn backup_compensated(&self, values: &[Compensated]) -> (Vec<Compensated>, Vec<usize>) {
        let q = |s: usize, a: usize| {
            let expected = self
                .shocks
                .iter()
                .zip(&self.transitions[s][a])
                .fold(Compensated::default(), |acc, (shock, &next)| {
                    acc.add(values[next].scale(shock.prob))
                });
            expected.scale(self.beta).add(Compensated::new(self.rewards[s][a], 0.0))
        };
        (0..self.n_states())
            .map(|s| {
                let mut best = (q(s, 0), 0);
                for a in 1..self.n_actions() {
                    let cand = q(s, a);
                    if cand.minus(best.0) > 0.0 {
                        best = (cand, a);
                    }
                }
                best
            })
            .unzip()
    }
}

/// Value iteration from `V = 0` until the sup-norm update is at most `tol`.
pub fn value_iteration(spec: &MdpSpec, tol: f64, max_iter: usize) -> Result<Solution> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(domain("tol", tol, "must be > 0"));
    }
    let mut values = vec![Compensated::default(); spec.n_states()];
    let mut history = Vec::new();
    for iteration in 1..=max_iter {
        let (next, _) = spec.backup_compensated(&values);
        let residual = next
            .iter()
            .zip(&values)
            .map(|(a, b)| a.minus(*b).abs())
            .fold(0.0, f64::max);
        history.push(residual);
        values = next;
        if residual <= tol {
            let (_, policy) = spec.backup_compensated(&values);
            return Ok(Solution {
                values: values.iter().map(|v| v.value()).collect(),
                policy,
                iterations: iteration,
                residual,
                residual_history: history,
            });
        }
    }
    Err(ModelError::NonConvergence {
        iterations: max_iter,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Dense solve with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        if !(a[pivot][col].abs() > 1e-14) {
            return Err(ModelError::Singular(format!(
                "evaluation system is singular at column {col}"
            )));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            let (upper, lower) = a.split_at_mut(row);
            for (x, &p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= factor * p;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

/// Values of a fixed stationary policy from `(I - beta P) V = r`.
pub fn policy_evaluation(spec: &MdpSpec, policy: &[usize]) -> Result<Vec<f64>> {
    spec.validate()?;
    spec.check_policy(policy)?;
    let n = spec.n_states();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (s, &act) in policy.iter().enumerate() {
        a[s][s] += 1.0;
        for (shock, &next) in spec.shocks.iter().zip(&spec.transitions[s][act]) {
            a[s][next] -= spec.beta * shock.prob;
        }
        b[s] = spec.rewards[s][act];
    }
    solve_dense(a, b)
}

/// Optimal values refined by an exact evaluation of the greedy policy.
pub fn optimal_values(spec: &MdpSpec) -> Result<(Vec<f64>, Vec<usize>)> {
    let sol = value_iteration(spec, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let values = policy_evaluation(spec, &sol.policy)?;
    Ok((values, sol.policy))
}

/// Marginal reward per unit of ideation cost.
pub fn ideation_surplus(marginal_reward: f64, c_ideation: f64, eps_guard: f64) -> Result<f64> {
    if !(eps_guard > 0.0) {
        return Err(domain("eps_guard", eps_guard, "must be > 0"));
    }
    if !(c_ideation > eps_guard) {
        return Err(ModelError::UnboundedSurplus {
            cost: c_ideation,
            guard: eps_guard,
        });
    }
    Ok(marginal_reward / c_ideation)
}

/// Per-state gain of the optimal policy over a legacy policy.
pub fn realtime_surplus(spec: &MdpSpec, legacy_policy: &[usize]) -> Result<Vec<f64>> {
    spec.check_policy(legacy_policy)?;
    let (optimal, _) = optimal_values(spec)?;
    let legacy = policy_evaluation(spec, legacy_policy)?;
    Ok(optimal.iter().zip(&legacy).map(|(o, l)| o - l).collect())
}

/// Reward channels through which a scalar parameter `p` enters the MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardOffset {
    /// `r(s, a) + p` everywhere.
    Uniform,
    /// `r(s, action) + p` in every state.
    Action { action: usize },
}

impl RewardOffset {
    pub fn apply(&self, spec: &MdpSpec, p: f64) -> MdpSpec {
        let mut out = spec.clone();
        for row in &mut out.rewards {
            match *self {
                RewardOffset::Uniform => row.iter_mut().for_each(|r| *r += p),
                RewardOffset::Action { action } => {
                    if let Some(r) = row.get_mut(action) {
                        *r += p;
                    }
                }
            }
        }
        out
    }
}

/// Central difference of optimal values for an arbitrary parameterization.
pub fn path_sensitivity_with<F>(spec: &MdpSpec, h: f64, perturb: F) -> Result<Vec<f64>>
where
    F: Fn(&MdpSpec, f64) -> MdpSpec,
{
    if !(h > 0.0) {
        return Err(domain("h", h, "must be > 0"));
    }
    let (up, _) = optimal_values(&perturb(spec, h))?;
    let (down, _) = optimal_values(&perturb(spec, -h))?;
    Ok(up.iter().zip(&down).map(|(u, d)| (u - d) / (2.0 * h)).collect())
}

pub fn path_sensitivity(spec: &MdpSpec, perturbation: &RewardOffset, h: f64) -> Result<Vec<f64>> {
    path_sensitivity_with(spec, h, |s, p| perturbation.apply(s, p))
}

/// Parameter block for an MDP scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpScenario {
    pub mdp: MdpSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub legacy_policy: Option<Vec<usize>>,
    pub sensitivity: Option<SensitivityRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRequest {
    pub offset: RewardOffset,
    pub h: f64,
}

/// Knowledge levels 0..3; actions exploit, research, ideate. Research can
/// advance or stall; ideation is costly but jumps further on success.
fn research_mdp() -> MdpSpec {
    let shocks = vec![
        Shock {
            prob: 0.6,
            label: "breakthrough".into(),
        },
        Shock {
            prob: 0.4,
            label: "stall".into(),
        },
    ];
    let up = |s: usize, k: usize| (s + k).min(3);
    let rewards = (0..4)
        .map(|s| {
            let level = s as f64;
            vec![1.0 + level, 0.5 + 0.5 * level, 0.2 * level - 0.3]
        })
        .collect();
    let transitions = (0..4usize)
        .map(|s| vec![vec![s, s.saturating_sub(1)], vec![up(s, 1), s], vec![up(s, 2), s]])
        .collect();
    MdpSpec {
        rewards,
        shocks,
        transitions,
        beta: 0.9,
    }
}

impl Default for MdpScenario {
    fn default() -> Self {
        Self {
            mdp: research_mdp(),
            tol: DEFAULT_TOL,
            max_iter: 100_000,
            legacy_policy: Some(vec![0; 4]),
            sensitivity: Some(SensitivityRequest {
                offset: RewardOffset::Uniform,
                h: 1e-3,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpReport {
    #[serde(flatten)]
    pub solution: Solution,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realtime_surplus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Vec<f64>>,
}

impl MdpScenario {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        (
            "mdp",
            "{rewards[s][a], shocks[{prob, label}], transitions[s][a][k], beta in (0,1)}",
        ),
        ("tol", "sup-norm residual bound for value iteration (> 0)"),
        ("max_iter", "iteration cap (>= 1)"),
        (
            "legacy_policy",
            "per-state action indices to compare against (optional)",
        ),
        (
            "sensitivity",
            "{offset: {kind: uniform | action, action}, h > 0} (optional)",
        ),
    ];

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.nested("mdp", self.mdp.field_errors());
        c.positive("tol", self.tol);
        c.require(self.max_iter >= 1, "max_iter", "must be >= 1");
        if let Some(p) = &self.legacy_policy {
            c.require(
                p.len() == self.mdp.n_states() && p.iter().all(|a| *a < self.mdp.n_actions()),
                "legacy_policy",
                format!(
                    "must give one action < {} for each of {} states",
                    self.mdp.n_actions(),
                    self.mdp.n_states()
                ),
            );
        }
        if let Some(s) = &self.sensitivity {
            c.positive("sensitivity.h", s.h);
            if let RewardOffset::Action { action } = s.offset {
                c.require(
                    action < self.mdp.n_actions(),
                    "sensitivity.offset.action",
                    format!("must be < {}", self.mdp.n_actions()),
                );
            }
        }
        c.finish()
    }

    pub fn run(&self) -> Result<MdpReport> {
        let solution = value_iteration(&self.mdp, self.tol, self.max_iter)?;
        let realtime_surplus = self
            .legacy_policy
            .as_deref()
            .map(|p| realtime_surplus(&self.mdp, p))
            .transpose()?;
        let sensitivity = self
            .sensitivity
            .as_ref()
            .map(|s| path_sensitivity(&self.mdp, &s.offset, s.h))
            .transpose()?;
        Ok(MdpReport {
            solution,
            realtime_surplus,
            sensitivity,
        })
    }
}

pub fn solution_checks(spec: &MdpSpec, report: &MdpReport, tol: f64) -> Vec<Check> {
    let sol = &report.solution;
    let (again, _) = spec.backup(&sol.values);
    let drift = again
        .iter()
        .zip(&sol.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut checks = vec![
        Check::new(
            "residual_within_tol",
            sol.residual <= tol,
            format!("residual {:e} vs tol {tol:e}", sol.residual),
        ),
        Check::new(
            "greedy_consistency",
            drift <= tol,
            format!("one more backup moves values by {drift:e}"),
        ),
    ];
    if let Some(rate) = sol.tail_rate(10) {
        checks.push(Check::new(
            "contraction_rate",
            rate <= spec.beta * (1.0 + RATE_SLACK),
            format!("tail rate {rate} vs beta {}", spec.beta),
        ));
    }
    if let Some(s) = &report.realtime_surplus {
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        checks.push(Check::new(
            "realtime_surplus_non_negative",
            min >= -1e-8,
            format!("min surplus {min:e}"),
        ));
    }
    checks
}
