//! Independent reference computations shared by the integration tests and
//! the acceptance gate.
#![allow(dead_code)]

use emt_lab::dynprog::MdpSpec;
use emt_lab::policy::{Occupation, SubsidyProblem};
use nalgebra::{DMatrix, DVector};

/// Value of a stationary policy by a direct LU solve of `(I - beta P) v = r`.
pub fn policy_value(spec: &MdpSpec, policy: &[usize]) -> Vec<f64> {
    let n = spec.rewards.len();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut r = DVector::<f64>::zeros(n);
    for s in 0..n {
        let a = policy[s];
        r[s] = spec.rewards[s][a];
        for (k, shock) in spec.shocks.iter().enumerate() {
            m[(s, spec.transitions[s][a][k])] -= spec.beta * shock.prob;
        }
    }
    m.lu()
        .solve(&r)
        .expect("I - beta P is nonsingular")
        .iter()
        .copied()
        .collect()
}

/// Pointwise maximum of every deterministic stationary policy's value.
pub fn enumerated_optimum(spec: &MdpSpec) -> Vec<f64> {
    let n = spec.rewards.len();
    let na = spec.rewards[0].len();
    let total = na.pow(n as u32);
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut policy = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for p in policy.iter_mut() {
            *p = c % na;
            c /= na;
        }
        for (b, v) in best.iter_mut().zip(policy_value(spec, &policy)) {
            *b = b.max(v);
        }
    }
    best
}

fn supply(o: &Occupation, s: f64) -> f64 {
    o.l_bar * (1.0 + o.eta * (1.0 + s / o.w).ln())
}

/// Subsidy with spend `s * L(s)` equal to `e`, by bisection.
fn invert_spend(o: &Occupation, e: f64) -> f64 {
    if e <= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi * supply(o, hi) < e {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid * supply(o, mid) < e {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Best objective over a grid of spend splits that exhaust the budget, with
/// `steps` equal increments of the budget. Three occupations only.
pub fn subsidy_grid(problem: &SubsidyProblem, steps: usize) -> f64 {
    assert_eq!(problem.occupations.len(), 3);
    let unit = problem.budget / steps as f64;
    let table: Vec<Vec<f64>> = problem
        .occupations
        .iter()
        .map(|o| {
            (0..=steps)
                .map(|k| o.lambda_align * supply(o, invert_spend(o, k as f64 * unit)))
                .collect()
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        for j in 0..=steps - i {
            best = best.max(table[0][i] + table[1][j] + table[2][steps - i - j]);
        }
    }
    best
}

/// Two-player PD bookkeeping for stationary profiles, kept independent of the
/// library's event tree.
#[derive(Debug, Clone, Copy)]
pub struct PdGame {
    pub cc: f64,
    pub temptation: f64,
    pub sucker: f64,
    pub dd: f64,
    pub p: f64,
    pub delta: f64,
    pub horizon: usize,
    /// `None` for lexicographic comparison, `Some(omega)` for a finite penalty.
    pub omega: Option<f64>,
}

impl PdGame {
    fn stage(&self, me_defects: bool, other_defects: bool) -> f64 {
        match (me_defects, other_defects) {
            (false, false) => self.cc,
            (false, true) => self.sucker,
            (true, false) => self.temptation,
            (true, true) => self.dd,
        }
    }

    fn end(&self, defectors: u32) -> f64 {
        1.0 - (1.0 - self.p).powi(defectors as i32)
    }

    /// (discontinuity probability, discounted payoff) from round `t` when both
    /// players play `defect` in every remaining round.
    fn stationary(&self, defect: bool, t: usize) -> (f64, f64) {
        let mut disc = 0.0;
        let mut pay = 0.0;
        for round in (t..self.horizon).rev() {
            let e = self.end(if defect { 2 } else { 0 });
            pay = self.delta.powi(round as i32) * self.stage(defect, defect) + (1.0 - e) * pay;
            disc = e + (1.0 - e) * disc;
        }
        (disc, pay)
    }

    fn better(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        const EPS: f64 = 1e-12;
        match self.omega {
            None => a.0 < b.0 - EPS || ((a.0 - b.0).abs() <= EPS && a.1 > b.1 + EPS),
            Some(w) => a.1 + a.0 * w > b.1 + b.0 * w + EPS,
        }
    }

    /// Whether "always defect" (or "always cooperate") is subgame perfect, by
    /// the one-shot deviation principle. Stationary profiles make the
    /// continuation depend only on the round, not the history.
    pub fn stationary_is_spne(&self, defect: bool) -> bool {
        (0..self.horizon).all(|t| {
            let follow = self.stationary(defect, t);
            let dev_now = !defect;
            let defectors = u32::from(defect) + u32::from(dev_now);
            let e = self.end(defectors);
            let (cont_disc, cont_pay) = self.stationary(defect, t + 1);
            let deviate = (
                e + (1.0 - e) * cont_disc,
                self.delta.powi(t as i32) * self.stage(dev_now, defect) + (1.0 - e) * cont_pay,
            );
            !self.better(deviate, follow)
        })
    }
}
