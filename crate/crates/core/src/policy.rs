//! Subsidy planner, governance filter, demand-side idea selection, needs-driven
//! knowledge activation and recursive experiential utility.

use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::error::{domain, Checker, FieldError, ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Occupation {
    pub w: f64,
    pub l_bar: f64,
    pub eta: f64,
    pub lambda_align: f64,
}

impl Occupation {
    fn field_errors(&self, c: &mut Checker, prefix: &str) {
        c.positive(&format!("{prefix}.w"), self.w);
        c.positive(&format!("{prefix}.l_bar"), self.l_bar);
        c.non_negative(&format!("{prefix}.eta"), self.eta);
        c.non_negative(&format!("{prefix}.lambda_align"), self.lambda_align);
    }

    fn supply(&self, s: f64) -> f64 {
        self.l_bar * (1.0 + self.eta * (s / self.w).ln_1p())
    }

    fn spend(&self, s: f64) -> f64 {
        s * self.supply(s)
    }

    fn marginal_value(&self, s: f64) -> f64 {
        self.lambda_align * self.l_bar * self.eta / (self.w + s)
    }

    fn marginal_spend(&self, s: f64) -> f64 {
        self.l_bar * (1.0 + self.eta * (s / self.w).ln_1p() + self.eta * s / (self.w + s))
    }

    /// Stationarity scaled by `(w + s) / l_bar`; increasing in `s` from `w`.
    fn scaled_marginal_spend(&self, s: f64) -> f64 {
        (self.w + s) * (1.0 + self.eta * (s / self.w).ln_1p()) + self.eta * s
    }

    /// Subsidy at which the marginal value per unit spend equals `mu`.
    fn response(&self, mu: f64) -> f64 {
        let target = self.lambda_align * self.eta / mu;
        if !(target > self.w) {
            return 0.0;
        }
        let mut hi = target;
        while self.scaled_marginal_spend(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.scaled_marginal_spend(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `L_bar * (1 + eta * ln(1 + s / w))`.
pub fn labor_supply(occ: &Occupation, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(domain("s", s, "subsidy must be >= 0"));
    }
    if !(occ.w > 0.0) {
        return Err(domain("w", occ.w, "wage must be > 0"));
    }
    Ok(occ.supply(s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsidyProblem {
    pub occupations: Vec<Occupation>,
    pub budget: f64,
}

impl SubsidyProblem {
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.require(
            !self.occupations.is_empty(),
            "occupations",
            "need at least one occupation",
        );
        for (i, o) in self.occupations.iter().enumerate() {
            o.field_errors(&mut c, &format!("occupations[{i}]"));
        }
        c.positive("budget", self.budget);
        c.finish()
    }

    pub fn objective(&self, s: &[f64]) -> f64 {
        self.occupations
            .iter()
            .zip(s)
            .map(|(o, &x)| o.lambda_align * o.supply(x))
            .sum()
    }

    pub fn spend(&self, s: &[f64]) -> f64 {
        self.occupations.iter().zip(s).map(|(o, &x)| o.spend(x)).sum()
    }

    fn responses(&self, mu: f64) -> Vec<f64> {
        self.occupations.iter().map(|o| o.response(mu)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidySolution {
    pub s_star: Vec<f64>,
    pub objective: f64,
    pub spend: f64,
    pub multiplier: f64,
    /// Largest stationarity violation, relative to the marginal value scale.
    pub kkt_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn kkt_residual(problem: &SubsidyProblem, s: &[f64], mu: f64) -> f64 {
    problem
        .occupations
        .iter()
        .zip(s)
        .map(|(o, &x)| {
            let gap = o.marginal_value(x) - mu * o.marginal_spend(x);
            let scale = o.marginal_value(x).max(mu * o.marginal_spend(x)).max(f64::MIN_POSITIVE);
            if x > 0.0 {
                gap.abs() / scale
            } else {
                gap.max(0.0) / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Maximizes `sum Lambda_i L_i(s_i)` subject to `sum s_i L_i(s_i) <= B`, `s >= 0`.
///
/// Bisects on the budget multiplier until spend is within `tol * B` of the
/// budget; each occupation's subsidy solves its own stationarity condition.
pub fn optimize_subsidies(problem: &SubsidyProblem, tol: f64) -> Result<SubsidySolution> {
    if let Some(e) = problem.field_errors().into_iter().next() {
        return Err(ModelError::Input(e.to_string()));
    }
    if !(tol > 0.0) {
        return Err(domain("tol", tol, "must be > 0"));
    }
    let mu_max = problem
        .occupations
        .iter()
        .map(|o| o.lambda_align * o.eta / o.w)
        .fold(0.0, f64::max);
    if mu_max == 0.0 {
        let s_star = vec![0.0; problem.occupations.len()];
        return Ok(SubsidySolution {
            objective: problem.objective(&s_star),
            spend: 0.0,
            multiplier: 0.0,
            kkt_residual: 0.0,
            note: Some(
                "no occupation has positive alignment-weighted elasticity; subsidies cannot raise the objective".into(),
            ),
            s_star,
        });
    }
    // Spend falls as the multiplier rises: spend(lo) >= B >= spend(hi) throughout.
    let budget = problem.budget;
    let (mut lo, mut hi) = (mu_max, mu_max);
    let mut halvings = 0;
    while problem.spend(&problem.responses(lo)) < budget {
        lo *= 0.5;
        halvings += 1;
        if halvings > 2000 || lo == 0.0 {
            return Err(ModelError::NonConvergence {
                iterations: halvings,
                residual: budget - problem.spend(&problem.responses(lo)),
            });
        }
    }
    let mut s = problem.responses(hi);
    let mut iterations = 0;
    while budget - problem.spend(&s) > tol * budget {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || iterations >= 2000 {
            return Err(ModelError::NonConvergence {
                iterations,
                residual: budget - problem.spend(&s),
            });
        }
        let trial = problem.responses(mid);
        if problem.spend(&trial) > budget {
            lo = mid;
        } else {
            hi = mid;
            s = trial;
        }
        iterations += 1;
    }
    let mu = hi;
    Ok(SubsidySolution {
        objective: problem.objective(&s),
        spend: problem.spend(&s),
        multiplier: mu,
        kkt_residual: kkt_residual(problem, &s, mu),
        note: None,
        s_star: s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdeaRecord {
    pub id: String,
    pub u_emt: f64,
    #[serde(default = "yes")]
    pub feasible: bool,
}

fn yes() -> bool {
    true
}

/// Feasible ideas scoring strictly above `delta_thresh`, in input order.
pub fn governance_filter(ideas: &[IdeaRecord], delta_thresh: f64) -> Vec<IdeaRecord> {
    ideas
        .iter()
        .filter(|i| i.feasible && i.u_emt > delta_thresh)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub id: String,
}

/// Highest-scoring feasible idea; the earliest wins a tie.
pub fn demanduct_select(ideas: &[IdeaRecord]) -> Result<Selection> {
    let mut best: Option<(usize, &IdeaRecord)> = None;
    for (index, idea) in ideas.iter().enumerate().filter(|(_, i)| i.feasible) {
        if best.is_none_or(|(_, b)| idea.u_emt > b.u_emt) {
            best = Some((index, idea));
        }
    }
    best.map(|(index, idea)| Selection {
        index,
        id: idea.id.clone(),
    })
    .ok_or(ModelError::EmptySelection)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeedsKnowledgeLink {
    pub needs: Vec<f64>,
    pub knowledge_items: Vec<Vec<f64>>,
    pub threshold: f64,
}

/// Indices of knowledge items whose inner product with the needs exceeds the threshold.
pub fn exduct(link: &NeedsKnowledgeLink) -> Result<Vec<usize>> {
    let dim = link.needs.len();
    if let Some((i, item)) = link.knowledge_items.iter().enumerate().find(|(_, k)| k.len() != dim) {
        return Err(ModelError::Input(format!(
            "knowledge item {i} has dimension {} but needs have {dim}",
            item.len()
        )));
    }
    Ok(link
        .knowledge_items
        .iter()
        .enumerate()
        .filter(|(_, k)| k.iter().zip(&link.needs).map(|(a, b)| a * b).sum::<f64>() > link.threshold)
        .map(|(i, _)| i)
        .collect())
}

/// `sum_t beta^t u_t + beta^T u_tail / (1 - beta)`.
pub fn recursive_utility(u_series: &[f64], beta: f64, u_tail: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(domain("beta", beta, "must lie in (0, 1)"));
    }
    let head: f64 = u_series.iter().enumerate().map(|(t, u)| beta.powi(t as i32) * u).sum();
    Ok(head + beta.powi(u_series.len() as i32) * u_tail / (1.0 - beta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityStream {
    pub series: Vec<f64>,
    pub beta: f64,
    #[serde(default)]
    pub tail: f64,
}

/// Parameter block for a policy scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyScenario {
    pub occupations: Vec<Occupation>,
    pub budget: f64,
    pub tol: f64,
    /// Budgets for an objective sweep.
    pub sweep: Vec<f64>,
    pub ideas: Vec<IdeaRecord>,
    pub delta_thresh: f64,
    pub link: Option<NeedsKnowledgeLink>,
    pub utility: Option<UtilityStream>,
}

impl Default for PolicyScenario {
    fn default() -> Self {
        let occ = |w, l_bar, eta, lambda_align| Occupation {
            w,
            l_bar,
            eta,
            lambda_align,
        };
        Self {
            occupations: vec![
                occ(1.0, 1.0, 0.5, 1.0),
                occ(1.0, 2.0, 1.0, 1.0),
                occ(2.0, 1.0, 2.0, 3.0),
            ],
            budget: 2.0,
            tol: 1e-9,
            sweep: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            ideas: Vec::new(),
            delta_thresh: 0.0,
            link: None,
            utility: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "B")]
    pub budget: f64,
    pub objective: f64,
    pub spend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    #[serde(flatten)]
    pub solution: SubsidySolution,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approved_ideas: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_idea: Option<Selection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activated: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<f64>,
}

impl PolicyScenario {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        ("occupations", "list of {w > 0, l_bar > 0, eta >= 0, lambda_align >= 0}"),
        ("budget", "subsidy budget B (> 0)"),
        ("tol", "relative budget and KKT tolerance (> 0)"),
        ("sweep", "budgets for a B,objective,spend sweep (each > 0)"),
        ("ideas", "list of {id, u_emt, feasible} for filtering and selection"),
        ("delta_thresh", "governance threshold on u_emt"),
        ("link", "{needs, knowledge_items, threshold} for activation (optional)"),
        (
            "utility",
            "{series, beta in (0,1), tail} for recursive utility (optional)",
        ),
    ];

    pub fn problem(&self) -> SubsidyProblem {
        SubsidyProblem {
            occupations: self.occupations.clone(),
            budget: self.budget,
        }
    }

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.errors.extend(self.problem().field_errors());
        c.positive("tol", self.tol);
        c.require(
            self.sweep.iter().all(|b| *b > 0.0 && b.is_finite()),
            "sweep",
            "budgets must be finite and > 0",
        );
        c.require(
            self.ideas.iter().all(|i| i.u_emt.is_finite()),
            "ideas",
            "scores must be finite",
        );
        c.require(!self.delta_thresh.is_nan(), "delta_thresh", "must be a number");
        if let Some(link) = &self.link {
            let dim = link.needs.len();
            c.require(
                link.knowledge_items.iter().all(|k| k.len() == dim),
                "link.knowledge_items",
                format!("every item must have dimension {dim}"),
            );
        }
        if let Some(u) = &self.utility {
            c.open_unit_interval("utility.beta", u.beta);
        }
        c.finish()
    }

    pub fn run(&self) -> Result<PolicyReport> {
        let solution = optimize_subsidies(&self.problem(), self.tol)?;
        let sweep = self
            .sweep
            .iter()
            .map(|&budget| {
                let sol = optimize_subsidies(
                    &SubsidyProblem {
                        budget,
                        ..self.problem()
                    },
                    self.tol,
                )?;
                Ok(SweepRow {
                    budget,
                    objective: sol.objective,
                    spend: sol.spend,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let (approved_ideas, selected_idea) = if self.ideas.is_empty() {
            (None, None)
        } else {
            let approved = governance_filter(&self.ideas, self.delta_thresh);
            let selected = demanduct_select(&approved).ok();
            (Some(approved.into_iter().map(|i| i.id).collect()), selected)
        };
        Ok(PolicyReport {
            solution,
            sweep,
            approved_ideas,
            selected_idea,
            activated: self.link.as_ref().map(exduct).transpose()?,
            utility: self
                .utility
                .as_ref()
                .map(|u| recursive_utility(&u.series, u.beta, u.tail))
                .transpose()?,
        })
    }

    pub fn checks(&self, report: &PolicyReport) -> Vec<Check> {
        let sol = &report.solution;
        let active = self.occupations.iter().any(|o| o.lambda_align * o.eta > 0.0);
        let mut checks = vec![Check::new(
            "kkt_stationarity",
            sol.kkt_residual <= 1e-6,
            format!("relative residual {:e}", sol.kkt_residual),
        )];
        if active {
            checks.push(Check::new(
                "budget_binds",
                (sol.spend - self.budget).abs() <= self.tol.max(1e-12) * self.budget,
                format!("spend {} vs budget {}", sol.spend, self.budget),
            ));
        }
        let mut by_budget: Vec<&SweepRow> = report.sweep.iter().collect();
        by_budget.sort_by(|a, b| a.budget.total_cmp(&b.budget));
        checks.push(Check::new(
            "objective_monotone_in_budget",
            by_budget.windows(2).all(|w| w[1].objective >= w[0].objective - 1e-12),
            format!("{} sweep points", by_budget.len()),
        ));
        checks
    }
}
