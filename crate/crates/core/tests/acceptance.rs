//! Acceptance gate: one line per criterion, non-zero exit on any failure.

mod common;

use std::time::Instant;

use common::{enumerated_optimum, policy_value, subsidy_grid, PdGame};
use emt_lab::dynprog::{
    path_sensitivity, policy_evaluation, realtime_surplus, value_iteration, MdpScenario, MdpSpec, RewardOffset, Shock,
    DEFAULT_MAX_ITER,
};
use emt_lab::epistemic;
use emt_lab::feedback::{loop_diagnostics, nearest_state, simulate_loop, FeedbackParams};
use emt_lab::game::{is_subgame_perfect, Action, PenaltyMode, StageGame, Strategy};
use emt_lab::gravity::flywheel_checks;
use emt_lab::growth::{free_entry_mu, incumbent_value};
use emt_lab::harness::{bundled, bundled_names, run_twice, ModuleParams};
use emt_lab::policy::{optimize_subsidies, Occupation, PolicyScenario, SubsidyProblem};
use emt_lab::recombinant::{self, log2_combinations, EvtScenario, TailDistribution};
use emt_lab::rng::stream_rng;
use rand::Rng;

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn evt_law() -> Outcome {
    let families = [
        TailDistribution::Exponential { rate: 1.0 },
        TailDistribution::Uniform { b: 1.0 },
        TailDistribution::Pareto { xm: 1.0, shape: 2.5 },
        TailDistribution::Lognormal { mu: 0.0, sigma: 1.0 },
        TailDistribution::Weibull { scale: 1.0, shape: 1.5 },
    ];
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst_ks: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    for (f, dist) in families.iter().enumerate() {
        for (j, k_draws) in [1_000usize, 10_000].into_iter().enumerate() {
            let scn = EvtScenario {
                distribution: dist.clone(),
                k_draws,
                replicates: 2000,
                ks_threshold: 0.05,
            };
            let (report, _) = match recombinant::run(&scn, 1000 + (2 * f + j) as u64) {
                Ok(r) => r,
                Err(e) => return outcome(false, format!("{} K={k_draws}: {e}", dist.name())),
            };
            worst_ks = worst_ks.max(report.ks);
            worst_z = worst_z.max((report.mean - report.exact_mean).abs() / (report.mean_tolerance / 3.0));
            if !(report.ks < 0.05 && report.mean_within_3sigma) {
                failures.push(format!(
                    "{} K={k_draws} (KS {:.4}, mean {:.4})",
                    dist.name(),
                    report.ks,
                    report.mean
                ));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let passed = failures.is_empty() && secs < 10.0;
    outcome(
        passed,
        format!(
            "10 cases, max KS {worst_ks:.4} < 0.05, max |mean - K/(K+1)| = {worst_z:.2} sigma <= 3, {secs:.2} s < 10 s{}",
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

fn single_state(beta: f64) -> MdpSpec {
    MdpSpec {
        rewards: vec![vec![1.0]],
        shocks: vec![Shock {
            prob: 1.0,
            label: String::new(),
        }],
        transitions: vec![vec![vec![0]]],
        beta,
    }
}

fn bellman_closed_form() -> Outcome {
    let mut worst_err: f64 = 0.0;
    let mut rates = Vec::new();
    let mut passed = true;
    for beta in [0.5, 0.9, 0.99] {
        match value_iteration(&single_state(beta), 1e-13, DEFAULT_MAX_ITER) {
            Ok(sol) => {
                let err = (sol.values[0] - 1.0 / (1.0 - beta)).abs();
                worst_err = worst_err.max(err);
                let rate = sol.tail_rate(10).unwrap_or(f64::NAN);
                rates.push(format!("{rate:.12} (beta {beta})"));
                passed &= err <= 1e-10 && rate <= beta;
            }
            Err(e) => return outcome(false, format!("beta {beta}: {e}")),
        }
    }
    outcome(
        passed,
        format!(
            "max |V - 1/(1-beta)| = {worst_err:.1e} <= 1e-10; tail rates {}",
            rates.join(", ")
        ),
    )
}

fn random_mdps() -> Vec<(MdpSpec, Vec<usize>)> {
    (0..100)
        .map(|i| {
            let mut rng = stream_rng(2024, i);
            let spec = MdpSpec::random(&mut rng, 5, 3, 2, 0.9);
            let legacy = (0..5).map(|_| rng.random_range(0..3)).collect();
            (spec, legacy)
        })
        .collect()
}

fn mdp_oracle(mdps: &[(MdpSpec, Vec<usize>)]) -> Outcome {
    let mut worst: f64 = 0.0;
    for (spec, _) in mdps {
        let sol = match value_iteration(spec, 1e-12, DEFAULT_MAX_ITER) {
            Ok(s) => s,
            Err(e) => return outcome(false, e.to_string()),
        };
        let greedy = match policy_evaluation(spec, &sol.policy) {
            Ok(v) => v,
            Err(e) => return outcome(false, e.to_string()),
        };
        let lu = policy_value(spec, &sol.policy);
        for ((g, o), d) in greedy.iter().zip(enumerated_optimum(spec)).zip(lu) {
            worst = worst.max((g - o).abs()).max((g - d).abs());
        }
    }
    outcome(
        worst <= 1e-8,
        format!("100 MDPs (5 states, 3 actions, 2 shocks), 243 policies each: max per-state gap {worst:.1e} <= 1e-8"),
    )
}

fn surplus_dominance(mdps: &[(MdpSpec, Vec<usize>)]) -> Outcome {
    let mut min = f64::INFINITY;
    for (spec, legacy) in mdps {
        match realtime_surplus(spec, legacy) {
            Ok(s) => min = s.into_iter().fold(min, f64::min),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(
        min >= -1e-8,
        format!("min surplus over 100 MDPs x 5 states = {min:.3e} >= -1e-8"),
    )
}

fn sensitivity() -> Outcome {
    let mut specs = vec![MdpScenario::default().mdp];
    specs.extend((0..10).map(|i| MdpSpec::random(&mut stream_rng(77, i), 5, 3, 2, 0.9)));
    let mut worst: f64 = 0.0;
    for spec in &specs {
        match path_sensitivity(spec, &RewardOffset::Uniform, 1e-3) {
            Ok(d) => worst = d.iter().fold(worst, |w, x| w.max((x - 10.0).abs())),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(
        worst <= 1e-4,
        format!(
            "beta 0.9, h 1e-3, {} MDPs: max |dV/dh - 10| = {worst:.1e} <= 1e-4",
            specs.len()
        ),
    )
}

fn subsidy_planner() -> Outcome {
    let problem = PolicyScenario::default().problem();
    let sol = match optimize_subsidies(&problem, 1e-10) {
        Ok(s) => s,
        Err(e) => return outcome(false, e.to_string()),
    };
    let grid = subsidy_grid(&problem, 1000);
    let gap = (sol.objective - grid).abs();
    let slack = (sol.spend - problem.budget).abs();
    let occ = Occupation {
        w: 1.5,
        l_bar: 2.0,
        eta: 0.8,
        lambda_align: 1.2,
    };
    let sym = SubsidyProblem {
        occupations: vec![occ; 3],
        budget: 3.0,
    };
    let spread = match optimize_subsidies(&sym, 1e-10) {
        Ok(s) => {
            let max = s.s_star.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = s.s_star.iter().copied().fold(f64::INFINITY, f64::min);
            max - min
        }
        Err(e) => return outcome(false, e.to_string()),
    };
    outcome(
        gap <= 1e-3 && slack <= 1e-3 * problem.budget && spread <= 1e-6,
        format!(
            "objective {:.6} vs grid {grid:.6} (gap {gap:.1e} <= 1e-3); |spend - B| = {slack:.1e} <= {:.0e}; symmetric spread {spread:.1e} <= 1e-6",
            sol.objective,
            1e-3 * problem.budget
        ),
    )
}

fn conservation() -> Outcome {
    let params = FeedbackParams {
        theta_meta: 0.0,
        horizon: 6284,
        dt: 1e-3,
        ..FeedbackParams::default()
    };
    let traj = match simulate_loop(&params, 0) {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let drift = traj
        .iter()
        .map(|s| (s.eps_err * s.eps_err + s.a_sig * s.a_sig - 1.0).abs())
        .fold(0.0, f64::max);
    let diag = loop_diagnostics(&traj, params.settle_threshold)
        .map(|d| d.energy_drift)
        .unwrap_or(f64::NAN);
    let at_pi = nearest_state(&traj, std::f64::consts::PI)
        .map(|s| (s.o_val - 2.0).abs())
        .unwrap_or(f64::NAN);
    outcome(
        drift < 1e-6 && diag < 1e-6 && at_pi < 1e-6,
        format!("max |eps^2 + A^2 - 1| = {drift:.1e} < 1e-6; |O(pi) - 2| = {at_pi:.1e} < 1e-6"),
    )
}

fn game_equilibria() -> Outcome {
    let mut notes = Vec::new();
    let mut passed = true;
    for horizon in 1..=3 {
        for (p, mode, want_c, want_d) in [
            (0.5, PenaltyMode::Lexicographic, Some(true), None),
            (0.1, PenaltyMode::Lexicographic, Some(true), None),
            (0.0, PenaltyMode::Finite { omega: 0.0 }, Some(false), Some(true)),
        ] {
            let game = StageGame {
                p_disc: p,
                horizon,
                penalty_mode: mode,
                ..StageGame::default()
            };
            let oracle = PdGame {
                cc: game.payoff_cc,
                temptation: game.payoff_defector,
                sucker: game.payoff_victim,
                dd: game.payoff_dd,
                p,
                delta: game.delta_disc,
                horizon,
                omega: match mode {
                    PenaltyMode::Lexicographic => None,
                    PenaltyMode::Finite { omega } => Some(omega),
                },
            };
            for (action, want) in [(Action::C, want_c), (Action::D, want_d)] {
                let Some(want) = want else { continue };
                let got = is_subgame_perfect(&game, &vec![Strategy::always(action, horizon); 2]);
                let agree = oracle.stationary_is_spne(action == Action::D);
                if got.as_ref().ok() != Some(&want) || agree != want {
                    passed = false;
                    notes.push(format!("T={horizon} p={p} all-{action:?}: got {got:?}, oracle {agree}"));
                }
            }
        }
    }
    outcome(
        passed,
        if passed {
            "T in {1,2,3}: lexicographic p in {0.1, 0.5} certifies all-C; finite p=0 certifies all-D and rejects all-C; oracle agrees".to_string()
        } else {
            notes.join("; ")
        },
    )
}

fn flywheel() -> Outcome {
    let cfg = match bundled("flywheel_default") {
        Some(Ok(c)) => c,
        other => {
            return outcome(
                false,
                format!("bundled scenario unavailable: {:?}", other.map(|r| r.err())),
            )
        }
    };
    let ModuleParams::Gravity(scn) = &cfg.params else {
        return outcome(false, "flywheel_default is not a gravity scenario");
    };
    match scn.run() {
        Ok(res) => {
            let checks = flywheel_checks(&res);
            let dominance = checks
                .iter()
                .filter(|c| c.name != "energy_non_increasing")
                .all(|c| c.passed);
            outcome(
                dominance,
                format!(
                    "{} needs, T = {}: U_aligned(T) = {:.4} < U_blind(T) = {:.4}, dominance at every step: {}",
                    scn.needs.len(),
                    scn.horizon,
                    res.u_series_aligned.last().copied().unwrap_or(f64::NAN),
                    res.u_series_blind.last().copied().unwrap_or(f64::NAN),
                    checks[0].passed
                ),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn combinatorics() -> Outcome {
    let mut mismatches = Vec::new();
    let mut cases = 0;
    for n in 0..=20u32 {
        let mut row = vec![1u64];
        for _ in 0..n {
            let mut next = vec![1u64; row.len() + 1];
            for k in 1..row.len() {
                next[k] = row[k - 1] + row[k];
            }
            row = next;
        }
        let literal = (row.iter().sum::<u64>() as f64).log2();
        let mut inputs = vec![(f64::from(n), 1.0)];
        if n * n <= 400 {
            inputs.push((f64::from(n * n), 0.5));
        }
        if n > 0 && u64::from(n).pow(4) < (1 << 53) {
            inputs.push((f64::from(n).powi(4), 0.25));
        }
        for (a, phi) in inputs {
            cases += 1;
            match log2_combinations(a, phi) {
                Ok(v) if v == literal => {}
                other => mismatches.push(format!("A={a}, phi={phi}: {other:?} vs {literal}")),
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{cases} cases with integer A^phi in 0..=20 match log2 of the binomial sum exactly")
        } else {
            mismatches.join("; ")
        },
    )
}

fn schumpeter() -> Outcome {
    let mut rng = stream_rng(31337, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let pi_flow = rng.random_range(0.01..100.0);
        let psi = pi_flow * rng.random_range(0.0..0.999);
        let r_rate = rng.random_range(1e-3..1.0);
        let residual = free_entry_mu(pi_flow, psi, r_rate)
            .and_then(|mu| incumbent_value(pi_flow, r_rate, mu).map(|v| (mu * v - psi).abs()));
        match residual {
            Ok(r) => worst = worst.max(r),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    outcome(
        worst < 1e-10,
        format!("1000 draws: max |mu V - psi| = {worst:.1e} < 1e-10"),
    )
}

fn mode_transition() -> Outcome {
    let cfg = match bundled("epistemic_default") {
        Some(Ok(c)) => c,
        _ => return outcome(false, "bundled epistemic scenario unavailable"),
    };
    let ModuleParams::Epistemic(scn) = &cfg.params else {
        return outcome(false, "epistemic_default is not an epistemic scenario");
    };
    let rows = match epistemic::simulate(scn, cfg.seed) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let Some(first) = rows.iter().position(|r| r.p >= scn.p_bar) else {
        return outcome(false, "trajectory never reaches p_bar");
    };
    let exact = rows.iter().all(|r| (r.theta == scn.eps_resid) == (r.p >= scn.p_bar));
    let monotone = rows.windows(2).all(|w| w[1].pi >= w[0].pi);
    outcome(
        exact && monotone,
        format!(
            "P crosses p_bar at t = {:.3}; theta == eps_resid exactly on all {} rows with P >= p_bar and none before: {exact}; pi non-decreasing: {monotone}",
            rows[first].t,
            rows.len() - first
        ),
    )
}

fn determinism() -> Outcome {
    let mut failures = Vec::new();
    let mut count = 0;
    for name in bundled_names() {
        count += 1;
        let cfg = match bundled(name) {
            Some(Ok(c)) => c,
            _ => {
                failures.push(format!("{name}: config invalid"));
                continue;
            }
        };
        let dir = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => return outcome(false, e.to_string()),
        };
        match run_twice(&cfg, dir.path()) {
            Ok(r) if r.identical_bytes && r.identical_digest => {}
            Ok(_) => failures.push(format!("{name}: outputs differ")),
            Err(e) => failures.push(e.to_string()),
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{count} bundled scenarios rerun with byte-identical artifacts and digests")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mdps = random_mdps();
    let criteria: Vec<Criterion> = vec![
        ("EVT law", Box::new(evt_law)),
        ("Bellman closed form", Box::new(bellman_closed_form)),
        ("MDP oracle equivalence", Box::new(|| mdp_oracle(&mdps))),
        ("Real-time surplus dominance", Box::new(|| surplus_dominance(&mdps))),
        ("Path sensitivity", Box::new(sensitivity)),
        ("Subsidy planner", Box::new(subsidy_planner)),
        ("Cybernetic conservation", Box::new(conservation)),
        ("Game equilibria", Box::new(game_equilibria)),
        ("Flywheel dominance", Box::new(flywheel)),
        ("Combinatorics", Box::new(combinatorics)),
        ("Schumpeter consistency", Box::new(schumpeter)),
        ("Mode transition", Box::new(mode_transition)),
        ("Determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "[{}] AC-{} {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
