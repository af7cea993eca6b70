//! Repeated cooperation game with consciousness-discontinuity risk.
//!
//! Every defection independently ends the game for all players with
//! probability `p_disc`. The round in which it happens still pays out. Under
//! the lexicographic penalty a player first minimizes the probability of
//! discontinuity and only then maximizes discounted payoff; under the finite
//! penalty the loss is `omega` times that probability.
//!
//! Strategies are deterministic, so a profile induces a single continuation
//! path and the only randomness is the discontinuity draw.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::check::Check;
use crate::error::{Checker, FieldError, ModelError, Result};

/// Two outcomes count as equally likely to end the game within this margin.
pub const TIE_EPS: f64 = 1e-12;
pub const DEFAULT_MAX_PROFILES: u128 = 1 << 20;
pub const MAX_PLAYERS: usize = 3;
pub const MAX_HORIZON: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    C,
    D,
}

impl Action {
    fn from_bit(bit: bool) -> Self {
        if bit {
            Action::D
        } else {
            Action::C
        }
    }

    fn symbol(self) -> char {
        match self {
            Action::C => 'C',
            Action::D => 'D',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyMode {
    Lexicographic,
    Finite { omega: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageGame {
    pub n_players: usize,
    pub payoff_cc: f64,
    /// Defector's payoff while at least one other player cooperates.
    pub payoff_defector: f64,
    /// Cooperator's payoff when anyone defects.
    pub payoff_victim: f64,
    /// Defector's payoff when everyone defects.
    pub payoff_dd: f64,
    pub p_disc: f64,
    pub delta_disc: f64,
    pub horizon: usize,
    pub penalty_mode: PenaltyMode,
}

impl Default for StageGame {
    fn default() -> Self {
        Self {
            n_players: 2,
            payoff_cc: 2.0,
            payoff_defector: 3.0,
            payoff_victim: 0.0,
            payoff_dd: 1.0,
            p_disc: 0.5,
            delta_disc: 0.9,
            horizon: 2,
            penalty_mode: PenaltyMode::Lexicographic,
        }
    }
}

impl StageGame {
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.require(self.n_players >= 2, "n_players", "must be >= 2");
        c.require(self.n_players <= 16, "n_players", "must be <= 16");
        for (field, v) in [
            ("payoff_cc", self.payoff_cc),
            ("payoff_defector", self.payoff_defector),
            ("payoff_victim", self.payoff_victim),
            ("payoff_dd", self.payoff_dd),
        ] {
            c.finite(field, v);
        }
        c.unit_interval("p_disc", self.p_disc);
        c.open_unit_interval("delta_disc", self.delta_disc);
        c.require(self.horizon >= 1, "horizon", "must be >= 1");
        if let PenaltyMode::Finite { omega } = self.penalty_mode {
            c.require(
                omega.is_finite() && omega <= 0.0,
                "penalty_mode.omega",
                format!("must be finite and <= 0, got {omega}"),
            );
        }
        c.finish()
    }

    pub fn validate(&self) -> Result<()> {
        match self.field_errors().into_iter().next() {
            None => Ok(()),
            Some(e) => Err(ModelError::Input(e.to_string())),
        }
    }

    /// Stage payoff to `player` when bit `j` of `moves` marks player `j` defecting.
    pub fn stage_payoff(&self, moves: u32, player: usize) -> f64 {
        let all = (1u32 << self.n_players) - 1;
        let defects = moves >> player & 1 == 1;
        match (defects, moves) {
            (false, 0) => self.payoff_cc,
            (false, _) => self.payoff_victim,
            (true, m) if m == all => self.payoff_dd,
            (true, _) => self.payoff_defector,
        }
    }

    fn end_probability(&self, moves: u32) -> f64 {
        1.0 - (1.0 - self.p_disc).powi(moves.count_ones() as i32)
    }

    fn profiles_per_round(&self) -> u32 {
        1 << self.n_players
    }
}

/// Play so far: one bitmask of defectors per completed round.
pub type History = [u32];

pub fn history_key(history: &History, n_players: usize) -> String {
    history
        .iter()
        .map(|&m| {
            (0..n_players)
                .map(|j| Action::from_bit(m >> j & 1 == 1).symbol())
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("|")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// One action per round, whatever happened before.
    OpenLoop { actions: Vec<Action> },
    /// First-round action, then a reply to the previous round's profile.
    /// `responses[m]` answers the profile whose defectors are the bits of `m`.
    MemoryOne { initial: Action, responses: Vec<Action> },
    /// Action per history key: rounds joined by `|`, each round one symbol
    /// per player (`""` is the first round, `"CD|DD"` the third).
    Explicit { plan: BTreeMap<String, Action> },
}

impl Strategy {
    pub fn always(action: Action, horizon: usize) -> Self {
        Strategy::OpenLoop {
            actions: vec![action; horizon],
        }
    }

    pub fn action(&self, history: &History, n_players: usize, player: usize) -> Result<Action> {
        let missing = || {
            ModelError::Input(format!(
                "incomplete profile: player {player} has no action after history '{}'",
                history_key(history, n_players)
            ))
        };
        match self {
            Strategy::OpenLoop { actions } => actions.get(history.len()).copied().ok_or_else(missing),
            Strategy::MemoryOne { initial, responses } => match history.last() {
                None => Ok(*initial),
                Some(&m) => responses.get(m as usize).copied().ok_or_else(missing),
            },
            Strategy::Explicit { plan } => plan.get(&history_key(history, n_players)).copied().ok_or_else(missing),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = |a: &[Action]| a.iter().map(|x| x.symbol()).collect::<String>();
        match self {
            Strategy::OpenLoop { actions } => write!(f, "open-loop {}", word(actions)),
            Strategy::MemoryOne { initial, responses } => {
                write!(f, "memory-one {}/{}", initial.symbol(), word(responses))
            }
            Strategy::Explicit { plan } => write!(f, "explicit ({} histories)", plan.len()),
        }
    }
}

/// Continuation value from some history onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Probability that discontinuity occurs from here on.
    pub disc_prob: f64,
    /// Expected discounted stage payoff, excluding any penalty.
    pub payoff: f64,
}

impl Outcome {
    /// Value of a round that ends the game with `end_prob` and pays `stage`.
    fn round(end_prob: f64, stage: f64, next: Option<Outcome>) -> Outcome {
        let next = next.unwrap_or(Outcome {
            disc_prob: 0.0,
            payoff: 0.0,
        });
        Outcome {
            disc_prob: end_prob + (1.0 - end_prob) * next.disc_prob,
            payoff: stage + (1.0 - end_prob) * next.payoff,
        }
    }

    pub fn utility(&self, omega: f64) -> f64 {
        self.payoff + self.disc_prob * omega
    }
}

impl PenaltyMode {
    /// Strict preference of `a` over `b`.
    pub fn prefers(&self, a: &Outcome, b: &Outcome) -> bool {
        match *self {
            PenaltyMode::Lexicographic => {
                a.disc_prob < b.disc_prob - TIE_EPS
                    || ((a.disc_prob - b.disc_prob).abs() <= TIE_EPS && a.payoff > b.payoff + TIE_EPS)
            }
            PenaltyMode::Finite { omega } => a.utility(omega) > b.utility(omega) + TIE_EPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEvaluation {
    /// Finite mode: payoff plus penalty. Lexicographic mode: payoff only,
    /// to be read after `continuity_prob`.
    pub expected_payoffs: Vec<f64>,
    pub continuity_prob: f64,
    pub outcomes: Vec<Outcome>,
}

fn check_profile(game: &StageGame, profile: &[Strategy]) -> Result<()> {
    game.validate()?;
    if profile.len() != game.n_players {
        return Err(ModelError::Input(format!(
            "profile has {} strategies for {} players",
            profile.len(),
            game.n_players
        )));
    }
    Ok(())
}

fn moves_at(game: &StageGame, profile: &[Strategy], history: &History) -> Result<u32> {
    profile.iter().enumerate().try_fold(0u32, |acc, (j, s)| {
        Ok(acc | u32::from(s.action(history, game.n_players, j)? == Action::D) << j)
    })
}

/// Values for every player when all follow `profile` from `history`.
fn follow(game: &StageGame, profile: &[Strategy], history: &mut Vec<u32>) -> Result<Vec<Outcome>> {
    let t = history.len();
    let moves = moves_at(game, profile, history)?;
    let end = game.end_probability(moves);
    let next = if t + 1 < game.horizon {
        history.push(moves);
        let v = follow(game, profile, history);
        history.pop();
        Some(v?)
    } else {
        None
    };
    let discount = game.delta_disc.powi(t as i32);
    Ok((0..game.n_players)
        .map(|i| Outcome::round(end, discount * game.stage_payoff(moves, i), next.as_ref().map(|n| n[i])))
        .collect())
}

/// Best value `player` can reach from `history` while the others follow `profile`.
fn best_reply(game: &StageGame, profile: &[Strategy], player: usize, history: &mut Vec<u32>) -> Result<Outcome> {
    let t = history.len();
    let others = moves_at(game, profile, history)? & !(1 << player);
    let discount = game.delta_disc.powi(t as i32);
    let mut best: Option<Outcome> = None;
    for own in [0u32, 1 << player] {
        let moves = others | own;
        let end = game.end_probability(moves);
        let next = if t + 1 < game.horizon {
            history.push(moves);
            let v = best_reply(game, profile, player, history);
            history.pop();
            Some(v?)
        } else {
            None
        };
        let value = Outcome::round(end, discount * game.stage_payoff(moves, player), next);
        if best.is_none_or(|b| game.penalty_mode.prefers(&value, &b)) {
            best = Some(value);
        }
    }
    Ok(best.expect("two candidate actions"))
}

pub fn evaluate_profile(game: &StageGame, profile: &[Strategy]) -> Result<OutcomeEvaluation> {
    check_profile(game, profile)?;
    let outcomes = follow(game, profile, &mut Vec::new())?;
    let expected_payoffs = outcomes
        .iter()
        .map(|o| match game.penalty_mode {
            PenaltyMode::Lexicographic => o.payoff,
            PenaltyMode::Finite { omega } => o.utility(omega),
        })
        .collect();
    Ok(OutcomeEvaluation {
        expected_payoffs,
        continuity_prob: 1.0 - outcomes[0].disc_prob,
        outcomes,
    })
}

fn all_histories(game: &StageGame) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 1..game.horizon {
        layer = layer
            .iter()
            .flat_map(|h: &Vec<u32>| {
                (0..game.profiles_per_round()).map(move |m| {
                    let mut next = h.clone();
                    next.push(m);
                    next
                })
            })
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}

/// Whether no player gains by any deviation at any history, reached or not.
pub fn is_subgame_perfect(game: &StageGame, profile: &[Strategy]) -> Result<bool> {
    check_profile(game, profile)?;
    for mut history in all_histories(game) {
        let on_path = follow(game, profile, &mut history)?;
        for (player, value) in on_path.iter().enumerate() {
            let best = best_reply(game, profile, player, &mut history)?;
            if game.penalty_mode.prefers(&best, value) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyClass {
    #[default]
    OpenLoop,
    MemoryOne,
}

impl StrategyClass {
    pub fn strategies(self, game: &StageGame) -> Vec<Strategy> {
        let bits_to_actions = |code: u64, len: usize| {
            (0..len)
                .map(|b| Action::from_bit(code >> b & 1 == 1))
                .collect::<Vec<_>>()
        };
        match self {
            StrategyClass::OpenLoop => (0..1u64 << game.horizon)
                .map(|code| Strategy::OpenLoop {
                    actions: bits_to_actions(code, game.horizon),
                })
                .collect(),
            StrategyClass::MemoryOne => {
                let len = game.profiles_per_round() as usize;
                (0..2u64 << len)
                    .map(|code| Strategy::MemoryOne {
                        initial: Action::from_bit(code & 1 == 1),
                        responses: bits_to_actions(code >> 1, len),
                    })
                    .collect()
            }
        }
    }

    /// Strategies per player, without building them.
    pub fn count(self, game: &StageGame) -> u128 {
        match self {
            StrategyClass::OpenLoop => 1u128.checked_shl(game.horizon as u32).unwrap_or(u128::MAX),
            StrategyClass::MemoryOne => 2u128.checked_shl(1u32 << game.n_players.min(6)).unwrap_or(u128::MAX),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpneReport {
    pub equilibria: Vec<Vec<Strategy>>,
    pub all_c_is_spne: bool,
    pub all_d_is_spne: bool,
    pub profiles_checked: u128,
}

pub fn spne_search(game: &StageGame, class: StrategyClass, max_profiles: u128) -> Result<SpneReport> {
    game.validate()?;
    if game.n_players > MAX_PLAYERS || game.horizon > MAX_HORIZON {
        return Err(ModelError::Input(format!(
            "exhaustive search supports at most {MAX_PLAYERS} players and {MAX_HORIZON} rounds"
        )));
    }
    let per_player = class.count(game);
    let cardinality = per_player.checked_pow(game.n_players as u32).unwrap_or(u128::MAX);
    if cardinality > max_profiles {
        return Err(ModelError::SearchSpace {
            cardinality,
            limit: max_profiles,
        });
    }
    let strategies = class.strategies(game);
    let n = game.n_players;
    let base = strategies.len() as u64;
    let found: Result<Vec<Option<Vec<Strategy>>>> = (0..cardinality as u64)
        .into_par_iter()
        .map(|code| {
            let profile: Vec<Strategy> = (0..n)
                .map(|j| strategies[(code / base.pow(j as u32) % base) as usize].clone())
                .collect();
            Ok(is_subgame_perfect(game, &profile)?.then_some(profile))
        })
        .collect();
    let uniform = |a| vec![Strategy::always(a, game.horizon); n];
    Ok(SpneReport {
        equilibria: found?.into_iter().flatten().collect(),
        all_c_is_spne: is_subgame_perfect(game, &uniform(Action::C))?,
        all_d_is_spne: is_subgame_perfect(game, &uniform(Action::D))?,
        profiles_checked: cardinality,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumExpectation {
    pub all_c_is_spne: Option<bool>,
    pub all_d_is_spne: Option<bool>,
}

/// Parameter block for a game scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameScenario {
    pub game: StageGame,
    pub strategy_class: StrategyClass,
    pub max_profiles: u128,
    /// Optional profile to evaluate alongside the search.
    pub profile: Option<Vec<Strategy>>,
    pub expect: Option<EquilibriumExpectation>,
}

impl Default for GameScenario {
    fn default() -> Self {
        Self {
            game: StageGame::default(),
            strategy_class: StrategyClass::OpenLoop,
            max_profiles: DEFAULT_MAX_PROFILES,
            profile: None,
            expect: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameReport {
    pub all_c_is_spne: bool,
    pub all_d_is_spne: bool,
    pub profiles_checked: u128,
    pub equilibria_count: usize,
    pub equilibria: Vec<Vec<String>>,
    pub all_c: OutcomeEvaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<OutcomeEvaluation>,
}

impl GameScenario {
    pub const FIELDS: &'static [(&'static str, &'static str)] = &[
        (
            "game",
            "{n_players, payoff_cc, payoff_defector, payoff_victim, payoff_dd, p_disc, delta_disc, horizon, penalty_mode}",
        ),
        ("strategy_class", "open_loop | memory_one"),
        ("max_profiles", "bound on enumerated strategy profiles"),
        ("profile", "optional per-player strategies to evaluate"),
        ("expect", "optional {all_c_is_spne, all_d_is_spne} to check"),
    ];

    pub fn validate(&self) -> Vec<FieldError> {
        let mut c = Checker::default();
        c.nested("game", self.game.field_errors());
        c.require(
            self.game.n_players <= MAX_PLAYERS,
            "game.n_players",
            format!("exhaustive search supports at most {MAX_PLAYERS} players"),
        );
        c.require(
            self.game.horizon <= MAX_HORIZON,
            "game.horizon",
            format!("exhaustive search supports at most {MAX_HORIZON} rounds"),
        );
        c.require(self.max_profiles >= 1, "max_profiles", "must be >= 1");
        if let Some(p) = &self.profile {
            c.require(
                p.len() == self.game.n_players,
                "profile",
                format!("must list {} strategies", self.game.n_players),
            );
        }
        c.finish()
    }

    pub fn run(&self) -> Result<GameReport> {
        let search = spne_search(&self.game, self.strategy_class, self.max_profiles)?;
        let all_c = evaluate_profile(
            &self.game,
            &vec![Strategy::always(Action::C, self.game.horizon); self.game.n_players],
        )?;
        let profile = self
            .profile
            .as_deref()
            .map(|p| evaluate_profile(&self.game, p))
            .transpose()?;
        Ok(GameReport {
            all_c_is_spne: search.all_c_is_spne,
            all_d_is_spne: search.all_d_is_spne,
            profiles_checked: search.profiles_checked,
            equilibria_count: search.equilibria.len(),
            equilibria: search
                .equilibria
                .iter()
                .map(|p| p.iter().map(ToString::to_string).collect())
                .collect(),
            all_c,
            profile,
        })
    }

    pub fn checks(&self, report: &GameReport) -> Vec<Check> {
        let mut checks = vec![Check::new(
            "continuity_in_unit_interval",
            (0.0..=1.0).contains(&report.all_c.continuity_prob),
            format!("all-C continuity {}", report.all_c.continuity_prob),
        )];
        if let Some(e) = &self.expect {
            for (name, want, got) in [
                ("all_c_is_spne", e.all_c_is_spne, report.all_c_is_spne),
                ("all_d_is_spne", e.all_d_is_spne, report.all_d_is_spne),
            ] {
                if let Some(want) = want {
                    checks.push(Check::new(name, want == got, format!("expected {want}, found {got}")));
                }
            }
        }
        checks
    }
}
