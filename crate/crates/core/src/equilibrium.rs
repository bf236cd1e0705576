//! Equilibrium checks for the donation game and its two-sided variant.
//!
//! Grim-family profiles are evaluated on a finite abstraction of the public
//! history: the agent's own flag, the current partner's flag and, in the
//! donation game, whose turn it is to give. Populations are homogeneous and
//! witnesses truthful, so every new partner is clean on the path of play.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{ir_payoff, DonationParams};
use crate::gossip::{GossipProtocol, ProtocolVariant};
use crate::model::{
    discounted_return_indexed, AgentId, BinaryAction, HorizonKind, Indexing, MonitoringMode,
    Observation, Payload, Tone,
};
use crate::scheduler::donation_schedule;
use crate::sim::{simulate, GameSpec, SimConfig, SimLog};
use crate::strategy::{ActionRule, AgentPolicy, Decision, PolicyError, Reporter, ScriptedPolicy};
use crate::TOLERANCE;

/// Default truncation length of the summed evaluation.
pub const DEFAULT_T_CHECK: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("discount factor 1 has no finite discounted value; undiscounted limit flagged")]
    UndiscountedLimit,
    #[error("profile '{0}' cannot be expressed over the clean/flagged abstraction")]
    Unabstractable(String),
    #[error("ill-formed game: {0}")]
    InvalidGame(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReport {
    pub label: String,
    pub state: String,
    pub value_cooperate_path: f64,
    pub value_deviation: f64,
    pub margin: f64,
    pub spe_holds: bool,
    /// Truncation error bound, when the values come from a truncated sum.
    pub tail_bound: Option<f64>,
    pub assumptions: String,
}

impl ValueReport {
    fn new(
        label: &str,
        state: String,
        path: f64,
        deviation: f64,
        tail_bound: Option<f64>,
        assumptions: &str,
    ) -> Self {
        let margin = path - deviation;
        ValueReport {
            label: label.to_string(),
            state,
            value_cooperate_path: path,
            value_deviation: deviation,
            margin,
            spe_holds: margin >= -TOLERANCE,
            tail_bound,
            assumptions: assumptions.to_string(),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<(), EquilibriumError> {
    if gamma == 1.0 {
        return Err(EquilibriumError::UndiscountedLimit);
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(EquilibriumError::InvalidGame(format!(
            "discount factor {gamma} outside (0, 1)"
        )));
    }
    Ok(())
}

/// Value of the alternating stream -c, b, -c, b, ... seen by a donor who
/// starts clean in a cooperative population.
pub fn grim_cooperation_value(
    gamma: f64,
    benefit: f64,
    cost: f64,
) -> Result<f64, EquilibriumError> {
    check_gamma(gamma)?;
    Ok((gamma * benefit - cost) / (1.0 - gamma * gamma))
}

/// Partial sum of the same stream over `t_check` terms, with the bound on
/// the omitted tail.
pub fn truncated_alternating_value(
    gamma: f64,
    benefit: f64,
    cost: f64,
    t_check: usize,
) -> (f64, f64) {
    let mut total = 0.0;
    let mut w = 1.0;
    for k in 0..t_check {
        total += w * if k % 2 == 0 { -cost } else { benefit };
        w *= gamma;
    }
    (total, w * benefit.abs().max(cost.abs()) / (1.0 - gamma))
}

pub fn spe_condition(gamma: f64, benefit: f64, cost: f64) -> bool {
    gamma >= cost / benefit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Defect against flagged partners and, once flagged, against everyone.
    Grim,
    /// Defect only against flagged partners.
    GrimLiteral,
    AllDefect,
    AlwaysCooperate,
}

impl Profile {
    pub const ALL: [Profile; 4] = [
        Profile::Grim,
        Profile::GrimLiteral,
        Profile::AllDefect,
        Profile::AlwaysCooperate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Grim => "grim",
            Profile::GrimLiteral => "grim_literal",
            Profile::AllDefect => "all_defect",
            Profile::AlwaysCooperate => "always_cooperate",
        }
    }

    /// Action of an agent with the given own and partner flags.
    pub fn decide(self, own_flagged: bool, partner_flagged: bool) -> BinaryAction {
        let defect = match self {
            Profile::Grim => own_flagged || partner_flagged,
            Profile::GrimLiteral => partner_flagged,
            Profile::AllDefect => true,
            Profile::AlwaysCooperate => false,
        };
        if defect {
            BinaryAction::Defect
        } else {
            BinaryAction::Cooperate
        }
    }

    fn action_rule(self) -> ActionRule {
        match self {
            Profile::Grim => ActionRule::Grim {
                global: false,
                defect_when_flagged: true,
            },
            Profile::GrimLiteral => ActionRule::Grim {
                global: false,
                defect_when_flagged: false,
            },
            Profile::AllDefect => ActionRule::AlwaysDefect,
            Profile::AlwaysCooperate => ActionRule::AlwaysCooperate,
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Profile {
    type Err = EquilibriumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| EquilibriumError::Unabstractable(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Donation,
    Ir,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    pub kind: MatrixKind,
    pub benefit: f64,
    pub cost: f64,
    pub gamma: f64,
}

impl MatrixGame {
    fn validate(&self) -> Result<(), EquilibriumError> {
        if !(self.cost > 0.0) {
            return Err(EquilibriumError::InvalidGame(
                "cost must be positive".into(),
            ));
        }
        if !(self.benefit > self.cost) {
            return Err(EquilibriumError::InvalidGame(
                "benefit must exceed cost".into(),
            ));
        }
        check_gamma(self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvalMode {
    /// Exact value of the eventually periodic reward stream.
    ClosedForm,
    /// Sum of the first `t_check` rewards; the tail bound is reported.
    Truncated { t_check: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckScope {
    /// States reachable on the path or after the agent's own deviations.
    #[default]
    OwnDeviations,
    /// Every abstract state, including ones where the current partner is
    /// already flagged.
    AllStates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AbstractState {
    /// Donation game only: the agent gives this step.
    pub donor: bool,
    pub own_flagged: bool,
    pub partner_flagged: bool,
}

impl fmt::Display for AbstractState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |b: bool| if b { "flagged" } else { "clean" };
        write!(
            f,
            "own={}, partner={}",
            flag(self.own_flagged),
            flag(self.partner_flagged)
        )
    }
}

struct Automaton {
    game: MatrixGame,
    profile: Profile,
}

impl Automaton {
    /// Reward and successor when the agent plays `action` (ignored for a
    /// donation recipient) and everyone else follows the profile.
    fn step(&self, s: AbstractState, action: BinaryAction) -> (f64, AbstractState) {
        let (b, c) = (self.game.benefit, self.game.cost);
        match self.game.kind {
            MatrixKind::Donation if s.donor => {
                let reward = if action.is_cooperate() { -c } else { 0.0 };
                let own = s.own_flagged || !action.is_cooperate();
                (
                    reward,
                    AbstractState {
                        donor: false,
                        own_flagged: own,
                        partner_flagged: false,
                    },
                )
            }
            MatrixKind::Donation => {
                let given = self.profile.decide(s.partner_flagged, s.own_flagged);
                let reward = if given.is_cooperate() { b } else { 0.0 };
                (
                    reward,
                    AbstractState {
                        donor: true,
                        own_flagged: s.own_flagged,
                        partner_flagged: false,
                    },
                )
            }
            MatrixKind::Ir => {
                let theirs = self.profile.decide(s.partner_flagged, s.own_flagged);
                let params = DonationParams {
                    cost: c,
                    benefit: b,
                    endowment: 0.0,
                };
                let (reward, _) = ir_payoff(action, theirs, &params);
                let own = s.own_flagged || !action.is_cooperate();
                (
                    reward,
                    AbstractState {
                        donor: false,
                        own_flagged: own,
                        partner_flagged: false,
                    },
                )
            }
        }
    }

    fn on_path(&self, s: AbstractState) -> BinaryAction {
        self.profile.decide(s.own_flagged, s.partner_flagged)
    }

    fn value(&self, start: AbstractState, mode: EvalMode) -> (f64, Option<f64>) {
        let gamma = self.game.gamma;
        match mode {
            EvalMode::Truncated { t_check } => {
                let (mut s, mut total, mut w, mut max_r) = (start, 0.0, 1.0, 0.0f64);
                for _ in 0..t_check {
                    let (r, next) = self.step(s, self.on_path(s));
                    total += w * r;
                    w *= gamma;
                    s = next;
                }
                for donor in [true, false] {
                    for own in [true, false] {
                        for partner in [true, false] {
                            let st = AbstractState {
                                donor,
                                own_flagged: own,
                                partner_flagged: partner,
                            };
                            for a in [BinaryAction::Cooperate, BinaryAction::Defect] {
                                max_r = max_r.max(self.step(st, a).0.abs());
                            }
                        }
                    }
                }
                (total, Some(w * max_r / (1.0 - gamma)))
            }
            EvalMode::ClosedForm => {
                // The chain is deterministic over finitely many states, so the
                // stream is a prefix followed by a cycle.
                let mut seen: HashMap<AbstractState, usize> = HashMap::new();
                let mut rewards = Vec::new();
                let mut s = start;
                let cycle_start = loop {
                    if let Some(&i) = seen.get(&s) {
                        break i;
                    }
                    seen.insert(s, rewards.len());
                    let (r, next) = self.step(s, self.on_path(s));
                    rewards.push(r);
                    s = next;
                };
                let prefix: f64 = rewards[..cycle_start]
                    .iter()
                    .enumerate()
                    .map(|(i, r)| gamma.powi(i as i32) * r)
                    .sum();
                let cycle = &rewards[cycle_start..];
                let cycle_sum: f64 = cycle
                    .iter()
                    .enumerate()
                    .map(|(i, r)| gamma.powi(i as i32) * r)
                    .sum();
                let value = prefix
                    + gamma.powi(cycle_start as i32) * cycle_sum
                        / (1.0 - gamma.powi(cycle.len() as i32));
                (value, None)
            }
        }
    }

    /// Decision states to examine.
    fn states(&self, scope: CheckScope) -> Vec<AbstractState> {
        let partners: &[bool] = match scope {
            CheckScope::OwnDeviations => &[false],
            CheckScope::AllStates => &[false, true],
        };
        let donor = self.game.kind == MatrixKind::Donation;
        let mut out = Vec::new();
        for own in [false, true] {
            for &partner in partners {
                out.push(AbstractState {
                    donor,
                    own_flagged: own,
                    partner_flagged: partner,
                });
            }
        }
        out
    }
}

fn assumptions(game: &MatrixGame, mode: EvalMode) -> String {
    let game = match game.kind {
        MatrixKind::Donation => "donation game with alternating donor and recipient turns",
        MatrixKind::Ir => "two-sided game with simultaneous moves",
    };
    let mode = match mode {
        EvalMode::ClosedForm => "exact periodic-stream value".to_string(),
        EvalMode::Truncated { t_check } => format!("sum truncated at {t_check} steps"),
    };
    format!(
        "{game}; homogeneous population; truthful witnesses; fresh clean partner each step; \
         participation-indexed discounting; {mode}"
    )
}

/// Compare the on-path value with the single-step deviation at every
/// examined state.
pub fn one_shot_deviation_check(
    profile: Profile,
    game: &MatrixGame,
    mode: EvalMode,
    scope: CheckScope,
) -> Result<Vec<ValueReport>, EquilibriumError> {
    game.validate()?;
    if let EvalMode::Truncated { t_check: 0 } = mode {
        return Err(EquilibriumError::InvalidGame(
            "truncation length must be positive".into(),
        ));
    }
    let auto = Automaton {
        game: *game,
        profile,
    };
    let text = assumptions(game, mode);
    let mut out = Vec::new();
    for s in auto.states(scope) {
        let path_action = auto.on_path(s);
        let eval = |action: BinaryAction| {
            let (r, next) = auto.step(s, action);
            let (v, tail) = auto.value(next, mode);
            (r + game.gamma * v, tail.map(|t| t * game.gamma))
        };
        let (path, tail) = eval(path_action);
        let (dev, _) = eval(path_action.flipped());
        let state = match game.kind {
            MatrixKind::Donation => format!("donor, {s}"),
            MatrixKind::Ir => format!("player, {s}"),
        };
        out.push(ValueReport::new(
            profile.as_str(),
            state,
            path,
            dev,
            tail,
            &text,
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDecision {
    pub round: u32,
    pub donor: bool,
    pub own_flagged: bool,
    pub partner_flagged: bool,
    pub action: BinaryAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSolution {
    pub decisions: Vec<StageDecision>,
    /// Smallest advantage of the optimal action over the alternative, per round.
    pub margins: Vec<f64>,
}

impl FiniteSolution {
    pub fn all_defect(&self) -> bool {
        self.decisions
            .iter()
            .all(|d| d.action == BinaryAction::Defect)
    }
}

/// Backward induction over rounds T..1. The continuation value of each
/// history class is computed from the later rounds; the best action is
/// chosen against every possible partner action.
pub fn backward_induction_finite(
    kind: MatrixKind,
    horizon: u32,
    benefit: f64,
    cost: f64,
    gamma: f64,
) -> FiniteSolution {
    let params = DonationParams {
        cost,
        benefit,
        endowment: 0.0,
    };
    let classes: Vec<(bool, bool)> =
        [(false, false), (false, true), (true, false), (true, true)].to_vec();
    // continuation[class] at round t+1, indexed by (own, partner) and role.
    let mut cont: HashMap<(bool, bool, bool), f64> = HashMap::new();
    let mut decisions = Vec::new();
    let mut margins = vec![0.0; horizon as usize];
    for t in (1..=horizon).rev() {
        let mut next: HashMap<(bool, bool, bool), f64> = HashMap::new();
        let mut round_margin = f64::INFINITY;
        let roles: &[bool] = match kind {
            MatrixKind::Donation => &[true, false],
            MatrixKind::Ir => &[false],
        };
        for &donor in roles {
            for &(own, partner) in &classes {
                let after = |a: BinaryAction| {
                    let own2 = own || !a.is_cooperate();
                    let role2 = kind == MatrixKind::Donation && !donor;
                    cont.get(&(role2, own2, false)).copied().unwrap_or(0.0)
                };
                if kind == MatrixKind::Donation && !donor {
                    // Recipients have no move; the donor's dominant action is
                    // defection, so nothing is received.
                    next.insert(
                        (donor, own, partner),
                        gamma * after(BinaryAction::Cooperate),
                    );
                    continue;
                }
                let total = |mine: BinaryAction, theirs: BinaryAction| {
                    let stage = match kind {
                        MatrixKind::Donation => {
                            if mine.is_cooperate() {
                                -cost
                            } else {
                                0.0
                            }
                        }
                        MatrixKind::Ir => ir_payoff(mine, theirs, &params).0,
                    };
                    stage + gamma * after(mine)
                };
                let mut margin = f64::INFINITY;
                for theirs in [BinaryAction::Cooperate, BinaryAction::Defect] {
                    margin = margin.min(
                        total(BinaryAction::Defect, theirs)
                            - total(BinaryAction::Cooperate, theirs),
                    );
                }
                let action = if margin > 0.0 {
                    BinaryAction::Defect
                } else {
                    BinaryAction::Cooperate
                };
                let value = total(action, BinaryAction::Defect);
                next.insert((donor, own, partner), value);
                decisions.push(StageDecision {
                    round: t,
                    donor,
                    own_flagged: own,
                    partner_flagged: partner,
                    action,
                });
                round_margin = round_margin.min(margin);
            }
        }
        margins[(t - 1) as usize] = round_margin;
        cont = next;
    }
    decisions.reverse();
    FiniteSolution { decisions, margins }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateDominance {
    /// Gain from defecting at any state, independent of the discount factor.
    pub gap: f64,
    pub report: ValueReport,
}

/// Under private monitoring the continuation does not depend on the donor's
/// action, so cooperation trails defection by exactly `c` at every state.
/// The common continuation value is irrelevant and set to 0 in the report.
pub fn private_monitoring_dominance(
    gamma: f64,
    cost: f64,
) -> Result<PrivateDominance, EquilibriumError> {
    if !(cost > 0.0) {
        return Err(EquilibriumError::InvalidGame(
            "cost must be positive".into(),
        ));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(EquilibriumError::InvalidGame(format!(
            "discount factor {gamma} outside (0, 1]"
        )));
    }
    let continuation = 0.0;
    let report = ValueReport::new(
        "cooperate_private",
        "any".into(),
        -cost + gamma * continuation,
        gamma * continuation,
        None,
        "private monitoring: only the two participants see the action, so continuation play is action independent",
    );
    Ok(PrivateDominance { gap: cost, report })
}

/// Flip the claim carried by a payload.
pub fn invert_payload(p: &Payload) -> Payload {
    match p {
        Payload::Toned { tone, text } => {
            let tone = if tone.sign() >= 0 {
                Tone::Criticism
            } else {
                Tone::Praising
            };
            Payload::Toned {
                tone,
                text: text.clone(),
            }
        }
        Payload::Binary { bit } => Payload::Binary {
            bit: 1 - bit.min(&1),
        },
        Payload::SelfReport { claimed, text } => Payload::SelfReport {
            claimed: claimed.flipped(),
            text: text.clone(),
        },
    }
}

/// Wraps a policy and inverts its first message sent at or after `from_round`.
pub struct FlipOnce {
    inner: Box<dyn AgentPolicy>,
    from_round: u32,
    done: bool,
}

impl FlipOnce {
    pub fn new(inner: Box<dyn AgentPolicy>, from_round: u32) -> Self {
        FlipOnce {
            inner,
            from_round,
            done: false,
        }
    }
}

impl AgentPolicy for FlipOnce {
    fn label(&self) -> String {
        format!("{}+flip_once", self.inner.label())
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<Decision, PolicyError> {
        self.inner.act(obs)
    }

    fn gossip(
        &mut self,
        obs: &Observation<'_>,
        protocol: &GossipProtocol,
    ) -> Result<Option<Payload>, PolicyError> {
        let msg = self.inner.gossip(obs, protocol)?;
        if self.done || obs.round < self.from_round {
            return Ok(msg);
        }
        Ok(msg.map(|m| {
            self.done = true;
            invert_payload(&m)
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipientCheck {
    pub profile: Profile,
    pub n_agents: usize,
    pub rounds: u32,
    pub seed: u64,
    pub benefit: f64,
    pub cost: f64,
    pub gamma: f64,
    pub recipient: AgentId,
    /// The recipient's first message at or after this round is inverted.
    pub from_round: u32,
    /// Witnesses that always lie, to drive agents into flagged states.
    #[serde(default)]
    pub liars: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipientReport {
    pub report: ValueReport,
    /// Both branches give the recipient the same continuation value.
    pub unchanged: bool,
    /// Whether the inversion actually changed a published message.
    pub flipped: bool,
}

/// Paired simulation with and without one inverted message from the
/// recipient. Values are the recipient's discounted return over its
/// participations from `from_round` on.
pub fn recipient_gossip_deviation_check(
    check: &RecipientCheck,
) -> Result<RecipientReport, EquilibriumError> {
    MatrixGame {
        kind: MatrixKind::Donation,
        benefit: check.benefit,
        cost: check.cost,
        gamma: check.gamma,
    }
    .validate()?;
    let schedule = donation_schedule(check.n_agents, check.rounds as usize, check.seed)
        .map_err(|e| EquilibriumError::Simulation(e.to_string()))?;
    let cfg = SimConfig {
        game: GameSpec::Donation(DonationParams {
            cost: check.cost,
            benefit: check.benefit,
            endowment: 0.0,
        }),
        horizon: HorizonKind::InfiniteTruncated,
        mode: MonitoringMode::GossipPublic,
        protocol: GossipProtocol::new(ProtocolVariant::HierarchicalTones),
    };
    let run = |flip: bool| -> Result<(f64, Vec<Payload>), EquilibriumError> {
        let mut agents: Vec<Box<dyn AgentPolicy>> = (0..check.n_agents)
            .map(|a| {
                let reporter = if check.liars.contains(&a) {
                    Reporter::Liar
                } else {
                    Reporter::Truthful
                };
                let base: Box<dyn AgentPolicy> =
                    Box::new(ScriptedPolicy::new(check.profile.action_rule(), reporter));
                if flip && a == check.recipient {
                    Box::new(FlipOnce::new(base, check.from_round)) as Box<dyn AgentPolicy>
                } else {
                    base
                }
            })
            .collect();
        let mut log = SimLog::default();
        let out = simulate(&cfg, &schedule, &mut agents, &mut log)
            .map_err(|e| EquilibriumError::Simulation(e.to_string()))?;
        let stream: Vec<(u32, f64)> = out
            .records
            .iter()
            .filter(|r| r.round >= check.from_round)
            .filter_map(|r| r.slot_of(check.recipient).map(|s| (r.round, r.rewards[s])))
            .collect();
        let sent = out
            .messages
            .iter()
            .filter(|m| m.witness == check.recipient)
            .map(|m| m.payload.clone())
            .collect();
        Ok((
            discounted_return_indexed(&stream, check.gamma, Indexing::Participation),
            sent,
        ))
    };
    let (truthful, sent_a) = run(false)?;
    let (inverted, sent_b) = run(true)?;
    let report = ValueReport::new(
        check.profile.as_str(),
        format!("recipient {} from round {}", check.recipient, check.from_round),
        truthful,
        inverted,
        None,
        "paired simulation on one schedule; the deviation inverts a single message from the recipient",
    );
    Ok(RecipientReport {
        unchanged: (truthful - inverted).abs() <= TOLERANCE,
        flipped: sent_a != sent_b,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn donation(gamma: f64) -> MatrixGame {
        MatrixGame {
            kind: MatrixKind::Donation,
            benefit: 5.0,
            cost: 1.0,
            gamma,
        }
    }

    #[test]
    fn grim_value_examples() {
        assert_eq!(grim_cooperation_value(0.2, 5.0, 1.0).unwrap(), 0.0);
        assert!((grim_cooperation_value(0.99, 5.0, 1.0).unwrap() - 198.4925).abs() < 5e-5);
        assert!((grim_cooperation_value(0.1, 5.0, 1.0).unwrap() + 0.5 / 0.99).abs() < 1e-12);
        assert_eq!(
            grim_cooperation_value(1.0, 5.0, 1.0),
            Err(EquilibriumError::UndiscountedLimit)
        );
    }

    #[test]
    fn spe_condition_examples() {
        assert!(spe_condition(0.99, 5.0, 1.0));
        assert!(!spe_condition(0.1, 5.0, 1.0));
        assert!(spe_condition(0.2, 5.0, 1.0));
    }

    #[test]
    fn grim_margin_is_closed_form_value() {
        let r = one_shot_deviation_check(
            Profile::Grim,
            &donation(0.99),
            EvalMode::ClosedForm,
            CheckScope::OwnDeviations,
        )
        .unwrap();
        let clean = &r[0];
        assert!(clean.spe_holds);
        assert!((clean.margin - grim_cooperation_value(0.99, 5.0, 1.0).unwrap()).abs() < 1e-9);
        let low = one_shot_deviation_check(
            Profile::Grim,
            &donation(0.1),
            EvalMode::ClosedForm,
            CheckScope::OwnDeviations,
        )
        .unwrap();
        assert!(!low[0].spe_holds);
    }

    #[test]
    fn literal_grim_fails_when_flagged() {
        let r = one_shot_deviation_check(
            Profile::GrimLiteral,
            &donation(0.99),
            EvalMode::ClosedForm,
            CheckScope::OwnDeviations,
        )
        .unwrap();
        let flagged = r.iter().find(|v| v.state.contains("own=flagged")).unwrap();
        assert!((flagged.margin + 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_defect_is_always_an_equilibrium() {
        for kind in [MatrixKind::Donation, MatrixKind::Ir] {
            for gamma in [0.1, 0.5, 0.99] {
                let g = MatrixGame {
                    kind,
                    benefit: 5.0,
                    cost: 1.0,
                    gamma,
                };
                for mode in [EvalMode::ClosedForm, EvalMode::Truncated { t_check: 200 }] {
                    let r = one_shot_deviation_check(
                        Profile::AllDefect,
                        &g,
                        mode,
                        CheckScope::AllStates,
                    )
                    .unwrap();
                    assert!(r
                        .iter()
                        .all(|v| v.spe_holds && (v.margin - 1.0).abs() < 1e-9));
                }
            }
        }
    }

    #[test]
    fn backward_induction_examples() {
        let s = backward_induction_finite(MatrixKind::Donation, 36, 5.0, 1.0, 0.99);
        assert!(s.all_defect());
        assert!(s.margins.iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(backward_induction_finite(MatrixKind::Donation, 1, 5.0, 1.0, 0.99).all_defect());
        assert!(backward_induction_finite(MatrixKind::Ir, 10, 5.0, 1.0, 0.99).all_defect());
    }

    #[test]
    fn private_dominance_examples() {
        assert_eq!(private_monitoring_dominance(0.99, 1.0).unwrap().gap, 1.0);
        assert_eq!(private_monitoring_dominance(0.5, 0.01).unwrap().gap, 0.01);
        assert!(private_monitoring_dominance(0.5, 0.0).is_err());
    }

    #[test]
    fn profile_names() {
        assert_eq!("grim".parse::<Profile>().unwrap(), Profile::Grim);
        assert!(matches!(
            "tit_for_tat".parse::<Profile>(),
            Err(EquilibriumError::Unabstractable(_))
        ));
    }

    fn recipient_check() -> RecipientCheck {
        RecipientCheck {
            profile: Profile::Grim,
            n_agents: 9,
            rounds: 36,
            seed: 11,
            benefit: 5.0,
            cost: 1.0,
            gamma: 0.99,
            recipient: 0,
            from_round: 36,
            liars: Vec::new(),
        }
    }

    #[test]
    fn last_round_flip_leaves_recipient_value_unchanged() {
        let schedule = donation_schedule(9, 36, 11).unwrap();
        let last = &schedule.rounds[35].pairs[0];
        let check = RecipientCheck {
            recipient: last.second,
            ..recipient_check()
        };
        let r = recipient_gossip_deviation_check(&check).unwrap();
        assert!(r.flipped);
        assert!(r.unchanged);
        assert!(r.report.spe_holds);
    }

    #[test]
    fn flagged_recipient_earns_nothing_either_way() {
        let schedule = donation_schedule(9, 36, 11).unwrap();
        // the recipient's first donation is witnessed by a liar
        let recipient = 0;
        let first = schedule
            .rounds
            .iter()
            .find(|r| r.pairs[0].first == recipient)
            .unwrap();
        let liar = first.pairs[0].second;
        let check = RecipientCheck {
            recipient,
            liars: vec![liar],
            from_round: first.round + 1,
            ..recipient_check()
        };
        let r = recipient_gossip_deviation_check(&check).unwrap();
        assert_eq!(r.report.value_cooperate_path, 0.0);
        assert_eq!(r.report.value_deviation, 0.0);
        assert!(r.unchanged);
    }
}
