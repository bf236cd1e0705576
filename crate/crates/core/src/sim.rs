//! The round loop.
//!
//! Per dyad the phases run in a fixed order: the actor observes and acts
//! (and may reflect), the witness observes and drafts gossip (and may
//! reflect), payoffs are stepped, drafts are published and both memories are
//! updated. Every pair in round `t` observes the pool and the public record
//! as they stood at the start of the round, so simultaneous dyads never see
//! each other's same-round outcomes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    donation_payoff, investment_step, ir_payoff, market_payoff, DonationParams, EnvError,
    InvestmentParams, IrParams, MarketParams, ResourceLedger,
};
use crate::gossip::{honesty_label, validate_and_publish, GossipError, GossipProtocol};
use crate::llm::TranscriptEntry;
use crate::model::{
    visible_observation, AgentId, AgentMemory, BinaryAction, Encounter, GossipMessage, HorizonKind,
    Indexing, InteractionRecord, MemoryEntry, ModelError, MonitoringMode, Observation, Observed,
    Payload, PublicPool, Role, RoundActions, WorldView,
};
use crate::scheduler::{Pairing, Schedule};
use crate::strategy::{AgentPolicy, Decision, PolicyError};

/// Game and its environment parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", content = "params", rename_all = "snake_case")]
pub enum GameSpec {
    Donation(DonationParams),
    Ir(IrParams),
    Investment(InvestmentParams),
    Market(MarketParams),
}

impl GameSpec {
    pub fn name(&self) -> &'static str {
        match self {
            GameSpec::Donation(_) => "donation",
            GameSpec::Ir(_) => "ir",
            GameSpec::Investment(_) => "investment",
            GameSpec::Market(_) => "market",
        }
    }

    pub fn endowment(&self) -> f64 {
        match self {
            GameSpec::Donation(p) | GameSpec::Ir(p) => p.endowment,
            GameSpec::Investment(p) => p.endowment,
            GameSpec::Market(p) => p.endowment,
        }
    }

    pub fn roles(&self) -> [Role; 2] {
        match self {
            GameSpec::Donation(_) => [Role::Donor, Role::Recipient],
            GameSpec::Ir(_) => [Role::Player, Role::Player],
            GameSpec::Investment(_) => [Role::Investor, Role::Responder],
            GameSpec::Market(_) => [Role::Seller, Role::Buyer],
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            GameSpec::Donation(p) | GameSpec::Ir(p) => p.validate(),
            GameSpec::Investment(p) => p.validate(),
            GameSpec::Market(p) => {
                if p.endowment >= 0.0 {
                    Ok(())
                } else {
                    Err(EnvError::InvalidParams(
                        "endowment must be nonnegative".into(),
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub game: GameSpec,
    pub horizon: HorizonKind,
    pub mode: MonitoringMode,
    pub protocol: GossipProtocol,
}

/// One line of the event log, before sequencing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    /// The seed lives on the enclosing log line.
    RunStart {
        experiment: String,
        game: GameSpec,
        n_agents: usize,
        rounds: u32,
        gamma: f64,
        indexing: Indexing,
        names: Vec<String>,
        policies: Vec<String>,
    },
    Observe {
        round: u32,
        agent: AgentId,
        role: Role,
        partner: AgentId,
        visible_messages: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        observed: Option<Observed>,
    },
    Act {
        round: u32,
        agent: AgentId,
        role: Role,
        decision: Decision,
    },
    Reflect {
        round: u32,
        agent: AgentId,
        text: String,
    },
    Gossip {
        round: u32,
        witness: AgentId,
        subject: AgentId,
        payload: Option<Payload>,
    },
    Step {
        record: InteractionRecord,
    },
    Publish {
        index: usize,
        message: GossipMessage,
    },
    MemoryUpdate {
        round: u32,
        agent: AgentId,
        entries: usize,
    },
    Idle {
        round: u32,
        agents: Vec<AgentId>,
    },
    RunEnd {
        final_resources: Vec<f64>,
    },
    Abort {
        round: u32,
        reason: String,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("round {round}, agent {agent}: {source}")]
    Policy {
        round: u32,
        agent: AgentId,
        #[source]
        source: PolicyError,
    },
    #[error("round {round}, agent {agent}: expected a {expected} decision, got {got:?}")]
    BadDecision {
        round: u32,
        agent: AgentId,
        expected: &'static str,
        got: Decision,
    },
    #[error("round {round}: {source}")]
    Env {
        round: u32,
        #[source]
        source: EnvError,
    },
    #[error("round {round}: {source}")]
    Gossip {
        round: u32,
        #[source]
        source: GossipError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("schedule covers {schedule} agents but {roster} policies were supplied")]
    RosterMismatch { schedule: usize, roster: usize },
}

impl SimError {
    pub fn round(&self) -> u32 {
        match self {
            SimError::Policy { round, .. }
            | SimError::BadDecision { round, .. }
            | SimError::Env { round, .. }
            | SimError::Gossip { round, .. } => *round,
            _ => 0,
        }
    }
}

/// Everything written while a run progresses; kept on abort.
#[derive(Debug, Default)]
pub struct SimLog {
    pub events: Vec<Event>,
    pub transcripts: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub records: Vec<InteractionRecord>,
    pub messages: Vec<GossipMessage>,
    pub memories: Vec<AgentMemory>,
    pub final_resources: Vec<f64>,
}

/// Text form of a payload as stored in memory.
pub fn payload_text(p: &Payload) -> String {
    match p {
        Payload::Toned { tone, text } => format!("[{}] {text}", tone.as_str()),
        Payload::Binary { bit } => format!("signal {bit}"),
        Payload::SelfReport { text, .. } => format!("[self report] {text}"),
    }
}

struct World {
    ledger: ResourceLedger,
    records: Vec<InteractionRecord>,
    memories: Vec<AgentMemory>,
    pool: PublicPool,
    /// Round-start prefix lengths of `pool` and `records`.
    visible: (usize, usize),
}

impl World {
    fn view(&self) -> WorldView<'_> {
        WorldView {
            resources: self.ledger.levels(),
            records: &self.records[..self.visible.1],
            memories: &self.memories,
            messages: &self.pool.messages()[..self.visible.0],
        }
    }
}

struct Dyad<'c> {
    cfg: &'c SimConfig,
    round: u32,
    pair: [AgentId; 2],
}

impl Dyad<'_> {
    fn encounter(&self, slot: usize, observed: Option<Observed>) -> Encounter {
        Encounter {
            round: self.round,
            role: self.cfg.game.roles()[slot],
            partner: self.pair[1 - slot],
            observed,
        }
    }

    fn observe<'w>(
        &self,
        world: &'w World,
        slot: usize,
        observed: Option<Observed>,
        log: &mut SimLog,
    ) -> Observation<'w> {
        let obs = visible_observation(
            self.pair[slot],
            &world.view(),
            self.cfg.mode,
            self.encounter(slot, observed),
        );
        log.events.push(Event::Observe {
            round: self.round,
            agent: obs.agent,
            role: obs.role,
            partner: obs.partner,
            visible_messages: obs.messages.len(),
            observed,
        });
        obs
    }

    fn policy_err(&self, slot: usize) -> impl FnOnce(PolicyError) -> SimError + '_ {
        move |source| SimError::Policy {
            round: self.round,
            agent: self.pair[slot],
            source,
        }
    }
}

fn take_reflection(
    policy: &mut dyn AgentPolicy,
    obs: &Observation<'_>,
    notes: &mut Vec<String>,
    log: &mut SimLog,
) {
    if let Some(text) = policy.reflect(obs) {
        log.events.push(Event::Reflect {
            round: obs.round,
            agent: obs.agent,
            text: text.clone(),
        });
        notes.push(text);
    }
}

fn bad(round: u32, agent: AgentId, expected: &'static str, got: Decision) -> SimError {
    SimError::BadDecision {
        round,
        agent,
        expected,
        got,
    }
}

/// Run the whole schedule. Events and transcripts accumulate in `log` as the
/// run progresses, so a failed run leaves its partial history behind.
pub fn simulate(
    cfg: &SimConfig,
    schedule: &Schedule,
    agents: &mut [Box<dyn AgentPolicy>],
    log: &mut SimLog,
) -> Result<SimOutcome, SimError> {
    if schedule.n_agents != agents.len() {
        return Err(SimError::RosterMismatch {
            schedule: schedule.n_agents,
            roster: agents.len(),
        });
    }
    let n = agents.len();
    let mut world = World {
        ledger: ResourceLedger::new(n, cfg.game.endowment()),
        records: Vec::new(),
        memories: (0..n).map(AgentMemory::new).collect(),
        pool: PublicPool::new(),
        visible: (0, 0),
    };
    for scheduled in &schedule.rounds {
        world.visible = (world.pool.len(), world.records.len());
        for pairing in &scheduled.pairs {
            if let Err(e) = play_dyad(cfg, scheduled.round, *pairing, agents, &mut world, log) {
                // keep the prompts that led to the failure
                for agent in [pairing.first, pairing.second] {
                    log.transcripts.extend(agents[agent].drain_transcript());
                }
                return Err(e);
            }
        }
        if !scheduled.idle.is_empty() {
            log.events.push(Event::Idle {
                round: scheduled.round,
                agents: scheduled.idle.clone(),
            });
        }
    }
    let final_resources = world.ledger.levels().to_vec();
    log.events.push(Event::RunEnd {
        final_resources: final_resources.clone(),
    });
    Ok(SimOutcome {
        records: world.records,
        messages: world.pool.messages().to_vec(),
        memories: world.memories,
        final_resources,
    })
}

fn digest(obs: &Observation<'_>) -> String {
    let mut s = format!(
        "{} with agent {}; own resources {}, partner resources {}; {} visible messages",
        obs.role.as_str(),
        obs.partner,
        obs.own_resources,
        obs.partner_resources,
        obs.messages.len()
    );
    if let Some(o) = obs.observed {
        s.push_str(&format!(
            "; observed {}",
            serde_json::to_string(&o).unwrap_or_default()
        ));
    }
    s
}

fn play_dyad(
    cfg: &SimConfig,
    round: u32,
    pairing: Pairing,
    agents: &mut [Box<dyn AgentPolicy>],
    world: &mut World,
    log: &mut SimLog,
) -> Result<(), SimError> {
    let d = Dyad {
        cfg,
        round,
        pair: [pairing.first, pairing.second],
    };
    let [a0, a1] = d.pair;
    let mut notes: [Vec<String>; 2] = [Vec::new(), Vec::new()];
    let mut digests = [String::new(), String::new()];
    let mut drafts: Vec<GossipMessage> = Vec::new();

    // Act phase.
    let actions = match cfg.game {
        GameSpec::Donation(_) => {
            let obs = d.observe(world, 0, None, log);
            digests[0] = digest(&obs);
            let decision = agents[a0].act(&obs).map_err(d.policy_err(0))?;
            log.events.push(Event::Act {
                round,
                agent: a0,
                role: Role::Donor,
                decision,
            });
            let Decision::Binary(action) = decision else {
                return Err(bad(round, a0, "binary", decision));
            };
            take_reflection(agents[a0].as_mut(), &obs, &mut notes[0], log);
            if cfg.protocol.variant.allows_self_report() {
                let report = agents[a0]
                    .self_report(&obs, action)
                    .map_err(d.policy_err(0))?;
                log.events.push(Event::Gossip {
                    round,
                    witness: a0,
                    subject: a0,
                    payload: report.clone(),
                });
                if let Some(p) = report {
                    let hint = p.claim().map(|c| c == action);
                    drafts.push(GossipMessage::new(round, a0, a0, p)?.with_hint(hint));
                }
            }
            RoundActions::Donation { action }
        }
        GameSpec::Ir(_) | GameSpec::Market(_) => {
            // Simultaneous moves against the same snapshot.
            let mut decisions = Vec::with_capacity(2);
            for slot in 0..2 {
                let obs = d.observe(world, slot, None, log);
                digests[slot] = digest(&obs);
                let decision = agents[d.pair[slot]].act(&obs).map_err(d.policy_err(slot))?;
                log.events.push(Event::Act {
                    round,
                    agent: d.pair[slot],
                    role: obs.role,
                    decision,
                });
                take_reflection(agents[d.pair[slot]].as_mut(), &obs, &mut notes[slot], log);
                decisions.push(decision);
            }
            match (cfg.game, decisions[0], decisions[1]) {
                (GameSpec::Ir(_), Decision::Binary(x), Decision::Binary(y)) => {
                    RoundActions::Simultaneous { actions: [x, y] }
                }
                (GameSpec::Market(_), Decision::Quality(quality), Decision::Purchase(purchase)) => {
                    RoundActions::Market { quality, purchase }
                }
                (GameSpec::Ir(_), x, y) => {
                    let (agent, got) = if matches!(x, Decision::Binary(_)) {
                        (a1, y)
                    } else {
                        (a0, x)
                    };
                    return Err(bad(round, agent, "binary", got));
                }
                (_, Decision::Quality(_), got) => return Err(bad(round, a1, "purchase", got)),
                (_, got, _) => return Err(bad(round, a0, "quality", got)),
            }
        }
        GameSpec::Investment(p) => {
            let obs = d.observe(world, 0, None, log);
            digests[0] = digest(&obs);
            let decision = agents[a0].act(&obs).map_err(d.policy_err(0))?;
            log.events.push(Event::Act {
                round,
                agent: a0,
                role: Role::Investor,
                decision,
            });
            let Decision::Invest(invested) = decision else {
                return Err(bad(round, a0, "invest", decision));
            };
            take_reflection(agents[a0].as_mut(), &obs, &mut notes[0], log);
            let seen = Observed::Investment {
                invested,
                benefit: p.multiplier * invested,
            };
            let obs = d.observe(world, 1, Some(seen), log);
            digests[1] = digest(&obs);
            let decision = agents[a1].act(&obs).map_err(d.policy_err(1))?;
            log.events.push(Event::Act {
                round,
                agent: a1,
                role: Role::Responder,
                decision,
            });
            let Decision::Return(returned) = decision else {
                return Err(bad(round, a1, "return", decision));
            };
            take_reflection(agents[a1].as_mut(), &obs, &mut notes[1], log);
            RoundActions::Investment { invested, returned }
        }
    };

    // Witness phase: who reports on whom, and what each witness saw.
    let witnesses: Vec<(usize, Observed)> = match actions {
        RoundActions::Donation { action } => vec![(1, Observed::Action { action })],
        RoundActions::Simultaneous { actions: [x, y] } => {
            vec![
                (0, Observed::Action { action: y }),
                (1, Observed::Action { action: x }),
            ]
        }
        RoundActions::Investment { invested, returned } => {
            let seen = Observed::InvestmentRound { invested, returned };
            vec![(0, seen), (1, seen)]
        }
        RoundActions::Market { quality, purchase } => {
            vec![(1, Observed::MarketRound { quality, purchase })]
        }
    };
    if cfg.protocol.variant.is_enabled() {
        for (slot, seen) in witnesses {
            let obs = d.observe(world, slot, Some(seen), log);
            if digests[slot].is_empty() {
                digests[slot] = digest(&obs);
            }
            let (witness, subject) = (d.pair[slot], d.pair[1 - slot]);
            let payload = agents[witness]
                .gossip(&obs, &cfg.protocol)
                .map_err(d.policy_err(slot))?;
            log.events.push(Event::Gossip {
                round,
                witness,
                subject,
                payload: payload.clone(),
            });
            take_reflection(agents[witness].as_mut(), &obs, &mut notes[slot], log);
            if let Some(p) = payload {
                let msg = GossipMessage::new(round, witness, subject, p)?;
                let hint = actions
                    .cooperation_reading(1 - slot)
                    .and_then(|truth| honesty_label(&msg, truth).ok());
                drafts.push(msg.with_hint(hint));
            }
        }
    }

    // Step.
    let before = [world.ledger.get(a0), world.ledger.get(a1)];
    let (r0, r1) = match (cfg.game, actions) {
        (GameSpec::Donation(p), RoundActions::Donation { action }) => donation_payoff(action, &p),
        (GameSpec::Ir(p), RoundActions::Simultaneous { actions: [x, y] }) => ir_payoff(x, y, &p),
        (GameSpec::Investment(p), RoundActions::Investment { invested, returned }) => {
            investment_step(invested, returned, before[0], &p)
                .map_err(|source| SimError::Env { round, source })?
        }
        (GameSpec::Market(p), RoundActions::Market { quality, purchase }) => {
            market_payoff(quality, purchase, &p)
        }
        _ => unreachable!("actions are built from the game"),
    };
    world.ledger.credit(a0, r0);
    world.ledger.credit(a1, r1);
    let record = InteractionRecord {
        round,
        participants: d.pair,
        actions,
        rewards: [r0, r1],
        resources_before: before,
        resources_after: [world.ledger.get(a0), world.ledger.get(a1)],
    };
    log.events.push(Event::Step {
        record: record.clone(),
    });
    world.records.push(record);

    // Publish.
    let mut about = [None::<String>, None::<String>];
    for msg in drafts {
        let subject_slot = usize::from(msg.subject == a1);
        let text = payload_text(&msg.payload);
        let index = validate_and_publish(&mut world.pool, msg, &cfg.protocol)
            .map_err(|source| SimError::Gossip { round, source })?;
        let published = world.pool.messages()[index].clone();
        if published.witness != published.subject {
            about[subject_slot] = Some(text);
        }
        log.events.push(Event::Publish {
            index,
            message: published,
        });
    }

    // Memory update.
    for slot in 0..2 {
        let agent = d.pair[slot];
        world.memories[agent].push(MemoryEntry {
            round,
            role: cfg.game.roles()[slot],
            partner: d.pair[1 - slot],
            observation: std::mem::take(&mut digests[slot]),
            actions,
            message: about[slot].take(),
            reward: [r0, r1][slot],
            reflection: notes[slot].join("\n"),
        })?;
        log.events.push(Event::MemoryUpdate {
            round,
            agent,
            entries: world.memories[agent].entries().len(),
        });
    }
    for &agent in &d.pair {
        log.transcripts.extend(agents[agent].drain_transcript());
    }
    Ok(())
}

/// Binary actions taken by `agent` in its acting role, in order.
pub fn acting_decisions(records: &[InteractionRecord], agent: AgentId) -> Vec<BinaryAction> {
    records
        .iter()
        .filter_map(|r| r.slot_of(agent).and_then(|s| r.actions.binary_decision(s)))
        .collect()
}
