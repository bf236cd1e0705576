//! Domain types shared across the simulator: actions, tones, gossip messages,
//! interaction records, the public message pool and agent-local memory.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Purchase, Quality};

/// Dense agent index. Human-readable names live in the run roster.
pub type AgentId = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("message for round {got} appended after round {last}")]
    RoundRegression { last: u32, got: u32 },
    #[error("witness and subject must differ for witness messages (agent {0})")]
    SelfGossip(AgentId),
    #[error("self-report must have witness == subject (witness {witness}, subject {subject})")]
    SelfReportMismatch { witness: AgentId, subject: AgentId },
    #[error("memory entry for round {got} appended after round {last}")]
    MemoryRegression { last: u32, got: u32 },
    #[error("invalid game parameters: {0}")]
    InvalidParams(String),
    #[error("unknown {kind} '{value}'")]
    Unknown { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryAction {
    Cooperate,
    Defect,
}

impl BinaryAction {
    pub fn as_str(self) -> &'static str {
        match self {
            BinaryAction::Cooperate => "cooperate",
            BinaryAction::Defect => "defect",
        }
    }

    pub fn is_cooperate(self) -> bool {
        self == BinaryAction::Cooperate
    }

    pub fn flipped(self) -> Self {
        match self {
            BinaryAction::Cooperate => BinaryAction::Defect,
            BinaryAction::Defect => BinaryAction::Cooperate,
        }
    }
}

impl fmt::Display for BinaryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BinaryAction {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cooperate" => Ok(BinaryAction::Cooperate),
            "defect" => Ok(BinaryAction::Defect),
            other => Err(ModelError::Unknown {
                kind: "action",
                value: other.to_string(),
            }),
        }
    }
}

/// The five gossip tones, listed from most to least approving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tone {
    Praising,
    Neutral,
    Mocking,
    Complaint,
    Criticism,
}

impl Tone {
    pub const ALL: [Tone; 5] = [
        Tone::Praising,
        Tone::Neutral,
        Tone::Mocking,
        Tone::Complaint,
        Tone::Criticism,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tone::Praising => "praising",
            Tone::Neutral => "neutral",
            Tone::Mocking => "mocking",
            Tone::Complaint => "complaint",
            Tone::Criticism => "criticism",
        }
    }

    /// Sign of the tone: +1 approving, 0 neutral, -1 for the three negative tones.
    pub fn sign(self) -> i32 {
        match self {
            Tone::Praising => 1,
            Tone::Neutral => 0,
            Tone::Mocking | Tone::Complaint | Tone::Criticism => -1,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Tone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tone {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tone::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ModelError::Unknown {
                kind: "tone",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Toned { tone: Tone, text: String },
    Binary { bit: u8 },
    SelfReport { claimed: BinaryAction, text: String },
}

impl Payload {
    /// Action claim carried by the payload. Tones are read by sign: praise
    /// claims cooperation, any negative tone claims defection, neutral claims
    /// nothing. Bits follow the 1 = cooperate convention.
    pub fn claim(&self) -> Option<BinaryAction> {
        match self {
            Payload::Toned { tone, .. } => match tone.sign() {
                1 => Some(BinaryAction::Cooperate),
                -1 => Some(BinaryAction::Defect),
                _ => None,
            },
            Payload::Binary { bit: 1 } => Some(BinaryAction::Cooperate),
            Payload::Binary { bit: 0 } => Some(BinaryAction::Defect),
            Payload::Binary { .. } => None,
            Payload::SelfReport { claimed, .. } => Some(*claimed),
        }
    }

    pub fn text(&self) -> Option<&str> {
        match self {
            Payload::Toned { text, .. } | Payload::SelfReport { text, .. } => Some(text),
            Payload::Binary { .. } => None,
        }
    }

    pub fn is_self_report(&self) -> bool {
        matches!(self, Payload::SelfReport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GossipMessage {
    pub round: u32,
    pub witness: AgentId,
    pub subject: AgentId,
    pub payload: Payload,
    /// Engine-recorded ground truth; never shown to agents.
    pub truthful_hint: Option<bool>,
}

impl GossipMessage {
    pub fn new(
        round: u32,
        witness: AgentId,
        subject: AgentId,
        payload: Payload,
    ) -> Result<Self, ModelError> {
        match (&payload, witness == subject) {
            (Payload::SelfReport { .. }, false) => {
                return Err(ModelError::SelfReportMismatch { witness, subject })
            }
            (Payload::Toned { .. } | Payload::Binary { .. }, true) => {
                return Err(ModelError::SelfGossip(witness))
            }
            _ => {}
        }
        Ok(GossipMessage {
            round,
            witness,
            subject,
            payload,
            truthful_hint: None,
        })
    }

    pub fn with_hint(mut self, hint: Option<bool>) -> Self {
        self.truthful_hint = hint;
        self
    }
}

/// Append-only, round-ordered message log visible to every agent under
/// gossip monitoring.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PublicPool {
    messages: Vec<GossipMessage>,
}

impl PublicPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, msg: GossipMessage) -> Result<usize, ModelError> {
        if let Some(last) = self.messages.last() {
            if msg.round < last.round {
                return Err(ModelError::RoundRegression {
                    last: last.round,
                    got: msg.round,
                });
            }
        }
        self.messages.push(msg);
        Ok(self.messages.len() - 1)
    }

    pub fn messages(&self) -> &[GossipMessage] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last_round(&self) -> Option<u32> {
        self.messages.last().map(|m| m.round)
    }

    pub fn about(&self, subject: AgentId) -> impl Iterator<Item = &GossipMessage> {
        self.messages.iter().filter(move |m| m.subject == subject)
    }

    pub fn is_prefix_of(&self, later: &PublicPool) -> bool {
        later.messages.len() >= self.messages.len()
            && later.messages[..self.messages.len()] == self.messages[..]
    }
}

/// Role of a participant in one interaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Donor,
    Recipient,
    Player,
    Investor,
    Responder,
    Seller,
    Buyer,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Donor => "donor",
            Role::Recipient => "recipient",
            Role::Player => "player",
            Role::Investor => "investor",
            Role::Responder => "responder",
            Role::Seller => "seller",
            Role::Buyer => "buyer",
        }
    }
}

/// What was played in one interaction. Slot 0 is the donor, first player,
/// investor or seller; slot 1 the recipient, second player, responder or buyer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum RoundActions {
    Donation {
        action: BinaryAction,
    },
    Simultaneous {
        actions: [BinaryAction; 2],
    },
    Investment {
        invested: f64,
        returned: f64,
    },
    Market {
        quality: Quality,
        purchase: Purchase,
    },
}

impl RoundActions {
    pub fn roles(&self) -> [Role; 2] {
        match self {
            RoundActions::Donation { .. } => [Role::Donor, Role::Recipient],
            RoundActions::Simultaneous { .. } => [Role::Player, Role::Player],
            RoundActions::Investment { .. } => [Role::Investor, Role::Responder],
            RoundActions::Market { .. } => [Role::Seller, Role::Buyer],
        }
    }

    /// Binary decision taken by the participant in `slot`, if that slot acts
    /// in a binary-action game.
    pub fn binary_decision(&self, slot: usize) -> Option<BinaryAction> {
        match (self, slot) {
            (RoundActions::Donation { action }, 0) => Some(*action),
            (RoundActions::Simultaneous { actions }, s) if s < 2 => Some(actions[s]),
            _ => None,
        }
    }

    /// Ground-truth reading of the slot's behaviour as cooperate/defect, used
    /// to label gossip. Market sellers read H as cooperation; investment
    /// actions have no binary reading.
    pub fn cooperation_reading(&self, slot: usize) -> Option<BinaryAction> {
        match (self, slot) {
            (RoundActions::Market { quality, .. }, 0) => Some(match quality {
                Quality::High => BinaryAction::Cooperate,
                Quality::Low => BinaryAction::Defect,
            }),
            _ => self.binary_decision(slot),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RoundActions::Donation { action } => format!("donor chose {action}"),
            RoundActions::Simultaneous { actions } => {
                format!("players chose {} / {}", actions[0], actions[1])
            }
            RoundActions::Investment { invested, returned } => {
                format!("investor invested {invested}, responder returned {returned}")
            }
            RoundActions::Market { quality, purchase } => {
                format!(
                    "seller chose {}, buyer chose {}",
                    quality.as_str(),
                    purchase.as_str()
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub round: u32,
    pub participants: [AgentId; 2],
    pub actions: RoundActions,
    pub rewards: [f64; 2],
    pub resources_before: [f64; 2],
    pub resources_after: [f64; 2],
}

impl InteractionRecord {
    pub fn slot_of(&self, agent: AgentId) -> Option<usize> {
        self.participants.iter().position(|&p| p == agent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub round: u32,
    pub role: Role,
    pub partner: AgentId,
    /// Short text digest of what the owner observed before acting.
    pub observation: String,
    pub actions: RoundActions,
    /// Rendered gossip produced in this interaction, if any.
    pub message: Option<String>,
    pub reward: f64,
    pub reflection: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentMemory {
    pub owner: AgentId,
    entries: Vec<MemoryEntry>,
}

impl AgentMemory {
    pub fn new(owner: AgentId) -> Self {
        AgentMemory {
            owner,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, entry: MemoryEntry) -> Result<(), ModelError> {
        if let Some(last) = self.entries.last() {
            if entry.round < last.round {
                return Err(ModelError::MemoryRegression {
                    last: last.round,
                    got: entry.round,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonKind {
    Finite,
    /// Agents are told the game never ends; the engine stops at the truncation length.
    InfiniteTruncated,
}

impl HorizonKind {
    pub fn label(self) -> &'static str {
        match self {
            HorizonKind::Finite => "finite",
            HorizonKind::InfiniteTruncated => "infinite",
        }
    }
}

/// Parameters of the repeated donation game and its two-sided variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub n_agents: usize,
    pub horizon: HorizonKind,
    pub horizon_length: u32,
    pub discount: f64,
    pub endowment: f64,
    pub cost: f64,
    pub benefit: f64,
}

impl GameParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidParams(m.to_string()));
        if self.n_agents < 2 {
            return bad("at least two agents are required");
        }
        if self.horizon_length < 1 {
            return bad("horizon length must be at least 1");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount factor must lie in (0, 1]");
        }
        if !(self.endowment >= 0.0) {
            return bad("endowment must be nonnegative");
        }
        if !(self.cost > 0.0) {
            return bad("cost must be positive");
        }
        if !(self.benefit > self.cost) {
            return bad("benefit must exceed cost");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indexing {
    /// k-th participation of the agent is discounted by gamma^(k-1).
    #[default]
    Participation,
    /// Reward earned in global round t is discounted by gamma^(t-1).
    Global,
}

/// Discounted sum over an agent's successive participations.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut weight = 1.0;
    let mut total = 0.0;
    for r in rewards {
        total += weight * r;
        weight *= gamma;
    }
    total
}

/// Discounted sum of `(round, reward)` pairs under the chosen indexing.
pub fn discounted_return_indexed(rewards: &[(u32, f64)], gamma: f64, indexing: Indexing) -> f64 {
    match indexing {
        Indexing::Participation => {
            let plain: Vec<f64> = rewards.iter().map(|&(_, r)| r).collect();
            discounted_return(&plain, gamma)
        }
        Indexing::Global => rewards
            .iter()
            .map(|&(t, r)| gamma.powi(t.saturating_sub(1) as i32) * r)
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitoringMode {
    /// Only the two participants see the action.
    Private,
    /// Every agent sees the full action history.
    PerfectPublic,
    /// Participants see the action; everyone sees the witness's message.
    GossipPublic,
}

/// What an agent saw of its partner before deciding or gossiping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observed {
    /// Partner's binary action (donation witness, two-sided game).
    Action { action: BinaryAction },
    /// Investment the responder is about to answer, and its multiplied value.
    Investment { invested: f64, benefit: f64 },
    /// Both sides of a completed investment round.
    InvestmentRound { invested: f64, returned: f64 },
    /// Both sides of a completed market round.
    MarketRound {
        quality: Quality,
        purchase: Purchase,
    },
}

/// Per-encounter context supplied by the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encounter {
    pub round: u32,
    pub role: Role,
    pub partner: AgentId,
    pub observed: Option<Observed>,
}

/// Read-only view of the world state at one point in the round loop.
#[derive(Debug, Clone, Copy)]
pub struct WorldView<'a> {
    pub resources: &'a [f64],
    pub records: &'a [InteractionRecord],
    pub memories: &'a [AgentMemory],
    /// Messages visible at this point; the engine passes the round-start prefix.
    pub messages: &'a [GossipMessage],
}

#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub agent: AgentId,
    pub round: u32,
    pub role: Role,
    pub partner: AgentId,
    pub own_resources: f64,
    pub partner_resources: f64,
    pub memory: &'a [MemoryEntry],
    pub messages: &'a [GossipMessage],
    pub public_records: &'a [InteractionRecord],
    pub observed: Option<Observed>,
    pub mode: MonitoringMode,
}

/// Assemble what `agent` may see under the monitoring structure.
pub fn visible_observation<'a>(
    agent: AgentId,
    world: &WorldView<'a>,
    mode: MonitoringMode,
    encounter: Encounter,
) -> Observation<'a> {
    let memory = world
        .memories
        .get(agent)
        .map(|m| m.entries())
        .unwrap_or(&[]);
    let (messages, public_records): (&[GossipMessage], &[InteractionRecord]) = match mode {
        MonitoringMode::Private => (&[], &[]),
        MonitoringMode::PerfectPublic => (&[], world.records),
        MonitoringMode::GossipPublic => (world.messages, &[]),
    };
    Observation {
        agent,
        round: encounter.round,
        role: encounter.role,
        partner: encounter.partner,
        own_resources: world.resources[agent],
        partner_resources: world.resources[encounter.partner],
        memory,
        messages,
        public_records,
        observed: encounter.observed,
        mode,
    }
}
