//! Agent behaviour contract and the scripted policy roster.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Purchase, Quality};
use crate::gossip::{derive_reputation, reputation_from_records, GossipProtocol, ReputationView};
use crate::llm::{LlmError, TranscriptEntry};
use crate::model::{
    AgentId, BinaryAction, MonitoringMode, Observation, Observed, Payload, Role, Tone,
};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy '{policy}' cannot act as {role}")]
    Unsupported { policy: String, role: &'static str },
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// An action for the role the agent holds this round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Decision {
    Binary(BinaryAction),
    Invest(f64),
    Return(f64),
    Quality(Quality),
    Purchase(Purchase),
}

/// Action policy plus gossip policy of one agent.
pub trait AgentPolicy {
    fn label(&self) -> String;

    fn act(&mut self, obs: &Observation<'_>) -> Result<Decision, PolicyError>;

    /// Message about the partner, given what the agent saw (`obs.observed`).
    /// `None` means the agent stays silent.
    fn gossip(
        &mut self,
        obs: &Observation<'_>,
        protocol: &GossipProtocol,
    ) -> Result<Option<Payload>, PolicyError>;

    /// Report about the agent's own action, when the protocol allows one.
    fn self_report(
        &mut self,
        _obs: &Observation<'_>,
        _own: BinaryAction,
    ) -> Result<Option<Payload>, PolicyError> {
        Ok(None)
    }

    /// Reflection on the step just taken; stored in memory when present.
    fn reflect(&mut self, _obs: &Observation<'_>) -> Option<String> {
        None
    }

    fn drain_transcript(&mut self) -> Vec<TranscriptEntry> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reporter {
    Silent,
    #[default]
    Truthful,
    Liar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelfReporter {
    #[default]
    None,
    Truthful,
    Liar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ActionRule {
    AlwaysCooperate,
    AlwaysDefect,
    /// Cooperate unless the partner (or, with `global`, anyone) has been
    /// reported as a defector. With `defect_when_flagged` the agent also
    /// defects once it is flagged itself.
    Grim {
        global: bool,
        defect_when_flagged: bool,
    },
    /// Cooperate iff the partner's claimed-action image is at least `threshold`.
    ImageScorer {
        threshold: i64,
    },
    /// Invest `alpha` of own resources; return `beta` of the received benefit.
    Trust {
        alpha: f64,
        beta: f64,
    },
    Seller {
        quality: Quality,
    },
    /// Buy customized from clean sellers, refuse flagged ones.
    GrimBuyer,
}

/// How reputations are read under each monitoring mode.
pub fn partner_view(obs: &Observation<'_>, subject: AgentId) -> ReputationView {
    match obs.mode {
        MonitoringMode::GossipPublic => derive_reputation(obs.messages, subject),
        MonitoringMode::PerfectPublic => reputation_from_records(obs.public_records, subject),
        MonitoringMode::Private => derive_reputation(&[], subject),
    }
}

fn anyone_flagged(obs: &Observation<'_>) -> bool {
    match obs.mode {
        MonitoringMode::GossipPublic => obs
            .messages
            .iter()
            .any(|m| derive_reputation(std::slice::from_ref(m), m.subject).ever_reported_defect),
        MonitoringMode::PerfectPublic => obs.public_records.iter().any(|r| {
            (0..2).any(|s| r.actions.cooperation_reading(s) == Some(BinaryAction::Defect))
        }),
        MonitoringMode::Private => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPolicy {
    pub name: String,
    pub rule: ActionRule,
    pub reporter: Reporter,
    pub self_reporter: SelfReporter,
    roster: Vec<String>,
}

impl ScriptedPolicy {
    pub fn new(rule: ActionRule, reporter: Reporter) -> Self {
        ScriptedPolicy {
            name: String::new(),
            rule,
            reporter,
            self_reporter: SelfReporter::None,
            roster: Vec::new(),
        }
    }

    pub fn with_self_reporter(mut self, s: SelfReporter) -> Self {
        self.self_reporter = s;
        self
    }

    /// Names used to fill the message text; ids are used when absent.
    pub fn with_roster(mut self, roster: Vec<String>) -> Self {
        self.roster = roster;
        self
    }

    pub fn always_cooperate() -> Self {
        Self::new(ActionRule::AlwaysCooperate, Reporter::Truthful)
    }

    pub fn always_defect_silent() -> Self {
        Self::new(ActionRule::AlwaysDefect, Reporter::Silent)
    }

    pub fn grim_trigger_public() -> Self {
        Self::new(
            ActionRule::Grim {
                global: false,
                defect_when_flagged: false,
            },
            Reporter::Truthful,
        )
    }

    pub fn image_scorer(threshold: i64) -> Self {
        Self::new(ActionRule::ImageScorer { threshold }, Reporter::Truthful)
    }

    fn name_of(&self, id: AgentId) -> String {
        self.roster
            .get(id)
            .cloned()
            .unwrap_or_else(|| format!("agent {id}"))
    }

    fn unsupported(&self, role: Role) -> PolicyError {
        PolicyError::Unsupported {
            policy: self.label(),
            role: role.as_str(),
        }
    }

    fn binary_choice(&self, obs: &Observation<'_>) -> Option<BinaryAction> {
        let coop = |b: bool| {
            if b {
                BinaryAction::Cooperate
            } else {
                BinaryAction::Defect
            }
        };
        Some(match self.rule {
            ActionRule::AlwaysCooperate => BinaryAction::Cooperate,
            ActionRule::AlwaysDefect => BinaryAction::Defect,
            ActionRule::Grim {
                global,
                defect_when_flagged,
            } => {
                if defect_when_flagged && partner_view(obs, obs.agent).ever_reported_defect {
                    BinaryAction::Defect
                } else if global {
                    coop(!anyone_flagged(obs))
                } else {
                    coop(!partner_view(obs, obs.partner).ever_reported_defect)
                }
            }
            ActionRule::ImageScorer { threshold } => {
                coop(partner_view(obs, obs.partner).image() >= threshold)
            }
            _ => return None,
        })
    }

    /// Cooperation reading of the partner's behaviour as seen by the witness.
    fn partner_reading(&self, obs: &Observation<'_>) -> Option<BinaryAction> {
        let coop = |b: bool| {
            if b {
                BinaryAction::Cooperate
            } else {
                BinaryAction::Defect
            }
        };
        match obs.observed? {
            Observed::Action { action } => Some(action),
            Observed::MarketRound { quality, .. } => Some(coop(quality == Quality::High)),
            Observed::InvestmentRound { invested, returned } => match obs.role {
                // the investor judges the return, the responder judges the investment
                Role::Investor => Some(coop(returned + 1e-9 >= invested)),
                Role::Responder => Some(coop(invested > 0.0)),
                _ => None,
            },
            Observed::Investment { .. } => None,
        }
    }
}

/// Rendered text of a scripted message about `subject`'s `claimed` action.
pub fn scripted_text(subject: &str, claimed: BinaryAction) -> String {
    match claimed {
        BinaryAction::Cooperate => format!("{subject} cooperated this round."),
        BinaryAction::Defect => format!("{subject} defected this round."),
    }
}

impl AgentPolicy for ScriptedPolicy {
    fn label(&self) -> String {
        let rule = match self.rule {
            ActionRule::AlwaysCooperate => "always_cooperate".to_string(),
            ActionRule::AlwaysDefect => "always_defect".to_string(),
            ActionRule::Grim { global: true, .. } => "grim_global".to_string(),
            ActionRule::Grim { .. } => "grim".to_string(),
            ActionRule::ImageScorer { threshold } => format!("image_scorer(k={threshold})"),
            ActionRule::Trust { alpha, beta } => format!("trust(alpha={alpha},beta={beta})"),
            ActionRule::Seller { quality } => format!("seller({})", quality.as_str()),
            ActionRule::GrimBuyer => "grim_buyer".to_string(),
        };
        let reporter = match self.reporter {
            Reporter::Silent => "silent",
            Reporter::Truthful => "truthful",
            Reporter::Liar => "liar",
        };
        format!("{rule}+{reporter}")
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<Decision, PolicyError> {
        match obs.role {
            Role::Donor | Role::Player => self
                .binary_choice(obs)
                .map(Decision::Binary)
                .ok_or_else(|| self.unsupported(obs.role)),
            Role::Investor => match self.rule {
                ActionRule::Trust { alpha, .. } => {
                    Ok(Decision::Invest(alpha * obs.own_resources.max(0.0)))
                }
                ActionRule::AlwaysDefect => Ok(Decision::Invest(0.0)),
                _ => Err(self.unsupported(obs.role)),
            },
            Role::Responder => {
                let benefit = match obs.observed {
                    Some(Observed::Investment { benefit, .. }) => benefit,
                    _ => 0.0,
                };
                match self.rule {
                    ActionRule::Trust { beta, .. } => Ok(Decision::Return(beta * benefit)),
                    ActionRule::AlwaysDefect => Ok(Decision::Return(0.0)),
                    _ => Err(self.unsupported(obs.role)),
                }
            }
            Role::Seller => match self.rule {
                ActionRule::Seller { quality } => Ok(Decision::Quality(quality)),
                ActionRule::AlwaysCooperate => Ok(Decision::Quality(Quality::High)),
                ActionRule::AlwaysDefect => Ok(Decision::Quality(Quality::Low)),
                _ => Err(self.unsupported(obs.role)),
            },
            Role::Buyer => match self.rule {
                ActionRule::GrimBuyer => Ok(Decision::Purchase(
                    if partner_view(obs, obs.partner).ever_reported_defect {
                        Purchase::None
                    } else {
                        Purchase::Customized
                    },
                )),
                ActionRule::AlwaysCooperate => Ok(Decision::Purchase(Purchase::Customized)),
                ActionRule::AlwaysDefect => Ok(Decision::Purchase(Purchase::None)),
                _ => Err(self.unsupported(obs.role)),
            },
            Role::Recipient => Err(self.unsupported(obs.role)),
        }
    }

    fn gossip(
        &mut self,
        obs: &Observation<'_>,
        protocol: &GossipProtocol,
    ) -> Result<Option<Payload>, PolicyError> {
        if self.reporter == Reporter::Silent || !protocol.variant.is_enabled() {
            return Ok(None);
        }
        let Some(seen) = self.partner_reading(obs) else {
            return Ok(None);
        };
        let claimed = if self.reporter == Reporter::Liar {
            seen.flipped()
        } else {
            seen
        };
        Ok(Some(if protocol.variant.is_binary() {
            Payload::Binary {
                bit: u8::from(claimed.is_cooperate()),
            }
        } else {
            let tone = if claimed.is_cooperate() {
                Tone::Praising
            } else {
                Tone::Criticism
            };
            Payload::Toned {
                tone,
                text: scripted_text(&self.name_of(obs.partner), claimed),
            }
        }))
    }

    fn self_report(
        &mut self,
        _obs: &Observation<'_>,
        own: BinaryAction,
    ) -> Result<Option<Payload>, PolicyError> {
        let claimed = match self.self_reporter {
            SelfReporter::None => return Ok(None),
            SelfReporter::Truthful => own,
            SelfReporter::Liar => own.flipped(),
        };
        let text = match claimed {
            BinaryAction::Cooperate => "I cooperated in this round.".to_string(),
            BinaryAction::Defect => "I defected in this round.".to_string(),
        };
        Ok(Some(Payload::SelfReport { claimed, text }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::ProtocolVariant;
    use crate::model::{GossipMessage, MemoryEntry};

    fn obs<'a>(
        msgs: &'a [GossipMessage],
        role: Role,
        observed: Option<Observed>,
    ) -> Observation<'a> {
        const NO_MEMORY: &[MemoryEntry] = &[];
        Observation {
            agent: 0,
            round: 5,
            role,
            partner: 1,
            own_resources: 10.0,
            partner_resources: 10.0,
            memory: NO_MEMORY,
            messages: msgs,
            public_records: &[],
            observed,
            mode: MonitoringMode::GossipPublic,
        }
    }

    fn toned(w: AgentId, s: AgentId, tone: Tone) -> GossipMessage {
        GossipMessage::new(
            1,
            w,
            s,
            Payload::Toned {
                tone,
                text: String::new(),
            },
        )
        .unwrap()
    }

    fn tones() -> GossipProtocol {
        GossipProtocol::new(ProtocolVariant::HierarchicalTones)
    }

    #[test]
    fn always_defect_silent_behaviour() {
        let mut p = ScriptedPolicy::always_defect_silent();
        let o = obs(&[], Role::Donor, None);
        assert_eq!(p.act(&o).unwrap(), Decision::Binary(BinaryAction::Defect));
        let seen = obs(
            &[],
            Role::Recipient,
            Some(Observed::Action {
                action: BinaryAction::Cooperate,
            }),
        );
        assert_eq!(p.gossip(&seen, &tones()).unwrap(), None);
        assert_eq!(p.self_report(&o, BinaryAction::Defect).unwrap(), None);
    }

    #[test]
    fn grim_examples() {
        let mut p = ScriptedPolicy::grim_trigger_public();
        assert_eq!(
            p.act(&obs(&[], Role::Donor, None)).unwrap(),
            Decision::Binary(BinaryAction::Cooperate)
        );
        let flagged = [toned(2, 1, Tone::Praising), toned(3, 1, Tone::Criticism)];
        assert_eq!(
            p.act(&obs(&flagged, Role::Donor, None)).unwrap(),
            Decision::Binary(BinaryAction::Defect)
        );
        let clean = [toned(2, 1, Tone::Praising), toned(3, 1, Tone::Praising)];
        assert_eq!(
            p.act(&obs(&clean, Role::Donor, None)).unwrap(),
            Decision::Binary(BinaryAction::Cooperate)
        );
    }

    #[test]
    fn reporters() {
        let saw = |a| obs(&[], Role::Recipient, Some(Observed::Action { action: a }));
        let mut truthful = ScriptedPolicy::grim_trigger_public();
        let tone_of = |p: Option<Payload>| match p {
            Some(Payload::Toned { tone, .. }) => tone,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(
            tone_of(
                truthful
                    .gossip(&saw(BinaryAction::Cooperate), &tones())
                    .unwrap()
            ),
            Tone::Praising
        );
        assert_eq!(
            tone_of(
                truthful
                    .gossip(&saw(BinaryAction::Defect), &tones())
                    .unwrap()
            ),
            Tone::Criticism
        );

        let mut liar = ScriptedPolicy::new(ActionRule::AlwaysCooperate, Reporter::Liar);
        let msg = liar
            .gossip(&saw(BinaryAction::Defect), &tones())
            .unwrap()
            .unwrap();
        assert_eq!(msg.claim(), Some(BinaryAction::Cooperate));
        let msg = liar
            .gossip(&saw(BinaryAction::Cooperate), &tones())
            .unwrap()
            .unwrap();
        assert_eq!(msg.claim(), Some(BinaryAction::Defect));

        let off = GossipProtocol::new(ProtocolVariant::Disabled);
        assert_eq!(
            truthful
                .gossip(&saw(BinaryAction::Cooperate), &off)
                .unwrap(),
            None
        );
        let binary = GossipProtocol::new(ProtocolVariant::BinaryNoConvention);
        assert_eq!(
            truthful
                .gossip(&saw(BinaryAction::Cooperate), &binary)
                .unwrap(),
            Some(Payload::Binary { bit: 1 })
        );
    }

    #[test]
    fn image_scorer_examples() {
        let mut p = ScriptedPolicy::image_scorer(0);
        let plus_two = [
            toned(2, 1, Tone::Praising),
            toned(3, 1, Tone::Praising),
            toned(4, 1, Tone::Praising),
            toned(5, 1, Tone::Criticism),
        ];
        assert_eq!(
            p.act(&obs(&plus_two, Role::Donor, None)).unwrap(),
            Decision::Binary(BinaryAction::Cooperate)
        );
        let minus_one = [toned(2, 1, Tone::Criticism)];
        assert_eq!(
            p.act(&obs(&minus_one, Role::Donor, None)).unwrap(),
            Decision::Binary(BinaryAction::Defect)
        );
        assert_eq!(
            p.act(&obs(&[], Role::Donor, None)).unwrap(),
            Decision::Binary(BinaryAction::Cooperate)
        );
    }

    #[test]
    fn trust_and_market_rules() {
        let mut trust = ScriptedPolicy::new(
            ActionRule::Trust {
                alpha: 0.5,
                beta: 1.0 / 3.0,
            },
            Reporter::Truthful,
        );
        assert_eq!(
            trust.act(&obs(&[], Role::Investor, None)).unwrap(),
            Decision::Invest(5.0)
        );
        let o = obs(
            &[],
            Role::Responder,
            Some(Observed::Investment {
                invested: 5.0,
                benefit: 15.0,
            }),
        );
        match trust.act(&o).unwrap() {
            Decision::Return(r) => assert!((r - 5.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let mut buyer = ScriptedPolicy::new(ActionRule::GrimBuyer, Reporter::Truthful);
        let flagged = [toned(2, 1, Tone::Criticism)];
        assert_eq!(
            buyer.act(&obs(&flagged, Role::Buyer, None)).unwrap(),
            Decision::Purchase(Purchase::None)
        );
        assert_eq!(
            buyer.act(&obs(&[], Role::Buyer, None)).unwrap(),
            Decision::Purchase(Purchase::Customized)
        );
    }
}
