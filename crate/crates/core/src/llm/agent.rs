//! [`AgentPolicy`] backed by a chat endpoint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::{market_payoff, Purchase, Quality};
use crate::gossip::GossipProtocol;
use crate::model::{
    AgentId, BinaryAction, HorizonKind, MonitoringMode, Observation, Observed, Payload, Role,
};
use crate::sim::{payload_text, GameSpec};
use crate::strategy::{AgentPolicy, Decision, PolicyError};

use super::client::ChatClient;
use super::parse::{parse_decision, DecisionSchema, ParsedDecision, ParsedValue};
use super::template::{render, RenderFlags, TemplateId};
use super::{LlmError, TranscriptEntry};

/// Memory entries rendered into `$stm`.
pub const STM_ENTRIES: usize = 20;
/// Extra requests allowed after a reply fails to parse.
pub const REPROMPT_BUDGET: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmFlags {
    pub gossip: bool,
    pub equilibrium_knowledge: bool,
    pub reflection: bool,
    pub self_report: bool,
    pub binary_convention: bool,
}

/// Static facts about the run that every prompt needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInfo {
    pub game: GameSpec,
    pub horizon: HorizonKind,
    pub horizon_length: u32,
    pub gamma: f64,
    pub names: Vec<String>,
    pub protocol: GossipProtocol,
}

pub struct LlmAgent {
    id: AgentId,
    info: GameInfo,
    flags: LlmFlags,
    client: Box<dyn ChatClient>,
    transcript: Vec<TranscriptEntry>,
    last_justification: Option<String>,
}

fn pct(num: f64, den: f64) -> String {
    if den > 0.0 {
        format!("{:.1}%", 100.0 * num / den)
    } else {
        "0.0%".to_string()
    }
}

fn or_none(lines: Vec<String>) -> String {
    if lines.is_empty() {
        "none".to_string()
    } else {
        format!("\n{}", lines.join("\n"))
    }
}

impl LlmAgent {
    pub fn new(id: AgentId, info: GameInfo, flags: LlmFlags, client: Box<dyn ChatClient>) -> Self {
        LlmAgent {
            id,
            info,
            flags,
            client,
            transcript: Vec::new(),
            last_justification: None,
        }
    }

    fn name(&self, id: AgentId) -> String {
        self.info
            .names
            .get(id)
            .cloned()
            .unwrap_or_else(|| format!("agent {id}"))
    }

    fn render_flags(&self) -> RenderFlags {
        RenderFlags {
            gossip: self.flags.gossip && self.info.protocol.variant.is_enabled(),
            equilibrium_knowledge: self.flags.equilibrium_knowledge,
            horizon: self.info.horizon,
            convention: self.flags.binary_convention
                && self.info.protocol.convention_text.is_some(),
        }
    }

    fn rule_template(&self) -> TemplateId {
        match self.info.game {
            GameSpec::Donation(_) => TemplateId::DonationRule,
            GameSpec::Ir(_) => TemplateId::IrRule,
            GameSpec::Investment(_) => TemplateId::InvestmentRule,
            GameSpec::Market(_) => TemplateId::MarketRule,
        }
    }

    fn stm(&self, obs: &Observation<'_>) -> String {
        let entries = obs.memory;
        let recent = &entries[entries.len().saturating_sub(STM_ENTRIES)..];
        or_none(
            recent
                .iter()
                .map(|e| {
                    let mut line = format!(
                        "round {}: {} with {}; {}; reward {}",
                        e.round,
                        e.role.as_str(),
                        self.name(e.partner),
                        e.actions.describe(),
                        e.reward
                    );
                    if let Some(m) = &e.message {
                        line.push_str(&format!("; message about you: {m}"));
                    }
                    if !e.reflection.is_empty() {
                        line.push_str(&format!("; reflection: {}", e.reflection));
                    }
                    line
                })
                .collect(),
        )
    }

    fn history(&self, obs: &Observation<'_>) -> String {
        match obs.mode {
            MonitoringMode::PerfectPublic => or_none(
                obs.public_records
                    .iter()
                    .map(|r| {
                        format!(
                            "round {}: {} and {}: {}",
                            r.round,
                            self.name(r.participants[0]),
                            self.name(r.participants[1]),
                            r.actions.describe()
                        )
                    })
                    .collect(),
            ),
            _ => or_none(
                obs.messages
                    .iter()
                    .map(|m| {
                        format!(
                            "round {}: {} about {}: {}",
                            m.round,
                            self.name(m.witness),
                            self.name(m.subject),
                            payload_text(&m.payload)
                        )
                    })
                    .collect(),
            ),
        }
    }

    /// Variables shared by every prompt of this run.
    fn base_vars(&self, obs: &Observation<'_>) -> BTreeMap<String, String> {
        let mut v = BTreeMap::new();
        let mut put = |k: &str, val: String| {
            v.insert(k.to_string(), val);
        };
        put("discount_factor", self.info.gamma.to_string());
        put("horizon_length", self.info.horizon_length.to_string());
        put("initial_resources", self.info.game.endowment().to_string());
        put("stm", self.stm(obs));
        put("historical_messages", self.history(obs));
        match self.info.game {
            GameSpec::Donation(p) | GameSpec::Ir(p) => {
                put("benefit", p.benefit.to_string());
                put("cost", p.cost.to_string());
            }
            GameSpec::Investment(p) => put("investment_multiplier", p.multiplier.to_string()),
            GameSpec::Market(p) => {
                for (q, qs) in [(Quality::High, "H"), (Quality::Low, "L")] {
                    for (pu, ps) in [(Purchase::Customized, "c"), (Purchase::Standardized, "s")] {
                        let (s, b) = market_payoff(q, pu, &p);
                        put(&format!("seller_{qs}{ps}_reward"), s.to_string());
                        put(&format!("buyer_{qs}{ps}_reward"), b.to_string());
                    }
                }
            }
        }
        v
    }

    fn ask(
        &mut self,
        obs: &Observation<'_>,
        phase: &str,
        template: TemplateId,
        vars: &BTreeMap<String, String>,
        schema: DecisionSchema,
    ) -> Result<ParsedDecision, LlmError> {
        let flags = self.render_flags();
        let system = render(self.rule_template().body(), vars, &flags)?;
        let user = render(template.body(), vars, &flags)?;
        let mut prompt = user.clone();
        let attempts = REPROMPT_BUDGET + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            let mut entry = TranscriptEntry {
                agent: self.name(self.id),
                round: obs.round,
                phase: phase.to_string(),
                attempt,
                system: system.clone(),
                user: prompt.clone(),
                response: None,
                error: None,
            };
            let reply = match self.client.complete(&system, &prompt) {
                Ok(r) => r,
                Err(e) => {
                    entry.error = Some(e.to_string());
                    self.transcript.push(entry);
                    return Err(e);
                }
            };
            entry.response = Some(reply.clone());
            match parse_decision(&reply, schema) {
                Ok(d) => {
                    self.transcript.push(entry);
                    return Ok(d);
                }
                Err(e) if e.is_parse_failure() => {
                    log::warn!(
                        "{} round {} {phase}: unusable reply ({e}); re-prompting",
                        entry.agent,
                        obs.round
                    );
                    last = e.to_string();
                    entry.error = Some(last.clone());
                    self.transcript.push(entry);
                    prompt = format!(
                        "{user}\n\nYour previous reply was rejected: {last}. Return JSON only in the required format."
                    );
                }
                Err(e) => return Err(e),
            }
        }
        Err(LlmError::RetriesExhausted { attempts, last })
    }

    fn remember(&mut self, d: &ParsedDecision) {
        self.last_justification = Some(d.justification.clone());
    }

    /// Gossip template, its variables and the observation sentence used by
    /// the signal prompt, or `None` when this role has nothing to report.
    fn gossip_prompt(
        &self,
        obs: &Observation<'_>,
        vars: &mut BTreeMap<String, String>,
    ) -> Option<(TemplateId, String)> {
        let me = self.name(obs.agent);
        let partner = self.name(obs.partner);
        let mut put = |k: &str, val: String| {
            vars.insert(k.to_string(), val);
        };
        match (obs.role, obs.observed?, self.info.game) {
            (Role::Recipient, Observed::Action { action }, GameSpec::Donation(p)) => {
                let (paid, sent) = if action.is_cooperate() {
                    (p.cost, p.benefit)
                } else {
                    (0.0, 0.0)
                };
                put("recipient_name", me.clone());
                put("donor_name", partner.clone());
                put("recipient_resources", obs.own_resources.to_string());
                put("donor_resources", obs.partner_resources.to_string());
                put("donation", paid.to_string());
                put("donation_ratio", pct(paid, obs.partner_resources));
                put("benefit", sent.to_string());
                Some((
                    TemplateId::DonationGossip,
                    format!("The donor {partner} chose to {action} toward you."),
                ))
            }
            (Role::Player, Observed::Action { action }, _) => {
                put("player_name", me);
                put("opponent_name", partner.clone());
                put("opponent_action", action.as_str().to_string());
                Some((
                    TemplateId::IrGossip,
                    format!("Your opponent {partner} chose to {action} in this round."),
                ))
            }
            (
                role @ (Role::Investor | Role::Responder),
                Observed::InvestmentRound { invested, returned },
                GameSpec::Investment(p),
            ) => {
                let benefit = p.multiplier * invested;
                let (investor, responder, inv_res, resp_res) = if role == Role::Investor {
                    (
                        me,
                        partner.clone(),
                        obs.own_resources,
                        obs.partner_resources,
                    )
                } else {
                    (
                        partner.clone(),
                        me,
                        obs.partner_resources,
                        obs.own_resources,
                    )
                };
                put("investor_name", investor);
                put("responder_name", responder);
                put("investor_resources", inv_res.to_string());
                put("responder_resources", resp_res.to_string());
                put("investment", invested.to_string());
                put("investment_ratio", pct(invested, inv_res));
                put("benefit", benefit.to_string());
                put("returned_amount", returned.to_string());
                put("returned_ratio", pct(returned, benefit));
                let (template, sentence) = if role == Role::Investor {
                    (
                        TemplateId::InvestmentInvestorGossip,
                        format!(
                            "You invested {invested}; {partner} returned {returned} of {benefit}."
                        ),
                    )
                } else {
                    (
                        TemplateId::InvestmentResponderGossip,
                        format!("{partner} invested {invested}, which became {benefit}; you returned {returned}."),
                    )
                };
                Some((template, sentence))
            }
            (Role::Buyer, Observed::MarketRound { quality, purchase }, GameSpec::Market(p)) => {
                let (s, b) = market_payoff(quality, purchase, &p);
                put("buyer_name", me);
                put("seller_name", partner.clone());
                put("seller_action", quality.as_str().to_string());
                put("buyer_action", purchase.as_str().to_string());
                put("seller_reward", s.to_string());
                put("buyer_reward", b.to_string());
                Some((
                    TemplateId::MarketBuyerGossip,
                    format!(
                        "The seller {partner} chose quality {}; you chose {}.",
                        quality.as_str(),
                        purchase.as_str()
                    ),
                ))
            }
            _ => None,
        }
    }
}

impl AgentPolicy for LlmAgent {
    fn label(&self) -> String {
        "llm".to_string()
    }

    fn act(&mut self, obs: &Observation<'_>) -> Result<Decision, PolicyError> {
        let mut vars = self.base_vars(obs);
        let me = self.name(obs.agent);
        let partner = self.name(obs.partner);
        let mut put = |k: &str, val: String| {
            vars.insert(k.to_string(), val);
        };
        let (template, schema) = match obs.role {
            Role::Donor => {
                put("donor_name", me);
                put("recipient_name", partner);
                put("donor_resources", obs.own_resources.to_string());
                put("recipient_resources", obs.partner_resources.to_string());
                (TemplateId::DonationDonor, DecisionSchema::DonorAction)
            }
            Role::Player => {
                put("player_name", me);
                put("opponent_name", partner);
                (TemplateId::IrAction, DecisionSchema::PlayerAction)
            }
            Role::Investor => {
                put("investor_name", me);
                put("responder_name", partner);
                put("investor_resources", obs.own_resources.to_string());
                put("responder_resources", obs.partner_resources.to_string());
                (
                    TemplateId::InvestmentInvestor,
                    DecisionSchema::InvestorAction {
                        max: obs.own_resources.max(0.0),
                    },
                )
            }
            Role::Responder => {
                let (invested, benefit) = match obs.observed {
                    Some(Observed::Investment { invested, benefit }) => (invested, benefit),
                    _ => (0.0, 0.0),
                };
                put("investor_name", partner);
                put("responder_name", me);
                put("investor_resources", obs.partner_resources.to_string());
                put("responder_resources", obs.own_resources.to_string());
                put("investment", invested.to_string());
                put("investment_ratio", pct(invested, obs.partner_resources));
                put("benefit", benefit.to_string());
                (
                    TemplateId::InvestmentResponder,
                    DecisionSchema::ResponderAction { max: benefit },
                )
            }
            Role::Seller => {
                put("seller_name", me);
                put("buyer_name", partner);
                (TemplateId::MarketSeller, DecisionSchema::SellerAction)
            }
            Role::Buyer => {
                put("buyer_name", me);
                put("seller_name", partner);
                (TemplateId::MarketBuyer, DecisionSchema::BuyerAction)
            }
            Role::Recipient => {
                return Err(PolicyError::Unsupported {
                    policy: self.label(),
                    role: obs.role.as_str(),
                })
            }
        };
        let d = self.ask(obs, "act", template, &vars, schema)?;
        self.remember(&d);
        Ok(match (d.value, obs.role) {
            (ParsedValue::Binary(a), _) => Decision::Binary(a),
            (ParsedValue::Amount(x), Role::Investor) => Decision::Invest(x),
            (ParsedValue::Amount(x), _) => Decision::Return(x),
            (ParsedValue::Quality(q), _) => Decision::Quality(q),
            (ParsedValue::Purchase(p), _) => Decision::Purchase(p),
            (other, _) => unreachable!("action schema produced {other:?}"),
        })
    }

    fn gossip(
        &mut self,
        obs: &Observation<'_>,
        protocol: &GossipProtocol,
    ) -> Result<Option<Payload>, PolicyError> {
        if !protocol.variant.is_enabled() || !self.flags.gossip {
            return Ok(None);
        }
        let mut vars = self.base_vars(obs);
        let Some((template, sentence)) = self.gossip_prompt(obs, &mut vars) else {
            return Ok(None);
        };
        if protocol.variant.is_binary() {
            vars.insert("witness_name".into(), self.name(obs.agent));
            vars.insert("subject_name".into(), self.name(obs.partner));
            vars.insert("observation".into(), sentence);
            vars.insert(
                "convention_text".into(),
                protocol.convention_text.clone().unwrap_or_default(),
            );
            let d = self.ask(
                obs,
                "gossip",
                TemplateId::BinaryGossip,
                &vars,
                DecisionSchema::BinarySignal,
            )?;
            self.remember(&d);
            let ParsedValue::Signal(bit) = d.value else {
                unreachable!("signal schema")
            };
            return Ok(Some(Payload::Binary { bit }));
        }
        let d = self.ask(obs, "gossip", template, &vars, DecisionSchema::ToneGossip)?;
        self.remember(&d);
        let ParsedValue::Toned { tone, text } = d.value else {
            unreachable!("tone schema")
        };
        Ok(Some(Payload::Toned { tone, text }))
    }

    fn self_report(
        &mut self,
        obs: &Observation<'_>,
        own: BinaryAction,
    ) -> Result<Option<Payload>, PolicyError> {
        if !self.flags.self_report || obs.role != Role::Donor {
            return Ok(None);
        }
        let mut vars = self.base_vars(obs);
        vars.insert("donor_name".into(), self.name(obs.agent));
        vars.insert("recipient_name".into(), self.name(obs.partner));
        vars.insert("donor_action".into(), own.as_str().to_string());
        let d = self.ask(
            obs,
            "self_report",
            TemplateId::DonationSelfReport,
            &vars,
            DecisionSchema::SelfReport,
        )?;
        let ParsedValue::SelfReport { claimed, text } = d.value else {
            unreachable!("report schema")
        };
        Ok(Some(Payload::SelfReport { claimed, text }))
    }

    /// The justification of the latest reply doubles as the reflection.
    fn reflect(&mut self, _obs: &Observation<'_>) -> Option<String> {
        let j = self.last_justification.take();
        if self.flags.reflection {
            j
        } else {
            None
        }
    }

    fn drain_transcript(&mut self) -> Vec<TranscriptEntry> {
        std::mem::take(&mut self.transcript)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DonationParams;
    use crate::gossip::ProtocolVariant;
    use crate::llm::client::ScriptedClient;
    use crate::model::{GossipMessage, MemoryEntry, Tone};

    fn info() -> GameInfo {
        GameInfo {
            game: GameSpec::Donation(DonationParams::default()),
            horizon: HorizonKind::InfiniteTruncated,
            horizon_length: 36,
            gamma: 0.99,
            names: vec!["John".into(), "Kate".into()],
            protocol: GossipProtocol::new(ProtocolVariant::HierarchicalTones),
        }
    }

    fn obs<'a>(
        msgs: &'a [GossipMessage],
        role: Role,
        observed: Option<Observed>,
    ) -> Observation<'a> {
        const NO_MEMORY: &[MemoryEntry] = &[];
        Observation {
            agent: 0,
            round: 3,
            role,
            partner: 1,
            own_resources: 10.0,
            partner_resources: 12.0,
            memory: NO_MEMORY,
            messages: msgs,
            public_records: &[],
            observed,
            mode: MonitoringMode::GossipPublic,
        }
    }

    fn flags(reflection: bool) -> LlmFlags {
        LlmFlags {
            gossip: true,
            reflection,
            ..LlmFlags::default()
        }
    }

    #[test]
    fn reprompts_then_succeeds() {
        let client = ScriptedClient::new(vec![
            "I think I will cooperate".into(),
            r#"{"justification":"kind","donor_action":"cooperate"}"#.into(),
        ]);
        let mut a = LlmAgent::new(0, info(), flags(true), Box::new(client));
        let d = a.act(&obs(&[], Role::Donor, None)).unwrap();
        assert_eq!(d, Decision::Binary(BinaryAction::Cooperate));
        let t = a.drain_transcript();
        assert_eq!(t.len(), 2);
        assert!(t[0].error.is_some());
        assert!(t[1].user.contains("previous reply was rejected"));
        assert!(t[0].user.contains("paired with recipient Kate"));
        assert_eq!(
            a.reflect(&obs(&[], Role::Donor, None)).as_deref(),
            Some("kind")
        );
    }

    #[test]
    fn retry_budget_exhausts() {
        let mut a = LlmAgent::new(
            0,
            info(),
            flags(true),
            Box::new(ScriptedClient::new(vec!["nope".into()])),
        );
        match a.act(&obs(&[], Role::Donor, None)) {
            Err(PolicyError::Llm(LlmError::RetriesExhausted { attempts: 3, .. })) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reflection_off_discards_justification() {
        let client = ScriptedClient::new(vec![
            r#"{"justification":"kind","donor_action":"defect"}"#.into(),
        ]);
        let mut a = LlmAgent::new(0, info(), flags(false), Box::new(client));
        a.act(&obs(&[], Role::Donor, None)).unwrap();
        assert_eq!(a.reflect(&obs(&[], Role::Donor, None)), None);
    }

    #[test]
    fn gossip_renders_history_and_parses_tone() {
        let client = ScriptedClient::new(vec![
            r#"{"justification":"j","tone":"praising","gossip":"Kate gave."}"#.into(),
        ]);
        let mut a = LlmAgent::new(0, info(), flags(true), Box::new(client));
        let prior = [GossipMessage::new(
            1,
            1,
            0,
            Payload::Toned {
                tone: Tone::Neutral,
                text: "fine".into(),
            },
        )
        .unwrap()];
        let o = obs(
            &prior,
            Role::Recipient,
            Some(Observed::Action {
                action: BinaryAction::Cooperate,
            }),
        );
        let p = a.gossip(&o, &info().protocol).unwrap().unwrap();
        assert_eq!(
            p,
            Payload::Toned {
                tone: Tone::Praising,
                text: "Kate gave.".into()
            }
        );
        let t = a.drain_transcript();
        assert!(t[0]
            .user
            .contains("round 1: Kate about John: [neutral] fine"));
        assert!(t[0]
            .user
            .contains("personal cost of 1 (8.3% of the donor's"));
        assert!(!t[0].user.contains('$'));
    }

    #[test]
    fn donor_stays_silent() {
        let mut a = LlmAgent::new(
            0,
            info(),
            flags(true),
            Box::new(ScriptedClient::new(vec![])),
        );
        assert_eq!(
            a.gossip(&obs(&[], Role::Donor, None), &info().protocol)
                .unwrap(),
            None
        );
    }
}
