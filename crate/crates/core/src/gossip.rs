//! Protocol gating for published messages and reputation read-outs over the
//! public pool.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AgentId, BinaryAction, GossipMessage, InteractionRecord, ModelError, Payload, PublicPool, Tone,
};

/// Free-text gossip is capped at this many whitespace-separated words.
pub const MAX_WORDS: usize = 150;

pub const DEFAULT_CONVENTION: &str = "All agents share a common convention: \"1\" indicates a positive/approving signal and \"0\" indicates a negative/warning signal.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GossipError {
    #[error("payload '{payload}' is not allowed under protocol '{protocol}'")]
    ProtocolMismatch {
        protocol: &'static str,
        payload: &'static str,
    },
    #[error("invalid tone '{0}'")]
    InvalidTone(String),
    #[error("invalid bit {0}; signals must be 0 or 1")]
    InvalidBit(u8),
    #[error("message carries no action claim")]
    NoClaim,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    HierarchicalTones,
    BinaryWithConvention,
    BinaryNoConvention,
    TonesPlusSelfReport,
    Disabled,
}

impl ProtocolVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolVariant::HierarchicalTones => "hierarchical_tones",
            ProtocolVariant::BinaryWithConvention => "binary_with_convention",
            ProtocolVariant::BinaryNoConvention => "binary_no_convention",
            ProtocolVariant::TonesPlusSelfReport => "tones_plus_self_report",
            ProtocolVariant::Disabled => "disabled",
        }
    }

    pub fn is_enabled(self) -> bool {
        self != ProtocolVariant::Disabled
    }

    pub fn is_binary(self) -> bool {
        matches!(
            self,
            ProtocolVariant::BinaryWithConvention | ProtocolVariant::BinaryNoConvention
        )
    }

    pub fn allows_self_report(self) -> bool {
        self == ProtocolVariant::TonesPlusSelfReport
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GossipProtocol {
    pub variant: ProtocolVariant,
    /// Injected into signal prompts under `BinaryWithConvention`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention_text: Option<String>,
}

impl GossipProtocol {
    pub fn new(variant: ProtocolVariant) -> Self {
        let convention_text = (variant == ProtocolVariant::BinaryWithConvention)
            .then(|| DEFAULT_CONVENTION.to_string());
        GossipProtocol {
            variant,
            convention_text,
        }
    }

    pub fn admits(&self, payload: &Payload) -> Result<(), GossipError> {
        let ok = match (self.variant, payload) {
            (ProtocolVariant::HierarchicalTones, Payload::Toned { .. }) => true,
            (
                ProtocolVariant::TonesPlusSelfReport,
                Payload::Toned { .. } | Payload::SelfReport { .. },
            ) => true,
            (v, Payload::Binary { bit }) if v.is_binary() => {
                if *bit > 1 {
                    return Err(GossipError::InvalidBit(*bit));
                }
                true
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(GossipError::ProtocolMismatch {
                protocol: self.variant.as_str(),
                payload: payload_kind(payload),
            })
        }
    }
}

fn payload_kind(p: &Payload) -> &'static str {
    match p {
        Payload::Toned { .. } => "toned",
        Payload::Binary { .. } => "binary",
        Payload::SelfReport { .. } => "self_report",
    }
}

pub fn parse_tone(s: &str) -> Result<Tone, GossipError> {
    s.parse()
        .map_err(|_| GossipError::InvalidTone(s.to_string()))
}

/// Cut `text` to at most [`MAX_WORDS`] words. Returns whether it was cut.
pub fn truncate_words(text: &str) -> (String, bool) {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= MAX_WORDS {
        (text.to_string(), false)
    } else {
        (words[..MAX_WORDS].join(" "), true)
    }
}

/// Check the message against the protocol, cap its text and append it.
/// Returns the publication index.
pub fn validate_and_publish(
    pool: &mut PublicPool,
    mut msg: GossipMessage,
    protocol: &GossipProtocol,
) -> Result<usize, GossipError> {
    protocol.admits(&msg.payload)?;
    if let Payload::Toned { text, .. } | Payload::SelfReport { text, .. } = &mut msg.payload {
        let (capped, cut) = truncate_words(text);
        if cut {
            log::warn!(
                "gossip from agent {} in round {} exceeded {MAX_WORDS} words; truncated",
                msg.witness,
                msg.round
            );
            *text = capped;
        }
    }
    Ok(pool.append(msg)?)
}

pub fn tone_valence(t: Tone) -> i32 {
    t.sign()
}

/// Graded reading: the three negative tones map to -1, -2, -3 in listed order.
pub fn tone_valence_graded(t: Tone) -> i32 {
    match t {
        Tone::Praising => 1,
        Tone::Neutral => 0,
        Tone::Mocking => -1,
        Tone::Complaint => -2,
        Tone::Criticism => -3,
    }
}

/// Valence of any payload; signals read as +1 / -1, self-reports by their claim.
pub fn payload_valence(p: &Payload, graded: bool) -> i32 {
    match p {
        Payload::Toned { tone, .. } => {
            if graded {
                tone_valence_graded(*tone)
            } else {
                tone_valence(*tone)
            }
        }
        other => match other.claim() {
            Some(BinaryAction::Cooperate) => 1,
            Some(BinaryAction::Defect) => -1,
            None => 0,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationView {
    pub subject: AgentId,
    pub valence_sum: i64,
    pub claimed_cooperations: u32,
    pub claimed_defections: u32,
    pub ever_reported_defect: bool,
}

impl ReputationView {
    fn empty(subject: AgentId) -> Self {
        ReputationView {
            subject,
            valence_sum: 0,
            claimed_cooperations: 0,
            claimed_defections: 0,
            ever_reported_defect: false,
        }
    }

    /// Claimed-action image: claimed cooperations minus claimed defections.
    pub fn image(&self) -> i64 {
        self.claimed_cooperations as i64 - self.claimed_defections as i64
    }

    fn absorb(&mut self, valence: i32, claim: Option<BinaryAction>) {
        self.valence_sum += valence as i64;
        match claim {
            Some(BinaryAction::Cooperate) => self.claimed_cooperations += 1,
            Some(BinaryAction::Defect) => self.claimed_defections += 1,
            None => {}
        }
        if valence < 0 || claim == Some(BinaryAction::Defect) {
            self.ever_reported_defect = true;
        }
    }
}

/// Pure read-out of everything the pool says about `subject`.
pub fn derive_reputation(messages: &[GossipMessage], subject: AgentId) -> ReputationView {
    let mut view = ReputationView::empty(subject);
    for m in messages.iter().filter(|m| m.subject == subject) {
        view.absorb(payload_valence(&m.payload, false), m.payload.claim());
    }
    view
}

/// Same read-out over fully observed actions, for perfect public monitoring.
pub fn reputation_from_records(records: &[InteractionRecord], subject: AgentId) -> ReputationView {
    let mut view = ReputationView::empty(subject);
    for r in records {
        let Some(slot) = r.slot_of(subject) else {
            continue;
        };
        if let Some(a) = r.actions.cooperation_reading(slot) {
            view.absorb(if a.is_cooperate() { 1 } else { -1 }, Some(a));
        }
    }
    view
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum ReputationScheme {
    /// Good iff the valence sum is nonnegative.
    Valence,
    /// Good iff claimed-action image reaches the threshold.
    ClaimedAction { threshold: i64 },
    /// Good iff never reported as a defector.
    Grim,
}

impl ReputationScheme {
    pub fn judges_good(&self, view: &ReputationView) -> bool {
        match self {
            ReputationScheme::Valence => view.valence_sum >= 0,
            ReputationScheme::ClaimedAction { threshold } => view.image() >= *threshold,
            ReputationScheme::Grim => !view.ever_reported_defect,
        }
    }
}

/// Whether the message's claim matches the ground-truth action.
pub fn honesty_label(msg: &GossipMessage, truth: BinaryAction) -> Result<bool, GossipError> {
    msg.payload
        .claim()
        .map(|c| c == truth)
        .ok_or(GossipError::NoClaim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toned(round: u32, w: AgentId, s: AgentId, tone: Tone) -> GossipMessage {
        GossipMessage::new(
            round,
            w,
            s,
            Payload::Toned {
                tone,
                text: "x".into(),
            },
        )
        .unwrap()
    }

    #[test]
    fn protocol_gate() {
        let mut pool = PublicPool::new();
        let tones = GossipProtocol::new(ProtocolVariant::HierarchicalTones);
        let msg = GossipMessage::new(
            1,
            1,
            0,
            Payload::Toned {
                tone: Tone::Criticism,
                text: "Max's repeated defection, including in this round".into(),
            },
        )
        .unwrap();
        validate_and_publish(&mut pool, msg, &tones).unwrap();

        let binary = GossipProtocol::new(ProtocolVariant::BinaryWithConvention);
        let bit = GossipMessage::new(1, 2, 3, Payload::Binary { bit: 1 }).unwrap();
        validate_and_publish(&mut pool, bit.clone(), &binary).unwrap();
        assert!(matches!(
            validate_and_publish(&mut pool, bit, &tones),
            Err(GossipError::ProtocolMismatch { .. })
        ));
        let bad = GossipMessage::new(1, 2, 3, Payload::Binary { bit: 2 }).unwrap();
        assert_eq!(
            validate_and_publish(&mut pool, bad, &binary),
            Err(GossipError::InvalidBit(2))
        );
        assert_eq!(pool.len(), 2);
        assert_eq!(
            parse_tone("sarcastic"),
            Err(GossipError::InvalidTone("sarcastic".into()))
        );
    }

    #[test]
    fn long_text_is_truncated() {
        let mut pool = PublicPool::new();
        let text = vec!["word"; 200].join(" ");
        let msg = GossipMessage::new(
            1,
            0,
            1,
            Payload::Toned {
                tone: Tone::Neutral,
                text,
            },
        )
        .unwrap();
        validate_and_publish(
            &mut pool,
            msg,
            &GossipProtocol::new(ProtocolVariant::HierarchicalTones),
        )
        .unwrap();
        assert_eq!(
            pool.messages()[0]
                .payload
                .text()
                .unwrap()
                .split_whitespace()
                .count(),
            MAX_WORDS
        );
    }

    #[test]
    fn valence_mapping() {
        assert_eq!(tone_valence(Tone::Praising), 1);
        assert_eq!(tone_valence(Tone::Neutral), 0);
        assert_eq!(tone_valence(Tone::Complaint), -1);
        assert_eq!(tone_valence_graded(Tone::Criticism), -3);
    }

    #[test]
    fn reputation_examples() {
        let empty = derive_reputation(&[], 3);
        assert_eq!(empty.valence_sum, 0);
        assert!(!empty.ever_reported_defect);

        let praise: Vec<_> = (1..=3).map(|t| toned(t, 1, 3, Tone::Praising)).collect();
        assert_eq!(derive_reputation(&praise, 3).valence_sum, 3);

        let mut mixed = praise.clone();
        mixed.push(toned(4, 2, 5, Tone::Criticism));
        mixed.push(toned(5, 1, 3, Tone::Criticism));
        let view = derive_reputation(&mixed, 3);
        assert!(view.ever_reported_defect);
        assert_eq!(view.image(), 2);
        assert!(!derive_reputation(&mixed, 4).ever_reported_defect);
    }

    #[test]
    fn honesty_examples() {
        let report = |c| {
            GossipMessage::new(
                1,
                2,
                2,
                Payload::SelfReport {
                    claimed: c,
                    text: String::new(),
                },
            )
            .unwrap()
        };
        assert_eq!(
            honesty_label(&report(BinaryAction::Cooperate), BinaryAction::Cooperate),
            Ok(true)
        );
        assert_eq!(
            honesty_label(&report(BinaryAction::Cooperate), BinaryAction::Defect),
            Ok(false)
        );
        assert_eq!(
            honesty_label(&toned(1, 1, 2, Tone::Neutral), BinaryAction::Defect),
            Err(GossipError::NoClaim)
        );
    }
}
