//! Constrained JSON replies.

use serde_json::{json, Map, Value};

use crate::env::{Purchase, Quality};
use crate::gossip::parse_tone;
use crate::model::{BinaryAction, Tone};

use super::LlmError;

/// Expected reply shape for one prompt. Key names follow the prompt files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecisionSchema {
    DonorAction,
    PlayerAction,
    InvestorAction { max: f64 },
    ResponderAction { max: f64 },
    SellerAction,
    BuyerAction,
    ToneGossip,
    BinarySignal,
    SelfReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParsedValue {
    Binary(BinaryAction),
    Amount(f64),
    Quality(Quality),
    Purchase(Purchase),
    Toned { tone: Tone, text: String },
    Signal(u8),
    SelfReport { claimed: BinaryAction, text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDecision {
    pub justification: String,
    pub value: ParsedValue,
}

/// Locate the first balanced `{...}` that parses as a JSON object. Code
/// fences and surrounding prose are skipped.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(off) = text[start..].find('{') {
        let open = start + off;
        let (mut depth, mut in_str, mut escaped) = (0i32, false, false);
        let mut close = None;
        for (i, &b) in bytes.iter().enumerate().skip(open) {
            if in_str {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_str = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_str = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
        }
        if let Some(end) = close {
            if let Ok(Value::Object(map)) = serde_json::from_str(&text[open..=end]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
}

fn field<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Value, LlmError> {
    map.get(key)
        .ok_or_else(|| LlmError::SchemaViolation(format!("missing key '{key}'")))
}

fn string_field(map: &Map<String, Value>, key: &str) -> Result<String, LlmError> {
    field(map, key)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| LlmError::SchemaViolation(format!("'{key}' must be a string")))
}

fn enum_field(map: &Map<String, Value>, key: &str, allowed: &[&str]) -> Result<usize, LlmError> {
    let raw = string_field(map, key)?;
    let norm = raw.trim().to_ascii_lowercase();
    allowed
        .iter()
        .position(|a| a.to_ascii_lowercase() == norm)
        .ok_or_else(|| LlmError::SchemaViolation(format!("'{key}' = '{raw}' not in {allowed:?}")))
}

fn amount_field(map: &Map<String, Value>, key: &str, max: f64) -> Result<f64, LlmError> {
    let v = field(map, key)?;
    let x = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse::<f64>().ok(),
        _ => None,
    }
    .filter(|x| x.is_finite())
    .ok_or_else(|| LlmError::SchemaViolation(format!("'{key}' must be a real number")))?;
    if x < 0.0 || x > max + crate::TOLERANCE {
        return Err(LlmError::OutOfRange(format!(
            "'{key}' = {x} outside [0, {max}]"
        )));
    }
    Ok(x)
}

pub fn parse_decision(text: &str, schema: DecisionSchema) -> Result<ParsedDecision, LlmError> {
    let map = extract_json_object(text).ok_or(LlmError::Malformed)?;
    let justification = string_field(&map, "justification")?;
    let binary = |i: usize| {
        if i == 0 {
            BinaryAction::Cooperate
        } else {
            BinaryAction::Defect
        }
    };
    let value = match schema {
        DecisionSchema::DonorAction => ParsedValue::Binary(binary(enum_field(
            &map,
            "donor_action",
            &["cooperate", "defect"],
        )?)),
        DecisionSchema::PlayerAction => {
            ParsedValue::Binary(binary(enum_field(&map, "player_action", &["C", "D"])?))
        }
        DecisionSchema::InvestorAction { max } => {
            ParsedValue::Amount(amount_field(&map, "investor_action", max)?)
        }
        DecisionSchema::ResponderAction { max } => {
            ParsedValue::Amount(amount_field(&map, "responder_action", max)?)
        }
        DecisionSchema::SellerAction => ParsedValue::Quality(
            [Quality::High, Quality::Low][enum_field(&map, "seller_action", &["H", "L"])?],
        ),
        DecisionSchema::BuyerAction => ParsedValue::Purchase(
            [Purchase::Customized, Purchase::Standardized, Purchase::None]
                [enum_field(&map, "buyer_action", &["c", "s", "none"])?],
        ),
        DecisionSchema::ToneGossip => {
            let raw = string_field(&map, "tone")?;
            let tone = parse_tone(&raw.trim().to_ascii_lowercase())
                .map_err(|_| LlmError::SchemaViolation(format!("unknown tone '{raw}'")))?;
            ParsedValue::Toned {
                tone,
                text: string_field(&map, "gossip")?,
            }
        }
        DecisionSchema::BinarySignal => {
            let bit = match field(&map, "signal")? {
                Value::Number(n) => n.as_u64(),
                Value::String(s) => s.trim().parse::<u64>().ok(),
                _ => None,
            };
            match bit {
                Some(b @ (0 | 1)) => ParsedValue::Signal(b as u8),
                _ => return Err(LlmError::SchemaViolation("'signal' must be 0 or 1".into())),
            }
        }
        DecisionSchema::SelfReport => ParsedValue::SelfReport {
            claimed: binary(enum_field(
                &map,
                "reported_action",
                &["cooperate", "defect"],
            )?),
            text: string_field(&map, "report")?,
        },
    };
    Ok(ParsedDecision {
        justification,
        value,
    })
}

/// Canonical JSON reply for a decision; the inverse of [`parse_decision`].
pub fn serialize_decision(d: &ParsedDecision, schema: DecisionSchema) -> String {
    let coop = |a: BinaryAction, yes: &str, no: &str| {
        if a.is_cooperate() {
            yes.to_string()
        } else {
            no.to_string()
        }
    };
    let mut obj = json!({ "justification": d.justification });
    let map = obj.as_object_mut().expect("object literal");
    match (schema, &d.value) {
        (DecisionSchema::DonorAction, ParsedValue::Binary(a)) => {
            map.insert("donor_action".into(), json!(a.as_str()));
        }
        (DecisionSchema::PlayerAction, ParsedValue::Binary(a)) => {
            map.insert("player_action".into(), json!(coop(*a, "C", "D")));
        }
        (DecisionSchema::InvestorAction { .. }, ParsedValue::Amount(x)) => {
            map.insert("investor_action".into(), json!(x));
        }
        (DecisionSchema::ResponderAction { .. }, ParsedValue::Amount(x)) => {
            map.insert("responder_action".into(), json!(x));
        }
        (DecisionSchema::SellerAction, ParsedValue::Quality(q)) => {
            map.insert("seller_action".into(), json!(q.as_str()));
        }
        (DecisionSchema::BuyerAction, ParsedValue::Purchase(p)) => {
            map.insert("buyer_action".into(), json!(p.as_str()));
        }
        (DecisionSchema::ToneGossip, ParsedValue::Toned { tone, text }) => {
            map.insert("tone".into(), json!(tone.as_str()));
            map.insert("gossip".into(), json!(text));
        }
        (DecisionSchema::BinarySignal, ParsedValue::Signal(b)) => {
            map.insert("signal".into(), json!(b));
        }
        (DecisionSchema::SelfReport, ParsedValue::SelfReport { claimed, text }) => {
            map.insert("reported_action".into(), json!(claimed.as_str()));
            map.insert("report".into(), json!(text));
        }
        (s, v) => panic!("value {v:?} does not fit schema {s:?}"),
    }
    obj.to_string()
}
