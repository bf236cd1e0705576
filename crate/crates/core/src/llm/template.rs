//! Prompt templates.
//!
//! Template files are plain text with `$name` placeholders and a literal
//! `[HORIZON-TYPE]` marker. Lines starting with `@` are directives:
//! `@if <flag>`, `@else`, `@end` select alternative blocks and `@omit` drops
//! the following line. Stripping every directive line gives back the
//! original prompt text.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::HorizonKind;

use super::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Rule,
    Action,
    Gossip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    DonationRule,
    DonationDonor,
    DonationGossip,
    DonationSelfReport,
    IrRule,
    IrAction,
    IrGossip,
    InvestmentRule,
    InvestmentInvestor,
    InvestmentResponder,
    InvestmentInvestorGossip,
    InvestmentResponderGossip,
    MarketRule,
    MarketSeller,
    MarketBuyer,
    MarketBuyerGossip,
    BinaryGossip,
}

impl TemplateId {
    pub const ALL: [TemplateId; 17] = [
        TemplateId::DonationRule,
        TemplateId::DonationDonor,
        TemplateId::DonationGossip,
        TemplateId::DonationSelfReport,
        TemplateId::IrRule,
        TemplateId::IrAction,
        TemplateId::IrGossip,
        TemplateId::InvestmentRule,
        TemplateId::InvestmentInvestor,
        TemplateId::InvestmentResponder,
        TemplateId::InvestmentInvestorGossip,
        TemplateId::InvestmentResponderGossip,
        TemplateId::MarketRule,
        TemplateId::MarketSeller,
        TemplateId::MarketBuyer,
        TemplateId::MarketBuyerGossip,
        TemplateId::BinaryGossip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::DonationRule => "donation_rule",
            TemplateId::DonationDonor => "donation_donor",
            TemplateId::DonationGossip => "donation_gossip",
            TemplateId::DonationSelfReport => "donation_self_report",
            TemplateId::IrRule => "ir_rule",
            TemplateId::IrAction => "ir_action",
            TemplateId::IrGossip => "ir_gossip",
            TemplateId::InvestmentRule => "investment_rule",
            TemplateId::InvestmentInvestor => "investment_investor",
            TemplateId::InvestmentResponder => "investment_responder",
            TemplateId::InvestmentInvestorGossip => "investment_investor_gossip",
            TemplateId::InvestmentResponderGossip => "investment_responder_gossip",
            TemplateId::MarketRule => "market_rule",
            TemplateId::MarketSeller => "market_seller",
            TemplateId::MarketBuyer => "market_buyer",
            TemplateId::MarketBuyerGossip => "market_buyer_gossip",
            TemplateId::BinaryGossip => "binary_gossip",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::DonationRule => include_str!("../../templates/donation_rule.txt"),
            TemplateId::DonationDonor => include_str!("../../templates/donation_donor.txt"),
            TemplateId::DonationGossip => include_str!("../../templates/donation_gossip.txt"),
            TemplateId::DonationSelfReport => {
                include_str!("../../templates/donation_self_report.txt")
            }
            TemplateId::IrRule => include_str!("../../templates/ir_rule.txt"),
            TemplateId::IrAction => include_str!("../../templates/ir_action.txt"),
            TemplateId::IrGossip => include_str!("../../templates/ir_gossip.txt"),
            TemplateId::InvestmentRule => include_str!("../../templates/investment_rule.txt"),
            TemplateId::InvestmentInvestor => {
                include_str!("../../templates/investment_investor.txt")
            }
            TemplateId::InvestmentResponder => {
                include_str!("../../templates/investment_responder.txt")
            }
            TemplateId::InvestmentInvestorGossip => {
                include_str!("../../templates/investment_investor_gossip.txt")
            }
            TemplateId::InvestmentResponderGossip => {
                include_str!("../../templates/investment_responder_gossip.txt")
            }
            TemplateId::MarketRule => include_str!("../../templates/market_rule.txt"),
            TemplateId::MarketSeller => include_str!("../../templates/market_seller.txt"),
            TemplateId::MarketBuyer => include_str!("../../templates/market_buyer.txt"),
            TemplateId::MarketBuyerGossip => {
                include_str!("../../templates/market_buyer_gossip.txt")
            }
            TemplateId::BinaryGossip => include_str!("../../templates/binary_gossip.txt"),
        }
    }

    pub fn category(self) -> Category {
        match self {
            TemplateId::DonationRule
            | TemplateId::IrRule
            | TemplateId::InvestmentRule
            | TemplateId::MarketRule => Category::Rule,
            TemplateId::DonationDonor
            | TemplateId::IrAction
            | TemplateId::InvestmentInvestor
            | TemplateId::InvestmentResponder
            | TemplateId::MarketSeller
            | TemplateId::MarketBuyer => Category::Action,
            _ => Category::Gossip,
        }
    }

    /// Every placeholder name in the file, across all conditional branches.
    pub fn placeholders(self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for line in self.body().lines().filter(|l| !l.starts_with('@')) {
            let mut rest = line;
            while let Some(pos) = rest.find('$') {
                let tail = &rest[pos + 1..];
                let len = ident_len(tail);
                if len > 0 {
                    out.insert(tail[..len].to_string());
                }
                rest = &tail[len..];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderFlags {
    pub gossip: bool,
    pub equilibrium_knowledge: bool,
    pub horizon: HorizonKind,
    /// A shared signal convention is injected.
    pub convention: bool,
}

impl RenderFlags {
    fn get(&self, flag: &str) -> Result<bool, LlmError> {
        Ok(match flag {
            "gossip" => self.gossip,
            "equilibrium_knowledge" => self.equilibrium_knowledge,
            "finite" => self.horizon == HorizonKind::Finite,
            "infinite" => self.horizon == HorizonKind::InfiniteTruncated,
            "convention" => self.convention,
            other => return Err(LlmError::BadTemplate(format!("unknown flag '{other}'"))),
        })
    }
}

fn ident_len(s: &str) -> usize {
    let bytes = s.as_bytes();
    if bytes.is_empty() || !(bytes[0].is_ascii_alphabetic() || bytes[0] == b'_') {
        return 0;
    }
    bytes
        .iter()
        .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
        .count()
}

/// Select the active blocks of `body`, then substitute variables in a single
/// pass. Substituted values are never rescanned.
pub fn render(
    body: &str,
    vars: &BTreeMap<String, String>,
    flags: &RenderFlags,
) -> Result<String, LlmError> {
    // (branch taken, enclosing block active)
    let mut stack: Vec<(bool, bool)> = Vec::new();
    let mut active = true;
    let mut omit_next = false;
    let mut kept = Vec::new();
    for line in body.lines() {
        if let Some(directive) = line.strip_prefix('@') {
            let mut parts = directive.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("if"), Some(flag)) => {
                    let cond = flags.get(flag)?;
                    stack.push((cond, active));
                    active = active && cond;
                }
                (Some("else"), None) => {
                    let (cond, outer) = *stack
                        .last()
                        .ok_or_else(|| LlmError::BadTemplate("@else without @if".into()))?;
                    active = outer && !cond;
                }
                (Some("end"), None) => {
                    let (_, outer) = stack
                        .pop()
                        .ok_or_else(|| LlmError::BadTemplate("@end without @if".into()))?;
                    active = outer;
                }
                (Some("omit"), None) => omit_next = true,
                _ => return Err(LlmError::BadTemplate(format!("unknown directive '{line}'"))),
            }
            continue;
        }
        if std::mem::take(&mut omit_next) || !active {
            continue;
        }
        kept.push(line);
    }
    if !stack.is_empty() {
        return Err(LlmError::BadTemplate("unterminated @if".into()));
    }
    let mut text = kept.join("\n");
    if body.ends_with('\n') {
        text.push('\n');
    }
    let text = text.replace("[HORIZON-TYPE]", flags.horizon.label());

    let mut out = String::with_capacity(text.len());
    let mut rest = text.as_str();
    while let Some(pos) = rest.find('$') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos + 1..];
        let len = ident_len(tail);
        if len == 0 {
            out.push('$');
        } else {
            let name = &tail[..len];
            let value = vars
                .get(name)
                .ok_or_else(|| LlmError::MissingVariable(name.to_string()))?;
            out.push_str(value);
        }
        rest = &tail[len..];
    }
    out.push_str(rest);
    Ok(out)
}
