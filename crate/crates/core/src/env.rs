//! Payoff functions for the four testbeds and the per-agent resource ledger.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AgentId, BinaryAction, ModelError};
use crate::TOLERANCE;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action out of range: {0}")]
    ActionOutOfRange(String),
    #[error("invalid environment parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    #[serde(rename = "H")]
    High,
    #[serde(rename = "L")]
    Low,
}

impl Quality {
    pub fn as_str(self) -> &'static str {
        match self {
            Quality::High => "H",
            Quality::Low => "L",
        }
    }
}

impl FromStr for Quality {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "H" => Ok(Quality::High),
            "L" => Ok(Quality::Low),
            other => Err(ModelError::Unknown {
                kind: "quality",
                value: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purchase {
    #[serde(rename = "c")]
    Customized,
    #[serde(rename = "s")]
    Standardized,
    #[serde(rename = "none")]
    None,
}

impl Purchase {
    pub fn as_str(self) -> &'static str {
        match self {
            Purchase::Customized => "c",
            Purchase::Standardized => "s",
            Purchase::None => "none",
        }
    }
}

impl FromStr for Purchase {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c" => Ok(Purchase::Customized),
            "s" => Ok(Purchase::Standardized),
            "none" => Ok(Purchase::None),
            other => Err(ModelError::Unknown {
                kind: "purchase",
                value: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for Purchase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DonationParams {
    pub cost: f64,
    pub benefit: f64,
    pub endowment: f64,
}

impl DonationParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.cost > 0.0) {
            return Err(EnvError::InvalidParams("cost must be positive".into()));
        }
        if !(self.benefit > self.cost) {
            return Err(EnvError::InvalidParams("benefit must exceed cost".into()));
        }
        if !(self.endowment >= 0.0) {
            return Err(EnvError::InvalidParams(
                "endowment must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

impl Default for DonationParams {
    fn default() -> Self {
        DonationParams {
            cost: 1.0,
            benefit: 5.0,
            endowment: 10.0,
        }
    }
}

/// Two-sided (prisoner's dilemma) variant shares the donation parameters.
pub type IrParams = DonationParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvestmentParams {
    pub multiplier: f64,
    pub endowment: f64,
}

impl Default for InvestmentParams {
    fn default() -> Self {
        InvestmentParams {
            multiplier: 3.0,
            endowment: 10.0,
        }
    }
}

impl InvestmentParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.multiplier > 1.0) {
            return Err(EnvError::InvalidParams("multiplier must exceed 1".into()));
        }
        if !(self.endowment >= 0.0) {
            return Err(EnvError::InvalidParams(
                "endowment must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub price_customized: f64,
    pub price_standardized: f64,
    pub cost_high: f64,
    pub cost_low: f64,
    pub value_high_customized: f64,
    pub value_high_standardized: f64,
    pub value_low_customized: f64,
    pub value_low_standardized: f64,
    pub endowment: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        MarketParams {
            price_customized: 3.0,
            price_standardized: 1.0,
            cost_high: 1.0,
            cost_low: 0.0,
            value_high_customized: 6.0,
            value_high_standardized: 3.0,
            value_low_customized: 3.0,
            value_low_standardized: 2.0,
            endowment: 10.0,
        }
    }
}

impl MarketParams {
    pub fn price(&self, p: Purchase) -> f64 {
        match p {
            Purchase::Customized => self.price_customized,
            Purchase::Standardized => self.price_standardized,
            Purchase::None => 0.0,
        }
    }

    pub fn cost(&self, q: Quality) -> f64 {
        match q {
            Quality::High => self.cost_high,
            Quality::Low => self.cost_low,
        }
    }

    pub fn value(&self, q: Quality, p: Purchase) -> f64 {
        match (q, p) {
            (Quality::High, Purchase::Customized) => self.value_high_customized,
            (Quality::High, Purchase::Standardized) => self.value_high_standardized,
            (Quality::Low, Purchase::Customized) => self.value_low_customized,
            (Quality::Low, Purchase::Standardized) => self.value_low_standardized,
            (_, Purchase::None) => 0.0,
        }
    }

    /// (seller, buyer) payoffs indexed `[quality][purchase]` over {H, L} x {c, s}.
    pub fn payoff_matrix(&self) -> [[(f64, f64); 2]; 2] {
        let cell = |q, p| market_payoff(q, p, self);
        [
            [
                cell(Quality::High, Purchase::Customized),
                cell(Quality::High, Purchase::Standardized),
            ],
            [
                cell(Quality::Low, Purchase::Customized),
                cell(Quality::Low, Purchase::Standardized),
            ],
        ]
    }
}

pub fn donation_payoff(action: BinaryAction, p: &DonationParams) -> (f64, f64) {
    match action {
        BinaryAction::Cooperate => (-p.cost, p.benefit),
        BinaryAction::Defect => (0.0, 0.0),
    }
}

pub fn ir_payoff(a_i: BinaryAction, a_j: BinaryAction, p: &IrParams) -> (f64, f64) {
    use BinaryAction::*;
    let (b, c) = (p.benefit, p.cost);
    match (a_i, a_j) {
        (Cooperate, Cooperate) => (b - c, b - c),
        (Cooperate, Defect) => (-c, b),
        (Defect, Cooperate) => (b, -c),
        (Defect, Defect) => (0.0, 0.0),
    }
}

/// Rewards for one trust round. Bounds are checked, never clamped.
pub fn investment_step(
    invested: f64,
    returned: f64,
    investor_resources: f64,
    p: &InvestmentParams,
) -> Result<(f64, f64), EnvError> {
    if !invested.is_finite()
        || invested < -TOLERANCE
        || invested > investor_resources.max(0.0) + TOLERANCE
    {
        return Err(EnvError::ActionOutOfRange(format!(
            "investment {invested} outside [0, {investor_resources}]"
        )));
    }
    let cap = p.multiplier * invested;
    if !returned.is_finite() || returned < -TOLERANCE || returned > cap + TOLERANCE {
        return Err(EnvError::ActionOutOfRange(format!(
            "return {returned} outside [0, {cap}]"
        )));
    }
    Ok((-invested + returned, cap - returned))
}

pub fn market_payoff(quality: Quality, purchase: Purchase, p: &MarketParams) -> (f64, f64) {
    if purchase == Purchase::None {
        return (0.0, 0.0);
    }
    let price = p.price(purchase);
    (price - p.cost(quality), p.value(quality, purchase) - price)
}

/// Per-agent resource levels. Binary-action games may drive levels negative.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceLedger {
    levels: Vec<f64>,
    initial: f64,
}

impl ResourceLedger {
    pub fn new(n: usize, endowment: f64) -> Self {
        ResourceLedger {
            levels: vec![endowment; n],
            initial: endowment,
        }
    }

    pub fn get(&self, agent: AgentId) -> f64 {
        self.levels[agent]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    pub fn credit(&mut self, agent: AgentId, reward: f64) {
        self.levels[agent] += reward;
    }
}
