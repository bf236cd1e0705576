//! Run configuration: a JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::env::{DonationParams, InvestmentParams, MarketParams, Quality};
use crate::gossip::{GossipProtocol, ProtocolVariant};
use crate::llm::{EndpointConfig, LlmFlags};
use crate::model::{HorizonKind, Indexing, MonitoringMode};
use crate::scheduler::{MarketMatching, ScheduleMode};
use crate::sim::{GameSpec, SimConfig};
use crate::strategy::{ActionRule, Reporter, ScriptedPolicy, SelfReporter};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Donation,
    Ir,
    Investment,
    Market,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonType {
    Finite,
    Infinite,
}

impl From<HorizonType> for HorizonKind {
    fn from(h: HorizonType) -> Self {
        match h {
            HorizonType::Finite => HorizonKind::Finite,
            HorizonType::Infinite => HorizonKind::InfiniteTruncated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketRole {
    Seller,
    Buyer,
}

/// Parameters of a scripted policy; which ones apply depends on the policy id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reporter: Option<Reporter>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub self_report: Option<SelfReporter>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub global: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defect_when_flagged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub name: String,
    pub policy: String,
    #[serde(default)]
    pub params: PolicyParams,
    /// Number of agents built from this entry; names get a numeric suffix
    /// when more than one.
    #[serde(default = "one")]
    pub count: usize,
    /// Market games only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<MarketRole>,
    /// Per-agent prompt flags for `llm` entries; the run-wide flags apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flags: Option<PromptFlags>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptFlags {
    pub equilibrium_knowledge: bool,
    pub reflection: bool,
    pub self_report: bool,
    pub binary_convention: bool,
}

fn default_gamma() -> f64 {
    0.99
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub game: GameKind,
    /// Environment parameters for the chosen game; defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Value>,
    pub horizon_type: HorizonType,
    pub rounds: u32,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub monitoring: MonitoringMode,
    pub protocol: ProtocolVariant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convention_text: Option<String>,
    /// Pairing mode; each game has a default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleMode>,
    #[serde(default)]
    pub indexing: Indexing,
    pub roster: Vec<RosterEntry>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub prompt_flags: PromptFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointConfig>,
}

/// One expanded roster slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub name: String,
    pub policy: PolicySpec,
    pub role: Option<MarketRole>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Scripted(ScriptedPolicy),
    Llm(LlmFlags),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.into(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn game_spec(&self) -> Result<GameSpec, ConfigError> {
        fn parse<T: serde::de::DeserializeOwned + Default>(
            v: &Option<Value>,
        ) -> Result<T, ConfigError> {
            match v {
                Some(v) => Ok(serde_json::from_value(v.clone())?),
                None => Ok(T::default()),
            }
        }
        let spec = match self.game {
            GameKind::Donation => GameSpec::Donation(parse::<DonationParams>(&self.params)?),
            GameKind::Ir => GameSpec::Ir(parse::<DonationParams>(&self.params)?),
            GameKind::Investment => GameSpec::Investment(parse::<InvestmentParams>(&self.params)?),
            GameKind::Market => GameSpec::Market(parse::<MarketParams>(&self.params)?),
        };
        spec.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(spec)
    }

    pub fn schedule_mode(&self) -> ScheduleMode {
        self.schedule.unwrap_or(match self.game {
            GameKind::Donation => ScheduleMode::Donation,
            GameKind::Ir | GameKind::Investment => ScheduleMode::Simultaneous,
            GameKind::Market => ScheduleMode::BipartiteSingle,
        })
    }

    pub fn market_matching(&self) -> MarketMatching {
        match self.schedule_mode() {
            ScheduleMode::BipartiteFull => MarketMatching::FullMatching,
            _ => MarketMatching::SingleDyad,
        }
    }

    pub fn protocol(&self) -> GossipProtocol {
        let mut p = GossipProtocol::new(self.protocol);
        if let Some(text) = &self.convention_text {
            p.convention_text = Some(text.clone());
        }
        p
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            game: self.game_spec()?,
            horizon: self.horizon_type.into(),
            mode: self.monitoring,
            protocol: self.protocol(),
        })
    }

    pub fn agents(&self) -> Result<Vec<AgentSpec>, ConfigError> {
        let mut out = Vec::new();
        for entry in &self.roster {
            if entry.count == 0 {
                return invalid(format!("roster entry '{}' has count 0", entry.name));
            }
            let policy = self.policy_spec(entry)?;
            for k in 0..entry.count {
                let name = if entry.count == 1 {
                    entry.name.clone()
                } else {
                    format!("{}{}", entry.name, k + 1)
                };
                out.push(AgentSpec {
                    name,
                    policy: policy.clone(),
                    role: entry.role,
                });
            }
        }
        let names: Vec<&str> = out.iter().map(|a| a.name.as_str()).collect();
        let mut names_sorted = names.clone();
        names_sorted.sort_unstable();
        names_sorted.dedup();
        if names_sorted.len() != names.len() {
            return invalid("agent names must be unique");
        }
        let roster: Vec<String> = out.iter().map(|a| a.name.clone()).collect();
        for a in &mut out {
            if let PolicySpec::Scripted(p) = &mut a.policy {
                *p = p.clone().with_roster(roster.clone());
                p.name = a.name.clone();
            }
        }
        Ok(out)
    }

    fn policy_spec(&self, entry: &RosterEntry) -> Result<PolicySpec, ConfigError> {
        let p = &entry.params;
        let reporter = p.reporter.unwrap_or(Reporter::Truthful);
        let rule = match entry.policy.as_str() {
            "llm" => {
                if p != &PolicyParams::default() {
                    return invalid(format!(
                        "'{}': llm policies take flags, not params",
                        entry.name
                    ));
                }
                let f = entry.flags.unwrap_or(self.prompt_flags);
                return Ok(PolicySpec::Llm(LlmFlags {
                    gossip: self.protocol.is_enabled(),
                    equilibrium_knowledge: f.equilibrium_knowledge,
                    reflection: f.reflection,
                    self_report: f.self_report,
                    binary_convention: f.binary_convention,
                }));
            }
            "always_cooperate" => ActionRule::AlwaysCooperate,
            "always_defect" => ActionRule::AlwaysDefect,
            "always_defect_silent" => {
                if p.reporter.is_some_and(|r| r != Reporter::Silent) {
                    return invalid(format!(
                        "'{}': always_defect_silent cannot gossip",
                        entry.name
                    ));
                }
                return Ok(PolicySpec::Scripted(ScriptedPolicy::always_defect_silent()));
            }
            "grim_trigger_public" | "grim" => ActionRule::Grim {
                global: p.global.unwrap_or(false),
                defect_when_flagged: p.defect_when_flagged.unwrap_or(false),
            },
            "image_scorer" => ActionRule::ImageScorer {
                threshold: p.threshold.unwrap_or(0),
            },
            "trust" => {
                let (alpha, beta) = (p.alpha.unwrap_or(0.5), p.beta.unwrap_or(1.0 / 3.0));
                if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
                    return invalid(format!(
                        "'{}': alpha and beta must lie in [0, 1]",
                        entry.name
                    ));
                }
                ActionRule::Trust { alpha, beta }
            }
            "seller" => ActionRule::Seller {
                quality: p.quality.unwrap_or(Quality::High),
            },
            "grim_buyer" => ActionRule::GrimBuyer,
            other => return invalid(format!("unknown policy id '{other}'")),
        };
        if entry.flags.is_some() {
            return invalid(format!(
                "'{}': prompt flags apply to llm policies only",
                entry.name
            ));
        }
        let mut policy = ScriptedPolicy::new(rule, reporter);
        if let Some(s) = p.self_report {
            policy = policy.with_self_reporter(s);
        }
        Ok(PolicySpec::Scripted(policy))
    }

    /// Every consistency rule that can be checked without running.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let spec = self.game_spec()?;
        if self.rounds == 0 {
            return invalid("rounds must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return invalid(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        let agents = self.agents()?;
        if agents.len() < 2 {
            return invalid("at least two agents are required");
        }
        let gossip_public = self.monitoring == MonitoringMode::GossipPublic;
        if gossip_public != self.protocol.is_enabled() {
            return invalid("a gossip protocol is used exactly when monitoring is gossip_public");
        }
        let any_self_report = self.prompt_flags.self_report
            || self.roster.iter().any(|e| {
                e.params
                    .self_report
                    .is_some_and(|s| s != SelfReporter::None)
                    || e.flags.is_some_and(|f| f.self_report)
            });
        if any_self_report && !self.protocol.allows_self_report() {
            return invalid("self reports require the tones_plus_self_report protocol");
        }
        if any_self_report && self.game != GameKind::Donation {
            return invalid("self reports exist only in the donation game");
        }
        let binary_convention = self.prompt_flags.binary_convention
            || self
                .roster
                .iter()
                .any(|e| e.flags.is_some_and(|f| f.binary_convention));
        if binary_convention && self.protocol != ProtocolVariant::BinaryWithConvention {
            return invalid("binary_convention requires the binary_with_convention protocol");
        }
        let has_llm = agents
            .iter()
            .any(|a| matches!(a.policy, PolicySpec::Llm(_)));
        if has_llm && self.endpoint.is_none() {
            return invalid("llm policies need an endpoint");
        }
        let mode = self.schedule_mode();
        let market_mode = matches!(
            mode,
            ScheduleMode::BipartiteSingle | ScheduleMode::BipartiteFull
        );
        match (self.game, market_mode) {
            (GameKind::Market, false) => {
                return invalid("market games use bipartite_single or bipartite_full")
            }
            (GameKind::Market, true) => {}
            (_, true) => return invalid("bipartite schedules are for market games"),
            _ => {}
        }
        if self.game == GameKind::Donation && !mode.alternates_roles() {
            return invalid("donation games use donation or partition_alternating schedules");
        }
        if self.game != GameKind::Donation && mode.alternates_roles() {
            return invalid("role-alternating schedules are for the donation game");
        }
        for a in &agents {
            match (self.game, a.role) {
                (GameKind::Market, None) => {
                    return invalid(format!("'{}' needs a market role", a.name))
                }
                (GameKind::Market, Some(_)) => {}
                (_, Some(_)) => {
                    return invalid(format!("'{}': roles apply to market games only", a.name))
                }
                _ => {}
            }
        }
        if self.game == GameKind::Market {
            let sellers = agents
                .iter()
                .filter(|a| a.role == Some(MarketRole::Seller))
                .count();
            if sellers == 0 || sellers == agents.len() {
                return invalid("market games need at least one seller and one buyer");
            }
        }
        let _ = spec;
        Ok(())
    }
}
