//! Evaluation metrics. Every function is a pure read of interaction records
//! and published messages, so the event log alone reproduces the summary.

use serde::{Deserialize, Serialize};

use crate::env::{Purchase, Quality};
use crate::gossip::honesty_label;
use crate::model::{
    discounted_return_indexed, AgentId, BinaryAction, GossipMessage, Indexing, InteractionRecord,
    Payload, RoundActions, Tone,
};

/// Cooperative decisions over all binary decisions (donors only in the
/// donation game, both players in the two-sided game).
pub fn cooperation_ratio(records: &[InteractionRecord]) -> Option<f64> {
    let (mut coop, mut total) = (0usize, 0usize);
    for r in records {
        for slot in 0..2 {
            if let Some(a) = r.actions.binary_decision(slot) {
                total += 1;
                coop += usize::from(a.is_cooperate());
            }
        }
    }
    (total > 0).then(|| coop as f64 / total as f64)
}

/// Cooperations minus defections over the agent's own acting-role decisions.
pub fn image_score(records: &[InteractionRecord], agent: AgentId) -> i64 {
    records
        .iter()
        .filter_map(|r| r.slot_of(agent).and_then(|s| r.actions.binary_decision(s)))
        .map(|a| if a.is_cooperate() { 1 } else { -1 })
        .sum()
}

/// `(round, reward)` for each participation of `agent`, in order.
pub fn reward_stream(records: &[InteractionRecord], agent: AgentId) -> Vec<(u32, f64)> {
    records
        .iter()
        .filter_map(|r| r.slot_of(agent).map(|s| (r.round, r.rewards[s])))
        .collect()
}

/// Mean reward per participation; 0 for an agent that never played.
pub fn reward_per_round(records: &[InteractionRecord], agent: AgentId) -> f64 {
    let stream = reward_stream(records, agent);
    if stream.is_empty() {
        0.0
    } else {
        stream.iter().map(|&(_, r)| r).sum::<f64>() / stream.len() as f64
    }
}

pub fn agent_discounted_return(
    records: &[InteractionRecord],
    agent: AgentId,
    gamma: f64,
    indexing: Indexing,
) -> f64 {
    discounted_return_indexed(&reward_stream(records, agent), gamma, indexing)
}

/// Sum of |Gi - Gj| over all ordered pairs, divided by 2 n sum(G).
/// Zero when the returns sum to zero; mixed-sign inputs are not clamped.
pub fn gini(returns: &[f64]) -> f64 {
    let n = returns.len();
    let total: f64 = returns.iter().sum();
    if n == 0 || total == 0.0 {
        return 0.0;
    }
    let mut diff = 0.0;
    for a in returns {
        for b in returns {
            diff += (a - b).abs();
        }
    }
    diff / (2.0 * n as f64 * total)
}

/// Ground-truth reading of `subject`'s behaviour in the interaction where
/// `witness` met it in `round`.
pub fn ground_truth(
    records: &[InteractionRecord],
    round: u32,
    witness: AgentId,
    subject: AgentId,
) -> Option<BinaryAction> {
    records
        .iter()
        .filter(|r| r.round == round && r.slot_of(subject).is_some())
        .find(|r| witness == subject || r.slot_of(witness).is_some())
        .and_then(|r| r.actions.cooperation_reading(r.slot_of(subject)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HonestyScope {
    /// Only donors' reports about themselves.
    SelfReports,
    /// Every claim-bearing message with a ground truth.
    AllClaims,
}

/// Truthful claim-bearing reports over claim-bearing reports.
pub fn honesty(
    records: &[InteractionRecord],
    messages: &[GossipMessage],
    scope: HonestyScope,
) -> Option<f64> {
    let (mut honest, mut total) = (0usize, 0usize);
    for m in messages {
        if scope == HonestyScope::SelfReports && !m.payload.is_self_report() {
            continue;
        }
        let Some(truth) = ground_truth(records, m.round, m.witness, m.subject) else {
            continue;
        };
        if let Ok(label) = honesty_label(m, truth) {
            total += 1;
            honest += usize::from(label);
        }
    }
    (total > 0).then(|| honest as f64 / total as f64)
}

/// Counts of witness messages per observed action. Tone runs fill the five
/// tone buckets; signal runs fill two buckets (bit 1, bit 0).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToneHistogram {
    pub on_cooperate: [u32; 5],
    pub on_defect: [u32; 5],
    pub bits_on_cooperate: [u32; 2],
    pub bits_on_defect: [u32; 2],
}

impl ToneHistogram {
    pub fn is_empty(&self) -> bool {
        self.on_cooperate
            .iter()
            .chain(&self.on_defect)
            .chain(&self.bits_on_cooperate)
            .chain(&self.bits_on_defect)
            .all(|&c| c == 0)
    }

    /// Per-column proportions; an empty column stays all zero.
    pub fn proportions(&self) -> ([f64; 5], [f64; 5]) {
        (normalize(&self.on_cooperate), normalize(&self.on_defect))
    }

    pub fn bit_proportions(&self) -> ([f64; 2], [f64; 2]) {
        (
            normalize(&self.bits_on_cooperate),
            normalize(&self.bits_on_defect),
        )
    }
}

fn normalize<const N: usize>(counts: &[u32; N]) -> [f64; N] {
    let total: u32 = counts.iter().sum();
    let mut out = [0.0; N];
    if total > 0 {
        for (o, &c) in out.iter_mut().zip(counts) {
            *o = c as f64 / total as f64;
        }
    }
    out
}

pub fn tone_proportions(
    messages: &[GossipMessage],
    records: &[InteractionRecord],
) -> ToneHistogram {
    let mut h = ToneHistogram::default();
    for m in messages {
        let Some(truth) = ground_truth(records, m.round, m.witness, m.subject) else {
            continue;
        };
        match (&m.payload, truth) {
            (Payload::Toned { tone, .. }, BinaryAction::Cooperate) => {
                h.on_cooperate[tone.index()] += 1
            }
            (Payload::Toned { tone, .. }, BinaryAction::Defect) => h.on_defect[tone.index()] += 1,
            (Payload::Binary { bit }, a) if *bit <= 1 => {
                let col = if a.is_cooperate() {
                    &mut h.bits_on_cooperate
                } else {
                    &mut h.bits_on_defect
                };
                col[usize::from(*bit == 0)] += 1;
            }
            _ => {}
        }
    }
    h
}

/// (high-quality rate over seller decisions, customized rate over buyer decisions).
pub fn market_rates(records: &[InteractionRecord]) -> (Option<f64>, Option<f64>) {
    let (mut n, mut high, mut custom) = (0usize, 0usize, 0usize);
    for r in records {
        if let RoundActions::Market { quality, purchase } = r.actions {
            n += 1;
            high += usize::from(quality == Quality::High);
            custom += usize::from(purchase == Purchase::Customized);
        }
    }
    if n == 0 {
        (None, None)
    } else {
        (Some(high as f64 / n as f64), Some(custom as f64 / n as f64))
    }
}

/// (mean I over pre-round investor resources, mean R over m*I for I > 0).
/// The multiplied amount m*I is recovered from the responder's reward.
pub fn investment_rates(records: &[InteractionRecord]) -> (Option<f64>, Option<f64>) {
    let mut inv = Vec::new();
    let mut ret = Vec::new();
    for r in records {
        if let RoundActions::Investment { invested, returned } = r.actions {
            if r.resources_before[0] > 0.0 {
                inv.push(invested / r.resources_before[0]);
            }
            if invested > 0.0 {
                let multiplied = r.rewards[1] + returned;
                ret.push(returned / multiplied);
            }
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    (mean(&inv), mean(&ret))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub stderr: f64,
    pub k: usize,
}

/// Mean and sample standard error s / sqrt(k). A single value gets stderr 0.
pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    let k = values.len();
    if k == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        log::warn!("aggregating a single seed; standard error reported as 0");
        return Some(Aggregate {
            mean,
            stderr: 0.0,
            k,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    Some(Aggregate {
        mean,
        stderr: (var / k as f64).sqrt(),
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryContext {
    pub n_agents: usize,
    pub gamma: f64,
    pub indexing: Indexing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub cooperation_ratio: Option<f64>,
    pub image_scores: Vec<i64>,
    pub image_score_mean: f64,
    pub reward_per_round: f64,
    pub discounted_returns: Vec<f64>,
    pub discounted_return_mean: f64,
    pub gini: f64,
    pub honesty: Option<f64>,
    pub tone_histogram: ToneHistogram,
    pub investment_ratio: Option<f64>,
    pub returned_ratio: Option<f64>,
    pub high_quality_rate: Option<f64>,
    pub customized_rate: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Full summary for one seed. Honesty is scoped to self-reports whenever the
/// run contains any.
pub fn summarize(
    records: &[InteractionRecord],
    messages: &[GossipMessage],
    ctx: &SummaryContext,
) -> MetricsSummary {
    let agents = 0..ctx.n_agents;
    let image_scores: Vec<i64> = agents.clone().map(|a| image_score(records, a)).collect();
    let discounted_returns: Vec<f64> = agents
        .clone()
        .map(|a| agent_discounted_return(records, a, ctx.gamma, ctx.indexing))
        .collect();
    let per_round: Vec<f64> = agents.map(|a| reward_per_round(records, a)).collect();
    let scope = if messages.iter().any(|m| m.payload.is_self_report()) {
        HonestyScope::SelfReports
    } else {
        HonestyScope::AllClaims
    };
    let (investment_ratio, returned_ratio) = investment_rates(records);
    let (high_quality_rate, customized_rate) = market_rates(records);
    MetricsSummary {
        cooperation_ratio: cooperation_ratio(records),
        image_score_mean: mean(&image_scores.iter().map(|&i| i as f64).collect::<Vec<_>>()),
        image_scores,
        reward_per_round: mean(&per_round),
        discounted_return_mean: mean(&discounted_returns),
        gini: gini(&discounted_returns),
        discounted_returns,
        honesty: honesty(records, messages, scope),
        tone_histogram: tone_proportions(messages, records),
        investment_ratio,
        returned_ratio,
        high_quality_rate,
        customized_rate,
    }
}

/// Fixed CSV column order of the per-seed summary.
pub const CSV_COLUMNS: &[&str] = &[
    "experiment",
    "seed",
    "cooperation_ratio",
    "image_score_mean",
    "reward_per_round",
    "discounted_return_mean",
    "gini",
    "honesty",
    "investment_ratio",
    "returned_ratio",
    "high_quality_rate",
    "customized_rate",
    "tone_c_praising",
    "tone_c_neutral",
    "tone_c_mocking",
    "tone_c_complaint",
    "tone_c_criticism",
    "tone_d_praising",
    "tone_d_neutral",
    "tone_d_mocking",
    "tone_d_complaint",
    "tone_d_criticism",
    "image_scores",
    "discounted_returns",
];

/// Numeric columns (everything between `seed` and the tone block
/// inclusive), used for aggregate rows.
pub fn numeric_values(s: &MetricsSummary) -> Vec<Option<f64>> {
    let (c, d) = s.tone_histogram.proportions();
    // signal-only runs leave the tone columns blank
    let h = &s.tone_histogram;
    let tones_present = h.on_cooperate.iter().chain(&h.on_defect).any(|&c| c > 0);
    let mut v = vec![
        s.cooperation_ratio,
        Some(s.image_score_mean),
        Some(s.reward_per_round),
        Some(s.discounted_return_mean),
        Some(s.gini),
        s.honesty,
        s.investment_ratio,
        s.returned_ratio,
        s.high_quality_rate,
        s.customized_rate,
    ];
    v.extend(c.iter().chain(&d).map(|&x| tones_present.then_some(x)));
    v
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_row(experiment: &str, seed: &str, s: &MetricsSummary) -> Vec<String> {
    let mut row = vec![experiment.to_string(), seed.to_string()];
    row.extend(numeric_values(s).into_iter().map(fmt_opt));
    row.push(
        s.image_scores
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    );
    row.push(
        s.discounted_returns
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(";"),
    );
    row
}

/// Mean and standard-error rows across seeds, column by column. A column is
/// aggregated only over seeds where it is defined.
pub fn aggregate_rows(experiment: &str, summaries: &[MetricsSummary]) -> [Vec<String>; 2] {
    let columns: Vec<Vec<Option<f64>>> = summaries.iter().map(numeric_values).collect();
    let width = columns.first().map_or(0, |c| c.len());
    let mut mean_row = vec![experiment.to_string(), "mean".to_string()];
    let mut se_row = vec![experiment.to_string(), "stderr".to_string()];
    for i in 0..width {
        let vals: Vec<f64> = columns.iter().filter_map(|c| c[i]).collect();
        let agg = aggregate(&vals);
        mean_row.push(fmt_opt(agg.map(|a| a.mean)));
        se_row.push(fmt_opt(agg.map(|a| a.stderr)));
    }
    mean_row.extend([String::new(), String::new()]);
    se_row.extend([String::new(), String::new()]);
    [mean_row, se_row]
}

pub fn tone_label(i: usize) -> &'static str {
    Tone::ALL[i].as_str()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GossipMessage;

    fn donation(
        round: u32,
        donor: AgentId,
        recipient: AgentId,
        a: BinaryAction,
    ) -> InteractionRecord {
        let rewards = if a.is_cooperate() {
            [-1.0, 5.0]
        } else {
            [0.0, 0.0]
        };
        InteractionRecord {
            round,
            participants: [donor, recipient],
            actions: RoundActions::Donation { action: a },
            rewards,
            resources_before: [10.0, 10.0],
            resources_after: [10.0 + rewards[0], 10.0 + rewards[1]],
        }
    }

    #[test]
    fn cooperation_and_image() {
        use BinaryAction::*;
        let recs: Vec<_> = [Cooperate, Cooperate, Cooperate, Defect]
            .iter()
            .enumerate()
            .map(|(i, &a)| donation(i as u32 + 1, 0, i + 1, a))
            .collect();
        assert_eq!(cooperation_ratio(&recs), Some(0.75));
        assert_eq!(image_score(&recs, 0), 2);
        // recipients have no acting decisions
        assert_eq!(image_score(&recs, 1), 0);
        assert_eq!(cooperation_ratio(&[]), None);
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3.0, 3.0, 3.0]), 0.0);
        assert!((gini(&[1.0, 0.0, 0.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(gini(&[0.0; 9]), 0.0);
    }

    #[test]
    fn rates_fixture() {
        let r = InteractionRecord {
            round: 1,
            participants: [0, 1],
            actions: RoundActions::Investment {
                invested: 10.0,
                returned: 15.0,
            },
            rewards: [5.0, 15.0],
            resources_before: [20.0, 20.0],
            resources_after: [25.0, 35.0],
        };
        assert_eq!(investment_rates(&[r]), (Some(0.5), Some(0.5)));
    }

    #[test]
    fn aggregate_examples() {
        let a = aggregate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a.mean, 2.0);
        assert!((a.stderr - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(aggregate(&[4.0; 5]).unwrap().stderr, 0.0);
        assert_eq!(aggregate(&[7.0]).unwrap().stderr, 0.0);
    }

    #[test]
    fn tone_fixture() {
        let recs: Vec<_> = (1..=4)
            .map(|t| donation(t, 0, t as usize, BinaryAction::Cooperate))
            .collect();
        let tones = [
            Tone::Praising,
            Tone::Praising,
            Tone::Praising,
            Tone::Neutral,
        ];
        let msgs: Vec<_> = tones
            .iter()
            .enumerate()
            .map(|(i, &tone)| {
                GossipMessage::new(
                    i as u32 + 1,
                    i + 1,
                    0,
                    Payload::Toned {
                        tone,
                        text: String::new(),
                    },
                )
                .unwrap()
            })
            .collect();
        let (c, d) = tone_proportions(&msgs, &recs).proportions();
        assert_eq!(c, [0.75, 0.25, 0.0, 0.0, 0.0]);
        assert_eq!(d, [0.0; 5]);
        assert!(tone_proportions(&[], &recs).is_empty());
    }
}
