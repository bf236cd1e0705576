//! Independent recounts of the metrics, shared by the proptests and the
//! acceptance harness.

use gossipnet::env::{donation_payoff, ir_payoff, DonationParams};
use gossipnet::metrics::{
    agent_discounted_return, cooperation_ratio, gini, image_score, summarize, tone_proportions,
    SummaryContext,
};
use gossipnet::model::{
    BinaryAction, GossipMessage, Indexing, InteractionRecord, Payload, RoundActions, Tone,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub n: usize,
    pub records: Vec<InteractionRecord>,
    pub messages: Vec<GossipMessage>,
}

pub fn action(bit: bool) -> BinaryAction {
    if bit {
        BinaryAction::Cooperate
    } else {
        BinaryAction::Defect
    }
}

/// Random population history: one dyad per round, random actions, and a
/// toned witness message per observed action.
pub fn fixture() -> impl Strategy<Value = Fixture> {
    (2usize..8, any::<bool>())
        .prop_flat_map(|(n, two_sided)| {
            let round = (0..n, 1..n, any::<[bool; 2]>(), 0usize..5, 0usize..5);
            (
                Just(n),
                Just(two_sided),
                prop::collection::vec(round, 1..30),
            )
        })
        .prop_map(|(n, two_sided, rounds)| {
            let p = DonationParams::default();
            let mut levels = vec![p.endowment; n];
            let mut records = Vec::new();
            let mut messages = Vec::new();
            for (i, (a, offset, bits, t0, t1)) in rounds.into_iter().enumerate() {
                let b = (a + offset) % n;
                let round = i as u32 + 1;
                let (actions, rewards) = if two_sided {
                    let (x, y) = (action(bits[0]), action(bits[1]));
                    (
                        RoundActions::Simultaneous { actions: [x, y] },
                        ir_payoff(x, y, &p),
                    )
                } else {
                    (
                        RoundActions::Donation {
                            action: action(bits[0]),
                        },
                        donation_payoff(action(bits[0]), &p),
                    )
                };
                let before = [levels[a], levels[b]];
                levels[a] += rewards.0;
                levels[b] += rewards.1;
                records.push(InteractionRecord {
                    round,
                    participants: [a, b],
                    actions,
                    rewards: [rewards.0, rewards.1],
                    resources_before: before,
                    resources_after: [levels[a], levels[b]],
                });
                let tone = |k: usize| Payload::Toned {
                    tone: Tone::ALL[k],
                    text: "noted".into(),
                };
                messages.push(GossipMessage::new(round, b, a, tone(t0)).unwrap());
                if two_sided {
                    messages.push(GossipMessage::new(round, a, b, tone(t1)).unwrap());
                }
            }
            Fixture {
                n,
                records,
                messages,
            }
        })
}

// Naive recounts, written against the raw records rather than the helpers.

pub fn naive_gini(x: &[f64]) -> f64 {
    // sorted-rank identity: sum_ij |xi - xj| = 2 sum_k (2k - n - 1) x_(k)
    let n = x.len() as f64;
    let total: f64 = x.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let weighted: f64 = s
        .iter()
        .enumerate()
        .map(|(k, v)| (2.0 * (k as f64 + 1.0) - n - 1.0) * v)
        .sum();
    weighted / (n * total)
}

pub fn naive_image(f: &Fixture, agent: usize) -> i64 {
    let mut score = 0;
    for r in &f.records {
        let acted: Vec<BinaryAction> = match r.actions {
            RoundActions::Donation { action } if r.participants[0] == agent => vec![action],
            RoundActions::Simultaneous { actions } => (0..2)
                .filter(|&s| r.participants[s] == agent)
                .map(|s| actions[s])
                .collect(),
            _ => vec![],
        };
        for a in acted {
            score += if a == BinaryAction::Cooperate { 1 } else { -1 };
        }
    }
    score
}

pub fn naive_cooperation(f: &Fixture) -> f64 {
    let mut all = Vec::new();
    for r in &f.records {
        match r.actions {
            RoundActions::Donation { action } => all.push(action),
            RoundActions::Simultaneous { actions } => all.extend(actions),
            _ => {}
        }
    }
    all.iter()
        .filter(|a| **a == BinaryAction::Cooperate)
        .count() as f64
        / all.len() as f64
}

pub fn naive_return(f: &Fixture, agent: usize, gamma: f64) -> f64 {
    let mut k = 0;
    let mut g = 0.0;
    for r in &f.records {
        for s in 0..2 {
            if r.participants[s] == agent {
                g += gamma.powi(k) * r.rewards[s];
                k += 1;
            }
        }
    }
    g
}

/// Per observed action, fraction of messages in each tone.
pub fn naive_tones(f: &Fixture) -> [[f64; 5]; 2] {
    let mut counts = [[0u32; 5]; 2];
    for m in &f.messages {
        let r = f.records.iter().find(|r| r.round == m.round).unwrap();
        let slot = if r.participants[0] == m.subject { 0 } else { 1 };
        let truth = match r.actions {
            RoundActions::Donation { action } => action,
            RoundActions::Simultaneous { actions } => actions[slot],
            _ => unreachable!(),
        };
        let Payload::Toned { tone, .. } = &m.payload else {
            unreachable!()
        };
        let k = Tone::ALL.iter().position(|t| t == tone).unwrap();
        counts[usize::from(truth == BinaryAction::Defect)][k] += 1;
    }
    counts.map(|row| {
        let total: u32 = row.iter().sum();
        row.map(|c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
    })
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Every helper against its recount on one fixture.
pub fn check_fixture(f: &Fixture, gamma: f64) -> Result<(), TestCaseError> {
    prop_assert!(close(
        cooperation_ratio(&f.records).unwrap(),
        naive_cooperation(f)
    ));
    let mut returns = Vec::new();
    for agent in 0..f.n {
        prop_assert_eq!(image_score(&f.records, agent), naive_image(f, agent));
        let g = agent_discounted_return(&f.records, agent, gamma, Indexing::Participation);
        prop_assert!(
            close(g, naive_return(f, agent, gamma)),
            "agent {} {} vs {}",
            agent,
            g,
            naive_return(f, agent, gamma)
        );
        returns.push(g);
    }
    prop_assert!(close(gini(&returns), naive_gini(&returns)));
    let (c, d) = tone_proportions(&f.messages, &f.records).proportions();
    let [nc, nd] = naive_tones(f);
    for k in 0..5 {
        prop_assert!(close(c[k], nc[k]) && close(d[k], nd[k]));
    }
    let ctx = SummaryContext {
        n_agents: f.n,
        gamma,
        indexing: Indexing::Participation,
    };
    let s = summarize(&f.records, &f.messages, &ctx);
    prop_assert!(close(s.gini, naive_gini(&returns)));
    Ok(())
}
