//! Pairing schedules.
//!
//! All schedules are generated up front from a seed and never repeat an
//! unordered pair. Donation schedules additionally force every agent to
//! alternate donor and recipient roles over its own participations.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::AgentId;
use crate::rng::{self, SimRng};

pub const DEFAULT_RESTART_BUDGET: usize = 1000;
/// Search nodes explored per restart before giving up on that attempt.
const NODE_BUDGET: usize = 50_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("infeasible schedule: {requested} rounds requested but at most {max} are possible")]
    Infeasible { requested: usize, max: usize },
    #[error("no schedule found after {restarts} restarts")]
    SchedulingDeadlock { restarts: usize },
    #[error("invalid schedule input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// One ordered (donor, recipient) dyad per round with role alternation.
    Donation,
    /// One unordered dyad per round.
    Simultaneous,
    /// All agents split into disjoint unordered pairs each round.
    Partition,
    /// All agents split into disjoint (donor, recipient) pairs each round,
    /// keeping per-agent role alternation.
    PartitionAlternating,
    /// One (seller, buyer) dyad per round.
    BipartiteSingle,
    /// A maximal seller-buyer matching every round.
    BipartiteFull,
}

impl ScheduleMode {
    pub fn alternates_roles(self) -> bool {
        matches!(
            self,
            ScheduleMode::Donation | ScheduleMode::PartitionAlternating
        )
    }

    pub fn is_partition(self) -> bool {
        matches!(
            self,
            ScheduleMode::Partition | ScheduleMode::PartitionAlternating
        )
    }
}

/// One dyad. `first` is the donor, investor, seller or first player.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pairing {
    pub first: AgentId,
    pub second: AgentId,
}

impl Pairing {
    pub fn unordered(self) -> (AgentId, AgentId) {
        (self.first.min(self.second), self.first.max(self.second))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledRound {
    pub round: u32,
    pub pairs: Vec<Pairing>,
    pub idle: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: ScheduleMode,
    pub n_agents: usize,
    pub rounds: Vec<ScheduledRound>,
}

fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

fn idle_set(n: usize, pairs: &[Pairing]) -> Vec<AgentId> {
    let busy: HashSet<AgentId> = pairs.iter().flat_map(|p| [p.first, p.second]).collect();
    (0..n).filter(|a| !busy.contains(a)).collect()
}

fn build(mode: ScheduleMode, n: usize, rounds: Vec<Vec<Pairing>>) -> Schedule {
    let rounds = rounds
        .into_iter()
        .enumerate()
        .map(|(i, pairs)| ScheduledRound {
            round: i as u32 + 1,
            idle: idle_set(n, &pairs),
            pairs,
        })
        .collect();
    Schedule {
        mode,
        n_agents: n,
        rounds,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum NextRole {
    Any,
    Donor,
    Recipient,
}

fn can_donate(r: NextRole) -> bool {
    r != NextRole::Recipient
}

fn can_receive(r: NextRole) -> bool {
    r != NextRole::Donor
}

/// Randomised depth-first search over the sequence of dyads.
struct DyadSearch<'a> {
    n: usize,
    target: usize,
    used: Vec<bool>,
    next: Vec<NextRole>,
    chosen: Vec<Pairing>,
    nodes: usize,
    rng: &'a mut SimRng,
}

impl DyadSearch<'_> {
    fn pair_index(&self, a: AgentId, b: AgentId) -> usize {
        let (i, j) = (a.min(b), a.max(b));
        i * self.n + j
    }

    fn candidates(&mut self) -> Vec<Pairing> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.used[self.pair_index(i, j)] {
                    continue;
                }
                let (ri, rj) = (self.next[i], self.next[j]);
                let forward = can_donate(ri) && can_receive(rj);
                let backward = can_donate(rj) && can_receive(ri);
                match (forward, backward) {
                    (true, true) => {
                        if self.rng.random_bool(0.5) {
                            out.push(Pairing {
                                first: i,
                                second: j,
                            });
                        } else {
                            out.push(Pairing {
                                first: j,
                                second: i,
                            });
                        }
                    }
                    (true, false) => out.push(Pairing {
                        first: i,
                        second: j,
                    }),
                    (false, true) => out.push(Pairing {
                        first: j,
                        second: i,
                    }),
                    (false, false) => {}
                }
            }
        }
        out.shuffle(self.rng);
        out
    }

    fn solve(&mut self) -> bool {
        if self.chosen.len() == self.target {
            return true;
        }
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            return false;
        }
        for p in self.candidates() {
            let idx = self.pair_index(p.first, p.second);
            let saved = (self.next[p.first], self.next[p.second]);
            self.used[idx] = true;
            self.next[p.first] = NextRole::Recipient;
            self.next[p.second] = NextRole::Donor;
            self.chosen.push(p);
            if self.solve() {
                return true;
            }
            self.chosen.pop();
            self.next[p.first] = saved.0;
            self.next[p.second] = saved.1;
            self.used[idx] = false;
            if self.nodes > NODE_BUDGET {
                return false;
            }
        }
        false
    }
}

/// Single-dyad donation schedule with per-agent role alternation.
pub fn donation_schedule(n: usize, rounds: usize, seed: u64) -> Result<Schedule, ScheduleError> {
    donation_schedule_with_budget(n, rounds, seed, DEFAULT_RESTART_BUDGET)
}

pub fn donation_schedule_with_budget(
    n: usize,
    rounds: usize,
    seed: u64,
    restarts: usize,
) -> Result<Schedule, ScheduleError> {
    check_population(n)?;
    let max = pair_count(n);
    if rounds > max {
        return Err(ScheduleError::Infeasible {
            requested: rounds,
            max,
        });
    }
    let mut rng = rng::stream(seed, "schedule/donation");
    for _ in 0..restarts.max(1) {
        let mut search = DyadSearch {
            n,
            target: rounds,
            used: vec![false; n * n],
            next: vec![NextRole::Any; n],
            chosen: Vec::with_capacity(rounds),
            nodes: 0,
            rng: &mut rng,
        };
        if search.solve() {
            let chosen = std::mem::take(&mut search.chosen);
            return Ok(build(
                ScheduleMode::Donation,
                n,
                chosen.into_iter().map(|p| vec![p]).collect(),
            ));
        }
    }
    Err(ScheduleError::SchedulingDeadlock { restarts })
}

/// Single unordered dyad per round, never repeating a pair.
pub fn simultaneous_schedule(
    n: usize,
    rounds: usize,
    seed: u64,
) -> Result<Schedule, ScheduleError> {
    check_population(n)?;
    let max = pair_count(n);
    if rounds > max {
        return Err(ScheduleError::Infeasible {
            requested: rounds,
            max,
        });
    }
    let mut rng = rng::stream(seed, "schedule/simultaneous");
    let mut pairs: Vec<Pairing> = (0..n)
        .flat_map(|i| {
            ((i + 1)..n).map(move |j| Pairing {
                first: i,
                second: j,
            })
        })
        .collect();
    pairs.shuffle(&mut rng);
    pairs.truncate(rounds);
    let pairs = pairs
        .into_iter()
        .map(|p| {
            if rng.random_bool(0.5) {
                p
            } else {
                Pairing {
                    first: p.second,
                    second: p.first,
                }
            }
        })
        .map(|p| vec![p])
        .collect();
    Ok(build(ScheduleMode::Simultaneous, n, pairs))
}

/// Random partition of `available` into disjoint pairs. With an odd count one
/// uniformly chosen agent is left idle.
pub fn partition_round(available: &[AgentId], rng: &mut SimRng) -> (Vec<Pairing>, Vec<AgentId>) {
    let mut agents = available.to_vec();
    agents.shuffle(rng);
    let idle = if agents.len() % 2 == 1 {
        vec![agents.pop().expect("odd, nonempty")]
    } else {
        Vec::new()
    };
    let pairs = agents
        .chunks_exact(2)
        .map(|c| Pairing {
            first: c[0],
            second: c[1],
        })
        .collect();
    (pairs, idle)
}

/// Upper bound on partition rounds without a repeated pair.
fn partition_round_limit(n: usize, alternate_roles: bool) -> usize {
    match (n.is_multiple_of(2), alternate_roles) {
        // Everyone plays every round, so every role flips every round: the
        // donor set of round t is the recipient set of round t+1 and all
        // pairs cross one fixed bipartition, which holds only (n/2)^2 pairs.
        (true, true) => n / 2,
        (true, false) => n - 1,
        (false, _) => n,
    }
}

/// Full-partition schedule: every round splits all agents into disjoint
/// pairs, no pair repeats across the schedule.
pub fn partition_schedule(
    n: usize,
    rounds: usize,
    seed: u64,
    alternate_roles: bool,
) -> Result<Schedule, ScheduleError> {
    check_population(n)?;
    let max = partition_round_limit(n, alternate_roles);
    if rounds > max {
        return Err(ScheduleError::Infeasible {
            requested: rounds,
            max,
        });
    }
    let mode = if alternate_roles {
        ScheduleMode::PartitionAlternating
    } else {
        ScheduleMode::Partition
    };
    let mut rng = rng::stream(seed, "schedule/partition");
    'restart: for _ in 0..DEFAULT_RESTART_BUDGET {
        let mut used: HashSet<(AgentId, AgentId)> = HashSet::new();
        let mut next = vec![NextRole::Any; n];
        let mut out = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let mut order: Vec<AgentId> = (0..n).collect();
            order.shuffle(&mut rng);
            // the idle agent (odd n) is the one left over by the matching search
            let Some(pairs) = match_round(&order, &used, &next, alternate_roles, &mut rng) else {
                continue 'restart;
            };
            for p in &pairs {
                used.insert(p.unordered());
                if alternate_roles {
                    next[p.first] = NextRole::Recipient;
                    next[p.second] = NextRole::Donor;
                }
            }
            out.push(pairs);
        }
        return Ok(build(mode, n, out));
    }
    Err(ScheduleError::SchedulingDeadlock {
        restarts: DEFAULT_RESTART_BUDGET,
    })
}

/// Perfect (or near-perfect for odd counts) matching over `order` avoiding
/// used pairs, searched depth-first in the given random order.
fn match_round(
    order: &[AgentId],
    used: &HashSet<(AgentId, AgentId)>,
    next: &[NextRole],
    alternate_roles: bool,
    rng: &mut SimRng,
) -> Option<Vec<Pairing>> {
    fn orient(a: AgentId, b: AgentId, next: &[NextRole], alt: bool, flip: bool) -> Option<Pairing> {
        if !alt {
            return Some(if flip {
                Pairing {
                    first: b,
                    second: a,
                }
            } else {
                Pairing {
                    first: a,
                    second: b,
                }
            });
        }
        let fwd = can_donate(next[a]) && can_receive(next[b]);
        let bwd = can_donate(next[b]) && can_receive(next[a]);
        match (fwd, bwd) {
            (true, true) => Some(if flip {
                Pairing {
                    first: b,
                    second: a,
                }
            } else {
                Pairing {
                    first: a,
                    second: b,
                }
            }),
            (true, false) => Some(Pairing {
                first: a,
                second: b,
            }),
            (false, true) => Some(Pairing {
                first: b,
                second: a,
            }),
            (false, false) => None,
        }
    }

    fn go(
        remaining: &mut Vec<AgentId>,
        idle_left: bool,
        used: &HashSet<(AgentId, AgentId)>,
        next: &[NextRole],
        alt: bool,
        flips: &[bool],
        acc: &mut Vec<Pairing>,
    ) -> bool {
        let Some(&a) = remaining.first() else {
            return true;
        };
        for k in 1..remaining.len() {
            let b = remaining[k];
            if used.contains(&(a.min(b), a.max(b))) {
                continue;
            }
            let Some(p) = orient(a, b, next, alt, flips[a]) else {
                continue;
            };
            remaining.remove(k);
            remaining.remove(0);
            acc.push(p);
            if go(remaining, idle_left, used, next, alt, flips, acc) {
                return true;
            }
            acc.pop();
            remaining.insert(0, a);
            remaining.insert(k, b);
        }
        if idle_left {
            // leave `a` idle
            remaining.remove(0);
            if go(remaining, false, used, next, alt, flips, acc) {
                return true;
            }
            remaining.insert(0, a);
        }
        false
    }

    let flips: Vec<bool> = (0..next.len()).map(|_| rng.random_bool(0.5)).collect();
    let mut remaining = order.to_vec();
    let mut acc = Vec::new();
    let odd = order.len() % 2 == 1;
    go(
        &mut remaining,
        odd,
        used,
        next,
        alternate_roles,
        &flips,
        &mut acc,
    )
    .then_some(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketMatching {
    SingleDyad,
    FullMatching,
}

/// Seller-buyer schedule. Pairs are (seller, buyer); no pair meets twice.
pub fn bipartite_schedule(
    sellers: &[AgentId],
    buyers: &[AgentId],
    rounds: usize,
    seed: u64,
    matching: MarketMatching,
) -> Result<Schedule, ScheduleError> {
    if sellers.is_empty() || buyers.is_empty() {
        return Err(ScheduleError::InvalidInput(
            "need at least one seller and one buyer".into(),
        ));
    }
    let overlap = sellers.iter().any(|s| buyers.contains(s));
    if overlap {
        return Err(ScheduleError::InvalidInput(
            "an agent cannot be both seller and buyer".into(),
        ));
    }
    let n = sellers.iter().chain(buyers).copied().max().unwrap_or(0) + 1;
    let mut rng = rng::stream(seed, "schedule/bipartite");
    match matching {
        MarketMatching::SingleDyad => {
            let max = sellers.len() * buyers.len();
            if rounds > max {
                return Err(ScheduleError::Infeasible {
                    requested: rounds,
                    max,
                });
            }
            let mut pairs: Vec<Pairing> = sellers
                .iter()
                .flat_map(|&s| {
                    buyers.iter().map(move |&b| Pairing {
                        first: s,
                        second: b,
                    })
                })
                .collect();
            pairs.shuffle(&mut rng);
            pairs.truncate(rounds);
            Ok(build(
                ScheduleMode::BipartiteSingle,
                n,
                pairs.into_iter().map(|p| vec![p]).collect(),
            ))
        }
        MarketMatching::FullMatching => {
            let (small, big, sellers_small) = if sellers.len() <= buyers.len() {
                (sellers.to_vec(), buyers.to_vec(), true)
            } else {
                (buyers.to_vec(), sellers.to_vec(), false)
            };
            let max = big.len();
            if rounds > max {
                return Err(ScheduleError::Infeasible {
                    requested: rounds,
                    max,
                });
            }
            let (mut small, mut big) = (small, big);
            small.shuffle(&mut rng);
            big.shuffle(&mut rng);
            let mut offsets: Vec<usize> = (0..big.len()).collect();
            offsets.shuffle(&mut rng);
            let out = offsets[..rounds]
                .iter()
                .map(|&off| {
                    small
                        .iter()
                        .enumerate()
                        .map(|(k, &a)| {
                            let b = big[(k + off) % big.len()];
                            if sellers_small {
                                Pairing {
                                    first: a,
                                    second: b,
                                }
                            } else {
                                Pairing {
                                    first: b,
                                    second: a,
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            Ok(build(ScheduleMode::BipartiteFull, n, out))
        }
    }
}

fn check_population(n: usize) -> Result<(), ScheduleError> {
    if n < 2 {
        return Err(ScheduleError::InvalidInput(format!(
            "need at least 2 agents, got {n}"
        )));
    }
    Ok(())
}

impl Schedule {
    /// Check every structural invariant; returns the list of violations.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        let mut seen = HashSet::new();
        for r in &self.rounds {
            let mut busy = HashSet::new();
            for p in &r.pairs {
                if p.first == p.second {
                    problems.push(format!(
                        "round {}: agent {} paired with itself",
                        r.round, p.first
                    ));
                }
                if !seen.insert(p.unordered()) {
                    problems.push(format!(
                        "round {}: pair {:?} repeats",
                        r.round,
                        p.unordered()
                    ));
                }
                for a in [p.first, p.second] {
                    if a >= self.n_agents {
                        problems.push(format!("round {}: agent {a} out of range", r.round));
                    }
                    if !busy.insert(a) {
                        problems.push(format!("round {}: agent {a} appears twice", r.round));
                    }
                }
            }
            if self.mode.is_partition() && r.idle.len() != self.n_agents % 2 {
                problems.push(format!(
                    "round {}: idle set has {} agents, expected {}",
                    r.round,
                    r.idle.len(),
                    self.n_agents % 2
                ));
            }
            if matches!(
                self.mode,
                ScheduleMode::Donation | ScheduleMode::Simultaneous | ScheduleMode::BipartiteSingle
            ) && r.pairs.len() != 1
            {
                problems.push(format!("round {}: expected a single dyad", r.round));
            }
        }
        if self.mode.alternates_roles() {
            for (agent, roles) in self.role_sequences().iter().enumerate() {
                if roles.windows(2).any(|w| w[0] == w[1]) {
                    problems.push(format!("agent {agent}: roles do not alternate ({roles:?})"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    /// Per agent, the sequence of slots it occupied: 'D' for first, 'R' for second.
    pub fn role_sequences(&self) -> Vec<Vec<char>> {
        let mut seqs = vec![Vec::new(); self.n_agents];
        for r in &self.rounds {
            for p in &r.pairs {
                seqs[p.first].push('D');
                seqs[p.second].push('R');
            }
        }
        seqs
    }

    pub fn participations(&self, agent: AgentId) -> usize {
        self.rounds
            .iter()
            .flat_map(|r| &r.pairs)
            .filter(|p| p.first == agent || p.second == agent)
            .count()
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }
}
