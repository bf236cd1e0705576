//! Schedule invariants checked by direct scan rather than `Schedule::validate`.

use std::collections::{BTreeMap, HashSet};

use gossipnet::scheduler::{donation_schedule, simultaneous_schedule, Schedule};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Every unordered pair at most once, nobody twice in a round.
pub fn no_repeats(s: &Schedule) -> bool {
    let mut seen = HashSet::new();
    s.rounds.iter().all(|r| {
        let mut busy = HashSet::new();
        r.pairs.iter().all(|p| {
            let key = (p.first.min(p.second), p.first.max(p.second));
            p.first != p.second && seen.insert(key) && busy.insert(p.first) && busy.insert(p.second)
        })
    })
}

/// Roles per agent in participation order: true = donor.
pub fn roles(s: &Schedule) -> BTreeMap<usize, Vec<bool>> {
    let mut out: BTreeMap<usize, Vec<bool>> = BTreeMap::new();
    for r in &s.rounds {
        for p in &r.pairs {
            out.entry(p.first).or_default().push(true);
            out.entry(p.second).or_default().push(false);
        }
    }
    out
}

pub fn alternates(seq: &[bool]) -> bool {
    seq.windows(2).all(|w| w[0] != w[1])
}

/// Random (n, T, seed) with T at most C(n, 2).
pub fn instance() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=10).prop_flat_map(|n| (Just(n), 1..=n * (n - 1) / 2, any::<u64>()))
}

pub fn check_donation(n: usize, t: usize, seed: u64) -> Result<(), TestCaseError> {
    let s = donation_schedule(n, t, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(s.rounds.len(), t);
    prop_assert!(s.rounds.iter().all(|r| r.pairs.len() == 1));
    prop_assert!(no_repeats(&s));
    for seq in roles(&s).values() {
        prop_assert!(alternates(seq));
    }
    prop_assert!(s.validate().is_ok());
    Ok(())
}

pub fn check_simultaneous(n: usize, t: usize, seed: u64) -> Result<(), TestCaseError> {
    let s = simultaneous_schedule(n, t, seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(s.rounds.len(), t);
    prop_assert!(no_repeats(&s));
    Ok(())
}

/// n = 9, T = 36 covers all 36 pairs with 4 donor turns per agent.
pub fn covers_k9(seed: u64) -> Result<(), String> {
    let s = donation_schedule(9, 36, seed).map_err(|e| e.to_string())?;
    let pairs: HashSet<(usize, usize)> = s
        .rounds
        .iter()
        .flat_map(|r| &r.pairs)
        .map(|p| (p.first.min(p.second), p.first.max(p.second)))
        .collect();
    if pairs.len() != 36 {
        return Err(format!("seed {seed}: {} distinct pairs", pairs.len()));
    }
    for (agent, seq) in roles(&s) {
        let donor = seq.iter().filter(|&&d| d).count();
        if seq.len() != 8 || donor != 4 {
            return Err(format!(
                "seed {seed}: agent {agent} has {} dyads, {donor} as donor",
                seq.len()
            ));
        }
    }
    Ok(())
}
