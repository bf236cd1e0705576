mod common;

use common::oracles::{check_fixture, close, fixture};
use gossipnet::env::{market_payoff, MarketParams, Purchase, Quality};
use gossipnet::metrics::gini;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_match_naive_recount(f in fixture(), gamma in 0.5f64..=1.0) {
        check_fixture(&f, gamma)?;
    }

    #[test]
    fn gini_is_scale_invariant(x in prop::collection::vec(0.01f64..100.0, 1..12), alpha in 0.01f64..100.0) {
        let scaled: Vec<f64> = x.iter().map(|v| v * alpha).collect();
        prop_assert!(close(gini(&x), gini(&scaled)));
        prop_assert!((0.0..1.0).contains(&gini(&x)));
    }
}

#[test]
fn gini_of_one_zero_zero_is_two_thirds() {
    assert_eq!(gini(&[1.0, 0.0, 0.0]), 2.0 / 3.0);
    assert_eq!(gini(&[0.0, 0.0, 0.0]), 0.0);
    assert_eq!(gini(&[4.0, 4.0, 4.0, 4.0]), 0.0);
}

#[test]
fn market_matrix_is_the_product_choice_table() {
    let p = MarketParams::default();
    let table = [
        (Quality::High, Purchase::Customized, (2.0, 3.0)),
        (Quality::High, Purchase::Standardized, (0.0, 2.0)),
        (Quality::Low, Purchase::Customized, (3.0, 0.0)),
        (Quality::Low, Purchase::Standardized, (1.0, 1.0)),
        (Quality::High, Purchase::None, (0.0, 0.0)),
        (Quality::Low, Purchase::None, (0.0, 0.0)),
    ];
    for (q, b, want) in table {
        assert_eq!(market_payoff(q, b, &p), want, "{q:?} {b:?}");
    }
}
