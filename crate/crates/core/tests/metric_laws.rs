//! Algebraic properties of the answer metrics.

use kgqa_core::eval::{exact_match, f1, hits_at_1, macro_f1};
use proptest::prelude::*;

fn answers() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "A", " a", "b", "2", "2.0", "c"]), 0..5)
        .prop_map(|v| v.into_iter().map(str::to_owned).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn exact_match_implies_hit_and_full_f1(p in answers(), g in answers(), norm in any::<bool>()) {
        if exact_match(&p, &g, norm) {
            prop_assert!(hits_at_1(&p, &g, norm));
            prop_assert_eq!(f1(&p, &g, norm), 1.0);
        }
    }

    #[test]
    fn f1_is_symmetric_and_bounded(p in answers(), g in answers(), norm in any::<bool>()) {
        let x = f1(&p, &g, norm);
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - f1(&g, &p, norm)).abs() <= 1e-15);
        prop_assert_eq!(x > 0.0, hits_at_1(&p, &g, norm));
    }

    #[test]
    fn duplicates_do_not_change_scores(p in answers(), g in answers(), norm in any::<bool>()) {
        let mut doubled = p.clone();
        doubled.extend(p.iter().cloned());
        prop_assert_eq!(f1(&doubled, &g, norm), f1(&p, &g, norm));
        prop_assert_eq!(exact_match(&doubled, &g, norm), exact_match(&p, &g, norm));
    }

    #[test]
    fn normalization_only_adds_hits(p in answers(), g in answers()) {
        if hits_at_1(&p, &g, false) {
            prop_assert!(hits_at_1(&p, &g, true));
        }
    }

    #[test]
    fn macro_f1_is_the_mean(pairs in prop::collection::vec((answers(), answers()), 1..8)) {
        let mean = pairs.iter().map(|(p, g)| f1(p, g, true)).sum::<f64>() / pairs.len() as f64;
        prop_assert!((macro_f1(&pairs, true) - mean).abs() <= 1e-12);
    }
}
