mod common;

use proptest::prelude::*;

use gft_lab_core::exactprob::{enumerate_events, pr_sellers_top};
use gft_lab_core::mechanisms::{check_ir, check_wbb};
use gft_lab_core::{btr, first_best, mcafee_tr, str_mechanism, Profile, Rational};

use common::brute_force_gft;

fn exact(values: &[i64]) -> Vec<Rational> {
    values.iter().map(|&v| Rational::from_integer(v.into())).collect()
}

proptest! {
    #[test]
    fn first_best_matches_subset_enumeration(
        buyers in prop::collection::vec(0i64..50, 1..9),
        sellers in prop::collection::vec(0i64..50, 1..9),
    ) {
        let p = Profile::new(exact(&buyers), exact(&sellers)).unwrap();
        let oracle = Rational::from_integer(brute_force_gft(&buyers, &sellers).into());
        prop_assert_eq!(first_best(&p).gft, oracle);
    }

    #[test]
    fn mechanisms_never_beat_first_best_and_lose_at_most_one_pair(
        buyers in prop::collection::vec(0i64..50, 1..9),
        sellers in prop::collection::vec(0i64..50, 1..9),
    ) {
        let p = Profile::new(exact(&buyers), exact(&sellers)).unwrap();
        let opt = first_best(&p);
        for o in [str_mechanism(&p), btr(&p), mcafee_tr(&p)] {
            prop_assert!(o.gft() <= &opt.gft);
            prop_assert!(o.allocation.trade_size + 1 >= opt.trade_size);
            prop_assert!(check_ir(&o, &p).passed());
            prop_assert!(check_wbb(&o).passed());
        }
    }
}

#[test]
fn sellers_top_formula_against_enumeration() {
    // tiny markets walked label by label; p = 1 keeps the windows valid
    for (m, n, c) in [(2, 1, 1), (3, 2, 1), (4, 2, 2), (5, 1, 2), (6, 3, 1)] {
        let e = enumerate_events(m, n, c, 1).unwrap();
        assert_eq!(e.sellers_top, pr_sellers_top(m, n, c).unwrap(), "(m,n,c)=({m},{n},{c})");
    }
}
