use proptest::prelude::*;

use tabtool::detector::{train_detector, DetectorKind, FeatureVector};
use tabtool::eval::{answers_match, exact_match};
use tabtool::filter::{parse_predicate, render_predicate, CmpOp, Expr, Func};
use tabtool::reader::seq_log_prob;
use tabtool::table::{apply_row_filter, linearize, FilterLimits, Table};

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 '\"\\\\/#\\[\\]().,\n-]{0,8}"
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        any::<bool>().prop_map(Expr::Bool),
        text().prop_map(Expr::Str),
        (-1e6f64..1e6).prop_map(Expr::Num),
        text().prop_map(Expr::Column),
        (0usize..20).prop_map(Expr::Position),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::or(a, b)),
            (0..CmpOp::ALL.len(), inner.clone(), inner.clone())
                .prop_map(|(i, a, b)| Expr::compare(CmpOp::ALL[i], a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::contains(a, b)),
            (0..Func::ALL.len(), inner).prop_map(|(i, a)| Expr::call(Func::ALL[i], a)),
        ]
    })
}

fn table() -> impl Strategy<Value = Table> {
    (1usize..5, 0usize..25).prop_flat_map(|(cols, rows)| {
        prop::collection::vec(prop::collection::vec("[a-c0-9]{0,3}", cols), rows).prop_map(move |body| {
            let header = (0..cols).map(|c| format!("c{c}")).collect();
            Table::new("p", header, body).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn render_then_parse_is_identity(e in expr()) {
        let text = render_predicate(&e);
        prop_assert_eq!(parse_predicate(&text).unwrap(), e);
    }

    #[test]
    fn filters_keep_an_ordered_subset(t in table(), e in expr()) {
        let out = apply_row_filter(&t, &e, &FilterLimits::default());
        if out.applied {
            prop_assert!(out.table.num_rows() > 0);
            let mut it = t.rows().iter();
            for row in out.table.rows() {
                prop_assert!(it.any(|r| r == row));
            }
        } else {
            prop_assert_eq!(&out.table, &t);
        }
        prop_assert_eq!(out.table.columns(), t.columns());
    }

    #[test]
    fn linearization_is_monotone_in_budget(t in table(), a in 0usize..200, b in 0usize..200) {
        let (lo, hi) = (a.min(b), a.max(b));
        let small = linearize("how many rows", &t, lo);
        let large = linearize("how many rows", &t, hi);
        prop_assert!(small.rows_kept <= large.rows_kept);
        prop_assert!(large.rows_kept <= t.num_rows());
        if small.rows_kept > 0 {
            prop_assert!(small.token_count <= lo);
        }
        prop_assert_eq!(small.truncated, small.rows_kept < t.num_rows() || small.token_count > lo);
    }

    #[test]
    fn seq_log_prob_is_a_permutation_invariant_mean(mut v in prop::collection::vec(-30.0f64..=0.0, 1..40)) {
        let m = seq_log_prob(&v).unwrap();
        prop_assert!(m <= 0.0);
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(m >= lo - 1e-12);
        v.reverse();
        prop_assert!((seq_log_prob(&v).unwrap() - m).abs() < 1e-9);
    }

    #[test]
    fn single_answer_match_is_symmetric(a in "[ a-zA-Z0-9,.'\"]{0,10}", b in "[ a-zA-Z0-9,.'\"]{0,10}") {
        prop_assert_eq!(answers_match(&a, &b), answers_match(&b, &a));
        prop_assert!(answers_match(&a, &a));
    }

    #[test]
    fn multi_answers_match_in_any_order(items in prop::collection::vec("[a-z0-9]{1,4}", 1..5)) {
        let mut gold = items.clone();
        gold.reverse();
        prop_assert!(exact_match(&items.join("|"), &gold));
    }

    #[test]
    fn decisions_are_monotone_in_score(seed in 0u64..50) {
        let records: Vec<(FeatureVector, bool)> = (0..40u64)
            .map(|i| {
                let wrong = (i * 7 + seed) % 3 == 0;
                let f = FeatureVector { seq_log_prob: -((i % 13) as f64) / 4.0, row_count: ((i * 11 + seed) % 90) as usize };
                (f, wrong)
            })
            .collect();
        let model = train_detector(&records, DetectorKind::Combined).unwrap();
        if model.kind.is_linear() {
            for (f, _) in &records {
                let d = model.decide(f).unwrap();
                prop_assert_eq!(d.sigma, d.score >= model.threshold);
            }
        }
    }
}
