mod common;

use common::*;
use proptest::prelude::*;
use rulenet::rules::{CompiledRuleSet, Granularity, Polarity, RuleSpec, Scope};

#[test]
fn annotate_intent_matches_brute_force() {
    let (mismatches, fired) = compare_with_brute_force(1000, 21);
    assert_eq!(mismatches, 0);
    assert!(fired > 300, "only {fired} sentences matched a rule");
}

fn slot_rule(id: &str, pattern: &str, tags: &[(usize, &str)]) -> RuleSpec {
    RuleSpec {
        id: id.into(),
        scope: Scope::Slot,
        pattern: pattern.into(),
        retag: tags[0].1.into(),
        polarity: Polarity::Positive,
        group_tags: tags.iter().map(|(g, t)| (*g, t.to_string())).collect(),
        clue_groups: vec![],
        target_labels: vec![],
    }
}

fn slot_rules() -> CompiledRuleSet {
    CompiledRuleSet::compile(
        vec![
            slot_rule("from", r"from\s(__CITY)", &[(1, "fromloc.city")]),
            slot_rule("to", r"to\s(__CITY)", &[(1, "toloc.city")]),
            slot_rule("pair", r"(__CITY\s__CITY)", &[(1, "city")]),
            slot_rule("partial", r"(bos)ton", &[(1, "city")]),
            slot_rule("airline", r"(__AIRLINE)\s(flights?)", &[(1, "airline_name"), (2, "kind")]),
        ],
        oracle_macros(),
    )
    .unwrap()
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(ORACLE_WORDS.to_vec()), 1..8)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn slot_tags_are_bio_well_formed(tokens in sentence()) {
        let rs = slot_rules();
        let tags = rs.annotate_slots(&tokens);
        prop_assert_eq!(tags.len(), tokens.len());
        // every I-x at token i needs a B-x or I-x at i - 1
        for (i, row) in tags.iter().enumerate() {
            for tag in row {
                if let Some(ty) = tag.strip_prefix("I-") {
                    prop_assert!(i > 0);
                    let prev = &tags[i - 1];
                    let (b, inside) = (format!("B-{}", ty), format!("I-{}", ty));
                    let continued = prev.contains(&b) || prev.contains(&inside);
                    prop_assert!(continued);
                }
            }
        }
    }

    #[test]
    fn annotation_is_deterministic(tokens in sentence()) {
        let a = slot_rules();
        let b = slot_rules();
        prop_assert_eq!(a.annotate_slots(&tokens), b.annotate_slots(&tokens));
        let specs = oracle_rules();
        let x = CompiledRuleSet::compile(specs.clone(), oracle_macros()).unwrap();
        let y = CompiledRuleSet::compile(specs, oracle_macros()).unwrap();
        let labels: Vec<String> = ["airline", "flight", "airfare", "show"].iter().map(|s| s.to_string()).collect();
        prop_assert_eq!(x.annotate(&tokens, &labels), y.annotate(&tokens, &labels));
    }

    #[test]
    fn adding_a_rule_never_clears_an_indicator(tokens in sentence(), extra in 0usize..8) {
        let specs = oracle_rules();
        let labels: Vec<String> = ["airline", "flight", "airfare", "show"].iter().map(|s| s.to_string()).collect();
        let fewer: Vec<RuleSpec> = specs.iter().enumerate().filter(|(i, _)| *i != extra).map(|(_, s)| s.clone()).collect();
        let small = CompiledRuleSet::compile(fewer, oracle_macros()).unwrap();
        let full = CompiledRuleSet::compile(specs, oracle_macros()).unwrap();
        let z_small = small.label_indicators(&tokens, &labels, Granularity::Sentence);
        let z_full = full.label_indicators(&tokens, &labels, Granularity::Sentence);
        for (a, b) in z_small[0].iter().zip(&z_full[0]) {
            prop_assert!(!(*a == 1.0 && *b == 0.0));
        }
    }

    #[test]
    fn clue_rows_are_normalized(tokens in sentence()) {
        let mut specs = oracle_rules();
        for s in &mut specs {
            let grouped = ["airline_list", "fare", "from_to", "lazy_day", "show_only"];
            s.clue_groups = if grouped.contains(&s.id.as_str()) { vec![1] } else { vec![] };
        }
        let rs = CompiledRuleSet::compile(specs, oracle_macros()).unwrap();
        let labels: Vec<String> = ["airline", "flight", "airfare", "show"].iter().map(|s| s.to_string()).collect();
        for row in rs.clue_mask(&tokens, &labels, Polarity::Positive) {
            let total: f64 = row.iter().sum();
            prop_assert!(total == 0.0 || (total - 1.0).abs() <= 1e-9);
        }
    }
}
