mod common;

use common::*;
use rulenet::models::{
    intent_forward_base, intent_forward_two_side, slot_forward_base, slot_forward_two_side,
    IntentBaseParams, SlotBaseParams, SlotTwoSideParams, Task, TwoSideIntentParams, Variant,
};
use rulenet::nn::{grad_check, Graph, Matrix, ParamStore};

const INTENT_VARIANTS: [Variant; 8] = Variant::ALL;
const SLOT_VARIANTS: [Variant; 7] = [
    Variant::Base,
    Variant::Feat,
    Variant::Logit,
    Variant::Two,
    Variant::TwoPosi,
    Variant::TwoNeg,
    Variant::TwoBoth,
];

#[test]
fn intent_base_head_matches_oracle() {
    let mut r = rng(3);
    for n in [1, 3, 5] {
        let mut store = ParamStore::new();
        let h = rand_matrix(n, 4, &mut r);
        let p = IntentBaseParams {
            att_w: store.add("w", rand_matrix(4, 4, &mut r)),
            att_c: store.add("c", rand_matrix(4, 1, &mut r)),
            cls_w: store.add("cw", rand_matrix(4, 3, &mut r)),
            cls_b: store.add("cb", rand_matrix(1, 3, &mut r)),
        };
        let (want_logits, want_alpha) = intent_base_oracle(
            &h,
            store.value(p.att_w),
            store.value(p.att_c),
            store.value(p.cls_w),
            store.value(p.cls_b),
        );
        let mut g = Graph::new(&store);
        let hv = g.constant(h.clone());
        let out = intent_forward_base(&mut g, hv, &p, None).unwrap();
        for (a, b) in g.value(out.logits).data().iter().zip(&want_logits) {
            assert!(rel_err(*a, *b) <= 1e-9, "{a} vs {b}");
        }
        for (a, b) in g.value(out.alpha).data().iter().zip(&want_alpha) {
            assert!(rel_err(*a, *b) <= 1e-9);
        }
    }
}

#[test]
fn intent_base_zero_attention_is_uniform() {
    let mut r = rng(4);
    let mut store = ParamStore::new();
    let p = IntentBaseParams {
        att_w: store.add("w", Matrix::zeros(4, 4)),
        att_c: store.add("c", rand_matrix(4, 1, &mut r)),
        cls_w: store.add("cw", rand_matrix(4, 2, &mut r)),
        cls_b: store.add("cb", Matrix::zeros(1, 2)),
    };
    let mut g = Graph::new(&store);
    let h = g.constant(rand_matrix(5, 4, &mut r));
    let out = intent_forward_base(&mut g, h, &p, None).unwrap();
    for a in g.value(out.alpha).data() {
        assert!((a - 0.2).abs() < 1e-15);
    }
}

fn two_side_store(r: &mut rand_chacha::ChaCha8Rng, k: usize, d: usize) -> (ParamStore, TwoSideIntentParams) {
    let mut store = ParamStore::new();
    let p = TwoSideIntentParams {
        att_wa: store.add("wa", rand_matrix(d, d, r)),
        ctx_pos: store.add("cp", rand_matrix(k, d, r)),
        ctx_neg: store.add("cn", rand_matrix(k, d, r)),
        out_w_pos: store.add("wp", rand_matrix(k, d, r)),
        out_b_pos: store.add("bp", rand_matrix(1, k, r)),
        out_w_neg: store.add("wn", rand_matrix(k, d, r)),
        out_b_neg: store.add("bn", rand_matrix(1, k, r)),
    };
    (store, p)
}

#[test]
fn intent_two_side_head_matches_oracle() {
    let mut r = rng(5);
    for n in [1, 3, 4] {
        let (store, p) = two_side_store(&mut r, 3, 4);
        let h = rand_matrix(n, 4, &mut r);
        let v = |id| store.value(id);
        let want = intent_two_oracle(
            &h,
            v(p.att_wa),
            v(p.ctx_pos),
            v(p.ctx_neg),
            v(p.out_w_pos),
            v(p.out_b_pos),
            v(p.out_w_neg),
            v(p.out_b_neg),
        );
        let mut g = Graph::new(&store);
        let hv = g.constant(h);
        let out = intent_forward_two_side(&mut g, hv, &p, None).unwrap();
        for (a, b) in g.value(out.logits).data().iter().zip(&want.logits) {
            assert!(rel_err(*a, *b) <= 1e-9, "{a} vs {b}");
        }
        for (a, b) in g.value(out.alpha_pos).data().iter().zip(want.alpha_pos.concat()) {
            assert!(rel_err(*a, b) <= 1e-9);
        }
        for (a, b) in g.value(out.alpha_neg).data().iter().zip(want.alpha_neg.concat()) {
            assert!(rel_err(*a, b) <= 1e-9);
        }
    }
}

#[test]
fn intent_two_side_identical_branches_cancel() {
    let mut r = rng(6);
    let (mut store, p) = two_side_store(&mut r, 3, 4);
    for (from, to) in [(p.ctx_pos, p.ctx_neg), (p.out_w_pos, p.out_w_neg), (p.out_b_pos, p.out_b_neg)] {
        *store.value_mut(to) = store.value(from).clone();
    }
    let mut g = Graph::new(&store);
    let h = g.constant(rand_matrix(4, 4, &mut r));
    let out = intent_forward_two_side(&mut g, h, &p, None).unwrap();
    assert!(g.value(out.logits).data().iter().all(|&x| x == 0.0));
}

#[test]
fn slot_heads_match_oracle() {
    let mut r = rng(7);
    for n in [1, 3, 4] {
        let mut store = ParamStore::new();
        let p = SlotTwoSideParams {
            w_sp: store.add("wsp", rand_matrix(4, 4, &mut r)),
            w_sn: store.add("wsn", rand_matrix(4, 4, &mut r)),
            w_p: store.add("wp", rand_matrix(8, 3, &mut r)),
            b_p: store.add("bp", rand_matrix(1, 3, &mut r)),
            w_n: store.add("wn", rand_matrix(8, 3, &mut r)),
            b_n: store.add("bn", rand_matrix(1, 3, &mut r)),
        };
        let base = SlotBaseParams {
            cls_w: store.add("cw", rand_matrix(4, 3, &mut r)),
            cls_b: store.add("cb", rand_matrix(1, 3, &mut r)),
        };
        let h = rand_matrix(n, 4, &mut r);
        let v = |id| store.value(id);
        let (logits, ap, an) = slot_two_oracle(&h, v(p.w_sp), v(p.w_sn), v(p.w_p), v(p.b_p), v(p.w_n), v(p.b_n));
        let mut g = Graph::new(&store);
        let hv = g.constant(h.clone());
        let out = slot_forward_two_side(&mut g, hv, &p).unwrap();
        for (a, b) in g.value(out.logits).data().iter().zip(logits.concat()) {
            assert!(rel_err(*a, b) <= 1e-9);
        }
        for (a, b) in g.value(out.alpha_pos).data().iter().zip(ap.concat()) {
            assert!(rel_err(*a, b) <= 1e-9);
        }
        for (a, b) in g.value(out.alpha_neg).data().iter().zip(an.concat()) {
            assert!(rel_err(*a, b) <= 1e-9);
        }
        let base_out = slot_forward_base(&mut g, hv, &base).unwrap();
        for i in 0..n {
            for l in 0..3 {
                let want: f64 = (0..4).map(|d| h.get(i, d) * store.value(base.cls_w).get(d, l)).sum::<f64>()
                    + store.value(base.cls_b).get(0, l);
                assert!(rel_err(g.value(base_out).get(i, l), want) <= 1e-9);
            }
        }
    }
}

#[test]
fn slot_zero_weights_give_uniform_distribution() {
    let mut store = ParamStore::new();
    let p = SlotBaseParams {
        cls_w: store.add("cw", Matrix::zeros(4, 5)),
        cls_b: store.add("cb", Matrix::zeros(1, 5)),
    };
    let mut g = Graph::new(&store);
    let h = g.constant(rand_matrix(3, 4, &mut rng(8)));
    let logits = slot_forward_base(&mut g, h, &p).unwrap();
    for i in 0..3 {
        let probs = softmax(g.value(logits).row(i));
        assert!(probs.iter().all(|p| (p - 0.2).abs() < 1e-15));
    }
}

#[test]
fn every_variant_passes_gradient_check() {
    let cases = INTENT_VARIANTS
        .iter()
        .map(|v| (Task::Intent, *v))
        .chain(SLOT_VARIANTS.iter().map(|v| (Task::Slot, *v)));
    for (task, variant) in cases {
        let model = tiny_model(variant, task, tiny_config(11));
        let ex = tiny_example(task);
        let mut store = model.store().clone();
        let report = grad_check(
            &mut store,
            |s, grads| model.loss_with(s, &ex, None, grads),
            1e-5,
            12,
            &mut rng(12),
        )
        .unwrap();
        assert!(
            report.max_relative_error <= 1e-4,
            "{task}/{variant}: {} at {:?}",
            report.max_relative_error,
            report.worst_param
        );
    }
}

#[test]
fn attention_rows_sum_to_one() {
    for (task, variant) in [
        (Task::Intent, Variant::Base),
        (Task::Intent, Variant::Feat),
        (Task::Intent, Variant::TwoBoth),
        (Task::Intent, Variant::Mixed),
        (Task::Slot, Variant::Two),
        (Task::Slot, Variant::TwoBoth),
    ] {
        let model = tiny_model(variant, task, tiny_config(13));
        let mut g = Graph::new(model.store());
        let out = model.forward(&mut g, &tiny_example(task), None).unwrap();
        for a in [out.alpha, out.alpha_pos, out.alpha_neg].into_iter().flatten() {
            let m = g.value(a);
            for r in 0..m.rows() {
                let s: f64 = m.row(r).iter().sum();
                assert!((s - 1.0).abs() <= 1e-9, "{task}/{variant}");
            }
        }
    }
}

#[test]
fn two_both_without_attention_weight_equals_two() {
    for task in [Task::Intent, Task::Slot] {
        let mut cfg = tiny_config(14);
        let two = tiny_model(Variant::Two, task, cfg);
        cfg.beta_p = 0.0;
        cfg.beta_n = 0.0;
        let both = tiny_model(Variant::TwoBoth, task, cfg);
        let ex = tiny_example(task);
        assert_eq!(two.logits(&ex).unwrap(), both.logits(&ex).unwrap());
        let a = two.loss_with(two.store(), &ex, None, None).unwrap();
        let b = both.loss_with(both.store(), &ex, None, None).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn zero_fusion_weights_leave_logits_unchanged() {
    for task in [Task::Intent, Task::Slot] {
        let mut cfg = tiny_config(15);
        cfg.fuse_init = 0.0;
        cfg.freeze_fuse = true;
        let base = tiny_model(Variant::Base, task, cfg);
        let logit = tiny_model(Variant::Logit, task, cfg);
        let ex = tiny_example(task);
        assert_eq!(base.logits(&ex).unwrap(), logit.logits(&ex).unwrap());
    }
}

#[test]
fn feat_with_single_tag_uses_that_row() {
    let model = tiny_model(Variant::Feat, Task::Slot, tiny_config(16));
    let table = model.store().value(model.store().find("tag_embedding").unwrap()).clone();
    let mut g = Graph::new(model.store());
    let rows = vec![vec![], vec![2], vec![1, 3]];
    let agg = rulenet::models::aggregate_tags(&mut g, model.store().find("tag_embedding").unwrap(), &rows).unwrap();
    let v = g.value(agg);
    assert_eq!(v.row(0), table.row(0));
    assert_eq!(v.row(1), table.row(2));
    for d in 0..table.cols() {
        let mean = 0.5 * (table.get(1, d) + table.get(3, d));
        assert!((v.get(2, d) - mean).abs() < 1e-15);
    }
    let bad = rulenet::models::aggregate_tags(&mut g, model.store().find("tag_embedding").unwrap(), &[vec![9]]);
    assert!(bad.is_err());
}

#[test]
fn mixed_slot_is_rejected() {
    let shape = rulenet::models::ModelShape {
        embeddings: Matrix::zeros(3, 2),
        num_labels: 2,
        num_tags: 1,
    };
    let err = rulenet::models::build_model(Variant::Mixed, Task::Slot, tiny_config(1), shape);
    assert!(err.is_err());
}

#[test]
fn variant_names_round_trip() {
    for v in Variant::ALL {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert!("two_sides".parse::<Variant>().is_err());
}
