mod common;

use common::{load, query_text, sampled_confounder};
use hyperq::datamodel::{load_database_from_str, read_schema_config, UpdateFn};
use hyperq::estimator::{post_update_prob, EstimatorConfig, EstimatorKind, PostUpdateProbQuery};
use hyperq::hql::ast::Pred;
use hyperq::hql::eval::compile;
use hyperq::hql::{parse_pred, parse_whatif, WhatIfQuery};
use hyperq::oracle::{enumerate_pwd, oracle_whatif};
use hyperq::session::{outcome_attrs, Prepared, Session, Settings};
use hyperq::value::Value;

fn prepare(s: &Session, q: &WhatIfQuery) -> Prepared {
    let bs: Vec<String> = q.updates.iter().map(|u| u.attr.clone()).collect();
    let ys = outcome_attrs(&q.output, q.for_pred.as_ref());
    s.prepare(&q.use_spec, q.when.as_ref(), q.for_pred.as_ref(), &bs, &ys).unwrap()
}

fn toy_query(body: &str) -> WhatIfQuery {
    parse_whatif(&format!("USE T {body}")).unwrap()
}

fn whatif(s: &Session, text: &str) -> f64 {
    s.eval_whatif(&parse_whatif(text).unwrap()).unwrap().value
}

fn freq_toy(csv: &str, sample: Option<usize>) -> hyperq::Result<Prepared> {
    let base = load("toy/toy.json");
    let cfg = read_schema_config(&common::fixtures_dir().join("toy/schema.json")).unwrap();
    let db = load_database_from_str(&cfg, &[("T", csv)]).unwrap();
    let settings = Settings {
        estimator: EstimatorConfig { kind: EstimatorKind::Freq, sample, ..Default::default() },
        ..Default::default()
    };
    let s = Session::new(db, base.dag.clone(), Vec::new(), None, settings)?;
    let q = toy_query("UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1");
    let bs = vec!["X".to_string()];
    s.prepare(&q.use_spec, None, q.for_pred.as_ref(), &bs, &["Y".to_string()])
}

#[test]
fn exact_estimator_reads_the_structural_model() {
    let s = load("toy/toy.json");
    let p = prepare(&s, &toy_query("UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1"));
    let one = Value::Num(1.0);
    assert_eq!(p.est.cond_prob(&[("Y", one.clone())], &[("X", one.clone())]).unwrap(), 0.75);
    assert_eq!(p.est.cond_prob(&[("Y", one)], &[]).unwrap(), 0.5);
}

#[test]
fn frequency_estimator_counts_rows() {
    let p = freq_toy("id,X,Y\n1,0,0\n2,0,1\n3,1,1\n4,1,0\n", None).unwrap();
    let (zero, one) = (Value::Num(0.0), Value::Num(1.0));
    assert_eq!(p.est.cond_prob(&[("Y", one.clone())], &[("X", zero)]).unwrap(), 0.5);
    assert_eq!(p.est.cond_prob(&[("X", one.clone()), ("Y", one)], &[]).unwrap(), 0.25);
}

#[test]
fn frequency_estimator_reports_missing_support() {
    let p = freq_toy("id,X,Y\n1,0,0\n2,0,1\n", None).unwrap();
    let err = p.est.cond_prob(&[("Y", Value::Num(1.0))], &[("X", Value::Num(1.0))]).unwrap_err();
    assert_eq!(err.kind(), "ZeroSupport");
}

#[test]
fn empty_and_oversized_samples_are_rejected() {
    let csv = "id,X,Y\n1,0,0\n2,0,1\n";
    assert_eq!(freq_toy(csv, Some(0)).unwrap_err().kind(), "EmptySample");
    assert_eq!(freq_toy(csv, Some(3)).unwrap_err().kind(), "Config");
    assert!(freq_toy(csv, Some(2)).is_ok());
}

fn single_update_prob(s: &Session, update: &str, y: &str, backdoor: &[&str]) -> f64 {
    let q = toy_query(&format!("UPDATE({update}) = 1 OUTPUT COUNT(*) FOR POST({y}) = 1"));
    let p = prepare(s, &q);
    let post = compile(&parse_pred(&format!("POST({y}) = 1")).unwrap(), p.layout()).unwrap();
    let pre = compile(&Pred::Const(true), p.layout()).unwrap();
    let updates = p.bind_updates([(update, UpdateFn::set(Value::Num(1.0)))]).unwrap();
    let bd: Vec<usize> = backdoor.iter().map(|b| p.view.col(b).unwrap()).collect();
    let pq = PostUpdateProbQuery { post: &post, pre: &pre, updates: &updates, backdoor: &bd, dag: &p.dag };
    post_update_prob(&p.est, &pq, &p.view.rows[0], true).unwrap()
}

#[test]
fn post_update_probability_follows_the_backdoor_formula() {
    assert_eq!(single_update_prob(&load("toy/toy.json"), "X", "Y", &[]), 0.75);
    let c = single_update_prob(&load("confounder/confounder.json"), "B", "Y", &["C"]);
    assert!((c - 0.55).abs() < 1e-12, "{c}");
}

#[test]
fn backdoor_sets_with_descendants_are_refused() {
    let s = load("confounder/confounder.json");
    let q = toy_query("UPDATE(C) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1");
    let p = prepare(&s, &q);
    let post = compile(&parse_pred("POST(Y) = 1").unwrap(), p.layout()).unwrap();
    let pre = compile(&Pred::Const(true), p.layout()).unwrap();
    let updates = p.bind_updates([("C", UpdateFn::set(Value::Num(1.0)))]).unwrap();
    let bd = vec![p.view.col("B").unwrap()];
    let pq = PostUpdateProbQuery { post: &post, pre: &pre, updates: &updates, backdoor: &bd, dag: &p.dag };
    let err = post_update_prob(&p.est, &pq, &p.view.rows[0], true).unwrap_err();
    assert_eq!(err.kind(), "InvalidBackdoorSet");
}

#[test]
fn confounded_average_is_adjusted() {
    let s = load("confounder/confounder.json");
    let q = parse_whatif(&query_text("confounder/avg_y.hql")).unwrap();
    let r = s.eval_whatif(&q).unwrap();
    assert!((r.value - 0.55).abs() < 1e-12, "{}", r.value);
    assert_eq!(r.backdoor, vec!["C"]);
    assert!((oracle_whatif(&s, &q).unwrap() - 0.55).abs() < 1e-12);
}

#[test]
fn frequency_estimate_on_sampled_rows_lands_near_the_truth() {
    let s = sampled_confounder(50_000, 7, EstimatorKind::Freq);
    let v = whatif(&s, &query_text("confounder/avg_y.hql"));
    assert!((v - 0.55).abs() <= 0.02, "{v}");
}

#[test]
fn toy_count_propagates_the_update() {
    let s = load("toy/toy.json");
    assert_eq!(whatif(&s, &query_text("toy/count_y.hql")), 3.0);
    assert_eq!(whatif(&s, "USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR PRE(X) = 0 AND POST(Y) = 1"), 1.5);
    assert_eq!(whatif(&s, "USE T UPDATE(X) = 0 OUTPUT COUNT(*) FOR POST(Y) = 1"), 1.0);
    assert_eq!(whatif(&s, "USE T UPDATE(X) = 1 OUTPUT SUM(POST(Y))"), 3.0);
    assert_eq!(whatif(&s, "USE T UPDATE(X) = 1 OUTPUT AVG(POST(Y))"), 0.75);
}

#[test]
fn empty_when_selection_leaves_observed_values() {
    let s = load("toy/toy.json");
    let r = s.eval_whatif(&toy_query("WHEN X > 1 UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1")).unwrap();
    assert_eq!(r.value, 2.0);
    assert_eq!(r.diagnostics.selected, 0);
}

#[test]
fn keep_update_reproduces_the_model_expectation() {
    let s = load("toy/toy.json");
    let q = toy_query("UPDATE(X) = PRE(X) OUTPUT COUNT(*) FOR POST(Y) = 1");
    assert_eq!(s.eval_whatif(&q).unwrap().value, 2.0);
    assert_eq!(s.eval_indep_baseline(&q).unwrap(), 2.0);
}

#[test]
fn independence_baseline_ignores_causal_effects() {
    let s = load("toy/toy.json");
    let q = parse_whatif(&query_text("toy/count_y.hql")).unwrap();
    assert_eq!(s.eval_indep_baseline(&q).unwrap(), 2.0);
    assert_eq!(s.eval_whatif(&q).unwrap().value, 3.0);
}

#[test]
fn empty_qualifying_set_gives_zero_average_with_a_warning() {
    let s = load("toy/toy.json");
    let r = s.eval_whatif(&toy_query("UPDATE(X) = 1 OUTPUT AVG(POST(Y)) FOR PRE(X) = 0 AND PRE(X) = 1")).unwrap();
    assert_eq!(r.value, 0.0);
    assert!(r.warnings.iter().any(|w| w.contains("no row qualifies")), "{:?}", r.warnings);
}

const FIG4_NO_SENTI: &str = "USE RelevantView AS (SELECT T1.PID, T1.Category, T1.Price, T1.Brand, \
    AVG(Sentiment) AS Senti, AVG(T2.Rating) AS Rtng FROM Product AS T1, Review AS T2 WHERE T1.PID = T2.PID \
    GROUP BY T1.PID, T1.Category, T1.Price, T1.Brand) WHEN Brand = 'Asus' UPDATE(Price) = 1.1 * PRE(Price) \
    OUTPUT AVG(POST(Rtng)) FOR PRE(Category) = 'Laptop' AND PRE(Brand) = 'Asus'";

#[test]
fn fig4_view_aggregates_reviews_per_product() {
    let s = load("amazon/amazon.json");
    let q = parse_whatif(&query_text("amazon/fig4.hql")).unwrap();
    let view = s.view(&q.use_spec).unwrap();
    assert_eq!(view.len(), 4);
    assert_eq!(view.skipped, vec!["Product(5)"]);
    let p2 = view.rows.iter().position(|r| view.domains[0].value(r[0] as usize) == Value::Num(2.0)).unwrap();
    let num = |name: &str| {
        let c = view.col(name).unwrap();
        view.domains[c].num(view.rows[p2][c] as usize).unwrap()
    };
    assert_eq!(num("Rtng"), 2.5);
    assert!((num("Senti") - 0.25).abs() < 1e-12);
    assert_eq!(num("Price"), 529.0);
}

#[test]
fn fig4_engine_and_oracle_agree() {
    let s = load("amazon/amazon.json");
    let q = parse_whatif(&query_text("amazon/fig4.hql")).unwrap();
    let r = s.eval_whatif(&q).unwrap();
    assert!((r.value - 4.0).abs() < 1e-9, "{}", r.value);
    assert!((oracle_whatif(&s, &q).unwrap() - r.value).abs() < 1e-9);
    assert!(r.warnings.iter().any(|w| w.contains("cross-tuple")));
    assert_eq!(r.diagnostics.selected, 1);
}

#[test]
fn fig4_independence_baseline() {
    let s = load("amazon/amazon.json");
    let full = parse_whatif(&query_text("amazon/fig4.hql")).unwrap();
    assert_eq!(s.eval_indep_baseline(&full).unwrap(), 0.0);
    assert_eq!(s.eval_indep_baseline(&parse_whatif(FIG4_NO_SENTI).unwrap()).unwrap(), 2.5);
}

#[test]
fn possible_worlds_grow_with_the_selection() {
    let s = load("toy/toy.json");
    let one = toy_query("WHEN id = 1 UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1");
    let p = prepare(&s, &one);
    let u = p.bind_updates([("X", UpdateFn::set(Value::Num(1.0)))]).unwrap();
    let worlds = enumerate_pwd(&p, &u, 1 << 20).unwrap();
    assert_eq!(worlds.len(), 2);
    let all = prepare(&s, &toy_query("UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1"));
    let worlds = enumerate_pwd(&all, &u, 1 << 20).unwrap();
    assert_eq!(worlds.len(), 16);
    let total: f64 = worlds.iter().map(|w| w.1).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(enumerate_pwd(&all, &u, 8).unwrap_err().kind(), "WorldCapExceeded");
}
