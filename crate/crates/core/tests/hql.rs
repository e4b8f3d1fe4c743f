mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use common::{load, query_text, random_pred, rng, Attr};
use hyperq::agg::Aggregate;
use hyperq::datamodel::UpdateFn;
use hyperq::hql::ast::{CmpOp, Expr, Goal, Limit, Output, OutputTarget, Pred, Sense, UseSpec};
use hyperq::hql::eval::{compile, Layout, RowPair};
use hyperq::hql::{normalize_for, parse_howto, parse_pred, parse_query, parse_whatif, render_query, Query};
use hyperq::value::{Domain, Value};

fn cmp(l: Expr, op: CmpOp, r: Expr) -> Pred {
    Pred::Cmp { l, op, r }
}

fn s(x: &str) -> Expr {
    Expr::Str(x.into())
}

#[test]
fn fig4_text_parses_to_the_expected_ast() {
    let q = parse_whatif(&query_text("amazon/fig4.hql")).unwrap();
    assert_eq!(q.updates.len(), 1);
    assert_eq!(q.updates[0].attr, "Price");
    assert_eq!(q.updates[0].func, UpdateFn::scale(1.1));
    assert_eq!(q.when, Some(cmp(Expr::pre("Brand"), CmpOp::Eq, s("Asus"))));
    assert_eq!(q.output, Output { agg: Aggregate::Avg, target: OutputTarget::Attr("Rtng".into()) });
    let want = Pred::and(vec![
        cmp(Expr::pre("Category"), CmpOp::Eq, s("Laptop")),
        cmp(Expr::pre("Brand"), CmpOp::Eq, s("Asus")),
        cmp(Expr::post("Senti"), CmpOp::Gt, Expr::Num(0.5)),
    ]);
    assert_eq!(q.for_pred, Some(want));
    let UseSpec::View { select, .. } = &q.use_spec else { panic!("expected a view") };
    assert_eq!(select.from.len(), 2);
    assert_eq!(select.group_by.len(), 4);
}

#[test]
fn fig5_text_parses_to_the_expected_ast() {
    let q = parse_howto(&query_text("amazon/fig5.hql")).unwrap();
    assert_eq!(q.attrs, vec!["Price", "Color"]);
    assert_eq!(
        q.limits,
        vec![
            Limit::Range { attr: "Price".into(), lo: Some(500.0), hi: Some(800.0) },
            Limit::L1 { attrs: vec!["Price".into()], budget: 400.0 },
        ]
    );
    let Goal::Optimize(objs) = &q.goal else { panic!("expected an objective") };
    assert_eq!(objs.len(), 1);
    assert_eq!(objs[0].sense, Sense::Maximize);
    assert_eq!(objs[0].output, Output { agg: Aggregate::Avg, target: OutputTarget::Attr("Rtng".into()) });
}

#[test]
fn figure_queries_validate_against_the_amazon_session() {
    for (file, kind, session) in
        [("amazon/fig4.hql", "whatif", "amazon/amazon.json"), ("amazon/fig5.hql", "howto", "amazon/amazon_howto.json")]
    {
        let s = load(session);
        let q = parse_query(&query_text(file)).unwrap();
        match &q {
            Query::WhatIf(w) => {
                let bs: Vec<String> = w.updates.iter().map(|u| u.attr.clone()).collect();
                let ys = hyperq::session::outcome_attrs(&w.output, w.for_pred.as_ref());
                let p = s.prepare(&w.use_spec, w.when.as_ref(), w.for_pred.as_ref(), &bs, &ys).unwrap();
                p.validate(w).unwrap();
                assert_eq!(kind, "whatif");
            }
            Query::HowTo(h) => {
                hyperq::howto::prepare_howto(&s, h).unwrap();
                assert_eq!(kind, "howto");
            }
        }
        let rendered = render_query(&q);
        assert_eq!(parse_query(&rendered).unwrap(), q, "{file}:\n{rendered}");
    }
}

#[test]
fn minimal_query_has_no_when_clause() {
    let q = parse_whatif("USE T UPDATE(X)=1 OUTPUT COUNT(*) FOR POST(Y)=1").unwrap();
    assert_eq!(q.use_spec, UseSpec::Relation("T".into()));
    assert!(q.when.is_none());
    assert_eq!(q.output.target, OutputTarget::Star);
    assert_eq!(q.for_pred, Some(cmp(Expr::post("Y"), CmpOp::Eq, Expr::Num(1.0))));
}

#[test]
fn keywords_are_case_insensitive() {
    let a = parse_whatif("use T when X = 0 update(X) = 1 output avg(post(Y)) for post(Y) = 1").unwrap();
    let b = parse_whatif("USE T WHEN X = 0 UPDATE(X) = 1 OUTPUT AVG(POST(Y)) FOR POST(Y) = 1").unwrap();
    assert_eq!(a, b);
}

#[test]
fn keep_update_reads_as_pre_of_the_target() {
    let q = parse_whatif("USE T UPDATE(X) = PRE(X) OUTPUT COUNT(*)").unwrap();
    assert_eq!(q.updates[0].func, UpdateFn::keep());
    assert_eq!(parse_query(&render_query(&Query::WhatIf(q.clone()))).unwrap(), Query::WhatIf(q));
}

#[test]
fn missing_limit_means_unconstrained() {
    let q = parse_howto(&query_text("toy/howto_x.hql")).unwrap();
    assert!(q.limits.is_empty());
}

#[test]
fn post_in_when_is_rejected_with_its_position() {
    let err = parse_whatif("USE T\nWHEN POST(Price) > 500\nUPDATE(Price) = 1\nOUTPUT COUNT(*)").unwrap_err();
    match err {
        hyperq::Error::PostInWhen { line, col } => assert_eq!((line, col), (2, 6)),
        other => panic!("unexpected {other:?}"),
    }
}


#[test]
fn malformed_queries_report_a_location() {
    for text in common::NEGATIVE_QUERIES {
        match parse_query(text) {
            Err(hyperq::Error::SyntaxError { line, col, message }) => {
                assert!(line >= 1 && col >= 1, "{text}: {message}");
                assert!(!message.is_empty());
            }
            other => panic!("{text}: expected a located syntax error, got {other:?}"),
        }
    }
}

#[test]
fn syntax_error_positions_point_at_the_offending_token() {
    let at = |t: &str| match parse_query(t).unwrap_err() {
        hyperq::Error::SyntaxError { line, col, .. } => (line, col),
        e => panic!("{e:?}"),
    };
    assert_eq!(at("USE T\nUPDATE(X) 1\nOUTPUT COUNT(*)"), (2, 11));
    assert_eq!(at("USE T UPDATE(X) = 1 OUTPUT COUNT(*) FOR POST(Y) = 1 extra"), (1, 53));
    assert_eq!(at("USE T\nHOWTOUPDATE X\nLIMIT L1(PRE(X),POST(X)) <= -1\nTOMAXIMIZE AVG(POST(Y))"), (3, 29));
}

fn literal(r: &mut ChaCha8Rng) -> String {
    match r.gen_range(0..4) {
        0 => format!("{}", r.gen_range(-20..20)),
        1 => format!("{}.{}", r.gen_range(0..100), r.gen_range(1..10)),
        2 => "'O''Brien'".into(),
        _ => format!("'v{}'", r.gen_range(0..9)),
    }
}

fn side_attr(r: &mut ChaCha8Rng, post: bool) -> String {
    let a = ["A", "B", "Price", "Senti"].choose(r).unwrap();
    match r.gen_range(0..3) {
        0 => a.to_string(),
        1 => format!("PRE({a})"),
        _ if post => format!("POST({a})"),
        _ => format!("PRE({a})"),
    }
}

fn expr(r: &mut ChaCha8Rng, post: bool, depth: usize) -> String {
    if depth == 0 || r.gen_bool(0.5) {
        return if r.gen_bool(0.6) { side_attr(r, post) } else { format!("{}", r.gen_range(0..50)) };
    }
    let op = ["+", "-", "*", "/"].choose(r).unwrap();
    let l = expr(r, post, depth - 1);
    let rr = expr(r, post, depth - 1);
    if r.gen_bool(0.3) {
        format!("-({l} {op} {rr})")
    } else {
        format!("({l} {op} {rr})")
    }
}

fn pred(r: &mut ChaCha8Rng, post: bool, depth: usize) -> String {
    if depth == 0 || r.gen_bool(0.4) {
        return match r.gen_range(0..3) {
            0 => {
                let vals: Vec<String> = (0..r.gen_range(1..4)).map(|_| literal(r)).collect();
                let not = if r.gen_bool(0.3) { "NOT " } else { "" };
                format!("{} {not}IN ({})", side_attr(r, post), vals.join(", "))
            }
            1 => format!("{} {} {}", side_attr(r, post), ["=", "<>", "<", "<=", ">", ">="].choose(r).unwrap(), literal(r)),
            _ => format!("{} {} {}", expr(r, post, 2), ["=", "<", ">="].choose(r).unwrap(), expr(r, post, 1)),
        };
    }
    let l = pred(r, post, depth - 1);
    let rr = pred(r, post, depth - 1);
    match r.gen_range(0..3) {
        0 => format!("({l}) AND ({rr})"),
        1 => format!("({l}) OR {rr}"),
        _ => format!("NOT ({l})"),
    }
}

fn use_clause(r: &mut ChaCha8Rng) -> String {
    if r.gen_bool(0.5) {
        return "USE Product".into();
    }
    "USE RelevantView AS (SELECT T1.PID, T1.Price, AVG(T2.Rating) AS Rtng, COUNT(*) AS N \
     FROM Product AS T1, Review AS T2 WHERE T1.PID = T2.PID GROUP BY T1.PID, T1.Price)"
        .into()
}

fn output(r: &mut ChaCha8Rng) -> String {
    match r.gen_range(0..3) {
        0 => "COUNT(*)".into(),
        1 => "SUM(POST(Price))".into(),
        _ => "AVG(Rtng)".into(),
    }
}

fn random_query_text(r: &mut ChaCha8Rng) -> String {
    let mut t = use_clause(r);
    if r.gen_bool(0.5) {
        t.push_str(&format!(" WHEN {}", pred(r, false, 2)));
    }
    if r.gen_bool(0.5) {
        let n = r.gen_range(1..3);
        let ups: Vec<String> = (0..n)
            .map(|i| {
                let a = ["Price", "Color"][i];
                let f = match r.gen_range(0..5) {
                    0 => format!("{} * PRE({a})", r.gen_range(1..5)),
                    1 => format!("PRE({a}) + {}", r.gen_range(-5..5)),
                    2 => format!("PRE({a}) - {}", r.gen_range(1..5)),
                    3 => format!("PRE({a})"),
                    _ => literal(r),
                };
                format!("UPDATE({a}) = {f}")
            })
            .collect();
        t.push_str(&format!(" {} OUTPUT {}", ups.join(if r.gen_bool(0.5) { " AND " } else { ", " }), output(r)));
    } else {
        t.push_str(" HOWTOUPDATE Price, Color");
        if r.gen_bool(0.6) {
            let limits = [
                "10 <= POST(Price) <= 20".to_string(),
                "POST(Price) >= 3".to_string(),
                "Price <= 7".to_string(),
                "POST(Color) IN ('Silver', 'Black')".to_string(),
                format!("L1(PRE(Price), POST(Price)) <= {}", r.gen_range(0..100)),
                "L1(POST(Price), PRE(Price)) + L1(PRE(Color), POST(Color)) <= 4".to_string(),
            ];
            let n = r.gen_range(1..3);
            let picked: Vec<String> = limits.choose_multiple(r, n).cloned().collect();
            t.push_str(&format!(" LIMIT {}", picked.join(" AND ")));
        }
        match r.gen_range(0..3) {
            0 => t.push_str(&format!(" TOMAXIMIZE {}", output(r))),
            1 => t.push_str(&format!(" TOMINIMIZE {} THEN TOMAXIMIZE {}", output(r), output(r))),
            _ => t.push_str(&format!(" TOMINIMIZE COST SUCH THAT {} >= {}", output(r), r.gen_range(0..9))),
        }
    }
    if r.gen_bool(0.7) {
        t.push_str(&format!(" FOR {}", pred(r, true, 3)));
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]
    #[test]
    fn rendering_then_parsing_gives_back_the_ast(seed in any::<u64>()) {
        let text = random_query_text(&mut rng(seed));
        let q = parse_query(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        let rendered = render_query(&q);
        let again = parse_query(&rendered).map_err(|e| TestCaseError::fail(format!("{e}\n{rendered}")))?;
        prop_assert_eq!(again, q, "{}\n{}", text, rendered);
    }
}

fn one_attr_layout(points: Vec<f64>) -> (Vec<String>, Vec<Domain>) {
    (vec!["A".into()], vec![Domain::numeric(points).unwrap()])
}

fn check_normalization(p: &Pred, names: &[String], domains: &[Domain]) -> usize {
    common::normalization_check(p, names, domains).unwrap()
}

#[test]
fn coupled_pre_post_atom_expands_to_seven_conjuncts() {
    let (names, domains) = one_attr_layout(vec![1.0, 2.0, 3.0, 4.0]);
    let p = parse_pred("PRE(A) - POST(A) < 2 AND PRE(A) >= POST(A)").unwrap();
    assert_eq!(check_normalization(&p, &names, &domains), 7);
    let layout = Layout { names: &names, domains: &domains };
    let dnf = normalize_for(&p, layout, 1_000_000).unwrap();
    let mut pairs = Vec::new();
    for c in &dnf.conjuncts {
        let (pre, post) = (compile(&c.pre, layout).unwrap(), compile(&c.post, layout).unwrap());
        for a in 0..4u32 {
            for b in 0..4u32 {
                if pre.eval(&RowPair { pre: &[a], post: &[b], domains: &domains })
                    && post.eval(&RowPair { pre: &[a], post: &[b], domains: &domains })
                {
                    pairs.push((a + 1, b + 1));
                }
            }
        }
    }
    pairs.sort();
    assert_eq!(pairs, vec![(1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (4, 3), (4, 4)]);
}

#[test]
fn disjoint_input_keeps_its_two_conjuncts() {
    let names = vec!["A".to_string(), "B".to_string()];
    let domains = vec![Domain::numeric(vec![1.0, 2.0, 3.0]).unwrap(), Domain::numeric(vec![0.0, 1.0]).unwrap()];
    let p = parse_pred("PRE(A) = 1 OR (PRE(A) = 2 AND POST(B) = 1)").unwrap();
    assert_eq!(check_normalization(&p, &names, &domains), 2);
}

#[test]
fn overlapping_pair_splits_on_the_complement() {
    let names = vec!["A".to_string(), "B".to_string()];
    let domains = vec![Domain::numeric(vec![1.0, 2.0, 3.0]).unwrap(), Domain::numeric(vec![0.0, 1.0]).unwrap()];
    let p = parse_pred("PRE(A) = 1 OR POST(B) = 1").unwrap();
    assert_eq!(check_normalization(&p, &names, &domains), 2);
}

#[test]
fn overlapping_disjuncts_stay_within_the_inclusion_exclusion_bound() {
    let names: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
    let domains = vec![Domain::numeric(vec![0.0, 1.0]).unwrap(); 3];
    let p = parse_pred("POST(A) = 1 OR POST(B) = 1 OR PRE(C) = 1").unwrap();
    assert!(check_normalization(&p, &names, &domains) <= 7);
}

#[test]
fn expansion_beyond_the_cap_is_refused() {
    let (names, domains) = one_attr_layout((0..100).map(f64::from).collect());
    let p = parse_pred("PRE(A) - POST(A) < 2").unwrap();
    let err = normalize_for(&p, Layout { names: &names, domains: &domains }, 10).unwrap_err();
    assert_eq!(err.kind(), "DomainTooLarge");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn normalized_predicates_are_equivalent_and_disjoint(
        levels in prop::collection::vec(2..=5usize, 1..=3),
        seed in any::<u64>(),
        budget in 1..=4usize,
    ) {
        let attrs: Vec<Attr> = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| Attr { name: format!("A{i}"), levels: l, mutable: true })
            .collect();
        let text = random_pred(&mut rng(seed), &attrs, true, budget);
        let p = parse_pred(&text).unwrap();
        let names: Vec<String> = attrs.iter().map(|a| a.name.clone()).collect();
        let domains: Vec<Domain> =
            levels.iter().map(|&l| Domain::numeric((0..l).map(|x| x as f64).collect()).unwrap()).collect();
        check_normalization(&p, &names, &domains);
    }
}

#[test]
fn string_literals_with_quotes_round_trip() {
    let p = parse_pred("PRE(Brand) IN ('O''Brien', 'Asus') AND NOT POST(Color) = 'Black'").unwrap();
    let q = parse_whatif("USE T UPDATE(Color) = 'Silver' OUTPUT COUNT(*) FOR PRE(Brand) IN ('O''Brien', 'Asus') AND NOT POST(Color) = 'Black'").unwrap();
    assert_eq!(q.for_pred.as_ref(), Some(&p));
    assert!(matches!(&q.updates[0].func.constant, Value::Str(v) if v == "Silver"));
}
