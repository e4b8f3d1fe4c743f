mod common;

use common::{random_fixture, random_whatif, rng};
use hyperq::hql::parse_whatif;
use hyperq::oracle::{oracle_eval, oracle_eval_pwd, oracle_whatif};
use hyperq::session::outcome_attrs;

const FIXTURES: u64 = 220;

#[test]
fn exact_backed_whatif_matches_world_enumeration() {
    let mut checked = 0;
    for seed in 0..FIXTURES {
        let f = random_fixture(seed);
        let mut r = rng(seed ^ 0x5eed);
        for _ in 0..3 {
            let text = random_whatif(&f, &mut r);
            let q = parse_whatif(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            let got = f.session.eval_whatif(&q).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
            let want = oracle_whatif(&f.session, &q).unwrap();
            assert!((got.value - want).abs() <= 1e-9, "seed {seed}: engine {} oracle {want}\n{text}", got.value);
            checked += 1;
        }
    }
    assert!(checked >= 600);
}

#[test]
fn decomposed_evaluation_equals_single_block_exactly() {
    for seed in 0..FIXTURES {
        let f = random_fixture(seed);
        let mut r = rng(seed ^ 0xb10c);
        let text = random_whatif(&f, &mut r);
        let q = parse_whatif(&text).unwrap();
        let bs: Vec<String> = q.updates.iter().map(|u| u.attr.clone()).collect();
        let ys = outcome_attrs(&q.output, q.for_pred.as_ref());
        let p = f.session.prepare(&q.use_spec, q.when.as_ref(), q.for_pred.as_ref(), &bs, &ys).unwrap();
        let updates = p.bind_updates(q.updates.iter().map(|u| (u.attr.as_str(), u.func.clone()))).unwrap();
        let split = p.run(&updates, &q.output).unwrap();
        let whole = p.run_single_block(&updates, &q.output).unwrap();
        assert_eq!(split.value.to_bits(), whole.value.to_bits(), "seed {seed}\n{text}");
    }
}

#[test]
fn joint_world_sum_matches_per_row_enumeration() {
    for seed in 0..60 {
        let f = random_fixture(seed);
        let mut r = rng(seed ^ 0x9d);
        let text = random_whatif(&f, &mut r);
        let q = parse_whatif(&text).unwrap();
        let bs: Vec<String> = q.updates.iter().map(|u| u.attr.clone()).collect();
        let ys = outcome_attrs(&q.output, q.for_pred.as_ref());
        let p = f.session.prepare(&q.use_spec, q.when.as_ref(), q.for_pred.as_ref(), &bs, &ys).unwrap();
        let updates = p.bind_updates(q.updates.iter().map(|u| (u.attr.as_str(), u.func.clone()))).unwrap();
        let per_row = oracle_eval(&p, &updates, &q.output).unwrap();
        let joint = oracle_eval_pwd(&p, &updates, &q.output, 1 << 20).unwrap();
        assert!((per_row - joint).abs() <= 1e-9, "seed {seed}: {per_row} vs {joint}\n{text}");
    }
}
