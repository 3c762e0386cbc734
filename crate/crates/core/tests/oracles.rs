//! Independent reference implementations checked against the library.

use std::collections::HashMap;

mod common;

use acorn_core::eval::scc_count;
use acorn_core::predicate::AcceptAll;
use acorn_core::workload::{gen_lcps, Mixture, MixtureSpec};
use acorn_core::*;
use common::*;
use acorn_core::Strategy;
use proptest::prelude::{prop_assert_eq, proptest, ProptestConfig};
use proptest::strategy::Strategy as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn prefilter_matches_brute_force_scan() {
    let ds = mixed_dataset(1500, 8, 1);
    // spot-check the library's own tuple evaluator against this one
    let tuples0: Vec<_> = (0..50).map(|i| ds.tuple(i)).collect();
    let mut r0 = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = random_predicate(&mut r0, 1);
        for t in &tuples0 {
            assert_eq!(p.evaluate(t).unwrap(), passes(&p, t, &mut HashMap::new()));
        }
    }
    let tuples: Vec<_> = (0..ds.len()).map(|i| ds.tuple(i)).collect();
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut regexes = HashMap::new();
    for trial in 0..10_000 {
        let x: Vec<f32> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
        let p = random_predicate(&mut r, 1);
        let k = r.gen_range(1..20);
        let mut expected: Vec<(f64, u32)> = tuples
            .iter()
            .enumerate()
            .filter(|(_, t)| passes(&p, t, &mut regexes))
            .map(|(i, _)| (squared_l2(&x, ds.vector(i as u32)), i as u32))
            .collect();
        expected.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        expected.truncate(k);
        let q = HybridQuery::new(x.clone(), p.clone(), k);
        let got = prefilter_search(&ds, &q, &mut SearchCounters::default()).unwrap();
        assert_eq!(got.len(), expected.len(), "trial {trial}: {p:?}");
        for (g, e) in got.iter().zip(&expected) {
            if g.id != e.1 {
                // only a float tie may reorder the two scans
                assert!((g.dist as f64 - e.0).abs() < 1e-5, "trial {trial}: {p:?}");
            }
        }
    }
}

#[test]
fn always_true_filter_only_search_is_plain_hnsw() {
    let mix = Mixture::generate(&MixtureSpec::new(4000, 24, 5), 1000).unwrap();
    let ds = mix.dataset();
    let index = build(&ds, &BuildParams::hnsw(8, 40, 5)).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for (i, x) in mix.queries.iter().enumerate() {
        let efs = r.gen_range(10..80);
        let k = r.gen_range(1..=10);
        let mut c = SearchCounters::default();
        let got = filtered_search(&index, &ds, x, &AcceptAll, k, efs, Strategy::FilterOnly, &mut c).unwrap();
        let ids: Vec<u32> = got.iter().map(|n| n.id).collect();
        assert_eq!(ids, reference_search(&index, &ds, x, k, efs), "instance {i}");
        let plain = unfiltered_search(&index, &ds, x, k, efs, &mut SearchCounters::default()).unwrap();
        assert_eq!(plain, got, "instance {i}");
    }
}

#[test]
fn graph_search_results_always_pass_the_predicate() {
    let (ds, qs) = gen_lcps(3000, 16, 6, 100, 4).unwrap();
    for params in [
        BuildParams::hnsw(8, 32, 1),
        BuildParams::acorn1(8, 32, 1),
        BuildParams::acorn_gamma(8, 6, 16, 32, 1),
    ] {
        let index = build(&ds, &params).unwrap();
        for q in &qs {
            let sp = SearchParams::for_index(&index, q.k, 40);
            let rep = hybrid_search(&index, &ds, q, &sp, None).unwrap();
            let f = q.predicate.bind(&ds).unwrap();
            assert!(rep.ids.iter().all(|&id| f.passes(id)));
            assert!(rep.ids.len() <= q.k);
        }
    }
}

fn arb_graph() -> impl proptest::strategy::Strategy<Value = Vec<Vec<usize>>> {
    (1usize..500, 0.0f64..4.0).prop_flat_map(|(n, mean_deg)| {
        let max_deg = (mean_deg * 2.0) as usize + 1;
        proptest::collection::vec(proptest::collection::vec(0..n, 0..max_deg), n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scc_count_matches_naive_reachability(edges in arb_graph()) {
        prop_assert_eq!(scc_count(&edges), naive_scc_count(&edges));
    }
}
