//! Reference implementations shared by the oracle tests and the acceptance
//! run. Nothing here calls into the library's search or predicate code.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use acorn_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 6] = ["red", "green", "blue", "cyan", "plum", "sand"];

pub fn mixed_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<f32> = (0..n * d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut ds = Dataset::from_vectors(d, vectors).unwrap();
    ds.push_int_column((0..n).map(|_| r.gen_range(0..10)).collect()).unwrap();
    ds.push_date_column((0..n).map(|_| r.gen_range(0..1000)).collect()).unwrap();
    ds.push_keyword_column(
        (0..n)
            .map(|_| (0..r.gen_range(0..3)).map(|_| WORDS[r.gen_range(0..WORDS.len())]).collect::<Vec<_>>())
            .collect(),
    )
    .unwrap();
    ds.push_text_column((0..n).map(|i| format!("row-{i}-{}", WORDS[i % WORDS.len()])).collect())
        .unwrap();
    ds
}

pub fn random_predicate(r: &mut impl Rng, depth: usize) -> Predicate {
    match r.gen_range(0..if depth == 0 { 6 } else { 7 }) {
        0 => Predicate::equals(0, r.gen_range(0..10)),
        1 => {
            let lo = r.gen_range(0..1000);
            Predicate::between(1, lo, lo + r.gen_range(0..400))
        }
        2 => Predicate::contains(2, (0..r.gen_range(1..3)).map(|_| WORDS[r.gen_range(0..WORDS.len())])),
        3 => Predicate::regex(3, format!("{}$", WORDS[r.gen_range(0..WORDS.len())])),
        4 => Predicate::True,
        5 => {
            let lo = r.gen_range(0..5);
            Predicate::between(0, lo, r.gen_range(lo..10))
        }
        _ => Predicate::and((0..2).map(|_| random_predicate(r, depth - 1)).collect()),
    }
}

/// Second evaluator over raw tuples; regexes are compiled once per trial.
pub fn passes(p: &Predicate, t: &AttributeTuple, regexes: &mut HashMap<String, regex::Regex>) -> bool {
    match (p, t) {
        (Predicate::True, _) => true,
        (Predicate::False, _) => false,
        (Predicate::Equals { attr, value }, t) => match &t[*attr] {
            AttrValue::Int(x) | AttrValue::Date(x) => x == value,
            _ => unreachable!(),
        },
        (Predicate::Between { attr, lo, hi }, t) => match &t[*attr] {
            AttrValue::Int(x) | AttrValue::Date(x) => (lo..=hi).contains(&x),
            _ => unreachable!(),
        },
        (Predicate::Contains { attr, any }, t) => match &t[*attr] {
            AttrValue::Keywords(set) => any.iter().any(|k| set.contains(k)),
            _ => unreachable!(),
        },
        (Predicate::RegexMatch { attr, pattern }, t) => match &t[*attr] {
            AttrValue::Text(text) => regexes
                .entry(pattern.clone())
                .or_insert_with(|| regex::Regex::new(pattern).unwrap())
                .is_match(text),
            _ => unreachable!(),
        },
        (Predicate::And { args }, t) => args.iter().all(|a| passes(a, t, regexes)),
    }
}

pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum()
}

/// Layer search written directly from the textbook HNSW description.
pub fn reference_layer(index: &GraphIndex, ds: &Dataset, x: &[f32], entry: u32, ef: usize, l: usize) -> Vec<Neighbor> {
    let dist = |v: u32| Neighbor::new(v, ds.score_to(x, v));
    let mut visited = HashSet::from([entry]);
    let mut c = vec![dist(entry)];
    let mut w = vec![dist(entry)];
    while !c.is_empty() {
        let (ci, _) = c.iter().enumerate().min_by(|a, b| a.1.cmp(b.1)).unwrap();
        let near = c.swap_remove(ci);
        let far = *w.iter().max().unwrap();
        if near > far {
            break;
        }
        for &e in index.neighbors(near.id, l).unwrap() {
            if !visited.insert(e) {
                continue;
            }
            let de = dist(e);
            let far = *w.iter().max().unwrap();
            if de < far || w.len() < ef {
                c.push(de);
                w.push(de);
                if w.len() > ef {
                    let (fi, _) = w.iter().enumerate().max_by(|a, b| a.1.cmp(b.1)).unwrap();
                    w.swap_remove(fi);
                }
            }
        }
    }
    w.sort();
    w
}

pub fn reference_search(index: &GraphIndex, ds: &Dataset, x: &[f32], k: usize, efs: usize) -> Vec<u32> {
    let mut ep = index.entry_point();
    for l in (1..=index.max_level()).rev() {
        ep = reference_layer(index, ds, x, ep, 1, l)[0].id;
    }
    reference_layer(index, ds, x, ep, efs, 0).iter().take(k).map(|n| n.id).collect()
}

/// Number of mutual-reachability classes, by breadth-first search from every
/// node.
pub fn naive_scc_count(edges: &[Vec<usize>]) -> usize {
    let n = edges.len();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|s| {
            let mut seen = vec![false; n];
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(v) = q.pop_front() {
                for &u in &edges[v] {
                    if !seen[u] {
                        seen[u] = true;
                        q.push_back(u);
                    }
                }
            }
            seen
        })
        .collect();
    let mut class = vec![usize::MAX; n];
    let mut count = 0;
    for v in 0..n {
        if class[v] != usize::MAX {
            continue;
        }
        for u in v..n {
            if reach[v][u] && reach[u][v] {
                class[u] = count;
            }
        }
        count += 1;
    }
    count
}
