//! Structured predicates over attribute tuples.
//!
//! A [`Predicate`] is a plain expression tree that serializes to the JSON
//! form used by workload files, e.g.
//! `{"op":"between","attr":1,"lo":2000,"hi":2010}` or
//! `{"op":"and","args":[...]}`. Before it is used in a search loop it is bound
//! to a concrete [`Dataset`] with [`Predicate::bind`], which resolves keyword
//! strings to dictionary codes, compiles regexes and picks the bitset path
//! for small keyword universes.
//!
//! `regex_match` has substring semantics: the predicate passes if the pattern
//! matches anywhere in the text, and anchors such as `^` keep their usual
//! meaning.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::{AttrValue, AttributeTuple, Column, Dataset, KeywordColumn};
use crate::error::{Error, Result};
use crate::query::HybridQuery;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    True,
    False,
    Equals { attr: usize, value: i64 },
    /// Inclusive on both ends.
    Between { attr: usize, lo: i64, hi: i64 },
    /// Passes if the keyword set intersects `any`.
    Contains { attr: usize, any: Vec<String> },
    RegexMatch { attr: usize, pattern: String },
    And { args: Vec<Predicate> },
}

impl Predicate {
    pub fn equals(attr: usize, value: i64) -> Self {
        Predicate::Equals { attr, value }
    }

    pub fn between(attr: usize, lo: i64, hi: i64) -> Self {
        Predicate::Between { attr, lo, hi }
    }

    pub fn contains<S: Into<String>>(attr: usize, any: impl IntoIterator<Item = S>) -> Self {
        Predicate::Contains {
            attr,
            any: any.into_iter().map(Into::into).collect(),
        }
    }

    pub fn regex(attr: usize, pattern: impl Into<String>) -> Self {
        Predicate::RegexMatch {
            attr,
            pattern: pattern.into(),
        }
    }

    pub fn and(args: Vec<Predicate>) -> Self {
        Predicate::And { args }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Predicate::Between { lo, hi, .. } if lo > hi => Err(Error::InvalidParams(format!(
                "between requires lo <= hi, got {lo} > {hi}"
            ))),
            Predicate::RegexMatch { pattern, .. } => Regex::new(pattern)
                .map(|_| ())
                .map_err(|e| Error::InvalidParams(e.to_string())),
            Predicate::And { args } => args.iter().try_for_each(Predicate::validate),
            _ => Ok(()),
        }
    }

    /// Evaluates against a standalone tuple using plain set and string
    /// operations.
    pub fn evaluate(&self, tuple: &AttributeTuple) -> Result<bool> {
        let get = |attr: usize| {
            tuple
                .get(attr)
                .ok_or_else(|| Error::SchemaMismatch(format!("attribute {attr} missing")))
        };
        let mismatch =
            |attr: usize, want: &str| Error::SchemaMismatch(format!("attribute {attr} is not {want}"));
        Ok(match self {
            Predicate::True => true,
            Predicate::False => false,
            Predicate::Equals { attr, value } => match get(*attr)? {
                AttrValue::Int(x) | AttrValue::Date(x) => x == value,
                _ => return Err(mismatch(*attr, "an integer or date")),
            },
            Predicate::Between { attr, lo, hi } => match get(*attr)? {
                AttrValue::Int(x) | AttrValue::Date(x) => lo <= x && x <= hi,
                _ => return Err(mismatch(*attr, "an integer or date")),
            },
            Predicate::Contains { attr, any } => match get(*attr)? {
                AttrValue::Keywords(set) => set.iter().any(|k| any.contains(k)),
                _ => return Err(mismatch(*attr, "a keyword set")),
            },
            Predicate::RegexMatch { attr, pattern } => match get(*attr)? {
                AttrValue::Text(s) => Regex::new(pattern)
                    .map_err(|e| Error::InvalidParams(e.to_string()))?
                    .is_match(s),
                _ => return Err(mismatch(*attr, "text")),
            },
            Predicate::And { args } => {
                for a in args {
                    if !a.evaluate(tuple)? {
                        return Ok(false);
                    }
                }
                true
            }
        })
    }

    /// Compiles the predicate against the columns of `ds`.
    pub fn bind<'a>(&self, ds: &'a Dataset) -> Result<BoundPredicate<'a>> {
        self.validate()?;
        Ok(BoundPredicate {
            root: bind_node(self, ds)?,
        })
    }
}

#[derive(Debug)]
enum Node<'a> {
    Const(bool),
    IntEq(&'a [i64], i64),
    IntRange(&'a [i64], i64, i64),
    KeywordMask(&'a [u64], u64),
    KeywordList(&'a KeywordColumn, Vec<u32>),
    Regex(&'a [String], Regex),
    And(Vec<Node<'a>>),
}

fn bind_node<'a>(p: &Predicate, ds: &'a Dataset) -> Result<Node<'a>> {
    let col = |attr: usize| {
        ds.column(attr).ok_or_else(|| {
            Error::SchemaMismatch(format!(
                "attribute {attr} out of range (dataset has {})",
                ds.columns().len()
            ))
        })
    };
    let mismatch = |attr: usize, want: &str| {
        Error::SchemaMismatch(format!("attribute {attr} is {:?}, predicate needs {want}", ds.schema()[attr]))
    };
    Ok(match p {
        Predicate::True => Node::Const(true),
        Predicate::False => Node::Const(false),
        Predicate::Equals { attr, value } => match col(*attr)? {
            Column::Int(v) | Column::Date(v) => Node::IntEq(v, *value),
            _ => return Err(mismatch(*attr, "an integer or date")),
        },
        Predicate::Between { attr, lo, hi } => match col(*attr)? {
            Column::Int(v) | Column::Date(v) => Node::IntRange(v, *lo, *hi),
            _ => return Err(mismatch(*attr, "an integer or date")),
        },
        Predicate::Contains { attr, any } => match col(*attr)? {
            Column::Keywords(k) => {
                let mut codes: Vec<u32> = any.iter().filter_map(|s| k.code(s)).collect();
                codes.sort_unstable();
                codes.dedup();
                match k.masks() {
                    Some(masks) => Node::KeywordMask(masks, codes.iter().fold(0, |m, &c| m | (1u64 << c))),
                    None => Node::KeywordList(k, codes),
                }
            }
            _ => return Err(mismatch(*attr, "a keyword set")),
        },
        Predicate::RegexMatch { attr, pattern } => match col(*attr)? {
            Column::Text(v) => Node::Regex(v, Regex::new(pattern).map_err(|e| Error::InvalidParams(e.to_string()))?),
            _ => return Err(mismatch(*attr, "text")),
        },
        Predicate::And { args } => Node::And(args.iter().map(|a| bind_node(a, ds)).collect::<Result<_>>()?),
    })
}

impl Node<'_> {
    #[inline]
    fn matches(&self, row: usize) -> bool {
        match self {
            Node::Const(b) => *b,
            Node::IntEq(v, y) => v[row] == *y,
            Node::IntRange(v, lo, hi) => (*lo..=*hi).contains(&v[row]),
            Node::KeywordMask(m, q) => m[row] & q != 0,
            Node::KeywordList(k, q) => sorted_intersects(k.set(row), q),
            Node::Regex(v, re) => re.is_match(&v[row]),
            Node::And(args) => args.iter().all(|a| a.matches(row)),
        }
    }
}

fn sorted_intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Row-level membership test used by the search loops.
pub trait Filter: Sync {
    fn passes(&self, id: u32) -> bool;
}

/// A predicate compiled against one dataset.
#[derive(Debug)]
pub struct BoundPredicate<'a> {
    root: Node<'a>,
}

impl BoundPredicate<'_> {
    /// A predicate that accepts every row.
    pub fn always() -> BoundPredicate<'static> {
        BoundPredicate {
            root: Node::Const(true),
        }
    }

    #[inline]
    pub fn matches(&self, row: u32) -> bool {
        self.root.matches(row as usize)
    }
}

impl Filter for BoundPredicate<'_> {
    #[inline]
    fn passes(&self, id: u32) -> bool {
        self.matches(id)
    }
}

/// Accepts everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl Filter for AcceptAll {
    #[inline]
    fn passes(&self, _id: u32) -> bool {
        true
    }
}

impl<F: Fn(u32) -> bool + Sync> Filter for F {
    fn passes(&self, id: u32) -> bool {
        self(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectivityMethod {
    ExactScan,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectivityEstimate {
    pub value: f64,
    pub method: SelectivityMethod,
    /// Zero for exact scans.
    pub sample_size: usize,
}

/// Ids of all rows passing `p`, ascending.
pub fn passing_ids(p: &Predicate, ds: &Dataset) -> Result<Vec<u32>> {
    let bound = p.bind(ds)?;
    Ok((0..ds.len() as u32).filter(|&i| bound.matches(i)).collect())
}

/// Fraction of rows passing `p`; 0.0 for an empty dataset.
pub fn exact_selectivity(p: &Predicate, ds: &Dataset) -> Result<SelectivityEstimate> {
    let bound = p.bind(ds)?;
    let n = ds.len();
    let hits = (0..n as u32).filter(|&i| bound.matches(i)).count();
    Ok(SelectivityEstimate {
        value: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        method: SelectivityMethod::ExactScan,
        sample_size: 0,
    })
}

/// Passing fraction over a uniform sample drawn without replacement.
pub fn estimate_selectivity(
    p: &Predicate,
    ds: &Dataset,
    sample_size: usize,
    seed: u64,
) -> Result<SelectivityEstimate> {
    if sample_size == 0 {
        return Err(Error::InvalidParams("sample_size must be at least 1".into()));
    }
    let bound = p.bind(ds)?;
    let n = ds.len();
    let k = sample_size.min(n);
    if k == 0 {
        return Ok(SelectivityEstimate {
            value: 0.0,
            method: SelectivityMethod::Sample,
            sample_size: 0,
        });
    }
    let hits = if k == n {
        (0..n as u32).filter(|&i| bound.matches(i)).count()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, n, k)
            .into_iter()
            .filter(|&i| bound.matches(i as u32))
            .count()
    };
    Ok(SelectivityEstimate {
        value: hits as f64 / k as f64,
        method: SelectivityMethod::Sample,
        sample_size: k,
    })
}

/// Signed query correlation of a workload: the mean over queries of
/// `E[g(x, R)] - g(x, X_p)`, where `g(x, S)` is the distance from `x` to its
/// nearest member of `S` and `R` is a uniformly drawn subset of the whole
/// dataset with `|R| = |X_p|`. The inner expectation is estimated from
/// `trials` draws.
pub fn query_correlation(ds: &Dataset, workload: &[HybridQuery], trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    if workload.is_empty() {
        return Ok(0.0);
    }
    let n = ds.len();
    let metric = ds.metric();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nearest = |x: &[f32], ids: &mut dyn Iterator<Item = u32>| -> f64 {
        let best = ids.map(|i| ds.score_to(x, i)).fold(f32::INFINITY, f32::min);
        metric.report(best) as f64
    };
    let mut total = 0.0;
    for (qi, q) in workload.iter().enumerate() {
        let passers = passing_ids(&q.predicate, ds)?;
        if passers.is_empty() {
            return Err(Error::EmptyPredicateSet { query: qi });
        }
        let actual = nearest(&q.vector, &mut passers.iter().copied());
        let k = passers.len();
        let mut random = 0.0;
        for _ in 0..trials {
            random += if k == n {
                nearest(&q.vector, &mut (0..n as u32))
            } else {
                nearest(&q.vector, &mut index::sample(&mut rng, n, k).into_iter().map(|i| i as u32))
            };
        }
        total += random / trials as f64 - actual;
    }
    Ok(total / workload.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kw(words: &[&str]) -> AttrValue {
        AttrValue::Keywords(words.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn operator_examples() {
        assert!(Predicate::equals(0, 7).evaluate(&vec![AttrValue::Int(7)]).unwrap());
        assert!(!Predicate::between(0, 2000, 2010).evaluate(&vec![AttrValue::Date(1999)]).unwrap());
        assert!(Predicate::contains(0, ["animal", "scary"])
            .evaluate(&vec![kw(&["scary", "red", "old"])])
            .unwrap());
        assert!(Predicate::regex(0, "^[0-9]").evaluate(&vec![AttrValue::Text("9 lives".into())]).unwrap());
        assert!(Predicate::regex(0, "cat").evaluate(&vec![AttrValue::Text("a black cat".into())]).unwrap());
        assert!(!Predicate::regex(0, "^cat").evaluate(&vec![AttrValue::Text("a black cat".into())]).unwrap());
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let err = Predicate::contains(0, ["a"]).evaluate(&vec![AttrValue::Int(1)]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));
        let err = Predicate::equals(3, 1).evaluate(&vec![AttrValue::Int(1)]).unwrap_err();
        assert!(matches!(err, Error::SchemaMismatch(_)));

        let ds = Dataset::from_tuples(1, vec![0.0], vec![vec![AttrValue::Int(1)]]).unwrap();
        assert!(matches!(Predicate::regex(0, "x").bind(&ds), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn between_rejects_inverted_bounds() {
        assert!(Predicate::between(0, 5, 4).validate().is_err());
    }

    #[test]
    fn json_form() {
        let p: Predicate = serde_json::from_str(r#"{"op":"between","attr":1,"lo":2000,"hi":2010}"#).unwrap();
        assert_eq!(p, Predicate::between(1, 2000, 2010));
        let p: Predicate =
            serde_json::from_str(r#"{"op":"and","args":[{"op":"equals","attr":0,"value":3},{"op":"true"}]}"#).unwrap();
        assert_eq!(p, Predicate::and(vec![Predicate::equals(0, 3), Predicate::True]));
    }

    #[test]
    fn selectivity_edge_cases() {
        let empty = Dataset::from_vectors(2, vec![]).unwrap();
        assert_eq!(exact_selectivity(&Predicate::True, &empty).unwrap().value, 0.0);

        let ds = Dataset::from_tuples(1, vec![0.0; 4], (0..4).map(|i| vec![AttrValue::Int(i)]).collect()).unwrap();
        assert_eq!(exact_selectivity(&Predicate::True, &ds).unwrap().value, 1.0);
        let exact = exact_selectivity(&Predicate::between(0, 1, 2), &ds).unwrap();
        assert_eq!(exact.value, 0.5);
        assert_eq!(exact.method, SelectivityMethod::ExactScan);
        let est = estimate_selectivity(&Predicate::between(0, 1, 2), &ds, 4, 9).unwrap();
        assert_eq!(est.value, exact.value);
        assert_eq!(estimate_selectivity(&Predicate::False, &ds, 2, 1).unwrap().value, 0.0);
        assert!(estimate_selectivity(&Predicate::True, &ds, 0, 1).is_err());
    }

    #[test]
    fn correlation_is_zero_when_every_row_passes() {
        let vectors: Vec<f32> = (0..40).map(|i| (i as f32 * 0.37).sin()).collect();
        let ds = Dataset::from_vectors(2, vectors).unwrap();
        let wl = vec![HybridQuery::new(vec![0.1, 0.2], Predicate::True, 1)];
        assert_eq!(query_correlation(&ds, &wl, 3, 1).unwrap(), 0.0);
        let wl = vec![HybridQuery::new(vec![0.1, 0.2], Predicate::False, 1)];
        assert!(matches!(query_correlation(&ds, &wl, 3, 1), Err(Error::EmptyPredicateSet { query: 0 })));
    }

    fn keyword_dataset(rows: &[Vec<String>]) -> Dataset {
        let tuples = rows.iter().map(|r| vec![AttrValue::Keywords(r.clone())]).collect();
        Dataset::from_tuples(1, vec![0.0; rows.len()], tuples).unwrap()
    }

    proptest! {
        // bitset path (universe <= 64) against naive string intersection
        #[test]
        fn bitset_contains_matches_naive(
            rows in prop::collection::vec(prop::collection::vec(0u8..40, 0..5), 1..60),
            query in prop::collection::vec(0u8..45, 0..4),
        ) {
            let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|k| format!("k{k}")).collect()).collect();
            let ds = keyword_dataset(&rows);
            let p = Predicate::contains(0, query.iter().map(|k| format!("k{k}")));
            let bound = p.bind(&ds).unwrap();
            for (i, row) in rows.iter().enumerate() {
                let naive = row.iter().any(|k| query.iter().any(|q| &format!("k{q}") == k));
                prop_assert_eq!(bound.matches(i as u32), naive);
                prop_assert_eq!(p.evaluate(&ds.tuple(i)).unwrap(), naive);
            }
        }

        // large universes fall back to sorted-list intersection
        #[test]
        fn list_contains_matches_naive(
            rows in prop::collection::vec(prop::collection::vec(0u16..200, 0..6), 70..90),
            query in prop::collection::vec(0u16..200, 0..6),
        ) {
            let mut rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|k| format!("k{k}")).collect()).collect();
            rows.push((0..70).map(|k| format!("k{k}")).collect());
            let ds = keyword_dataset(&rows);
            let p = Predicate::contains(0, query.iter().map(|k| format!("k{k}")));
            let bound = p.bind(&ds).unwrap();
            for (i, row) in rows.iter().enumerate() {
                let naive = row.iter().any(|k| query.iter().any(|q| &format!("k{q}") == k));
                prop_assert_eq!(bound.matches(i as u32), naive);
            }
        }

        #[test]
        fn conjunction_is_no_more_selective(
            vals in prop::collection::vec((0i64..12, 0i64..100), 1..200),
            label in 0i64..12, lo in 0i64..100, width in 0i64..100,
        ) {
            let tuples = vals.iter().map(|&(a, b)| vec![AttrValue::Int(a), AttrValue::Date(b)]).collect();
            let ds = Dataset::from_tuples(1, vec![0.0; vals.len()], tuples).unwrap();
            let p1 = Predicate::equals(0, label);
            let p2 = Predicate::between(1, lo, lo + width);
            let s1 = exact_selectivity(&p1, &ds).unwrap().value;
            let s2 = exact_selectivity(&p2, &ds).unwrap().value;
            let s12 = exact_selectivity(&Predicate::and(vec![p1, p2]), &ds).unwrap().value;
            prop_assert!(s12 <= s1.min(s2));
        }
    }
}
