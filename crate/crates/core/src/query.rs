use serde::{Deserialize, Serialize};

use crate::predicate::Predicate;

/// A query vector, a structured predicate, and the number of results wanted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridQuery {
    pub vector: Vec<f32>,
    pub predicate: Predicate,
    pub k: usize,
}

impl HybridQuery {
    pub fn new(vector: Vec<f32>, predicate: Predicate, k: usize) -> Self {
        HybridQuery { vector, predicate, k }
    }
}
