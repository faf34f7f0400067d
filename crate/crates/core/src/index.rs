use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;

/// Inverted index over the train split: `postings[z]` lists, in ascending
/// order, the train example ids whose primitive set contains `z`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveIndex {
    postings: Vec<Vec<usize>>,
}

impl PrimitiveIndex {
    pub fn build(corpus: &Corpus) -> Self {
        let mut postings = vec![Vec::new(); corpus.primitive_domain.len()];
        // train ids are sorted, so each list comes out sorted
        for &i in &corpus.splits.train {
            for &z in &corpus.examples[i].primitives {
                postings[z as usize].push(i);
            }
        }
        PrimitiveIndex { postings }
    }

    pub fn postings(&self, primitive: u32) -> &[usize] {
        self.postings
            .get(primitive as usize)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn num_primitives(&self) -> usize {
        self.postings.len()
    }

    /// Primitive ids with at least one train posting.
    pub fn active_primitives(&self) -> impl Iterator<Item = u32> + '_ {
        self.postings
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(z, _)| z as u32)
    }
}
