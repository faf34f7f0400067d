//! Primitive labeling functions `λ_{z,y}`: vote `y` on examples containing
//! primitive `z`, abstain (0) elsewhere.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Example};
use crate::index::PrimitiveIndex;
use crate::label::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelingFunction {
    pub primitive: u32,
    pub label: Label,
    /// Id of the development example the LF was written from.
    pub lineage_example: usize,
    /// Iteration at which the LF was received.
    pub created_at: usize,
}

/// JSON form of a labeling function, with the primitive spelled out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LfRecord {
    pub primitive: String,
    pub label: Label,
    pub lineage_example: usize,
    pub created_at: usize,
}

impl LabelingFunction {
    pub fn to_record(&self, corpus: &Corpus) -> LfRecord {
        LfRecord {
            primitive: corpus.primitive_name(self.primitive).to_string(),
            label: self.label,
            lineage_example: self.lineage_example,
            created_at: self.created_at,
        }
    }

    pub fn from_record(record: &LfRecord, corpus: &Corpus) -> Option<Self> {
        Some(LabelingFunction {
            primitive: corpus.primitive_id(&record.primitive)?,
            label: record.label,
            lineage_example: record.lineage_example,
            created_at: record.created_at,
        })
    }

    pub fn key(&self) -> (u32, Label) {
        (self.primitive, self.label)
    }
}

pub fn apply_lf(lf: &LabelingFunction, x: &Example) -> i8 {
    if x.contains(lf.primitive) {
        lf.label.value()
    } else {
        0
    }
}

/// Votes of `m` LFs on a list of examples, row-major, entries in {-1, 0, 1}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    /// Example id of each row.
    pub rows: Vec<usize>,
    pub num_lfs: usize,
    votes: Vec<i8>,
}

impl LabelMatrix {
    pub fn from_votes(rows: Vec<usize>, num_lfs: usize, votes: Vec<i8>) -> Self {
        assert_eq!(rows.len() * num_lfs, votes.len(), "vote buffer size");
        assert!(votes.iter().all(|v| (-1..=1).contains(v)), "votes must be in {{-1,0,1}}");
        LabelMatrix { rows, num_lfs, votes }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, r: usize) -> &[i8] {
        &self.votes[r * self.num_lfs..(r + 1) * self.num_lfs]
    }

    pub fn get(&self, r: usize, j: usize) -> i8 {
        self.votes[r * self.num_lfs + j]
    }

    pub fn set(&mut self, r: usize, j: usize, vote: i8) {
        debug_assert!((-1..=1).contains(&vote));
        self.votes[r * self.num_lfs + j] = vote;
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = i8> + '_ {
        (0..self.rows.len()).map(move |r| self.get(r, j))
    }

    /// Number of non-abstain votes on row `r`.
    pub fn row_coverage(&self, r: usize) -> usize {
        self.row(r).iter().filter(|&&v| v != 0).count()
    }

    pub fn column_coverage(&self, j: usize) -> usize {
        self.column(j).filter(|&v| v != 0).count()
    }

    pub fn negated(&self) -> Self {
        LabelMatrix {
            rows: self.rows.clone(),
            num_lfs: self.num_lfs,
            votes: self.votes.iter().map(|v| -v).collect(),
        }
    }

    /// Same rows with columns reordered: new column `k` is old column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.num_lfs);
        let mut votes = Vec::with_capacity(self.votes.len());
        for r in 0..self.rows.len() {
            votes.extend(perm.iter().map(|&j| self.get(r, j)));
        }
        LabelMatrix { rows: self.rows.clone(), num_lfs: self.num_lfs, votes }
    }
}

pub fn build_label_matrix(lfs: &[LabelingFunction], corpus: &Corpus, split: &[usize]) -> LabelMatrix {
    let mut votes = Vec::with_capacity(split.len() * lfs.len());
    for &i in split {
        let x = corpus.example(i);
        votes.extend(lfs.iter().map(|lf| apply_lf(lf, x)));
    }
    LabelMatrix::from_votes(split.to_vec(), lfs.len(), votes)
}

/// Estimated accuracy of an LF; `is_default` marks the 0.5 fallback used when
/// nothing is covered or no predictions exist yet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub value: f64,
    pub is_default: bool,
}

pub const DEFAULT_ACCURACY: f64 = 0.5;

impl AccuracyEstimate {
    pub const DEFAULT: AccuracyEstimate = AccuracyEstimate {
        value: DEFAULT_ACCURACY,
        is_default: true,
    };
}

/// Per-example predicted labels, indexed by example id (`None` outside the
/// predicted split).
pub type Predictions = Vec<Option<Label>>;

/// Fraction of the LF's covered train examples whose prediction equals the
/// LF label.
pub fn estimate_lf_accuracy(
    lf: &LabelingFunction,
    index: &PrimitiveIndex,
    predictions: &Predictions,
) -> AccuracyEstimate {
    accuracy_over(index.postings(lf.primitive), lf.label, predictions)
}

pub(crate) fn accuracy_over(coverage: &[usize], label: Label, predictions: &Predictions) -> AccuracyEstimate {
    let mut covered = 0usize;
    let mut agree = 0usize;
    for &i in coverage {
        if let Some(p) = predictions.get(i).copied().flatten() {
            covered += 1;
            if p == label {
                agree += 1;
            }
        }
    }
    if covered == 0 {
        return AccuracyEstimate::DEFAULT;
    }
    AccuracyEstimate {
        value: agree as f64 / covered as f64,
        is_default: false,
    }
}
