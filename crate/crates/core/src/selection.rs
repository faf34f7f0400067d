//! Development-data selectors.
//!
//! All selectors take the argmax of a per-example score over the candidate
//! pool and break ties by a seeded uniform draw among the maximizers.
//! The expected-utility selector (SEU) scores an example `x` by
//!
//! ```text
//! score(x) = Σ_{z ∈ x} Σ_y P(λ_{z,y} | x) · Ψ(λ_{z,y})
//! P(λ_{z,y} | x) = P(y) · acc(λ_{z,y}) / Σ_{z' ∈ x} acc(λ_{z',y})
//! Ψ(λ) = Σ_{i ∈ coverage(λ)} ψ(x_i) · λ(x_i) · ŷ_i
//! ```
//!
//! with `ψ` the label-model entropy and `ŷ` the end-model predictions.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Example};
use crate::error::{Error, Result};
use crate::index::PrimitiveIndex;
use crate::label::Label;
use crate::label_model::Posterior;
use crate::lf::{accuracy_over, LabelMatrix, LabelingFunction, Predictions};
use crate::rng::pick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    Random,
    Abstain,
    Disagree,
    #[default]
    Seu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserModel {
    #[default]
    AccuracyWeighted,
    /// `P(y) / |x|` for every primitive of `x`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Utility {
    #[default]
    Full,
    /// Sum of correctness signs, no uncertainty weight.
    NoInformativeness,
    /// Sum of uncertainties, no correctness sign.
    NoCorrectness,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub user_model: UserModel,
    pub utility: Utility,
    /// Score examples for a user who may return several LFs at once.
    pub multi_lf: bool,
}

/// Train ids still eligible for selection, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePool {
    ids: Vec<usize>,
}

impl CandidatePool {
    pub fn new(corpus: &Corpus) -> Self {
        CandidatePool {
            ids: corpus.splits.train.clone(),
        }
    }

    pub fn from_ids(mut ids: Vec<usize>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        CandidatePool { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    /// Returns whether `id` was present.
    pub fn remove(&mut self, id: usize) -> bool {
        match self.ids.binary_search(&id) {
            Ok(pos) => {
                self.ids.remove(pos);
                true
            }
            Err(_) => false,
        }
    }
}

/// Model state a selector may look at. `matrix` and `posterior` are over the
/// train split (the matrix the label model consumed, refined or not);
/// `predictions` is `None` until an end model exists.
#[derive(Debug, Clone, Copy)]
pub struct SelectionInputs<'a> {
    pub corpus: &'a Corpus,
    pub index: &'a PrimitiveIndex,
    pub matrix: &'a LabelMatrix,
    pub posterior: Option<&'a Posterior>,
    pub predictions: Option<&'a Predictions>,
    pub prior_positive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub id: usize,
    /// Winning score; `None` for random draws (including cold start).
    pub score: Option<f64>,
    /// Number of pool members sharing the winning score.
    pub ties: usize,
}

fn label_slot(y: Label) -> usize {
    match y {
        Label::Pos => 0,
        Label::Neg => 1,
    }
}

fn prior_of(y: Label, prior_positive: f64) -> f64 {
    match y {
        Label::Pos => prior_positive,
        Label::Neg => 1.0 - prior_positive,
    }
}

/// Per-iteration tables over every candidate LF `λ_{z,y}`: estimated accuracy
/// and utility `Ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    acc: Vec<[f64; 2]>,
    psi: Vec<[f64; 2]>,
}

impl UtilityTable {
    pub fn build(
        index: &PrimitiveIndex,
        posterior: Option<&Posterior>,
        predictions: &Predictions,
        utility: Utility,
    ) -> Self {
        let n = index.num_primitives();
        let mut acc = vec![[crate::lf::DEFAULT_ACCURACY; 2]; n];
        let mut psi = vec![[0.0; 2]; n];
        for z in index.active_primitives() {
            let postings = index.postings(z);
            for y in Label::BOTH {
                acc[z as usize][label_slot(y)] = accuracy_over(postings, y, predictions).value;
                psi[z as usize][label_slot(y)] = utility_over(postings, y, posterior, predictions, utility);
            }
        }
        UtilityTable { acc, psi }
    }

    pub fn accuracy(&self, z: u32, y: Label) -> f64 {
        self.acc[z as usize][label_slot(y)]
    }

    pub fn utility(&self, z: u32, y: Label) -> f64 {
        self.psi[z as usize][label_slot(y)]
    }
}

fn example_uncertainty(posterior: Option<&Posterior>, id: usize) -> f64 {
    posterior
        .and_then(|p| p.uncertainty_of(id))
        .unwrap_or(std::f64::consts::LN_2)
}

fn utility_over(
    coverage: &[usize],
    y: Label,
    posterior: Option<&Posterior>,
    predictions: &Predictions,
    utility: Utility,
) -> f64 {
    let mut total = 0.0;
    for &i in coverage {
        let Some(pred) = predictions.get(i).copied().flatten() else {
            continue;
        };
        let sign = f64::from(y.value() * pred.value());
        let psi = example_uncertainty(posterior, i);
        total += match utility {
            Utility::Full => psi * sign,
            Utility::NoInformativeness => sign,
            Utility::NoCorrectness => psi,
        };
    }
    total
}

/// `Ψ(λ)` summed over the LF's train coverage.
pub fn lf_utility(
    lf: &LabelingFunction,
    posterior: Option<&Posterior>,
    predictions: &Predictions,
    index: &PrimitiveIndex,
    utility: Utility,
) -> f64 {
    utility_over(index.postings(lf.primitive), lf.label, posterior, predictions, utility)
}

/// `P(λ_{z,y} | x)` under the configured user model. `acc` gives the
/// estimated accuracy of `λ_{z', y}` for any primitive `z'`.
pub fn user_model(
    x: &Example,
    y: Label,
    z: u32,
    acc: impl Fn(u32, Label) -> f64,
    prior_positive: f64,
    model: UserModel,
) -> f64 {
    if !x.contains(z) {
        return 0.0;
    }
    let py = prior_of(y, prior_positive);
    let uniform = py / x.primitives.len() as f64;
    match model {
        UserModel::Uniform => uniform,
        UserModel::AccuracyWeighted => {
            let denom: f64 = x.primitives.iter().map(|&z2| acc(z2, y)).sum();
            if denom > 0.0 {
                py * acc(z, y) / denom
            } else {
                uniform
            }
        }
    }
}

/// SEU score of `x`. Loops primitives outer, labels inner.
pub fn seu_score(x: &Example, table: &UtilityTable, prior_positive: f64, config: &SelectorConfig) -> f64 {
    let mut score = 0.0;
    if config.multi_lf {
        for &z in &x.primitives {
            for y in Label::BOTH {
                let a = table.accuracy(z, y);
                if a > 0.5 {
                    score += prior_of(y, prior_positive) * a * table.utility(z, y);
                }
            }
        }
        return score;
    }
    let denoms: [f64; 2] = Label::BOTH.map(|y| x.primitives.iter().map(|&z| table.accuracy(z, y)).sum());
    let n = x.primitives.len() as f64;
    for &z in &x.primitives {
        for y in Label::BOTH {
            let py = prior_of(y, prior_positive);
            let denom = denoms[label_slot(y)];
            let p = match config.user_model {
                UserModel::AccuracyWeighted if denom > 0.0 => py * table.accuracy(z, y) / denom,
                _ => py / n,
            };
            score += p * table.utility(z, y);
        }
    }
    score
}

fn abstain_score(inputs: &SelectionInputs, id: usize) -> f64 {
    let m = inputs.matrix;
    match m.rows.binary_search(&id) {
        Ok(r) => (m.num_lfs - m.row_coverage(r)) as f64,
        Err(_) => m.num_lfs as f64,
    }
}

/// `1 - max_y c_y / |V|` over the non-abstain votes `V`; 0 with fewer than
/// two votes.
pub fn disagreement(votes: &[i8]) -> f64 {
    let pos = votes.iter().filter(|&&v| v == 1).count();
    let neg = votes.iter().filter(|&&v| v == -1).count();
    let total = pos + neg;
    if total < 2 {
        return 0.0;
    }
    1.0 - pos.max(neg) as f64 / total as f64
}

fn disagree_score(inputs: &SelectionInputs, id: usize) -> f64 {
    match inputs.matrix.rows.binary_search(&id) {
        Ok(r) => disagreement(inputs.matrix.row(r)),
        Err(_) => 0.0,
    }
}

/// Scores of every pool member, or `None` when the selector should draw at
/// random (the Random kind, or SEU before any end model exists).
pub fn score_pool(pool: &CandidatePool, inputs: &SelectionInputs, config: &SelectorConfig) -> Option<Vec<f64>> {
    match config.kind {
        SelectorKind::Random => None,
        SelectorKind::Abstain => Some(pool.ids.iter().map(|&i| abstain_score(inputs, i)).collect()),
        SelectorKind::Disagree => Some(pool.ids.iter().map(|&i| disagree_score(inputs, i)).collect()),
        SelectorKind::Seu => {
            let predictions = inputs.predictions?;
            let table = UtilityTable::build(inputs.index, inputs.posterior, predictions, config.utility);
            Some(
                pool.ids
                    .iter()
                    .map(|&i| seu_score(inputs.corpus.example(i), &table, inputs.prior_positive, config))
                    .collect(),
            )
        }
    }
}

/// Seeded argmax over `scores` (aligned with `pool`).
pub fn argmax_with_ties(pool: &CandidatePool, scores: &[f64], rng: &mut impl Rng) -> Selection {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<usize> = pool
        .ids
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s == best)
        .map(|(&i, _)| i)
        .collect();
    Selection {
        id: pick(&winners, rng),
        score: Some(best),
        ties: winners.len(),
    }
}

pub fn select(
    pool: &CandidatePool,
    inputs: &SelectionInputs,
    config: &SelectorConfig,
    rng: &mut impl Rng,
) -> Result<Selection> {
    if pool.is_empty() {
        return Err(Error::SessionComplete);
    }
    Ok(match score_pool(pool, inputs, config) {
        Some(scores) => argmax_with_ties(pool, &scores, rng),
        None => Selection {
            id: pick(&pool.ids, rng),
            score: None,
            ties: pool.len(),
        },
    })
}

/// Debug dump of one iteration's scores.
pub fn write_scores_csv<W: Write>(pool: &CandidatePool, scores: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "id,score")?;
    for (id, s) in pool.ids.iter().zip(scores) {
        writeln!(w, "{id},{s}")?;
    }
    Ok(())
}
