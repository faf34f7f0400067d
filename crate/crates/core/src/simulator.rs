//! Simulated user: given the selected example, proposes `λ_{z, gold(x)}` for
//! a primitive `z` of the example whose true train accuracy clears a
//! threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::index::PrimitiveIndex;
use crate::label::Label;
use crate::rng::pick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyBehavior {
    #[default]
    Skip,
    /// Return the most accurate candidate even if it is below threshold.
    BestEffort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub accuracy_threshold: f64,
    pub empty_behavior: EmptyBehavior,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        SimulatorConfig {
            accuracy_threshold: 0.5,
            empty_behavior: EmptyBehavior::Skip,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.accuracy_threshold) {
            return Err(Error::Config(format!(
                "simulator.accuracy_threshold must be in [0, 1], got {}",
                self.accuracy_threshold
            )));
        }
        Ok(())
    }
}

/// Gold accuracy of `λ_{z,y}` over its gold-labeled train coverage; `None`
/// when nothing gold-labeled is covered.
pub fn true_accuracy(z: u32, y: Label, corpus: &Corpus, index: &PrimitiveIndex) -> Option<f64> {
    let (mut n, mut correct) = (0usize, 0usize);
    for &i in index.postings(z) {
        if let Some(g) = corpus.gold(i) {
            n += 1;
            correct += usize::from(g == y);
        }
    }
    (n > 0).then(|| correct as f64 / n as f64)
}

/// A candidate LF with its true accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub primitive: u32,
    pub label: Label,
    pub accuracy: f64,
}

/// Candidates `λ_{z, gold(x)}` for every primitive of example `id`, in
/// primitive order.
pub fn candidates(id: usize, corpus: &Corpus, index: &PrimitiveIndex) -> Result<Vec<Candidate>> {
    let x = corpus.example(id);
    let y = x.gold.ok_or(Error::MissingGold(id))?;
    Ok(x
        .primitives
        .iter()
        .filter_map(|&z| {
            true_accuracy(z, y, corpus, index).map(|accuracy| Candidate {
                primitive: z,
                label: y,
                accuracy,
            })
        })
        .collect())
}

/// `Some((primitive, label))` or `None` for a skip.
pub fn simulate_response(
    id: usize,
    corpus: &Corpus,
    index: &PrimitiveIndex,
    config: &SimulatorConfig,
    rng: &mut impl Rng,
) -> Result<Option<(u32, Label)>> {
    let all = candidates(id, corpus, index)?;
    let survivors: Vec<Candidate> = all
        .iter()
        .copied()
        .filter(|c| c.accuracy >= config.accuracy_threshold)
        .collect();
    if !survivors.is_empty() {
        let c = pick(&survivors, rng);
        return Ok(Some((c.primitive, c.label)));
    }
    Ok(match config.empty_behavior {
        EmptyBehavior::Skip => None,
        EmptyBehavior::BestEffort => all
            .iter()
            .fold(None::<Candidate>, |best, &c| match best {
                Some(b) if b.accuracy >= c.accuracy => Some(b),
                _ => Some(c),
            })
            .map(|c| (c.primitive, c.label)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IngestConfig, Record};
    use crate::rng::{stream, Purpose};

    fn corpus(texts: &[(&str, Label)]) -> Corpus {
        let recs = texts
            .iter()
            .map(|(t, l)| Record::Text { text: t.to_string(), label: Some(*l) })
            .collect();
        Corpus::from_records(recs, &IngestConfig { seed: 0, ratios: [1.0, 0.0, 0.0], min_token_len: 2 }, "mem").unwrap()
    }

    #[test]
    fn sole_accurate_primitive_is_returned() {
        let c = corpus(&[("great", Label::Pos), ("great", Label::Pos), ("awful", Label::Neg)]);
        let index = PrimitiveIndex::build(&c);
        let r = simulate_response(0, &c, &index, &SimulatorConfig::default(), &mut stream(0, Purpose::Simulate, 0)).unwrap();
        assert_eq!(r, Some((c.primitive_id("great").unwrap(), Label::Pos)));
    }

    #[test]
    fn skip_when_nothing_clears_threshold() {
        let c = corpus(&[("film", Label::Pos), ("film", Label::Neg), ("film", Label::Neg)]);
        let index = PrimitiveIndex::build(&c);
        let config = SimulatorConfig { accuracy_threshold: 0.5, ..Default::default() };
        let mut rng = stream(0, Purpose::Simulate, 0);
        assert_eq!(simulate_response(0, &c, &index, &config, &mut rng).unwrap(), None);
        let best = SimulatorConfig { empty_behavior: EmptyBehavior::BestEffort, ..config };
        assert_eq!(
            simulate_response(0, &c, &index, &best, &mut rng).unwrap(),
            Some((c.primitive_id("film").unwrap(), Label::Pos))
        );
    }

    #[test]
    fn accuracies_match_exhaustive_gold_scan() {
        let c = corpus(&[
            ("good plot", Label::Pos),
            ("good acting bad plot", Label::Neg),
            ("bad bad", Label::Neg),
            ("good", Label::Pos),
            ("plot twist", Label::Pos),
        ]);
        let index = PrimitiveIndex::build(&c);
        for id in 0..c.len() {
            let y = c.gold(id).unwrap();
            for cand in candidates(id, &c, &index).unwrap() {
                let (mut n, mut k) = (0, 0);
                for x in &c.examples {
                    if c.splits.train.contains(&x.id) && x.contains(cand.primitive) {
                        n += 1;
                        k += usize::from(x.gold == Some(y));
                    }
                }
                assert_eq!(cand.accuracy, k as f64 / n as f64);
            }
        }
    }

    #[test]
    fn missing_gold_is_an_error() {
        let recs = vec![Record::Text { text: "alpha".into(), label: None }];
        let c = Corpus::from_records(recs, &IngestConfig { seed: 0, ratios: [1.0, 0.0, 0.0], min_token_len: 2 }, "mem").unwrap();
        let index = PrimitiveIndex::build(&c);
        let r = simulate_response(0, &c, &index, &SimulatorConfig::default(), &mut stream(0, Purpose::Simulate, 0));
        assert!(matches!(r, Err(Error::MissingGold(0))));
    }

    #[test]
    fn seeded_pick_among_survivors() {
        let c = corpus(&[("aa bb cc dd", Label::Pos), ("aa bb cc dd", Label::Pos)]);
        let index = PrimitiveIndex::build(&c);
        let draw = |k| simulate_response(0, &c, &index, &SimulatorConfig::default(), &mut stream(3, Purpose::Simulate, k)).unwrap();
        let picks: Vec<_> = (0..40).map(draw).collect();
        assert_eq!(picks, (0..40).map(draw).collect::<Vec<_>>());
        let distinct: std::collections::BTreeSet<_> = picks.iter().collect();
        assert_eq!(distinct.len(), 4);
    }
}
