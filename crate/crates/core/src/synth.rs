//! Seeded synthetic corpora.
//!
//! - [`four_clusters`]: two large and two small clusters, each marked by its
//!   own keyword; planted LFs cover the large ones.
//! - [`keyword_corpus`]: text documents mixing label-correlated keywords with
//!   neutral background words, both Zipf-distributed.
//! - [`ring_corpus`]: examples on a circle whose keywords are accurate near
//!   their home arc and uninformative elsewhere.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, IngestConfig, Record};
use crate::error::Result;
use crate::label::Label;
use crate::lf::LabelingFunction;
use crate::rng::{stream, Purpose};

fn rng_for(seed: u64, which: u64) -> rand_chacha::ChaCha8Rng {
    stream(seed, Purpose::Generate, which)
}

fn coin(rng: &mut impl Rng) -> Label {
    if rng.random_bool(0.5) {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// Cluster keyword, size, label and 2-d centre of [`four_clusters`]. Each
/// small cluster sits on the same side as the large cluster sharing its
/// label.
pub const FOUR_CLUSTERS: [(&str, usize, Label, [f64; 2]); 4] = [
    ("alpha", 40, Label::Pos, [2.0, 1.0]),
    ("beta", 40, Label::Neg, [-2.0, 1.0]),
    ("gamma", 10, Label::Pos, [2.0, -1.0]),
    ("delta", 10, Label::Neg, [-2.0, -1.0]),
];

/// 100 points around four 2-d centres; all of them go to the train split.
/// Every example carries its cluster keyword and a shared `common`
/// primitive. Returns the corpus and the planted LFs `λ_{alpha,+1}`,
/// `λ_{beta,-1}`.
pub fn four_clusters(seed: u64) -> Result<(Corpus, Vec<LabelingFunction>)> {
    let mut rng = rng_for(seed, 1);
    let mut records = Vec::new();
    for &(kw, size, label, centre) in &FOUR_CLUSTERS {
        for _ in 0..size {
            let features = centre.iter().map(|c| c + rng.random_range(-0.2..0.2)).collect();
            records.push(Record::Primitive {
                text: Some(format!("{kw} common")),
                primitives: vec![kw.to_string(), "common".to_string()],
                features,
                label: Some(label),
            });
        }
    }
    let corpus = Corpus::from_records(
        records,
        &IngestConfig {
            seed,
            ratios: [1.0, 0.0, 0.0],
            min_token_len: 2,
        },
        "four-clusters",
    )?;
    let lf = |kw: &str, label| LabelingFunction {
        primitive: corpus.primitive_id(kw).expect("generated keyword"),
        label,
        lineage_example: corpus
            .examples
            .iter()
            .position(|x| x.contains(corpus.primitive_id(kw).unwrap()))
            .unwrap(),
        created_at: 0,
    };
    let planted = vec![lf("alpha", Label::Pos), lf("beta", Label::Neg)];
    Ok((corpus, planted))
}

/// Zipf weights `1/rank` over `n` items in a seeded random rank order.
fn zipf_weights(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut ranks: Vec<usize> = (1..=n).collect();
    for i in (1..n).rev() {
        ranks.swap(i, rng.random_range(0..=i));
    }
    ranks.into_iter().map(|r| 1.0 / r as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordCorpusConfig {
    pub n: usize,
    pub keywords: usize,
    pub neutral: usize,
    /// Range of `P(y = polarity | keyword present)`.
    pub correlation: (f64, f64),
    /// Probability that a token is a keyword.
    pub keyword_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for KeywordCorpusConfig {
    fn default() -> Self {
        KeywordCorpusConfig {
            n: 2000,
            keywords: 100,
            neutral: 200,
            correlation: (0.6, 0.95),
            keyword_rate: 0.25,
            min_len: 8,
            max_len: 20,
        }
    }
}

/// Planted keyword: name, polarity and label correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedKeyword {
    pub word: String,
    pub polarity: Label,
    pub correlation: f64,
}

/// Text records with keywords `kwNNN` and neutral words `nwNNN`. Keyword
/// `k` is drawn with weight `f_k · c_k` under its polarity and
/// `f_k · (1 - c_k)` under the other label, so with balanced classes a
/// keyword token carries `P(y = polarity | k) = c_k`. Document-level
/// accuracy is somewhat lower for frequent keywords, which can occur in a
/// document of either class.
pub fn keyword_records(seed: u64, config: &KeywordCorpusConfig) -> (Vec<Record>, Vec<PlantedKeyword>) {
    let mut rng = rng_for(seed, 2);
    // keywords 2j and 2j+1 share frequency and correlation with opposite
    // polarities, which keeps both class-conditional normalizers equal
    let pairs = config.keywords.div_ceil(2);
    let pair_corr: Vec<f64> = (0..pairs)
        .map(|_| rng.random_range(config.correlation.0..=config.correlation.1))
        .collect();
    let pair_freq = zipf_weights(pairs, &mut rng);
    let planted: Vec<PlantedKeyword> = (0..config.keywords)
        .map(|k| PlantedKeyword {
            word: format!("kw{k:03}"),
            polarity: if k % 2 == 0 { Label::Pos } else { Label::Neg },
            correlation: pair_corr[k / 2],
        })
        .collect();
    let kw_freq: Vec<f64> = (0..config.keywords).map(|k| pair_freq[k / 2]).collect();
    let nw_freq = zipf_weights(config.neutral, &mut rng);
    let by_label = |y: Label| {
        let w: Vec<f64> = planted
            .iter()
            .zip(&kw_freq)
            .map(|(p, f)| if p.polarity == y { f * p.correlation } else { f * (1.0 - p.correlation) })
            .collect();
        WeightedIndex::new(w).expect("positive weights")
    };
    let (kw_pos, kw_neg) = (by_label(Label::Pos), by_label(Label::Neg));
    let neutral = WeightedIndex::new(&nw_freq).expect("positive weights");
    let records = (0..config.n)
        .map(|_| {
            let y = coin(&mut rng);
            let len = rng.random_range(config.min_len..=config.max_len);
            let words: Vec<String> = (0..len)
                .map(|_| {
                    if rng.random_bool(config.keyword_rate) {
                        let k = match y {
                            Label::Pos => kw_pos.sample(&mut rng),
                            Label::Neg => kw_neg.sample(&mut rng),
                        };
                        planted[k].word.clone()
                    } else {
                        format!("nw{:03}", neutral.sample(&mut rng))
                    }
                })
                .collect();
            Record::Text {
                text: words.join(" "),
                label: Some(y),
            }
        })
        .collect();
    (records, planted)
}

pub fn keyword_corpus(seed: u64, config: &KeywordCorpusConfig) -> Result<Corpus> {
    let (records, _) = keyword_records(seed, config);
    Corpus::from_records(
        records,
        &IngestConfig {
            seed,
            ..IngestConfig::default()
        },
        "keyword-corpus",
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingCorpusConfig {
    pub n: usize,
    pub keywords: usize,
    /// Half-width of a keyword's home arc, as a fraction of the circle.
    pub home_half_width: f64,
    /// Per-keyword occurrence rate at home (averaged over labels).
    pub home_rate: f64,
    /// Per-keyword occurrence rate away from home.
    pub away_rate: f64,
    /// `P(y = polarity | keyword present at home)`.
    pub home_accuracy: f64,
    /// Weight of the `(cos, sin)` position coordinates.
    pub position_scale: f64,
    /// Weight of the keyword blocks.
    pub keyword_scale: f64,
}

impl Default for RingCorpusConfig {
    fn default() -> Self {
        RingCorpusConfig {
            n: 2000,
            keywords: 40,
            home_half_width: 0.25,
            home_rate: 0.15,
            away_rate: 0.05,
            home_accuracy: 0.9,
            position_scale: 1.0,
            keyword_scale: 0.3,
        }
    }
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Examples at uniform positions `u` on a circle with labels drawn
/// independently of position. Keyword `k` has a home arc centred at
/// `k / keywords` and a random polarity. At home it occurs at rate
/// `2·home_rate·home_accuracy` on examples of its polarity and
/// `2·home_rate·(1 - home_accuracy)` otherwise, so its accuracy there is
/// `home_accuracy`; away from home it occurs at `away_rate` regardless of
/// the label, so its accuracy there is 0.5.
///
/// Features are `(cos θ, sin θ)` followed, per keyword, by
/// `indicator · (1, cos θ, sin θ)`, which lets a linear model weight a
/// keyword by where it occurs.
pub fn ring_records(seed: u64, config: &RingCorpusConfig) -> Vec<Record> {
    let mut rng = rng_for(seed, 3);
    let polarity: Vec<Label> = (0..config.keywords).map(|_| coin(&mut rng)).collect();
    let centers: Vec<f64> = (0..config.keywords).map(|k| k as f64 / config.keywords as f64).collect();
    (0..config.n)
        .map(|_| {
            let u: f64 = rng.random_range(0.0..1.0);
            let y = coin(&mut rng);
            let mut present: Vec<usize> = (0..config.keywords)
                .filter(|&k| {
                    let rate = if circular_gap(u, centers[k]) <= config.home_half_width {
                        let a = if polarity[k] == y {
                            config.home_accuracy
                        } else {
                            1.0 - config.home_accuracy
                        };
                        2.0 * config.home_rate * a
                    } else {
                        config.away_rate
                    };
                    rng.random_bool(rate.min(1.0))
                })
                .collect();
            if present.is_empty() {
                present.push(rng.random_range(0..config.keywords));
            }
            let theta = std::f64::consts::TAU * u;
            let (c, s) = (theta.cos(), theta.sin());
            let mut features = vec![config.position_scale * c, config.position_scale * s];
            let mut block = vec![0.0; 3 * config.keywords];
            for &k in &present {
                let b = config.keyword_scale;
                block[3 * k..3 * k + 3].copy_from_slice(&[b, b * c, b * s]);
            }
            features.extend(block);
            Record::Primitive {
                text: None,
                primitives: present.iter().map(|k| format!("kw{k:02}")).collect(),
                features,
                label: Some(y),
            }
        })
        .collect()
}

pub fn ring_corpus(seed: u64, config: &RingCorpusConfig) -> Result<Corpus> {
    Corpus::from_records(
        ring_records(seed, config),
        &IngestConfig {
            seed,
            ..IngestConfig::default()
        },
        "ring-corpus",
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::PrimitiveIndex;
    use crate::simulator::true_accuracy;

    #[test]
    fn four_clusters_shape() {
        let (c, lfs) = four_clusters(3).unwrap();
        assert_eq!(c.len(), 100);
        assert_eq!(c.splits.train.len(), 100);
        for lf in &lfs {
            let index = PrimitiveIndex::build(&c);
            assert_eq!(index.postings(lf.primitive).len(), 40);
            assert_eq!(true_accuracy(lf.primitive, lf.label, &c, &index), Some(1.0));
        }
    }

    #[test]
    fn keyword_corpus_plants_correlations() {
        let config = KeywordCorpusConfig::default();
        let c = keyword_corpus(1, &config).unwrap();
        assert_eq!(c.len(), 2000);
        assert!(c.vocabulary.len() <= 300);
        let (_, planted) = keyword_records(1, &config);
        let index = PrimitiveIndex::build(&c);
        // token-level correlation holds exactly; at document level rare
        // keywords track it and frequent ones are pulled towards 0.5
        let mut checked = 0;
        for p in &planted {
            let Some(z) = c.primitive_id(&p.word) else { continue };
            let n = index.postings(z).len();
            if !(50..=150).contains(&n) {
                continue;
            }
            let acc = true_accuracy(z, p.polarity, &c, &index).unwrap();
            let slack = 4.0 * (0.25 / n as f64).sqrt();
            assert!(acc > 0.5 - slack && acc < p.correlation + slack, "{} {} {}", p.word, acc, p.correlation);
            checked += 1;
        }
        assert!(checked >= 5, "{checked}");
    }

    #[test]
    fn generators_are_deterministic() {
        let a = ring_corpus(5, &RingCorpusConfig::default()).unwrap();
        let b = ring_corpus(5, &RingCorpusConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = ring_corpus(6, &RingCorpusConfig::default()).unwrap();
        assert_ne!(a, c);
        let config = KeywordCorpusConfig { n: 50, ..Default::default() };
        assert_eq!(keyword_records(2, &config).0, keyword_records(2, &config).0);
    }
}
