//! Dataset ingestion: JSON-lines records → [`Corpus`] with primitives,
//! feature vectors and seeded train/valid/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::sparse::SparseVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// `{"text": ..., "label": -1|1}`; primitives are unigrams, features TF-IDF.
    TextJsonl,
    /// `{"primitives": [...], "features": [...], "label": -1|1}`; used verbatim.
    PrimitiveJsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub seed: u64,
    /// train / valid / test fractions.
    pub ratios: [f64; 3],
    pub min_token_len: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            seed: 0,
            ratios: [0.8, 0.1, 0.1],
            min_token_len: 2,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config(format!("ingest.ratios out of [0,1]: {:?}", self.ratios)));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("ingest.ratios must sum to 1, got {sum}")));
        }
        if self.min_token_len == 0 {
            return Err(Error::Config("ingest.min_token_len must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    /// Sorted, deduplicated indices into [`Corpus::primitive_domain`].
    pub primitives: Vec<u32>,
    pub features: SparseVec,
    /// Hidden from selectors and models; read by the simulator and evaluator only.
    pub gold: Option<Label>,
}

impl Example {
    pub fn contains(&self, primitive: u32) -> bool {
        self.primitives.binary_search(&primitive).is_ok()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub format: InputFormat,
    pub examples: Vec<Example>,
    /// Sorted primitive identifiers; `Example::primitives` index into it.
    pub primitive_domain: Vec<String>,
    /// TF-IDF vocabulary (text corpora only), sorted; feature index = position.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vocabulary: Vec<String>,
    pub feature_dim: usize,
    pub splits: Splits,
    pub min_token_len: usize,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn example(&self, id: usize) -> &Example {
        &self.examples[id]
    }

    pub fn primitive_id(&self, name: &str) -> Option<u32> {
        self.primitive_domain
            .binary_search_by(|p| p.as_str().cmp(name))
            .ok()
            .map(|i| i as u32)
    }

    pub fn primitive_name(&self, id: u32) -> &str {
        &self.primitive_domain[id as usize]
    }

    pub fn primitive_names(&self, example: &Example) -> Vec<String> {
        example
            .primitives
            .iter()
            .map(|&p| self.primitive_name(p).to_string())
            .collect()
    }

    pub fn gold(&self, id: usize) -> Option<Label> {
        self.examples[id].gold
    }

    /// Whether every example of `split` carries a gold label.
    pub fn has_gold(&self, split: Split) -> bool {
        self.splits.get(split).iter().all(|&i| self.examples[i].gold.is_some())
    }

    /// Builds a corpus from already-parsed records. Used by the file readers
    /// and by the synthetic generators.
    pub fn from_records(
        records: Vec<Record>,
        config: &IngestConfig,
        source: &str,
    ) -> Result<Corpus> {
        config.validate()?;
        if records.is_empty() {
            return Err(Error::EmptyDataset(source.to_string()));
        }
        let format = match &records[0] {
            Record::Text { .. } => InputFormat::TextJsonl,
            Record::Primitive { .. } => InputFormat::PrimitiveJsonl,
        };
        let splits = split_ids(records.len(), config);
        match format {
            InputFormat::TextJsonl => build_text(records, splits, config, source),
            InputFormat::PrimitiveJsonl => build_primitive(records, splits, config, source),
        }
    }
}

/// One parsed input line.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Text {
        text: String,
        label: Option<Label>,
    },
    Primitive {
        text: Option<String>,
        primitives: Vec<String>,
        features: Vec<f64>,
        label: Option<Label>,
    },
}

#[derive(Deserialize)]
struct TextLine {
    text: String,
    #[serde(default)]
    label: Option<i64>,
}

#[derive(Deserialize)]
struct PrimitiveLine {
    #[serde(default)]
    text: Option<String>,
    primitives: Vec<String>,
    features: Vec<f64>,
    #[serde(default)]
    label: Option<i64>,
}

impl Record {
    /// JSON line form, the inverse of the parser.
    pub fn to_json_line(&self) -> String {
        let value = match self {
            Record::Text { text, label } => {
                let mut m = serde_json::Map::new();
                m.insert("text".into(), text.clone().into());
                if let Some(l) = label {
                    m.insert("label".into(), i64::from(*l).into());
                }
                m
            }
            Record::Primitive {
                text,
                primitives,
                features,
                label,
            } => {
                let mut m = serde_json::Map::new();
                if let Some(t) = text {
                    m.insert("text".into(), t.clone().into());
                }
                m.insert("primitives".into(), primitives.clone().into());
                m.insert("features".into(), features.clone().into());
                if let Some(l) = label {
                    m.insert("label".into(), i64::from(*l).into());
                }
                m
            }
        };
        serde_json::Value::Object(value).to_string()
    }
}

fn parse_label(raw: Option<i64>) -> std::result::Result<Option<Label>, String> {
    raw.map(Label::try_from).transpose()
}

/// Parses JSON lines from a reader. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_records<R: BufRead>(reader: R, format: InputFormat, source: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::Ingest {
            path: source.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Ingest {
            path: source.to_string(),
            line: line_no,
            message,
        };
        let record = match format {
            InputFormat::TextJsonl => {
                let rec: TextLine = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
                Record::Text {
                    text: rec.text,
                    label: parse_label(rec.label).map_err(err)?,
                }
            }
            InputFormat::PrimitiveJsonl => {
                let rec: PrimitiveLine =
                    serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
                if rec.features.iter().any(|x| !x.is_finite()) {
                    return Err(err("non-finite feature value".into()));
                }
                if rec.features.iter().all(|&x| x == 0.0) {
                    return Err(err("feature vector has no nonzero entry".into()));
                }
                if let Some(Record::Primitive { features, .. }) = out.first() {
                    let expected: &Vec<f64> = features;
                    if expected.len() != rec.features.len() {
                        return Err(err(format!(
                            "feature length {} differs from first record's {}",
                            rec.features.len(),
                            expected.len()
                        )));
                    }
                }
                Record::Primitive {
                    text: rec.text,
                    primitives: rec.primitives,
                    features: rec.features,
                    label: parse_label(rec.label).map_err(err)?,
                }
            }
        };
        out.push(record);
    }
    if out.is_empty() {
        return Err(Error::EmptyDataset(source.to_string()));
    }
    Ok(out)
}

/// Reads and featurizes a JSON-lines dataset file.
pub fn ingest(path: &Path, format: InputFormat, config: &IngestConfig) -> Result<Corpus> {
    config.validate()?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let records = read_records(std::io::BufReader::new(file), format, &source)?;
    Corpus::from_records(records, config, &source)
}

/// Lowercase, split on non-alphanumeric runs, drop tokens shorter than
/// `min_len` characters. Keeps multiplicity and order.
pub fn tokenize(text: &str, min_len: usize) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= min_len)
        .map(str::to_lowercase)
        .collect()
}

fn split_ids(n: usize, config: &IngestConfig) -> Splits {
    let mut ids: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    ids.shuffle(&mut rng);
    let n_train = ((config.ratios[0] * n as f64).round() as usize).min(n);
    let n_valid = ((config.ratios[1] * n as f64).round() as usize).min(n - n_train);
    let mut splits = Splits {
        train: ids[..n_train].to_vec(),
        valid: ids[n_train..n_train + n_valid].to_vec(),
        test: ids[n_train + n_valid..].to_vec(),
    };
    splits.train.sort_unstable();
    splits.valid.sort_unstable();
    splits.test.sort_unstable();
    splits
}

fn intern_primitives(sets: &[BTreeSet<String>]) -> (Vec<String>, Vec<Vec<u32>>) {
    let domain: Vec<String> = sets
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lookup: BTreeMap<&str, u32> = domain
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i as u32))
        .collect();
    let ids = sets
        .iter()
        .map(|s| s.iter().map(|p| lookup[p.as_str()]).collect())
        .collect();
    (domain, ids)
}

fn build_text(records: Vec<Record>, splits: Splits, config: &IngestConfig, source: &str) -> Result<Corpus> {
    let mut texts = Vec::with_capacity(records.len());
    let mut golds = Vec::with_capacity(records.len());
    for (i, r) in records.into_iter().enumerate() {
        match r {
            Record::Text { text, label } => {
                texts.push(text);
                golds.push(label);
            }
            Record::Primitive { .. } => {
                return Err(Error::Ingest {
                    path: source.to_string(),
                    line: i + 1,
                    message: "mixed record kinds".into(),
                })
            }
        }
    }
    let sets: Vec<BTreeSet<String>> = texts
        .iter()
        .map(|t| tokenize(t, config.min_token_len).into_iter().collect())
        .collect();
    let (domain, prim_ids) = intern_primitives(&sets);
    let examples = texts
        .into_iter()
        .zip(golds)
        .zip(prim_ids)
        .enumerate()
        .map(|(id, ((text, gold), primitives))| Example {
            id,
            text: Some(text),
            primitives,
            features: SparseVec::default(),
            gold,
        })
        .collect();
    let corpus = Corpus {
        format: InputFormat::TextJsonl,
        examples,
        primitive_domain: domain,
        vocabulary: Vec::new(),
        feature_dim: 0,
        splits,
        min_token_len: config.min_token_len,
    };
    featurize(corpus)
}

fn build_primitive(
    records: Vec<Record>,
    splits: Splits,
    config: &IngestConfig,
    source: &str,
) -> Result<Corpus> {
    let mut sets = Vec::with_capacity(records.len());
    let mut rest = Vec::with_capacity(records.len());
    let mut dim = None;
    for (i, r) in records.into_iter().enumerate() {
        let err = |message: String| Error::Ingest {
            path: source.to_string(),
            line: i + 1,
            message,
        };
        match r {
            Record::Primitive {
                text,
                primitives,
                features,
                label,
            } => {
                if *dim.get_or_insert(features.len()) != features.len() {
                    return Err(err("inconsistent feature length".into()));
                }
                if features.iter().all(|&x| x == 0.0) {
                    return Err(err("feature vector has no nonzero entry".into()));
                }
                sets.push(primitives.into_iter().collect::<BTreeSet<_>>());
                rest.push((text, SparseVec::from_dense(&features), label));
            }
            Record::Text { .. } => return Err(err("mixed record kinds".into())),
        }
    }
    let (domain, prim_ids) = intern_primitives(&sets);
    let examples = rest
        .into_iter()
        .zip(prim_ids)
        .enumerate()
        .map(|(id, ((text, features, gold), primitives))| Example {
            id,
            text,
            primitives,
            features,
            gold,
        })
        .collect();
    Ok(Corpus {
        format: InputFormat::PrimitiveJsonl,
        examples,
        primitive_domain: domain,
        vocabulary: Vec::new(),
        feature_dim: dim.unwrap_or(0),
        splits,
        min_token_len: config.min_token_len,
    })
}

/// TF-IDF over the train-split unigram vocabulary: raw term counts times
/// `ln((1+n)/(1+df)) + 1`, then L2 normalization. `n` and `df` come from the
/// train split only, so other splits never influence train vectors.
pub fn featurize(mut corpus: Corpus) -> Result<Corpus> {
    let min_len = corpus.min_token_len;
    let tokens: Vec<Vec<String>> = corpus
        .examples
        .iter()
        .map(|e| tokenize(e.text.as_deref().unwrap_or(""), min_len))
        .collect();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in &corpus.splits.train {
        let uniq: BTreeSet<&str> = tokens[i].iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = corpus.splits.train.len() as f64;
    let vocabulary: Vec<String> = df.keys().map(|s| s.to_string()).collect();
    let idf: Vec<f64> = df
        .values()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    let index: BTreeMap<&str, u32> = df.keys().enumerate().map(|(i, &t)| (t, i as u32)).collect();

    let mut empty = Vec::new();
    let mut features = Vec::with_capacity(tokens.len());
    for (id, toks) in tokens.iter().enumerate() {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for t in toks {
            if let Some(&j) = index.get(t.as_str()) {
                *counts.entry(j).or_default() += 1.0;
            }
        }
        if counts.is_empty() {
            empty.push(id);
            features.push(SparseVec::default());
            continue;
        }
        let weighted: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(j, tf)| (j, tf * idf[j as usize]))
            .collect();
        let norm = weighted.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        features.push(SparseVec::from_sorted_pairs(
            weighted.into_iter().map(|(j, w)| (j, w / norm)),
        ));
    }
    if !empty.is_empty() {
        return Err(Error::NoVocabularyTokens(empty));
    }
    for (e, f) in corpus.examples.iter_mut().zip(features) {
        e.features = f;
    }
    corpus.feature_dim = vocabulary.len();
    corpus.vocabulary = vocabulary;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text_records(texts: &[&str]) -> Vec<Record> {
        texts
            .iter()
            .map(|t| Record::Text {
                text: t.to_string(),
                label: Some(Label::Pos),
            })
            .collect()
    }

    fn all_train(min_token_len: usize) -> IngestConfig {
        IngestConfig {
            seed: 0,
            ratios: [1.0, 0.0, 0.0],
            min_token_len,
        }
    }

    #[test]
    fn ten_records_split_eight_one_one() {
        let texts: Vec<String> = (0..10).map(|i| format!("word{i} shared")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let c = Corpus::from_records(text_records(&refs), &IngestConfig::default(), "mem").unwrap();
        assert_eq!(c.splits.train.len(), 8);
        assert_eq!(c.splits.valid.len(), 1);
        assert_eq!(c.splits.test.len(), 1);
        let mut all: Vec<usize> = c.splits.train.iter().chain(&c.splits.valid).chain(&c.splits.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn primitives_are_case_folded_sets() {
        let c = Corpus::from_records(text_records(&["Good good movie"]), &all_train(2), "mem").unwrap();
        assert_eq!(c.primitive_names(&c.examples[0]), vec!["good", "movie"]);
    }

    #[test]
    fn tokenizer_drops_short_tokens() {
        assert_eq!(tokenize("A b, it's GREAT!!x", 2), vec!["it", "great"]);
        assert_eq!(tokenize("a-b", 1), vec!["a", "b"]);
    }

    #[test]
    fn single_document_features_are_equal() {
        let c = Corpus::from_records(text_records(&["aa bb"]), &all_train(2), "mem").unwrap();
        let f = &c.examples[0].features;
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert_eq!(f.nnz(), 2);
        for v in &f.values {
            assert!((v - inv_sqrt2).abs() < 1e-15);
        }
    }

    #[test]
    fn tfidf_matches_hand_computation() {
        // n = 2, df(a) = 1, df(b) = 2; idf(a) = ln(3/2) + 1, idf(b) = 1.
        // doc0 raw weights (2·idf(a), 1), then L2 normalized.
        let c = Corpus::from_records(text_records(&["a a b", "b"]), &all_train(1), "mem").unwrap();
        assert_eq!(c.vocabulary, vec!["a", "b"]);
        let f = &c.examples[0].features;
        assert!((f.values[0] - 0.9421556246632359).abs() < 1e-12);
        assert!((f.values[1] - 0.33517574332792605).abs() < 1e-12);
        assert_eq!(c.examples[1].features.values, vec![1.0]);
    }

    #[test]
    fn out_of_vocabulary_tokens_contribute_nothing() {
        let records = text_records(&["alpha beta", "alpha gamma", "beta delta"]);
        let config = IngestConfig { seed: 3, ratios: [2.0 / 3.0, 0.0, 1.0 / 3.0], min_token_len: 2 };
        let res = Corpus::from_records(records, &config, "mem");
        match res {
            Ok(c) => {
                let test = c.splits.test[0];
                assert!(c.examples[test].features.indices.iter().all(|&j| (j as usize) < c.vocabulary.len()));
                let train_tokens: BTreeSet<String> = c.splits.train.iter()
                    .flat_map(|&i| tokenize(c.examples[i].text.as_deref().unwrap(), 2)).collect();
                assert_eq!(c.vocabulary, train_tokens.into_iter().collect::<Vec<_>>());
            }
            Err(Error::NoVocabularyTokens(ids)) => assert_eq!(ids.len(), 1),
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn doc_without_vocabulary_tokens_is_an_error() {
        let records = text_records(&["xx", "yy"]);
        let config = IngestConfig { seed: 0, ratios: [0.5, 0.0, 0.5], min_token_len: 2 };
        match Corpus::from_records(records, &config, "mem") {
            Err(Error::NoVocabularyTokens(ids)) => assert_eq!(ids.len(), 1),
            other => panic!("expected error, got {other:?}"),
        }
    }

    #[test]
    fn read_records_reports_line_numbers() {
        let input = "{\"text\": \"ok\"}\n\n{\"txt\": 1}\n";
        match read_records(input.as_bytes(), InputFormat::TextJsonl, "f.jsonl") {
            Err(Error::Ingest { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad_label = "{\"text\": \"ok\", \"label\": 0}\n";
        match read_records(bad_label.as_bytes(), InputFormat::TextJsonl, "f.jsonl") {
            Err(Error::Ingest { line, message, .. }) => {
                assert_eq!(line, 1);
                assert!(message.contains("label"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_records("\n \n".as_bytes(), InputFormat::TextJsonl, "f"),
            Err(Error::EmptyDataset(_))
        ));
    }

    #[test]
    fn primitive_records_are_verbatim() {
        let input = "{\"primitives\": [\"dog\", \"cat\", \"dog\"], \"features\": [0.0, 2.0], \"label\": -1}\n\
                     {\"primitives\": [\"cat\"], \"features\": [1.0, 0.0]}\n";
        let recs = read_records(input.as_bytes(), InputFormat::PrimitiveJsonl, "p").unwrap();
        let c = Corpus::from_records(recs, &all_train(2), "p").unwrap();
        assert_eq!(c.primitive_domain, vec!["cat", "dog"]);
        assert_eq!(c.examples[0].primitives, vec![0, 1]);
        assert_eq!(c.examples[0].features, SparseVec::from_dense(&[0.0, 2.0]));
        assert_eq!(c.examples[0].gold, Some(Label::Neg));
        assert_eq!(c.examples[1].gold, None);
        assert_eq!(c.feature_dim, 2);

        let zero = "{\"primitives\": [\"a\"], \"features\": [0.0]}\n";
        assert!(read_records(zero.as_bytes(), InputFormat::PrimitiveJsonl, "p").is_err());
    }

    #[test]
    fn ingest_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let lines: String = (0..30)
            .map(|i| format!("{{\"text\": \"doc {i} word{} common\", \"label\": {}}}\n", i % 7, if i % 2 == 0 { 1 } else { -1 }))
            .collect();
        std::fs::write(&path, lines).unwrap();
        let cfg = IngestConfig { seed: 11, ..Default::default() };
        let a = serde_json::to_vec(&ingest(&path, InputFormat::TextJsonl, &cfg).unwrap()).unwrap();
        let b = serde_json::to_vec(&ingest(&path, InputFormat::TextJsonl, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_ratios_rejected() {
        let cfg = IngestConfig { ratios: [0.5, 0.5, 0.5], ..Default::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
