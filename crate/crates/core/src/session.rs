//! The interactive loop: select an example, receive an LF for it (from the
//! simulator or a person), refit the label model and the end model, and
//! record the test metric every `eval_every` iterations.
//!
//! Every random decision at iteration `t` is drawn from a stream keyed by
//! `(seed, purpose, t)`, so a restored snapshot continues exactly like an
//! unbroken run.

use std::sync::Arc;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Mode, SessionConfig};
use crate::contextualizer::{refine_lf, refinement_radius_at, RefinedLf};
use crate::corpus::{ingest, Corpus, Example};
use crate::end_model::{evaluate, predict, train, LinearModel};
use crate::error::{Error, Result};
use crate::index::PrimitiveIndex;
use crate::label::Label;
use crate::label_model::{fit, FittedLabelModel, Posterior};
use crate::lf::{LabelMatrix, LabelingFunction, LfRecord, Predictions};
use crate::rng::{stream, Purpose};
use crate::selection::{select, CandidatePool, SelectionInputs};
use crate::simulator::simulate_response;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub points: Vec<CurvePoint>,
    /// `(1/n) Σ value` over the recorded points; `None` when nothing was
    /// recorded.
    pub mean: Option<f64>,
    /// The pool ran out before the requested number of iterations.
    pub truncated: bool,
}

impl CurveSummary {
    pub fn from_points(points: Vec<CurvePoint>, truncated: bool) -> Self {
        let mean = curve_mean(&points);
        CurveSummary { points, mean, truncated }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,metric")?;
        for p in &self.points {
            writeln!(w, "{},{}", p.iteration, p.value)?;
        }
        Ok(())
    }
}

pub fn curve_mean(points: &[CurvePoint]) -> Option<f64> {
    if points.is_empty() {
        return None;
    }
    Some(points.iter().map(|p| p.value).sum::<f64>() / points.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Created,
    Duplicate,
    Skipped,
}

/// A response to the pending example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Lf { primitive: u32, label: Label },
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    /// Iterations completed, including this one.
    pub iteration: usize,
    pub selected: usize,
    /// Selector score of the chosen example; `None` for random draws.
    pub score: Option<f64>,
    pub ties: usize,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lf: Option<LfRecord>,
    /// Train coverage of the LF as it enters the label model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<usize>,
    pub num_lfs: usize,
    /// Train examples with at least one vote.
    pub covered_train: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionState {
    Ready,
    AwaitingLf,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PendingSelection {
    id: usize,
    score: Option<f64>,
    ties: usize,
}

#[derive(Debug, Clone)]
pub struct Session {
    corpus: Arc<Corpus>,
    index: PrimitiveIndex,
    config: SessionConfig,
    /// Refinement percentile in effect (after tuning).
    percentile: f64,
    iteration: usize,
    lfs: Vec<LabelingFunction>,
    radii: Vec<f64>,
    /// Per-LF votes over the train split, refined when enabled.
    columns: Vec<Vec<i8>>,
    pool: CandidatePool,
    pending: Option<PendingSelection>,
    curve: Vec<CurvePoint>,
    trace: Vec<IterationReport>,
    label_model: Option<FittedLabelModel>,
    posterior: Option<Posterior>,
    model: Option<LinearModel>,
    predictions: Option<Predictions>,
}

impl Session {
    pub fn new(corpus: Arc<Corpus>, config: SessionConfig) -> Result<Session> {
        config.validate()?;
        if corpus.splits.train.is_empty() {
            return Err(Error::TooFewExamples { needed: 1, got: 0 });
        }
        let index = PrimitiveIndex::build(&corpus);
        let pool = CandidatePool::new(&corpus);
        Ok(Session {
            percentile: config.refinement.percentile,
            index,
            pool,
            config,
            corpus,
            iteration: 0,
            lfs: Vec::new(),
            radii: Vec::new(),
            columns: Vec::new(),
            pending: None,
            curve: Vec::new(),
            trace: Vec::new(),
            label_model: None,
            posterior: None,
            model: None,
            predictions: None,
        })
    }

    /// Ingests the configured dataset and starts a session on it.
    pub fn from_config(config: SessionConfig) -> Result<Session> {
        let corpus = ingest(&config.dataset.path, config.dataset.format, &config.ingest)?;
        Session::new(Arc::new(corpus), config)
    }

    pub fn corpus(&self) -> &Arc<Corpus> {
        &self.corpus
    }

    pub fn index(&self) -> &PrimitiveIndex {
        &self.index
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.run.seed
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn percentile(&self) -> f64 {
        self.percentile
    }

    pub fn lfs(&self) -> &[LabelingFunction] {
        &self.lfs
    }

    pub fn pool(&self) -> &CandidatePool {
        &self.pool
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn trace(&self) -> &[IterationReport] {
        &self.trace
    }

    pub fn posterior(&self) -> Option<&Posterior> {
        self.posterior.as_ref()
    }

    pub fn model(&self) -> Option<&LinearModel> {
        self.model.as_ref()
    }

    pub fn label_model(&self) -> Option<&FittedLabelModel> {
        self.label_model.as_ref()
    }

    pub fn pending(&self) -> Option<usize> {
        self.pending.as_ref().map(|p| p.id)
    }

    pub fn state(&self) -> SessionState {
        if self.pending.is_some() {
            SessionState::AwaitingLf
        } else if self.pool.is_empty() {
            SessionState::Complete
        } else {
            SessionState::Ready
        }
    }

    pub fn summary(&self) -> CurveSummary {
        CurveSummary::from_points(self.curve.clone(), self.pool.is_empty())
    }

    /// Overrides the refinement percentile. Only allowed before any LF exists.
    pub fn set_percentile(&mut self, p: f64) -> Result<()> {
        if !self.lfs.is_empty() {
            return Err(Error::Config("percentile can only change before the first LF".into()));
        }
        if !(p > 0.0 && p <= 100.0) {
            return Err(Error::Config(format!("percentile must be in (0, 100], got {p}")));
        }
        self.percentile = p;
        Ok(())
    }

    /// Current train label matrix (columns in LF order).
    pub fn train_matrix(&self) -> LabelMatrix {
        let rows = self.corpus.splits.train.clone();
        let m = self.columns.len();
        let mut votes = Vec::with_capacity(rows.len() * m);
        for r in 0..rows.len() {
            votes.extend(self.columns.iter().map(|c| c[r]));
        }
        LabelMatrix::from_votes(rows, m, votes)
    }

    fn refined(&self, k: usize) -> RefinedLf {
        refine_lf(&self.lfs[k], self.radii[k], &self.config.refinement)
    }

    /// Vote of LF `k` on `x` as the label model sees it.
    pub fn vote(&self, k: usize, x: &Example) -> Result<i8> {
        if self.config.refinement.enabled {
            self.refined(k).vote(&self.corpus, x)
        } else {
            Ok(crate::lf::apply_lf(&self.lfs[k], x))
        }
    }

    /// Label matrix over any split, refined when enabled.
    pub fn matrix_for(&self, split: &[usize]) -> Result<LabelMatrix> {
        let mut votes = Vec::with_capacity(split.len() * self.lfs.len());
        for &i in split {
            let x = self.corpus.example(i);
            for k in 0..self.lfs.len() {
                votes.push(self.vote(k, x)?);
            }
        }
        Ok(LabelMatrix::from_votes(split.to_vec(), self.lfs.len(), votes))
    }

    /// Picks the next example and marks it pending.
    pub fn next_example(&mut self) -> Result<usize> {
        if let Some(p) = &self.pending {
            return Err(Error::PendingResponse(p.id));
        }
        let matrix = self.train_matrix();
        let inputs = SelectionInputs {
            corpus: &self.corpus,
            index: &self.index,
            matrix: &matrix,
            posterior: self.posterior.as_ref(),
            predictions: self.predictions.as_ref(),
            prior_positive: self.config.label_model.prior_positive,
        };
        let mut rng = stream(self.seed(), Purpose::Select, self.iteration as u64);
        let s = select(&self.pool, &inputs, &self.config.selector, &mut rng)?;
        self.pending = Some(PendingSelection {
            id: s.id,
            score: s.score,
            ties: s.ties,
        });
        Ok(s.id)
    }

    /// Submits an LF by primitive name for the pending example.
    pub fn submit(&mut self, primitive: &str, label: Label) -> Result<IterationReport> {
        let id = self.pending().ok_or(Error::NoPendingExample)?;
        let not_in = || Error::PrimitiveNotInExample {
            primitive: primitive.to_string(),
            example: id,
        };
        let z = self.corpus.primitive_id(primitive).ok_or_else(not_in)?;
        if !self.corpus.example(id).contains(z) {
            return Err(not_in());
        }
        self.respond(Response::Lf { primitive: z, label })
    }

    pub fn skip(&mut self) -> Result<IterationReport> {
        self.respond(Response::Skip)
    }

    /// Completes the pending iteration with `response`.
    pub fn respond(&mut self, response: Response) -> Result<IterationReport> {
        let pending = self.pending.clone().ok_or(Error::NoPendingExample)?;
        if let Response::Lf { primitive, .. } = response {
            if !self.corpus.example(pending.id).contains(primitive) {
                return Err(Error::PrimitiveNotInExample {
                    primitive: self.corpus.primitive_name(primitive).to_string(),
                    example: pending.id,
                });
            }
        }
        let mut warning = None;
        let (outcome, lf, coverage) = match response {
            Response::Skip => (Outcome::Skipped, None, None),
            Response::Lf { primitive, label } => {
                let lf = LabelingFunction {
                    primitive,
                    label,
                    lineage_example: pending.id,
                    created_at: self.iteration,
                };
                if let Some(k) = self.lfs.iter().position(|l| l.key() == lf.key()) {
                    tracing::info!(
                        primitive = self.corpus.primitive_name(primitive),
                        %label,
                        "duplicate LF ignored"
                    );
                    let coverage = self.columns[k].iter().filter(|&&v| v != 0).count();
                    (Outcome::Duplicate, Some(self.lfs[k]), Some(coverage))
                } else {
                    self.add_lf(lf)?;
                    if let Err(e) = self.refit() {
                        tracing::warn!("{e}");
                        warning = Some(e.to_string());
                    }
                    let coverage = self.columns.last().expect("just added").iter().filter(|&&v| v != 0).count();
                    (Outcome::Created, Some(lf), Some(coverage))
                }
            }
        };
        self.pool.remove(pending.id);
        self.pending = None;
        self.iteration += 1;
        let metric = if self.iteration.is_multiple_of(self.config.run.eval_every) {
            self.evaluate_test()?
        } else {
            None
        };
        if let Some(value) = metric {
            self.curve.push(CurvePoint {
                iteration: self.iteration,
                value,
            });
        }
        let covered_train = self
            .posterior
            .as_ref()
            .map(|p| p.num_covered())
            .unwrap_or(0);
        let report = IterationReport {
            iteration: self.iteration,
            selected: pending.id,
            score: pending.score,
            ties: pending.ties,
            outcome,
            lf: lf.map(|l| l.to_record(&self.corpus)),
            coverage,
            num_lfs: self.lfs.len(),
            covered_train,
            metric,
            warning,
        };
        self.trace.push(report.clone());
        Ok(report)
    }

    fn add_lf(&mut self, lf: LabelingFunction) -> Result<()> {
        let radius = if self.config.refinement.enabled {
            refinement_radius_at(&lf, &self.corpus, self.config.refinement.distance, self.percentile)?
        } else {
            f64::INFINITY
        };
        self.lfs.push(lf);
        self.radii.push(radius);
        let k = self.lfs.len() - 1;
        let column = self
            .corpus
            .splits
            .train
            .iter()
            .map(|&i| self.vote(k, self.corpus.example(i)))
            .collect::<Result<Vec<i8>>>()?;
        self.columns.push(column);
        Ok(())
    }

    /// Refits label model and end model from the current columns.
    fn refit(&mut self) -> Result<()> {
        let matrix = self.train_matrix();
        let fitted = fit(&matrix, &self.config.label_model);
        let posterior = fitted.posterior(&matrix);
        self.label_model = Some(fitted);
        let trained = train(&self.corpus, &posterior, &self.config.end_model);
        self.posterior = Some(posterior);
        let model = trained?;
        self.predictions = Some(predictions_for(&self.corpus, &model));
        self.model = Some(model);
        Ok(())
    }

    /// Test metric of the current end model (the zero model before any
    /// training). `None` when the test split is empty or lacks gold labels.
    pub fn evaluate_test(&self) -> Result<Option<f64>> {
        let test = &self.corpus.splits.test;
        if test.is_empty() || test.iter().any(|&i| self.corpus.gold(i).is_none()) {
            return Ok(None);
        }
        let zero;
        let model = match &self.model {
            Some(m) => m,
            None => {
                zero = LinearModel::zero(self.corpus.feature_dim, self.config.end_model.clone());
                &zero
            }
        };
        evaluate(model, &self.corpus, test, self.config.run.metric).map(Some)
    }

    /// Fraction of covered validation examples whose label-model argmax
    /// (ties to +1) matches gold. Rows no LF votes on carry no soft label
    /// and are left out; with nothing covered the score is 0.
    pub fn validation_soft_accuracy(&self) -> Result<f64> {
        let valid = &self.corpus.splits.valid;
        if valid.is_empty() {
            return Err(Error::EmptySplit);
        }
        let missing = valid.iter().filter(|&&i| self.corpus.gold(i).is_none()).count();
        if missing > 0 {
            return Err(Error::MissingGoldOnSplit(missing));
        }
        let matrix = self.matrix_for(valid)?;
        let posterior = match &self.label_model {
            Some(m) => m.posterior(&matrix),
            None => fit(&matrix, &self.config.label_model).posterior(&matrix),
        };
        let (mut covered, mut correct) = (0usize, 0usize);
        for (r, &i) in valid.iter().enumerate() {
            if matrix.row_coverage(r) == 0 {
                continue;
            }
            covered += 1;
            let y = if posterior.p_pos[r] >= 0.5 { Label::Pos } else { Label::Neg };
            correct += usize::from(self.corpus.gold(i) == Some(y));
        }
        Ok(if covered == 0 { 0.0 } else { correct as f64 / covered as f64 })
    }

    /// One simulated iteration.
    pub fn step(&mut self) -> Result<IterationReport> {
        if self.config.run.mode != Mode::Simulated {
            return Err(Error::Config("step() needs run.mode = \"simulated\"".into()));
        }
        let id = self.next_example()?;
        let mut rng = stream(self.seed(), Purpose::Simulate, self.iteration as u64);
        let response = match simulate_response(id, &self.corpus, &self.index, &self.config.simulator, &mut rng) {
            Ok(r) => r,
            Err(e) => {
                self.pending = None;
                return Err(e);
            }
        };
        self.respond(match response {
            Some((primitive, label)) => Response::Lf { primitive, label },
            None => Response::Skip,
        })
    }

    /// Steps until `iterations` have been completed or the pool runs out.
    pub fn run(&mut self, iterations: usize) -> Result<CurveSummary> {
        let mut truncated = false;
        while self.iteration < iterations {
            match self.step() {
                Ok(_) => {}
                Err(Error::SessionComplete) => {
                    tracing::warn!(iteration = self.iteration, "candidate pool exhausted; curve truncated");
                    truncated = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(CurveSummary::from_points(self.curve.clone(), truncated))
    }

    /// Up to `limit` train examples containing `primitive`, sampled with a
    /// stream tied to the current iteration; ascending ids.
    pub fn explore(&self, primitive: &str, limit: usize) -> Result<Vec<usize>> {
        let z = self
            .corpus
            .primitive_id(primitive)
            .ok_or_else(|| Error::UnknownPrimitive(primitive.to_string()))?;
        let postings = self.index.postings(z);
        let key = ((self.iteration as u64) << 32) ^ u64::from(z);
        let mut rng = stream(self.seed(), Purpose::Explore, key);
        let mut ids: Vec<usize> = postings.choose_multiple(&mut rng, limit).copied().collect();
        ids.sort_unstable();
        Ok(ids)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            corpus_digest: corpus_digest(&self.corpus),
            config: self.config.clone(),
            percentile: self.percentile,
            iteration: self.iteration,
            lfs: self.lfs.iter().map(|l| l.to_record(&self.corpus)).collect(),
            radii: self.radii.clone(),
            pool: self.pool.ids().to_vec(),
            pending: self.pending.clone(),
            curve: self.curve.clone(),
            trace: self.trace.clone(),
            label_model: self.label_model.clone(),
            posterior: self.posterior.clone(),
            model: self.model.clone(),
        }
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes")
    }

    pub fn restore(snapshot: Snapshot, corpus: Arc<Corpus>) -> Result<Session> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
                snapshot.version
            )));
        }
        if snapshot.corpus_digest != corpus_digest(&corpus) {
            return Err(Error::Snapshot("corpus does not match the snapshot".into()));
        }
        if snapshot.radii.len() != snapshot.lfs.len() {
            return Err(Error::Snapshot("radii and lfs differ in length".into()));
        }
        let mut s = Session::new(corpus, snapshot.config)?;
        s.percentile = snapshot.percentile;
        for (rec, radius) in snapshot.lfs.iter().zip(&snapshot.radii) {
            let lf = LabelingFunction::from_record(rec, &s.corpus)
                .ok_or_else(|| Error::Snapshot(format!("unknown primitive {:?}", rec.primitive)))?;
            s.lfs.push(lf);
            s.radii.push(*radius);
            let k = s.lfs.len() - 1;
            let column = s
                .corpus
                .splits
                .train
                .iter()
                .map(|&i| s.vote(k, s.corpus.example(i)))
                .collect::<Result<Vec<i8>>>()?;
            s.columns.push(column);
        }
        s.iteration = snapshot.iteration;
        s.pool = CandidatePool::from_ids(snapshot.pool);
        s.pending = snapshot.pending;
        s.curve = snapshot.curve;
        s.trace = snapshot.trace;
        s.label_model = snapshot.label_model;
        s.posterior = snapshot.posterior;
        s.predictions = snapshot.model.as_ref().map(|m| predictions_for(&s.corpus, m));
        s.model = snapshot.model;
        Ok(s)
    }

    pub fn restore_json(json: &str, corpus: Arc<Corpus>) -> Result<Session> {
        let snapshot: Snapshot =
            serde_json::from_str(json).map_err(|e| Error::Snapshot(format!("corrupt snapshot: {e}")))?;
        Session::restore(snapshot, corpus)
    }

    /// Restores from a file, re-ingesting the dataset named in its config.
    pub fn restore_path(path: &std::path::Path) -> Result<Session> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let snapshot: Snapshot =
            serde_json::from_str(&json).map_err(|e| Error::Snapshot(format!("corrupt snapshot: {e}")))?;
        let c = &snapshot.config;
        let corpus = ingest(&c.dataset.path, c.dataset.format, &c.ingest)?;
        Session::restore(snapshot, Arc::new(corpus))
    }
}

/// End-model labels for the train split, indexed by example id.
pub fn predictions_for(corpus: &Corpus, model: &LinearModel) -> Predictions {
    let mut p = vec![None; corpus.len()];
    for &i in &corpus.splits.train {
        p[i] = Some(predict(model, &corpus.example(i).features).0);
    }
    p
}

pub fn corpus_digest(corpus: &Corpus) -> String {
    let bytes = serde_json::to_vec(corpus).expect("corpus serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u32,
    pub corpus_digest: String,
    pub config: SessionConfig,
    pub percentile: f64,
    pub iteration: usize,
    pub lfs: Vec<LfRecord>,
    pub radii: Vec<f64>,
    pub pool: Vec<usize>,
    pending: Option<PendingSelection>,
    pub curve: Vec<CurvePoint>,
    pub trace: Vec<IterationReport>,
    pub label_model: Option<FittedLabelModel>,
    pub posterior: Option<Posterior>,
    pub model: Option<LinearModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningPoint {
    pub percentile: f64,
    pub validation_accuracy: f64,
}

/// A finished simulated run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub session: Session,
    pub summary: CurveSummary,
    /// Grid results when the percentile was tuned.
    pub tuning: Option<Vec<TuningPoint>>,
}

/// Runs `config.run.iterations` simulated iterations. With refinement
/// tuning on, runs once per grid percentile and keeps the run whose final
/// label model scores best on validation soft labels (ties to the larger
/// percentile).
pub fn run_simulation(corpus: Arc<Corpus>, config: &SessionConfig) -> Result<RunOutcome> {
    let iterations = config.run.iterations;
    if !(config.refinement.enabled && config.refinement.tune) {
        let mut session = Session::new(corpus, config.clone())?;
        let summary = session.run(iterations)?;
        return Ok(RunOutcome {
            session,
            summary,
            tuning: None,
        });
    }
    let mut grid = config.refinement.grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut best: Option<(f64, Session, CurveSummary)> = None;
    let mut tuning = Vec::with_capacity(grid.len());
    for &p in &grid {
        let mut session = Session::new(corpus.clone(), config.clone())?;
        session.set_percentile(p)?;
        let summary = session.run(iterations)?;
        let score = session.validation_soft_accuracy()?;
        tuning.push(TuningPoint {
            percentile: p,
            validation_accuracy: score,
        });
        if best.as_ref().is_none_or(|(b, _, _)| score >= *b) {
            best = Some((score, session, summary));
        }
    }
    let (_, session, summary) = best.expect("grid is nonempty");
    Ok(RunOutcome {
        session,
        summary,
        tuning: Some(tuning),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{IngestConfig, Record};
    use crate::selection::SelectorKind;

    fn text_corpus(n: usize, ratios: [f64; 3]) -> Corpus {
        let recs = (0..n)
            .map(|i| {
                let pos = i % 2 == 0;
                let text = match (pos, i % 3) {
                    (true, 0) => "great plot film",
                    (true, 1) => "great acting",
                    (true, _) => "lovely film fun",
                    (false, 0) => "awful plot film",
                    (false, 1) => "awful acting",
                    (false, _) => "boring film dull",
                };
                Record::Text {
                    text: format!("{text} w{}", i % 7),
                    label: Some(if pos { Label::Pos } else { Label::Neg }),
                }
            })
            .collect();
        Corpus::from_records(recs, &IngestConfig { seed: 1, ratios, min_token_len: 2 }, "mem").unwrap()
    }

    fn config(seed: u64) -> SessionConfig {
        let mut c = SessionConfig::default();
        c.run.seed = seed;
        c.end_model.epochs = 100;
        c
    }

    #[test]
    fn human_flow_and_state_machine() {
        let corpus = Arc::new(text_corpus(60, [0.8, 0.1, 0.1]));
        let mut c = config(3);
        c.run.mode = Mode::Human;
        let mut s = Session::new(corpus.clone(), c).unwrap();
        assert_eq!(s.state(), SessionState::Ready);
        assert!(matches!(s.skip(), Err(Error::NoPendingExample)));
        let id = s.next_example().unwrap();
        assert_eq!(s.state(), SessionState::AwaitingLf);
        assert!(matches!(s.next_example(), Err(Error::PendingResponse(p)) if p == id));
        let x = corpus.example(id);
        let absent = corpus
            .primitive_domain
            .iter()
            .find(|name| !x.contains(corpus.primitive_id(name).unwrap()))
            .unwrap()
            .clone();
        assert!(matches!(s.submit(&absent, Label::Pos), Err(Error::PrimitiveNotInExample { .. })));
        assert!(matches!(s.submit("nonexistent", Label::Pos), Err(Error::PrimitiveNotInExample { .. })));
        assert_eq!(s.state(), SessionState::AwaitingLf);
        let name = corpus.primitive_name(x.primitives[0]).to_string();
        let r = s.submit(&name, x.gold.unwrap()).unwrap();
        assert_eq!((r.outcome, r.num_lfs, r.iteration), (Outcome::Created, 1, 1));
        assert!(r.coverage.unwrap() >= 1);
        assert!(s.model().is_some());
        // skip shrinks the pool and leaves LFs and models alone
        let pool_before = s.pool().len();
        let model_before = s.model().cloned();
        s.next_example().unwrap();
        let r = s.skip().unwrap();
        assert_eq!(r.outcome, Outcome::Skipped);
        assert_eq!(s.pool().len(), pool_before - 1);
        assert_eq!(s.lfs().len(), 1);
        assert_eq!(s.model().cloned(), model_before);
        assert!(matches!(s.step(), Err(Error::Config(_))), "human sessions cannot simulate");
    }

    #[test]
    fn duplicate_submission_is_a_noop() {
        let corpus = Arc::new(text_corpus(40, [0.8, 0.1, 0.1]));
        let mut c = config(0);
        c.run.mode = Mode::Human;
        let mut s = Session::new(corpus.clone(), c).unwrap();
        let film = corpus.primitive_id("film").unwrap();
        let mut submitted = 0;
        while submitted < 2 {
            let id = s.next_example().unwrap();
            if corpus.example(id).contains(film) {
                s.submit("film", Label::Pos).unwrap();
                submitted += 1;
            } else {
                s.skip().unwrap();
            }
        }
        assert_eq!(s.lfs().len(), 1);
        assert_eq!(s.trace().last().unwrap().outcome, Outcome::Duplicate);
    }

    #[test]
    fn run_records_ten_points_and_their_mean() {
        let corpus = Arc::new(text_corpus(200, [0.8, 0.1, 0.1]));
        let mut s = Session::new(corpus, config(1)).unwrap();
        let summary = s.run(50).unwrap();
        assert_eq!(summary.points.len(), 10);
        let iters: Vec<usize> = summary.points.iter().map(|p| p.iteration).collect();
        assert_eq!(iters, (1..=10).map(|k| 5 * k).collect::<Vec<_>>());
        let mean = summary.points.iter().map(|p| p.value).sum::<f64>() / 10.0;
        assert_eq!(summary.mean, Some(mean));
        let mut csv = Vec::new();
        summary.write_csv(&mut csv).unwrap();
        let parsed: Vec<f64> = String::from_utf8(csv)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(parsed.iter().sum::<f64>() / parsed.len() as f64, mean);
        assert!(!summary.truncated);
        for w in s.lfs().windows(2) {
            assert!(w[0].created_at <= w[1].created_at);
        }
        let selected: Vec<usize> = s.trace().iter().map(|r| r.selected).collect();
        for lf in s.lfs() {
            assert!(selected[..=lf.created_at].contains(&lf.lineage_example));
        }
        let unique: std::collections::BTreeSet<_> = selected.iter().collect();
        assert_eq!(unique.len(), selected.len(), "a selected id never comes back");
    }

    #[test]
    fn constant_curve_mean() {
        let pts: Vec<CurvePoint> = (1..=10).map(|k| CurvePoint { iteration: 5 * k, value: 0.8 }).collect();
        assert!((curve_mean(&pts).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(curve_mean(&[]), None);
    }

    #[test]
    fn runs_are_deterministic_for_every_selector() {
        let corpus = Arc::new(text_corpus(120, [0.8, 0.1, 0.1]));
        for kind in [SelectorKind::Random, SelectorKind::Abstain, SelectorKind::Disagree, SelectorKind::Seu] {
            let mut c = config(9);
            c.selector.kind = kind;
            let mut a = Session::new(corpus.clone(), c.clone()).unwrap();
            let mut b = Session::new(corpus.clone(), c).unwrap();
            a.run(20).unwrap();
            b.run(20).unwrap();
            assert_eq!(a.trace(), b.trace());
            assert_eq!(a.snapshot_json(), b.snapshot_json());
        }
    }

    #[test]
    fn pool_exhaustion_truncates() {
        let corpus = Arc::new(text_corpus(10, [0.8, 0.1, 0.1]));
        let mut s = Session::new(corpus, config(0)).unwrap();
        let summary = s.run(50).unwrap();
        assert!(summary.truncated);
        assert_eq!(s.iteration(), 8);
        assert_eq!(s.state(), SessionState::Complete);
        assert!(matches!(s.step(), Err(Error::SessionComplete)));
    }

    #[test]
    fn snapshot_round_trip_and_continuation() {
        let corpus = Arc::new(text_corpus(150, [0.8, 0.1, 0.1]));
        let mut c = config(4);
        c.refinement.enabled = true;
        c.refinement.percentile = 60.0;
        let mut unbroken = Session::new(corpus.clone(), c.clone()).unwrap();
        unbroken.run(30).unwrap();

        let mut first = Session::new(corpus.clone(), c).unwrap();
        first.run(12).unwrap();
        let json = first.snapshot_json();
        let mut restored = Session::restore_json(&json, corpus.clone()).unwrap();
        assert_eq!(restored.snapshot_json(), json);
        restored.run(30).unwrap();
        assert_eq!(restored.trace(), unbroken.trace());
        assert_eq!(restored.snapshot_json(), unbroken.snapshot_json());

        assert!(matches!(
            Session::restore_json(&json[..json.len() / 2], corpus.clone()),
            Err(Error::Snapshot(_))
        ));
        let bumped = json.replacen("\"version\": 1", "\"version\": 99", 1);
        assert!(matches!(Session::restore_json(&bumped, corpus.clone()), Err(Error::Snapshot(_))));
        let other = Arc::new(text_corpus(151, [0.8, 0.1, 0.1]));
        assert!(matches!(Session::restore_json(&json, other), Err(Error::Snapshot(_))));
    }

    #[test]
    fn pending_selection_survives_snapshot() {
        let corpus = Arc::new(text_corpus(50, [0.8, 0.1, 0.1]));
        let mut c = config(2);
        c.run.mode = Mode::Human;
        let mut s = Session::new(corpus.clone(), c).unwrap();
        let id = s.next_example().unwrap();
        let r = Session::restore_json(&s.snapshot_json(), corpus).unwrap();
        assert_eq!(r.pending(), Some(id));
        assert_eq!(r.state(), SessionState::AwaitingLf);
    }

    #[test]
    fn full_percentile_matches_unrefined_run_bit_exactly() {
        let corpus = Arc::new(text_corpus(160, [0.8, 0.1, 0.1]));
        let plain = config(5);
        let mut refined = plain.clone();
        refined.refinement.enabled = true;
        refined.refinement.percentile = 100.0;
        let mut a = Session::new(corpus.clone(), plain).unwrap();
        let mut b = Session::new(corpus, refined).unwrap();
        let sa = a.run(25).unwrap();
        let sb = b.run(25).unwrap();
        assert_eq!(sa, sb);
        assert_eq!(a.trace(), b.trace());
        assert_eq!(a.model(), b.model());
    }

    #[test]
    fn one_correct_full_coverage_lf_reaches_perfect_test_accuracy() {
        // every example is positive and contains "kw"; features separate trivially
        let recs = (0..30)
            .map(|i| Record::Primitive {
                text: None,
                primitives: vec!["kw".into(), format!("p{}", i % 3)],
                features: vec![1.0, 0.1 * (i % 5) as f64],
                label: Some(Label::Pos),
            })
            .collect();
        let corpus = Arc::new(
            Corpus::from_records(recs, &IngestConfig { seed: 0, ratios: [0.6, 0.2, 0.2], min_token_len: 2 }, "mem").unwrap(),
        );
        let mut c = config(0);
        c.run.mode = Mode::Human;
        c.run.eval_every = 1;
        let mut s = Session::new(corpus, c).unwrap();
        s.next_example().unwrap();
        let r = s.submit("kw", Label::Pos).unwrap();
        assert_eq!(r.coverage, Some(18));
        assert_eq!(r.metric, Some(1.0));
    }

    #[test]
    fn two_correct_lfs_on_separable_text() {
        let corpus = Arc::new(text_corpus(100, [0.8, 0.1, 0.1]));
        let mut c = config(0);
        c.run.mode = Mode::Human;
        c.run.eval_every = 1;
        c.end_model.epochs = 500;
        let mut s = Session::new(corpus.clone(), c).unwrap();
        let (great, awful) = (corpus.primitive_id("great").unwrap(), corpus.primitive_id("awful").unwrap());
        let mut last = None;
        while s.lfs().len() < 2 {
            let id = s.next_example().unwrap();
            let x = corpus.example(id);
            last = Some(if x.contains(great) && s.lfs().iter().all(|l| l.primitive != great) {
                s.submit("great", Label::Pos).unwrap()
            } else if x.contains(awful) && s.lfs().iter().all(|l| l.primitive != awful) {
                s.submit("awful", Label::Neg).unwrap()
            } else {
                s.skip().unwrap()
            });
        }
        // great/awful cover two thirds of each class; the rest rely on
        // shared words, so test accuracy is high but need not be perfect
        assert!(last.unwrap().metric.unwrap() >= 0.6);
    }

    #[test]
    fn explore_is_seeded_and_exhaustive_for_small_postings() {
        let corpus = Arc::new(text_corpus(60, [0.8, 0.1, 0.1]));
        let s = Session::new(corpus.clone(), config(0)).unwrap();
        let z = corpus.primitive_id("w3").unwrap();
        let all = s.index().postings(z).to_vec();
        assert_eq!(s.explore("w3", 1000).unwrap(), all);
        let a = s.explore("film", 5).unwrap();
        assert_eq!(a.len(), 5);
        assert_eq!(a, s.explore("film", 5).unwrap());
        let film = corpus.primitive_id("film").unwrap();
        assert!(a.iter().all(|&i| corpus.example(i).contains(film)));
        assert!(matches!(s.explore("zzz", 3), Err(Error::UnknownPrimitive(_))));
    }

    #[test]
    fn tuning_picks_a_grid_percentile() {
        let corpus = Arc::new(text_corpus(160, [0.6, 0.2, 0.2]));
        let mut c = config(2);
        c.refinement.enabled = true;
        c.refinement.tune = true;
        c.run.iterations = 15;
        let out = run_simulation(corpus, &c).unwrap();
        let tuning = out.tuning.unwrap();
        assert_eq!(tuning.len(), 4);
        let best = tuning.iter().map(|t| t.validation_accuracy).fold(f64::NEG_INFINITY, f64::max);
        let chosen = tuning.iter().filter(|t| t.validation_accuracy == best).map(|t| t.percentile).fold(0.0, f64::max);
        assert_eq!(out.session.percentile(), chosen);
        assert_eq!(out.summary.points.len(), 3);
    }
}
