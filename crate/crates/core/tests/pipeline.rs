use std::fs;
use std::path::Path;
use std::sync::Arc;

use idp_core::config::Mode;
use idp_core::corpus::{ingest, InputFormat, Record, Split};
use idp_core::selection::SelectorKind;
use idp_core::session::{run_simulation, SessionState};
use idp_core::sparse::SparseVec;
use idp_core::synth::{keyword_records, ring_records, KeywordCorpusConfig, RingCorpusConfig};
use idp_core::{Error, Label, Session, SessionConfig};

fn write_keyword_dataset(dir: &Path, n: usize) -> SessionConfig {
    let (records, _) = keyword_records(11, &KeywordCorpusConfig { n, ..Default::default() });
    let lines: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    fs::write(dir.join("kw.jsonl"), lines).unwrap();
    let toml = format!(
        "[dataset]\npath = {:?}\n\n[run]\niterations = 20\neval_every = 5\nseed = 3\n",
        dir.join("kw.jsonl")
    );
    fs::write(dir.join("exp.toml"), toml).unwrap();
    SessionConfig::load(&dir.join("exp.toml")).unwrap()
}

#[test]
fn file_snapshot_resumes_like_an_unbroken_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_keyword_dataset(dir.path(), 400);
    config.refinement.enabled = true;
    config.refinement.percentile = 75.0;

    let mut unbroken = Session::from_config(config.clone()).unwrap();
    unbroken.run(20).unwrap();

    let mut first = Session::from_config(config).unwrap();
    first.run(8).unwrap();
    let snap = dir.path().join("session.json");
    fs::write(&snap, first.snapshot_json()).unwrap();
    drop(first);

    let mut resumed = Session::restore_path(&snap).unwrap();
    assert_eq!(resumed.iteration(), 8);
    resumed.run(20).unwrap();
    assert_eq!(resumed.trace(), unbroken.trace());
    assert_eq!(resumed.curve(), unbroken.curve());
    assert_eq!(resumed.snapshot_json(), unbroken.snapshot_json());
}

#[test]
fn config_survives_a_toml_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_keyword_dataset(dir.path(), 100);
    config.selector.kind = SelectorKind::Disagree;
    config.refinement.enabled = true;
    let again = SessionConfig::from_toml_str(&config.to_toml_string()).unwrap();
    assert_eq!(again, config);
    assert!(matches!(SessionConfig::from_toml_str("[selector]\nkind = \"psychic\"\n"), Err(Error::Config(_))));
}

#[test]
fn every_selector_produces_a_full_curve_on_the_eval_grid() {
    let dir = tempfile::tempdir().unwrap();
    let base = write_keyword_dataset(dir.path(), 400);
    let corpus = Arc::new(ingest(&base.dataset.path, base.dataset.format, &base.ingest).unwrap());
    for kind in [SelectorKind::Random, SelectorKind::Abstain, SelectorKind::Disagree, SelectorKind::Seu] {
        let mut config = base.clone();
        config.selector.kind = kind;
        let out = run_simulation(corpus.clone(), &config).unwrap();
        let iters: Vec<usize> = out.summary.points.iter().map(|p| p.iteration).collect();
        assert_eq!(iters, vec![5, 10, 15, 20], "{kind:?}");
        assert!(!out.summary.truncated);
        assert!(out.summary.points.iter().all(|p| (0.0..=1.0).contains(&p.value)));
        let again = run_simulation(corpus.clone(), &config).unwrap();
        assert_eq!(again.summary, out.summary, "{kind:?} is not deterministic");
    }
}

#[test]
fn human_session_accepts_lfs_from_the_shown_example_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = write_keyword_dataset(dir.path(), 200);
    config.run.mode = Mode::Human;
    let mut s = Session::from_config(config).unwrap();
    assert_eq!(s.state(), SessionState::Ready);
    let id = s.next_example().unwrap();
    let corpus = s.corpus().clone();
    assert!(corpus.splits.get(Split::Train).contains(&id));
    let names = corpus.primitive_names(corpus.example(id));
    let absent = (0..)
        .map(|k| format!("nw{k:03}"))
        .find(|w| corpus.primitive_id(w).is_some() && !names.contains(w))
        .unwrap();
    assert!(matches!(s.submit(&absent, Label::Pos), Err(Error::PrimitiveNotInExample { .. })));
    let report = s.submit(&names[0], Label::Neg).unwrap();
    assert_eq!(report.iteration, 1);
    assert_eq!(s.lfs().len(), 1);
    assert_eq!(s.state(), SessionState::Ready);
}

#[test]
fn primitive_jsonl_ingest_keeps_features_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let records = ring_records(5, &RingCorpusConfig { n: 120, ..Default::default() });
    let lines: String = records.iter().map(|r| r.to_json_line() + "\n").collect();
    let path = dir.path().join("ring.jsonl");
    fs::write(&path, lines).unwrap();
    let corpus = ingest(&path, InputFormat::PrimitiveJsonl, &Default::default()).unwrap();
    assert_eq!(corpus.len(), 120);
    for (i, r) in records.iter().enumerate() {
        let Record::Primitive { features, .. } = r else { panic!("ring records carry primitives") };
        assert_eq!(corpus.example(i).features, SparseVec::from_dense(features));
    }
    assert_eq!(corpus.splits.get(Split::Train).len(), 96);
}
