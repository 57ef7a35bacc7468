use std::fs;
use std::path::{Path, PathBuf};

use chrono::DateTime;
use gsnkit::arbitrary;
use gsnkit::corpus::Corpus;
use gsnkit::detection::{evaluate_corpus, EvaluationBackend};
use gsnkit::persistence::{PersistenceError, Project, ProjectStore, Revision};
use proptest::prelude::*;

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(files_under(&path));
        } else {
            out.push(path);
        }
    }
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn round_trip_and_tamper_detection(p in arbitrary::project(), pick in any::<usize>(), offset in any::<usize>(), flip in 1u8..=255) {
        let tmp = tempfile::tempdir().unwrap();
        let store = ProjectStore::new(tmp.path());
        let id = store.save(&p).unwrap();
        prop_assert_eq!(&store.load(&p.name, &Revision::Latest).unwrap(), &p);
        prop_assert_eq!(store.save(&p).unwrap(), id.clone());

        let snapshot = store.project_dir(&p.name).join("revisions").join(id.as_str());
        let files = files_under(&snapshot);
        let victim = &files[pick % files.len()];
        let mut bytes = fs::read(victim).unwrap();
        let at = offset % bytes.len();
        bytes[at] ^= flip;
        fs::write(victim, &bytes).unwrap();
        let loaded = store.load(&p.name, &Revision::Id(id));
        prop_assert!(matches!(loaded, Err(PersistenceError::CorruptStore { .. })), "{:?} {:?}", victim, loaded);
    }
}

fn fixture_project() -> Project {
    let corpus = Corpus::bundled();
    let created = DateTime::parse_from_rfc3339("2024-05-01T09:30:00Z").unwrap().to_utc();
    let modified = DateTime::parse_from_rfc3339("2024-05-02T17:05:30.25Z").unwrap().to_utc();
    let mut p = Project::with_timestamps("Golden Fixture", created, modified);
    p.cases.insert("BlueROV2".into(), corpus.cases["BlueROV2"].structure.clone());
    p.patterns.insert("ALARP".into(), corpus.patterns["ALARP"].clone());
    p.patterns.insert("ReSonAte".into(), corpus.patterns["ReSonAte"].clone());
    p.knowledge.insert("BlueROV2".into(), corpus.knowledge["BlueROV2"].clone());
    let report = evaluate_corpus::<f64>(&corpus, &[0.2, 0.8], 1, &[EvaluationBackend::deterministic()]).unwrap();
    p.reports.insert("sweep".into(), report);
    p
}

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden_project");

/// Bit-exact layout check. Run with GSNKIT_BLESS=1 to rewrite the fixture.
#[test]
fn golden_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ProjectStore::new(tmp.path());
    let id = store.save(&fixture_project()).unwrap();
    let dir = store.project_dir("Golden Fixture");
    let produced: Vec<(String, Vec<u8>)> = files_under(&dir)
        .into_iter()
        .map(|p| (p.strip_prefix(&dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    let golden = Path::new(GOLDEN);
    if std::env::var_os("GSNKIT_BLESS").is_some() {
        let _ = fs::remove_dir_all(golden);
        for (rel, bytes) in &produced {
            let path = golden.join(rel);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, bytes).unwrap();
        }
    }
    let expected: Vec<String> = files_under(golden)
        .iter()
        .map(|p| p.strip_prefix(golden).unwrap().to_string_lossy().into_owned())
        .collect();
    let names: Vec<&String> = produced.iter().map(|(r, _)| r).collect();
    assert_eq!(names, expected.iter().collect::<Vec<_>>());
    for (rel, bytes) in &produced {
        assert_eq!(bytes, &fs::read(golden.join(rel)).unwrap(), "{rel} differs from golden");
    }
    assert_eq!(fs::read_to_string(golden.join("HEAD")).unwrap().trim(), id.as_str());
}

#[test]
fn revisions_are_retained() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ProjectStore::new(tmp.path());
    let mut p = fixture_project();
    let first = store.save(&p).unwrap();
    assert_eq!(store.save(&p).unwrap(), first);

    let case = p.cases.get_mut("BlueROV2").unwrap();
    assert!(case.set_statement("G8", "Thruster failure is detected within one second"));
    p.touch();
    let second = store.save(&p).unwrap();
    assert_ne!(first, second);

    assert_eq!(store.load("Golden Fixture", &Revision::Latest).unwrap(), p);
    let old = store.load("Golden Fixture", &Revision::Id(first.clone())).unwrap();
    assert_eq!(old, fixture_project());
    let history: Vec<_> = store.history("Golden Fixture").unwrap().into_iter().map(|e| e.id).collect();
    assert_eq!(history, vec![first.clone(), second.clone()]);
    assert_eq!(store.list().unwrap(), vec!["Golden Fixture".to_string()]);

    assert_eq!(store.prune("Golden Fixture", 1).unwrap(), vec![first.clone()]);
    assert!(matches!(
        store.load("Golden Fixture", &Revision::Id(first)),
        Err(PersistenceError::NotFound(_))
    ));
    assert_eq!(store.load("Golden Fixture", &Revision::Latest).unwrap(), p);
    assert_eq!(store.history("Golden Fixture").unwrap().len(), 1);

    store.delete("Golden Fixture").unwrap();
    assert!(store.list().unwrap().is_empty());
}

#[test]
fn empty_project_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ProjectStore::new(tmp.path());
    let p = Project::new("Empty");
    store.save(&p).unwrap();
    assert_eq!(store.load("Empty", &Revision::Latest).unwrap(), p);
}

#[test]
fn writer_lock_and_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let store = ProjectStore::new(tmp.path());
    let p = fixture_project();
    let dir = store.project_dir(&p.name);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(".lock"), "1\n").unwrap();
    assert!(matches!(store.save(&p), Err(PersistenceError::Locked(_))));
    fs::remove_file(dir.join(".lock")).unwrap();
    store.save(&p).unwrap();
    assert!(!dir.join(".lock").exists());

    let mut backwards = p.clone();
    backwards.modified = backwards.created - chrono::Duration::seconds(1);
    assert!(matches!(store.save(&backwards), Err(PersistenceError::InvalidProject(_))));

    let mut broken = p.clone();
    broken.cases.insert("empty".into(), gsnkit::model::GoalStructure::new("empty"));
    assert!(matches!(store.save(&broken), Err(PersistenceError::InvalidStructure { .. })));

    let mut renamed = p;
    renamed.name = "golden fixture".into();
    assert!(matches!(store.save(&renamed), Err(PersistenceError::InvalidProject(_))));
    assert!(matches!(store.load("missing", &Revision::Latest), Err(PersistenceError::NotFound(_))));
}
