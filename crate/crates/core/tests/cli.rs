use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otr::dataset::{read_dataset, read_records, write_dataset};
use otr::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn otr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otr")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn random_episodes(n: usize, seed: u64, with_rewards: bool) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let len = rng.random_range(5..15);
            let obs = (0..len)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let mut t = Trajectory::from_observations(obs).with_id(format!("ep{k}"));
            if with_rewards {
                t.rewards = Some((0..len).map(|_| rng.random_range(0.0..1.0)).collect());
            }
            t
        })
        .collect()
}

fn fixture(dir: &Path, name: &str, episodes: &[Trajectory]) -> PathBuf {
    let p = dir.join(name);
    write_dataset(&p, episodes).unwrap();
    p
}

#[test]
fn label_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let u = fixture(dir.path(), "u.jsonl", &random_episodes(10, 1, false));
    let e = fixture(dir.path(), "e.jsonl", &random_episodes(1, 2, true));
    let out = dir.path().join("out.jsonl");
    let o = otr(&["label", s(&u), s(&e), s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("episodes labeled: 10"));
    let recs = read_records(&out).unwrap();
    assert_eq!(recs.len(), 10);
    assert!(recs.iter().all(|r| r.source_expert == Some(0) && r.trajectory.rewards.is_some()));
}

#[test]
fn missing_experts_file() {
    let dir = tempfile::tempdir().unwrap();
    let u = fixture(dir.path(), "u.jsonl", &random_episodes(2, 1, false));
    let missing = dir.path().join("nowhere.jsonl");
    let out = dir.path().join("out.jsonl");
    let o = otr(&["label", s(&u), s(&missing), s(&out)]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("nowhere.jsonl"));
    assert!(!out.exists());
}

#[test]
fn self_labeling_gives_unit_rewards() {
    let dir = tempfile::tempdir().unwrap();
    let e = fixture(dir.path(), "e.jsonl", &random_episodes(1, 3, true));
    let out = dir.path().join("out.jsonl");
    let o = otr(&[
        "label", s(&e), s(&e), s(&out), "--squash-mode", "plain", "--alpha", "1", "--beta", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let recs = read_records(&out).unwrap();
    for r in recs[0].trajectory.rewards.as_ref().unwrap() {
        assert!((r - 1.0).abs() < 1e-2, "{r}");
    }
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let u = fixture(dir.path(), "u.jsonl", &random_episodes(2, 1, false));
    let out = dir.path().join("out.jsonl");
    assert_eq!(otr(&["label", s(&u), s(&u), s(&out), "--frobnicate"]).status.code(), Some(2));
    assert_eq!(otr(&["label", s(&u), s(&u), s(&out), "--epsilon", "-1"]).status.code(), Some(2));
    assert_eq!(otr(&["label", s(&u), s(&u), s(&out), "--post-scale", "shift:x"]).status.code(), Some(2));
    assert_eq!(otr(&["label", s(&u), s(&u), s(&out), "--preset", "locomotion"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn malformed_input_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"observations\": [[1.0, 2.0]]}\n{\"observations\": [[1.0], [2.0, 3.0]]}\n")
        .unwrap();
    let out = dir.path().join("out.jsonl");
    let o = otr(&["label", s(&bad), s(&bad), s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn select_experts() {
    let dir = tempfile::tempdir().unwrap();
    let data = random_episodes(6, 4, true);
    let best = data
        .iter()
        .max_by(|a, b| a.episodic_return().unwrap().total_cmp(&b.episodic_return().unwrap()))
        .unwrap()
        .clone();
    let d = fixture(dir.path(), "d.jsonl", &data);
    let out = dir.path().join("top.jsonl");
    let o = otr(&["select-experts", s(&d), "1", s(&out)]);
    assert!(o.status.success());
    assert_eq!(read_dataset(&out).unwrap().episodes, vec![best]);

    let o = otr(&["select-experts", s(&d), "10", s(&out)]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
    assert_eq!(read_dataset(&out).unwrap().len(), 6);

    let bare = fixture(dir.path(), "bare.jsonl", &random_episodes(2, 5, false));
    let o = otr(&["select-experts", s(&bare), "1", s(&dir.path().join("x.jsonl"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no rewards"));
}

#[test]
fn diagnose_identical_and_constant_returns() {
    let dir = tempfile::tempdir().unwrap();
    let truth = random_episodes(8, 6, true);
    let t = fixture(dir.path(), "t.jsonl", &truth);
    let csv = dir.path().join("diag.csv");
    let o = otr(&["diagnose", s(&t), s(&t), s(&csv)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pearson: 1.000000"), "{}", stdout(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("episode_id,ground_truth_return,otr_return,source_expert\n"));
    assert_eq!(text.lines().count(), 9);

    let flat: Vec<Trajectory> = truth
        .iter()
        .map(|e| Trajectory {
            rewards: Some(vec![0.0; e.len()]),
            ..e.clone()
        })
        .collect();
    let f = fixture(dir.path(), "f.jsonl", &flat);
    let o = otr(&["diagnose", s(&f), s(&t), s(&csv)]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("pearson: 0.000000"));
    assert!(stderr(&o).contains("zero variance"));

    let renamed: Vec<Trajectory> = truth.iter().map(|e| e.clone().with_id("other")).collect();
    let r = fixture(dir.path(), "r.jsonl", &renamed);
    assert_eq!(otr(&["diagnose", s(&r), s(&t), s(&csv)]).status.code(), Some(3));
}

#[test]
fn demo_with_truth_labels() {
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/gridworld_reference.cfg");
    let dir = tempfile::tempdir().unwrap();
    let o = otr(&["demo-gridworld", config, "--labeler", "truth", "--out-dir", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("success_rate: 1"));
    assert_eq!(read_dataset(&dir.path().join("unlabeled.jsonl")).unwrap().len(), 101);
    for labeler in ["uds", "uniform"] {
        let o = otr(&["demo-gridworld", config, "--labeler", labeler]);
        assert!(o.status.success(), "{labeler}: {}", stderr(&o));
        assert!(stdout(&o).contains("success_rate:"));
    }
}
