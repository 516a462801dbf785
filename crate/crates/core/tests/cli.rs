mod common;

use std::path::{Path, PathBuf};

use cohesion_core::miner::FunctionHistoryStore;
use cohesion_core::scorer::{CohesionScore, ScoreRecord, ScoreTable};
use common::{cohesion, evolving_repo, FakeMode, FakeModelServer, FixtureRepo};

struct Workspace {
    repo: FixtureRepo,
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(files: usize, per_file: usize, commits: usize) -> Self {
        Workspace { repo: evolving_repo(files, per_file, commits), dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn mine(&self) -> FunctionHistoryStore {
        let out = cohesion(&["mine", "--repo", &self.repo.path_str(), "--out", &self.arg("store.jsonl")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        FunctionHistoryStore::load(&self.path("store.jsonl")).unwrap()
    }

    fn score_mock(&self) -> ScoreTable {
        let out = cohesion(&["score", "--store", &self.arg("store.jsonl"), "--mock", "--out", &self.arg("scores.jsonl")]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        ScoreTable::load(&self.path("scores.jsonl")).unwrap()
    }
}

fn lines(p: &Path) -> Vec<String> {
    std::fs::read_to_string(p).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn mine_writes_store_skip_log_and_manifest() {
    let ws = Workspace::new(2, 3, 2);
    let store = ws.mine();
    assert_eq!(store.histories().len(), 6);
    assert_eq!(store.version_count(), 12);
    assert!(ws.path("store.jsonl.skips.log").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path("store.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "mine");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    let first = std::fs::read(ws.path("store.jsonl")).unwrap();
    ws.mine();
    assert_eq!(std::fs::read(ws.path("store.jsonl")).unwrap(), first);

    let stdout = cohesion(&["mine", "--repo", &ws.repo.path_str()]);
    assert!(stdout.status.success());
    assert_eq!(stdout.stdout, first);

    let missing = cohesion(&["mine", "--repo", &ws.arg("no-such-repo"), "--out", &ws.arg("x.jsonl")]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn mock_scoring_covers_every_version() {
    let ws = Workspace::new(2, 3, 2);
    let store = ws.mine();
    let scores = ws.score_mock();
    assert_eq!(scores.len(), store.version_count());
    assert!(scores.records().all(|r| r.score().is_some() && r.backend == "mock:0"));

    let no_backend = cohesion(&["score", "--store", &ws.arg("store.jsonl"), "--out", &ws.arg("s2.jsonl")]);
    assert_eq!(no_backend.status.code(), Some(2));
    let unreachable = cohesion(&[
        "score", "--store", &ws.arg("store.jsonl"), "--out", &ws.arg("s3.jsonl"), "--backend-url", "http://127.0.0.1:9",
        "--retries", "0",
    ]);
    assert_eq!(unreachable.status.code(), Some(3));
}

#[test]
fn resume_after_interruption_does_no_duplicate_work() {
    let ws = Workspace::new(2, 3, 2);
    let store = ws.mine();
    let server = FakeModelServer::start(FakeMode::Constant);
    let run = |extra: &[&str]| {
        let (store, out) = (ws.arg("store.jsonl"), ws.arg("scores.jsonl"));
        let mut args = vec!["score", "--store", &store];
        args.extend(["--out", &out, "--backend-url", &server.url, "--jobs", "2"]);
        args.extend(extra);
        let o = cohesion(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&[]);
    let versions = store.version_count();
    assert_eq!(server.requests.lock().unwrap().len(), versions * 8);
    let complete = ScoreTable::load(&ws.path("scores.jsonl")).unwrap();

    // keep 5 records and a torn sixth, as a killed writer would
    let kept = lines(&ws.path("scores.jsonl"));
    let mut torn = kept[..5].join("\n");
    torn.push('\n');
    torn.push_str(&kept[5][..kept[5].len() / 2]);
    std::fs::write(ws.path("scores.jsonl"), torn).unwrap();

    run(&[]);
    assert_eq!(server.requests.lock().unwrap().len(), versions * 8 + (versions - 5) * 8);
    assert_eq!(ScoreTable::load(&ws.path("scores.jsonl")).unwrap(), complete);
    assert_eq!(lines(&ws.path("scores.jsonl")).len(), versions);

    run(&[]);
    assert_eq!(server.requests.lock().unwrap().len(), versions * 8 + (versions - 5) * 8);
    run(&["--fresh"]);
    assert_eq!(server.requests.lock().unwrap().len(), (2 * versions + versions - 5) * 8);
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(text.as_bytes()).records().map(Result::unwrap).collect()
}

#[test]
fn monitor_ranks_descending_and_caps_at_pair_count() {
    let ws = Workspace::new(3, 4, 3);
    let store = ws.mine();
    ws.score_mock();
    let pairs = store.list_version_pairs().len();
    let top = |n: &str, metric: &str| {
        let o = cohesion(&[
            "monitor", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("scores.jsonl"), "--metric", metric, "--top", n,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let out = top("10", "cdz");
    assert!(out.starts_with("pair_id,npc1,npc2,cd,otcd,cdz,otcdz,label,commit1,commit2,excerpt\n"));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 10);
    let cdz: Vec<f64> = rows.iter().map(|r| r[5].parse().unwrap()).collect();
    assert!(cdz.windows(2).all(|w| w[0] >= w[1]), "{cdz:?}");
    assert_eq!(csv_rows(&top("100000", "cd")).len(), pairs);

    let with_text = cohesion(&[
        "monitor", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("scores.jsonl"), "--top", "3", "--out",
        &ws.arg("top.csv"),
    ]);
    assert!(with_text.status.success());
    assert!(String::from_utf8_lossy(&with_text.stdout).starts_with("top 3 of"));
    assert!(ws.path("top.csv.manifest.json").exists());
}

#[test]
fn monitor_missing_scores_exit_4() {
    let ws = Workspace::new(1, 2, 2);
    ws.mine();
    ws.score_mock();
    let kept = lines(&ws.path("scores.jsonl"));
    std::fs::write(ws.path("partial.jsonl"), kept[1..].join("\n") + "\n").unwrap();
    let o = cohesion(&["monitor", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("partial.jsonl")]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn planted_drop_ranks_first() {
    let ws = Workspace::new(2, 4, 3);
    let store = ws.mine();
    let steady = CohesionScore::from_confidences([0.6; 8]);
    let dropped = CohesionScore::from_confidences([0.1; 8]);
    let planted = store.list_version_pairs()[5].pair_id();
    let mut table = ScoreTable::new();
    for h in store.histories() {
        for (i, _) in h.versions.iter().enumerate() {
            let key = h.identity.key();
            let s = if planted == cohesion_core::miner::pair_id(&key, i.saturating_sub(1)) && i > 0 { &dropped } else { &steady };
            table.insert(ScoreRecord::success(&key, i, s, "hand"));
        }
    }
    table.write_jsonl(std::fs::File::create(ws.path("hand.jsonl")).unwrap()).unwrap();
    for metric in ["cd", "otcd", "cdz", "otcdz"] {
        let o = cohesion(&[
            "monitor", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("hand.jsonl"), "--metric", metric, "--top", "1",
        ]);
        assert!(o.status.success());
        assert_eq!(&csv_rows(&String::from_utf8(o.stdout).unwrap())[0][0], planted.as_str(), "{metric}");
    }
}

#[test]
fn evaluate_oracle_is_perfect_and_reproducible() {
    let ws = Workspace::new(10, 11, 2);
    let store = ws.mine();
    assert!(store.list_version_pairs().len() >= 100);
    ws.score_mock();
    let run = |out: &str| {
        let o = cohesion(&[
            "evaluate", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("scores.jsonl"), "--mock", "--ratio", "1:100",
            "--ratio", "1:1,000", "--trials", "5", "--seed", "3", "--oracle", "--both-filters", "--out", &ws.arg(out),
            "--csv", &ws.arg(&format!("{out}.csv")),
        ]);
        (o.status.code(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    // 110 pairs: 1:1,000 selects no malicious pair
    let (code, stderr) = run("a.json");
    assert_eq!(code, Some(5), "{stderr}");

    let run_ok = |out: &str| {
        let o = cohesion(&[
            "evaluate", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("scores.jsonl"), "--mock", "--trials", "5",
            "--seed", "3", "--oracle", "--out", &ws.arg(out), "--csv", &ws.arg(&format!("{out}.csv")),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(ws.path(out)).unwrap()
    };
    let a = run_ok("b.json");
    assert_eq!(a, run_ok("c.json"));
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let metrics = v["results"][0]["metrics"].as_array().unwrap();
    assert_eq!(metrics.len(), 5);
    let oracle = metrics.iter().find(|m| m["metric"] == "oracle").unwrap();
    assert_eq!(oracle["mean_adjusted"], 1.0);
    let csv = std::fs::read_to_string(ws.path("b.json.csv")).unwrap();
    assert!(csv.starts_with("ratio,filter,metric,adjusted,raw,n_malicious,trials\n1:100,all,cd,"));
    assert!(ws.path("b.json.manifest.json").exists());

    let bad_snippets = cohesion(&[
        "evaluate", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("scores.jsonl"), "--mock", "--snippets",
        &ws.arg("nowhere"),
    ]);
    assert_eq!(bad_snippets.status.code(), Some(6));
}

#[test]
fn reports_emit_csv() {
    let ws = Workspace::new(2, 4, 3);
    let store = ws.mine();
    ws.score_mock();
    let report = |kind: &str| {
        let o = cohesion(&[
            "report", "--kind", kind, "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("scores.jsonl"), "--mock",
        ]);
        assert!(o.status.success(), "{kind}: {}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap()
    };
    let hist = report("histogram");
    let total: usize = csv_rows(&hist).iter().map(|r| r[2].parse::<usize>().unwrap()).sum();
    assert_eq!(total, store.version_count());
    assert_eq!(csv_rows(&hist).len(), 20);

    let sizes = report("size-buckets");
    assert!(sizes.starts_with("lines_lo,lines_hi,count,mean_npc,std_npc\n"));
    let corr = report("correlation");
    assert_eq!(csv_rows(&corr).len(), 3);
    assert!(!report("otc-curves").is_empty());
    assert_eq!(csv_rows(&report("injection-impact")).len(), 8);

    let unknown = cohesion(&["report", "--kind", "pie", "--store", &ws.arg("store.jsonl"), "--scores", &ws.arg("scores.jsonl")]);
    assert_eq!(unknown.status.code(), Some(2));
}
