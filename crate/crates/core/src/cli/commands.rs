use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use rayon::prelude::*;

use super::manifest::{sibling, ManifestBuilder};
use super::*;
use crate::delta::{fit_bucket_stats, standardize, Label, VersionPairDelta, DELTA_CSV_HEADER};
use crate::evaluator::{self, scored_pairs, write_results_csv, EvaluationConfig};
use crate::injector::{builtin_snippets, load_snippets, MaliciousSnippet};
use crate::miner::{mine_repository, ConsecutiveVersionPair, FunctionHistoryStore, FunctionVersion, MiningConfig};
use crate::report;
use crate::scorer::{
    self, write_record, BackendError, MockBackend, RemoteBackend, ScoreError, ScoreRecord, ScoreTable,
    TokenProbabilityBackend,
};

/// Versions scored between two flushes of the score file.
const SCORE_CHUNK: usize = 64;
/// Added lines shown per ranked pair.
const EXCERPT_LINES: usize = 5;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).with_context(|| format!("cannot create {}", path.display())).map(BufWriter::new).or_exit(EXIT_FATAL)
}

/// `path`, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_store(path: &Path) -> Result<FunctionHistoryStore, Failure> {
    FunctionHistoryStore::load(path).with_context(|| format!("cannot load store {}", path.display())).or_exit(EXIT_FATAL)
}

fn load_scores(path: &Path) -> Result<ScoreTable, Failure> {
    ScoreTable::load(path).with_context(|| format!("cannot load scores {}", path.display())).or_exit(EXIT_FATAL)
}

fn load_corpus(path: Option<&Path>) -> Result<Vec<MaliciousSnippet>, Failure> {
    let Some(path) = path else { return Ok(builtin_snippets()) };
    let corpus = load_snippets(path).or_exit(EXIT_SNIPPETS)?;
    for (file, reason) in &corpus.rejected {
        warn!("snippet {file} rejected: {reason}");
    }
    Ok(corpus.snippets)
}

fn connect(args: &BackendArgs, mock_seed: u64) -> Result<Box<dyn TokenProbabilityBackend>, Failure> {
    if args.mock {
        return Ok(Box::new(MockBackend::new(mock_seed)));
    }
    let Some(url) = &args.backend_url else {
        return fail(EXIT_FATAL, "no backend: pass --mock or --backend-url (or set COHESION_BACKEND_URL)");
    };
    let backend = RemoteBackend::connect(url, args.remote()).or_exit(EXIT_BACKEND)?;
    info!("connected to {} at {url}", backend.id());
    Ok(Box::new(backend))
}

/// The backend that rescoring must use to stay comparable with `scores`.
/// With `--mock`, the seed comes from the score records.
fn connect_like(args: &BackendArgs, scores: &ScoreTable) -> Result<Box<dyn TokenProbabilityBackend>, Failure> {
    let ids: BTreeSet<&str> = scores.records().map(|r| r.backend.as_str()).collect();
    let mock_seed = if args.mock {
        match ids.iter().collect::<Vec<_>>().as_slice() {
            [] => 0,
            [id] => match id.strip_prefix("mock:").and_then(|s| s.parse::<u64>().ok()) {
                Some(seed) => seed,
                None => return fail(EXIT_FATAL, format!("--mock cannot rescore scores produced by `{id}`")),
            },
            many => return fail(EXIT_FATAL, format!("scores mix several backends: {many:?}")),
        }
    } else {
        0
    };
    let backend = connect(args, mock_seed)?;
    if !ids.is_empty() && !ids.contains(backend.id()) {
        warn!("scores were produced by {ids:?}, injected versions are scored by {}", backend.id());
    }
    Ok(backend)
}

pub(super) fn mine(a: &MineArgs) -> Result<(), Failure> {
    let manifest = ManifestBuilder::start("mine", a, &[Path::new(&a.repo)], None);
    let config = if a.extensions.is_empty() {
        MiningConfig::default()
    } else {
        let dotted = a.extensions.iter().map(|e| if e.starts_with('.') { e.clone() } else { format!(".{e}") });
        MiningConfig { extensions: dotted.collect() }
    };
    let outcome = mine_repository(&a.repo, &config).with_context(|| format!("cannot mine {}", a.repo)).or_exit(EXIT_FATAL)?;
    info!(
        "{} commits scanned, {} functions, {} versions, {} pairs, {} skipped",
        outcome.commits_scanned,
        outcome.store.histories().len(),
        outcome.store.version_count(),
        outcome.store.list_version_pairs().len(),
        outcome.skips.len()
    );
    let Some(out) = &a.out else {
        for s in &outcome.skips {
            warn!("skipped {s}");
        }
        let mut stdout = std::io::stdout().lock();
        return outcome.store.write_jsonl(&mut stdout).or_exit(EXIT_FATAL);
    };
    outcome.store.save(out).or_exit(EXIT_FATAL)?;
    let skip_log = sibling(out, "skips.log");
    let mut w = create(&skip_log)?;
    for s in &outcome.skips {
        writeln!(w, "{s}").or_exit(EXIT_FATAL)?;
    }
    w.flush().or_exit(EXIT_FATAL)?;
    manifest.finish(out, &[out.clone(), skip_log]).or_exit(EXIT_FATAL)
}

enum Scored {
    Record(ScoreRecord),
    Unreachable(String),
}

fn score_version(key: &str, idx: usize, v: &FunctionVersion, backend: &dyn TokenProbabilityBackend, args: &BackendArgs) -> Scored {
    let id = backend.id();
    let f = match v.function() {
        Ok(f) => f,
        Err(e) => return Scored::Record(ScoreRecord::failure(key, idx, &format!("unparsable: {e}"), id)),
    };
    match scorer::score(&f, backend, &args.scoring()) {
        Ok(s) => Scored::Record(ScoreRecord::success(key, idx, &s, id)),
        Err(ScoreError::Backend { source: BackendError::Connection(msg), .. }) => Scored::Unreachable(msg),
        Err(e) => Scored::Record(ScoreRecord::failure(key, idx, &e.to_string(), id)),
    }
}

/// Opens the score file for appending and lists the versions it already
/// scores with `backend_id`. A torn final line is cut off first.
fn resume(out: &Path, backend_id: &str, fresh: bool) -> Result<(File, HashSet<(String, usize)>), Failure> {
    if fresh || !out.exists() {
        let f = File::create(out).with_context(|| format!("cannot create {}", out.display())).or_exit(EXIT_FATAL)?;
        return Ok((f, HashSet::new()));
    }
    let bytes = std::fs::read(out).with_context(|| format!("cannot read {}", out.display())).or_exit(EXIT_FATAL)?;
    let partial = ScoreTable::read_jsonl_lenient(&bytes);
    let mut file = OpenOptions::new().write(true).open(out).or_exit(EXIT_FATAL)?;
    if partial.dropped_tail {
        warn!("{}: discarding {} bytes after the last valid record", out.display(), bytes.len() as u64 - partial.valid_bytes);
        file.set_len(partial.valid_bytes).or_exit(EXIT_FATAL)?;
    }
    let done: HashSet<(String, usize)> = partial
        .table
        .records()
        .filter(|r| r.backend == backend_id && r.score().is_some())
        .map(|r| (r.key.clone(), r.version))
        .collect();
    file.seek(SeekFrom::End(0)).or_exit(EXIT_FATAL)?;
    Ok((file, done))
}

pub(super) fn score(a: &ScoreArgs) -> Result<(), Failure> {
    let manifest = ManifestBuilder::start("score", a, &[&a.store], Some(a.seed));
    let store = load_store(&a.store)?;
    let backend = connect(&a.backend, a.seed)?;
    let (mut out, done): (Box<dyn Write>, _) = match &a.out {
        Some(path) => {
            let (file, done) = resume(path, backend.id(), a.fresh)?;
            (Box::new(BufWriter::new(file)), done)
        }
        None => (Box::new(std::io::stdout().lock()), HashSet::new()),
    };
    let todo: Vec<(String, usize, &FunctionVersion)> = store
        .versions()
        .map(|(idx, v)| (v.identity.key(), idx, v))
        .filter(|(key, idx, _)| !done.contains(&(key.clone(), *idx)))
        .collect();
    info!("{} versions, {} already scored, {} to score", store.version_count(), done.len(), todo.len());

    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.jobs).build().or_exit(EXIT_FATAL)?;
    let (mut ok, mut failed) = (0usize, 0usize);
    for chunk in todo.chunks(SCORE_CHUNK) {
        let results: Vec<Scored> = pool.install(|| {
            chunk.par_iter().map(|(key, idx, v)| score_version(key, *idx, v, backend.as_ref(), &a.backend)).collect()
        });
        let mut unreachable = None;
        for r in results {
            match r {
                Scored::Record(rec) => {
                    if rec.error.is_some() {
                        warn!("{}#{}: {}", rec.key, rec.version, rec.error.as_deref().unwrap_or_default());
                        failed += 1;
                    } else {
                        ok += 1;
                    }
                    write_record(&mut out, &rec).or_exit(EXIT_FATAL)?;
                }
                Scored::Unreachable(msg) => {
                    unreachable.get_or_insert(msg);
                }
            }
        }
        out.flush().or_exit(EXIT_FATAL)?;
        if let Some(msg) = unreachable {
            return fail(EXIT_BACKEND, format!("backend unreachable after retries: {msg}"));
        }
        info!("scored {}/{}", ok + failed, todo.len());
    }
    info!("{ok} scored, {failed} failed");
    match &a.out {
        Some(path) => manifest.finish(path, std::slice::from_ref(path)).or_exit(EXIT_FATAL),
        None => Ok(()),
    }
}

/// Benign deltas of every pair whose two versions scored.
struct PairDeltas<'a> {
    pairs: Vec<(ConsecutiveVersionPair<'a>, VersionPairDelta)>,
    missing: usize,
    failed: usize,
    total: usize,
}

fn pair_deltas<'a>(store: &'a FunctionHistoryStore, scores: &ScoreTable) -> PairDeltas<'a> {
    let mut out = PairDeltas { pairs: Vec::new(), missing: 0, failed: 0, total: 0 };
    for pair in store.list_version_pairs() {
        out.total += 1;
        let key = pair.identity.key();
        if !scores.contains(&key, pair.index) || !scores.contains(&key, pair.index + 1) {
            out.missing += 1;
            continue;
        }
        match (scores.score(&key, pair.index), scores.score(&key, pair.index + 1)) {
            (Some(s1), Some(s2)) => {
                let d = VersionPairDelta::new(pair.pair_id(), &s1, &s2, Label::Benign);
                out.pairs.push((pair, d));
            }
            _ => out.failed += 1,
        }
    }
    out
}

/// Trimmed lines of `after` that `before` lacks, counted as a multiset.
fn added_lines(before: &str, after: &str) -> Vec<String> {
    let mut have: HashMap<&str, usize> = HashMap::new();
    for l in before.lines().map(str::trim) {
        *have.entry(l).or_default() += 1;
    }
    after
        .lines()
        .map(str::trim)
        .filter(|l| {
            if l.is_empty() {
                return false;
            }
            match have.get_mut(l) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    false
                }
                _ => true,
            }
        })
        .map(str::to_string)
        .collect()
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub(super) fn monitor(a: &MonitorArgs) -> Result<(), Failure> {
    let manifest = ManifestBuilder::start("monitor", a, &[&a.store, &a.scores], None);
    let store = load_store(&a.store)?;
    let scores = load_scores(&a.scores)?;
    let PairDeltas { pairs, missing, failed, total } = pair_deltas(&store, &scores);
    if missing > 0 {
        return fail(EXIT_MISSING_SCORES, format!("{missing} of {total} pairs lack score records; run `score` first"));
    }
    if failed > 0 {
        warn!("{failed} of {total} pairs excluded: a version failed to score");
    }
    let mut deltas: Vec<VersionPairDelta> = pairs.iter().map(|(_, d)| d.clone()).collect();
    if !deltas.is_empty() {
        let stats = fit_bucket_stats(&deltas).or_exit(EXIT_FATAL)?;
        deltas = deltas.iter().map(|d| standardize(d, &stats)).collect();
    }
    let ranked = evaluator::top_k(&deltas, a.metric, a.top);

    let mut w = csv::Writer::from_writer(sink(a.out.as_deref())?);
    let mut header: Vec<&str> = DELTA_CSV_HEADER.to_vec();
    header.extend(["commit1", "commit2", "excerpt"]);
    w.write_record(&header).or_exit(EXIT_FATAL)?;
    let mut text = format!("top {} of {} pairs by {}\n", ranked.len(), deltas.len(), a.metric);
    for (rank, &i) in ranked.iter().enumerate() {
        let (pair, d) = (&pairs[i].0, &deltas[i]);
        let added = added_lines(&pair.v1.body_text, &pair.v2.body_text);
        let excerpt: Vec<&str> = added.iter().take(EXCERPT_LINES).map(String::as_str).collect();
        w.write_record([
            d.pair_id.clone(),
            d.npc1.to_string(),
            d.npc2.to_string(),
            d.cd.to_string(),
            d.otcd.to_string(),
            cell(d.cdz),
            cell(d.otcdz),
            d.label.as_str().to_string(),
            pair.v1.commit_id.clone(),
            pair.v2.commit_id.clone(),
            excerpt.join("\n"),
        ])
        .or_exit(EXIT_FATAL)?;
        text.push_str(&format!(
            "\n#{:<3} {}={:.3}  npc {:.3} -> {:.3}  cd {:.3}  {}\n     {} -> {}\n",
            rank + 1,
            a.metric,
            a.metric.value(d),
            d.npc1,
            d.npc2,
            d.cd,
            d.pair_id,
            short(&pair.v1.commit_id),
            short(&pair.v2.commit_id),
        ));
        for l in &excerpt {
            text.push_str(&format!("     + {l}\n"));
        }
        if added.len() > excerpt.len() {
            text.push_str(&format!("     ({} more added lines)\n", added.len() - excerpt.len()));
        }
    }
    w.flush().or_exit(EXIT_FATAL)?;
    drop(w);

    let mut outputs: Vec<PathBuf> = a.out.iter().cloned().collect();
    match (&a.text, &a.out) {
        (Some(path), _) => {
            std::fs::write(path, &text).or_exit(EXIT_FATAL)?;
            outputs.push(path.clone());
        }
        (None, Some(_)) => print!("{text}"),
        (None, None) => {}
    }
    match &a.out {
        Some(out) => manifest.finish(out, &outputs).or_exit(EXIT_FATAL),
        None => Ok(()),
    }
}

fn short(commit: &str) -> &str {
    &commit[..commit.len().min(10)]
}

pub(super) fn evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    let mut inputs: Vec<&Path> = vec![&a.store, &a.scores];
    inputs.extend(a.snippets.as_deref());
    let manifest = ManifestBuilder::start("evaluate", a, &inputs, Some(a.seed));
    let store = load_store(&a.store)?;
    let scores = load_scores(&a.scores)?;
    let corpus = load_corpus(a.snippets.as_deref())?;
    let (pairs, diag) = scored_pairs(&store, &scores);
    if diag.missing_score > 0 {
        return fail(
            EXIT_MISSING_SCORES,
            format!("{} of {} pairs lack score records; run `score` first", diag.missing_score, diag.total_pairs),
        );
    }
    if diag.failed_score + diag.unparsable_v1 > 0 {
        warn!("{} pairs excluded for failed scores, {} for unparsable first versions", diag.failed_score, diag.unparsable_v1);
    }
    let backend = connect_like(&a.backend, &scores)?;
    let scoring = a.backend.scoring();

    let mut metrics = if a.metrics.is_empty() { Metric::DELTAS.to_vec() } else { a.metrics.clone() };
    if a.oracle && !metrics.contains(&Metric::Oracle) {
        metrics.push(Metric::Oracle);
    }
    let filters = if a.both_filters { vec![false, true] } else { vec![a.high_cohesion_only] };

    let mut results = Vec::new();
    for &ratio in &a.ratios {
        for &high_cohesion_only in &filters {
            let config = EvaluationConfig {
                ratio,
                trials: a.trials,
                metrics: metrics.clone(),
                high_cohesion_only,
                k: a.k,
                master_seed: a.seed,
                contaminated_stats: a.contaminated_stats,
            };
            let r = evaluator::evaluate(&pairs, &corpus, backend.as_ref(), &scoring, &config)
                .with_context(|| format!("ratio {ratio}"))
                .or_exit(EXIT_EVALUATION)?;
            for m in &r.metrics {
                info!(
                    "{ratio} {} {}: adjusted P@{} {:.2}% (raw {:.2}%)",
                    r.filter_label(),
                    m.metric,
                    a.k,
                    100.0 * m.mean_adjusted,
                    100.0 * m.mean_raw
                );
            }
            results.push(r);
        }
    }

    let json = serde_json::to_string_pretty(&serde_json::json!({ "results": results })).or_exit(EXIT_FATAL)?;
    let mut out = sink(a.out.as_deref())?;
    out.write_all(json.as_bytes()).and_then(|_| out.write_all(b"\n")).and_then(|_| out.flush()).or_exit(EXIT_FATAL)?;
    drop(out);
    let mut outputs: Vec<PathBuf> = a.out.iter().cloned().collect();
    if let Some(csv_path) = &a.csv {
        write_results_csv(create(csv_path)?, &results).or_exit(EXIT_FATAL)?;
        outputs.push(csv_path.clone());
    }
    match outputs.first() {
        Some(primary) => manifest.finish(primary, &outputs).or_exit(EXIT_FATAL),
        None => Ok(()),
    }
}

pub(super) fn report(a: &ReportArgs) -> Result<(), Failure> {
    let manifest = ManifestBuilder::start("report", a, &[&a.store, &a.scores], Some(a.seed));
    let store = load_store(&a.store)?;
    let scores = load_scores(&a.scores)?;
    let sized = report::sized_scores(&store, &scores);
    let out = sink(a.out.as_deref())?;
    let written = match a.kind {
        ReportKind::Histogram => {
            if !(a.bin_width > 0.0 && a.bin_width <= 1.0) {
                return fail(EXIT_FATAL, format!("--bin-width must lie in (0, 1], got {}", a.bin_width));
            }
            report::write_csv(out, &report::npc_histogram(&sized, a.bin_width))
        }
        ReportKind::SizeBuckets => report::write_csv(out, &report::size_buckets(&sized)),
        ReportKind::Correlation => {
            let deltas: Vec<VersionPairDelta> = pair_deltas(&store, &scores).pairs.into_iter().map(|(_, d)| d).collect();
            report::write_csv(out, &report::correlations(&deltas, &sized))
        }
        ReportKind::OtcCurves => {
            let plain: Vec<_> = sized.iter().map(|s| s.score).collect();
            report::write_csv(out, &report::otc_curves(&plain))
        }
        ReportKind::InjectionImpact => {
            let corpus = load_corpus(a.snippets.as_deref())?;
            let backend = connect_like(&a.backend, &scores)?;
            let functions: Vec<_> = store
                .versions()
                .filter_map(|(idx, v)| Some((v.function().ok()?, scores.score(&v.identity.key(), idx)?)))
                .take(a.max_functions)
                .collect();
            let baseline: Vec<VersionPairDelta> =
                pair_deltas(&store, &scores).pairs.into_iter().map(|(_, d)| d).collect();
            let rows = report::injection_impact(&functions, &baseline, &corpus, backend.as_ref(), &a.backend.scoring(), a.seed);
            report::write_csv(out, &rows)
        }
    };
    written.or_exit(EXIT_FATAL)?;
    match &a.out {
        Some(path) => manifest.finish(path, std::slice::from_ref(path)).or_exit(EXIT_FATAL),
        None => Ok(()),
    }
}
