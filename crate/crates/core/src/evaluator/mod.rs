//! Seeded injection experiments: hide injected pairs among benign
//! consecutive pairs, rank everything by a delta metric and measure how
//! many injected pairs reach the top `k`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpp::{self, ExtractedFunction};
use crate::delta::{fit_bucket_stats, standardize, DeltaError, Label, VersionPairDelta};
use crate::injector::{self, MaliciousSnippet, Position};
use crate::miner::FunctionHistoryStore;
use crate::scorer::{self, splitmix64, CohesionScore, ScoreTable, ScoringConfig, TokenProbabilityBackend};

/// Column order of the evaluation CSV export.
pub const EVAL_CSV_HEADER: [&str; 7] = ["ratio", "filter", "metric", "adjusted", "raw", "n_malicious", "trials"];

/// Default NPC threshold of the high-cohesion filter (exclusive).
pub const HIGH_COHESION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Cd,
    Otcd,
    Cdz,
    Otcdz,
    /// Ranks injected pairs above benign ones; an upper bound.
    Oracle,
    /// Ranks every pair equally, leaving order to the pair-id tie-break.
    Constant,
}

impl Metric {
    pub const DELTAS: [Metric; 4] = [Metric::Cd, Metric::Otcd, Metric::Cdz, Metric::Otcdz];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cd => "cd",
            Metric::Otcd => "otcd",
            Metric::Cdz => "cdz",
            Metric::Otcdz => "otcdz",
            Metric::Oracle => "oracle",
            Metric::Constant => "constant",
        }
    }

    /// Ranking key; standardized metrics of unstandardized deltas rank last.
    pub fn value(self, d: &VersionPairDelta) -> f64 {
        match self {
            Metric::Cd => d.cd,
            Metric::Otcd => d.otcd,
            Metric::Cdz => d.cdz.unwrap_or(f64::NEG_INFINITY),
            Metric::Otcdz => d.otcdz.unwrap_or(f64::NEG_INFINITY),
            Metric::Oracle => (d.label == Label::Injected) as u8 as f64,
            Metric::Constant => 0.0,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [Metric::Cd, Metric::Otcd, Metric::Cdz, Metric::Otcdz, Metric::Oracle, Metric::Constant]
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown metric `{s}` (cd, otcd, cdz, otcdz, oracle, constant)"))
    }
}

/// Malicious-to-benign ratio such as `1:1,000`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub malicious: u64,
    pub benign: u64,
}

impl Ratio {
    pub const fn new(malicious: u64, benign: u64) -> Self {
        Ratio { malicious, benign }
    }

    /// `floor(pairs * malicious / benign)`.
    pub fn malicious_count(self, pairs: usize) -> usize {
        ((pairs as u128 * self.malicious as u128) / self.benign as u128) as usize
    }
}

fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", group_thousands(self.malicious), group_thousands(self.benign))
    }
}

impl FromStr for Ratio {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("bad ratio `{s}`, expected A:B such as 1:1,000");
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let num = |x: &str| x.trim().replace([',', '_'], "").parse::<u64>().map_err(|_| bad());
        let r = Ratio { malicious: num(a)?, benign: num(b)? };
        if r.malicious == 0 || r.benign == 0 {
            return Err(bad());
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub ratio: Ratio,
    pub trials: usize,
    pub metrics: Vec<Metric>,
    pub high_cohesion_only: bool,
    pub k: usize,
    pub master_seed: u64,
    /// Fit bucket statistics on all ranked pairs, injected ones included.
    pub contaminated_stats: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            ratio: Ratio::new(1, 100),
            trials: 1000,
            metrics: Metric::DELTAS.to_vec(),
            high_cohesion_only: false,
            k: 100,
            master_seed: 0,
            contaminated_stats: false,
        }
    }
}

/// A benign consecutive pair with both scores available.
#[derive(Debug, Clone)]
pub struct ScoredPair {
    pub pair_id: String,
    pub v1: ExtractedFunction,
    pub s1: CohesionScore,
    pub s2: CohesionScore,
}

/// Pairs that could not enter an experiment, by cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub total_pairs: usize,
    pub missing_score: usize,
    pub failed_score: usize,
    pub unparsable_v1: usize,
}

/// Joins consecutive pairs of `store` with their scores.
pub fn scored_pairs(store: &FunctionHistoryStore, scores: &ScoreTable) -> (Vec<ScoredPair>, PairDiagnostics) {
    let mut diag = PairDiagnostics::default();
    let mut out = Vec::new();
    for pair in store.list_version_pairs() {
        diag.total_pairs += 1;
        let key = pair.identity.key();
        let (r1, r2) = (scores.get(&key, pair.index), scores.get(&key, pair.index + 1));
        let (Some(r1), Some(r2)) = (r1, r2) else {
            diag.missing_score += 1;
            continue;
        };
        let (Some(s1), Some(s2)) = (r1.score(), r2.score()) else {
            diag.failed_score += 1;
            continue;
        };
        let Ok(v1) = pair.v1.function() else {
            diag.unparsable_v1 += 1;
            continue;
        };
        out.push(ScoredPair { pair_id: pair.pair_id(), v1, s1, s2 });
    }
    (out, diag)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("ratio {ratio} selects no malicious pair among {pairs} candidates")]
    NoMalicious { ratio: Ratio, pairs: usize },
    #[error("ratio {ratio} selects all {pairs} candidates, leaving no benign pair")]
    NoBenign { ratio: Ratio, pairs: usize },
    #[error("no candidate pair accepts any snippet")]
    InjectionExhausted,
    #[error(transparent)]
    Injector(#[from] injector::InjectError),
    #[error(transparent)]
    Stats(#[from] DeltaError),
}

/// `raw / (min(n_malicious, k) / k)`: precision relative to the best
/// achievable.
pub fn adjusted_p_at_k(raw: f64, n_malicious: usize, k: usize) -> f64 {
    let best = n_malicious.min(k) as f64 / k as f64;
    raw / best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOutcome {
    pub metric: Metric,
    pub raw: f64,
    pub adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub metrics: Vec<MetricOutcome>,
    /// (pair, snippet, position) combinations that could not be injected.
    pub injection_failures: usize,
    /// Selected pairs replaced because no combination worked.
    pub replaced_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean_raw: f64,
    pub mean_adjusted: f64,
    pub std_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub config: EvaluationConfig,
    pub backend: String,
    pub candidate_pairs: usize,
    pub n_malicious_per_trial: usize,
    pub trials_run: usize,
    pub metrics: Vec<MetricSummary>,
    pub injection_failures: usize,
    pub replaced_pairs: usize,
}

impl EvaluationResult {
    pub fn filter_label(&self) -> &'static str {
        if self.config.high_cohesion_only {
            "high-cohesion"
        } else {
            "all"
        }
    }
}

/// Writes one CSV row per (result, metric) with [`EVAL_CSV_HEADER`] columns.
pub fn write_results_csv<W: std::io::Write>(out: W, results: &[EvaluationResult]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVAL_CSV_HEADER)?;
    for r in results {
        for m in &r.metrics {
            w.write_record([
                r.config.ratio.to_string(),
                r.filter_label().to_string(),
                m.metric.to_string(),
                m.mean_adjusted.to_string(),
                m.mean_raw.to_string(),
                r.n_malicious_per_trial.to_string(),
                r.trials_run.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn trial_seed(master_seed: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ trial_index)
}

type CacheKey = (usize, usize, Position);

/// Shared state of one experiment: candidates, snippets, the backend used
/// to rescore injected versions, and a cache of those scores.
pub struct Experiment<'a> {
    candidates: Vec<&'a ScoredPair>,
    corpus: &'a [MaliciousSnippet],
    backend: &'a dyn TokenProbabilityBackend,
    scoring: &'a ScoringConfig,
    config: &'a EvaluationConfig,
    n_malicious: usize,
    cache: Mutex<HashMap<CacheKey, Option<CohesionScore>>>,
}

impl<'a> Experiment<'a> {
    pub fn new(
        pairs: &'a [ScoredPair],
        corpus: &'a [MaliciousSnippet],
        backend: &'a dyn TokenProbabilityBackend,
        scoring: &'a ScoringConfig,
        config: &'a EvaluationConfig,
    ) -> Result<Self, EvalError> {
        if config.trials == 0 || config.k == 0 {
            return Err(EvalError::Config("trials and k must be at least 1".into()));
        }
        if config.metrics.is_empty() {
            return Err(EvalError::Config("no metric selected".into()));
        }
        if corpus.is_empty() {
            return Err(injector::InjectError::EmptyCorpus.into());
        }
        let candidates: Vec<&ScoredPair> =
            pairs.iter().filter(|p| !config.high_cohesion_only || p.s1.npc > HIGH_COHESION).collect();
        let n_malicious = config.ratio.malicious_count(candidates.len());
        if n_malicious == 0 {
            return Err(EvalError::NoMalicious { ratio: config.ratio, pairs: candidates.len() });
        }
        if n_malicious >= candidates.len() {
            return Err(EvalError::NoBenign { ratio: config.ratio, pairs: candidates.len() });
        }
        Ok(Experiment { candidates, corpus, backend, scoring, config, n_malicious, cache: Mutex::default() })
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn n_malicious(&self) -> usize {
        self.n_malicious
    }

    fn injected_score(&self, pair: usize, snippet: usize, position: Position) -> Option<CohesionScore> {
        let key = (pair, snippet, position);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return *hit;
        }
        let computed = (|| {
            let injection = injector::inject(&self.candidates[pair].v1, &self.corpus[snippet], position).ok()?;
            let f = cpp::extract_functions(&injection.full_text, "<injected>").ok()?.into_iter().next()?;
            scorer::score(&f, self.backend, self.scoring).ok()
        })();
        self.cache.lock().unwrap().insert(key, computed);
        computed
    }

    /// Draws a (snippet, position) and falls back through every other
    /// combination in a fixed cyclic order. Returns the score and the
    /// number of combinations that failed.
    fn inject_pair(&self, pair: usize, rng: &mut ChaCha8Rng) -> (Option<CohesionScore>, usize) {
        let combos = self.corpus.len() * 3;
        let first = rng.random_range(0..self.corpus.len()) * 3 + rng.random_range(0..3);
        for attempt in 0..combos {
            let c = (first + attempt) % combos;
            if let Some(s) = self.injected_score(pair, c / 3, Position::ALL[c % 3]) {
                return (Some(s), attempt);
            }
        }
        (None, combos)
    }

    pub fn run_trial(&self, trial_index: u64) -> Result<TrialOutcome, EvalError> {
        let n_pairs = self.candidates.len();
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(self.config.master_seed, trial_index));
        let mut queue: Vec<usize> = sample(&mut rng, n_pairs, self.n_malicious).into_vec();
        let mut used: HashSet<usize> = queue.iter().copied().collect();
        let mut injected: HashMap<usize, CohesionScore> = HashMap::with_capacity(self.n_malicious);
        let (mut failures, mut replaced) = (0, 0);
        let mut next = 0;
        while next < queue.len() {
            let idx = queue[next];
            next += 1;
            let (score, failed) = self.inject_pair(idx, &mut rng);
            failures += failed;
            match score {
                Some(s) => {
                    injected.insert(idx, s);
                }
                None => {
                    if used.len() == n_pairs {
                        return Err(EvalError::InjectionExhausted);
                    }
                    replaced += 1;
                    let mut r = rng.random_range(0..n_pairs);
                    while used.contains(&r) {
                        r = rng.random_range(0..n_pairs);
                    }
                    used.insert(r);
                    queue.push(r);
                }
            }
        }

        let deltas: Vec<VersionPairDelta> = self
            .candidates
            .iter()
            .enumerate()
            .map(|(i, p)| match injected.get(&i) {
                Some(s2) => VersionPairDelta::new(p.pair_id.as_str(), &p.s1, s2, Label::Injected),
                None => VersionPairDelta::new(p.pair_id.as_str(), &p.s1, &p.s2, Label::Benign),
            })
            .collect();
        debug_assert_eq!(deltas.iter().filter(|d| d.label == Label::Injected).count(), self.n_malicious);

        let needs_stats = self.config.metrics.iter().any(|m| matches!(m, Metric::Cdz | Metric::Otcdz));
        let deltas = if needs_stats {
            let fit_on: Vec<VersionPairDelta> = if self.config.contaminated_stats {
                deltas.clone()
            } else {
                deltas.iter().filter(|d| d.label == Label::Benign).cloned().collect()
            };
            let stats = fit_bucket_stats(&fit_on)?;
            deltas.iter().map(|d| standardize(d, &stats)).collect()
        } else {
            deltas
        };

        let k = self.config.k;
        let metrics = self
            .config
            .metrics
            .iter()
            .map(|&metric| {
                let hits = top_k(&deltas, metric, k).iter().filter(|&&i| deltas[i].label == Label::Injected).count();
                let raw = hits as f64 / k as f64;
                MetricOutcome { metric, raw, adjusted: adjusted_p_at_k(raw, self.n_malicious, k) }
            })
            .collect();
        Ok(TrialOutcome { metrics, injection_failures: failures, replaced_pairs: replaced })
    }
}

/// Indices of the `k` highest-ranked deltas: metric descending, then
/// pair id ascending, then input order.
pub fn top_k(deltas: &[VersionPairDelta], metric: Metric, k: usize) -> Vec<usize> {
    let values: Vec<f64> = deltas.iter().map(|d| metric.value(d)).collect();
    let cmp = |&a: &usize, &b: &usize| {
        values[b].total_cmp(&values[a]).then_with(|| deltas[a].pair_id.cmp(&deltas[b].pair_id)).then(a.cmp(&b))
    };
    let mut idx: Vec<usize> = (0..deltas.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Runs every trial (in parallel) and averages in trial order.
pub fn evaluate(
    pairs: &[ScoredPair],
    corpus: &[MaliciousSnippet],
    backend: &dyn TokenProbabilityBackend,
    scoring: &ScoringConfig,
    config: &EvaluationConfig,
) -> Result<EvaluationResult, EvalError> {
    let exp = Experiment::new(pairs, corpus, backend, scoring, config)?;
    let outcomes: Vec<TrialOutcome> =
        (0..config.trials as u64).into_par_iter().map(|t| exp.run_trial(t)).collect::<Result<_, _>>()?;
    let n = outcomes.len() as f64;
    let metrics = config
        .metrics
        .iter()
        .enumerate()
        .map(|(mi, &metric)| {
            let adjusted: Vec<f64> = outcomes.iter().map(|o| o.metrics[mi].adjusted).collect();
            let mean_adjusted = adjusted.iter().sum::<f64>() / n;
            let var = adjusted.iter().map(|a| (a - mean_adjusted).powi(2)).sum::<f64>() / n;
            MetricSummary {
                metric,
                mean_raw: outcomes.iter().map(|o| o.metrics[mi].raw).sum::<f64>() / n,
                mean_adjusted,
                std_adjusted: var.sqrt(),
            }
        })
        .collect();
    Ok(EvaluationResult {
        config: config.clone(),
        backend: backend.id().to_string(),
        candidate_pairs: exp.candidate_count(),
        n_malicious_per_trial: exp.n_malicious(),
        trials_run: outcomes.len(),
        metrics,
        injection_failures: outcomes.iter().map(|o| o.injection_failures).sum(),
        replaced_pairs: outcomes.iter().map(|o| o.replaced_pairs).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::injector::builtin_snippets;
    use crate::scorer::MockBackend;

    pub(crate) fn synthetic_pairs(n: usize, seed: u64) -> Vec<ScoredPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let src = format!("int fn_{i}(int x) {{\n    int y = x + {i};\n    return y * 2;\n}}");
                let v1 = cpp::extract_functions(&src, "s.cpp").unwrap().remove(0);
                let table = |rng: &mut ChaCha8Rng| std::array::from_fn(|_| rng.random_range(0.05..0.95));
                ScoredPair {
                    pair_id: format!("s.cpp::fn_{i}(int)@0-1"),
                    v1,
                    s1: CohesionScore::from_confidences(table(&mut rng)),
                    s2: CohesionScore::from_confidences(table(&mut rng)),
                }
            })
            .collect()
    }

    #[test]
    fn adjustment_arithmetic() {
        assert!((adjusted_p_at_k(0.06, 47, 100) - 0.06 / 0.47).abs() < 1e-12);
        assert_eq!(adjusted_p_at_k(0.30, 303, 100), 0.30);
        assert_eq!(adjusted_p_at_k(0.47, 47, 100), 1.0);
        assert_eq!(adjusted_p_at_k(1.0, 100, 100), 1.0);
    }

    #[test]
    fn ratio_parsing_and_counts() {
        assert_eq!("1:100".parse::<Ratio>().unwrap(), Ratio::new(1, 100));
        assert_eq!("1:1,000".parse::<Ratio>().unwrap(), Ratio::new(1, 1000));
        assert_eq!("1:10_000".parse::<Ratio>().unwrap(), Ratio::new(1, 10000));
        assert!("1/100".parse::<Ratio>().is_err());
        assert!("0:100".parse::<Ratio>().is_err());
        assert_eq!(Ratio::new(1, 10000).to_string(), "1:10,000");
        assert_eq!(Ratio::new(1, 100).malicious_count(479_996), 4799);
        assert_eq!(Ratio::new(1, 1000).malicious_count(479_996), 479);
        assert_eq!(Ratio::new(1, 10000).malicious_count(479_996), 47);
        assert_eq!(Ratio::new(1, 100).malicious_count(99), 0);
    }

    #[test]
    fn metric_names() {
        for m in [Metric::Cd, Metric::Otcd, Metric::Cdz, Metric::Otcdz, Metric::Oracle, Metric::Constant] {
            assert_eq!(m.as_str().parse::<Metric>().unwrap(), m);
        }
        assert!("npc".parse::<Metric>().is_err());
    }

    #[test]
    fn top_k_tie_break_is_pair_id() {
        let d = |id: &str, cd: f64| VersionPairDelta {
            pair_id: id.into(),
            npc1: 0.5,
            npc2: 0.5 - cd,
            cd,
            otcd: cd,
            cdz: None,
            otcdz: None,
            label: Label::Benign,
        };
        let deltas = [d("c", 0.1), d("a", 0.1), d("b", 0.3), d("d", -0.2)];
        assert_eq!(top_k(&deltas, Metric::Cd, 3), [2, 1, 0]);
        assert_eq!(top_k(&deltas, Metric::Constant, 2), [1, 2]);
        assert_eq!(top_k(&deltas, Metric::Cd, 10), [2, 1, 0, 3]);
    }

    #[test]
    fn oracle_is_perfect_and_labels_add_up() {
        let pairs = synthetic_pairs(400, 1);
        let corpus = builtin_snippets();
        let mock = MockBackend::new(3);
        let config = EvaluationConfig {
            ratio: Ratio::new(1, 100),
            trials: 5,
            metrics: vec![Metric::Oracle, Metric::Constant, Metric::Cd, Metric::Cdz],
            k: 10,
            ..Default::default()
        };
        let sc = ScoringConfig::default();
        let exp = Experiment::new(&pairs, &corpus, &mock, &sc, &config).unwrap();
        assert_eq!(exp.n_malicious(), 4);
        for t in 0..5 {
            let o = exp.run_trial(t).unwrap();
            assert_eq!(o.metrics[0].adjusted, 1.0);
            assert_eq!(o.metrics[0].raw, 0.4);
            for m in &o.metrics {
                assert!(m.adjusted >= m.raw && m.adjusted <= 1.0);
            }
        }
    }

    #[test]
    fn evaluation_is_reproducible() {
        let pairs = synthetic_pairs(300, 2);
        let corpus = builtin_snippets();
        let mock = MockBackend::new(0);
        let config = EvaluationConfig { trials: 8, k: 20, master_seed: 7, ..Default::default() };
        let a = evaluate(&pairs, &corpus, &mock, &ScoringConfig::default(), &config).unwrap();
        let b = evaluate(&pairs, &corpus, &mock, &ScoringConfig::default(), &config).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let other = EvaluationConfig { master_seed: 8, ..config.clone() };
        let c = evaluate(&pairs, &corpus, &mock, &ScoringConfig::default(), &other).unwrap();
        assert_ne!(a.metrics, c.metrics);
    }

    #[test]
    fn high_cohesion_filter_shrinks_candidates() {
        let pairs = synthetic_pairs(500, 3);
        let corpus = builtin_snippets();
        let mock = MockBackend::new(0);
        let config = EvaluationConfig { high_cohesion_only: true, trials: 1, ..Default::default() };
        let sc = ScoringConfig::default();
        let exp = Experiment::new(&pairs, &corpus, &mock, &sc, &config).unwrap();
        let expected = pairs.iter().filter(|p| p.s1.npc > 0.5).count();
        assert_eq!(exp.candidate_count(), expected);
        assert_eq!(exp.n_malicious(), expected / 100);
    }

    #[test]
    fn degenerate_configs_are_errors() {
        let pairs = synthetic_pairs(50, 4);
        let corpus = builtin_snippets();
        let mock = MockBackend::new(0);
        let sc = ScoringConfig::default();
        let too_rare = EvaluationConfig { ratio: Ratio::new(1, 100), ..Default::default() };
        assert!(matches!(Experiment::new(&pairs, &corpus, &mock, &sc, &too_rare), Err(EvalError::NoMalicious { .. })));
        let all = EvaluationConfig { ratio: Ratio::new(1, 1), ..Default::default() };
        assert!(matches!(Experiment::new(&pairs, &corpus, &mock, &sc, &all), Err(EvalError::NoBenign { .. })));
        let zero = EvaluationConfig { trials: 0, ratio: Ratio::new(1, 10), ..Default::default() };
        assert!(matches!(Experiment::new(&pairs, &corpus, &mock, &sc, &zero), Err(EvalError::Config(_))));
        let ok = EvaluationConfig { ratio: Ratio::new(1, 10), ..Default::default() };
        assert!(Experiment::new(&pairs, &corpus, &mock, &sc, &ok).is_ok());
        assert!(matches!(Experiment::new(&pairs, &[], &mock, &sc, &ok), Err(EvalError::Injector(_))));
    }

    #[test]
    fn uninjectable_pairs_are_replaced() {
        let mut pairs = synthetic_pairs(100, 5);
        // a body that rejects every insertion point: a call spanning all lines
        let bad = "void bad() {\n    call(a,\n         b);\n}";
        let v1 = cpp::extract_functions(bad, "b.cpp").unwrap().remove(0);
        for p in pairs.iter_mut().take(50) {
            p.v1 = v1.clone();
        }
        let corpus = builtin_snippets();
        let mock = MockBackend::new(0);
        let config = EvaluationConfig { ratio: Ratio::new(1, 10), trials: 3, metrics: vec![Metric::Oracle], k: 10, ..Default::default() };
        let r = evaluate(&pairs, &corpus, &mock, &ScoringConfig::default(), &config).unwrap();
        assert!(r.replaced_pairs == 0 || r.injection_failures > 0);
        assert_eq!(r.metrics[0].mean_adjusted, 1.0);
    }
}
