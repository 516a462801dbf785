//! Corpus-level summaries: NPC distribution, cohesion by function size,
//! correlations, confidence curves grouped by OTC, and the effect of
//! injection per position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cpp::{self, ExtractedFunction};
use crate::delta::{cd, histogram, otcd, pearson_r, VersionPairDelta};
use crate::evaluator::HIGH_COHESION;
use crate::injector::{self, MaliciousSnippet, Position};
use crate::miner::FunctionHistoryStore;
use crate::scorer::{self, CohesionScore, ScoreTable, ScoringConfig, TokenProbabilityBackend, MAX_MASKS};

/// Width of the function-size buckets, in body lines.
pub const SIZE_BUCKET_LINES: usize = 5;

/// A scored version with its body size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizedScore {
    pub lines: usize,
    pub score: CohesionScore,
}

/// Every successfully scored version of `store`, in store order.
pub fn sized_scores(store: &FunctionHistoryStore, scores: &ScoreTable) -> Vec<SizedScore> {
    store
        .versions()
        .filter_map(|(idx, v)| {
            let score = scores.score(&v.identity.key(), idx)?;
            Some(SizedScore { lines: v.body_line_count, score })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

pub fn npc_histogram(scores: &[SizedScore], width: f64) -> Vec<HistogramRow> {
    let npcs: Vec<f64> = scores.iter().map(|s| s.score.npc).collect();
    let mut rows: Vec<HistogramRow> = histogram(&npcs, width, 0.0, 1.0)
        .into_iter()
        .map(|(lo, count)| HistogramRow { bin_lo: lo, bin_hi: (lo + width).min(1.0), count })
        .collect();
    // NPC = 1.0 belongs to the last bin
    if let Some(last) = rows.last_mut() {
        last.count += npcs.iter().filter(|&&n| n == 1.0).count();
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeBucketRow {
    pub lines_lo: usize,
    pub lines_hi: usize,
    pub count: usize,
    pub mean_npc: f64,
    pub std_npc: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// NPC mean and population σ per five-line size interval; empty intervals
/// are omitted.
pub fn size_buckets(scores: &[SizedScore]) -> Vec<SizeBucketRow> {
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for s in scores {
        groups.entry(s.lines / SIZE_BUCKET_LINES).or_default().push(s.score.npc);
    }
    groups
        .into_iter()
        .map(|(b, npcs)| {
            let (mean_npc, std_npc) = mean_std(&npcs);
            SizeBucketRow {
                lines_lo: b * SIZE_BUCKET_LINES,
                lines_hi: (b + 1) * SIZE_BUCKET_LINES - 1,
                count: npcs.len(),
                mean_npc,
                std_npc,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub x: &'static str,
    pub y: &'static str,
    pub n: usize,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    /// Why r is absent, for degenerate columns.
    pub error: Option<String>,
}

fn correlation_row(x: &'static str, y: &'static str, xs: &[f64], ys: &[f64]) -> CorrelationRow {
    match pearson_r(xs, ys) {
        Ok(c) => CorrelationRow { x, y, n: c.n, r: Some(c.r), p_value: Some(c.p_value), error: None },
        Err(e) => CorrelationRow { x, y, n: xs.len(), r: None, p_value: None, error: Some(e.to_string()) },
    }
}

/// NPC of the first version against CD and OTCD of benign pairs, and
/// function size against NPC.
pub fn correlations(deltas: &[VersionPairDelta], scores: &[SizedScore]) -> Vec<CorrelationRow> {
    let npc1: Vec<f64> = deltas.iter().map(|d| d.npc1).collect();
    let cds: Vec<f64> = deltas.iter().map(|d| d.cd).collect();
    let otcds: Vec<f64> = deltas.iter().map(|d| d.otcd).collect();
    let lines: Vec<f64> = scores.iter().map(|s| s.lines as f64).collect();
    let npcs: Vec<f64> = scores.iter().map(|s| s.score.npc).collect();
    vec![
        correlation_row("npc1", "cd", &npc1, &cds),
        correlation_row("npc1", "otcd", &npc1, &otcds),
        correlation_row("lines", "npc", &lines, &npcs),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OtcCurveRow {
    pub otc: u8,
    pub n: u8,
    pub count: usize,
    pub mean: f64,
    pub p25: f64,
    pub p75: f64,
}

/// Linear-interpolated quantile of sorted values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Confidence at every mask count, for functions grouped by their OTC.
pub fn otc_curves(scores: &[CohesionScore]) -> Vec<OtcCurveRow> {
    let mut rows = Vec::new();
    for otc in 1..=MAX_MASKS as u8 {
        let group: Vec<&CohesionScore> = scores.iter().filter(|s| s.otc == otc).collect();
        if group.is_empty() {
            continue;
        }
        for n in 1..=MAX_MASKS as u8 {
            let mut values: Vec<f64> = group.iter().map(|s| s.confidence_at(n)).collect();
            values.sort_by(f64::total_cmp);
            rows.push(OtcCurveRow {
                otc,
                n,
                count: values.len(),
                mean: values.iter().sum::<f64>() / values.len() as f64,
                p25: quantile(&values, 0.25),
                p75: quantile(&values, 0.75),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpactRow {
    pub subset: &'static str,
    /// An injection position, or `baseline` for benign consecutive pairs.
    pub position: &'static str,
    pub n: usize,
    /// Absent when the group is empty.
    pub cd_mean: Option<f64>,
    pub cd_std: Option<f64>,
    pub otcd_mean: Option<f64>,
    pub otcd_std: Option<f64>,
}

/// Injects one seeded random snippet per position into each function and
/// compares the CD/OTCD of original → injected against benign pairs. Both
/// the full set and the high-cohesion subset are reported.
pub fn injection_impact(
    functions: &[(ExtractedFunction, CohesionScore)],
    baseline: &[VersionPairDelta],
    corpus: &[MaliciousSnippet],
    backend: &dyn TokenProbabilityBackend,
    scoring: &ScoringConfig,
    seed: u64,
) -> Vec<ImpactRow> {
    // (npc1, position, cd, otcd)
    let measured: Vec<(f64, Position, f64, f64)> = functions
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, (f, s1))| {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::evaluator::trial_seed(seed, i as u64));
            let picks: Vec<usize> = Position::ALL.iter().map(|_| rng.random_range(0..corpus.len().max(1))).collect();
            Position::ALL
                .into_iter()
                .zip(picks)
                .filter_map(|(p, snip)| {
                    let injected = injector::inject(f, corpus.get(snip)?, p).ok()?;
                    let g = cpp::extract_functions(&injected.full_text, "<injected>").ok()?.into_iter().next()?;
                    let s2 = scorer::score(&g, backend, scoring).ok()?;
                    Some((s1.npc, p, cd(s1, &s2), otcd(s1, &s2)))
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut rows = Vec::new();
    for (subset, threshold) in [("all", f64::NEG_INFINITY), ("high-cohesion", HIGH_COHESION)] {
        for p in Position::ALL {
            let sel: Vec<_> = measured.iter().filter(|m| m.1 == p && m.0 > threshold).collect();
            rows.push(impact_row(subset, p.as_str(), sel.iter().map(|m| (m.2, m.3))));
        }
        let base = baseline.iter().filter(|d| d.npc1 > threshold).map(|d| (d.cd, d.otcd));
        rows.push(impact_row(subset, "baseline", base));
    }
    rows
}

fn impact_row(subset: &'static str, position: &'static str, values: impl Iterator<Item = (f64, f64)>) -> ImpactRow {
    let (cds, otcds): (Vec<f64>, Vec<f64>) = values.unzip();
    let cd = (!cds.is_empty()).then(|| mean_std(&cds));
    let otcd = (!otcds.is_empty()).then(|| mean_std(&otcds));
    ImpactRow {
        subset,
        position,
        n: cds.len(),
        cd_mean: cd.map(|m| m.0),
        cd_std: cd.map(|m| m.1),
        otcd_mean: otcd.map(|m| m.0),
        otcd_std: otcd.map(|m| m.1),
    }
}

/// Serializes rows as CSV with a header taken from the field names.
pub fn write_csv<W: std::io::Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
