//! Cohesion change between two versions of a function, and the
//! statistics used to standardize and summarize it.

mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use stats::{histogram, pearson_r, Correlation, StatsError};

use crate::scorer::CohesionScore;

pub const BUCKET_COUNT: usize = 20;
pub const BUCKET_WIDTH: f64 = 0.05;
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Column order of the delta CSV export.
pub const DELTA_CSV_HEADER: [&str; 8] = ["pair_id", "npc1", "npc2", "cd", "otcd", "cdz", "otcdz", "label"];

/// NPC drop from `s1` to `s2`; positive when cohesion fell.
pub fn cd(s1: &CohesionScore, s2: &CohesionScore) -> f64 {
    s1.npc - s2.npc
}

/// NPC of `s1` minus the confidence of `s2` at `s1`'s optimal token count.
/// Never smaller than [`cd`].
pub fn otcd(s1: &CohesionScore, s2: &CohesionScore) -> f64 {
    s1.npc - s2.confidence_at(s1.otc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Injected,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Injected => "injected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionPairDelta {
    pub pair_id: String,
    pub npc1: f64,
    pub npc2: f64,
    pub cd: f64,
    pub otcd: f64,
    pub cdz: Option<f64>,
    pub otcdz: Option<f64>,
    pub label: Label,
}

impl VersionPairDelta {
    pub fn new(pair_id: impl Into<String>, s1: &CohesionScore, s2: &CohesionScore, label: Label) -> Self {
        VersionPairDelta {
            pair_id: pair_id.into(),
            npc1: s1.npc,
            npc2: s2.npc,
            cd: cd(s1, s2),
            otcd: otcd(s1, s2),
            cdz: None,
            otcdz: None,
            label,
        }
    }
}

/// Bucket of a first-version NPC: the largest `k` with `k * 0.05 <= npc`,
/// clamped to `0..20`. Exact at bucket edges such as 0.15.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn bucket_index(npc: f64) -> usize {
    // NaN lands here too
    if !(npc > 0.0) {
        return 0;
    }
    let mut k = ((npc / BUCKET_WIDTH) as usize).min(BUCKET_COUNT - 1);
    if k + 1 < BUCKET_COUNT && (k + 1) as f64 / BUCKET_COUNT as f64 <= npc {
        k += 1;
    }
    while k > 0 && k as f64 / BUCKET_COUNT as f64 > npc {
        k -= 1;
    }
    k
}

/// Mean, population standard deviation (floored at [`SIGMA_FLOOR`]) and
/// sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Moments {
    /// None for an empty sample.
    pub fn of(values: impl Iterator<Item = f64> + Clone) -> Option<Self> {
        let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
        if count == 0 {
            return None;
        }
        let mean = sum / count as f64;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        Some(Moments { mean, std: var.sqrt().max(SIGMA_FLOOR), count })
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMoments {
    pub cd: Moments,
    pub otcd: Moments,
}

impl MetricMoments {
    fn of(deltas: &[&VersionPairDelta]) -> Option<Self> {
        Some(MetricMoments {
            cd: Moments::of(deltas.iter().map(|d| d.cd))?,
            otcd: Moments::of(deltas.iter().map(|d| d.otcd))?,
        })
    }
}

/// Per-bucket moments of cd and otcd; empty buckets fall back to the
/// moments of all deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub buckets: Vec<Option<MetricMoments>>,
    pub global: MetricMoments,
}

impl BucketStats {
    pub fn for_npc(&self, npc1: f64) -> &MetricMoments {
        self.buckets[bucket_index(npc1)].as_ref().unwrap_or(&self.global)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeltaError {
    #[error("cannot fit bucket statistics on zero deltas")]
    NoDeltas,
    #[error("{0}")]
    Csv(String),
}

pub fn fit_bucket_stats(deltas: &[VersionPairDelta]) -> Result<BucketStats, DeltaError> {
    let all: Vec<&VersionPairDelta> = deltas.iter().collect();
    let global = MetricMoments::of(&all).ok_or(DeltaError::NoDeltas)?;
    let mut grouped: Vec<Vec<&VersionPairDelta>> = vec![Vec::new(); BUCKET_COUNT];
    for d in deltas {
        grouped[bucket_index(d.npc1)].push(d);
    }
    Ok(BucketStats { buckets: grouped.iter().map(|g| MetricMoments::of(g)).collect(), global })
}

pub fn standardize(delta: &VersionPairDelta, stats: &BucketStats) -> VersionPairDelta {
    let m = stats.for_npc(delta.npc1);
    VersionPairDelta { cdz: Some(m.cd.z(delta.cd)), otcdz: Some(m.otcd.z(delta.otcd)), ..delta.clone() }
}

/// Writes deltas as CSV with the columns of [`DELTA_CSV_HEADER`]; absent
/// standardized values are empty cells.
pub fn write_deltas_csv<W: Write>(out: W, deltas: &[VersionPairDelta]) -> Result<(), DeltaError> {
    let err = |e: csv::Error| DeltaError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DELTA_CSV_HEADER).map_err(err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for d in deltas {
        w.write_record([
            d.pair_id.clone(),
            d.npc1.to_string(),
            d.npc2.to_string(),
            d.cd.to_string(),
            d.otcd.to_string(),
            opt(d.cdz),
            opt(d.otcdz),
            d.label.as_str().to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| DeltaError::Csv(e.to_string()))
}
