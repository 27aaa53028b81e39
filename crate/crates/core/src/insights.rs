//! Group-level statistics over recorded scans, cohort benchmarking and the
//! question-refinement feedback log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::{SizeBand, UseCasePhase};
use crate::scoring::{Dimension, ScanProfile};
use crate::taxonomy::Pitfall;
use crate::Timestamp;

pub const DEFAULT_TOP_FLAGGED: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InsightsError {
    #[error("subject `{0}` has no closed scan")]
    NoSubjectScan(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid feedback: {0}")]
    InvalidFeedback(String),
}

impl InsightsError {
    pub fn code(&self) -> &'static str {
        match self {
            InsightsError::NoSubjectScan(_) => "NoSubjectScan",
            InsightsError::InvalidArgument(_) => "InvalidArgument",
            InsightsError::InvalidFeedback(_) => "InvalidFeedback",
        }
    }
}

/// A scored scan together with the organization and use-case attributes
/// cohorts are filtered on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanFacts {
    pub org_id: String,
    pub sector: String,
    pub size_band: SizeBand,
    pub lifecycle_phase: UseCasePhase,
    pub profile: ScanProfile,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_band: Option<SizeBand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifecycle_phase: Option<UseCasePhase>,
    /// Inclusive lower bound on the scan's close time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<Timestamp>,
    /// Inclusive upper bound on the scan's close time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<Timestamp>,
}

impl CohortFilter {
    pub fn matches(&self, f: &ScanFacts) -> bool {
        self.sector.as_ref().is_none_or(|s| *s == f.sector)
            && self.size_band.is_none_or(|b| b == f.size_band)
            && self.lifecycle_phase.is_none_or(|p| p == f.lifecycle_phase)
            && self.from.is_none_or(|t| f.profile.closed_at >= t)
            && self.to.is_none_or(|t| f.profile.closed_at <= t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionStats {
    /// Scans with a score in this dimension.
    pub n: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// Population standard deviation.
    pub stddev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCount {
    pub qid: String,
    pub count: usize,
}

/// Statistics over one cohort. `n_scans == 0` is the empty result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub filter: CohortFilter,
    pub n_orgs: usize,
    pub n_scans: usize,
    /// Keyed by `group:name`, e.g. `fundamental:Governance`.
    pub dimensions: BTreeMap<String, DimensionStats>,
    /// Pitfalls by ascending mean score, i.e. most exposed first.
    pub pitfall_exposure: Vec<Pitfall>,
    pub most_flagged: Vec<FlagCount>,
}

impl GroupStats {
    pub fn is_empty(&self) -> bool {
        self.n_scans == 0
    }

    pub fn dimension(&self, dim: Dimension) -> Option<&DimensionStats> {
        self.dimensions.get(&dim.to_string())
    }
}

/// Mean, median and population standard deviation. Values are sorted
/// first so the result never depends on input order.
pub fn describe(values: &[f64]) -> DimensionStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return DimensionStats {
            n,
            mean: None,
            median: None,
            stddev: None,
        };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    DimensionStats {
        n,
        mean: Some(mean),
        median: Some(median),
        stddev: Some(var.sqrt()),
    }
}

fn stats_over(filter: CohortFilter, cohort: &[&ScanFacts], top_k: usize) -> GroupStats {
    let mut cohort: Vec<&ScanFacts> = cohort.to_vec();
    cohort.sort_by(|a, b| a.profile.scan_id.cmp(&b.profile.scan_id));
    let dims = Dimension::all();
    let described = crate::par::map_collect(&dims, |&d| {
        let values: Vec<f64> = cohort.iter().filter_map(|f| f.profile.score(d)).collect();
        (d, describe(&values))
    });
    let mut exposure: Vec<(Pitfall, f64)> = described
        .iter()
        .filter_map(|(d, s)| match d {
            Dimension::Pitfall(p) => Some((*p, s.mean.unwrap_or(f64::INFINITY))),
            _ => None,
        })
        .collect();
    exposure.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut flags: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &cohort {
        for q in &f.profile.flagged_questions {
            *flags.entry(q.qid.as_str()).or_default() += 1;
        }
    }
    let mut most_flagged: Vec<FlagCount> = flags
        .into_iter()
        .map(|(qid, count)| FlagCount {
            qid: qid.to_string(),
            count,
        })
        .collect();
    most_flagged.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.qid.cmp(&b.qid)));
    most_flagged.truncate(top_k);

    GroupStats {
        filter,
        n_orgs: cohort.iter().map(|f| f.org_id.as_str()).collect::<BTreeSet<_>>().len(),
        n_scans: cohort.len(),
        dimensions: described.into_iter().map(|(d, s)| (d.to_string(), s)).collect(),
        pitfall_exposure: if cohort.is_empty() {
            Vec::new()
        } else {
            exposure.into_iter().map(|(p, _)| p).collect()
        },
        most_flagged,
    }
}

/// Statistics over every closed scan matching `filter`.
pub fn aggregate(facts: &[ScanFacts], filter: &CohortFilter, top_k: usize) -> GroupStats {
    let cohort: Vec<&ScanFacts> = facts.iter().filter(|f| filter.matches(f)).collect();
    stats_over(filter.clone(), &cohort, top_k)
}

/// Keep only the most recent scan of each use-case.
pub fn latest_per_use_case(facts: &[ScanFacts]) -> Vec<&ScanFacts> {
    let mut latest: BTreeMap<&str, &ScanFacts> = BTreeMap::new();
    for f in facts {
        let key = f.profile.uc_id.as_str();
        match latest.get(key) {
            Some(cur)
                if (cur.profile.closed_at, cur.profile.scan_id.as_str())
                    >= (f.profile.closed_at, f.profile.scan_id.as_str()) => {}
            _ => {
                latest.insert(key, f);
            }
        }
    }
    latest.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Subject {
    Organization(String),
    UseCase(String),
}

impl Subject {
    fn owns(&self, f: &ScanFacts) -> bool {
        match self {
            Subject::Organization(id) => f.org_id == *id,
            Subject::UseCase(id) => f.profile.uc_id == *id,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            Subject::Organization(id) | Subject::UseCase(id) => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionBenchmark {
    pub subject_score: Option<f64>,
    /// Fraction of cohort scans scoring at or below the subject, absent
    /// when either side has no score.
    pub percentile: Option<f64>,
    pub cohort_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub subject: Subject,
    /// Latest scan per use-case of the subject that the scores come from.
    pub subject_scans: Vec<String>,
    pub cohort: GroupStats,
    pub dimensions: BTreeMap<String, DimensionBenchmark>,
}

impl BenchmarkReport {
    pub fn dimension(&self, dim: Dimension) -> &DimensionBenchmark {
        &self.dimensions[&dim.to_string()]
    }
}

/// Compare a subject against the cohort selected by `filter`, using the
/// latest closed scan of every use-case. The subject's own scans never
/// count toward its cohort. An organization subject is scored by the mean
/// over its use-cases.
pub fn benchmark(facts: &[ScanFacts], subject: &Subject, filter: &CohortFilter) -> Result<BenchmarkReport, InsightsError> {
    let latest = latest_per_use_case(facts);
    let mut own: Vec<&ScanFacts> = latest.iter().copied().filter(|f| subject.owns(f)).collect();
    if own.is_empty() {
        return Err(InsightsError::NoSubjectScan(subject.id().to_string()));
    }
    own.sort_by(|a, b| a.profile.scan_id.cmp(&b.profile.scan_id));
    let cohort: Vec<&ScanFacts> = latest
        .iter()
        .copied()
        .filter(|f| !subject.owns(f) && filter.matches(f))
        .collect();
    let stats = stats_over(filter.clone(), &cohort, DEFAULT_TOP_FLAGGED);

    let dimensions = Dimension::all()
        .into_iter()
        .map(|d| {
            let own_scores: Vec<f64> = own.iter().filter_map(|f| f.profile.score(d)).collect();
            let subject_score =
                (!own_scores.is_empty()).then(|| own_scores.iter().sum::<f64>() / own_scores.len() as f64);
            let cohort_scores: Vec<f64> = cohort.iter().filter_map(|f| f.profile.score(d)).collect();
            let percentile = match subject_score {
                Some(s) if !cohort_scores.is_empty() => {
                    Some(cohort_scores.iter().filter(|&&c| c <= s).count() as f64 / cohort_scores.len() as f64)
                }
                _ => None,
            };
            (
                d.to_string(),
                DimensionBenchmark {
                    subject_score,
                    percentile,
                    cohort_n: cohort_scores.len(),
                },
            )
        })
        .collect();

    Ok(BenchmarkReport {
        subject: subject.clone(),
        subject_scans: own.iter().map(|f| f.profile.scan_id.clone()).collect(),
        cohort: stats,
        dimensions,
    })
}

// ---------------------------------------------------------------------------
// Feedback

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeedbackKind {
    Ambiguous,
    Redundant,
    Missing,
    Misinterpreted,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub fid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qid: Option<String>,
    pub use_case_ref: String,
    pub kind: FeedbackKind,
    pub note: String,
    pub created_at: Timestamp,
}

impl FeedbackEntry {
    pub fn validate(&self) -> Result<(), InsightsError> {
        if self.note.trim().is_empty() {
            return Err(InsightsError::InvalidFeedback("note must not be empty".into()));
        }
        if self.kind == FeedbackKind::Missing && self.qid.is_some() {
            return Err(InsightsError::InvalidFeedback(
                "feedback about a missing question cannot name a qid".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementCandidate {
    pub qid: Option<String>,
    pub kind: FeedbackKind,
    pub count: usize,
    /// Up to three notes, oldest first.
    pub sample_notes: Vec<String>,
}

pub const SAMPLE_NOTES: usize = 3;

/// Group feedback by (qid, kind) and keep groups with at least `min_count`
/// entries, most frequent first. The result is a worklist for a human
/// reviewer; nothing here touches a bank.
pub fn refinement_candidates(log: &[FeedbackEntry], min_count: usize) -> Result<Vec<RefinementCandidate>, InsightsError> {
    if min_count == 0 {
        return Err(InsightsError::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut groups: BTreeMap<(Option<&str>, FeedbackKind), Vec<&FeedbackEntry>> = BTreeMap::new();
    for e in log {
        groups.entry((e.qid.as_deref(), e.kind)).or_default().push(e);
    }
    let mut out: Vec<RefinementCandidate> = groups
        .into_iter()
        .filter(|(_, entries)| entries.len() >= min_count)
        .map(|((qid, kind), mut entries)| {
            entries.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.fid.cmp(&b.fid)));
            RefinementCandidate {
                qid: qid.map(str::to_string),
                kind,
                count: entries.len(),
                sample_notes: entries.iter().take(SAMPLE_NOTES).map(|e| e.note.clone()).collect(),
            }
        })
        .collect();
    // stable sort keeps the (qid, kind) order among equal counts
    out.sort_by_key(|c| std::cmp::Reverse(c.count));
    Ok(out)
}
