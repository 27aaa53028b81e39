//! Scan scoring, principle gap analysis and scan-to-scan deltas.
//!
//! A dimension score is the mean answer weight of the answered questions
//! tagged to that dimension, scaled to 0..100. Unanswered questions only
//! lower coverage. A dimension with no answered question has no score at
//! all, which is not the same as a score of zero.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::{AskedQuestion, ScanRecord};
use crate::question_bank::BankRef;
use crate::taxonomy::{Answer, Fundamental, LifecycleStage, Pitfall, Role};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("principle `{0}` maps to no question")]
    UnmappedPrinciple(String),
    #[error("unknown qid `{0}`")]
    UnknownQid(String),
    #[error("principle `{0}` defined twice")]
    DuplicatePrinciple(String),
    #[error("scans are not comparable: {0}")]
    LineageMismatch(String),
    #[error("profile belongs to scan `{profile}`, record is `{record}`")]
    ScanMismatch { profile: String, record: String },
    #[error("invalid answer weights: {0}")]
    InvalidWeights(String),
}

impl ScoringError {
    pub fn code(&self) -> &'static str {
        match self {
            ScoringError::UnmappedPrinciple(_) => "UnmappedPrinciple",
            ScoringError::UnknownQid(_) => "UnknownQid",
            ScoringError::DuplicatePrinciple(_) => "DuplicatePrinciple",
            ScoringError::LineageMismatch(_) => "LineageMismatch",
            ScoringError::ScanMismatch { .. } => "ScanMismatch",
            ScoringError::InvalidWeights(_) => "InvalidWeights",
        }
    }
}

/// Weight of each submitted answer, each in [0, 1] and non-decreasing in
/// No < NotSure < InProgress < Yes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerWeights {
    pub yes: f64,
    pub in_progress: f64,
    pub not_sure: f64,
    pub no: f64,
}

impl Default for AnswerWeights {
    fn default() -> Self {
        AnswerWeights {
            yes: 1.0,
            in_progress: 0.5,
            not_sure: 0.25,
            no: 0.0,
        }
    }
}

impl AnswerWeights {
    pub fn new(yes: f64, in_progress: f64, not_sure: f64, no: f64) -> Result<Self, ScoringError> {
        let w = AnswerWeights {
            yes,
            in_progress,
            not_sure,
            no,
        };
        let ordered = [no, not_sure, in_progress, yes];
        if ordered.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ScoringError::InvalidWeights("weights must lie in [0, 1]".into()));
        }
        if ordered.windows(2).any(|p| p[0] > p[1]) {
            return Err(ScoringError::InvalidWeights(
                "weights must not decrease from No to Yes".into(),
            ));
        }
        Ok(w)
    }

    pub fn weight(&self, answer: Answer) -> Option<f64> {
        match answer {
            Answer::Yes => Some(self.yes),
            Answer::InProgress => Some(self.in_progress),
            Answer::NotSure => Some(self.not_sure),
            Answer::No => Some(self.no),
            Answer::Unanswered => None,
        }
    }
}

/// One slice a scan is scored along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Fundamental(Fundamental),
    Pitfall(Pitfall),
    Role(Role),
    Stage(LifecycleStage),
}

impl Dimension {
    /// All 20 dimensions: fundamentals, pitfalls, roles, stages.
    pub fn all() -> Vec<Dimension> {
        Fundamental::ALL
            .iter()
            .map(|&f| Dimension::Fundamental(f))
            .chain(Pitfall::ALL.iter().map(|&p| Dimension::Pitfall(p)))
            .chain(Role::ALL.iter().map(|&r| Dimension::Role(r)))
            .chain(LifecycleStage::ALL.iter().map(|&s| Dimension::Stage(s)))
            .collect()
    }

    pub fn contains(self, q: &AskedQuestion) -> bool {
        match self {
            Dimension::Fundamental(f) => q.fundamental == f,
            Dimension::Pitfall(p) => q.pitfall == p,
            Dimension::Role(r) => q.role == r,
            Dimension::Stage(s) => q.stage == s,
        }
    }

    pub fn group(self) -> &'static str {
        match self {
            Dimension::Fundamental(_) => "fundamental",
            Dimension::Pitfall(_) => "pitfall",
            Dimension::Role(_) => "role",
            Dimension::Stage(_) => "stage",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Fundamental(v) => v.as_str(),
            Dimension::Pitfall(v) => v.as_str(),
            Dimension::Role(v) => v.as_str(),
            Dimension::Stage(v) => v.as_str(),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.group(), self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    /// 0..100, absent when nothing in the dimension was answered.
    pub score: Option<f64>,
    /// answered / askable, 0 when nothing is askable.
    pub coverage: f64,
    pub answered: usize,
    pub askable: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    weight_sum: f64,
    answered: usize,
    askable: usize,
}

impl Tally {
    fn add(&mut self, weight: Option<f64>) {
        self.askable += 1;
        if let Some(w) = weight {
            self.weight_sum += w;
            self.answered += 1;
        }
    }

    fn finish(self) -> DimensionScore {
        DimensionScore {
            score: (self.answered > 0).then(|| 100.0 * self.weight_sum / self.answered as f64),
            coverage: if self.askable == 0 {
                0.0
            } else {
                self.answered as f64 / self.askable as f64
            },
            answered: self.answered,
            askable: self.askable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlaggedQuestion {
    pub qid: String,
    pub role: Role,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanProfile {
    pub scan_id: String,
    pub uc_id: String,
    pub bank_ref: BankRef,
    pub closed_at: Timestamp,
    pub weights: AnswerWeights,
    pub overall: DimensionScore,
    pub by_fundamental: BTreeMap<Fundamental, DimensionScore>,
    pub by_pitfall: BTreeMap<Pitfall, DimensionScore>,
    pub by_role: BTreeMap<Role, DimensionScore>,
    pub by_stage: BTreeMap<LifecycleStage, DimensionScore>,
    /// Every question answered No or NotSure, in bank order.
    pub flagged_questions: Vec<FlaggedQuestion>,
}

impl ScanProfile {
    pub fn get(&self, dim: Dimension) -> &DimensionScore {
        match dim {
            Dimension::Fundamental(f) => &self.by_fundamental[&f],
            Dimension::Pitfall(p) => &self.by_pitfall[&p],
            Dimension::Role(r) => &self.by_role[&r],
            Dimension::Stage(s) => &self.by_stage[&s],
        }
    }

    pub fn score(&self, dim: Dimension) -> Option<f64> {
        self.get(dim).score
    }

    /// Pitfalls ordered from weakest (lowest score) to strongest. Pitfalls
    /// without a score sort last.
    pub fn pitfall_exposure(&self) -> Vec<Pitfall> {
        let mut ps: Vec<Pitfall> = Pitfall::ALL.to_vec();
        ps.sort_by(|a, b| {
            let sa = self.by_pitfall[a].score.unwrap_or(f64::INFINITY);
            let sb = self.by_pitfall[b].score.unwrap_or(f64::INFINITY);
            sa.total_cmp(&sb).then(a.cmp(b))
        });
        ps
    }
}

fn tally_questions<'a>(
    questions: impl Iterator<Item = &'a AskedQuestion>,
    answer_of: impl Fn(&str) -> Answer,
    weights: &AnswerWeights,
) -> (Tally, BTreeMap<Dimension, Tally>) {
    let mut overall = Tally::default();
    let mut per: BTreeMap<Dimension, Tally> =
        Dimension::all().into_iter().map(|d| (d, Tally::default())).collect();
    for q in questions {
        let w = weights.weight(answer_of(&q.qid));
        overall.add(w);
        for d in [
            Dimension::Fundamental(q.fundamental),
            Dimension::Pitfall(q.pitfall),
            Dimension::Role(q.role),
            Dimension::Stage(q.stage),
        ] {
            per.get_mut(&d).expect("all dimensions present").add(w);
        }
    }
    (overall, per)
}

/// Score a closed scan with the default answer weights.
pub fn score_scan(record: &ScanRecord) -> ScanProfile {
    score_scan_with(record, &AnswerWeights::default())
}

pub fn score_scan_with(record: &ScanRecord, weights: &AnswerWeights) -> ScanProfile {
    let (overall, per) = tally_questions(record.questions().iter(), |qid| record.answer(qid), weights);
    let mut by_fundamental = BTreeMap::new();
    let mut by_pitfall = BTreeMap::new();
    let mut by_role = BTreeMap::new();
    let mut by_stage = BTreeMap::new();
    for (dim, tally) in per {
        let s = tally.finish();
        match dim {
            Dimension::Fundamental(f) => {
                by_fundamental.insert(f, s);
            }
            Dimension::Pitfall(p) => {
                by_pitfall.insert(p, s);
            }
            Dimension::Role(r) => {
                by_role.insert(r, s);
            }
            Dimension::Stage(st) => {
                by_stage.insert(st, s);
            }
        }
    }
    let flagged_questions = record
        .questions()
        .iter()
        .filter_map(|q| {
            let answer = record.answer(&q.qid);
            answer.is_flagged().then(|| FlaggedQuestion {
                qid: q.qid.clone(),
                role: q.role,
                answer,
            })
        })
        .collect();
    ScanProfile {
        scan_id: record.scan_id().to_string(),
        uc_id: record.uc_id().to_string(),
        bank_ref: record.bank_ref().clone(),
        closed_at: record.closed_at(),
        weights: *weights,
        overall: overall.finish(),
        by_fundamental,
        by_pitfall,
        by_role,
        by_stage,
        flagged_questions,
    }
}

/// Score many records, in parallel when the `parallel` feature is on.
pub fn score_many(records: &[ScanRecord], weights: &AnswerWeights) -> Vec<ScanProfile> {
    crate::par::map_collect(records, |r| score_scan_with(r, weights))
}

// ---------------------------------------------------------------------------
// Gap analysis

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principle {
    pub principle_id: String,
    pub statement: String,
    pub mapped_qids: BTreeSet<String>,
}

/// An organization's stated AI principles, each mapped to scan questions
/// that evidence it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipleMap {
    pub map_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub org_id: Option<String>,
    pub principles: Vec<Principle>,
}

impl PrincipleMap {
    /// Check the map against the questions of a scan.
    pub fn validate(&self, questions: &[AskedQuestion]) -> Result<(), ScoringError> {
        let known: HashSet<&str> = questions.iter().map(|q| q.qid.as_str()).collect();
        let mut ids = HashSet::new();
        for p in &self.principles {
            if !ids.insert(p.principle_id.as_str()) {
                return Err(ScoringError::DuplicatePrinciple(p.principle_id.clone()));
            }
            if p.mapped_qids.is_empty() {
                return Err(ScoringError::UnmappedPrinciple(p.principle_id.clone()));
            }
            if let Some(q) = p.mapped_qids.iter().find(|q| !known.contains(q.as_str())) {
                return Err(ScoringError::UnknownQid(q.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub qid: String,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleGap {
    pub principle_id: String,
    pub statement: String,
    /// 0..100, absent when none of the mapped questions was answered.
    pub attainment: Option<f64>,
    pub gap: Option<f64>,
    pub answered: usize,
    pub evidence: Vec<Evidence>,
}

impl PrincipleGap {
    pub fn has_evidence(&self) -> bool {
        self.attainment.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub scan_id: String,
    pub map_id: String,
    pub principles: Vec<PrincipleGap>,
    /// Mean gap over principles that have evidence.
    pub overall_gap: Option<f64>,
}

pub fn gap_analysis(
    profile: &ScanProfile,
    record: &ScanRecord,
    map: &PrincipleMap,
) -> Result<GapReport, ScoringError> {
    if profile.scan_id != record.scan_id() {
        return Err(ScoringError::ScanMismatch {
            profile: profile.scan_id.clone(),
            record: record.scan_id().to_string(),
        });
    }
    map.validate(record.questions())?;
    let weights = &profile.weights;
    let principles: Vec<PrincipleGap> = map
        .principles
        .iter()
        .map(|p| {
            let evidence: Vec<Evidence> = p
                .mapped_qids
                .iter()
                .map(|qid| Evidence {
                    qid: qid.clone(),
                    answer: record.answer(qid),
                })
                .collect();
            let weights_seen: Vec<f64> =
                evidence.iter().filter_map(|e| weights.weight(e.answer)).collect();
            let attainment = (!weights_seen.is_empty())
                .then(|| 100.0 * weights_seen.iter().sum::<f64>() / weights_seen.len() as f64);
            PrincipleGap {
                principle_id: p.principle_id.clone(),
                statement: p.statement.clone(),
                attainment,
                gap: attainment.map(|a| 100.0 - a),
                answered: weights_seen.len(),
                evidence,
            }
        })
        .collect();
    let gaps: Vec<f64> = principles.iter().filter_map(|p| p.gap).collect();
    Ok(GapReport {
        scan_id: record.scan_id().to_string(),
        map_id: map.map_id.clone(),
        overall_gap: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
        principles,
    })
}

/// Presentation banding of attainment values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBands {
    pub green_min: f64,
    pub amber_min: f64,
}

impl Default for GapBands {
    fn default() -> Self {
        GapBands {
            green_min: 75.0,
            amber_min: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Band {
    Green,
    Amber,
    Red,
}

impl GapBands {
    pub fn band(&self, attainment: f64) -> Band {
        if attainment >= self.green_min {
            Band::Green
        } else if attainment >= self.amber_min {
            Band::Amber
        } else {
            Band::Red
        }
    }
}

// ---------------------------------------------------------------------------
// Scan deltas

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessDelta {
    pub uc_id: String,
    pub before_ref: String,
    pub after_ref: String,
    /// after minus before, per dimension, over questions answered in both
    /// scans. Absent when the dimension has no such question.
    pub delta_by_fundamental: BTreeMap<Fundamental, Option<f64>>,
    pub delta_by_pitfall: BTreeMap<Pitfall, Option<f64>>,
    pub delta_by_role: BTreeMap<Role, Option<f64>>,
    pub delta_by_stage: BTreeMap<LifecycleStage, Option<f64>>,
    pub compared: usize,
    pub improved: Vec<String>,
    pub regressed: Vec<String>,
    /// Questions asked in only one of the two scans.
    pub only_in_before: Vec<String>,
    pub only_in_after: Vec<String>,
    /// Asked in both, answered in exactly one.
    pub answered_in_one_only: Vec<String>,
}

impl EffectivenessDelta {
    pub fn delta(&self, dim: Dimension) -> Option<f64> {
        match dim {
            Dimension::Fundamental(f) => self.delta_by_fundamental[&f],
            Dimension::Pitfall(p) => self.delta_by_pitfall[&p],
            Dimension::Role(r) => self.delta_by_role[&r],
            Dimension::Stage(s) => self.delta_by_stage[&s],
        }
    }
}

pub fn compare_scans(before: &ScanRecord, after: &ScanRecord) -> Result<EffectivenessDelta, ScoringError> {
    compare_scans_with(before, after, &AnswerWeights::default())
}

pub fn compare_scans_with(
    before: &ScanRecord,
    after: &ScanRecord,
    weights: &AnswerWeights,
) -> Result<EffectivenessDelta, ScoringError> {
    if before.bank_ref().bank_id != after.bank_ref().bank_id {
        return Err(ScoringError::LineageMismatch(format!(
            "bank `{}` vs `{}`",
            before.bank_ref().bank_id,
            after.bank_ref().bank_id
        )));
    }
    if before.uc_id() != after.uc_id() {
        return Err(ScoringError::LineageMismatch(format!(
            "use-case `{}` vs `{}`",
            before.uc_id(),
            after.uc_id()
        )));
    }
    let before_q: BTreeSet<&str> = before.questions().iter().map(|q| q.qid.as_str()).collect();
    let after_q: BTreeSet<&str> = after.questions().iter().map(|q| q.qid.as_str()).collect();
    let mut common = BTreeSet::new();
    let mut answered_in_one_only = Vec::new();
    for qid in before_q.intersection(&after_q) {
        match (before.answer(qid).is_answered(), after.answer(qid).is_answered()) {
            (true, true) => {
                common.insert(*qid);
            }
            (false, false) => {}
            _ => answered_in_one_only.push(qid.to_string()),
        }
    }

    let restricted = |r: &ScanRecord| {
        tally_questions(
            r.questions().iter().filter(|q| common.contains(q.qid.as_str())),
            |qid| r.answer(qid),
            weights,
        )
        .1
    };
    let tb = restricted(before);
    let ta = restricted(after);
    let delta = |d: Dimension| match (tb[&d].finish().score, ta[&d].finish().score) {
        (Some(b), Some(a)) => Some(a - b),
        _ => None,
    };

    let mut improved = Vec::new();
    let mut regressed = Vec::new();
    for qid in &common {
        let (b, a) = (before.answer(qid).rank(), after.answer(qid).rank());
        if a > b {
            improved.push(qid.to_string());
        } else if a < b {
            regressed.push(qid.to_string());
        }
    }

    Ok(EffectivenessDelta {
        uc_id: after.uc_id().to_string(),
        before_ref: before.scan_id().to_string(),
        after_ref: after.scan_id().to_string(),
        delta_by_fundamental: Fundamental::ALL
            .iter()
            .map(|&f| (f, delta(Dimension::Fundamental(f))))
            .collect(),
        delta_by_pitfall: Pitfall::ALL.iter().map(|&p| (p, delta(Dimension::Pitfall(p)))).collect(),
        delta_by_role: Role::ALL.iter().map(|&r| (r, delta(Dimension::Role(r)))).collect(),
        delta_by_stage: LifecycleStage::ALL
            .iter()
            .map(|&s| (s, delta(Dimension::Stage(s))))
            .collect(),
        compared: common.len(),
        improved,
        regressed,
        only_in_before: before_q.difference(&after_q).map(|s| s.to_string()).collect(),
        only_in_after: after_q.difference(&before_q).map(|s| s.to_string()).collect(),
        answered_in_one_only,
    })
}
