//! Per-use-case risk register: scenarios, heatmap prioritization,
//! mitigations, stakeholder engagement and the review summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::{ScanRecord, UseCase, UseCasePhase};
use crate::question_bank::BankRef;
use crate::scoring::{compare_scans, score_scan, EffectivenessDelta, ScanProfile};
use crate::taxonomy::{Fundamental, Pitfall, Risk};
use crate::Timestamp;

pub const DEFAULT_PRIORITY_THRESHOLD: u8 = 10;
pub const SCALE_MAX: u8 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegisterError {
    #[error("use-case `{0}` has no closed scan")]
    NoScanEvidence(String),
    #[error("invalid tag: {0}")]
    InvalidTag(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("scenario `{0}` has not been prioritized")]
    ScenarioNotPrioritized(String),
    #[error("unknown reference `{0}`")]
    UnknownReference(String),
    #[error("`{0}` already exists")]
    DuplicateId(String),
    #[error("scenario `{sid}` cannot move from {from} to {to}")]
    InvalidTransition {
        sid: String,
        from: ScenarioStatus,
        to: ScenarioStatus,
    },
    #[error("scenario `{0}` still has mitigations that are not done")]
    OpenMitigations(String),
    #[error("threshold {0} outside 1..=25")]
    InvalidThreshold(u8),
    #[error("invalid field: {0}")]
    InvalidField(String),
}

impl RegisterError {
    pub fn code(&self) -> &'static str {
        match self {
            RegisterError::NoScanEvidence(_) => "NoScanEvidence",
            RegisterError::InvalidTag(_) => "InvalidTag",
            RegisterError::UnknownScenario(_) => "UnknownScenario",
            RegisterError::ScenarioNotPrioritized(_) => "ScenarioNotPrioritized",
            RegisterError::UnknownReference(_) => "UnknownReference",
            RegisterError::DuplicateId(_) => "DuplicateId",
            RegisterError::InvalidTransition { .. } => "InvalidTransition",
            RegisterError::OpenMitigations(_) => "OpenMitigations",
            RegisterError::InvalidThreshold(_) => "InvalidThreshold",
            RegisterError::InvalidField(_) => "InvalidField",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioStatus {
    Identified,
    Prioritized,
    Mitigating,
    Closed,
}

impl fmt::Display for ScenarioStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskScenario {
    pub sid: String,
    pub uc_id: String,
    pub title: String,
    #[serde(default)]
    pub narrative: String,
    pub fundamental: Fundamental,
    pub pitfall: Pitfall,
    pub risks: BTreeSet<Risk>,
    pub likelihood: u8,
    pub severity: u8,
    #[serde(default = "identified")]
    pub status: ScenarioStatus,
    #[serde(default)]
    pub source_questions: BTreeSet<String>,
}

fn identified() -> ScenarioStatus {
    ScenarioStatus::Identified
}

impl RiskScenario {
    pub fn priority(&self) -> u8 {
        self.likelihood * self.severity
    }

    fn check(&self) -> Result<(), RegisterError> {
        if self.sid.trim().is_empty() {
            return Err(RegisterError::InvalidField("sid must not be empty".into()));
        }
        if self.risks.is_empty() {
            return Err(RegisterError::InvalidTag(format!(
                "scenario `{}` must name at least one risk",
                self.sid
            )));
        }
        check_scale("likelihood", self.likelihood)?;
        check_scale("severity", self.severity)
    }
}

fn check_scale(field: &str, v: u8) -> Result<(), RegisterError> {
    if (1..=SCALE_MAX).contains(&v) {
        Ok(())
    } else {
        Err(RegisterError::InvalidField(format!("{field} {v} outside 1..=5")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MitigationKind {
    Technical,
    NonTechnical,
}

/// Whether the measure is taken inside the project or needs the line
/// organization to change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MitigationScope {
    UseCase,
    Organization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MitigationStatus {
    Planned,
    InProgress,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationMeasure {
    pub mid: String,
    pub sid: String,
    pub description: String,
    pub kind: MitigationKind,
    pub scope: MitigationScope,
    #[serde(default)]
    pub owner: String,
    pub fundamental: Fundamental,
    pub pitfall: Pitfall,
    pub risks: BTreeSet<Risk>,
    pub status: MitigationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due: Option<NaiveDate>,
    /// Engagement records that led to changes in this measure.
    #[serde(default)]
    pub feedback: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementRecord {
    pub eid: String,
    pub uc_id: String,
    pub stakeholder: String,
    #[serde(default)]
    pub channel: String,
    #[serde(default)]
    pub concerns: Vec<String>,
    /// mid or sid references.
    #[serde(default)]
    pub resulting_changes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatCell {
    pub likelihood: u8,
    pub severity: u8,
    pub sids: Vec<String>,
}

/// 5×5 likelihood × severity grid. Cells are stored likelihood-major, so
/// index `(l - 1) * 5 + (s - 1)` holds cell `(l, s)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub cells: Vec<HeatCell>,
}

impl HeatmapGrid {
    fn empty() -> Self {
        let mut cells = Vec::with_capacity(25);
        for likelihood in 1..=SCALE_MAX {
            for severity in 1..=SCALE_MAX {
                cells.push(HeatCell {
                    likelihood,
                    severity,
                    sids: Vec::new(),
                });
            }
        }
        HeatmapGrid { cells }
    }

    /// Scenario ids in cell `(likelihood, severity)`, both 1-based.
    pub fn cell(&self, likelihood: u8, severity: u8) -> &[String] {
        assert!((1..=SCALE_MAX).contains(&likelihood) && (1..=SCALE_MAX).contains(&severity));
        &self.cells[usize::from(likelihood - 1) * 5 + usize::from(severity - 1)].sids
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.sids.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Register {
    pub uc_id: String,
    scenarios: BTreeMap<String, RiskScenario>,
    mitigations: BTreeMap<String, MitigationMeasure>,
    engagements: BTreeMap<String, EngagementRecord>,
}

impl Register {
    pub fn new(uc_id: impl Into<String>) -> Self {
        Register {
            uc_id: uc_id.into(),
            ..Default::default()
        }
    }

    pub fn scenarios(&self) -> impl Iterator<Item = &RiskScenario> {
        self.scenarios.values()
    }

    pub fn scenario(&self, sid: &str) -> Option<&RiskScenario> {
        self.scenarios.get(sid)
    }

    pub fn mitigations(&self) -> impl Iterator<Item = &MitigationMeasure> {
        self.mitigations.values()
    }

    pub fn mitigation(&self, mid: &str) -> Option<&MitigationMeasure> {
        self.mitigations.get(mid)
    }

    pub fn mitigations_for<'a>(&'a self, sid: &'a str) -> impl Iterator<Item = &'a MitigationMeasure> {
        self.mitigations.values().filter(move |m| m.sid == sid)
    }

    pub fn engagements(&self) -> impl Iterator<Item = &EngagementRecord> {
        self.engagements.values()
    }

    fn id_taken(&self, id: &str) -> bool {
        self.scenarios.contains_key(id) || self.mitigations.contains_key(id) || self.engagements.contains_key(id)
    }

    /// Store a new scenario with status Identified. `scans` are the closed
    /// scans known for this register's use-case; at least one is required
    /// and every source question must have been asked in one of them.
    pub fn add_scenario(&mut self, mut s: RiskScenario, scans: &[ScanRecord]) -> Result<&RiskScenario, RegisterError> {
        if s.uc_id != self.uc_id {
            return Err(RegisterError::InvalidField(format!(
                "scenario belongs to `{}`, register is `{}`",
                s.uc_id, self.uc_id
            )));
        }
        s.check()?;
        let evidence: Vec<&ScanRecord> = scans.iter().filter(|r| r.uc_id() == self.uc_id).collect();
        if evidence.is_empty() {
            return Err(RegisterError::NoScanEvidence(self.uc_id.clone()));
        }
        if let Some(q) = s
            .source_questions
            .iter()
            .find(|q| !evidence.iter().any(|r| r.questions().iter().any(|aq| &&aq.qid == q)))
        {
            return Err(RegisterError::UnknownReference(q.clone()));
        }
        if self.id_taken(&s.sid) {
            return Err(RegisterError::DuplicateId(s.sid));
        }
        s.status = ScenarioStatus::Identified;
        let sid = s.sid.clone();
        Ok(self.scenarios.entry(sid).or_insert(s))
    }

    /// Scenarios whose likelihood × severity reaches `threshold`, highest
    /// first, ties by severity then sid. Identified scenarios in the result
    /// become Prioritized; later statuses are left alone, so calling this
    /// again changes nothing.
    pub fn prioritize(&mut self, threshold: u8) -> Result<Vec<RiskScenario>, RegisterError> {
        if !(1..=25).contains(&threshold) {
            return Err(RegisterError::InvalidThreshold(threshold));
        }
        let mut out = Vec::new();
        for s in self.scenarios.values_mut() {
            if s.priority() >= threshold {
                if s.status == ScenarioStatus::Identified {
                    s.status = ScenarioStatus::Prioritized;
                }
                out.push(s.clone());
            }
        }
        sort_by_priority(&mut out);
        Ok(out)
    }

    pub fn heatmap(&self) -> HeatmapGrid {
        let mut grid = HeatmapGrid::empty();
        // BTreeMap iteration keeps sids ascending inside each cell
        for s in self.scenarios.values() {
            let idx = usize::from(s.likelihood - 1) * 5 + usize::from(s.severity - 1);
            grid.cells[idx].sids.push(s.sid.clone());
        }
        grid
    }

    /// Move a scenario to another heatmap cell.
    pub fn reassess(&mut self, sid: &str, likelihood: u8, severity: u8) -> Result<&RiskScenario, RegisterError> {
        check_scale("likelihood", likelihood)?;
        check_scale("severity", severity)?;
        let s = self
            .scenarios
            .get_mut(sid)
            .ok_or_else(|| RegisterError::UnknownScenario(sid.to_string()))?;
        if s.status == ScenarioStatus::Closed {
            return Err(RegisterError::InvalidTransition {
                sid: sid.to_string(),
                from: ScenarioStatus::Closed,
                to: ScenarioStatus::Closed,
            });
        }
        s.likelihood = likelihood;
        s.severity = severity;
        Ok(s)
    }

    pub fn add_mitigation(&mut self, m: MitigationMeasure) -> Result<&MitigationMeasure, RegisterError> {
        let scenario = self
            .scenarios
            .get(&m.sid)
            .ok_or_else(|| RegisterError::UnknownScenario(m.sid.clone()))?;
        match scenario.status {
            ScenarioStatus::Prioritized | ScenarioStatus::Mitigating => {}
            ScenarioStatus::Identified => return Err(RegisterError::ScenarioNotPrioritized(m.sid.clone())),
            ScenarioStatus::Closed => {
                return Err(RegisterError::InvalidTransition {
                    sid: m.sid.clone(),
                    from: ScenarioStatus::Closed,
                    to: ScenarioStatus::Mitigating,
                })
            }
        }
        if m.mid.trim().is_empty() {
            return Err(RegisterError::InvalidField("mid must not be empty".into()));
        }
        if m.description.trim().is_empty() {
            return Err(RegisterError::InvalidField("description must not be empty".into()));
        }
        if m.risks.is_empty() {
            return Err(RegisterError::InvalidTag(format!("mitigation `{}` must name at least one risk", m.mid)));
        }
        if m.risks.is_disjoint(&scenario.risks) {
            return Err(RegisterError::InvalidTag(format!(
                "mitigation `{}` shares no risk with scenario `{}`",
                m.mid, m.sid
            )));
        }
        if m.status != MitigationStatus::Planned && m.owner.trim().is_empty() {
            return Err(RegisterError::InvalidField(format!(
                "mitigation `{}` needs an owner once it is under way",
                m.mid
            )));
        }
        if self.id_taken(&m.mid) {
            return Err(RegisterError::DuplicateId(m.mid));
        }
        self.scenarios.get_mut(&m.sid).expect("checked above").status = ScenarioStatus::Mitigating;
        let mid = m.mid.clone();
        Ok(self.mitigations.entry(mid).or_insert(m))
    }

    pub fn set_mitigation_status(
        &mut self,
        mid: &str,
        status: MitigationStatus,
        owner: Option<&str>,
    ) -> Result<&MitigationMeasure, RegisterError> {
        let m = self
            .mitigations
            .get_mut(mid)
            .ok_or_else(|| RegisterError::UnknownReference(mid.to_string()))?;
        let owner = owner.map(str::trim).filter(|o| !o.is_empty());
        if status != MitigationStatus::Planned && owner.is_none() && m.owner.trim().is_empty() {
            return Err(RegisterError::InvalidField(format!(
                "mitigation `{mid}` needs an owner once it is under way"
            )));
        }
        if let Some(o) = owner {
            m.owner = o.to_string();
        }
        m.status = status;
        Ok(m)
    }

    pub fn record_engagement(&mut self, e: EngagementRecord) -> Result<&EngagementRecord, RegisterError> {
        if e.uc_id != self.uc_id {
            return Err(RegisterError::UnknownReference(e.uc_id));
        }
        if e.stakeholder.trim().is_empty() {
            return Err(RegisterError::InvalidField("stakeholder must not be empty".into()));
        }
        if e.eid.trim().is_empty() {
            return Err(RegisterError::InvalidField("eid must not be empty".into()));
        }
        if let Some(r) = e
            .resulting_changes
            .iter()
            .find(|r| !self.mitigations.contains_key(*r) && !self.scenarios.contains_key(*r))
        {
            return Err(RegisterError::UnknownReference(r.clone()));
        }
        if self.id_taken(&e.eid) {
            return Err(RegisterError::DuplicateId(e.eid));
        }
        for r in &e.resulting_changes {
            if let Some(m) = self.mitigations.get_mut(r) {
                if !m.feedback.contains(&e.eid) {
                    m.feedback.push(e.eid.clone());
                }
            }
        }
        let eid = e.eid.clone();
        Ok(self.engagements.entry(eid).or_insert(e))
    }

    /// Close a scenario once every one of its mitigations is Done.
    pub fn close_scenario(&mut self, sid: &str) -> Result<&RiskScenario, RegisterError> {
        let status = self
            .scenarios
            .get(sid)
            .ok_or_else(|| RegisterError::UnknownScenario(sid.to_string()))?
            .status;
        if status != ScenarioStatus::Mitigating {
            return Err(RegisterError::InvalidTransition {
                sid: sid.to_string(),
                from: status,
                to: ScenarioStatus::Closed,
            });
        }
        if self.mitigations_for(sid).any(|m| m.status != MitigationStatus::Done) {
            return Err(RegisterError::OpenMitigations(sid.to_string()));
        }
        let s = self.scenarios.get_mut(sid).expect("checked above");
        s.status = ScenarioStatus::Closed;
        Ok(s)
    }

    pub fn status_counts(&self) -> ScenarioCounts {
        let mut c = ScenarioCounts::default();
        for s in self.scenarios.values() {
            match s.status {
                ScenarioStatus::Identified => c.identified += 1,
                ScenarioStatus::Prioritized => c.prioritized += 1,
                ScenarioStatus::Mitigating => c.mitigating += 1,
                ScenarioStatus::Closed => c.closed += 1,
            }
        }
        c.open = c.identified + c.prioritized + c.mitigating;
        c
    }
}

pub fn sort_by_priority(list: &mut [RiskScenario]) {
    list.sort_by(|a, b| {
        b.priority()
            .cmp(&a.priority())
            .then(b.severity.cmp(&a.severity))
            .then(a.sid.cmp(&b.sid))
    });
}

// ---------------------------------------------------------------------------
// Review

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub identified: usize,
    pub prioritized: usize,
    pub mitigating: usize,
    pub closed: usize,
    pub open: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub scan_id: String,
    pub uc_id: String,
    pub bank_ref: BankRef,
    pub closed_at: Timestamp,
    pub answered: usize,
    pub coverage: f64,
}

impl ScanSummary {
    fn of(r: &ScanRecord) -> Self {
        ScanSummary {
            scan_id: r.scan_id().to_string(),
            uc_id: r.uc_id().to_string(),
            bank_ref: r.bank_ref().clone(),
            closed_at: r.closed_at(),
            answered: r.answered(),
            coverage: r.coverage(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MitigationRow {
    pub mid: String,
    pub sid: String,
    pub description: String,
    pub kind: MitigationKind,
    pub scope: MitigationScope,
    pub owner: String,
    pub status: MitigationStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementDigest {
    pub eid: String,
    pub stakeholder: String,
    pub channel: String,
    pub concerns: Vec<String>,
    pub resulting_changes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaSection {
    /// Only one closed scan so far.
    SingleScan,
    /// The two latest scans cannot be compared (different bank lineage).
    Incomparable { reason: String },
    Delta(Box<EffectivenessDelta>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewReport {
    pub uc_id: String,
    pub title: String,
    pub lifecycle_phase: UseCasePhase,
    /// Closed scans of the use-case, oldest first.
    pub scans: Vec<ScanSummary>,
    pub latest_profile: ScanProfile,
    /// Latest organization-wide scan, when the organization has one.
    pub organization_scan: Option<ScanSummary>,
    pub organization_profile: Option<ScanProfile>,
    pub scenarios: ScenarioCounts,
    pub mitigations: Vec<MitigationRow>,
    pub delta: DeltaSection,
    pub engagements: Vec<EngagementDigest>,
}

impl ReviewReport {
    /// Number of scans the review draws on, organization-wide one included.
    pub fn scan_count(&self) -> usize {
        self.scans.len() + usize::from(self.organization_scan.is_some())
    }
}

fn latest_first(scans: &[ScanRecord], uc_id: &str) -> Vec<ScanRecord> {
    let mut own: Vec<ScanRecord> = scans.iter().filter(|r| r.uc_id() == uc_id).cloned().collect();
    own.sort_by(|a, b| a.closed_at().cmp(&b.closed_at()).then_with(|| a.scan_id().cmp(b.scan_id())));
    own
}

/// Summarize where a use-case stands. `scans` may contain scans of other
/// use-cases; only `uc`'s own are used. `organization_scans` are the scans
/// of the organization-wide pseudo use-case, if any.
pub fn review_summary(
    uc: &UseCase,
    register: &Register,
    scans: &[ScanRecord],
    organization_scans: &[ScanRecord],
) -> Result<ReviewReport, RegisterError> {
    let own = latest_first(scans, &uc.uc_id);
    let latest = own.last().ok_or_else(|| RegisterError::NoScanEvidence(uc.uc_id.clone()))?;
    let delta = match own.len() {
        1 => DeltaSection::SingleScan,
        n => match compare_scans(&own[n - 2], latest) {
            Ok(d) => DeltaSection::Delta(Box::new(d)),
            Err(e) => DeltaSection::Incomparable { reason: e.to_string() },
        },
    };
    let org_latest = organization_scans
        .iter()
        .filter(|r| r.uc_id() != uc.uc_id)
        .max_by(|a, b| a.closed_at().cmp(&b.closed_at()).then_with(|| a.scan_id().cmp(b.scan_id())));
    Ok(ReviewReport {
        uc_id: uc.uc_id.clone(),
        title: uc.title.clone(),
        lifecycle_phase: uc.lifecycle_phase(),
        scans: own.iter().map(ScanSummary::of).collect(),
        latest_profile: score_scan(latest),
        organization_scan: org_latest.map(ScanSummary::of),
        organization_profile: org_latest.map(score_scan),
        scenarios: register.status_counts(),
        mitigations: register
            .mitigations()
            .map(|m| MitigationRow {
                mid: m.mid.clone(),
                sid: m.sid.clone(),
                description: m.description.clone(),
                kind: m.kind,
                scope: m.scope,
                owner: m.owner.clone(),
                status: m.status,
            })
            .collect(),
        delta,
        engagements: register
            .engagements()
            .map(|e| EngagementDigest {
                eid: e.eid.clone(),
                stakeholder: e.stakeholder.clone(),
                channel: e.channel.clone(),
                concerns: e.concerns.clone(),
                resulting_changes: e.resulting_changes.clone(),
            })
            .collect(),
    })
}
