//! Intake and risk-scan workflow state: organizations, use-cases, scan
//! sessions and the frozen records they produce.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::question_bank::{BankRef, QuestionBank, SurveyKind, SurveyResponses, TemplateMismatch};
use crate::taxonomy::{Answer, Fundamental, LifecycleStage, Pitfall, Role};
use crate::Timestamp;

/// Title that marks the organization-wide pseudo use-case.
pub const ORGANIZATION_WIDE: &str = "ORGANIZATION-WIDE";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssessmentError {
    #[error("unknown organization `{0}`")]
    UnknownOrganization(String),
    #[error("unknown use-case `{0}`")]
    UnknownUseCase(String),
    #[error("survey response does not match template at `{0}`")]
    TemplateMismatch(String),
    #[error("bank is not release-grade: {}", .0.join("; "))]
    BankNotReleaseGrade(Vec<String>),
    #[error("use-case `{0}` already has an open scan")]
    ScanAlreadyOpen(String),
    #[error("scan session is closed")]
    SessionClosed,
    #[error("question `{qid}` is not tagged to role {role}")]
    RoleMismatch { qid: String, role: Role },
    #[error("question `{0}` is not part of this scan")]
    UnknownQuestion(String),
    #[error("`{0}` cannot be submitted as an answer")]
    InvalidAnswer(Answer),
    #[error("import does not match this scan: {0}")]
    ImportMismatch(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
}

impl AssessmentError {
    pub fn code(&self) -> &'static str {
        match self {
            AssessmentError::UnknownOrganization(_) => "UnknownOrganization",
            AssessmentError::UnknownUseCase(_) => "UnknownUseCase",
            AssessmentError::TemplateMismatch(_) => "TemplateMismatch",
            AssessmentError::BankNotReleaseGrade(_) => "BankNotReleaseGrade",
            AssessmentError::ScanAlreadyOpen(_) => "ScanAlreadyOpen",
            AssessmentError::SessionClosed => "SessionClosed",
            AssessmentError::RoleMismatch { .. } => "RoleMismatch",
            AssessmentError::UnknownQuestion(_) => "UnknownQuestion",
            AssessmentError::InvalidAnswer(_) => "InvalidAnswer",
            AssessmentError::ImportMismatch(_) => "ImportMismatch",
            AssessmentError::InvalidField(_) => "InvalidField",
        }
    }
}

impl From<TemplateMismatch> for AssessmentError {
    fn from(e: TemplateMismatch) -> Self {
        AssessmentError::TemplateMismatch(e.0)
    }
}

fn non_empty(field: &str, value: &str) -> Result<(), AssessmentError> {
    if value.trim().is_empty() {
        Err(AssessmentError::InvalidField(format!("{field} must not be empty")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SizeBand {
    Micro,
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Organization {
    pub org_id: String,
    pub name: String,
    /// Free label used to form benchmarking cohorts.
    pub sector: String,
    pub size_band: SizeBand,
    /// Organizational survey answers.
    #[serde(default)]
    pub profile: SurveyResponses,
    /// Maturity survey answers keyed by the bank version they answered.
    #[serde(default)]
    pub maturity_answers: BTreeMap<String, SurveyResponses>,
    pub created_at: Timestamp,
}

impl Organization {
    pub fn new(
        org_id: impl Into<String>,
        name: impl Into<String>,
        sector: impl Into<String>,
        size_band: SizeBand,
        now: Timestamp,
    ) -> Result<Self, AssessmentError> {
        let org = Organization {
            org_id: org_id.into(),
            name: name.into(),
            sector: sector.into(),
            size_band,
            profile: SurveyResponses::new(),
            maturity_answers: BTreeMap::new(),
            created_at: now,
        };
        non_empty("org_id", &org.org_id)?;
        non_empty("name", &org.name)?;
        non_empty("sector", &org.sector)?;
        Ok(org)
    }

    pub fn record_profile(
        &mut self,
        bank: &QuestionBank,
        responses: SurveyResponses,
    ) -> Result<(), AssessmentError> {
        template(bank, SurveyKind::Organizational)?.check(&responses)?;
        self.profile = responses;
        Ok(())
    }

    /// Store the maturity survey for `bank`'s version, replacing an earlier
    /// answer set for the same version.
    pub fn record_maturity(
        &mut self,
        bank: &QuestionBank,
        responses: SurveyResponses,
    ) -> Result<(), AssessmentError> {
        template(bank, SurveyKind::OrganizationalMaturity)?.check(&responses)?;
        self.maturity_answers.insert(bank.bank_ref().to_string(), responses);
        Ok(())
    }
}

fn template(
    bank: &QuestionBank,
    kind: SurveyKind,
) -> Result<&crate::question_bank::SurveyTemplate, AssessmentError> {
    bank.survey(kind)
        .ok_or_else(|| AssessmentError::TemplateMismatch(format!("{kind:?} template")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UseCasePhase {
    Idea,
    Planning,
    Development,
    Deployed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub at: Timestamp,
    pub actor: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCase {
    pub uc_id: String,
    pub org_id: String,
    pub title: String,
    pub description: String,
    lifecycle_phase: UseCasePhase,
    pub stakeholders: Vec<String>,
    pub guiding_policies: Vec<String>,
    pub scoping_answers: SurveyResponses,
    audit: Vec<AuditEntry>,
    pub created_at: Timestamp,
}

/// Caller-supplied part of a new use-case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseCaseDraft {
    pub org_id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub lifecycle_phase: UseCasePhase,
    #[serde(default)]
    pub stakeholders: Vec<String>,
    #[serde(default)]
    pub guiding_policies: Vec<String>,
    #[serde(default)]
    pub scoping: SurveyResponses,
}

impl UseCase {
    pub fn lifecycle_phase(&self) -> UseCasePhase {
        self.lifecycle_phase
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn is_organization_wide(&self) -> bool {
        self.title == ORGANIZATION_WIDE
    }

    pub fn set_lifecycle_phase(&mut self, phase: UseCasePhase, actor: &str, now: Timestamp) {
        if phase == self.lifecycle_phase {
            return;
        }
        self.audit.push(AuditEntry {
            at: now,
            actor: actor.to_string(),
            action: format!("lifecycle_phase {:?} -> {:?}", self.lifecycle_phase, phase),
        });
        self.lifecycle_phase = phase;
    }
}

/// Create a use-case under `org`, checking the scoping answers against the
/// bank's scoping template.
pub fn create_use_case(
    org: &Organization,
    bank: &QuestionBank,
    uc_id: impl Into<String>,
    draft: UseCaseDraft,
    actor: &str,
    now: Timestamp,
) -> Result<UseCase, AssessmentError> {
    if draft.org_id != org.org_id {
        return Err(AssessmentError::UnknownOrganization(draft.org_id));
    }
    let uc_id = uc_id.into();
    non_empty("uc_id", &uc_id)?;
    non_empty("title", &draft.title)?;
    template(bank, SurveyKind::UseCaseScoping)?.check(&draft.scoping)?;
    Ok(UseCase {
        audit: vec![AuditEntry {
            at: now,
            actor: actor.to_string(),
            action: format!("created in phase {:?}", draft.lifecycle_phase),
        }],
        uc_id,
        org_id: draft.org_id,
        title: draft.title,
        description: draft.description,
        lifecycle_phase: draft.lifecycle_phase,
        stakeholders: draft.stakeholders,
        guiding_policies: draft.guiding_policies,
        scoping_answers: draft.scoping,
        created_at: now,
    })
}

// ---------------------------------------------------------------------------
// Scans

/// The tags of one askable question, copied from the bank when the scan
/// opens so later revisions cannot change what the scan measured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AskedQuestion {
    pub qid: String,
    pub fundamental: Fundamental,
    pub pitfall: Pitfall,
    pub role: Role,
    pub stage: LifecycleStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub role: Role,
    pub answer: Answer,
    pub answered_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub respondent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseWrite {
    pub qid: String,
    pub role: Role,
    pub answer: Answer,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub respondent: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSession {
    scan_id: String,
    uc_id: String,
    bank_ref: BankRef,
    opened_at: Timestamp,
    closed_at: Option<Timestamp>,
    status: ScanStatus,
    questions: Vec<AskedQuestion>,
    /// Current answer per qid. A qid has exactly one role, so the qid alone
    /// identifies the (qid, role) pair.
    responses: BTreeMap<String, Response>,
    /// Every accepted write, including overwritten ones.
    write_log: Vec<ResponseWrite>,
}

/// Open a scan of `uc` against `bank`.
///
/// `scan_open_for_uc` is the caller's knowledge of whether another scan of
/// the same use-case is still open.
pub fn open_scan(
    uc: &UseCase,
    bank: &QuestionBank,
    tolerance: f64,
    scan_open_for_uc: bool,
    scan_id: impl Into<String>,
    now: Timestamp,
) -> Result<ScanSession, AssessmentError> {
    if scan_open_for_uc {
        return Err(AssessmentError::ScanAlreadyOpen(uc.uc_id.clone()));
    }
    if let Err(report) = bank.release_readiness(tolerance) {
        let mut reasons = report.coverage_gaps;
        if !report.pass {
            reasons.insert(
                0,
                format!(
                    "max relative deviation {:.4} exceeds tolerance {:.4}",
                    report.max_relative_deviation, tolerance
                ),
            );
        }
        return Err(AssessmentError::BankNotReleaseGrade(reasons));
    }
    let scan_id = scan_id.into();
    non_empty("scan_id", &scan_id)?;
    let questions = bank
        .active_questions()
        .map(|q| AskedQuestion {
            qid: q.qid.clone(),
            fundamental: q.fundamental,
            pitfall: q.pitfall,
            role: q.role,
            stage: q.pitfall.lifecycle_stage(),
        })
        .collect();
    Ok(ScanSession {
        scan_id,
        uc_id: uc.uc_id.clone(),
        bank_ref: bank.bank_ref(),
        opened_at: now,
        closed_at: None,
        status: ScanStatus::Open,
        questions,
        responses: BTreeMap::new(),
        write_log: Vec::new(),
    })
}

impl ScanSession {
    pub fn scan_id(&self) -> &str {
        &self.scan_id
    }

    pub fn uc_id(&self) -> &str {
        &self.uc_id
    }

    pub fn bank_ref(&self) -> &BankRef {
        &self.bank_ref
    }

    pub fn opened_at(&self) -> Timestamp {
        self.opened_at
    }

    pub fn closed_at(&self) -> Option<Timestamp> {
        self.closed_at
    }

    pub fn status(&self) -> ScanStatus {
        self.status
    }

    pub fn is_open(&self) -> bool {
        self.status == ScanStatus::Open
    }

    /// Askable questions in bank order.
    pub fn questions(&self) -> &[AskedQuestion] {
        &self.questions
    }

    pub fn questions_for_role(&self, role: Role) -> impl Iterator<Item = &AskedQuestion> {
        self.questions.iter().filter(move |q| q.role == role)
    }

    pub fn responses(&self) -> &BTreeMap<String, Response> {
        &self.responses
    }

    pub fn write_log(&self) -> &[ResponseWrite] {
        &self.write_log
    }

    /// Current answer for `qid`; `Unanswered` when nothing was submitted.
    pub fn answer(&self, qid: &str) -> Answer {
        self.responses.get(qid).map_or(Answer::Unanswered, |r| r.answer)
    }

    pub fn answered_count(&self) -> usize {
        self.responses.len()
    }

    pub fn submit_response(
        &mut self,
        qid: &str,
        role: Role,
        answer: Answer,
        respondent: Option<&str>,
        now: Timestamp,
    ) -> Result<(), AssessmentError> {
        if !self.is_open() {
            return Err(AssessmentError::SessionClosed);
        }
        let asked = self
            .questions
            .iter()
            .find(|q| q.qid == qid)
            .ok_or_else(|| AssessmentError::UnknownQuestion(qid.to_string()))?;
        if asked.role != role {
            return Err(AssessmentError::RoleMismatch {
                qid: qid.to_string(),
                role,
            });
        }
        if !answer.is_answered() {
            return Err(AssessmentError::InvalidAnswer(answer));
        }
        let respondent = respondent.map(str::to_string);
        self.write_log.push(ResponseWrite {
            qid: qid.to_string(),
            role,
            answer,
            at: now,
            respondent: respondent.clone(),
        });
        self.responses.insert(
            qid.to_string(),
            Response {
                role,
                answer,
                answered_at: now,
                respondent,
            },
        );
        Ok(())
    }

    /// Apply an exported answer set, e.g. one collected offline. Rows are
    /// applied in timestamp order, so the latest answer per question wins.
    pub fn import(&mut self, export: &ScanExport) -> Result<usize, AssessmentError> {
        if !self.is_open() {
            return Err(AssessmentError::SessionClosed);
        }
        if export.bank_ref != self.bank_ref {
            return Err(AssessmentError::ImportMismatch(format!(
                "bank {} != {}",
                export.bank_ref, self.bank_ref
            )));
        }
        if export.uc_id != self.uc_id {
            return Err(AssessmentError::ImportMismatch(format!(
                "use-case {} != {}",
                export.uc_id, self.uc_id
            )));
        }
        // Validate everything first so a bad row leaves the session untouched.
        let mut trial = self.clone();
        let mut rows: Vec<&ExportedResponse> = export.responses.iter().collect();
        rows.sort_by_key(|r| r.at);
        for row in &rows {
            trial.submit_response(&row.qid, row.role, row.answer, row.respondent.as_deref(), row.at)?;
        }
        *self = trial;
        Ok(rows.len())
    }

    pub fn close(&mut self, now: Timestamp) -> Result<ScanRecord, AssessmentError> {
        if !self.is_open() {
            return Err(AssessmentError::SessionClosed);
        }
        self.status = ScanStatus::Closed;
        self.closed_at = Some(now);
        Ok(ScanRecord::freeze(self.clone()))
    }

    pub fn export(&self) -> ScanExport {
        ScanExport {
            scan_id: self.scan_id.clone(),
            uc_id: self.uc_id.clone(),
            bank_ref: self.bank_ref.clone(),
            responses: self
                .responses
                .iter()
                .map(|(qid, r)| ExportedResponse {
                    qid: qid.clone(),
                    role: r.role,
                    answer: r.answer,
                    at: r.answered_at,
                    respondent: r.respondent.clone(),
                })
                .collect(),
        }
    }
}

/// Convenience wrapper matching the workflow vocabulary.
pub fn close_scan(session: &mut ScanSession, now: Timestamp) -> Result<ScanRecord, AssessmentError> {
    session.close(now)
}

/// A closed scan. Immutable: it exposes only read access to the frozen
/// session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct ScanRecord {
    session: ScanSession,
    answered: usize,
    unanswered: usize,
    answered_by_role: BTreeMap<Role, usize>,
    unanswered_by_role: BTreeMap<Role, usize>,
}

#[derive(Deserialize)]
struct RawRecord {
    session: ScanSession,
}

impl TryFrom<RawRecord> for ScanRecord {
    type Error = AssessmentError;

    fn try_from(raw: RawRecord) -> Result<Self, AssessmentError> {
        ScanRecord::try_from(raw.session)
    }
}

impl TryFrom<ScanSession> for ScanRecord {
    type Error = AssessmentError;

    /// Wrap a session that was already closed, e.g. one read back from storage.
    fn try_from(session: ScanSession) -> Result<Self, AssessmentError> {
        if session.is_open() || session.closed_at.is_none() {
            return Err(AssessmentError::InvalidField(
                "scan record must hold a closed session".into(),
            ));
        }
        Ok(ScanRecord::freeze(session))
    }
}

impl ScanRecord {
    fn freeze(session: ScanSession) -> Self {
        let mut answered_by_role: BTreeMap<Role, usize> = Role::ALL.iter().map(|&r| (r, 0)).collect();
        let mut unanswered_by_role = answered_by_role.clone();
        for q in &session.questions {
            if session.responses.contains_key(&q.qid) {
                *answered_by_role.get_mut(&q.role).unwrap() += 1;
            } else {
                *unanswered_by_role.get_mut(&q.role).unwrap() += 1;
            }
        }
        ScanRecord {
            answered: answered_by_role.values().sum(),
            unanswered: unanswered_by_role.values().sum(),
            answered_by_role,
            unanswered_by_role,
            session,
        }
    }

    pub fn session(&self) -> &ScanSession {
        &self.session
    }

    pub fn scan_id(&self) -> &str {
        &self.session.scan_id
    }

    pub fn uc_id(&self) -> &str {
        &self.session.uc_id
    }

    pub fn bank_ref(&self) -> &BankRef {
        &self.session.bank_ref
    }

    pub fn closed_at(&self) -> Timestamp {
        self.session.closed_at.expect("records are closed")
    }

    pub fn questions(&self) -> &[AskedQuestion] {
        &self.session.questions
    }

    pub fn answer(&self, qid: &str) -> Answer {
        self.session.answer(qid)
    }

    pub fn answered(&self) -> usize {
        self.answered
    }

    pub fn unanswered(&self) -> usize {
        self.unanswered
    }

    pub fn answered_by_role(&self) -> &BTreeMap<Role, usize> {
        &self.answered_by_role
    }

    pub fn unanswered_by_role(&self) -> &BTreeMap<Role, usize> {
        &self.unanswered_by_role
    }

    /// Answered share of askable questions, in [0, 1].
    pub fn coverage(&self) -> f64 {
        let total = self.answered + self.unanswered;
        if total == 0 {
            0.0
        } else {
            self.answered as f64 / total as f64
        }
    }

    pub fn export(&self) -> ScanExport {
        self.session.export()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedResponse {
    pub qid: String,
    pub role: Role,
    pub answer: Answer,
    pub at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub respondent: Option<String>,
}

/// Portable answer set of one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanExport {
    pub scan_id: String,
    pub uc_id: String,
    pub bank_ref: BankRef,
    pub responses: Vec<ExportedResponse>,
}
