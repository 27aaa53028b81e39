//! Transport-agnostic workflow operations over a [`Repository`].
//!
//! Every mutation runs under one writer mutex, so the read-modify-write
//! sequences below never interleave inside a process; the store lease keeps
//! other processes out.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use chrono::NaiveDate;
use parking_lot::Mutex;
use semver::Version;
use serde::{Deserialize, Serialize};

use dress_core::assessment::{
    create_use_case, open_scan, AssessmentError, Organization, ScanExport, ScanRecord, ScanSession,
    SizeBand, UseCase, UseCaseDraft, UseCasePhase, ORGANIZATION_WIDE,
};
use dress_core::insights::{
    aggregate, benchmark, refinement_candidates, BenchmarkReport, CohortFilter, FeedbackEntry, FeedbackKind,
    GroupStats, RefinementCandidate, Subject,
};
use dress_core::question_bank::{
    default_bank, load_bank, revise_question, validate_balance, BalanceReport, BankRef, LoadMode, Question,
    QuestionBank, Revision, RevisionKind, SurveyResponses, DEFAULT_BALANCE_TOLERANCE,
};
use dress_core::risk_register::{
    review_summary, HeatmapGrid, MitigationKind, MitigationMeasure, MitigationScope, MitigationStatus, Register,
    ReviewReport, RiskScenario, ScenarioStatus, DEFAULT_PRIORITY_THRESHOLD,
};
use dress_core::scoring::{gap_analysis, score_scan_with, AnswerWeights, GapBands, GapReport, Principle, PrincipleMap, ScanProfile};
use dress_core::{Answer, Fundamental, LifecycleStage, Pitfall, Risk, Role, Timestamp};
use dress_store::{EntityKind, Repository, StoreError, View};

use crate::error::ServiceError;

pub type Result<T> = std::result::Result<T, ServiceError>;

pub const DEFAULT_BANK_ID: &str = "dress-default";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub tolerance: f64,
    pub weights: AnswerWeights,
    pub bands: GapBands,
    /// Bank used by intake and scans that name none.
    pub default_bank_id: String,
    /// Pin every read to records written at or before this instant.
    pub as_of: Option<Timestamp>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            tolerance: DEFAULT_BALANCE_TOLERANCE,
            weights: AnswerWeights::default(),
            bands: GapBands::default(),
            default_bank_id: DEFAULT_BANK_ID.to_string(),
            as_of: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Request bodies. Tag and answer fields are plain strings so that
// respondent wording ("yes", "in-progress") and aliases are accepted.

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewOrganization {
    pub name: String,
    pub sector: String,
    pub size_band: SizeBand,
    #[serde(default)]
    pub profile: Option<SurveyResponses>,
    #[serde(default)]
    pub maturity: Option<SurveyResponses>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewUseCase {
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
    #[serde(default)]
    pub actor: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenScanRequest {
    pub uc_id: String,
    #[serde(default)]
    pub bank_id: Option<String>,
    #[serde(default)]
    pub bank_version: Option<Version>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseBody {
    pub qid: String,
    pub role: String,
    pub answer: String,
    #[serde(default)]
    pub respondent: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewPrincipleMap {
    #[serde(default)]
    pub map_id: Option<String>,
    #[serde(default)]
    pub org_id: Option<String>,
    pub principles: Vec<Principle>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewScenario {
    pub uc_id: String,
    pub title: String,
    #[serde(default)]
    pub narrative: String,
    pub fundamental: String,
    pub pitfall: String,
    pub risks: Vec<String>,
    pub likelihood: u8,
    pub severity: u8,
    #[serde(default)]
    pub source_questions: BTreeSet<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioPatch {
    #[serde(default)]
    pub likelihood: Option<u8>,
    #[serde(default)]
    pub severity: Option<u8>,
    #[serde(default)]
    pub status: Option<ScenarioStatus>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewMitigation {
    pub sid: String,
    pub description: String,
    pub kind: MitigationKind,
    pub scope: MitigationScope,
    #[serde(default)]
    pub owner: String,
    /// Defaults to the scenario's tag.
    #[serde(default)]
    pub fundamental: Option<String>,
    #[serde(default)]
    pub pitfall: Option<String>,
    /// Defaults to the scenario's risks.
    #[serde(default)]
    pub risks: Option<Vec<String>>,
    #[serde(default)]
    pub status: Option<MitigationStatus>,
    #[serde(default)]
    pub due: Option<NaiveDate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationPatch {
    pub status: MitigationStatus,
    #[serde(default)]
    pub owner: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewEngagement {
    pub uc_id: String,
    pub stakeholder: String,
    #[serde(default)]
    pub channel: String,
    #[serde(default)]
    pub concerns: Vec<String>,
    #[serde(default)]
    pub resulting_changes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewFeedback {
    #[serde(default)]
    pub qid: Option<String>,
    pub use_case_ref: String,
    pub kind: FeedbackKind,
    pub note: String,
}

/// One bank revision. `text` is the new wording for Add and Rephrase; the
/// tag fields are required for Add and optional overrides for Retag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevisionRequest {
    pub kind: String,
    pub qid: String,
    pub rationale: String,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub fundamental: Option<String>,
    #[serde(default)]
    pub pitfall: Option<String>,
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub risks: Option<Vec<String>>,
    #[serde(default)]
    pub source_use_case: Option<String>,
}

// ---------------------------------------------------------------------------
// Response bodies

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanView {
    pub scan_id: String,
    pub uc_id: String,
    pub bank_ref: BankRef,
    pub status: String,
    pub opened_at: Timestamp,
    pub closed_at: Option<Timestamp>,
    pub askable: usize,
    pub answered: usize,
}

impl ScanView {
    fn of(s: &ScanSession) -> Self {
        ScanView {
            scan_id: s.scan_id().to_string(),
            uc_id: s.uc_id().to_string(),
            bank_ref: s.bank_ref().clone(),
            status: if s.is_open() { "Open" } else { "Closed" }.to_string(),
            opened_at: s.opened_at(),
            closed_at: s.closed_at(),
            askable: s.questions().len(),
            answered: s.answered_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub qid: String,
    pub text: String,
    pub fundamental: Fundamental,
    pub pitfall: Pitfall,
    pub role: Role,
    pub stage: LifecycleStage,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionList {
    pub scan_id: String,
    pub role: Option<Role>,
    pub answered: usize,
    pub askable: usize,
    pub questions: Vec<QuestionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseAck {
    pub scan_id: String,
    pub qid: String,
    pub role: Role,
    pub answer: Answer,
    /// False when the same answer was already stored.
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportAck {
    pub scan_id: String,
    pub applied: usize,
    pub answered: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSummary {
    pub bank_ref: BankRef,
    pub active_questions: usize,
    pub revisions: usize,
}

impl BankSummary {
    fn of(b: &QuestionBank) -> Self {
        BankSummary {
            bank_ref: b.bank_ref(),
            active_questions: b.active_questions().count(),
            revisions: b.changelog().len(),
        }
    }
}

// ---------------------------------------------------------------------------

fn parse<T: FromStr<Err = dress_core::taxonomy::TaxonomyError>>(label: &str) -> Result<T> {
    Ok(label.parse::<T>()?)
}

fn parse_risks(labels: &[String]) -> Result<BTreeSet<Risk>> {
    labels.iter().map(|l| parse::<Risk>(l)).collect()
}

fn revision_kind(label: &str) -> Option<RevisionKind> {
    match dress_core::taxonomy::normalize(label).as_str() {
        "add" => Some(RevisionKind::Add),
        "remove" => Some(RevisionKind::Remove),
        "rephrase" => Some(RevisionKind::Rephrase),
        "retag" => Some(RevisionKind::Retag),
        _ => None,
    }
}

pub struct Service {
    repo: Repository,
    config: ServiceConfig,
    writer: Mutex<()>,
}

impl Service {
    /// Wrap `repo`. When the store is writable and has no default bank yet,
    /// the shipped bank is stored under the configured id.
    pub fn new(repo: Repository, config: ServiceConfig) -> Result<Self> {
        let svc = Service {
            repo,
            config,
            writer: Mutex::new(()),
        };
        if !svc.repo.store().is_read_only()
            && svc.config.as_of.is_none()
            && svc.repo.store().current_version(EntityKind::Bank, DEFAULT_BANK_ID) == 0
        {
            svc.repo.put(EntityKind::Bank, DEFAULT_BANK_ID, 0, &default_bank())?;
        }
        Ok(svc)
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn view(&self) -> View {
        self.repo.view(self.config.as_of)
    }

    fn now(&self) -> Timestamp {
        self.repo.now()
    }

    fn writable(&self) -> Result<parking_lot::MutexGuard<'_, ()>> {
        if self.config.as_of.is_some() || self.repo.store().is_read_only() {
            return Err(StoreError::ReadOnly.into());
        }
        Ok(self.writer.lock())
    }

    // -- banks --------------------------------------------------------------

    fn bank_at(&self, view: &View, bank_id: &str, version: Option<&Version>) -> Result<QuestionBank> {
        match view.bank(bank_id, version) {
            Ok(b) => Ok(b),
            // A read-only store that was never seeded still has the shipped bank.
            Err(StoreError::NotFound { .. }) if bank_id == DEFAULT_BANK_ID && version.is_none_or(|v| *v == Version::new(1, 0, 0)) => {
                Ok(default_bank())
            }
            Err(StoreError::NotFound { .. }) => Err(ServiceError::not_found(
                "bank",
                match version {
                    Some(v) => format!("{bank_id}@{v}"),
                    None => bank_id.to_string(),
                },
            )),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get_bank(&self, bank_id: &str, version: Option<&Version>) -> Result<QuestionBank> {
        self.bank_at(&self.view(), bank_id, version)
    }

    /// Every stored bank version, by id then version.
    pub fn list_banks(&self) -> Result<Vec<BankSummary>> {
        let view = self.view();
        let mut out = Vec::new();
        let ids = view.snapshot().scan_keys(EntityKind::Bank, |_| true);
        for id in &ids {
            for r in view.snapshot().history(EntityKind::Bank, id) {
                let b = load_bank(&r.payload, LoadMode::Lenient)?;
                out.push(BankSummary::of(&b));
            }
        }
        if !ids.iter().any(|id| id == DEFAULT_BANK_ID) {
            out.push(BankSummary::of(&default_bank()));
        }
        out.sort_by(|a, b| a.bank_ref.cmp(&b.bank_ref));
        Ok(out)
    }

    /// Store a bank document as a new version of its id. Re-loading the
    /// current version unchanged is a no-op; anything else must carry a
    /// higher version.
    pub fn load_bank(&self, document: &str) -> Result<BankSummary> {
        let bank = load_bank(document, LoadMode::Strict)?;
        let _w = self.writable()?;
        let view = self.view();
        let id = bank.bank_id().to_string();
        let current = view.snapshot().current_version(EntityKind::Bank, &id);
        if current > 0 {
            let latest = view.bank(&id, None)?;
            if latest == bank {
                return Ok(BankSummary::of(&bank));
            }
            if bank.version() <= latest.version() {
                return Err(ServiceError::AlreadyExists(format!(
                    "bank {} (latest stored version is {})",
                    bank.bank_ref(),
                    latest.version()
                )));
            }
        }
        self.repo.put(EntityKind::Bank, &id, current, &bank)?;
        Ok(BankSummary::of(&bank))
    }

    pub fn validate_bank(&self, bank_id: &str, version: Option<&Version>, tolerance: Option<f64>) -> Result<BalanceReport> {
        let bank = self.get_bank(bank_id, version)?;
        Ok(validate_balance(&bank, tolerance.unwrap_or(self.config.tolerance))?)
    }

    pub fn revise_bank(&self, bank_id: &str, req: RevisionRequest) -> Result<BankSummary> {
        let _w = self.writable()?;
        let view = self.view();
        let bank = self.bank_at(&view, bank_id, None)?;
        let kind = match revision_kind(&req.kind) {
            Some(k) => k,
            None => return Err(ServiceError::BadRequest(format!("unknown revision kind `{}`", req.kind))),
        };
        let mut rev = match kind {
            RevisionKind::Add => {
                let need = |f: &Option<String>, name: &str| {
                    f.clone()
                        .ok_or_else(|| ServiceError::BadRequest(format!("Add revision needs `{name}`")))
                };
                let q = Question::new(
                    req.qid.clone(),
                    need(&req.text, "text")?,
                    parse(&need(&req.fundamental, "fundamental")?)?,
                    parse(&need(&req.pitfall, "pitfall")?)?,
                    parse(&need(&req.role, "role")?)?,
                )
                .with_risks(parse_risks(req.risks.as_deref().unwrap_or(&[]))?);
                Revision::add(q, req.rationale.clone())
            }
            RevisionKind::Remove => Revision::remove(&bank, &req.qid, req.rationale.clone())?,
            RevisionKind::Rephrase => {
                let text = req
                    .text
                    .clone()
                    .ok_or_else(|| ServiceError::BadRequest("Rephrase revision needs `text`".into()))?;
                Revision::rephrase(&bank, &req.qid, text, req.rationale.clone())?
            }
            RevisionKind::Retag => {
                let current = bank
                    .question(&req.qid)
                    .ok_or_else(|| dress_core::question_bank::BankError::UnknownQid(req.qid.clone()))?;
                let fundamental = match &req.fundamental {
                    Some(l) => parse(l)?,
                    None => current.fundamental,
                };
                let pitfall = match &req.pitfall {
                    Some(l) => parse(l)?,
                    None => current.pitfall,
                };
                let role = match &req.role {
                    Some(l) => parse(l)?,
                    None => current.role,
                };
                let risks = req.risks.as_deref().map(parse_risks).transpose()?;
                Revision::retag(&bank, &req.qid, fundamental, pitfall, role, risks, req.rationale.clone())?
            }
        };
        if let Some(uc) = &req.source_use_case {
            rev = rev.from_use_case(uc.clone());
        }
        let next = revise_question(&bank, rev, self.now())?;
        let expected = view.snapshot().current_version(EntityKind::Bank, bank_id);
        if expected == 0 {
            // The default bank was only embedded; store its base version first.
            self.repo.put(EntityKind::Bank, bank_id, 0, &bank)?;
            self.repo.put(EntityKind::Bank, bank_id, 1, &next)?;
        } else {
            self.repo.put(EntityKind::Bank, bank_id, expected, &next)?;
        }
        Ok(BankSummary::of(&next))
    }

    // -- intake -------------------------------------------------------------

    pub fn create_organization(&self, req: NewOrganization) -> Result<Organization> {
        let _w = self.writable()?;
        let now = self.now();
        let bank = self.bank_at(&self.view(), &self.config.default_bank_id, None)?;
        let org_id = self.repo.next_id("org")?;
        let mut org = Organization::new(org_id, req.name, req.sector, req.size_band, now)?;
        if let Some(p) = req.profile {
            org.record_profile(&bank, p)?;
        }
        if let Some(m) = req.maturity {
            org.record_maturity(&bank, m)?;
        }
        self.repo.put(EntityKind::Organization, &org.org_id, 0, &org)?;
        Ok(org)
    }

    pub fn organization(&self, org_id: &str) -> Result<Organization> {
        self.view()
            .get::<Organization>(EntityKind::Organization, org_id)?
            .map(|(o, _)| o)
            .ok_or_else(|| AssessmentError::UnknownOrganization(org_id.to_string()).into())
    }

    pub fn create_use_case(&self, req: NewUseCase) -> Result<UseCase> {
        let _w = self.writable()?;
        let org = self.organization(&req.org_id)?;
        let bank = self.bank_at(&self.view(), &self.config.default_bank_id, None)?;
        let uc_id = self.repo.next_id("uc")?;
        let actor = req.actor.unwrap_or_else(|| "api".to_string());
        let draft = UseCaseDraft {
            org_id: req.org_id,
            title: req.title,
            description: req.description,
            lifecycle_phase: req.lifecycle_phase,
            stakeholders: req.stakeholders,
            guiding_policies: req.guiding_policies,
            scoping: req.scoping,
        };
        let uc = create_use_case(&org, &bank, uc_id, draft, &actor, self.now())?;
        self.repo.put(EntityKind::UseCase, &uc.uc_id, 0, &uc)?;
        Ok(uc)
    }

    pub fn use_case(&self, uc_id: &str) -> Result<UseCase> {
        self.view()
            .get::<UseCase>(EntityKind::UseCase, uc_id)?
            .map(|(u, _)| u)
            .ok_or_else(|| AssessmentError::UnknownUseCase(uc_id.to_string()).into())
    }

    // -- scans --------------------------------------------------------------

    pub fn open_scan(&self, req: OpenScanRequest) -> Result<ScanView> {
        let _w = self.writable()?;
        let view = self.view();
        let uc = self.use_case(&req.uc_id)?;
        let bank_id = req.bank_id.as_deref().unwrap_or(&self.config.default_bank_id);
        let bank = self.bank_at(&view, bank_id, req.bank_version.as_ref())?;
        let already_open = view
            .scan_sessions()?
            .iter()
            .any(|s| s.uc_id() == uc.uc_id && s.is_open());
        let scan_id = if already_open {
            String::from("unused")
        } else {
            self.repo.next_id("scan")?
        };
        let session = open_scan(&uc, &bank, self.config.tolerance, already_open, scan_id, self.now())?;
        self.repo.put(EntityKind::Scan, session.scan_id(), 0, &session)?;
        Ok(ScanView::of(&session))
    }

    fn session(&self, view: &View, scan_id: &str) -> Result<(ScanSession, u64)> {
        view.get::<ScanSession>(EntityKind::Scan, scan_id)?
            .ok_or_else(|| ServiceError::not_found("scan", scan_id))
    }

    pub fn scan(&self, scan_id: &str) -> Result<ScanView> {
        Ok(ScanView::of(&self.session(&self.view(), scan_id)?.0))
    }

    pub fn questions(&self, scan_id: &str, role: Option<&str>) -> Result<QuestionList> {
        let view = self.view();
        let (s, _) = self.session(&view, scan_id)?;
        let role = role.map(parse::<Role>).transpose()?;
        let bank = self.bank_at(&view, &s.bank_ref().bank_id, Some(&s.bank_ref().version))?;
        let questions: Vec<QuestionView> = s
            .questions()
            .iter()
            .filter(|q| role.is_none_or(|r| q.role == r))
            .map(|q| QuestionView {
                qid: q.qid.clone(),
                text: bank.question(&q.qid).map(|b| b.text.clone()).unwrap_or_default(),
                fundamental: q.fundamental,
                pitfall: q.pitfall,
                role: q.role,
                stage: q.stage,
                answer: s.answer(&q.qid),
            })
            .collect();
        Ok(QuestionList {
            scan_id: scan_id.to_string(),
            role,
            answered: questions.iter().filter(|q| q.answer.is_answered()).count(),
            askable: questions.len(),
            questions,
        })
    }

    /// Record one answer. Repeating the current answer and respondent is a
    /// no-op, so the call is idempotent.
    pub fn respond(&self, scan_id: &str, body: ResponseBody) -> Result<ResponseAck> {
        let role: Role = parse(&body.role)?;
        let answer: Answer = parse(&body.answer)?;
        let _w = self.writable()?;
        let view = self.view();
        let (mut s, version) = self.session(&view, scan_id)?;
        let unchanged = s.is_open()
            && s.responses().get(&body.qid).is_some_and(|r| {
                r.role == role && r.answer == answer && r.respondent == body.respondent
            });
        if !unchanged {
            s.submit_response(&body.qid, role, answer, body.respondent.as_deref(), self.now())?;
            self.repo.put(EntityKind::Scan, scan_id, version, &s)?;
        }
        Ok(ResponseAck {
            scan_id: scan_id.to_string(),
            qid: body.qid,
            role,
            answer,
            changed: !unchanged,
        })
    }

    pub fn import(&self, scan_id: &str, export: &ScanExport) -> Result<ImportAck> {
        let _w = self.writable()?;
        let view = self.view();
        let (mut s, version) = self.session(&view, scan_id)?;
        let applied = s.import(export)?;
        self.repo.put(EntityKind::Scan, scan_id, version, &s)?;
        Ok(ImportAck {
            scan_id: scan_id.to_string(),
            applied,
            answered: s.answered_count(),
        })
    }

    pub fn export_scan(&self, scan_id: &str) -> Result<ScanExport> {
        Ok(self.session(&self.view(), scan_id)?.0.export())
    }

    pub fn close_scan(&self, scan_id: &str) -> Result<ScanProfile> {
        let _w = self.writable()?;
        let view = self.view();
        let (mut s, version) = self.session(&view, scan_id)?;
        let record = s.close(self.now())?;
        self.repo.put(EntityKind::Scan, scan_id, version, &s)?;
        Ok(score_scan_with(&record, &self.config.weights))
    }

    fn record(&self, view: &View, scan_id: &str) -> Result<ScanRecord> {
        let (s, _) = self.session(view, scan_id)?;
        if s.is_open() {
            return Err(ServiceError::ScanNotClosed(scan_id.to_string()));
        }
        Ok(ScanRecord::try_from(s)?)
    }

    pub fn profile(&self, scan_id: &str) -> Result<ScanProfile> {
        let record = self.record(&self.view(), scan_id)?;
        Ok(score_scan_with(&record, &self.config.weights))
    }

    fn latest_closed(&self, view: &View, uc_id: &str) -> Result<ScanRecord> {
        view.closed_scans_of(uc_id)?
            .into_iter()
            .max_by(|a, b| a.closed_at().cmp(&b.closed_at()).then_with(|| a.scan_id().cmp(b.scan_id())))
            .ok_or_else(|| dress_core::risk_register::RegisterError::NoScanEvidence(uc_id.to_string()).into())
    }

    // -- gap analysis -------------------------------------------------------

    pub fn put_principle_map(&self, req: NewPrincipleMap) -> Result<PrincipleMap> {
        let _w = self.writable()?;
        if let Some(org) = &req.org_id {
            self.organization(org)?;
        }
        let map_id = match req.map_id {
            Some(id) if !id.trim().is_empty() => id,
            Some(_) => return Err(ServiceError::BadRequest("map_id must not be empty".into())),
            None => self.repo.next_id("pm")?,
        };
        let map = PrincipleMap {
            map_id,
            org_id: req.org_id,
            principles: req.principles,
        };
        self.validate_map(&map)?;
        let current = self.view().snapshot().current_version(EntityKind::PrincipleMap, &map.map_id);
        self.repo.put(EntityKind::PrincipleMap, &map.map_id, current, &map)?;
        Ok(map)
    }

    /// Check a map's own shape against the default bank's questions.
    fn validate_map(&self, map: &PrincipleMap) -> Result<()> {
        let bank = self.bank_at(&self.view(), &self.config.default_bank_id, None)?;
        let asked: Vec<_> = bank
            .questions()
            .iter()
            .map(|q| dress_core::assessment::AskedQuestion {
                qid: q.qid.clone(),
                fundamental: q.fundamental,
                pitfall: q.pitfall,
                role: q.role,
                stage: q.pitfall.lifecycle_stage(),
            })
            .collect();
        map.validate(&asked)?;
        Ok(())
    }

    pub fn principle_map(&self, map_id: &str) -> Result<PrincipleMap> {
        self.view()
            .get::<PrincipleMap>(EntityKind::PrincipleMap, map_id)?
            .map(|(m, _)| m)
            .ok_or_else(|| ServiceError::not_found("principle map", map_id))
    }

    /// Gap report of a use-case's latest closed scan (or `scan_id`).
    pub fn gap(&self, uc_id: &str, map_id: &str, scan_id: Option<&str>) -> Result<GapReport> {
        self.use_case(uc_id)?;
        let map = self.principle_map(map_id)?;
        self.gap_with(uc_id, &map, scan_id)
    }

    /// Gap report against an unsaved map; nothing is written.
    pub fn gap_with(&self, uc_id: &str, map: &PrincipleMap, scan_id: Option<&str>) -> Result<GapReport> {
        let view = self.view();
        self.use_case(uc_id)?;
        self.validate_map(map)?;
        let record = match scan_id {
            Some(id) => self.record(&view, id)?,
            None => self.latest_closed(&view, uc_id)?,
        };
        let profile = score_scan_with(&record, &self.config.weights);
        Ok(gap_analysis(&profile, &record, map)?)
    }

    // -- register -----------------------------------------------------------

    fn register(&self, view: &View, uc_id: &str) -> Result<(Register, u64)> {
        Ok(view
            .get::<Register>(EntityKind::Register, uc_id)?
            .unwrap_or_else(|| (Register::new(uc_id), 0)))
    }

    fn register_of_scenario(&self, view: &View, sid: &str) -> Result<(Register, u64)> {
        for uc_id in view.snapshot().scan_keys(EntityKind::Register, |_| true) {
            let (reg, v) = self.register(view, &uc_id)?;
            if reg.scenario(sid).is_some() {
                return Ok((reg, v));
            }
        }
        Err(dress_core::risk_register::RegisterError::UnknownScenario(sid.to_string()).into())
    }

    fn register_of_mitigation(&self, view: &View, mid: &str) -> Result<(Register, u64)> {
        for uc_id in view.snapshot().scan_keys(EntityKind::Register, |_| true) {
            let (reg, v) = self.register(view, &uc_id)?;
            if reg.mitigation(mid).is_some() {
                return Ok((reg, v));
            }
        }
        Err(ServiceError::not_found("mitigation", mid))
    }

    fn save_register(&self, reg: &Register, version: u64) -> Result<()> {
        self.repo.put(EntityKind::Register, &reg.uc_id, version, reg)?;
        Ok(())
    }

    pub fn scenarios(&self, uc_id: &str) -> Result<Vec<RiskScenario>> {
        self.use_case(uc_id)?;
        let (reg, _) = self.register(&self.view(), uc_id)?;
        let mut list: Vec<RiskScenario> = reg.scenarios().cloned().collect();
        dress_core::risk_register::sort_by_priority(&mut list);
        Ok(list)
    }

    pub fn register_of(&self, uc_id: &str) -> Result<Register> {
        self.use_case(uc_id)?;
        Ok(self.register(&self.view(), uc_id)?.0)
    }

    pub fn add_scenario(&self, req: NewScenario) -> Result<RiskScenario> {
        let scenario_tags = (
            parse::<Fundamental>(&req.fundamental)?,
            parse::<Pitfall>(&req.pitfall)?,
            parse_risks(&req.risks)?,
        );
        let _w = self.writable()?;
        let view = self.view();
        self.use_case(&req.uc_id)?;
        let scans = view.closed_scans_of(&req.uc_id)?;
        let (mut reg, version) = self.register(&view, &req.uc_id)?;
        let sid = self.repo.next_id("rs")?;
        let s = RiskScenario {
            sid,
            uc_id: req.uc_id,
            title: req.title,
            narrative: req.narrative,
            fundamental: scenario_tags.0,
            pitfall: scenario_tags.1,
            risks: scenario_tags.2,
            likelihood: req.likelihood,
            severity: req.severity,
            status: ScenarioStatus::Identified,
            source_questions: req.source_questions,
        };
        let added = reg.add_scenario(s, &scans)?.clone();
        self.save_register(&reg, version)?;
        Ok(added)
    }

    pub fn prioritize(&self, uc_id: &str, threshold: Option<u8>) -> Result<Vec<RiskScenario>> {
        let _w = self.writable()?;
        self.use_case(uc_id)?;
        let (mut reg, version) = self.register(&self.view(), uc_id)?;
        let before = reg.clone();
        let list = reg.prioritize(threshold.unwrap_or(DEFAULT_PRIORITY_THRESHOLD))?;
        if reg != before {
            self.save_register(&reg, version)?;
        }
        Ok(list)
    }

    /// Read-only prioritization preview: what `prioritize` would return.
    pub fn prioritized_preview(&self, uc_id: &str, threshold: Option<u8>) -> Result<Vec<RiskScenario>> {
        self.use_case(uc_id)?;
        let (mut reg, _) = self.register(&self.view(), uc_id)?;
        Ok(reg.prioritize(threshold.unwrap_or(DEFAULT_PRIORITY_THRESHOLD))?)
    }

    pub fn heatmap(&self, uc_id: &str) -> Result<HeatmapGrid> {
        self.use_case(uc_id)?;
        Ok(self.register(&self.view(), uc_id)?.0.heatmap())
    }

    pub fn patch_scenario(&self, sid: &str, patch: ScenarioPatch) -> Result<RiskScenario> {
        let _w = self.writable()?;
        let (mut reg, version) = self.register_of_scenario(&self.view(), sid)?;
        let current = reg.scenario(sid).expect("found above").clone();
        if patch.likelihood.is_some() || patch.severity.is_some() {
            reg.reassess(
                sid,
                patch.likelihood.unwrap_or(current.likelihood),
                patch.severity.unwrap_or(current.severity),
            )?;
        }
        match patch.status {
            None => {}
            Some(s) if s == reg.scenario(sid).expect("exists").status => {}
            Some(ScenarioStatus::Closed) => {
                reg.close_scenario(sid)?;
            }
            Some(to) => {
                return Err(dress_core::risk_register::RegisterError::InvalidTransition {
                    sid: sid.to_string(),
                    from: reg.scenario(sid).expect("exists").status,
                    to,
                }
                .into())
            }
        }
        let out = reg.scenario(sid).expect("exists").clone();
        if out != current {
            self.save_register(&reg, version)?;
        }
        Ok(out)
    }

    pub fn add_mitigation(&self, req: NewMitigation) -> Result<MitigationMeasure> {
        let _w = self.writable()?;
        let (mut reg, version) = self.register_of_scenario(&self.view(), &req.sid)?;
        let scenario = reg.scenario(&req.sid).expect("found above").clone();
        let m = MitigationMeasure {
            mid: self.repo.next_id("mm")?,
            sid: req.sid,
            description: req.description,
            kind: req.kind,
            scope: req.scope,
            owner: req.owner,
            fundamental: req.fundamental.as_deref().map(parse).transpose()?.unwrap_or(scenario.fundamental),
            pitfall: req.pitfall.as_deref().map(parse).transpose()?.unwrap_or(scenario.pitfall),
            risks: match &req.risks {
                Some(r) => parse_risks(r)?,
                None => scenario.risks.clone(),
            },
            status: req.status.unwrap_or(MitigationStatus::Planned),
            due: req.due,
            feedback: Vec::new(),
        };
        let added = reg.add_mitigation(m)?.clone();
        self.save_register(&reg, version)?;
        Ok(added)
    }

    pub fn patch_mitigation(&self, mid: &str, patch: MitigationPatch) -> Result<MitigationMeasure> {
        let _w = self.writable()?;
        let (mut reg, version) = self.register_of_mitigation(&self.view(), mid)?;
        let before = reg.clone();
        let out = reg.set_mitigation_status(mid, patch.status, patch.owner.as_deref())?.clone();
        if reg != before {
            self.save_register(&reg, version)?;
        }
        Ok(out)
    }

    pub fn add_engagement(&self, req: NewEngagement) -> Result<dress_core::risk_register::EngagementRecord> {
        let _w = self.writable()?;
        self.use_case(&req.uc_id)?;
        let (mut reg, version) = self.register(&self.view(), &req.uc_id)?;
        let e = dress_core::risk_register::EngagementRecord {
            eid: self.repo.next_id("eg")?,
            uc_id: req.uc_id,
            stakeholder: req.stakeholder,
            channel: req.channel,
            concerns: req.concerns,
            resulting_changes: req.resulting_changes,
        };
        let added = reg.record_engagement(e)?.clone();
        self.save_register(&reg, version)?;
        Ok(added)
    }

    /// Review of a use-case; the organization's organization-wide use-case
    /// (titled `ORGANIZATION-WIDE`) contributes its latest scan.
    pub fn review(&self, uc_id: &str) -> Result<ReviewReport> {
        let view = self.view();
        let uc = self.use_case(uc_id)?;
        let (reg, _) = self.register(&view, uc_id)?;
        let scans = view.closed_scans_of(uc_id)?;
        let mut org_scans = Vec::new();
        if !uc.is_organization_wide() {
            for other in view.list::<UseCase>(EntityKind::UseCase)? {
                if other.org_id == uc.org_id && other.title == ORGANIZATION_WIDE {
                    org_scans.extend(view.closed_scans_of(&other.uc_id)?);
                }
            }
        }
        Ok(review_summary(&uc, &reg, &scans, &org_scans)?)
    }

    // -- insights -----------------------------------------------------------

    pub fn aggregate(&self, filter: &CohortFilter, top_k: usize) -> Result<GroupStats> {
        let facts = self.view().scan_facts(&self.config.weights)?;
        Ok(aggregate(&facts, filter, top_k))
    }

    pub fn benchmark(&self, subject: &Subject, filter: &CohortFilter) -> Result<BenchmarkReport> {
        match subject {
            Subject::Organization(id) => {
                self.organization(id)?;
            }
            Subject::UseCase(id) => {
                self.use_case(id)?;
            }
        }
        let facts = self.view().scan_facts(&self.config.weights)?;
        Ok(benchmark(&facts, subject, filter)?)
    }

    pub fn add_feedback(&self, req: NewFeedback) -> Result<FeedbackEntry> {
        let _w = self.writable()?;
        self.use_case(&req.use_case_ref)?;
        let entry = FeedbackEntry {
            fid: self.repo.next_id("fb")?,
            qid: req.qid,
            use_case_ref: req.use_case_ref,
            kind: req.kind,
            note: req.note,
            created_at: self.now(),
        };
        entry.validate()?;
        self.repo.put(EntityKind::Feedback, &entry.fid, 0, &entry)?;
        Ok(entry)
    }

    pub fn feedback_log(&self) -> Result<Vec<FeedbackEntry>> {
        Ok(self.view().list(EntityKind::Feedback)?)
    }

    pub fn candidates(&self, min_count: usize) -> Result<Vec<RefinementCandidate>> {
        Ok(refinement_candidates(&self.feedback_log()?, min_count)?)
    }

    // -- misc ---------------------------------------------------------------

    pub fn export_all(&self) -> String {
        self.view().export_all()
    }

    /// Counts of stored entities by kind, for health checks.
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let view = self.view();
        EntityKind::ALL
            .iter()
            .map(|k| (k.to_string(), view.snapshot().scan_keys(*k, |_| true).len()))
            .collect()
    }
}
