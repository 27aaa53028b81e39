//! Versioned risk-scan question banks and the intake survey templates that
//! ship with them.
//!
//! A [`QuestionBank`] is an immutable value. [`revise_question`] never edits
//! in place; it returns the next version of the bank with the revision
//! appended to its changelog, so every scan can keep pointing at the exact
//! version it was opened against.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use semver::Version;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::taxonomy::{Fundamental, Pitfall, Risk, Role, TaxonomyError};

pub const DEFAULT_BANK_DOCUMENT: &str = include_str!("../data/default-bank.json");
pub const BANK_SCHEMA_DOCUMENT: &str = include_str!("../schema/bank.schema.json");

/// Default relative deviation allowed per dimension by [`validate_balance`].
pub const DEFAULT_BALANCE_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BankError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("duplicate qid `{0}`")]
    DuplicateQid(String),
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error("bank has no active questions")]
    EmptyBank,
    #[error("unknown qid `{0}`")]
    UnknownQid(String),
    #[error("invalid revision: {0}")]
    InvalidRevision(String),
    #[error("invalid bank: {0}")]
    Invalid(String),
}

impl BankError {
    pub fn code(&self) -> &'static str {
        match self {
            BankError::Parse { .. } => "ParseError",
            BankError::DuplicateQid(_) => "DuplicateQid",
            BankError::UnknownTag(_) => "UnknownTag",
            BankError::EmptyBank => "EmptyBank",
            BankError::UnknownQid(_) => "UnknownQid",
            BankError::InvalidRevision(_) => "InvalidRevision",
            BankError::Invalid(_) => "InvalidBank",
        }
    }
}

impl From<TaxonomyError> for BankError {
    fn from(e: TaxonomyError) -> Self {
        match e {
            TaxonomyError::UnknownTag(label) => BankError::UnknownTag(label),
            other => BankError::Invalid(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum QuestionStatus {
    #[default]
    Active,
    Retired,
}

/// One risk-scan question. Tags are parsed through the taxonomy, so bank
/// files may use any documented alias ("TECH", "Misuse/Overuse").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuestion")]
pub struct Question {
    pub qid: String,
    pub text: String,
    pub fundamental: Fundamental,
    pub pitfall: Pitfall,
    pub role: Role,
    pub risks: BTreeSet<Risk>,
    pub human_rights: bool,
    pub version: u32,
    pub status: QuestionStatus,
    /// Fields not in the schema, kept only when loaded leniently.
    #[serde(flatten, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl Question {
    pub fn new(
        qid: impl Into<String>,
        text: impl Into<String>,
        fundamental: Fundamental,
        pitfall: Pitfall,
        role: Role,
    ) -> Self {
        Question {
            qid: qid.into(),
            text: text.into(),
            fundamental,
            pitfall,
            role,
            risks: BTreeSet::new(),
            human_rights: false,
            version: 1,
            status: QuestionStatus::Active,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_risks(mut self, risks: impl IntoIterator<Item = Risk>) -> Self {
        self.risks = risks.into_iter().collect();
        self.human_rights = !self.risks.is_empty();
        self
    }

    pub fn is_active(&self) -> bool {
        self.status == QuestionStatus::Active
    }

    fn same_tags(&self, other: &Question) -> bool {
        self.fundamental == other.fundamental
            && self.pitfall == other.pitfall
            && self.role == other.role
            && self.risks == other.risks
            && self.human_rights == other.human_rights
    }
}

#[derive(Deserialize)]
struct RawQuestion {
    qid: String,
    text: String,
    fundamental: String,
    pitfall: String,
    role: String,
    #[serde(default)]
    risks: Vec<String>,
    #[serde(default)]
    human_rights: Option<bool>,
    #[serde(default)]
    version: Option<u32>,
    #[serde(default)]
    status: QuestionStatus,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl TryFrom<RawQuestion> for Question {
    type Error = BankError;

    fn try_from(raw: RawQuestion) -> Result<Self, BankError> {
        if raw.qid.trim().is_empty() {
            return Err(BankError::Invalid("question with empty qid".into()));
        }
        if raw.text.trim().is_empty() {
            return Err(BankError::Invalid(format!("question `{}` has empty text", raw.qid)));
        }
        let mut risks = BTreeSet::new();
        for label in &raw.risks {
            if !risks.insert(label.parse::<Risk>()?) {
                return Err(BankError::Invalid(format!(
                    "question `{}` lists risk `{label}` twice",
                    raw.qid
                )));
            }
        }
        let version = raw.version.unwrap_or(1);
        if version == 0 {
            return Err(BankError::Invalid(format!("question `{}` has version 0", raw.qid)));
        }
        Ok(Question {
            fundamental: raw.fundamental.parse()?,
            pitfall: raw.pitfall.parse()?,
            role: raw.role.parse()?,
            human_rights: raw.human_rights.unwrap_or(!risks.is_empty()),
            risks,
            version,
            status: raw.status,
            qid: raw.qid,
            text: raw.text,
            extra: raw.extra,
        })
    }
}

// ---------------------------------------------------------------------------
// Survey templates

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SurveyKind {
    Organizational,
    OrganizationalMaturity,
    UseCaseScoping,
}

impl SurveyKind {
    pub const ALL: &'static [SurveyKind] = &[
        SurveyKind::Organizational,
        SurveyKind::OrganizationalMaturity,
        SurveyKind::UseCaseScoping,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AnswerSchema {
    Text,
    Integer,
    Boolean,
    List,
    Choice { options: Vec<String> },
}

impl AnswerSchema {
    fn accepts(&self, value: &Value) -> bool {
        match (self, value) {
            (AnswerSchema::Text, Value::String(s)) => !s.trim().is_empty(),
            (AnswerSchema::Integer, Value::Number(n)) => n.is_i64() || n.is_u64(),
            (AnswerSchema::Boolean, Value::Bool(_)) => true,
            (AnswerSchema::List, Value::Array(items)) => items.iter().all(Value::is_string),
            (AnswerSchema::Choice { options }, Value::String(s)) => options.iter().any(|o| o == s),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyItem {
    pub key: String,
    pub prompt: String,
    pub answer_schema: AnswerSchema,
    #[serde(default)]
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyTemplate {
    pub kind: SurveyKind,
    pub items: Vec<SurveyItem>,
    #[serde(flatten, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

/// Answers to one survey, keyed by item key.
pub type SurveyResponses = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("survey response does not match template at `{0}`")]
pub struct TemplateMismatch(pub String);

impl SurveyTemplate {
    /// Check responses against the template: every required item present,
    /// every value of the declared shape, no keys the template lacks.
    pub fn check(&self, responses: &SurveyResponses) -> Result<(), TemplateMismatch> {
        for item in &self.items {
            match responses.get(&item.key) {
                None | Some(Value::Null) if item.required => {
                    return Err(TemplateMismatch(item.key.clone()))
                }
                None | Some(Value::Null) => {}
                Some(v) if !item.answer_schema.accepts(v) => {
                    return Err(TemplateMismatch(item.key.clone()))
                }
                Some(_) => {}
            }
        }
        if let Some(unknown) = responses
            .keys()
            .find(|k| !self.items.iter().any(|i| &i.key == *k))
        {
            return Err(TemplateMismatch(unknown.clone()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Revisions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RevisionKind {
    Add,
    Remove,
    Rephrase,
    Retag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub kind: RevisionKind,
    pub qid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<Question>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Question>,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_use_case: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<DateTime<Utc>>,
}

impl Revision {
    pub fn add(question: Question, rationale: impl Into<String>) -> Self {
        Revision {
            kind: RevisionKind::Add,
            qid: question.qid.clone(),
            before: None,
            after: Some(question),
            rationale: rationale.into(),
            source_use_case: None,
            at: None,
        }
    }

    pub fn remove(bank: &QuestionBank, qid: &str, rationale: impl Into<String>) -> Result<Self, BankError> {
        let current = bank.active(qid)?.clone();
        Ok(Revision {
            kind: RevisionKind::Remove,
            qid: qid.to_string(),
            before: Some(current),
            after: None,
            rationale: rationale.into(),
            source_use_case: None,
            at: None,
        })
    }

    pub fn rephrase(
        bank: &QuestionBank,
        qid: &str,
        text: impl Into<String>,
        rationale: impl Into<String>,
    ) -> Result<Self, BankError> {
        let current = bank.active(qid)?.clone();
        let mut after = current.clone();
        after.text = text.into();
        Ok(Revision {
            kind: RevisionKind::Rephrase,
            qid: qid.to_string(),
            before: Some(current),
            after: Some(after),
            rationale: rationale.into(),
            source_use_case: None,
            at: None,
        })
    }

    pub fn retag(
        bank: &QuestionBank,
        qid: &str,
        fundamental: Fundamental,
        pitfall: Pitfall,
        role: Role,
        risks: Option<BTreeSet<Risk>>,
        rationale: impl Into<String>,
    ) -> Result<Self, BankError> {
        let current = bank.active(qid)?.clone();
        let mut after = current.clone();
        after.fundamental = fundamental;
        after.pitfall = pitfall;
        after.role = role;
        if let Some(risks) = risks {
            after.human_rights = !risks.is_empty();
            after.risks = risks;
        }
        Ok(Revision {
            kind: RevisionKind::Retag,
            qid: qid.to_string(),
            before: Some(current),
            after: Some(after),
            rationale: rationale.into(),
            source_use_case: None,
            at: None,
        })
    }

    pub fn from_use_case(mut self, uc_id: impl Into<String>) -> Self {
        self.source_use_case = Some(uc_id.into());
        self
    }

    fn check_shape(&self) -> Result<(), BankError> {
        let bad = |m: &str| Err(BankError::InvalidRevision(m.to_string()));
        if self.rationale.trim().is_empty() {
            return bad("rationale must not be empty");
        }
        let (needs_before, needs_after) = match self.kind {
            RevisionKind::Add => (false, true),
            RevisionKind::Remove => (true, false),
            RevisionKind::Rephrase | RevisionKind::Retag => (true, true),
        };
        if needs_before && self.before.is_none() {
            return bad("missing `before` snapshot");
        }
        if needs_after && self.after.is_none() {
            return bad("missing `after` snapshot");
        }
        for snap in [&self.before, &self.after].into_iter().flatten() {
            if snap.qid != self.qid {
                return bad("snapshot qid differs from revision qid");
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Bank

/// Identifies one immutable bank version.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BankRef {
    pub bank_id: String,
    pub version: Version,
}

impl fmt::Display for BankRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.bank_id, self.version)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBank")]
pub struct QuestionBank {
    bank_id: String,
    version: Version,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created_at: Option<DateTime<Utc>>,
    questions: Vec<Question>,
    surveys: Vec<SurveyTemplate>,
    changelog: Vec<Revision>,
    #[serde(flatten, skip_serializing_if = "BTreeMap::is_empty")]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct RawBank {
    bank_id: String,
    version: String,
    #[serde(default)]
    created_at: Option<DateTime<Utc>>,
    questions: Vec<Question>,
    #[serde(default)]
    surveys: Vec<SurveyTemplate>,
    #[serde(default)]
    changelog: Vec<Revision>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl TryFrom<RawBank> for QuestionBank {
    type Error = BankError;

    fn try_from(raw: RawBank) -> Result<Self, BankError> {
        if raw.bank_id.trim().is_empty() {
            return Err(BankError::Invalid("empty bank_id".into()));
        }
        let version = Version::parse(&raw.version)
            .map_err(|e| BankError::Invalid(format!("version `{}`: {e}", raw.version)))?;
        QuestionBank::assemble(
            raw.bank_id,
            version,
            raw.created_at,
            raw.questions,
            raw.surveys,
            raw.changelog,
            raw.extra,
        )
    }
}

/// How [`load_bank`] treats fields the schema does not define.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Unknown fields are an error.
    #[default]
    Strict,
    /// Unknown fields are kept and written back out unchanged.
    Lenient,
}

/// Parse a bank document and check every bank invariant.
pub fn load_bank(source: &str, mode: LoadMode) -> Result<QuestionBank, BankError> {
    let bank: QuestionBank = serde_json::from_str(source).map_err(|e| {
        // Errors raised by our own TryFrom impls come back stringified.
        let reason = e.to_string();
        let reason = reason.split(" at line ").next().unwrap_or(&reason).to_string();
        classify_parse_error(e.line(), reason)
    })?;
    if mode == LoadMode::Strict {
        if let Some(field) = bank.unknown_fields().into_iter().next() {
            return Err(BankError::Parse {
                line: line_of_field(source, &field),
                reason: format!("unknown field `{field}`"),
            });
        }
    }
    Ok(bank)
}

fn classify_parse_error(line: usize, reason: String) -> BankError {
    for (prefix, build) in [
        ("duplicate qid `", BankError::DuplicateQid as fn(String) -> BankError),
        ("unknown tag `", BankError::UnknownTag as fn(String) -> BankError),
    ] {
        if let Some(rest) = reason.strip_prefix(prefix) {
            if let Some(end) = rest.rfind('`') {
                return build(rest[..end].to_string());
            }
        }
    }
    BankError::Parse { line, reason }
}

fn line_of_field(source: &str, field: &str) -> usize {
    let needle = format!("\"{field}\"");
    source
        .lines()
        .position(|l| l.contains(&needle))
        .map(|i| i + 1)
        .unwrap_or(0)
}

/// The bank shipped with the build.
pub fn default_bank() -> QuestionBank {
    load_bank(DEFAULT_BANK_DOCUMENT, LoadMode::Strict).expect("shipped bank is valid")
}

impl QuestionBank {
    pub fn new(
        bank_id: impl Into<String>,
        version: Version,
        questions: Vec<Question>,
        surveys: Vec<SurveyTemplate>,
    ) -> Result<Self, BankError> {
        Self::assemble(
            bank_id.into(),
            version,
            None,
            questions,
            surveys,
            Vec::new(),
            BTreeMap::new(),
        )
    }

    fn assemble(
        bank_id: String,
        version: Version,
        created_at: Option<DateTime<Utc>>,
        questions: Vec<Question>,
        surveys: Vec<SurveyTemplate>,
        changelog: Vec<Revision>,
        extra: BTreeMap<String, Value>,
    ) -> Result<Self, BankError> {
        let mut seen = HashSet::new();
        for q in &questions {
            if !seen.insert(q.qid.as_str()) {
                return Err(BankError::DuplicateQid(q.qid.clone()));
            }
        }
        let mut kinds = HashSet::new();
        for s in &surveys {
            if !kinds.insert(s.kind) {
                return Err(BankError::Invalid(format!("survey {:?} defined twice", s.kind)));
            }
            let mut keys = HashSet::new();
            for item in &s.items {
                if !keys.insert(item.key.as_str()) {
                    return Err(BankError::Invalid(format!(
                        "survey {:?} repeats item `{}`",
                        s.kind, item.key
                    )));
                }
            }
        }
        for rev in &changelog {
            rev.check_shape()?;
        }
        Ok(QuestionBank {
            bank_id,
            version,
            created_at,
            questions,
            surveys,
            changelog,
            extra,
        })
    }

    pub fn bank_id(&self) -> &str {
        &self.bank_id
    }

    pub fn version(&self) -> &Version {
        &self.version
    }

    pub fn bank_ref(&self) -> BankRef {
        BankRef {
            bank_id: self.bank_id.clone(),
            version: self.version.clone(),
        }
    }

    pub fn created_at(&self) -> Option<DateTime<Utc>> {
        self.created_at
    }

    /// All questions in bank order, retired ones included.
    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn active_questions(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter().filter(|q| q.is_active())
    }

    pub fn question(&self, qid: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.qid == qid)
    }

    fn active(&self, qid: &str) -> Result<&Question, BankError> {
        match self.question(qid) {
            Some(q) if q.is_active() => Ok(q),
            _ => Err(BankError::UnknownQid(qid.to_string())),
        }
    }

    pub fn surveys(&self) -> &[SurveyTemplate] {
        &self.surveys
    }

    pub fn survey(&self, kind: SurveyKind) -> Option<&SurveyTemplate> {
        self.surveys.iter().find(|s| s.kind == kind)
    }

    pub fn changelog(&self) -> &[Revision] {
        &self.changelog
    }

    pub fn to_document(&self) -> String {
        crate::doc::to_canonical(self).expect("bank serializes")
    }

    fn unknown_fields(&self) -> Vec<String> {
        let mut out: Vec<String> = self.extra.keys().cloned().collect();
        for q in &self.questions {
            out.extend(q.extra.keys().map(|k| k.to_string()));
        }
        for s in &self.surveys {
            out.extend(s.extra.keys().cloned());
        }
        out
    }

    /// Balance within tolerance, every (fundamental, pitfall) pair and every
    /// role covered, and all three intake surveys present.
    pub fn release_readiness(&self, tolerance: f64) -> Result<BalanceReport, Box<BalanceReport>> {
        let report = match validate_balance(self, tolerance) {
            Ok(r) => r,
            Err(_) => BalanceReport::empty(tolerance),
        };
        let mut report = report;
        for kind in SurveyKind::ALL {
            if self.survey(*kind).is_none() {
                report.coverage_gaps.push(format!("survey {kind:?} missing"));
            }
        }
        if report.pass && report.coverage_gaps.is_empty() {
            Ok(report)
        } else {
            Err(Box::new(report))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub active_questions: usize,
    pub counts_by_fundamental: BTreeMap<Fundamental, usize>,
    pub counts_by_pitfall: BTreeMap<Pitfall, usize>,
    pub counts_by_role: BTreeMap<Role, usize>,
    pub deviation_by_dimension: BTreeMap<String, f64>,
    pub max_relative_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Missing (fundamental, pitfall) pairs, roles without questions and
    /// missing surveys. Non-empty means the bank is not release-grade.
    pub coverage_gaps: Vec<String>,
}

impl BalanceReport {
    fn empty(tolerance: f64) -> Self {
        BalanceReport {
            active_questions: 0,
            counts_by_fundamental: Fundamental::ALL.iter().map(|&f| (f, 0)).collect(),
            counts_by_pitfall: Pitfall::ALL.iter().map(|&p| (p, 0)).collect(),
            counts_by_role: Role::ALL.iter().map(|&r| (r, 0)).collect(),
            deviation_by_dimension: BTreeMap::new(),
            max_relative_deviation: 1.0,
            tolerance,
            pass: false,
            coverage_gaps: vec!["bank has no active questions".into()],
        }
    }

    pub fn release_grade(&self) -> bool {
        self.pass && self.coverage_gaps.is_empty()
    }
}

fn max_deviation<K>(counts: &BTreeMap<K, usize>, total: usize) -> f64 {
    let share = total as f64 / counts.len() as f64;
    counts
        .values()
        .map(|&c| (c as f64 - share).abs() / share)
        .fold(0.0, f64::max)
}

/// Count active questions per fundamental, pitfall and role and compare each
/// dimension against a uniform split.
pub fn validate_balance(bank: &QuestionBank, tolerance: f64) -> Result<BalanceReport, BankError> {
    let mut by_f: BTreeMap<Fundamental, usize> = Fundamental::ALL.iter().map(|&f| (f, 0)).collect();
    let mut by_p: BTreeMap<Pitfall, usize> = Pitfall::ALL.iter().map(|&p| (p, 0)).collect();
    let mut by_r: BTreeMap<Role, usize> = Role::ALL.iter().map(|&r| (r, 0)).collect();
    let mut pairs = BTreeSet::new();
    let mut total = 0;
    for q in bank.active_questions() {
        *by_f.get_mut(&q.fundamental).unwrap() += 1;
        *by_p.get_mut(&q.pitfall).unwrap() += 1;
        *by_r.get_mut(&q.role).unwrap() += 1;
        pairs.insert((q.fundamental, q.pitfall));
        total += 1;
    }
    if total == 0 {
        return Err(BankError::EmptyBank);
    }

    let mut deviation = BTreeMap::new();
    deviation.insert("fundamental".to_string(), max_deviation(&by_f, total));
    deviation.insert("pitfall".to_string(), max_deviation(&by_p, total));
    deviation.insert("role".to_string(), max_deviation(&by_r, total));
    let max = deviation.values().copied().fold(0.0, f64::max);

    let mut gaps = Vec::new();
    for &f in Fundamental::ALL {
        for &p in Pitfall::ALL {
            if !pairs.contains(&(f, p)) {
                gaps.push(format!("no active question for ({f}, {p})"));
            }
        }
    }
    for (role, n) in &by_r {
        if *n == 0 {
            gaps.push(format!("no active question for role {role}"));
        }
    }

    Ok(BalanceReport {
        active_questions: total,
        counts_by_fundamental: by_f,
        counts_by_pitfall: by_p,
        counts_by_role: by_r,
        deviation_by_dimension: deviation,
        max_relative_deviation: max,
        tolerance,
        pass: max <= tolerance + 1e-12,
        coverage_gaps: gaps,
    })
}

/// Active questions for one role, in bank order.
pub fn questions_for_role(bank: &QuestionBank, role: Role) -> Vec<&Question> {
    bank.active_questions().filter(|q| q.role == role).collect()
}

/// Apply one revision and return the next bank version (minor bump).
pub fn revise_question(
    bank: &QuestionBank,
    rev: Revision,
    now: DateTime<Utc>,
) -> Result<QuestionBank, BankError> {
    rev.check_shape()?;
    let mut next = bank.clone();
    let invalid = |m: String| Err(BankError::InvalidRevision(m));

    match rev.kind {
        RevisionKind::Add => {
            if bank.question(&rev.qid).is_some() {
                return invalid(format!("qid `{}` already used in this bank lineage", rev.qid));
            }
            let mut q = rev.after.clone().expect("checked");
            if q.text.trim().is_empty() {
                return invalid("added question has empty text".into());
            }
            q.version = 1;
            q.status = QuestionStatus::Active;
            next.questions.push(q);
        }
        RevisionKind::Remove | RevisionKind::Rephrase | RevisionKind::Retag => {
            let current = bank.active(&rev.qid)?;
            let before = rev.before.as_ref().expect("checked");
            if before != current {
                return invalid(format!("`before` snapshot of `{}` is stale", rev.qid));
            }
            let idx = bank.questions.iter().position(|q| q.qid == rev.qid).expect("exists");
            let slot = &mut next.questions[idx];
            match rev.kind {
                RevisionKind::Remove => slot.status = QuestionStatus::Retired,
                RevisionKind::Rephrase => {
                    let after = rev.after.as_ref().expect("checked");
                    if !after.same_tags(current) {
                        return invalid("rephrase must not change tags".into());
                    }
                    if after.text.trim().is_empty() || after.text == current.text {
                        return invalid("rephrase needs new, non-empty text".into());
                    }
                    slot.text = after.text.clone();
                    slot.version += 1;
                }
                RevisionKind::Retag => {
                    let after = rev.after.as_ref().expect("checked");
                    if after.text != current.text {
                        return invalid("retag must not change text".into());
                    }
                    if after.same_tags(current) {
                        return invalid("retag does not change any tag".into());
                    }
                    slot.fundamental = after.fundamental;
                    slot.pitfall = after.pitfall;
                    slot.role = after.role;
                    slot.risks = after.risks.clone();
                    slot.human_rights = after.human_rights;
                    slot.version += 1;
                }
                RevisionKind::Add => unreachable!(),
            }
        }
    }

    let mut logged = rev;
    logged.after = match logged.kind {
        RevisionKind::Remove => None,
        _ => next.question(&logged.qid).cloned(),
    };
    logged.at.get_or_insert(now);
    next.changelog.push(logged);
    next.version = Version::new(bank.version.major, bank.version.minor + 1, 0);
    next.created_at = Some(now);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap()
    }

    fn bank_with(questions: Vec<Question>) -> QuestionBank {
        QuestionBank::new("t", Version::new(1, 0, 0), questions, Vec::new()).unwrap()
    }

    /// 160 questions laid out uniformly: 40 per fundamental and pitfall,
    /// 20 per role.
    fn uniform(f_counts: [usize; 4]) -> QuestionBank {
        let mut qs = Vec::new();
        let mut n = 0;
        for (fi, &count) in f_counts.iter().enumerate() {
            for _ in 0..count {
                qs.push(Question::new(
                    format!("Q{n:03}"),
                    "text",
                    Fundamental::ALL[fi],
                    Pitfall::ALL[n % 4],
                    Role::ALL[n % 8],
                ));
                n += 1;
            }
        }
        bank_with(qs)
    }

    #[test]
    fn perfectly_uniform_bank_passes() {
        let r = validate_balance(&uniform([40, 40, 40, 40]), 0.10).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_relative_deviation, 0.0);
        assert_eq!(r.counts_by_role[&Role::HR], 20);
    }

    #[test]
    fn governance_heavy_bank_fails() {
        let r = validate_balance(&uniform([35, 55, 35, 35]), 0.10).unwrap();
        assert!(!r.pass);
        assert!((r.deviation_by_dimension["fundamental"] - 0.375).abs() < 1e-12);
        assert!((r.max_relative_deviation - 0.375).abs() < 1e-12);
    }

    #[test]
    fn missing_fundamental_is_reported() {
        let r = validate_balance(&uniform([54, 53, 0, 53]), 0.10).unwrap();
        assert!(!r.pass);
        assert!(!r.release_grade());
        assert!(r.coverage_gaps.iter().any(|g| g.contains("Explainability")));
    }

    #[test]
    fn empty_bank() {
        assert_eq!(validate_balance(&bank_with(vec![]), 0.1), Err(BankError::EmptyBank));
        let mut q = Question::new("A", "t", Fundamental::Governance, Pitfall::DataBias, Role::HR);
        q.status = QuestionStatus::Retired;
        assert_eq!(validate_balance(&bank_with(vec![q]), 0.1), Err(BankError::EmptyBank));
    }

    #[test]
    fn duplicate_qid_rejected() {
        let doc = r#"{"bank_id":"b","version":"1.0.0","surveys":[],"questions":[
            {"qid":"GOV-001","text":"a","fundamental":"Governance","pitfall":"Data bias","role":"TECH"},
            {"qid":"GOV-001","text":"b","fundamental":"Governance","pitfall":"Data bias","role":"TECH"}]}"#;
        assert_eq!(load_bank(doc, LoadMode::Strict), Err(BankError::DuplicateQid("GOV-001".into())));
    }

    #[test]
    fn unknown_pitfall_rejected() {
        let doc = r#"{"bank_id":"b","version":"1.0.0","surveys":[],"questions":[
            {"qid":"GOV-001","text":"a","fundamental":"Governance","pitfall":"Fairness","role":"TECH"}]}"#;
        assert_eq!(load_bank(doc, LoadMode::Strict), Err(BankError::UnknownTag("Fairness".into())));
    }

    #[test]
    fn syntax_errors_carry_line() {
        let doc = "{\n\"bank_id\": \"b\",\n\"version\": \"1.0.0\",,\n}";
        match load_bank(doc, LoadMode::Strict) {
            Err(BankError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strict_rejects_and_lenient_preserves_unknown_fields() {
        let doc = r#"{"bank_id":"b","version":"1.0.0","surveys":[],"owner":"x",
            "questions":[{"qid":"A","text":"a","fundamental":"Governance","pitfall":"DataBias","role":"HR","note":"keep"}]}"#;
        assert!(matches!(load_bank(doc, LoadMode::Strict), Err(BankError::Parse { .. })));
        let bank = load_bank(doc, LoadMode::Lenient).unwrap();
        let out = bank.to_document();
        assert!(out.contains("\"owner\":\"x\""));
        assert!(out.contains("\"note\":\"keep\""));
        assert_eq!(load_bank(&out, LoadMode::Lenient).unwrap(), bank);
    }

    #[test]
    fn retired_questions_are_not_asked() {
        let bank = bank_with(vec![
            Question::new("A", "a", Fundamental::Governance, Pitfall::DataBias, Role::HR),
            Question::new("B", "b", Fundamental::Governance, Pitfall::DataBias, Role::HR),
        ]);
        let rev = Revision::remove(&bank, "A", "overlap").unwrap();
        let next = revise_question(&bank, rev, now()).unwrap();
        let qids: Vec<_> = questions_for_role(&next, Role::HR).iter().map(|q| q.qid.clone()).collect();
        assert_eq!(qids, vec!["B"]);
        assert!(questions_for_role(&next, Role::Legal).is_empty());
        // the parent version is untouched
        assert_eq!(questions_for_role(&bank, Role::HR).len(), 2);
        assert_eq!(next.version(), &Version::new(1, 1, 0));
    }

    #[test]
    fn revision_shape_rules() {
        let bank = bank_with(vec![Question::new(
            "A",
            "a",
            Fundamental::Governance,
            Pitfall::DataBias,
            Role::HR,
        )]);
        let mut rev = Revision::remove(&bank, "A", "x").unwrap();
        rev.rationale = " ".into();
        assert!(matches!(revise_question(&bank, rev, now()), Err(BankError::InvalidRevision(_))));

        let mut rev = Revision::remove(&bank, "A", "x").unwrap();
        rev.before = None;
        assert!(matches!(revise_question(&bank, rev, now()), Err(BankError::InvalidRevision(_))));

        assert_eq!(
            Revision::remove(&bank, "Z", "x").unwrap_err(),
            BankError::UnknownQid("Z".into())
        );

        let dup = Question::new("A", "again", Fundamental::Governance, Pitfall::DataBias, Role::HR);
        assert!(matches!(
            revise_question(&bank, Revision::add(dup, "x"), now()),
            Err(BankError::InvalidRevision(_))
        ));

        let mut stale = Revision::rephrase(&bank, "A", "new", "x").unwrap();
        stale.before.as_mut().unwrap().text = "old".into();
        assert!(matches!(revise_question(&bank, stale, now()), Err(BankError::InvalidRevision(_))));

        let removed = revise_question(&bank, Revision::remove(&bank, "A", "x").unwrap(), now()).unwrap();
        assert_eq!(Revision::rephrase(&removed, "A", "b", "x").unwrap_err(), BankError::UnknownQid("A".into()));
    }

    #[test]
    fn retag_bumps_version_and_keeps_text() {
        let bank = bank_with(vec![Question::new(
            "A",
            "a",
            Fundamental::Governance,
            Pitfall::DataBias,
            Role::HR,
        )]);
        let rev = Revision::retag(
            &bank,
            "A",
            Fundamental::Accountability,
            Pitfall::DataBias,
            Role::Legal,
            None,
            "belongs with legal",
        )
        .unwrap();
        let next = revise_question(&bank, rev, now()).unwrap();
        let q = next.question("A").unwrap();
        assert_eq!((q.version, q.role, q.fundamental), (2, Role::Legal, Fundamental::Accountability));
        assert_eq!(q.text, "a");
        assert_eq!(next.changelog().len(), 1);
    }

    #[test]
    fn template_checks() {
        let bank = default_bank();
        let t = bank.survey(SurveyKind::UseCaseScoping).unwrap();
        let mut resp = SurveyResponses::new();
        resp.insert("summary_of_challenges".into(), "profiling".into());
        assert_eq!(t.check(&resp), Err(TemplateMismatch("technical_specification".into())));
        resp.insert("technical_specification".into(), "neural network, 32 features".into());
        assert_eq!(t.check(&resp), Ok(()));
        resp.insert("personal_data".into(), "yes".into());
        assert_eq!(t.check(&resp), Err(TemplateMismatch("personal_data".into())));
        resp.insert("personal_data".into(), true.into());
        resp.insert("colour".into(), "red".into());
        assert_eq!(t.check(&resp), Err(TemplateMismatch("colour".into())));
    }
}
