mod common;

use std::collections::BTreeSet;

use chrono::{TimeZone, Utc};
use serde_json::{json, Value};

use dress_core::assessment::AssessmentError;
use dress_core::insights::InsightsError;
use dress_core::question_bank::BankError;
use dress_core::risk_register::{RegisterError, ScenarioStatus};
use dress_core::scoring::ScoringError;
use dress_core::taxonomy::TaxonomyError;
use dress_core::{Answer, Role};
use dress_server::{Service, ServiceConfig, ServiceError};
use dress_store::{EntityKind, Repository, StoreError};

use common::*;

fn s() -> String {
    "x".to_string()
}

/// One instance of every error the service can return, with its
/// documented (status, code).
fn table() -> Vec<(ServiceError, u16, &'static str)> {
    use ServiceError as E;
    vec![
        (E::Taxonomy(TaxonomyError::UnknownTag(s())), 422, "InvalidTag"),
        (E::Taxonomy(TaxonomyError::AmbiguousTag { alias: s(), key: s(), existing: s() }), 422, "AmbiguousTag"),
        (E::Taxonomy(TaxonomyError::Malformed(s())), 422, "TaxonomyMalformed"),
        (E::Bank(BankError::Parse { line: 3, reason: s() }), 400, "ParseError"),
        (E::Bank(BankError::DuplicateQid(s())), 422, "DuplicateQid"),
        (E::Bank(BankError::UnknownTag(s())), 422, "UnknownTag"),
        (E::Bank(BankError::EmptyBank), 422, "EmptyBank"),
        (E::Bank(BankError::UnknownQid(s())), 422, "UnknownQid"),
        (E::Bank(BankError::InvalidRevision(s())), 422, "InvalidRevision"),
        (E::Bank(BankError::Invalid(s())), 422, "InvalidBank"),
        (E::Assessment(AssessmentError::UnknownOrganization(s())), 404, "UnknownOrganization"),
        (E::Assessment(AssessmentError::UnknownUseCase(s())), 404, "UnknownUseCase"),
        (E::Assessment(AssessmentError::TemplateMismatch(s())), 422, "TemplateMismatch"),
        (E::Assessment(AssessmentError::BankNotReleaseGrade(vec![s()])), 422, "BankNotReleaseGrade"),
        (E::Assessment(AssessmentError::ScanAlreadyOpen(s())), 409, "ScanAlreadyOpen"),
        (E::Assessment(AssessmentError::SessionClosed), 409, "SessionClosed"),
        (E::Assessment(AssessmentError::RoleMismatch { qid: s(), role: Role::HR }), 422, "RoleMismatch"),
        (E::Assessment(AssessmentError::UnknownQuestion(s())), 422, "UnknownQuestion"),
        (E::Assessment(AssessmentError::InvalidAnswer(Answer::Unanswered)), 422, "InvalidAnswer"),
        (E::Assessment(AssessmentError::ImportMismatch(s())), 422, "ImportMismatch"),
        (E::Assessment(AssessmentError::InvalidField(s())), 422, "InvalidField"),
        (E::Scoring(ScoringError::UnmappedPrinciple(s())), 422, "UnmappedPrinciple"),
        (E::Scoring(ScoringError::UnknownQid(s())), 422, "UnknownQid"),
        (E::Scoring(ScoringError::DuplicatePrinciple(s())), 422, "DuplicatePrinciple"),
        (E::Scoring(ScoringError::LineageMismatch(s())), 422, "LineageMismatch"),
        (E::Scoring(ScoringError::ScanMismatch { profile: s(), record: s() }), 422, "ScanMismatch"),
        (E::Scoring(ScoringError::InvalidWeights(s())), 422, "InvalidWeights"),
        (E::Register(RegisterError::NoScanEvidence(s())), 422, "NoScanEvidence"),
        (E::Register(RegisterError::InvalidTag(s())), 422, "InvalidTag"),
        (E::Register(RegisterError::UnknownScenario(s())), 404, "UnknownScenario"),
        (E::Register(RegisterError::ScenarioNotPrioritized(s())), 422, "ScenarioNotPrioritized"),
        (E::Register(RegisterError::UnknownReference(s())), 422, "UnknownReference"),
        (E::Register(RegisterError::DuplicateId(s())), 409, "DuplicateId"),
        (
            E::Register(RegisterError::InvalidTransition { sid: s(), from: ScenarioStatus::Closed, to: ScenarioStatus::Mitigating }),
            422,
            "InvalidTransition",
        ),
        (E::Register(RegisterError::OpenMitigations(s())), 422, "OpenMitigations"),
        (E::Register(RegisterError::InvalidThreshold(0)), 422, "InvalidThreshold"),
        (E::Register(RegisterError::InvalidField(s())), 422, "InvalidField"),
        (E::Insights(InsightsError::NoSubjectScan(s())), 422, "NoSubjectScan"),
        (E::Insights(InsightsError::InvalidArgument(s())), 422, "InvalidArgument"),
        (E::Insights(InsightsError::InvalidFeedback(s())), 422, "InvalidFeedback"),
        (E::Store(StoreError::VersionConflict { current: 2 }), 409, "VersionConflict"),
        (E::Store(StoreError::PayloadInvalid(s())), 422, "PayloadInvalid"),
        (E::Store(StoreError::NotFound { kind: EntityKind::Scan, id: s(), version: None }), 404, "NotFound"),
        (E::Store(StoreError::Locked(s())), 409, "Locked"),
        (E::Store(StoreError::ReadOnly), 503, "ReadOnly"),
        (E::Store(StoreError::Corrupt(s())), 500, "Corrupt"),
        (E::Store(StoreError::Io(std::io::Error::other("disk"))), 500, "Io"),
        (E::BadRequest(s()), 400, "BadRequest"),
        (E::not_found("scan", "x"), 404, "NotFound"),
        (E::ScanNotClosed(s()), 409, "ScanNotClosed"),
        (E::AlreadyExists(s()), 409, "AlreadyExists"),
        (E::Unauthorized, 401, "Unauthorized"),
        (E::RoleNotPermitted(s()), 403, "RoleNotPermitted"),
        (E::Internal(s()), 500, "Internal"),
    ]
}

#[test]
fn every_error_has_one_documented_mapping() {
    let doc = openapi();
    let documented: BTreeSet<String> = doc["components"]["responses"]
        .as_object()
        .unwrap()
        .keys()
        .map(|k| k.trim_start_matches('E').to_string())
        .collect();
    let mut codes = BTreeSet::new();
    for (err, status, code) in table() {
        assert_eq!((err.http_status(), err.code()), (status, code), "{err:?}");
        assert!(documented.contains(&status.to_string()), "status {status} undocumented");
        let body = err.body();
        assert_eq!((body.status, body.code.as_str()), (status, code));
        assert!(!body.message.is_empty());
        codes.insert(code);
    }
    // each documented status class is reachable
    let statuses: BTreeSet<String> = table().iter().map(|(_, s, _)| s.to_string()).collect();
    assert_eq!(statuses, documented);
    assert!(codes.len() > 40);
}

/// The mapping table, exercised end to end through the router.
#[tokio::test]
async fn errors_over_http() {
    let app = app();
    let (org, uc) = org_and_use_case(&app, "Development").await;
    let scan = open(&app, &uc).await;
    let qs = get(&app, &format!("/scans/{scan}/questions?role=Technical")).await;
    let qid = qs.json["questions"][0]["qid"].as_str().unwrap().to_string();
    let code = |r: &Reply| (r.status, r.json["code"].as_str().unwrap_or("").to_string());
    let is = |r: Reply, status: u16, c: &str| assert_eq!(code(&r), (status, c.to_string()), "{}", r.raw);

    // 400
    is(call(&app, "POST", "/orgs", None, Some("{not json")).await, 400, "BadRequest");
    is(send(&app, "POST", "/orgs", json!({"name": "a"})).await, 400, "BadRequest");
    is(get(&app, "/insights/aggregate?size_band=Huge").await, 400, "BadRequest");
    is(call(&app, "POST", "/banks", None, Some("{\"bank_id\": }")).await, 400, "ParseError");
    // 404
    is(get(&app, "/scans/nope/profile").await, 404, "NotFound");
    is(
        send(&app, "POST", "/use-cases", json!({"org_id": "org-9", "title": "t", "lifecycle_phase": "Idea"})).await,
        404,
        "UnknownOrganization",
    );
    is(send(&app, "POST", "/scans", json!({"uc_id": "uc-9"})).await, 404, "UnknownUseCase");
    is(send(&app, "PATCH", "/scenarios/rs-9", json!({"likelihood": 1})).await, 404, "UnknownScenario");
    // 409
    is(send(&app, "POST", "/scans", json!({"uc_id": uc})).await, 409, "ScanAlreadyOpen");
    is(get(&app, &format!("/scans/{scan}/profile")).await, 409, "ScanNotClosed");
    assert_eq!(send(&app, "POST", &format!("/scans/{scan}/close"), json!({})).await.status, 200);
    is(send(&app, "POST", &format!("/scans/{scan}/close"), json!({})).await, 409, "SessionClosed");
    is(
        send(&app, "PUT", &format!("/scans/{scan}/responses"), json!({"qid": qid, "role": "Technical", "answer": "yes"})).await,
        409,
        "SessionClosed",
    );
    let bank = get(&app, "/banks/dress-default").await.json;
    let mut changed = bank.clone();
    changed["questions"][0]["text"] = json!("Changed without a version bump?");
    is(send(&app, "POST", "/banks", changed).await, 409, "AlreadyExists");
    // 422
    let scan2 = open(&app, &uc).await;
    is(
        send(&app, "PUT", &format!("/scans/{scan2}/responses"), json!({"qid": qid, "role": "HR", "answer": "yes"})).await,
        422,
        "RoleMismatch",
    );
    is(
        send(&app, "PUT", &format!("/scans/{scan2}/responses"), json!({"qid": qid, "role": "Technical", "answer": "maybe"})).await,
        422,
        "InvalidTag",
    );
    is(
        send(&app, "PUT", &format!("/scans/{scan2}/responses"), json!({"qid": "ZZZ-999", "role": "Technical", "answer": "no"})).await,
        422,
        "UnknownQuestion",
    );
    let scenario = |risks: Value| {
        json!({"uc_id": uc, "title": "s", "fundamental": "Governance", "pitfall": "DataBias", "risks": risks, "likelihood": 3, "severity": 3})
    };
    is(send(&app, "POST", "/scenarios", scenario(json!(["NotARisk"]))).await, 422, "InvalidTag");
    is(send(&app, "POST", "/scenarios", scenario(json!([]))).await, 422, "InvalidTag");
    let sid = send(&app, "POST", "/scenarios", scenario(json!(["Discrimination"]))).await.json["sid"]
        .as_str()
        .unwrap()
        .to_string();
    is(
        send(&app, "POST", "/mitigations", json!({"sid": sid, "description": "d", "kind": "Technical", "scope": "UseCase"})).await,
        422,
        "ScenarioNotPrioritized",
    );
    is(send(&app, "POST", &format!("/use-cases/{uc}/prioritize?threshold=30"), json!({})).await, 422, "InvalidThreshold");
    is(send(&app, "PATCH", &format!("/scenarios/{sid}"), json!({"status": "Closed"})).await, 422, "InvalidTransition");
    is(
        send(&app, "POST", "/principle-maps", json!({"principles": [{"principle_id": "P", "statement": "s", "mapped_qids": []}]})).await,
        422,
        "UnmappedPrinciple",
    );
    is(
        send(&app, "POST", "/feedback", json!({"qid": qid, "use_case_ref": uc, "kind": "Missing", "note": "n"})).await,
        422,
        "InvalidFeedback",
    );
    is(get(&app, "/feedback/candidates?min_count=0").await, 422, "InvalidArgument");
    let (_, other_uc) = org_and_use_case(&app, "Idea").await;
    is(get(&app, &format!("/benchmark?uc_id={other_uc}")).await, 422, "NoSubjectScan");
    is(
        send(&app, "POST", "/banks/dress-default/revisions", json!({"kind": "Remove", "qid": "ZZZ-1", "rationale": "r"})).await,
        422,
        "UnknownQid",
    );
    is(
        send(&app, "POST", "/orgs", json!({"name": "", "sector": "s", "size_band": "Small"})).await,
        422,
        "InvalidField",
    );
    let _ = org;

    // 503: a pinned snapshot is read-only
    let repo = Repository::in_memory(Some(ticking_clock()));
    Service::new(repo.clone(), ServiceConfig::default()).unwrap();
    let pinned = ServiceConfig {
        as_of: Some(Utc.with_ymd_and_hms(2030, 1, 1, 0, 0, 0).unwrap()),
        ..ServiceConfig::default()
    };
    let ro = app_with(Service::new(repo, pinned).unwrap(), &[]);
    is(send(&ro, "POST", "/orgs", json!({"name": "a", "sector": "s", "size_band": "Small"})).await, 503, "ReadOnly");
    assert_eq!(get(&ro, "/banks").await.status, 200);
}

