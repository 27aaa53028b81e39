use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dress_core::assessment::{create_use_case, open_scan, Organization, SizeBand, UseCase, UseCaseDraft, UseCasePhase};
use dress_core::question_bank::{default_bank, SurveyResponses};
use dress_core::scoring::AnswerWeights;
use dress_core::Answer;
use dress_store::{EntityKind, Repository};

fn draft(org_id: &str) -> UseCaseDraft {
    let mut scoping = SurveyResponses::new();
    scoping.insert("summary_of_challenges".into(), "x".into());
    scoping.insert("technical_specification".into(), "y".into());
    UseCaseDraft {
        org_id: org_id.into(),
        title: "uc".into(),
        description: String::new(),
        lifecycle_phase: UseCasePhase::Development,
        stakeholders: vec![],
        guiding_policies: vec![],
        scoping,
    }
}

#[test]
fn schema_invalid_payload_is_rejected() {
    let repo = Repository::in_memory(None);
    let err = repo
        .store()
        .put(EntityKind::Organization, "o", 0, "{\"name\":\"no id\"}\n")
        .unwrap_err();
    assert_eq!(err.code(), "PayloadInvalid");
    let err = repo.store().put(EntityKind::Bank, "b", 0, "{\"bank_id\":\"b\"}\n").unwrap_err();
    assert_eq!(err.code(), "PayloadInvalid");
}

#[test]
fn banks_resolve_by_version() {
    let repo = Repository::in_memory(None);
    let bank = default_bank();
    repo.put(EntityKind::Bank, bank.bank_id(), 0, &bank).unwrap();
    let view = repo.view(None);
    assert_eq!(view.bank(bank.bank_id(), None).unwrap(), bank);
    assert_eq!(view.bank(bank.bank_id(), Some(&semver::Version::new(1, 0, 0))).unwrap(), bank);
    assert_eq!(
        view.bank(bank.bank_id(), Some(&semver::Version::new(9, 0, 0))).unwrap_err().code(),
        "NotFound"
    );
    // the stored payload is exactly the canonical document
    assert_eq!(
        repo.store().get(EntityKind::Bank, bank.bank_id(), None).unwrap().payload,
        bank.to_document()
    );
}

#[test]
fn ids_are_sequential() {
    let repo = Repository::in_memory(None);
    assert_eq!(repo.next_id("org").unwrap(), "org-0001");
    assert_eq!(repo.next_id("org").unwrap(), "org-0002");
    assert_eq!(repo.next_id("scan").unwrap(), "scan-0001");
}

/// Filtering the joined scan facts by sector agrees with enumerating every
/// scan and looking its organization up by hand.
#[test]
fn scan_filter_matches_full_enumeration() {
    let repo = Repository::in_memory(None);
    let bank = default_bank();
    let t = Utc.with_ymd_and_hms(2026, 6, 1, 0, 0, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut sector_of_scan = BTreeMap::new();
    for i in 0..12 {
        let sector = ["public", "finance", "health"][i % 3];
        let org = Organization::new(format!("org-{i}"), "o", sector, SizeBand::Small, t).unwrap();
        repo.put(EntityKind::Organization, &org.org_id, 0, &org).unwrap();
        let uc: UseCase = create_use_case(&org, &bank, format!("uc-{i}"), draft(&org.org_id), "t", t).unwrap();
        repo.put(EntityKind::UseCase, &uc.uc_id, 0, &uc).unwrap();
        let mut s = open_scan(&uc, &bank, 0.1, false, format!("scan-{i:02}"), t).unwrap();
        for q in s.questions().to_vec() {
            if rng.random_bool(0.5) {
                s.submit_response(&q.qid, q.role, Answer::Yes, None, t).unwrap();
            }
        }
        if i % 4 != 3 {
            s.close(t).unwrap();
            sector_of_scan.insert(s.scan_id().to_string(), sector);
        }
        repo.put(EntityKind::Scan, s.scan_id(), 0, &s).unwrap();
    }
    let facts = repo.view(None).scan_facts(&AnswerWeights::default()).unwrap();
    let got: Vec<&str> = facts
        .iter()
        .filter(|f| f.sector == "public")
        .map(|f| f.profile.scan_id.as_str())
        .collect();
    let want: Vec<&str> = sector_of_scan
        .iter()
        .filter(|(_, s)| **s == "public")
        .map(|(id, _)| id.as_str())
        .collect();
    assert_eq!(got, want);
    assert_eq!(repo.view(None).scan_sessions().unwrap().len(), 12);
    assert_eq!(repo.view(None).closed_scans().unwrap().len(), 9);
}
