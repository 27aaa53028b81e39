#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{Duration, TimeZone, Utc};
use rand::Rng;
use serde_json::Value;

use dress_core::assessment::{
    create_use_case, open_scan, Organization, ScanRecord, SizeBand, UseCase, UseCaseDraft, UseCasePhase,
};
use dress_core::question_bank::{default_bank, QuestionBank, SurveyResponses};
use dress_core::{Answer, Timestamp};

pub fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2026, 5, 1, 9, 0, 0).unwrap()
}

pub fn at(minutes: i64) -> Timestamp {
    t0() + Duration::minutes(minutes)
}

pub fn org(id: &str) -> Organization {
    Organization::new(id, id, "public", SizeBand::Large, t0()).unwrap()
}

pub fn use_case(bank: &QuestionBank, org: &Organization, uc_id: &str) -> UseCase {
    let mut scoping = SurveyResponses::new();
    scoping.insert("summary_of_challenges".into(), "test".into());
    scoping.insert("technical_specification".into(), "test".into());
    create_use_case(
        org,
        bank,
        uc_id,
        UseCaseDraft {
            org_id: org.org_id.clone(),
            title: uc_id.into(),
            description: String::new(),
            lifecycle_phase: UseCasePhase::Development,
            stakeholders: vec![],
            guiding_policies: vec![],
            scoping,
        },
        "tester",
        t0(),
    )
    .unwrap()
}

/// Close a scan of `uc` with the given answers (missing qids stay unanswered).
pub fn scan(bank: &QuestionBank, uc: &UseCase, scan_id: &str, answers: &BTreeMap<String, Answer>, close_min: i64) -> ScanRecord {
    let mut s = open_scan(uc, bank, 0.10, false, scan_id, at(close_min - 1)).unwrap();
    for q in s.questions().to_vec() {
        if let Some(&a) = answers.get(&q.qid) {
            if a.is_answered() {
                s.submit_response(&q.qid, q.role, a, None, at(close_min - 1)).unwrap();
            }
        }
    }
    s.close(at(close_min)).unwrap()
}

pub fn random_answers(bank: &QuestionBank, rng: &mut impl Rng) -> BTreeMap<String, Answer> {
    bank.active_questions()
        .map(|q| (q.qid.clone(), Answer::ALL[rng.random_range(0..Answer::ALL.len())]))
        .collect()
}

/// Tags of the shipped bank read straight from the JSON document, without
/// going through the engine's parser.
pub struct RawQuestion {
    pub qid: String,
    pub fundamental: String,
    pub pitfall: String,
    pub role: String,
}

pub fn raw_default_questions() -> Vec<RawQuestion> {
    let doc: Value = serde_json::from_str(dress_core::question_bank::DEFAULT_BANK_DOCUMENT).unwrap();
    doc["questions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|q| q["status"] == "Active")
        .map(|q| RawQuestion {
            qid: q["qid"].as_str().unwrap().into(),
            fundamental: q["fundamental"].as_str().unwrap().into(),
            pitfall: q["pitfall"].as_str().unwrap().into(),
            role: q["role"].as_str().unwrap().into(),
        })
        .collect()
}

pub fn stage_of_pitfall(p: &str) -> &'static str {
    match p {
        "DataBias" => "DataCollection",
        "BiasOfTheCreator" => "DesignAndBuild",
        "ImmatureDataAndAI" => "TrainingAndValidation",
        "MisuseOveruseOfData" => "DeploymentAndUse",
        other => panic!("unexpected pitfall {other}"),
    }
}

pub fn oracle_weight(a: Answer) -> Option<f64> {
    match a {
        Answer::Yes => Some(1.0),
        Answer::InProgress => Some(0.5),
        Answer::NotSure => Some(0.25),
        Answer::No => Some(0.0),
        Answer::Unanswered => None,
    }
}

/// Brute-force score: filter the raw questions to the dimension, average
/// the weights of the answered ones.
pub fn oracle_score(
    raw: &[RawQuestion],
    answers: &BTreeMap<String, Answer>,
    group: &str,
    name: &str,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for q in raw {
        let tag = match group {
            "fundamental" => q.fundamental.as_str(),
            "pitfall" => q.pitfall.as_str(),
            "role" => q.role.as_str(),
            "stage" => stage_of_pitfall(&q.pitfall),
            _ => unreachable!(),
        };
        if tag != name {
            continue;
        }
        if let Some(w) = answers.get(&q.qid).copied().and_then(oracle_weight) {
            sum += w;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64 * 100.0)
}

pub fn bank() -> QuestionBank {
    default_bank()
}
