#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use serde_json::{json, Value};

use dress_core::assessment::{ExportedResponse, SizeBand, UseCasePhase, ORGANIZATION_WIDE};
use dress_core::risk_register::{MitigationKind, MitigationScope};
use dress_core::scoring::{Principle, PrincipleMap};
use dress_core::{Answer, Pitfall, Role, Timestamp};
use dress_server::service::{
    NewMitigation, NewOrganization, NewScenario, NewUseCase, OpenScanRequest,
};
use dress_server::{Service, ServiceConfig};
use dress_store::{Clock, Repository};

pub fn t0() -> Timestamp {
    Utc.with_ymd_and_hms(2026, 5, 1, 9, 0, 0).unwrap()
}

/// One second per reading, starting at [`t0`].
pub fn ticking_clock() -> Clock {
    let t = Arc::new(AtomicI64::new(0));
    Arc::new(move || t0() + chrono::Duration::seconds(t.fetch_add(1, Ordering::SeqCst)))
}

pub fn memory_service() -> Service {
    Service::new(Repository::in_memory(Some(ticking_clock())), ServiceConfig::default()).unwrap()
}

pub fn file_service(path: &Path) -> Service {
    Service::new(Repository::open(path, false, Some(ticking_clock())).unwrap(), ServiceConfig::default()).unwrap()
}

fn scoping() -> dress_core::question_bank::SurveyResponses {
    serde_json::from_value(json!({
        "summary_of_challenges": "matching job seekers to open positions",
        "technical_specification": "gradient-boosted compatibility score with rule-based grouping"
    }))
    .unwrap()
}

pub fn add_org(svc: &Service, name: &str, sector: &str, size: SizeBand) -> String {
    svc.create_organization(NewOrganization {
        name: name.into(),
        sector: sector.into(),
        size_band: size,
        profile: None,
        maturity: None,
    })
    .unwrap()
    .org_id
}

pub fn add_use_case(svc: &Service, org_id: &str, title: &str, phase: UseCasePhase) -> String {
    svc.create_use_case(NewUseCase {
        org_id: org_id.into(),
        title: title.into(),
        description: String::new(),
        lifecycle_phase: phase,
        stakeholders: vec!["job seekers".into(), "case officers".into()],
        guiding_policies: vec![],
        scoping: scoping(),
        actor: Some("fixture".into()),
    })
    .unwrap()
    .uc_id
}

/// Open a scan of `uc_id`, answer it with `pick(index, question)` as one
/// imported batch, close it. Returns the scan id and the answers given.
pub fn run_scan(
    svc: &Service,
    uc_id: &str,
    mut pick: impl FnMut(usize, &dress_server::service::QuestionView) -> Answer,
) -> (String, BTreeMap<String, Answer>) {
    let view = svc
        .open_scan(OpenScanRequest {
            uc_id: uc_id.into(),
            bank_id: None,
            bank_version: None,
        })
        .unwrap();
    let mut export = svc.export_scan(&view.scan_id).unwrap();
    let mut given = BTreeMap::new();
    for (i, q) in svc.questions(&view.scan_id, None).unwrap().questions.iter().enumerate() {
        let a = pick(i, q);
        if a.is_answered() {
            export.responses.push(ExportedResponse {
                qid: q.qid.clone(),
                role: q.role,
                answer: a,
                at: view.opened_at,
                respondent: Some(format!("{} lead", q.role)),
            });
            given.insert(q.qid.clone(), a);
        }
    }
    svc.import(&view.scan_id, &export).unwrap();
    svc.close_scan(&view.scan_id).unwrap();
    (view.scan_id, given)
}

/// Answer pattern of the job-profiling scan: weak on data bias and on the
/// creators' own bias, stronger elsewhere. Legal questions on misuse are
/// left unanswered.
pub fn job_profiling_answer(i: usize, q: &dress_server::service::QuestionView) -> Answer {
    if q.role == Role::Legal && q.pitfall == Pitfall::MisuseOveruseOfData {
        return Answer::Unanswered;
    }
    let even = i % 2 == 0;
    match q.pitfall {
        Pitfall::DataBias => if even { Answer::No } else { Answer::NotSure },
        Pitfall::BiasOfTheCreator => if even { Answer::NotSure } else { Answer::InProgress },
        Pitfall::ImmatureDataAndAI => if even { Answer::InProgress } else { Answer::Yes },
        Pitfall::MisuseOveruseOfData => if i % 3 == 0 { Answer::InProgress } else { Answer::Yes },
    }
}

pub struct FixtureA {
    pub org_id: String,
    pub uc_id: String,
    pub scan_id: String,
    pub answers: BTreeMap<String, Answer>,
    pub sids: Vec<String>,
    pub map_id: String,
    /// Qids the scan left unanswered.
    pub unanswered: Vec<String>,
}

/// (title, pitfall, risks, likelihood, severity)
pub const SCENARIOS_A: [(&str, &str, &[&str], u8, u8); 12] = [
    ("Training data under-represents foreign-born applicants", "DataBias", &["AmplifiedDiscrimination", "SocialExclusion"], 5, 5),
    ("Historical placement outcomes encode past discrimination", "DataBias", &["AmplifiedDiscrimination"], 4, 5),
    ("Proxy variables stand in for protected attributes", "DataBias", &["AmplifiedDiscrimination", "PrivacyIntrusion"], 5, 4),
    ("Design team shares one background and blind spots", "BiasOfTheCreator", &["AmplifiedDiscrimination"], 4, 4),
    ("Category thresholds chosen without affected groups", "BiasOfTheCreator", &["SocialExclusion", "ViolationOfAutonomy"], 3, 5),
    ("Officers follow the score without questioning it", "MisuseOveruseOfData", &["ViolationOfAutonomy"], 4, 3),
    ("Label noise in self-reported skills", "DataBias", &["MisAndDisinformation"], 3, 4),
    ("Lowest category cut off from support programmes", "BiasOfTheCreator", &["PreventionOfPublicServiceAccess"], 2, 5),
    ("Model released before validation on recent cohorts", "ImmatureDataAndAI", &["HarmToSafety"], 5, 2),
    ("Applicant records reused for unrelated analytics", "MisuseOveruseOfData", &["PrivacyIntrusion"], 3, 3),
    ("Score export exposed through a shared drive", "MisuseOveruseOfData", &["HarmToSecurityOfInformation"], 2, 3),
    ("Explanations too technical for applicants", "ImmatureDataAndAI", &["ViolationOfAutonomy"], 1, 2),
];

pub const PRIORITY_THRESHOLD: u8 = 10;

/// Job-profiling use-case: one closed scan, twelve scenarios, the high
/// ones prioritized, two mitigations (project and organization scope) and
/// a stored four-principle map.
pub fn fixture_a(svc: &Service) -> FixtureA {
    let org_id = add_org(svc, "Employment Service", "public", SizeBand::Large);
    let uc_id = add_use_case(svc, &org_id, "Job-seeker profiling", UseCasePhase::Deployed);
    let (scan_id, answers) = run_scan(svc, &uc_id, job_profiling_answer);
    let asked: Vec<_> = svc.questions(&scan_id, None).unwrap().questions;
    let unanswered: Vec<String> = asked.iter().filter(|q| !answers.contains_key(&q.qid)).map(|q| q.qid.clone()).collect();
    let flagged_of = |p: Pitfall| -> BTreeSet<String> {
        asked
            .iter()
            .filter(|q| q.pitfall == p && answers.get(&q.qid).is_some_and(|a| a.is_flagged()))
            .take(2)
            .map(|q| q.qid.clone())
            .collect()
    };
    let mut sids = Vec::new();
    for (title, pitfall, risks, l, s) in SCENARIOS_A {
        let p: Pitfall = pitfall.parse().unwrap();
        let fundamental = if p == Pitfall::DataBias { "Governance" } else { "Accountability" };
        let sc = svc
            .add_scenario(NewScenario {
                uc_id: uc_id.clone(),
                title: title.into(),
                narrative: String::new(),
                fundamental: fundamental.into(),
                pitfall: pitfall.into(),
                risks: risks.iter().map(|r| r.to_string()).collect(),
                likelihood: l,
                severity: s,
                source_questions: flagged_of(p),
            })
            .unwrap();
        sids.push(sc.sid);
    }
    svc.prioritize(&uc_id, Some(PRIORITY_THRESHOLD)).unwrap();
    for (sid, scope, kind, owner, what) in [
        (&sids[0], MitigationScope::UseCase, MitigationKind::Technical, "Data science lead", "Reweigh training data per demographic group"),
        (&sids[3], MitigationScope::Organization, MitigationKind::NonTechnical, "HR director", "Broaden recruitment of the analytics team"),
    ] {
        svc.add_mitigation(NewMitigation {
            sid: sid.clone(),
            description: what.into(),
            kind,
            scope,
            owner: owner.into(),
            fundamental: None,
            pitfall: None,
            risks: None,
            status: None,
            due: None,
        })
        .unwrap();
    }
    let map = svc
        .put_principle_map(dress_server::service::NewPrincipleMap {
            map_id: Some("pm-employment".into()),
            org_id: Some(org_id.clone()),
            principles: principle_map_a(&asked, &unanswered).principles,
        })
        .unwrap();
    FixtureA {
        org_id,
        uc_id,
        scan_id,
        answers,
        sids,
        map_id: map.map_id,
        unanswered,
    }
}

/// Four principles; the last is evidenced only by unanswered questions.
pub fn principle_map_a(asked: &[dress_server::service::QuestionView], unanswered: &[String]) -> PrincipleMap {
    let pick = |pred: &dyn Fn(&dress_server::service::QuestionView) -> bool| -> BTreeSet<String> {
        asked.iter().filter(|q| pred(q)).take(4).map(|q| q.qid.clone()).collect()
    };
    use dress_core::Fundamental as F;
    let p = |id: &str, statement: &str, qids: BTreeSet<String>| Principle {
        principle_id: id.into(),
        statement: statement.into(),
        mapped_qids: qids,
    };
    PrincipleMap {
        map_id: "pm-employment".into(),
        org_id: None,
        principles: vec![
            p("equal-treatment", "Applicants are treated equally", pick(&|q| q.pitfall == Pitfall::DataBias)),
            p("human-oversight", "A person reviews every decision", pick(&|q| q.fundamental == F::Governance && q.pitfall == Pitfall::MisuseOveruseOfData)),
            p("openness", "We explain how the score is made", pick(&|q| q.fundamental == F::Transparency)),
            p("lawful-use", "Data is used only as permitted", unanswered.iter().take(2).cloned().collect()),
        ],
    }
}

pub struct FixtureB {
    pub org_id: String,
    pub uc_id: String,
    pub org_wide_uc: String,
    pub org_scan: String,
    pub uc_scan: String,
}

/// An idea-phase use-case in an organization that first runs an
/// organization-wide scan.
pub fn fixture_b(svc: &Service) -> FixtureB {
    let org_id = add_org(svc, "Municipal services", "public", SizeBand::Medium);
    let org_wide_uc = add_use_case(svc, &org_id, ORGANIZATION_WIDE, UseCasePhase::Idea);
    let (org_scan, _) = run_scan(svc, &org_wide_uc, |i, _| if i % 4 == 0 { Answer::No } else { Answer::InProgress });
    let uc_id = add_use_case(svc, &org_id, "Benefit eligibility assistant", UseCasePhase::Idea);
    let (uc_scan, _) = run_scan(svc, &uc_id, |i, _| [Answer::Yes, Answer::NotSure, Answer::InProgress][i % 3]);
    FixtureB {
        org_id,
        uc_id,
        org_wide_uc,
        org_scan,
        uc_scan,
    }
}

// ---------------------------------------------------------------------------
// Scoring oracle, reading the shipped bank document directly.

pub struct RawQuestion {
    pub qid: String,
    pub tags: [(String, String); 4],
}

fn stage_of(pitfall: &str) -> &'static str {
    match pitfall {
        "DataBias" => "DataCollection",
        "BiasOfTheCreator" => "DesignAndBuild",
        "ImmatureDataAndAI" => "TrainingAndValidation",
        "MisuseOveruseOfData" => "DeploymentAndUse",
        other => panic!("unexpected pitfall {other}"),
    }
}

pub fn raw_questions() -> Vec<RawQuestion> {
    let doc: Value = serde_json::from_str(dress_core::question_bank::DEFAULT_BANK_DOCUMENT).unwrap();
    doc["questions"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|q| q["status"] == "Active")
        .map(|q| {
            let s = |k: &str| q[k].as_str().unwrap().to_string();
            RawQuestion {
                qid: s("qid"),
                tags: [
                    ("fundamental".into(), s("fundamental")),
                    ("pitfall".into(), s("pitfall")),
                    ("role".into(), s("role")),
                    ("stage".into(), stage_of(&s("pitfall")).into()),
                ],
            }
        })
        .collect()
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

/// Filter the questions to one dimension, average the answered weights.
pub fn oracle_score(raw: &[RawQuestion], answers: &BTreeMap<String, Answer>, group: &str, name: &str) -> Option<f64> {
    let weights: Vec<f64> = raw
        .iter()
        .filter(|q| q.tags.iter().any(|(g, n)| g == group && n == name))
        .filter_map(|q| answers.get(&q.qid).copied().and_then(oracle_weight))
        .collect();
    (!weights.is_empty()).then(|| weights.iter().sum::<f64>() / weights.len() as f64 * 100.0)
}

// ---------------------------------------------------------------------------
// Driving the binary.

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub const FIXED_TIME: &str = "2026-05-01T09:00:00Z";

pub fn dress(store: &Path, args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_dress"))
        .arg("--store-path")
        .arg(store)
        .args(args)
        .env("DRESS_FIXED_TIME", FIXED_TIME)
        .env_remove("DRESS_STORE")
        .output()
        .expect("run dress");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Store with fixtures A and B, for report goldens. Returns the store path
/// and fixture A.
pub fn golden_store(dir: &Path) -> (PathBuf, FixtureA, FixtureB) {
    let path = dir.join("golden.store");
    let svc = file_service(&path);
    let a = fixture_a(&svc);
    let b = fixture_b(&svc);
    drop(svc);
    (path, a, b)
}

/// Snapshot instant after every fixture write.
pub const SNAPSHOT: &str = "2026-06-01T00:00:00Z";

/// (golden file stem, args) for each report subcommand checked byte-for-byte.
pub fn golden_commands(a: &FixtureA) -> Vec<(String, Vec<String>)> {
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    vec![
        ("bank-validate".into(), s(&["bank", "validate", "--tolerance", "0.10"])),
        ("scan-profile".into(), s(&["scan", "profile", &a.scan_id])),
        ("gap".into(), s(&["gap", &a.uc_id, "--map-id", &a.map_id])),
        ("scenario-heatmap".into(), s(&["scenario", "heatmap", &a.uc_id])),
        ("insights-benchmark".into(), s(&["insights", "benchmark", "--uc", &a.uc_id])),
    ]
}

/// Run every golden command in text and CSV form against the pinned
/// snapshot. Returns (file name, output) pairs; panics on a non-zero exit.
pub fn golden_outputs(store: &Path, a: &FixtureA) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (stem, args) in golden_commands(a) {
        for (format, ext) in [("text", "txt"), ("csv", "csv")] {
            let mut argv = vec!["--snapshot", SNAPSHOT, "--format", format];
            argv.extend(args.iter().map(String::as_str));
            let r = dress(store, &argv);
            assert_eq!(r.code, 0, "{stem} {format}: {}", r.stderr);
            out.push((format!("{stem}.{ext}"), r.stdout));
        }
    }
    out
}
