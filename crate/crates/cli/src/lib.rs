//! The `dress` command line. [`run`] is the whole program minus process
//! exit, so tests drive it in-process.

pub mod cli;

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context as _;
use clap::Parser;
use serde::de::DeserializeOwned;
use serde::Serialize;

use dress_core::insights::{CohortFilter, Subject, DEFAULT_TOP_FLAGGED};
use dress_core::question_bank::{load_bank, validate_balance, LoadMode, DEFAULT_BALANCE_TOLERANCE};
use dress_core::report;
use dress_core::scoring::{GapBands, PrincipleMap};
use dress_core::Timestamp;
use dress_server::service::{MitigationPatch, OpenScanRequest, ResponseBody, ScenarioPatch};
use dress_server::{AppState, Auth, Service, ServiceConfig, ServiceError};
use dress_store::{Clock, Repository};

use crate::cli::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Pins the store clock, for reproducible records.
pub const FIXED_TIME_ENV: &str = "DRESS_FIXED_TIME";

/// Parse `argv` (including the program name), execute, and write the
/// report or error. Returns the process exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(cli) {
        Ok(out) => {
            let _ = stdout.write_all(out.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let code = match e.downcast_ref::<ServiceError>() {
                Some(se) => se.code(),
                None => "Io",
            };
            let _ = writeln!(stderr, "error[{code}]: {e:#}");
            EXIT_DOMAIN
        }
    }
}

fn fixed_clock() -> anyhow::Result<Option<Clock>> {
    let Ok(raw) = std::env::var(FIXED_TIME_ENV) else { return Ok(None) };
    let t: Timestamp = raw
        .parse()
        .map_err(|e| ServiceError::BadRequest(format!("{FIXED_TIME_ENV}=`{raw}`: {e}")))?;
    Ok(Some(Arc::new(move || t)))
}

fn open_service(cli: &Cli) -> anyhow::Result<Service> {
    let clock = fixed_clock()?;
    let read_only = cli.snapshot.is_some() || !cli.command.mutates();
    let config = ServiceConfig {
        as_of: cli.snapshot,
        ..ServiceConfig::default()
    };
    let repo = if read_only && !cli.store_path.exists() {
        // Nothing stored yet: reads see an empty store.
        Repository::in_memory(clock)
    } else {
        Repository::open(&cli.store_path, read_only, clock).map_err(ServiceError::from)?
    };
    Ok(Service::new(repo, config)?)
}

fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_doc<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| ServiceError::BadRequest(format!("{}: {e}", path.display())).into())
}

/// Parse a label the way the documents spell it, e.g. `Medium`, `InProgress`.
fn parse_label<T: DeserializeOwned>(what: &str, label: &str) -> anyhow::Result<T> {
    serde_json::from_value(serde_json::Value::String(label.to_string()))
        .map_err(|e| ServiceError::BadRequest(format!("{what} `{label}`: {e}")).into())
}

fn doc<T: Serialize>(value: &T) -> anyhow::Result<String> {
    Ok(dress_core::doc::to_canonical(value).map_err(|e| ServiceError::Internal(e.to_string()))?)
}

/// Render in the selected format; `text` and `csv` are only evaluated when
/// chosen.
fn render<T: Serialize>(
    format: Format,
    value: &T,
    text: impl FnOnce(&T) -> String,
    csv: impl FnOnce(&T) -> String,
) -> anyhow::Result<String> {
    match format {
        Format::Text => Ok(text(value)),
        Format::Csv => Ok(csv(value)),
        Format::JsonDoc => doc(value),
    }
}

/// Entities without a report: the text and CSV forms carry the id.
fn render_id<T: Serialize>(format: Format, value: &T, id: &str) -> anyhow::Result<String> {
    render(format, value, |_| format!("{id}\n"), |_| format!("id\n{id}\n"))
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn cohort(args: &CohortArgs) -> anyhow::Result<CohortFilter> {
    Ok(CohortFilter {
        sector: args.sector.clone(),
        size_band: args.size_band.as_deref().map(|s| parse_label("size band", s)).transpose()?,
        lifecycle_phase: args.phase.as_deref().map(|s| parse_label("phase", s)).transpose()?,
        from: args.from,
        to: args.to,
    })
}

fn execute(cli: Cli) -> anyhow::Result<String> {
    let f = cli.format;
    // Bank files are validated without touching the store.
    if let Command::Bank(BankCmd::Validate { file: Some(path), tolerance, .. }) = &cli.command {
        let bank = load_bank(&read_file(path)?, LoadMode::Strict).map_err(ServiceError::from)?;
        let r = validate_balance(&bank, tolerance.unwrap_or(DEFAULT_BALANCE_TOLERANCE)).map_err(ServiceError::from)?;
        return render(f, &r, report::balance_text, report::balance_csv);
    }
    let svc = open_service(&cli)?;
    match cli.command {
        Command::Bank(c) => match c {
            BankCmd::Load { file } => {
                let s = svc.load_bank(&read_file(&file)?)?;
                render_id(f, &s, &format!("{}@{}", s.bank_ref.bank_id, s.bank_ref.version))
            }
            BankCmd::Validate { bank, version, tolerance, .. } => {
                let bank_id = bank.unwrap_or_else(|| svc.config().default_bank_id.clone());
                let r = svc.validate_bank(&bank_id, version.as_ref(), tolerance)?;
                render(f, &r, report::balance_text, report::balance_csv)
            }
            BankCmd::Revise { bank_id, file } => {
                let s = svc.revise_bank(&bank_id, read_doc(&file)?)?;
                render_id(f, &s, &format!("{}@{}", s.bank_ref.bank_id, s.bank_ref.version))
            }
            BankCmd::List => {
                let list = svc.list_banks()?;
                let rows = |l: &Vec<dress_server::service::BankSummary>| {
                    l.iter()
                        .map(|s| {
                            vec![
                                s.bank_ref.bank_id.clone(),
                                s.bank_ref.version.to_string(),
                                s.active_questions.to_string(),
                                s.revisions.to_string(),
                            ]
                        })
                        .collect::<Vec<_>>()
                };
                render(
                    f,
                    &list,
                    |l| rows(l).iter().map(|r| format!("{}@{} active={} revisions={}\n", r[0], r[1], r[2], r[3])).collect(),
                    |l| table(&["bank_id", "version", "active_questions", "revisions"], rows(l)),
                )
            }
        },
        Command::Org(c) => match c {
            OrgCmd::Add { file } => {
                let o = svc.create_organization(read_doc(&file)?)?;
                render_id(f, &o, &o.org_id)
            }
            OrgCmd::Show { org_id } => {
                let o = svc.organization(&org_id)?;
                render_id(f, &o, &o.org_id)
            }
        },
        Command::UseCase(c) => match c {
            UseCaseCmd::Add { file } => {
                let u = svc.create_use_case(read_doc(&file)?)?;
                render_id(f, &u, &u.uc_id)
            }
            UseCaseCmd::Show { uc_id } => {
                let u = svc.use_case(&uc_id)?;
                render_id(f, &u, &u.uc_id)
            }
        },
        Command::Scan(c) => scan(&svc, f, c),
        Command::Gap(g) => {
            let r = match (&g.map, &g.map_id) {
                (Some(path), _) => {
                    let map: PrincipleMap = read_doc(path)?;
                    svc.gap_with(&g.uc_id, &map, g.scan_id.as_deref())?
                }
                (None, Some(id)) => svc.gap(&g.uc_id, id, g.scan_id.as_deref())?,
                (None, None) => unreachable!("clap requires one of --map, --map-id"),
            };
            let bands = GapBands::default();
            render(f, &r, |r| report::gap_text(r, &bands), |r| report::gap_csv(r, &bands))
        }
        Command::Scenario(c) => scenario(&svc, f, c, cli.snapshot.is_some()),
        Command::Mitigation(c) => match c {
            MitigationCmd::Add { file } => {
                let m = svc.add_mitigation(read_doc(&file)?)?;
                render_id(f, &m, &m.mid)
            }
            MitigationCmd::Status { mid, status, owner } => {
                let status = parse_label("mitigation status", &status)?;
                let m = svc.patch_mitigation(&mid, MitigationPatch { status, owner })?;
                render_id(f, &m, &m.mid)
            }
        },
        Command::Engage(EngageCmd::Add { file }) => {
            let e = svc.add_engagement(read_doc(&file)?)?;
            render_id(f, &e, &e.eid)
        }
        Command::Review { uc_id } => {
            let r = svc.review(&uc_id)?;
            render(f, &r, report::review_text, report::review_csv)
        }
        Command::Insights(c) => match c {
            InsightsCmd::Aggregate { cohort: args, top_k } => {
                let g = svc.aggregate(&cohort(&args)?, top_k.unwrap_or(DEFAULT_TOP_FLAGGED))?;
                render(f, &g, report::aggregate_text, report::aggregate_csv)
            }
            InsightsCmd::Benchmark { org, uc, cohort: args } => {
                let subject = match (org, uc) {
                    (Some(o), _) => Subject::Organization(o),
                    (None, Some(u)) => Subject::UseCase(u),
                    (None, None) => unreachable!("clap requires one of --org, --uc"),
                };
                let b = svc.benchmark(&subject, &cohort(&args)?)?;
                render(f, &b, report::benchmark_text, report::benchmark_csv)
            }
        },
        Command::Feedback(c) => match c {
            FeedbackCmd::Add { file } => {
                let e = svc.add_feedback(read_doc(&file)?)?;
                render_id(f, &e, &e.fid)
            }
            FeedbackCmd::Candidates { min_count } => {
                let list = svc.candidates(min_count)?;
                render(f, &list, |l| report::candidates_text(l), |l| report::candidates_csv(l))
            }
        },
        Command::Serve(args) => {
            let auth = Auth::from_specs(&args.tokens)?;
            let state = Arc::new(AppState { service: svc, auth });
            let addr = std::net::SocketAddr::new(args.bind, args.port);
            let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
            tokio::runtime::Runtime::new()?.block_on(dress_server::serve(addr, state))?;
            Ok(String::new())
        }
        Command::Export => Ok(svc.export_all()),
    }
}

fn scan(svc: &Service, f: Format, c: ScanCmd) -> anyhow::Result<String> {
    match c {
        ScanCmd::Open { uc_id, bank_id, bank_version } => {
            let v = svc.open_scan(OpenScanRequest { uc_id, bank_id, bank_version })?;
            render_id(f, &v, &v.scan_id)
        }
        ScanCmd::Questions { scan_id, role } => {
            let list = svc.questions(&scan_id, role.as_deref())?;
            let rows = |l: &dress_server::service::QuestionList| {
                l.questions
                    .iter()
                    .map(|q| vec![q.qid.clone(), q.role.to_string(), q.answer.to_string(), q.text.clone()])
                    .collect::<Vec<_>>()
            };
            render(
                f,
                &list,
                |l| {
                    let mut out = format!("scan: {}\nanswered: {}/{}\n\n", l.scan_id, l.answered, l.askable);
                    for r in rows(l) {
                        out.push_str(&format!("{:<10} {:<18} {:<10} {}\n", r[0], r[1], r[2], r[3]));
                    }
                    out
                },
                |l| table(&["qid", "role", "answer", "text"], rows(l)),
            )
        }
        ScanCmd::Answer { scan_id, qid, role, answer, respondent } => {
            let ack = svc.respond(&scan_id, ResponseBody { qid, role, answer, respondent })?;
            render(
                f,
                &ack,
                |a| format!("{} {} {} {}\n", a.qid, a.role, a.answer, if a.changed { "changed" } else { "unchanged" }),
                |a| table(&["qid", "role", "answer", "changed"], [vec![a.qid.clone(), a.role.to_string(), a.answer.to_string(), a.changed.to_string()]]),
            )
        }
        ScanCmd::Import { scan_id, file } => {
            let ack = svc.import(&scan_id, &read_doc(&file)?)?;
            render(
                f,
                &ack,
                |a| format!("applied: {}\nanswered: {}\n", a.applied, a.answered),
                |a| table(&["scan_id", "applied", "answered"], [vec![a.scan_id.clone(), a.applied.to_string(), a.answered.to_string()]]),
            )
        }
        ScanCmd::Export { scan_id } => doc(&svc.export_scan(&scan_id)?),
        ScanCmd::Close { scan_id } => {
            let p = svc.close_scan(&scan_id)?;
            render(f, &p, report::profile_text, report::profile_csv)
        }
        ScanCmd::Profile { scan_id } => {
            let p = svc.profile(&scan_id)?;
            render(f, &p, report::profile_text, report::profile_csv)
        }
    }
}

fn scenario(svc: &Service, f: Format, c: ScenarioCmd, pinned: bool) -> anyhow::Result<String> {
    let list = |l: Vec<_>| render(f, &l, |l| report::scenarios_text(l), |l| report::scenarios_csv(l));
    match c {
        ScenarioCmd::Add { file } => {
            let s = svc.add_scenario(read_doc(&file)?)?;
            render_id(f, &s, &s.sid)
        }
        ScenarioCmd::List { uc_id } => list(svc.scenarios(&uc_id)?),
        // A pinned snapshot cannot record status changes; show what would be prioritized.
        ScenarioCmd::Prioritize { uc_id, threshold } if pinned => list(svc.prioritized_preview(&uc_id, threshold)?),
        ScenarioCmd::Prioritize { uc_id, threshold } => list(svc.prioritize(&uc_id, threshold)?),
        ScenarioCmd::Heatmap { uc_id } => {
            let g = svc.heatmap(&uc_id)?;
            render(f, &g, report::heatmap_text, report::heatmap_csv)
        }
        ScenarioCmd::Reassess { sid, likelihood, severity } => {
            let s = svc.patch_scenario(
                &sid,
                ScenarioPatch {
                    likelihood: Some(likelihood),
                    severity: Some(severity),
                    status: None,
                },
            )?;
            render_id(f, &s, &s.sid)
        }
        ScenarioCmd::Close { sid } => {
            let s = svc.patch_scenario(
                &sid,
                ScenarioPatch {
                    likelihood: None,
                    severity: None,
                    status: Some(dress_core::risk_register::ScenarioStatus::Closed),
                },
            )?;
            render_id(f, &s, &s.sid)
        }
    }
}
