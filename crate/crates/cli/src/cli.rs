use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dress_core::Timestamp;

#[derive(Debug, Parser)]
#[command(name = "dress", version, about = "Risk scans, registers and insights for AI use-cases")]
pub struct Cli {
    /// Store file; created on first write.
    #[arg(long, global = true, env = "DRESS_STORE", default_value = "dress.store")]
    pub store_path: PathBuf,

    /// Output rendering. Storage is always canonical documents.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Read the store as of this instant (RFC 3339); writes are refused.
    #[arg(long, global = true)]
    pub snapshot: Option<Timestamp>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    JsonDoc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Question-bank management.
    #[command(subcommand)]
    Bank(BankCmd),
    /// Organizations.
    #[command(subcommand)]
    Org(OrgCmd),
    /// Use-cases.
    #[command(subcommand, name = "usecase")]
    UseCase(UseCaseCmd),
    /// Risk scans.
    #[command(subcommand)]
    Scan(ScanCmd),
    /// Gap between stated principles and a use-case's latest closed scan.
    Gap(GapArgs),
    /// Risk register scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Mitigation measures.
    #[command(subcommand)]
    Mitigation(MitigationCmd),
    /// Stakeholder engagement records.
    #[command(subcommand)]
    Engage(EngageCmd),
    /// Review of a use-case: scans, register and score movement.
    Review { uc_id: String },
    /// Cross-organization statistics.
    #[command(subcommand)]
    Insights(InsightsCmd),
    /// Question feedback.
    #[command(subcommand)]
    Feedback(FeedbackCmd),
    /// Run the HTTP API over the store.
    Serve(ServeArgs),
    /// Every stored record as canonical documents.
    Export,
}

#[derive(Debug, Subcommand)]
pub enum BankCmd {
    /// Store a bank document.
    Load { file: PathBuf },
    /// Balance report of a bank file, or of a stored bank.
    Validate {
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        bank: Option<String>,
        #[arg(long, conflicts_with = "file")]
        version: Option<semver::Version>,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Apply one revision document to a stored bank.
    Revise { bank_id: String, file: PathBuf },
    /// Stored banks, latest version of each.
    List,
}

#[derive(Debug, Subcommand)]
pub enum OrgCmd {
    /// Register an organization from a document.
    Add { file: PathBuf },
    Show { org_id: String },
}

#[derive(Debug, Subcommand)]
pub enum UseCaseCmd {
    /// Register a use-case from a document.
    Add { file: PathBuf },
    Show { uc_id: String },
}

#[derive(Debug, Subcommand)]
pub enum ScanCmd {
    Open {
        #[arg(long = "uc")]
        uc_id: String,
        #[arg(long = "bank")]
        bank_id: Option<String>,
        #[arg(long)]
        bank_version: Option<semver::Version>,
    },
    /// Questions of a scan, optionally for one role.
    Questions {
        scan_id: String,
        #[arg(long)]
        role: Option<String>,
    },
    Answer {
        scan_id: String,
        #[arg(long)]
        qid: String,
        #[arg(long)]
        role: String,
        #[arg(long)]
        answer: String,
        #[arg(long)]
        respondent: Option<String>,
    },
    /// Apply an exported response document.
    Import { scan_id: String, file: PathBuf },
    Export { scan_id: String },
    Close { scan_id: String },
    Profile { scan_id: String },
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("principles").required(true).args(["map", "map_id"])))]
pub struct GapArgs {
    pub uc_id: String,
    /// Principle map document; evaluated without being stored.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Stored principle map.
    #[arg(long)]
    pub map_id: Option<String>,
    /// Scan to evaluate instead of the latest closed one.
    #[arg(long = "scan")]
    pub scan_id: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Add a scenario from a document.
    Add { file: PathBuf },
    List { uc_id: String },
    /// Scenarios at or above the threshold, highest first.
    Prioritize {
        uc_id: String,
        #[arg(long)]
        threshold: Option<u8>,
    },
    Heatmap { uc_id: String },
    /// Move a scenario on the heatmap.
    Reassess {
        sid: String,
        #[arg(long)]
        likelihood: u8,
        #[arg(long)]
        severity: u8,
    },
    Close { sid: String },
}

#[derive(Debug, Subcommand)]
pub enum MitigationCmd {
    /// Add a mitigation from a document.
    Add { file: PathBuf },
    Status {
        mid: String,
        status: String,
        #[arg(long)]
        owner: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EngageCmd {
    /// Record an engagement from a document.
    Add { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    #[arg(long)]
    pub sector: Option<String>,
    #[arg(long)]
    pub size_band: Option<String>,
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long)]
    pub from: Option<Timestamp>,
    #[arg(long)]
    pub to: Option<Timestamp>,
}

#[derive(Debug, Subcommand)]
pub enum InsightsCmd {
    Aggregate {
        #[command(flatten)]
        cohort: CohortArgs,
        #[arg(long)]
        top_k: Option<usize>,
    },
    #[command(group(clap::ArgGroup::new("subject").required(true).args(["org", "uc"])))]
    Benchmark {
        #[arg(long)]
        org: Option<String>,
        #[arg(long)]
        uc: Option<String>,
        #[command(flatten)]
        cohort: CohortArgs,
    },
}

#[derive(Debug, Subcommand)]
pub enum FeedbackCmd {
    /// Log feedback from a document.
    Add { file: PathBuf },
    /// Questions with repeated feedback.
    Candidates {
        #[arg(long, default_value_t = 2)]
        min_count: usize,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Bearer token, optionally limited to roles: `TOKEN` or `TOKEN:Role,Role`.
    #[arg(long = "token", env = "DRESS_TOKENS", value_delimiter = ';')]
    pub tokens: Vec<String>,
}

impl Command {
    /// Whether the command writes to the store.
    pub fn mutates(&self) -> bool {
        match self {
            Command::Bank(c) => matches!(c, BankCmd::Load { .. } | BankCmd::Revise { .. }),
            Command::Org(c) => matches!(c, OrgCmd::Add { .. }),
            Command::UseCase(c) => matches!(c, UseCaseCmd::Add { .. }),
            Command::Scan(c) => matches!(c, ScanCmd::Open { .. } | ScanCmd::Answer { .. } | ScanCmd::Import { .. } | ScanCmd::Close { .. }),
            Command::Scenario(c) => matches!(
                c,
                ScenarioCmd::Add { .. } | ScenarioCmd::Prioritize { .. } | ScenarioCmd::Reassess { .. } | ScenarioCmd::Close { .. }
            ),
            Command::Mitigation(_) | Command::Engage(_) | Command::Serve(_) => true,
            Command::Feedback(c) => matches!(c, FeedbackCmd::Add { .. }),
            Command::Gap(_) | Command::Review { .. } | Command::Insights(_) | Command::Export => false,
        }
    }
}
