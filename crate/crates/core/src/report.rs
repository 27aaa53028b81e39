//! Plain-text and CSV renderings of engine results.
//!
//! Every renderer is a pure function of its input, so equal inputs give
//! byte-equal output. Missing scores render as `absent`, never as 0.

use std::fmt::Write as _;

use crate::insights::{BenchmarkReport, GroupStats, RefinementCandidate};
use crate::question_bank::BalanceReport;
use crate::risk_register::{DeltaSection, HeatmapGrid, ReviewReport, RiskScenario};
use crate::scoring::{Dimension, DimensionScore, EffectivenessDelta, GapBands, GapReport, ScanProfile};

pub const ABSENT: &str = "absent";

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| format!("{x:.2}"))
}

fn fmt_signed(v: Option<f64>) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| format!("{x:+.2}"))
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

// ---------------------------------------------------------------------------

pub fn balance_text(r: &BalanceReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "active questions: {}", r.active_questions);
    let _ = writeln!(out, "tolerance: {:.2}", r.tolerance);
    let _ = writeln!(out, "max relative deviation: {:.4}", r.max_relative_deviation);
    let _ = writeln!(out, "pass: {}", r.pass);
    let _ = writeln!(out, "release grade: {}", r.release_grade());
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<36} {:>6} {:>10}", "dimension", "count", "deviation");
    for (dim, count) in balance_rows(r) {
        let dev = r.deviation_by_dimension.get(&dim).copied().unwrap_or(0.0);
        let _ = writeln!(out, "{dim:<36} {count:>6} {dev:>10.4}");
    }
    for gap in &r.coverage_gaps {
        let _ = writeln!(out, "gap: {gap}");
    }
    out
}

pub fn balance_csv(r: &BalanceReport) -> String {
    csv_table(
        &["dimension", "count", "deviation"],
        balance_rows(r).into_iter().map(|(dim, count)| {
            let dev = r.deviation_by_dimension.get(&dim).copied().unwrap_or(0.0);
            vec![dim, count.to_string(), format!("{dev:.6}")]
        }),
    )
}

fn balance_rows(r: &BalanceReport) -> Vec<(String, usize)> {
    let f = r.counts_by_fundamental.iter().map(|(k, v)| (format!("fundamental:{k}"), *v));
    let p = r.counts_by_pitfall.iter().map(|(k, v)| (format!("pitfall:{k}"), *v));
    let ro = r.counts_by_role.iter().map(|(k, v)| (format!("role:{k}"), *v));
    f.chain(p).chain(ro).collect()
}

// ---------------------------------------------------------------------------

fn profile_rows(p: &ScanProfile) -> Vec<(String, DimensionScore)> {
    std::iter::once(("overall".to_string(), p.overall))
        .chain(Dimension::all().into_iter().map(|d| (d.to_string(), *p.get(d))))
        .collect()
}

pub fn profile_text(p: &ScanProfile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scan: {}", p.scan_id);
    let _ = writeln!(out, "use-case: {}", p.uc_id);
    let _ = writeln!(out, "bank: {}", p.bank_ref);
    let _ = writeln!(out, "closed: {}", p.closed_at.to_rfc3339());
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<36} {:>8} {:>9} {:>9}", "dimension", "score", "coverage", "answered");
    for (name, s) in profile_rows(p) {
        let _ = writeln!(
            out,
            "{:<36} {:>8} {:>9.3} {:>9}",
            name,
            fmt_opt(s.score),
            s.coverage,
            format!("{}/{}", s.answered, s.askable)
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "flagged questions: {}", p.flagged_questions.len());
    for q in &p.flagged_questions {
        let _ = writeln!(out, "  {} {} {}", q.qid, q.role, q.answer);
    }
    out
}

pub fn profile_csv(p: &ScanProfile) -> String {
    csv_table(
        &["dimension", "score", "coverage", "answered", "askable"],
        profile_rows(p).into_iter().map(|(name, s)| {
            vec![
                name,
                fmt_opt(s.score),
                format!("{:.6}", s.coverage),
                s.answered.to_string(),
                s.askable.to_string(),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------

fn band_of(bands: &GapBands, a: Option<f64>) -> String {
    a.map_or_else(|| ABSENT.to_string(), |a| format!("{:?}", bands.band(a)))
}

pub fn gap_text(r: &GapReport, bands: &GapBands) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scan: {}", r.scan_id);
    let _ = writeln!(out, "principle map: {}", r.map_id);
    let _ = writeln!(out, "overall gap: {}", fmt_opt(r.overall_gap));
    let _ = writeln!(out);
    for p in &r.principles {
        let bar = p
            .attainment
            .map(|a| "#".repeat((a / 5.0).round() as usize))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>8} {:<6} |{:<20}| {}",
            p.principle_id,
            fmt_opt(p.attainment),
            fmt_opt(p.gap),
            band_of(bands, p.attainment),
            bar,
            p.statement
        );
        for e in &p.evidence {
            let _ = writeln!(out, "    {} {}", e.qid, e.answer);
        }
    }
    out
}

pub fn gap_csv(r: &GapReport, bands: &GapBands) -> String {
    csv_table(
        &["principle_id", "attainment", "gap", "band", "answered", "mapped"],
        r.principles.iter().map(|p| {
            vec![
                p.principle_id.clone(),
                fmt_opt(p.attainment),
                fmt_opt(p.gap),
                band_of(bands, p.attainment),
                p.answered.to_string(),
                p.evidence.len().to_string(),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------

/// Grid with likelihood rows (5 at the top) and severity columns.
pub fn heatmap_text(g: &HeatmapGrid) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "likelihood \\ severity   1     2     3     4     5");
    for l in (1..=5u8).rev() {
        let _ = write!(out, "{l:>21}");
        for s in 1..=5u8 {
            let _ = write!(out, " {:>5}", g.cell(l, s).len());
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out);
    for c in g.cells.iter().filter(|c| !c.sids.is_empty()) {
        let _ = writeln!(out, "({}, {}): {}", c.likelihood, c.severity, c.sids.join(" "));
    }
    out
}

/// 25 rows: likelihood, severity, count, space-separated sids.
pub fn heatmap_csv(g: &HeatmapGrid) -> String {
    csv_table(
        &["likelihood", "severity", "count", "sids"],
        g.cells.iter().map(|c| {
            vec![
                c.likelihood.to_string(),
                c.severity.to_string(),
                c.sids.len().to_string(),
                c.sids.join(" "),
            ]
        }),
    )
}

pub fn scenarios_text(list: &[RiskScenario]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:>3} {:>3} {:>4}  {:<12} title", "sid", "L", "S", "LxS", "status");
    for s in list {
        let _ = writeln!(
            out,
            "{:<10} {:>3} {:>3} {:>4}  {:<12} {}",
            s.sid,
            s.likelihood,
            s.severity,
            s.priority(),
            s.status.to_string(),
            s.title
        );
    }
    out
}

pub fn scenarios_csv(list: &[RiskScenario]) -> String {
    csv_table(
        &["sid", "likelihood", "severity", "priority", "status", "fundamental", "pitfall", "title"],
        list.iter().map(|s| {
            vec![
                s.sid.clone(),
                s.likelihood.to_string(),
                s.severity.to_string(),
                s.priority().to_string(),
                s.status.to_string(),
                s.fundamental.to_string(),
                s.pitfall.to_string(),
                s.title.clone(),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------

pub fn delta_text(d: &EffectivenessDelta) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "use-case: {}", d.uc_id);
    let _ = writeln!(out, "before: {}  after: {}", d.before_ref, d.after_ref);
    let _ = writeln!(out, "compared questions: {}", d.compared);
    for dim in Dimension::all() {
        let _ = writeln!(out, "{:<36} {:>8}", dim.to_string(), fmt_signed(d.delta(dim)));
    }
    let _ = writeln!(out, "improved: {}", d.improved.join(" "));
    let _ = writeln!(out, "regressed: {}", d.regressed.join(" "));
    out
}

pub fn delta_csv(d: &EffectivenessDelta) -> String {
    csv_table(
        &["dimension", "delta"],
        Dimension::all().into_iter().map(|dim| vec![dim.to_string(), fmt_signed(d.delta(dim))]),
    )
}

pub fn review_text(r: &ReviewReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "use-case: {} ({})", r.uc_id, r.title);
    let _ = writeln!(out, "phase: {:?}", r.lifecycle_phase);
    let _ = writeln!(out, "scans considered: {}", r.scan_count());
    if let Some(o) = &r.organization_scan {
        let _ = writeln!(
            out,
            "  organization-wide {} closed {} coverage {:.3}",
            o.scan_id,
            o.closed_at.to_rfc3339(),
            o.coverage
        );
    }
    for s in &r.scans {
        let _ = writeln!(out, "  use-case {} closed {} coverage {:.3}", s.scan_id, s.closed_at.to_rfc3339(), s.coverage);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "latest profile ({}):", r.latest_profile.scan_id);
    for dim in Dimension::all() {
        let _ = writeln!(out, "  {:<34} {:>8}", dim.to_string(), fmt_opt(r.latest_profile.score(dim)));
    }
    if let Some(p) = &r.organization_profile {
        let _ = writeln!(out, "organization-wide profile ({}):", p.scan_id);
        for dim in Dimension::all() {
            let _ = writeln!(out, "  {:<34} {:>8}", dim.to_string(), fmt_opt(p.score(dim)));
        }
    }
    let c = &r.scenarios;
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "scenarios: open {} (identified {}, prioritized {}, mitigating {}), closed {}",
        c.open, c.identified, c.prioritized, c.mitigating, c.closed
    );
    let _ = writeln!(out, "mitigations:");
    for m in &r.mitigations {
        let _ = writeln!(
            out,
            "  {:<8} {:<8} {:<12} {:<12} {:<10} {:<16} {}",
            m.mid,
            m.sid,
            format!("{:?}", m.kind),
            format!("{:?}", m.scope),
            format!("{:?}", m.status),
            m.owner,
            m.description
        );
    }
    let _ = writeln!(out);
    match &r.delta {
        DeltaSection::SingleScan => {
            let _ = writeln!(out, "delta: single scan");
        }
        DeltaSection::Incomparable { reason } => {
            let _ = writeln!(out, "delta: not comparable ({reason})");
        }
        DeltaSection::Delta(d) => {
            let _ = writeln!(out, "delta:");
            out.push_str(&delta_text(d));
        }
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "engagements: {}", r.engagements.len());
    for e in &r.engagements {
        let _ = writeln!(
            out,
            "  {} {} via {}: {} concern(s) -> {}",
            e.eid,
            e.stakeholder,
            e.channel,
            e.concerns.len(),
            e.resulting_changes.join(" ")
        );
    }
    out
}

/// The mitigation status table.
pub fn review_csv(r: &ReviewReport) -> String {
    csv_table(
        &["mid", "sid", "kind", "scope", "owner", "status", "description"],
        r.mitigations.iter().map(|m| {
            vec![
                m.mid.clone(),
                m.sid.clone(),
                format!("{:?}", m.kind),
                format!("{:?}", m.scope),
                m.owner.clone(),
                format!("{:?}", m.status),
                m.description.clone(),
            ]
        }),
    )
}

// ---------------------------------------------------------------------------

pub fn aggregate_text(g: &GroupStats) -> String {
    let mut out = String::new();
    if g.is_empty() {
        out.push_str("Empty\n");
        return out;
    }
    let _ = writeln!(out, "organizations: {}  scans: {}", g.n_orgs, g.n_scans);
    let _ = writeln!(out, "{:<36} {:>4} {:>8} {:>8} {:>8}", "dimension", "n", "mean", "median", "stddev");
    for dim in Dimension::all() {
        let key = dim.to_string();
        let s = &g.dimensions[&key];
        let _ = writeln!(
            out,
            "{:<36} {:>4} {:>8} {:>8} {:>8}",
            key,
            s.n,
            fmt_opt(s.mean),
            fmt_opt(s.median),
            fmt_opt(s.stddev)
        );
    }
    let exposure: Vec<String> = g.pitfall_exposure.iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "pitfall exposure: {}", exposure.join(" > "));
    let _ = writeln!(out, "most flagged:");
    for f in &g.most_flagged {
        let _ = writeln!(out, "  {} {}", f.qid, f.count);
    }
    out
}

pub fn aggregate_csv(g: &GroupStats) -> String {
    csv_table(
        &["dimension", "n", "mean", "median", "stddev"],
        Dimension::all().into_iter().filter_map(|dim| {
            let key = dim.to_string();
            g.dimensions.get(&key).map(|s| {
                vec![
                    key,
                    s.n.to_string(),
                    fmt_opt(s.mean),
                    fmt_opt(s.median),
                    fmt_opt(s.stddev),
                ]
            })
        }),
    )
}

pub fn benchmark_text(b: &BenchmarkReport) -> String {
    let mut out = String::new();
    let kind = match &b.subject {
        crate::insights::Subject::Organization(_) => "organization",
        crate::insights::Subject::UseCase(_) => "use-case",
    };
    let _ = writeln!(out, "subject: {} {}", kind, b.subject.id());
    let _ = writeln!(out, "subject scans: {}", b.subject_scans.join(" "));
    let _ = writeln!(out, "cohort: {} scans from {} organizations", b.cohort.n_scans, b.cohort.n_orgs);
    let _ = writeln!(
        out,
        "{:<36} {:>8} {:>10} {:>8} {:>6}",
        "dimension", "subject", "percentile", "cohort", "n"
    );
    for dim in Dimension::all() {
        let key = dim.to_string();
        let d = &b.dimensions[&key];
        let mean = b.cohort.dimensions.get(&key).and_then(|s| s.mean);
        let _ = writeln!(
            out,
            "{:<36} {:>8} {:>10} {:>8} {:>6}",
            key,
            fmt_opt(d.subject_score),
            d.percentile.map_or_else(|| ABSENT.to_string(), |p| format!("{p:.4}")),
            fmt_opt(mean),
            d.cohort_n
        );
    }
    out
}

pub fn benchmark_csv(b: &BenchmarkReport) -> String {
    csv_table(
        &["dimension", "subject_score", "percentile", "cohort_mean", "cohort_n"],
        Dimension::all().into_iter().map(|dim| {
            let key = dim.to_string();
            let d = &b.dimensions[&key];
            let mean = b.cohort.dimensions.get(&key).and_then(|s| s.mean);
            vec![
                key,
                fmt_opt(d.subject_score),
                d.percentile.map_or_else(|| ABSENT.to_string(), |p| format!("{p:.6}")),
                fmt_opt(mean),
                d.cohort_n.to_string(),
            ]
        }),
    )
}

pub fn candidates_text(list: &[RefinementCandidate]) -> String {
    let mut out = String::new();
    for c in list {
        let _ = writeln!(
            out,
            "{:<10} {:<15} {:>4}  {}",
            c.qid.as_deref().unwrap_or("-"),
            format!("{:?}", c.kind),
            c.count,
            c.sample_notes.join(" | ")
        );
    }
    out
}

pub fn candidates_csv(list: &[RefinementCandidate]) -> String {
    csv_table(
        &["qid", "kind", "count", "sample_notes"],
        list.iter().map(|c| {
            vec![
                c.qid.clone().unwrap_or_default(),
                format!("{:?}", c.kind),
                c.count.to_string(),
                c.sample_notes.join(" | "),
            ]
        }),
    )
}
