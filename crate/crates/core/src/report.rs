//! Report rendering and the on-disk report directory.
//!
//! A finished audit writes: report.json (full precision), report.csv (one
//! row per n per test), rows.csv (per-instance results), plot_fidelity.csv,
//! plot_mmd_fidelity.csv, report.md, and MANIFEST.json. Every file embeds
//! the provenance block; numbers in the rendered files carry 6 significant
//! digits, full precision lives only in report.json.

use std::path::Path;

use crate::audit::{AuditReport, AuditRow, TestAggregate};
use crate::config::{sha256_hex, Provenance};
use crate::error::{Error, Result};

/// Formats with up to 6 significant digits, trailing zeros trimmed.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let mut s = format!("{:.*}", decimals, x);
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Percent with one decimal, printed as an integer when whole.
pub fn pct(count: usize, total: usize) -> String {
    let p = 100.0 * count as f64 / total.max(1) as f64;
    let tenths = (p * 10.0).round() / 10.0;
    if (tenths - tenths.round()).abs() < 1e-9 {
        format!("{}%", tenths.round() as i64)
    } else {
        format!("{tenths:.1}%")
    }
}

/// One markdown table row in the report layout:
/// `| n | reject (pct) | fail (pct) | mmd ± std |`.
pub fn md_row(n: usize, agg: &TestAggregate) -> String {
    let total = agg.reject_count + agg.fail_count;
    format!(
        "| {} | {} ({}) | {} ({}) | {} ± {} |",
        n,
        agg.reject_count,
        pct(agg.reject_count, total),
        agg.fail_count,
        pct(agg.fail_count, total),
        format_sig(agg.scaled_mean),
        format_sig(agg.scaled_std),
    )
}

fn provenance_lines(p: &Provenance, comment: &str) -> String {
    format!(
        "{comment} artifact_version: {}\n{comment} seed: {}\n{comment} config_digest: {}\n{comment} train_digest: {}\n{comment} test_digest: {}\n{comment} scorer: {}\n",
        p.artifact_version, p.seed, p.config_digest, p.train_digest, p.test_digest, p.scorer
    )
}

fn opt_pearson(p: &Option<f64>) -> String {
    match p {
        Some(r) => format_sig(*r),
        None => "undefined".into(),
    }
}

pub fn render_markdown(report: &AuditReport) -> String {
    let mut out = String::new();
    out.push_str("# Shift audit report\n\n");
    out.push_str(&provenance_lines(&report.provenance, ">"));
    out.push('\n');

    out.push_str("## Data shift two-sample test\n\n");
    out.push_str("| n | Reject | Failed to reject | MMD |\n|---|---|---|---|\n");
    for row in &report.aggregates {
        out.push_str(&md_row(row.n, &row.data_shift));
        out.push('\n');
    }
    out.push('\n');

    out.push_str("## Label shift two-sample test\n\n");
    out.push_str("| n | Reject | Failed to reject | MMD |\n|---|---|---|---|\n");
    for row in &report.aggregates {
        out.push_str(&md_row(row.n, &row.label_shift));
        out.push('\n');
    }
    out.push('\n');

    out.push_str("## Fidelity\n\n");
    out.push_str("| n | fidelity |\n|---|---|\n");
    for row in &report.aggregates {
        out.push_str(&format!(
            "| {} | {} ± {} |\n",
            row.n,
            format_sig(row.fidelity_mean),
            format_sig(row.fidelity_std)
        ));
    }
    out.push('\n');

    out.push_str("## MMD-fidelity correlation (all instances and sizes)\n\n");
    out.push_str(&format!(
        "- data shift: {}\n- label shift: {}\n",
        opt_pearson(&report.data_pearson_mmd_fidelity),
        opt_pearson(&report.label_pearson_mmd_fidelity)
    ));
    out
}

pub fn render_report_csv(report: &AuditReport) -> String {
    let mut out = provenance_lines(&report.provenance, "#");
    out.push_str("test,n,instances,reject_count,reject_fraction,fail_count,fail_fraction,mmd_b_mean,mmd_b_std,scaled_mean,scaled_std,fidelity_mean,fidelity_std,pearson_mmd_fidelity\n");
    for row in &report.aggregates {
        for (test, agg) in [("data", &row.data_shift), ("label", &row.label_shift)] {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                test,
                row.n,
                row.instances,
                agg.reject_count,
                format_sig(agg.reject_fraction),
                agg.fail_count,
                format_sig(agg.fail_fraction),
                format_sig(agg.mmd_mean),
                format_sig(agg.mmd_std),
                format_sig(agg.scaled_mean),
                format_sig(agg.scaled_std),
                format_sig(row.fidelity_mean),
                format_sig(row.fidelity_std),
                opt_pearson(&agg.pearson_mmd_fidelity),
            ));
        }
    }
    out
}

pub fn render_rows_csv(provenance: &Provenance, rows: &[AuditRow]) -> String {
    let mut out = provenance_lines(provenance, "#");
    out.push_str("instance_id,n,data_mmd_b,data_scaled,data_threshold,data_reject,label_mmd_b,label_scaled,label_threshold,label_reject,fidelity,f_y_at_x,g_y_at_x\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.instance_id,
            r.n,
            format_sig(r.data_shift.mmd_b),
            format_sig(r.data_shift.scaled_stat),
            format_sig(r.data_shift.threshold),
            r.data_shift.reject,
            format_sig(r.label_shift.mmd_b),
            format_sig(r.label_shift.scaled_stat),
            format_sig(r.label_shift.threshold),
            r.label_shift.reject,
            format_sig(r.fidelity),
            format_sig(r.f_y_at_x),
            format_sig(r.g_y_at_x),
        ));
    }
    out
}

/// Mean fidelity against n: the data behind the fidelity-vs-sample-size plot.
pub fn render_plot_fidelity_csv(report: &AuditReport) -> String {
    let mut out = provenance_lines(&report.provenance, "#");
    out.push_str("n,fidelity_mean,fidelity_std\n");
    for row in &report.aggregates {
        out.push_str(&format!(
            "{},{},{}\n",
            row.n,
            format_sig(row.fidelity_mean),
            format_sig(row.fidelity_std)
        ));
    }
    out
}

/// Per-instance statistic/fidelity pairs: the data behind the divergence-
/// versus-fidelity scatter.
pub fn render_plot_mmd_fidelity_csv(provenance: &Provenance, rows: &[AuditRow]) -> String {
    let mut out = provenance_lines(provenance, "#");
    out.push_str("test,n,instance_id,mmd_b,fidelity\n");
    for (test, pick) in [
        ("data", (|r: &AuditRow| r.data_shift.mmd_b) as fn(&AuditRow) -> f64),
        ("label", |r: &AuditRow| r.label_shift.mmd_b),
    ] {
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                test,
                r.n,
                r.instance_id,
                format_sig(pick(r)),
                format_sig(r.fidelity)
            ));
        }
    }
    out
}

/// Writes the full report directory and its manifest.
pub fn write_report_dir(dir: &Path, report: &AuditReport, rows: &[AuditRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("report.json", serde_json::to_string(report)? + "\n"),
        ("report.csv", render_report_csv(report)),
        ("rows.csv", render_rows_csv(&report.provenance, rows)),
        ("plot_fidelity.csv", render_plot_fidelity_csv(report)),
        (
            "plot_mmd_fidelity.csv",
            render_plot_mmd_fidelity_csv(&report.provenance, rows),
        ),
        ("report.md", render_markdown(report)),
    ];
    let mut manifest = serde_json::Map::new();
    manifest.insert(
        "provenance".into(),
        serde_json::to_value(&report.provenance)?,
    );
    let mut listing = Vec::new();
    for (name, content) in &files {
        std::fs::write(dir.join(name), content)?;
        listing.push(serde_json::json!({
            "name": name,
            "bytes": content.len(),
            "sha256": sha256_hex(content.as_bytes()),
        }));
    }
    manifest.insert("files".into(), serde_json::Value::Array(listing));
    std::fs::write(
        dir.join("MANIFEST.json"),
        serde_json::to_string_pretty(&serde_json::Value::Object(manifest))? + "\n",
    )?;
    Ok(())
}

/// Failure path: dump completed rows and the error before aborting.
pub fn write_partial(
    dir: &Path,
    provenance: &Provenance,
    rows: &[AuditRow],
    error: &Error,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("rows_partial.csv"), render_rows_csv(provenance, rows))?;
    let manifest = serde_json::json!({
        "provenance": provenance,
        "error": error.to_string(),
        "completed_rows": rows.len(),
    });
    std::fs::write(
        dir.join("error_manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

pub fn load_report(dir: &Path) -> Result<AuditReport> {
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)?;
    Ok(serde_json::from_str(&text)?)
}
