//! CSV and Markdown renderings of bench results.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::metrics::RunReport;

use super::config::Config;
use super::pipeline::{
    AblationRow, BenchOutcome, SweepPoint, ABLATION_CSV, BENCH_CSV, HIST_CSV, PROBE_CSV, SWEEP_CSV,
};

/// Modeled throughput per threshold, one row per policy.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("method");
    for p in points {
        write!(s, ",theta={}", p.theta).unwrap();
    }
    s.push('\n');
    let mut row = |name: &str, f: &dyn Fn(&SweepPoint) -> &RunReport| {
        s.push_str(name);
        for p in points {
            write!(s, ",{:.4}", f(p).tok_s_model).unwrap();
        }
        s.push('\n');
    };
    row("ddd", &|p| &p.ddd);
    row("ldlp-ddd", &|p| &p.combined);
    s
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("method,lambda,head,tau,tok_s,N_draft,N_target,N_waste,mean_raw,heldout_mae,best_constant_mae\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{:.4},{:.4},{},{},{},{:.4},{:.4},{:.4}",
            r.report.method,
            r.lambda,
            format!("{:?}", r.head).to_lowercase(),
            r.report.tau,
            r.report.tok_s_model,
            r.report.n_draft,
            r.report.n_target,
            r.report.n_waste,
            r.eval.mean_raw,
            r.eval.mae,
            r.eval.best_constant_mae
        )
        .unwrap();
    }
    s
}

/// Per-iteration draft length counts.
pub fn histogram_csv(hist: &[[usize; 3]]) -> String {
    let mut s = String::from("draft_len,ldlp,ldlp_no_penalty,oracle\n");
    for (k, row) in hist.iter().enumerate() {
        writeln!(s, "{k},{},{},{}", row[0], row[1], row[2]).unwrap();
    }
    s
}

/// Renders CSV text as a Markdown table.
pub fn csv_to_markdown(csv: &str) -> String {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let Some(header) = lines.next() else {
        return String::new();
    };
    let cols: Vec<&str> = header.split(',').collect();
    let mut s = format!("| {} |\n|{}\n", cols.join(" | "), "---|".repeat(cols.len()));
    for l in lines {
        writeln!(s, "| {} |", l.split(',').collect::<Vec<_>>().join(" | ")).unwrap();
    }
    s
}

/// Markdown summary of a bench run, including wall-clock figures.
pub fn bench_markdown(config: &Config, o: &BenchOutcome) -> String {
    let mut s = String::new();
    writeln!(s, "# Benchmark summary\n").unwrap();
    writeln!(
        s,
        "{} evaluation prompts, {} tokens each at most, greedy decoding. Modeled costs: target {}, draft {}, length prediction {}.\n",
        o.n_prompts, config.max_tokens, config.cost.c_target, config.cost.c_draft, config.cost.c_policy
    )
    .unwrap();
    writeln!(
        s,
        "Every row below produced exactly the autoregressive output on every prompt.\n"
    )
    .unwrap();
    writeln!(s, "## Methods (modeled)\n").unwrap();
    let mut rows = String::from(crate::metrics::CSV_HEADER);
    rows.push('\n');
    for r in &o.main {
        rows.push_str(&crate::metrics::csv_row(&r.report));
        rows.push('\n');
    }
    s.push_str(&csv_to_markdown(&rows));
    writeln!(s, "\n## Methods (wall clock)\n").unwrap();
    writeln!(s, "| method | draft_len | tok/s | T_total (s) | T_draft (s) | T_target (s) | T_policy (s) |\n|---|---|---|---|---|---|---|").unwrap();
    for r in &o.main {
        let r = &r.report;
        writeln!(
            s,
            "| {} | {} | {:.0} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.method,
            r.draft_len,
            r.tok_s_wall,
            r.t_total_wall,
            r.t_draft_wall,
            r.t_target_wall,
            r.t_policy_wall
        )
        .unwrap();
    }
    writeln!(s, "\n## Threshold sweep (modeled tok/s)\n").unwrap();
    s.push_str(&csv_to_markdown(&sweep_csv(&o.sweep)));
    writeln!(s, "\n## Length predictor variants\n").unwrap();
    s.push_str(&csv_to_markdown(&ablation_csv(&o.ablation)));
    if let Some(r) = o.ablation.first() {
        writeln!(
            s,
            "\nBest constant length on held-out data: {} (MAE {:.4}, {} samples).",
            r.eval.best_constant, r.eval.best_constant_mae, r.eval.n_samples
        )
        .unwrap();
    }
    writeln!(s, "\n## Draft length distribution\n").unwrap();
    s.push_str(&csv_to_markdown(&histogram_csv(&o.histogram)));
    s
}

/// Markdown report assembled from whichever result CSVs exist in `dir`.
pub fn render_report(dir: &Path) -> Result<String> {
    let mut s = String::from("# Results\n");
    let sections = [
        (BENCH_CSV, "Methods (modeled)"),
        (SWEEP_CSV, "Threshold sweep (modeled tok/s)"),
        (ABLATION_CSV, "Length predictor variants"),
        (HIST_CSV, "Draft length distribution"),
        (PROBE_CSV, "Agreement by history gap"),
    ];
    let mut found = false;
    for (file, title) in sections {
        let p = dir.join(file);
        if p.exists() {
            found = true;
            write!(
                s,
                "\n## {title}\n\n{}",
                csv_to_markdown(&std::fs::read_to_string(p)?)
            )
            .unwrap();
        }
    }
    if !found {
        return Err(crate::error::Error::MissingArtifact {
            stage: "bench".into(),
            path: dir.join(BENCH_CSV),
        });
    }
    Ok(s)
}
