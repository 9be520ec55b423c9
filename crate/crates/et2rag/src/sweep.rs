//! Cost accounting, the (L, V) grid sweep, and Pareto-frontier
//! extraction.
//!
//! Cost is measured in tokens the backend actually emitted, not the L
//! budget, since candidates may stop early. In prefix-continuation
//! mode the extra cost of a query is
//! `candidate_tokens + final_tokens - baseline_tokens` (floored at 0);
//! when the baseline equals the final generation path this reduces to
//! the losing candidates' tokens. In regenerate mode all V truncated
//! candidates are pure overhead, so the extra cost is
//! `candidate_tokens`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::error::{Error, Result};
use crate::generation::FinalMode;
use crate::pipeline::{self, DatasetItem};
use crate::types::BudgetParams;

/// Token accounting for one query's pipeline run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    /// sum of gen_token_cost over all candidates
    pub candidate_tokens: usize,
    /// tokens emitted by the final generation beyond the reused prefix
    pub final_tokens: usize,
    /// tokens a single plain response would emit
    pub baseline_tokens: usize,
}

/// Extra tokens this query spent relative to a single plain response.
pub fn extra_cost(ledger: &CostLedger, final_mode: FinalMode) -> usize {
    match final_mode {
        FinalMode::Regenerate => ledger.candidate_tokens,
        FinalMode::Continue => (ledger.candidate_tokens + ledger.final_tokens)
            .saturating_sub(ledger.baseline_tokens),
    }
}

/// One (L, V) configuration's measured quality and cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub response_length: usize,
    pub vote_size: usize,
    pub quality: f64,
    /// mean extra tokens per query
    pub cost: f64,
    pub n_queries: usize,
    pub failures: usize,
}

/// A grid point that could not be evaluated at all.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedPoint {
    pub response_length: usize,
    pub vote_size: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub failed: Vec<FailedPoint>,
}

/// Non-dominated points under (minimize cost, maximize quality),
/// sorted by cost ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFrontier {
    pub points: Vec<SweepPoint>,
}

/// Exact 2-D non-dominated set. A point is dominated when another has
/// cost <= and quality >= with at least one strict.
pub fn pareto_frontier(points: &[SweepPoint]) -> ParetoFrontier {
    let mut sorted: Vec<SweepPoint> = points.to_vec();
    sorted.sort_by(|a, b| {
        a.cost
            .partial_cmp(&b.cost)
            .unwrap()
            .then(b.quality.partial_cmp(&a.quality).unwrap())
            .then(a.response_length.cmp(&b.response_length))
            .then(a.vote_size.cmp(&b.vote_size))
    });

    let mut frontier: Vec<SweepPoint> = Vec::new();
    for point in sorted {
        match frontier.last() {
            None => frontier.push(point),
            Some(last) => {
                if point.quality > last.quality {
                    frontier.push(point);
                } else if point.quality == last.quality && point.cost == last.cost {
                    // exact duplicates dominate nothing and are kept
                    frontier.push(point);
                }
            }
        }
    }
    ParetoFrontier { points: frontier }
}

/// Runs the full pipeline once per (L, V) grid point. Failed points
/// are recorded with their reason and the sweep continues.
pub fn run_sweep(
    loaded: &LoadedConfig,
    dataset: &[DatasetItem],
    l_grid: &[usize],
    v_grid: &[usize],
    workers: Option<usize>,
) -> Result<SweepOutcome> {
    if l_grid.is_empty() || v_grid.is_empty() {
        return Err(Error::Config("sweep grids must not be empty".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Config("sweep dataset must not be empty".into()));
    }
    let mut points = Vec::new();
    let mut failed = Vec::new();
    for &vote_size in v_grid {
        for &response_length in l_grid {
            let budget = BudgetParams {
                response_length,
                vote_size,
            };
            match pipeline::run_batch_with_budget(loaded, budget, dataset, workers) {
                Ok(batch) => points.push(SweepPoint {
                    response_length,
                    vote_size,
                    quality: batch.summary.quality,
                    cost: batch.summary.mean_extra_cost,
                    n_queries: batch.summary.n_succeeded,
                    failures: batch.summary.n_failed,
                }),
                Err(e) => failed.push(FailedPoint {
                    response_length,
                    vote_size,
                    reason: e.to_string(),
                }),
            }
        }
    }
    Ok(SweepOutcome { points, failed })
}

pub const CSV_HEADER: [&str; 6] = ["L", "V", "quality", "cost", "n_queries", "failures"];

/// Writes sweep results as CSV. Grid points that failed entirely get
/// empty quality/cost cells and carry their reason in no column (it is
/// reported on stderr by the CLI); `pareto` skips such rows.
pub fn write_sweep_csv(outcome: &SweepOutcome, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Config(format!("writing {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::Config(format!("writing {}: {e}", path.display()));
    writer.write_record(CSV_HEADER).map_err(io_err)?;
    for p in &outcome.points {
        writer
            .write_record([
                p.response_length.to_string(),
                p.vote_size.to_string(),
                format!("{:.6}", p.quality),
                format!("{:.6}", p.cost),
                p.n_queries.to_string(),
                p.failures.to_string(),
            ])
            .map_err(io_err)?;
    }
    for f in &outcome.failed {
        writer
            .write_record([
                f.response_length.to_string(),
                f.vote_size.to_string(),
                String::new(),
                String::new(),
                "0".into(),
                "0".into(),
            ])
            .map_err(io_err)?;
    }
    writer.flush().map_err(|e| Error::io("flushing csv", e))?;
    Ok(())
}

/// Reads a sweep CSV back into points, skipping failed rows.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepPoint>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?
        .clone();
    for required in CSV_HEADER {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Config(format!(
                "{}: missing column {required:?}",
                path.display()
            )));
        }
    }
    let column = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (li, vi, qi, ci, ni, fi) = (
        column("L"),
        column("V"),
        column("quality"),
        column("cost"),
        column("n_queries"),
        column("failures"),
    );

    let mut points = Vec::new();
    for (row_number, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parse_err = |field: &str| {
            Error::Config(format!(
                "{} row {}: bad {field} value",
                path.display(),
                row_number + 2
            ))
        };
        if row[qi].is_empty() || row[ci].is_empty() {
            continue; // failed grid point
        }
        points.push(SweepPoint {
            response_length: row[li].parse().map_err(|_| parse_err("L"))?,
            vote_size: row[vi].parse().map_err(|_| parse_err("V"))?,
            quality: row[qi].parse().map_err(|_| parse_err("quality"))?,
            cost: row[ci].parse().map_err(|_| parse_err("cost"))?,
            n_queries: row[ni].parse().map_err(|_| parse_err("n_queries"))?,
            failures: row[fi].parse().map_err(|_| parse_err("failures"))?,
        });
    }
    Ok(points)
}

/// Writes a quality-vs-cost scatter with the frontier highlighted.
pub fn write_svg(points: &[SweepPoint], frontier: &ParetoFrontier, path: &Path) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 50.0;

    let (mut min_c, mut max_c) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_q, mut max_q) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_c = min_c.min(p.cost);
        max_c = max_c.max(p.cost);
        min_q = min_q.min(p.quality);
        max_q = max_q.max(p.quality);
    }
    if !min_c.is_finite() {
        (min_c, max_c, min_q, max_q) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let x = |c: f64| MARGIN + (c - min_c) / span(min_c, max_c) * (W - 2.0 * MARGIN);
    let y = |q: f64| H - MARGIN - (q - min_q) / span(min_q, max_q) * (H - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">cost (mean extra tokens)</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">quality</text>"#,
        H / 2.0,
        H / 2.0
    );
    for p in points {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="4" fill="#9aa7b1"><title>L={} V={} q={:.4} c={:.2}</title></circle>"##,
            x(p.cost),
            y(p.quality),
            p.response_length,
            p.vote_size,
            p.quality,
            p.cost
        );
    }
    let path_points: Vec<String> = frontier
        .points
        .iter()
        .map(|p| format!("{:.1},{:.1}", x(p.cost), y(p.quality)))
        .collect();
    if path_points.len() > 1 {
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="1.5"/>"##,
            path_points.join(" ")
        );
    }
    for p in &frontier.points {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.1}" cy="{:.1}" r="5" fill="#c0392b"><title>frontier L={} V={}</title></circle>"##,
            x(p.cost),
            y(p.quality),
            p.response_length,
            p.vote_size
        );
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
