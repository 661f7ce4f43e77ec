//! Across-run aggregates: best-so-far curves and the phase in which each
//! run found its final genome.

use std::fmt::Write as _;

use crate::protocol::GenerationRecord;

/// Number of budget phases in [`phase_histogram`].
pub const PHASES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub episodes: u64,
    pub mean_best_so_far: f64,
}

/// Running maximum of each generation's performance, as (episodes, value).
pub fn running_best(records: &[GenerationRecord]) -> Vec<(u64, f64)> {
    let mut best = f64::NEG_INFINITY;
    records
        .iter()
        .map(|r| {
            best = best.max(r.best_performance);
            (r.episodes_used, best)
        })
        .collect()
}

/// Mean best-so-far performance across runs.
///
/// The grid is the union of every run's generation boundaries. Between
/// boundaries a run holds its last value; before its first boundary it takes
/// its first value. Runs without records are skipped.
pub fn best_so_far_curve<R: AsRef<[GenerationRecord]>>(runs: &[R]) -> Vec<CurvePoint> {
    let steps: Vec<Vec<(u64, f64)>> = runs
        .iter()
        .map(|r| running_best(r.as_ref()))
        .filter(|s| !s.is_empty())
        .collect();
    if steps.is_empty() {
        return Vec::new();
    }
    let mut grid: Vec<u64> = steps.iter().flatten().map(|&(e, _)| e).collect();
    grid.sort_unstable();
    grid.dedup();

    let mut cursor = vec![0usize; steps.len()];
    grid.into_iter()
        .map(|e| {
            let mut sum = 0.0;
            for (s, c) in steps.iter().zip(cursor.iter_mut()) {
                while *c + 1 < s.len() && s[*c + 1].0 <= e {
                    *c += 1;
                }
                sum += s[*c].1;
            }
            CurvePoint {
                episodes: e,
                mean_best_so_far: sum / steps.len() as f64,
            }
        })
        .collect()
}

/// Budget phase (0..10) in which `evaluation_at_best` falls.
pub fn phase_index(evaluation_at_best: u64, budget: u64) -> usize {
    if budget == 0 {
        return PHASES - 1;
    }
    let phase = (PHASES as u128 * evaluation_at_best as u128 / budget as u128) as usize;
    phase.min(PHASES - 1)
}

/// Fraction of runs whose best genome appeared in each tenth of the budget.
/// Input pairs are `(evaluation_at_best, budget)`. All zeros for no runs.
pub fn phase_histogram(runs: &[(u64, u64)]) -> [f64; PHASES] {
    let mut h = [0.0; PHASES];
    for &(at, budget) in runs {
        h[phase_index(at, budget)] += 1.0;
    }
    if !runs.is_empty() {
        for v in &mut h {
            *v /= runs.len() as f64;
        }
    }
    h
}

/// Minimal standalone SVG line plot of a curve.
pub fn curve_svg(curve: &[CurvePoint], title: &str) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let x_max = curve.last().map_or(1, |p| p.episodes.max(1)) as f64;
    let y_max = curve
        .iter()
        .map(|p| p.mean_best_so_far)
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let sx = |e: u64| PAD + (W - 2.0 * PAD) * e as f64 / x_max;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * v / y_max;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let mut d = String::new();
    for (i, p) in curve.iter().enumerate() {
        let _ = write!(
            d,
            "{}{:.2} {:.2} ",
            if i == 0 { "M" } else { "L" },
            sx(p.episodes),
            sy(p.mean_best_so_far)
        );
    }
    let _ = writeln!(
        svg,
        r#"<path d="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        d.trim_end()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="14">{}</text>"#,
        PAD - 15.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="end">episodes ({x_max})</text>"#,
        W - PAD,
        H - PAD + 30.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{y_max:.4}</text>"#,
        5.0,
        PAD + 4.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
