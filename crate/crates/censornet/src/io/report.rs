//! Report emission: a quantile summary CSV and one self-contained SVG
//! boxplot per (mode, method, projection, eval-point) group, with boxes in
//! ascending lambda order, reference lines at the lambda = 0 control
//! quartiles and mean, and significance-tier annotations above the boxes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Error;
use crate::io::sweep::ResultRow;
use crate::stats::{paired_t_test, summarize, SigTier, Summary};

pub const SUMMARY_HEADER: &str = "censor_mode,censor_method,projection,eval_point,lambda,n,test_ba_min,test_ba_q1,test_ba_median,test_ba_q3,test_ba_max,test_ba_mean,overfit_min,overfit_q1,overfit_median,overfit_q3,overfit_max,overfit_mean,t_stat,p_value,tier";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct GroupKey {
    mode: String,
    method: String,
    projection: String,
    eval_point: String,
}

/// Sortable wrapper so lambdas order a BTreeMap (all finite, >= 0).
#[derive(Debug, Clone, Copy, PartialEq)]
struct Lambda(f64);
impl Eq for Lambda {}
impl PartialOrd for Lambda {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Lambda {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.partial_cmp(&other.0).unwrap()
    }
}

struct CellStats {
    lambda: f64,
    test_ba: Summary,
    overfit: Summary,
    /// vs the matched lambda = 0 controls; `None` when the test is
    /// undefined (too few pairs or zero variance).
    t: Option<(f64, f64, SigTier)>,
}

fn ok_rows(rows: &[ResultRow]) -> Vec<&ResultRow> {
    rows.iter()
        .filter(|r| r.status == "ok" && r.test_ba.is_some())
        .collect()
}

fn build_groups(
    rows: &[ResultRow],
) -> Result<(BTreeMap<GroupKey, Vec<CellStats>>, Option<(Summary, Summary)>), Error> {
    let ok = ok_rows(rows);
    if ok.is_empty() {
        return Err(Error::Config("no successful rows to report".into()));
    }
    let mut controls: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut control_ba = Vec::new();
    let mut control_of = Vec::new();
    for r in &ok {
        if r.censor_mode == "none" {
            controls.insert((r.seed, r.fold), r.test_ba.unwrap());
            control_ba.push(r.test_ba.unwrap());
            if let Some(o) = r.overfit_ratio {
                control_of.push(o);
            }
        }
    }
    let control_summary = if control_ba.is_empty() {
        None
    } else {
        Some((summarize(&control_ba)?, summarize(&control_of)?))
    };

    let mut cells: BTreeMap<(GroupKey, Lambda), Vec<&ResultRow>> = BTreeMap::new();
    for r in &ok {
        if r.censor_mode == "none" {
            continue;
        }
        let key = GroupKey {
            mode: r.censor_mode.clone(),
            method: r.censor_method.clone(),
            projection: r.projection.clone(),
            eval_point: r.eval_point.clone(),
        };
        cells.entry((key, Lambda(r.lambda))).or_default().push(r);
    }
    let mut groups: BTreeMap<GroupKey, Vec<CellStats>> = BTreeMap::new();
    for ((key, lambda), cell_rows) in cells {
        let ba: Vec<f64> = cell_rows.iter().map(|r| r.test_ba.unwrap()).collect();
        let of: Vec<f64> = cell_rows.iter().filter_map(|r| r.overfit_ratio).collect();
        // pair each run with its (seed, fold) control
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in &cell_rows {
            if let Some(&c) = controls.get(&(r.seed, r.fold)) {
                a.push(r.test_ba.unwrap());
                b.push(c);
            }
        }
        let t = paired_t_test(&a, &b).ok().map(|r| (r.t, r.p, r.tier));
        groups.entry(key).or_default().push(CellStats {
            lambda: lambda.0,
            test_ba: summarize(&ba)?,
            overfit: summarize(&if of.is_empty() { ba.clone() } else { of })?,
            t,
        });
    }
    Ok((groups, control_summary))
}

fn summary_csv(
    groups: &BTreeMap<GroupKey, Vec<CellStats>>,
    control: &Option<(Summary, Summary)>,
) -> String {
    let mut out = String::new();
    out.push_str("# quantile rule: linear interpolation between order statistics\n");
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    let fmt_summary = |s: &Summary| {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            s.min, s.q1, s.median, s.q3, s.max
        )
    };
    if let Some((ba, of)) = control {
        let _ = writeln!(
            out,
            "none,none,trivial,final,0,{},{},{:.6},{},{:.6},,,-",
            ba.n,
            fmt_summary(ba),
            ba.mean,
            fmt_summary(of),
            of.mean
        );
    }
    for (key, cells) in groups {
        for c in cells {
            let (t_s, p_s, tier_s) = match &c.t {
                Some((t, p, tier)) => (format!("{:.6}", t), format!("{:.6}", p), tier.symbol().to_string()),
                None => (String::new(), String::new(), "-".to_string()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6},{},{:.6},{},{},{}",
                key.mode,
                key.method,
                key.projection,
                key.eval_point,
                c.lambda,
                c.test_ba.n,
                fmt_summary(&c.test_ba),
                c.test_ba.mean,
                fmt_summary(&c.overfit),
                c.overfit.mean,
                t_s,
                p_s,
                tier_s
            );
        }
    }
    out
}

fn boxplot_svg(key: &GroupKey, cells: &[CellStats], control: &Option<(Summary, Summary)>) -> String {
    let margin_left = 60.0;
    let margin_top = 40.0;
    let box_slot = 70.0;
    let plot_h = 240.0;
    let width = margin_left + cells.len() as f64 * box_slot + 30.0;
    let height = margin_top + plot_h + 50.0;
    let y = |v: f64| margin_top + (1.0 - v.clamp(0.0, 1.0)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">",
        width, height, width, height
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">test balanced accuracy: {} / {} / {} / {}</text>",
        margin_left, key.mode, key.method, key.projection, key.eval_point
    );
    // y axis with ticks
    let _ = writeln!(
        s,
        "<line x1=\"{l:.1}\" y1=\"{t:.1}\" x2=\"{l:.1}\" y2=\"{b:.1}\" stroke=\"black\"/>",
        l = margin_left - 10.0,
        t = margin_top,
        b = margin_top + plot_h
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let ty = y(tick);
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{ty:.1}\" x2=\"{:.1}\" y2=\"{ty:.1}\" stroke=\"black\"/><text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{tick}</text>",
            margin_left - 14.0,
            margin_left - 10.0,
            margin_left - 17.0,
            ty + 3.0
        );
    }
    // control reference lines: quartiles dashed, mean solid
    if let Some((ba, _)) = control {
        let x2 = width - 20.0;
        for (v, dash) in [(ba.q1, true), (ba.median, true), (ba.q3, true), (ba.mean, false)] {
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#888\" {}/>",
                margin_left - 10.0,
                y(v),
                x2,
                y(v),
                if dash { "stroke-dasharray=\"4 3\"" } else { "" }
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"9\" fill=\"#888\">control mean</text>",
            width - 90.0,
            y(ba.mean) - 3.0
        );
    }
    for (i, c) in cells.iter().enumerate() {
        let cx = margin_left + (i as f64 + 0.5) * box_slot;
        let half = 18.0;
        // whiskers
        let _ = writeln!(
            s,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            y(c.test_ba.min),
            y(c.test_ba.max)
        );
        for v in [c.test_ba.min, c.test_ba.max] {
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
                cx - half / 2.0,
                y(v),
                cx + half / 2.0,
                y(v)
            );
        }
        // IQR box and median
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#cfe2f3\" stroke=\"black\"/>",
            cx - half,
            y(c.test_ba.q3),
            2.0 * half,
            (y(c.test_ba.q1) - y(c.test_ba.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>",
            cx - half,
            y(c.test_ba.median),
            cx + half,
            y(c.test_ba.median)
        );
        // tier annotation above, lambda label below
        if let Some((_, _, tier)) = &c.t {
            let _ = writeln!(
                s,
                "<text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
                y(c.test_ba.max) - 8.0,
                tier.symbol()
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            margin_top + plot_h + 18.0,
            c.lambda
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">lambda</text>",
        margin_left + cells.len() as f64 * box_slot / 2.0,
        margin_top + plot_h + 38.0
    );
    s.push_str("</svg>\n");
    s
}

/// Write `summary.csv` plus one boxplot SVG per group; returns the paths
/// written.
pub fn emit_report(rows: &[ResultRow], out_dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let (mut groups, control) = build_groups(rows)?;
    // boxes within each group in ascending lambda order
    for cells in groups.values_mut() {
        cells.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let summary_path = out_dir.join("summary.csv");
    std::fs::write(&summary_path, summary_csv(&groups, &control))?;
    written.push(summary_path);
    for (key, cells) in &groups {
        let name = format!(
            "box_{}_{}_{}_{}.svg",
            key.mode, key.method, key.projection, key.eval_point
        );
        let path = out_dir.join(name);
        std::fs::write(&path, boxplot_svg(key, cells, &control))?;
        written.push(path);
    }
    Ok(written)
}
