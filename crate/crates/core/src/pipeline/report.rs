//! Report assembly: the per-feature AUC table, best-layer histograms and
//! KDE curves per feature class, significance tests, and CSV/JSON/SVG
//! emission. Plot data is emitted as CSV so any plotting tool can consume
//! it; the built-in SVG emitter covers the scatter, KDE and bar shapes.

use crate::features::FeatureClass;
use crate::probe::{results_from_records, summarize_all, FeatureSummary, ProbeGrid, ResultRecord};
use crate::sgf::GameRecord;
use crate::stats::{
    best_layer_histogram, pearson, wilcoxon_signed_rank, Alternative, KdeCurve, PairedSample,
    TestResult,
};
use crate::text::{keyword_document_frequencies, Vocabulary};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{0}")]
    Probe(#[from] crate::probe::ProbeError),
    #[error("no results to report")]
    Empty,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How max-AUC pairs are formed when comparing two runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// One pair per feature: max mean AUC in run A vs run B.
    ByFeature,
    /// One pair per (feature, fold): the fold's AUC at each run's best
    /// layer for that feature.
    ByFeatureFold,
}

pub struct ReportInputs {
    /// Named result sets; the first is the primary run.
    pub runs: Vec<(String, Vec<ResultRecord>)>,
    pub vocabulary: Vocabulary,
    /// When available, used for the keyword-frequency histogram.
    pub corpus: Option<Vec<GameRecord>>,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub feature: String,
    pub class: String,
    /// Per run name: (max mean AUC, best layer).
    pub per_run: BTreeMap<String, (f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: Vec<usize>,
    pub kde: KdeCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTest {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub feature: String,
    pub class: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub runs: Vec<String>,
    pub layer_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub manifest: RunManifest,
    pub feature_table: Vec<FeatureRow>,
    /// Best-layer histogram and KDE per feature class, primary run.
    pub class_histograms: BTreeMap<String, ClassHistogram>,
    pub tests: Vec<NamedTest>,
    /// Appendix-style document frequencies of the ten most common
    /// keywords (empty without a corpus).
    pub keyword_frequencies: Vec<(String, usize)>,
    /// Max-AUC pairs across the first two runs (empty for single runs).
    pub scatter: Vec<ScatterPoint>,
}

fn class_label(class: FeatureClass) -> &'static str {
    match class {
        FeatureClass::Pattern => "pattern",
        FeatureClass::Keyword => "keyword",
        FeatureClass::ControlFunction => "control-function",
        FeatureClass::ControlContent => "control-content",
    }
}

fn named_test(name: &str, result: &TestResult) -> NamedTest {
    NamedTest {
        name: name.to_owned(),
        statistic: result.statistic,
        p_value: result.p_value,
        n_effective: result.n_effective,
        method: match result.method {
            crate::stats::TestMethod::Exact => "exact".to_owned(),
            crate::stats::TestMethod::NormalApproximation => "normal-approximation".to_owned(),
        },
    }
}

struct RunSummary {
    name: String,
    summaries: Vec<FeatureSummary>,
    layer_names: Vec<String>,
    grid: ProbeGrid,
}

fn summarize_run(name: &str, records: &[ResultRecord]) -> Result<RunSummary, ReportError> {
    if records.is_empty() {
        return Err(ReportError::Empty);
    }
    let results = results_from_records(records)?;
    let mut layer_names: Vec<(usize, String)> = results
        .iter()
        .map(|r| (r.layer, r.layer_name.clone()))
        .collect();
    layer_names.sort();
    layer_names.dedup();
    let grid = ProbeGrid {
        results,
        diagnostics: Default::default(),
    };
    let summaries = summarize_all(&grid)?;
    Ok(RunSummary {
        name: name.to_owned(),
        summaries,
        layer_names: layer_names.into_iter().map(|(_, n)| n).collect(),
        grid,
    })
}

/// The keyword-vs-control pairing for this vocabulary: the bundled
/// pairing when the default vocabulary is in use, otherwise rank order
/// over the content controls.
fn matched_pairs(vocab: &Vocabulary) -> Vec<(String, String)> {
    let default = Vocabulary::default_paper();
    if *vocab == default {
        crate::text::default_matched_pairs()
    } else {
        vocab
            .keywords
            .iter()
            .zip(vocab.control_content.iter().chain(&vocab.control_function))
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect()
    }
}

/// Assemble a report from one or more result sets.
pub fn build_report(inputs: &ReportInputs) -> Result<Report, ReportError> {
    if inputs.runs.is_empty() {
        return Err(ReportError::Empty);
    }
    let runs: Vec<RunSummary> = inputs
        .runs
        .iter()
        .map(|(name, records)| summarize_run(name, records))
        .collect::<Result<_, _>>()?;
    let primary = &runs[0];
    let layer_count = primary.layer_names.len();

    // Feature table: every summarized feature once, columns per run.
    let mut feature_table: Vec<FeatureRow> = Vec::new();
    for summary in &primary.summaries {
        let class = FeatureClass::of(&summary.feature)
            .map(class_label)
            .unwrap_or("other")
            .to_owned();
        let mut per_run = BTreeMap::new();
        for run in &runs {
            if let Some(s) = run.summaries.iter().find(|s| s.feature == summary.feature) {
                per_run.insert(run.name.clone(), (s.max_mean_auc, s.best_layer));
            }
        }
        feature_table.push(FeatureRow {
            feature: summary.feature.clone(),
            class,
            per_run,
        });
    }

    // Best-layer histograms per class, primary run.
    let mut class_histograms = BTreeMap::new();
    for class in [
        FeatureClass::Pattern,
        FeatureClass::Keyword,
        FeatureClass::ControlFunction,
        FeatureClass::ControlContent,
    ] {
        let members: Vec<&FeatureSummary> = primary
            .summaries
            .iter()
            .filter(|s| FeatureClass::of(&s.feature) == Some(class))
            .collect();
        if members.is_empty() {
            continue;
        }
        if let Ok((counts, kde)) = best_layer_histogram(&members, layer_count) {
            class_histograms.insert(
                class_label(class).to_owned(),
                ClassHistogram { counts, kde },
            );
        }
    }

    let mut tests = Vec::new();
    // Keyword vs frequency-matched control, paired, within the primary
    // run.
    let by_feature: BTreeMap<&str, &FeatureSummary> = primary
        .summaries
        .iter()
        .map(|s| (s.feature.as_str(), s))
        .collect();
    let mut pairs = Vec::new();
    for (keyword, control) in matched_pairs(&inputs.vocabulary) {
        let k = by_feature.get(format!("keyword:{keyword}").as_str());
        let c = by_feature
            .get(format!("control-content:{control}").as_str())
            .or_else(|| by_feature.get(format!("control-function:{control}").as_str()));
        if let (Some(k), Some(c)) = (k, c) {
            pairs.push((k.max_mean_auc, c.max_mean_auc));
        }
    }
    if !pairs.is_empty() {
        if let Ok(result) =
            wilcoxon_signed_rank(&PairedSample { pairs }, Alternative::Greater)
        {
            tests.push(named_test(
                "keywords vs matched controls (max AUC, one-sided)",
                &result,
            ));
        }
    }

    // Cross-run comparisons on the first two runs.
    let mut scatter = Vec::new();
    if runs.len() >= 2 {
        let a = &runs[0];
        let b = &runs[1];
        let b_map: BTreeMap<&str, &FeatureSummary> =
            b.summaries.iter().map(|s| (s.feature.as_str(), s)).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut pairs = Vec::new();
        for s in &a.summaries {
            if let Some(other) = b_map.get(s.feature.as_str()) {
                xs.push(s.max_mean_auc);
                ys.push(other.max_mean_auc);
                pairs.push((s.max_mean_auc, other.max_mean_auc));
                scatter.push(ScatterPoint {
                    feature: s.feature.clone(),
                    class: FeatureClass::of(&s.feature)
                        .map(class_label)
                        .unwrap_or("other")
                        .to_owned(),
                    x: s.max_mean_auc,
                    y: other.max_mean_auc,
                });
            }
        }
        if let Ok(r) = pearson(&xs, &ys) {
            tests.push(NamedTest {
                name: format!("pearson max AUC: {} vs {}", a.name, b.name),
                statistic: r,
                p_value: f64::NAN,
                n_effective: xs.len(),
                method: "pearson".to_owned(),
            });
        }
        if let Ok(result) =
            wilcoxon_signed_rank(&PairedSample { pairs }, Alternative::TwoSided)
        {
            tests.push(named_test(
                &format!("wilcoxon max AUC by feature: {} vs {}", a.name, b.name),
                &result,
            ));
        }
        // Per-(feature, fold) pairing at each run's best layer.
        let fold_pairs = feature_fold_pairs(a, b);
        if !fold_pairs.is_empty() {
            if let Ok(result) = wilcoxon_signed_rank(
                &PairedSample { pairs: fold_pairs },
                Alternative::TwoSided,
            ) {
                tests.push(named_test(
                    &format!(
                        "wilcoxon AUC by (feature, fold) at best layer: {} vs {}",
                        a.name, b.name
                    ),
                    &result,
                ));
            }
        }
    }

    // Keyword document frequencies (Appendix-style histogram data).
    let keyword_frequencies = match &inputs.corpus {
        None => Vec::new(),
        Some(records) => {
            let comments: Vec<String> = records
                .iter()
                .flat_map(|r| r.mainline.iter().filter_map(|p| p.comment.clone()))
                .collect();
            keyword_document_frequencies(&comments, &inputs.vocabulary.keywords)
                .into_iter()
                .take(10)
                .collect()
        }
    };

    Ok(Report {
        manifest: RunManifest {
            tool_version: super::TOOL_VERSION.to_owned(),
            config_hash: inputs.config_hash.clone(),
            seeds: inputs.seeds.clone(),
            runs: runs.iter().map(|r| r.name.clone()).collect(),
            layer_names: primary.layer_names.clone(),
        },
        feature_table,
        class_histograms,
        tests,
        keyword_frequencies,
        scatter,
    })
}

fn feature_fold_pairs(a: &RunSummary, b: &RunSummary) -> Vec<(f64, f64)> {
    let best_a: BTreeMap<&str, usize> = a
        .summaries
        .iter()
        .map(|s| (s.feature.as_str(), s.best_layer))
        .collect();
    let best_b: BTreeMap<&str, usize> = b
        .summaries
        .iter()
        .map(|s| (s.feature.as_str(), s.best_layer))
        .collect();
    let result_of = |run: &RunSummary, feature: &str, layer: usize| {
        run.grid
            .results
            .iter()
            .find(|r| r.feature == feature && r.layer == layer)
            .cloned()
    };
    let mut pairs = Vec::new();
    for (feature, &layer_a) in &best_a {
        let Some(&layer_b) = best_b.get(feature) else {
            continue;
        };
        let (Some(ra), Some(rb)) = (result_of(a, feature, layer_a), result_of(b, feature, layer_b))
        else {
            continue;
        };
        for (fa, fb) in ra.fold_auc.iter().zip(&rb.fold_auc) {
            if let (Some(x), Some(y)) = (fa, fb) {
                pairs.push((*x, *y));
            }
        }
    }
    pairs
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

fn write(path: &Path, text: &str) -> Result<(), ReportError> {
    std::fs::write(path, text).map_err(io_err(path))
}

/// Write the full report directory: report.json, CSV plot data and SVG
/// plots.
pub fn write_report_files(report: &Report, dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir.join("plots")).map_err(io_err(dir))?;
    write(
        &dir.join("report.json"),
        &serde_json::to_string_pretty(report).expect("report serializes"),
    )?;

    // Feature table CSV.
    let mut table = String::new();
    table.push_str("feature,class");
    for run in &report.manifest.runs {
        table.push_str(&format!(",max_auc_{run},best_layer_{run}"));
    }
    table.push('\n');
    for row in &report.feature_table {
        table.push_str(&format!("{},{}", row.feature, row.class));
        for run in &report.manifest.runs {
            match row.per_run.get(run) {
                Some((auc, layer)) => table.push_str(&format!(",{auc},{layer}")),
                None => table.push_str(",,"),
            }
        }
        table.push('\n');
    }
    write(&dir.join("feature_table.csv"), &table)?;

    for (class, hist) in &report.class_histograms {
        let mut counts = String::from("layer,count\n");
        for (layer, count) in hist.counts.iter().enumerate() {
            counts.push_str(&format!("{layer},{count}\n"));
        }
        write(&dir.join(format!("best_layer_hist_{class}.csv")), &counts)?;
        let mut kde = String::from("x,density\n");
        for (x, d) in hist.kde.grid.iter().zip(&hist.kde.density) {
            kde.push_str(&format!("{x},{d}\n"));
        }
        write(&dir.join(format!("kde_{class}.csv")), &kde)?;
    }

    write(
        &dir.join("tests.json"),
        &serde_json::to_string_pretty(&report.tests).expect("tests serialize"),
    )?;

    if !report.keyword_frequencies.is_empty() {
        let mut freq = String::from("keyword,comments\n");
        for (word, count) in &report.keyword_frequencies {
            freq.push_str(&format!("{word},{count}\n"));
        }
        write(&dir.join("keyword_frequencies.csv"), &freq)?;
        write(
            &dir.join("plots").join("keyword_frequencies.svg"),
            &svg_bars(
                "Comments containing each keyword",
                &report.keyword_frequencies,
            ),
        )?;
    }

    if !report.class_histograms.is_empty() {
        write(
            &dir.join("plots").join("best_layer_kde.svg"),
            &svg_kde_curves("Best layer density by feature class", report),
        )?;
    }

    if !report.scatter.is_empty() {
        write(
            &dir.join("plots").join("scatter.svg"),
            &svg_scatter("Max AUC per feature across runs", &report.scatter),
        )?;
    }

    if !report.scatter.is_empty() {
        let mut sc = String::from("feature,class,x,y\n");
        for p in &report.scatter {
            sc.push_str(&format!("{},{},{},{}\n", p.feature, p.class, p.x, p.y));
        }
        write(&dir.join("scatter.csv"), &sc)?;
    }
    Ok(())
}

// Minimal SVG shapes shared by the three plot kinds.

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn svg_header(title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<text x=\"{cx}\" y=\"24\" text-anchor=\"middle\" ",
            "font-family=\"sans-serif\" font-size=\"15\">{title}</text>\n"
        ),
        w = PLOT_W,
        h = PLOT_H,
        cx = PLOT_W / 2.0,
        title = title
    )
}

fn class_color(class: &str) -> &'static str {
    match class {
        "pattern" => "#d62728",
        "keyword" => "#1f77b4",
        "control-function" => "#7f7f7f",
        "control-content" => "#2ca02c",
        _ => "#9467bd",
    }
}

fn x_to_px(x: f64, lo: f64, hi: f64) -> f64 {
    MARGIN + (x - lo) / (hi - lo).max(1e-12) * (PLOT_W - 2.0 * MARGIN)
}

fn y_to_px(y: f64, lo: f64, hi: f64) -> f64 {
    PLOT_H - MARGIN - (y - lo) / (hi - lo).max(1e-12) * (PLOT_H - 2.0 * MARGIN)
}

fn svg_axes(out: &mut String, x_label: &str, y_label: &str) {
    out.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{lb}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>\n\
         <text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 {cy})\">{y_label}</text>\n",
        m = MARGIN,
        b = PLOT_H - MARGIN,
        r = PLOT_W - MARGIN,
        t = MARGIN,
        cx = PLOT_W / 2.0,
        lb = PLOT_H - 16.0,
        cy = PLOT_H / 2.0,
    ));
}

/// Bar chart for (label, count) pairs.
pub fn svg_bars(title: &str, bars: &[(String, usize)]) -> String {
    let mut out = svg_header(title);
    svg_axes(&mut out, "keyword", "comments");
    if bars.is_empty() {
        out.push_str("</svg>\n");
        return out;
    }
    let max = bars.iter().map(|(_, c)| *c).max().unwrap_or(1).max(1) as f64;
    let span = PLOT_W - 2.0 * MARGIN;
    let bw = span / bars.len() as f64;
    for (i, (label, count)) in bars.iter().enumerate() {
        let x = MARGIN + i as f64 * bw;
        let h = *count as f64 / max * (PLOT_H - 2.0 * MARGIN);
        let y = PLOT_H - MARGIN - h;
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"#1f77b4\"/>\n",
            x + bw * 0.1,
            bw * 0.8,
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\" transform=\"rotate(-45 {:.2} {:.2})\">{label}</text>\n",
            x + bw / 2.0,
            PLOT_H - MARGIN + 14.0,
            x + bw / 2.0,
            PLOT_H - MARGIN + 14.0,
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Overlaid KDE curves, one per feature class.
pub fn svg_kde_curves(title: &str, report: &Report) -> String {
    let mut out = svg_header(title);
    svg_axes(&mut out, "layer", "density");
    let mut y_max = 0.0f64;
    let mut x_max = 1.0f64;
    for hist in report.class_histograms.values() {
        for &d in &hist.kde.density {
            y_max = y_max.max(d);
        }
        if let Some(&x) = hist.kde.grid.last() {
            x_max = x_max.max(x);
        }
    }
    let y_max = y_max.max(1e-9);
    let mut legend_y = MARGIN + 6.0;
    for (class, hist) in &report.class_histograms {
        let color = class_color(class);
        let points: Vec<String> = hist
            .kde
            .grid
            .iter()
            .zip(&hist.kde.density)
            .map(|(&x, &d)| {
                format!(
                    "{:.2},{:.2}",
                    x_to_px(x, 0.0, x_max),
                    y_to_px(d, 0.0, y_max * 1.05)
                )
            })
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        out.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{class}</text>\n",
            PLOT_W - MARGIN - 150.0,
            legend_y,
            PLOT_W - MARGIN - 132.0,
            legend_y + 10.0,
        ));
        legend_y += 18.0;
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of per-feature values across two runs, with the y = x line.
pub fn svg_scatter(title: &str, points: &[ScatterPoint]) -> String {
    let mut out = svg_header(title);
    svg_axes(&mut out, "run 1 max AUC", "run 2 max AUC");
    let lo = 0.3f64.min(
        points
            .iter()
            .map(|p| p.x.min(p.y))
            .fold(1.0, f64::min),
    );
    let hi = 1.0;
    out.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
        x_to_px(lo, lo, hi),
        y_to_px(lo, lo, hi),
        x_to_px(hi, lo, hi),
        y_to_px(hi, lo, hi),
    ));
    for p in points {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            x_to_px(p.x, lo, hi),
            y_to_px(p.y, lo, hi),
            class_color(&p.class),
        ));
    }
    out.push_str("</svg>\n");
    out
}
