//! Tables and figures: confusion table, merged importance table, GA trace and
//! population CSVs, risk histograms and the predictor dendrogram as SVG.
//!
//! Every renderer returns a `String`; [`write_file`] and the `render_*`
//! helpers put it on disk. Output depends only on the inputs, never on time or locale.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archetype::{CommonalityReport, ReverseCodingReport, SwitchClass};
use crate::boosting::ConfusionTable;
use crate::clustering::Dendrogram;
use crate::dataset::parse_cell;
use crate::error::{Error, Result};
use crate::genetic::{Chromosome, GaTrace, Population};

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn two(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.2}")
    }
}

pub fn confusion_csv(t: &ConfusionTable) -> String {
    let r = t.rates();
    let mut s = String::from("actual,forecast_no,forecast_yes,classification_error\n");
    let _ = writeln!(s, "no,{},{},{}", t.tn, t.fp, r.classification_error_neg);
    let _ = writeln!(s, "yes,{},{},{}", t.fn_, t.tp, r.classification_error_pos);
    let _ = writeln!(s, "forecasting_error,{},{},", r.forecast_error_neg, r.forecast_error_pos);
    let _ = writeln!(s, "achieved_cost_ratio,{},,", r.achieved_cost_ratio);
    s
}

/// Counts with classification errors down the right margin and forecasting
/// errors along the bottom.
pub fn confusion_text(t: &ConfusionTable) -> String {
    let r = t.rates();
    let rows = [
        ["", "Forecast No", "Forecast Yes", "Classification Error"].map(String::from),
        ["Actual No".into(), t.tn.to_string(), t.fp.to_string(), two(r.classification_error_neg)],
        ["Actual Yes".into(), t.fn_.to_string(), t.tp.to_string(), two(r.classification_error_pos)],
        ["Forecasting Error".into(), two(r.forecast_error_neg), two(r.forecast_error_pos), String::new()],
    ];
    let mut s = aligned(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
    let _ = writeln!(s, "Achieved cost ratio (false positives per false negative): {:.1}", r.achieved_cost_ratio);
    s
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|v| v.chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().enumerate().map(|(c, v)| format!("{v:<w$}", w = width[c])).collect();
        s.push_str(line.join("  ").trim_end());
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub predictor: String,
    pub in_sample_importance: f64,
    pub commonality: f64,
    pub switch_class: SwitchClass,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recoded_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop: Option<f64>,
}

/// In-sample importance, commonality and reverse-coding results, one row per
/// predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub rows: Vec<ImportanceRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

pub const NO_UNIVERSAL_NOTICE: &str =
    "no predictor is Always On or Always Off; reverse-coding columns omitted";

impl ImportanceTable {
    pub fn build(
        names: &[String],
        in_sample: &[f64],
        commonality: &CommonalityReport,
        recoding: &ReverseCodingReport,
    ) -> Result<Self> {
        let p = names.len();
        for found in [in_sample.len(), commonality.len()] {
            if found != p {
                return Err(Error::DimensionMismatch { expected: p, found });
            }
        }
        let rows = (0..p)
            .map(|j| {
                let rc = recoding.get(j);
                ImportanceRow {
                    predictor: names[j].clone(),
                    in_sample_importance: in_sample[j],
                    commonality: commonality.proportion_on[j],
                    switch_class: commonality.switch_class[j],
                    recoded_mean: rc.map(|e| e.recoded_mean),
                    drop: rc.map(|e| e.drop),
                }
            })
            .collect();
        let has_recoding = !recoding.entries.is_empty();
        Ok(ImportanceTable {
            rows,
            benchmark_mean: has_recoding.then_some(recoding.benchmark_mean),
            notice: (!has_recoding).then(|| NO_UNIVERSAL_NOTICE.to_string()),
        })
    }

    pub fn has_recoding(&self) -> bool {
        self.benchmark_mean.is_some()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["predictor", "in_sample_importance", "commonality", "switch_class"];
        if self.has_recoding() {
            header.extend(["recoded_mean", "drop"]);
        }
        w.write_record(&header)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for r in &self.rows {
            let mut rec = vec![
                r.predictor.clone(),
                r.in_sample_importance.to_string(),
                r.commonality.to_string(),
                r.switch_class.label().to_string(),
            ];
            if self.has_recoding() {
                rec.push(opt(r.recoded_mean));
                rec.push(opt(r.drop));
            }
            w.write_record(&rec)?;
        }
        csv_string(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["Predictor", "In-Sample Importance", "Commonality", "Switched On or Off"];
        if self.has_recoding() {
            header.extend(["Recoded Mean", "Drop"]);
        }
        let mut rows = vec![header.into_iter().map(String::from).collect::<Vec<_>>()];
        for r in &self.rows {
            let mut line = vec![
                r.predictor.clone(),
                format!("{:.2}", r.in_sample_importance),
                two(r.commonality),
                r.switch_class.label().to_string(),
            ];
            if self.has_recoding() {
                line.push(r.recoded_mean.map_or(String::new(), |v| format!("{v:.3}")));
                line.push(r.drop.map_or(String::new(), |v| format!("{v:.3}")));
            }
            rows.push(line);
        }
        let mut s = aligned(&rows);
        match (&self.benchmark_mean, &self.notice) {
            (Some(b), _) => {
                let _ = writeln!(s, "Benchmark mean risk: {b:.3}");
            }
            (None, Some(n)) => {
                let _ = writeln!(s, "Note: {n}");
            }
            _ => {}
        }
        s
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

pub fn ga_trace_csv(trace: &GaTrace) -> String {
    let mut s = String::from("generation,best,mean,median\n");
    for (g, st) in trace.generations.iter().enumerate() {
        let _ = writeln!(s, "{g},{},{},{}", st.best, st.mean, st.median);
    }
    s
}

/// One row per member: its genes under the predictor names, then `fitness`.
pub fn population_csv(pop: &Population, names: &[String]) -> Result<String> {
    if names.len() != pop.n_genes() {
        return Err(Error::DimensionMismatch { expected: pop.n_genes(), found: names.len() });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push("fitness");
    w.write_record(&header)?;
    for (c, f) in pop.members().iter().zip(pop.fitness()) {
        let mut rec: Vec<String> = c.genes().iter().map(|g| g.to_string()).collect();
        rec.push(f.to_string());
        w.write_record(&rec)?;
    }
    csv_string(w)
}

/// Reads what [`population_csv`] writes; fitness values come back bit-exact.
pub fn read_population_csv<R: Read>(r: R) -> Result<(Population, Vec<String>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.last().map(String::as_str) != Some("fitness") {
        return Err(Error::HeaderMismatch("population CSV must end with a fitness column".into()));
    }
    let names = header[..header.len() - 1].to_vec();
    let mut members = Vec::new();
    let mut fitness = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow { row: i + 1, expected: header.len(), found: rec.len() });
        }
        let genes = names
            .iter()
            .enumerate()
            .map(|(j, n)| parse_cell(&rec[j], i + 1, n))
            .collect::<Result<Vec<u8>>>()?;
        members.push(Chromosome::new(genes)?);
        let f = &rec[names.len()];
        fitness.push(
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("row {}: fitness {f:?} is not a number", i + 1)))?,
        );
    }
    if members.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok((Population::new(members, fitness)?, names))
}

/// Counts of `values` in `bins` equal-width bins over `[0, 1]`; 1.0 falls in
/// the last bin.
pub fn histogram_counts(values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::invalid("histogram of an empty vector"));
    }
    if bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let mut counts = vec![0; bins];
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("probability {v} outside [0, 1]")));
        }
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(counts)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn svg_open(w: f64, h: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text class="title" x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    s
}

pub fn histogram_svg(values: &[f64], bins: usize, title: &str) -> Result<String> {
    let counts = histogram_counts(values, bins)?;
    let max = *counts.iter().max().expect("bins >= 1") as f64;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let bw = pw / bins as f64;
    let base = TOP + ph;
    let mut s = svg_open(W, H, title);
    for (k, &c) in counts.iter().enumerate() {
        let h = ph * c as f64 / max;
        let _ = writeln!(
            s,
            r#"<rect class="bar" data-count="{c}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="steelblue" stroke="black" stroke-width="0.5"/>"#,
            LEFT + k as f64 * bw,
            base - h,
            bw,
            h
        );
    }
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{base}" x2="{:.2}" y2="{base}" stroke="black"/>"#, LEFT + pw);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#);
    for t in 0..=5 {
        let x = LEFT + pw * t as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{:.1}</text>"#,
            base + 16.0,
            t as f64 / 5.0
        );
    }
    for t in 0..=4 {
        let y = base - ph * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            (max * t as f64 / 4.0).round()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Risk probability</text>"#,
        LEFT + pw / 2.0,
        H - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Frequency</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn render_histogram(values: &[f64], bins: usize, title: &str, path: &Path) -> Result<()> {
    write_file(path, histogram_svg(values, bins, title)?)
}

/// Leaves along the bottom in dendrogram order, merge height on the vertical
/// axis, agglomerative coefficient printed underneath.
pub fn dendrogram_svg(dg: &Dendrogram, title: &str) -> String {
    let p = dg.len();
    let bottom = 150.0;
    let w = (LEFT + RIGHT + 24.0 * p as f64).max(320.0);
    let h = 420.0;
    let ph = h - TOP - bottom;
    let base = TOP + ph;
    let pw = w - LEFT - RIGHT;
    let top = dg.final_height();
    let y_of = |height: f64| if top > 0.0 { base - ph * height / top } else { base };

    let mut x = vec![0.0; 2 * p - 1];
    let mut y = vec![base; 2 * p - 1];
    for (k, &leaf) in dg.order.iter().enumerate() {
        x[leaf] = LEFT + pw * (k as f64 + 0.5) / p as f64;
    }
    let mut s = svg_open(w, h, title);
    for (step, m) in dg.merges.iter().enumerate() {
        let id = p + step;
        let hy = y_of(m.height);
        x[id] = (x[m.left] + x[m.right]) / 2.0;
        y[id] = hy;
        let _ = writeln!(
            s,
            r#"<path class="junction" data-height="{}" d="M{:.2},{:.2} V{:.2} H{:.2} V{:.2}" fill="none" stroke="black"/>"#,
            m.height, x[m.left], y[m.left], hy, x[m.right], y[m.right]
        );
    }
    for &leaf in &dg.order {
        let _ = writeln!(
            s,
            r#"<text class="leaf" x="{:.2}" y="{:.2}" text-anchor="end" transform="rotate(-60 {:.2} {:.2})">{}</text>"#,
            x[leaf],
            base + 12.0,
            x[leaf],
            base + 12.0,
            escape(&dg.labels[leaf])
        );
    }
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#);
    for t in 0..=4 {
        let v = top * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.2}</text>"#,
            LEFT - 6.0,
            y_of(v) + 4.0,
            v
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">Height</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text class="coefficient" x="{:.2}" y="{:.2}" text-anchor="middle">Agglomerative Coefficient = {:.2}</text>"#,
        w / 2.0,
        h - 12.0,
        dg.agglomerative_coefficient
    );
    s.push_str("</svg>\n");
    s
}

pub fn render_dendrogram(dg: &Dendrogram, title: &str, path: &Path) -> Result<()> {
    write_file(path, dendrogram_svg(dg, title))
}
