//! Tables (CSV, aligned text, Markdown) and chart data for evaluation
//! results. Output is a pure function of the input: same input, same bytes.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelDistribution;
use crate::evaluate::{ComparisonReport, Evaluation, GlobalMetrics, LabelMetrics};
use crate::label::Label;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Text,
    Markdown,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Text => "txt",
            Format::Markdown => "md",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "txt" | "text" => Ok(Format::Text),
            "md" | "markdown" => Ok(Format::Markdown),
            _ => Err(format!("unknown format `{s}` (expected csv, md or txt)")),
        }
    }
}

/// A titled grid of preformatted cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(title: &str, headers: &[&str]) -> Self {
        Table {
            title: title.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.csv(),
            Format::Text => self.text(),
            Format::Markdown => self.markdown(),
        }
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    fn widths(&self) -> Vec<usize> {
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        widths
    }

    fn text(&self) -> String {
        let widths = self.widths();
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            padded.join("  ").trim_end().to_string()
        };
        let mut out = format!("{}\n", self.title);
        out.push_str(&line(&self.headers));
        out.push('\n');
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&line(row));
            out.push('\n');
        }
        out
    }

    fn markdown(&self) -> String {
        let mut out = format!("### {}\n\n", self.title);
        let _ = writeln!(out, "| {} |", self.headers.join(" | "));
        let align: Vec<&str> = (0..self.headers.len())
            .map(|i| if i == 0 { "---" } else { "---:" })
            .collect();
        let _ = writeln!(out, "| {} |", align.join(" | "));
        for row in &self.rows {
            let _ = writeln!(out, "| {} |", row.join(" | "));
        }
        out
    }
}

/// Four decimals.
pub fn fixed4(x: f64) -> String {
    format!("{x:.4}")
}

fn opt4(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), fixed4)
}

/// Per-label rows: `Label, F1, Precision, Recall, Support`.
pub fn per_label_table(metrics: &[LabelMetrics]) -> Table {
    let mut t = Table::new(
        "Per-label metrics",
        &["Label", "F1", "Precision", "Recall", "Support"],
    );
    for m in metrics {
        t.rows.push(vec![
            m.label.to_string(),
            fixed4(m.f1),
            fixed4(m.precision),
            fixed4(m.recall),
            m.support.to_string(),
        ]);
    }
    t
}

/// One `Global` row: `Accuracy, F1, Precision, Recall, Loss`.
pub fn global_table(g: &GlobalMetrics) -> Table {
    let mut t = Table::new(
        "Global metrics",
        &["", "Accuracy", "F1", "Precision", "Recall", "Loss"],
    );
    t.rows.push(vec![
        "Global".to_string(),
        opt4(g.accuracy),
        fixed4(g.f1),
        fixed4(g.precision),
        fixed4(g.recall),
        opt4(g.loss),
    ]);
    t
}

pub fn comparison_table(report: &ComparisonReport) -> Table {
    let mut t = Table::new(
        "Comparison with gold",
        &["Label", "Real", "Correct", "Incorrect", "Extra"],
    );
    for r in &report.rows {
        t.rows.push(vec![
            r.name.clone(),
            r.real.to_string(),
            r.correct_predicted.to_string(),
            r.incorrect_predicted.to_string(),
            r.extra_detected.to_string(),
        ]);
    }
    t
}

/// Label counts, one column per label in [`Label::ALL`] order.
pub fn distribution_table(dist: &LabelDistribution) -> Table {
    let mut headers = vec![""];
    headers.extend(Label::ALL.iter().map(|l| l.as_str()));
    let mut t = Table::new("Label distribution", &headers);
    for (name, counts) in &dist.rows {
        let mut row = vec![name.clone()];
        row.extend(counts.iter().map(|c| c.to_string()));
        t.rows.push(row);
    }
    t
}

/// Hits and misses as tenths of a percent, rounded half up; the two add to
/// 1000.
pub fn pie_tenths(hits: u64, total: u64) -> Option<(u64, u64)> {
    if total == 0 || hits > total {
        return None;
    }
    let h = (2000 * hits as u128 + total as u128) / (2 * total as u128);
    Some((h as u64, 1000 - h as u64))
}

fn tenths_str(t: u64) -> String {
    format!("{}.{}", t / 10, t % 10)
}

/// Human summary of an evaluation.
pub fn summary(eval: &Evaluation) -> String {
    let g = &eval.global;
    let mut out = format!(
        "documents: {}\nentities: tp {} fp {} fn {}\nmicro F1 {}  precision {}  recall {}\n",
        eval.documents,
        g.tp,
        g.fp,
        g.fn_,
        fixed4(g.f1),
        fixed4(g.precision),
        fixed4(g.recall)
    );
    match eval
        .comparison
        .hit_ratio()
        .and_then(|(h, t)| pie_tenths(h, t).map(|p| (h, t, p)))
    {
        Some((h, t, (hit, miss))) => {
            let _ = writeln!(
                out,
                "hits {h}/{t} ({}% hits, {}% misses)",
                tenths_str(hit),
                tenths_str(miss)
            );
        }
        None => out.push_str("hits n/a (no predictions)\n"),
    }
    out
}

/// All evaluation tables in one document. Labels absent from both gold and
/// predictions are left out of the per-label table.
pub fn render_tables(eval: &Evaluation, format: Format) -> String {
    let active: Vec<LabelMetrics> = eval
        .per_label
        .iter()
        .filter(|m| !m.is_idle())
        .copied()
        .collect();
    let tables = [
        per_label_table(&active),
        global_table(&eval.global),
        comparison_table(&eval.comparison),
    ];
    let mut out = String::new();
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        if format == Format::Csv {
            let _ = writeln!(out, "# {}", t.title);
        }
        out.push_str(&t.render(format));
    }
    if format != Format::Csv {
        out.push('\n');
        out.push_str(&summary(eval));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChartKind {
    Pie,
    GroupedBar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSeries {
    pub kind: ChartKind,
    pub title: String,
    pub categories: Vec<String>,
    /// `(series name, one value per category)`.
    pub series: Vec<(String, Vec<f64>)>,
}

impl ChartSeries {
    pub fn to_csv(&self) -> String {
        let mut headers = vec!["category"];
        headers.extend(self.series.iter().map(|(n, _)| n.as_str()));
        let mut t = Table::new(&self.title, &headers);
        for (i, c) in self.categories.iter().enumerate() {
            let mut row = vec![c.clone()];
            for (_, values) in &self.series {
                row.push(match self.kind {
                    ChartKind::Pie => format!("{:.1}", values[i]),
                    ChartKind::GroupedBar => format!("{}", values[i]),
                });
            }
            t.rows.push(row);
        }
        t.render(Format::Csv)
    }
}

/// Pie of hits vs misses (percent, one decimal) and a grouped bar of real,
/// correct and incorrect counts per label. The pie is omitted, with a
/// notice, when nothing was predicted.
pub fn emit_chart_data(report: &ComparisonReport) -> (Vec<ChartSeries>, Vec<String>) {
    let mut charts = Vec::new();
    let mut notices = Vec::new();
    match report.hit_ratio().and_then(|(h, t)| pie_tenths(h, t)) {
        Some((hit, miss)) => charts.push(ChartSeries {
            kind: ChartKind::Pie,
            title: "Hits and misses".into(),
            categories: vec!["Hits".into(), "Misses".into()],
            series: vec![(
                "percent".into(),
                vec![hit as f64 / 10.0, miss as f64 / 10.0],
            )],
        }),
        None => notices.push("hit fraction undefined (no predictions); pie chart omitted".into()),
    }
    let col = |f: &dyn Fn(&crate::evaluate::ComparisonRow) -> u64| -> Vec<f64> {
        report.rows.iter().map(|r| f(r) as f64).collect()
    };
    charts.push(ChartSeries {
        kind: ChartKind::GroupedBar,
        title: "Predicted vs real entities".into(),
        categories: report.rows.iter().map(|r| r.name.clone()).collect(),
        series: vec![
            ("Real".into(), col(&|r| r.real)),
            (
                "Correct predicted".into(),
                col(&|r| r.correct_predicted + r.extra_detected),
            ),
            (
                "Incorrect predicted".into(),
                col(&|r| r.incorrect_predicted),
            ),
        ],
    });
    (charts, notices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_decimal_cells() {
        let m = LabelMetrics {
            label: Label::Tto,
            tp: 0,
            fp: 0,
            fn_: 0,
            precision: 0.6964,
            recall: 0.75,
            f1: 0.7222,
            support: 0,
        };
        let csv = per_label_table(&[m]).render(Format::Csv);
        assert_eq!(
            csv,
            "Label,F1,Precision,Recall,Support\nTTO,0.7222,0.6964,0.7500,0\n"
        );
    }

    #[test]
    fn header_only_when_empty() {
        assert_eq!(
            per_label_table(&[]).render(Format::Csv),
            "Label,F1,Precision,Recall,Support\n"
        );
        let md = per_label_table(&[]).render(Format::Markdown);
        assert_eq!(md.lines().count(), 4);
    }

    #[test]
    fn text_alignment() {
        let mut t = Table::new("T", &["Label", "N"]);
        t.rows.push(vec!["MET".into(), "12".into()]);
        t.rows.push(vec!["ANTPERSON".into(), "3".into()]);
        assert_eq!(
            t.render(Format::Text),
            "T\nLabel       N\n---------  --\nMET        12\nANTPERSON   3\n"
        );
    }

    #[test]
    fn pie_rounding() {
        assert_eq!(pie_tenths(1425, 1462), Some((975, 25)));
        assert_eq!(pie_tenths(2314, 2349), Some((985, 15)));
        assert_eq!(pie_tenths(5, 5), Some((1000, 0)));
        assert_eq!(pie_tenths(1, 8), Some((125, 875)));
        assert_eq!(pie_tenths(0, 0), None);
    }

    #[test]
    fn charts_from_report() {
        let r = ComparisonReport::from_tallies(&[("MET", 3, 3, 0)]);
        let (charts, notices) = emit_chart_data(&r);
        assert!(notices.is_empty());
        assert_eq!(charts[0].series[0].1, [100.0, 0.0]);
        assert_eq!(
            charts[0].to_csv(),
            "category,percent\nHits,100.0\nMisses,0.0\n"
        );
        let (charts, notices) = emit_chart_data(&ComparisonReport::default());
        assert_eq!((charts.len(), notices.len()), (1, 1));
    }
}
