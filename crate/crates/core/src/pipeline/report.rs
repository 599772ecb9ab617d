//! Analysis report structures and their text rendering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{Classification, SampleSummary, TableGroup};

/// One quantity's cohort row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub quantity: String,
    /// Absent when no values were available for this quantity.
    pub summary: Option<SampleSummary>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub classification: Classification,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Report group, assigned for the model-output pass only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<TableGroup>,
}

/// The two-pass cohort analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    /// Raw clinical data against healthy ranges.
    pub test_i: Vec<AnalysisRow>,
    /// Reliable model-only output means against healthy ranges.
    pub test_ii: Vec<AnalysisRow>,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

fn fmt_range(lower: Option<f64>, upper: Option<f64>) -> String {
    match (lower, upper) {
        (None, None) => "-".into(),
        (lo, hi) => format!(
            "[{}, {}]",
            lo.map_or("-".into(), trim_num),
            hi.map_or("-".into(), trim_num)
        ),
    }
}

fn trim_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn fmt_summary(s: &Option<SampleSummary>) -> String {
    match s {
        Some(s) => format!("{:.1} ± {:.1} (n = {})", s.mean, s.std, s.n),
        None => "-".into(),
    }
}

fn fmt_p(p: &Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.2E}"),
        None => "-".into(),
    }
}

fn render_rows(out: &mut String, rows: &[AnalysisRow], with_groups: bool) {
    let headers: &[&str] = if with_groups {
        &["group", "quantity", "healthy range", "mean ± std (n)", "p-value", "verdict"]
    } else {
        &["quantity", "healthy range", "mean ± std (n)", "p-value", "verdict"]
    };
    let mut table: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for row in rows {
        let mut cells = Vec::new();
        if with_groups {
            cells.push(row.group.map_or("-".into(), |g| g.as_str().to_string()));
        }
        cells.push(row.quantity.clone());
        cells.push(fmt_range(row.lower, row.upper));
        cells.push(fmt_summary(&row.summary));
        cells.push(fmt_p(&row.p_value));
        cells.push(row.classification.as_str().to_string());
        table.push(cells);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap())
        .collect();
    for (i, row) in table.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(widths.iter())
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
}

impl AnalysisReport {
    /// Plain-text tables: clinical data first, then the grouped model
    /// outputs.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "cohort analysis (version {}, config {}, seed {})\n\n",
            self.version, self.config_hash, self.seed
        ));
        out.push_str("Test I - clinical data vs healthy ranges\n");
        render_rows(&mut out, &self.test_i, false);
        out.push('\n');
        out.push_str("Test II - reliable model outputs vs healthy ranges\n");
        render_rows(&mut out, &self.test_ii, true);
        out
    }
}

/// Parses a summaries-only CSV (`test,quantity,n,mean,std`) into the two
/// sample lists.
pub fn read_summaries_csv(
    reader: impl std::io::Read,
) -> Result<(Vec<(String, SampleSummary)>, Vec<(String, SampleSummary)>)> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if header != ["test", "quantity", "n", "mean", "std"] {
        return Err(Error::invalid(format!(
            "summaries header must be test,quantity,n,mean,std; got {header:?}"
        )));
    }
    let mut test_i = Vec::new();
    let mut test_ii = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let summary = SampleSummary {
            n: record[2]
                .parse()
                .map_err(|_| Error::invalid(format!("bad n {:?}", &record[2])))?,
            mean: record[3]
                .parse()
                .map_err(|_| Error::invalid(format!("bad mean {:?}", &record[3])))?,
            std: record[4]
                .parse()
                .map_err(|_| Error::invalid(format!("bad std {:?}", &record[4])))?,
        };
        match &record[0] {
            "I" => test_i.push((record[1].to_string(), summary)),
            "II" => test_ii.push((record[1].to_string(), summary)),
            other => {
                return Err(Error::invalid(format!(
                    "test column must be I or II, got {other:?}"
                )))
            }
        }
    }
    Ok((test_i, test_ii))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summaries_csv_parses() {
        let text = "test,quantity,n,mean,std\nI,SAP_max,58,120.6,14.7\nII,RV_Pmax,29,33.7,6.8\n";
        let (t1, t2) = read_summaries_csv(text.as_bytes()).unwrap();
        assert_eq!(t1.len(), 1);
        assert_eq!(t2.len(), 1);
        assert_eq!(t1[0].0, "SAP_max");
        assert_eq!(t2[0].1.n, 29);
    }

    #[test]
    fn summaries_csv_rejects_bad_test_tag() {
        let text = "test,quantity,n,mean,std\nIII,X,5,1.0,0.5\n";
        assert!(read_summaries_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn text_rendering_is_stable() {
        let report = AnalysisReport {
            test_i: vec![AnalysisRow {
                quantity: "SAP_max".into(),
                summary: Some(SampleSummary {
                    n: 58,
                    mean: 120.6,
                    std: 14.7,
                }),
                lower: None,
                upper: Some(140.0),
                classification: Classification::NotAlteredInRange,
                p_value: None,
                group: None,
            }],
            test_ii: vec![AnalysisRow {
                quantity: "RV_Pmax".into(),
                summary: Some(SampleSummary {
                    n: 29,
                    mean: 33.7,
                    std: 6.8,
                }),
                lower: Some(15.0),
                upper: Some(28.0),
                classification: Classification::IncreasedSignificant,
                p_value: Some(3.18e-6),
                group: Some(TableGroup::Significant),
            }],
            version: "0.1.0".into(),
            config_hash: "abc".into(),
            seed: 7,
        };
        let a = report.render_text();
        let b = report.render_text();
        assert_eq!(a, b);
        assert!(a.contains("SAP_max"));
        assert!(a.contains("[-, 140]"));
        assert!(a.contains("3.18E-6"));
        assert!(a.contains("significantly increased"));
    }
}
