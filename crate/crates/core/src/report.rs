//! Report tables: Kruskal-Wallis mean-rank tables, Spearman matrices with
//! structural `x` masks, and their CSV / markdown renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::measures::Measure;
use crate::stats::{KwResult, SpearmanResult, Stars};

/// Human-readable number rendering.
pub fn fixed4(v: f64) -> String {
    format!("{v:.4}")
}

/// One tested variable in a mean-rank table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwColumn {
    pub measure: Measure,
    /// Non-missing observations per row group.
    pub group_n: Vec<usize>,
    /// Mean rank per row group; `None` for groups with no observations.
    pub mean_ranks: Vec<Option<f64>>,
    pub result: Option<KwResult>,
    /// Why the test was not run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

/// Rows are the compared groups, columns the measures, plus a final
/// significance row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KwTable {
    pub title: String,
    pub rows: Vec<String>,
    pub columns: Vec<KwColumn>,
}

pub const SIG_ROW: &str = "Asymp. Sig.";

impl KwTable {
    fn sig_cell(c: &KwColumn) -> String {
        match &c.result {
            Some(r) => format!("{}{}", fixed4(r.p), r.stars),
            None => "n/a".into(),
        }
    }

    /// The table body: group rows then the significance row.
    pub fn grid(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = vec![row.clone()];
            for c in &self.columns {
                line.push(c.mean_ranks[i].map(fixed4).unwrap_or_default());
            }
            out.push(line);
        }
        let mut sig = vec![SIG_ROW.to_string()];
        sig.extend(self.columns.iter().map(Self::sig_cell));
        out.push(sig);
        out
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec![String::new()];
        h.extend(self.columns.iter().map(|c| c.measure.title().to_string()));
        h
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("### {}\n\n", self.title);
        s.push_str(&markdown_table(&self.header(), &self.grid()));
        s.push_str(STAR_NOTE_KW);
        s
    }

    pub fn to_csv(&self) -> String {
        csv_string(&self.header(), &self.grid())
    }

    /// Flat statistic rows: table, measure, h, h_corrected, df, p, stars, n.
    pub fn test_rows(&self) -> Vec<Vec<String>> {
        self.columns
            .iter()
            .map(|c| match &c.result {
                Some(r) => vec![
                    self.title.clone(),
                    c.measure.column().to_string(),
                    r.h.to_string(),
                    r.h_corrected.to_string(),
                    r.df.to_string(),
                    r.p.to_string(),
                    r.stars.to_string(),
                    r.n.to_string(),
                ],
                None => vec![
                    self.title.clone(),
                    c.measure.column().to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    c.group_n.iter().sum::<usize>().to_string(),
                ],
            })
            .collect()
    }
}

pub const KW_TEST_HEADER: [&str; 8] = [
    "table",
    "measure",
    "h",
    "h_corrected",
    "df",
    "p",
    "stars",
    "n",
];

const STAR_NOTE_KW: &str =
    "\nNote. Significant difference in rank mean at the 0.01 level are denoted **. \
Significant difference in rank mean at the 0.05 level are denoted *.\n";

const STAR_NOTE_RHO: &str = "\nNote. Correlations significant at the 0.01 level (2-tailed) are denoted **. \
Correlations significant at the 0.05 level (2-tailed) are denoted *. 'x' signifies correlations not tested.\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cell", rename_all = "snake_case")]
pub enum MatrixCell {
    Diagonal {
        n: usize,
    },
    /// Structurally excluded pairing.
    NotTested {
        n: usize,
    },
    Tested {
        #[serde(flatten)]
        result: SpearmanResult,
    },
    Skipped {
        n: usize,
        reason: String,
    },
}

impl MatrixCell {
    pub fn n(&self) -> usize {
        match self {
            MatrixCell::Diagonal { n }
            | MatrixCell::NotTested { n }
            | MatrixCell::Skipped { n, .. } => *n,
            MatrixCell::Tested { result } => result.n,
        }
    }

    pub fn render(&self) -> String {
        match self {
            MatrixCell::Diagonal { .. } => "1".into(),
            MatrixCell::NotTested { .. } => "x".into(),
            MatrixCell::Tested { result } => format!("{}{}", fixed4(result.rho), result.stars),
            MatrixCell::Skipped { .. } => "n/a".into(),
        }
    }

    pub fn stars(&self) -> Option<Stars> {
        match self {
            MatrixCell::Tested { result } => Some(result.stars),
            _ => None,
        }
    }
}

/// Which pairs of measures are tested: connectedness against coordination
/// only.
pub fn is_tested_pair(a: Measure, b: Measure) -> bool {
    a != b && a.is_connectedness() != b.is_connectedness()
}

/// Lower-triangular Spearman matrix over [`Measure::ALL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpearmanMatrix {
    pub title: String,
    pub measures: Vec<Measure>,
    /// `cells[i]` has `i + 1` entries (columns `0..=i`).
    pub cells: Vec<Vec<MatrixCell>>,
}

impl SpearmanMatrix {
    pub fn cell(&self, row: Measure, col: Measure) -> Option<&MatrixCell> {
        let i = self.measures.iter().position(|m| *m == row)?;
        let j = self.measures.iter().position(|m| *m == col)?;
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.cells.get(i).and_then(|r| r.get(j))
    }

    /// Tested cells in row-major order.
    pub fn tested(&self) -> impl Iterator<Item = (Measure, Measure, &MatrixCell)> {
        self.cells.iter().enumerate().flat_map(move |(i, row)| {
            row.iter().enumerate().filter_map(move |(j, c)| {
                is_tested_pair(self.measures[i], self.measures[j]).then_some((
                    self.measures[i],
                    self.measures[j],
                    c,
                ))
            })
        })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec![String::new()];
        h.extend(self.measures.iter().map(|m| m.title().to_string()));
        h
    }

    pub fn grid(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let mut line = vec![self.measures[i].title().to_string()];
                line.extend(row.iter().map(MatrixCell::render));
                line.resize(self.measures.len() + 1, String::new());
                line
            })
            .collect()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("### {}\n\n", self.title);
        s.push_str(&markdown_table(&self.header(), &self.grid()));
        s.push_str(STAR_NOTE_RHO);
        s
    }

    pub fn to_csv(&self) -> String {
        csv_string(&self.header(), &self.grid())
    }

    /// Flat cell rows: row, column, rho, n, p, stars, status.
    pub fn cell_rows(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for (i, row) in self.cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                let (rho, p, stars, status) = match cell {
                    MatrixCell::Tested { result } => (
                        result.rho.to_string(),
                        result.p.to_string(),
                        result.stars.to_string(),
                        "tested".to_string(),
                    ),
                    MatrixCell::Diagonal { .. } => {
                        ("1".into(), String::new(), String::new(), "diagonal".into())
                    }
                    MatrixCell::NotTested { .. } => (
                        "x".into(),
                        String::new(),
                        String::new(),
                        "not_tested".into(),
                    ),
                    MatrixCell::Skipped { reason, .. } => (
                        String::new(),
                        String::new(),
                        String::new(),
                        format!("skipped: {reason}"),
                    ),
                };
                out.push(vec![
                    self.measures[i].column().to_string(),
                    self.measures[j].column().to_string(),
                    rho,
                    cell.n().to_string(),
                    p,
                    stars,
                    status,
                ]);
            }
        }
        out
    }
}

pub const MATRIX_CELL_HEADER: [&str; 7] = ["row", "column", "rho", "n", "p", "stars", "status"];

pub fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| {} |", header.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    s
}

pub fn csv_string<H: AsRef<str>>(header: &[H], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header.iter().map(AsRef::as_ref))
        .expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}
