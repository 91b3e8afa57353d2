//! Comparison tables with best / second-best markers.
//!
//! Per column the maximum is marked best. When exactly one entry is best, the
//! largest remaining value is marked second; tied bests suppress the second
//! marker. Text output wraps best in `**` and second in `_`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mark {
    Best,
    Second,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedCell {
    pub value: Option<f64>,
    pub mark: Option<Mark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedRow {
    pub name: String,
    pub cells: Vec<RenderedCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedTable {
    pub columns: Vec<String>,
    pub rows: Vec<RenderedRow>,
    #[serde(skip)]
    pub text: String,
}

pub fn column_marks(values: &[Option<f64>]) -> Vec<Option<Mark>> {
    let present = || values.iter().flatten().copied().filter(|v| !v.is_nan());
    let mut marks = vec![None; values.len()];
    let Some(best) = present().reduce(f64::max) else {
        return marks;
    };
    let best_count = present().filter(|&v| v == best).count();
    let second = if best_count == 1 { present().filter(|&v| v < best).reduce(f64::max) } else { None };
    for (m, v) in marks.iter_mut().zip(values) {
        *m = match *v {
            Some(x) if x == best => Some(Mark::Best),
            Some(x) if Some(x) == second => Some(Mark::Second),
            _ => None,
        };
    }
    marks
}

/// Renders values multiplied by `scale` with `precision` decimals.
pub fn render_table(table: &Table, precision: usize, scale: f64) -> RenderedTable {
    let ncol = table.columns.len();
    let mut marks = vec![vec![None; ncol]; table.rows.len()];
    for c in 0..ncol {
        let column: Vec<Option<f64>> = table.rows.iter().map(|r| r.values.get(c).copied().flatten()).collect();
        for (r, m) in column_marks(&column).into_iter().enumerate() {
            marks[r][c] = m;
        }
    }
    let rows: Vec<RenderedRow> = table
        .rows
        .iter()
        .zip(&marks)
        .map(|(row, m)| RenderedRow {
            name: row.name.clone(),
            cells: (0..ncol).map(|c| RenderedCell { value: row.values.get(c).copied().flatten(), mark: m[c] }).collect(),
        })
        .collect();

    let mut grid: Vec<Vec<String>> = vec![std::iter::once(String::new()).chain(table.columns.iter().cloned()).collect()];
    for row in &rows {
        let mut line = vec![row.name.clone()];
        for cell in &row.cells {
            line.push(match (cell.value, cell.mark) {
                (None, _) => "-".to_string(),
                (Some(v), Some(Mark::Best)) => format!("**{:.*}**", precision, v * scale),
                (Some(v), Some(Mark::Second)) => format!("_{:.*}_", precision, v * scale),
                (Some(v), None) => format!("{:.*}", precision, v * scale),
            });
        }
        grid.push(line);
    }
    let widths: Vec<usize> =
        (0..=ncol).map(|c| grid.iter().map(|l| l[c].chars().count()).max().unwrap_or(0)).collect();
    let mut text = String::new();
    for line in &grid {
        let cells: Vec<String> = line
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        text.push_str(cells.join("  ").trim_end());
        text.push('\n');
    }
    RenderedTable { columns: table.columns.clone(), rows, text }
}
