//! Tabular reports and their CSV forms.

use std::io::{self, Write};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl Cell {
    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Bool(_) | Cell::Text(_) => None,
        }
    }
}

/// Seventeen significant digits, enough to recover every binary64 exactly.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn format_cell(c: &Cell) -> String {
    match c {
        Cell::Int(v) => v.to_string(),
        Cell::Float(v) => format_float(*v),
        Cell::Bool(v) => u8::from(*v).to_string(),
        Cell::Text(s) => quote(s),
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Which columns feed the `(x, y, series)` plot file.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub x: usize,
    pub y: usize,
    pub series: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub plot: Option<PlotSpec>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            plot: None,
        }
    }

    pub fn with_plot(mut self, x: &str, y: &str, series: &str) -> Self {
        let find = |name: &str| {
            self.columns
                .iter()
                .position(|c| c == name)
                .unwrap_or_else(|| panic!("no column {name}"))
        };
        let (x, y) = (find(x), find(y));
        self.plot = Some(PlotSpec {
            x,
            y,
            series: series.into(),
        });
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let header: Vec<String> = self.columns.iter().map(|c| quote(c)).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(format_cell).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

/// `(x, y, series)` rows for external plotting. Rows whose x or y is not
/// numeric are skipped; a table without plot columns gives only the header.
pub fn emit_plotdata<W: Write>(table: &Table, mut w: W) -> io::Result<()> {
    writeln!(w, "x,y,series")?;
    let Some(spec) = &table.plot else {
        return Ok(());
    };
    let series = quote(&spec.series);
    for row in &table.rows {
        if let (Some(x), Some(y)) = (row[spec.x].as_f64(), row[spec.y].as_f64()) {
            writeln!(w, "{},{},{series}", format_float(x), format_float(y))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for &x in &[0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["n", "ratio", "note"]);
        t.push(vec![3usize.into(), 0.5.into(), "a,b".into()]);
        t.push(vec![4usize.into(), true.into(), "plain".into()]);
        assert_eq!(
            t.to_csv_string(),
            "n,ratio,note\n3,5.0000000000000000e-1,\"a,b\"\n4,1,plain\n"
        );
    }

    #[test]
    fn plot_rows() {
        let mut t = Table::new(&["n", "ratio"]).with_plot("n", "ratio", "schroeder");
        t.push(vec![10usize.into(), 1.25.into()]);
        let mut out = Vec::new();
        emit_plotdata(&t, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "x,y,series\n1.0000000000000000e1,1.2500000000000000e0,schroeder\n"
        );
        let empty = Table::new(&["x", "w"]).with_plot("x", "w", "density");
        let mut out = Vec::new();
        emit_plotdata(&empty, &mut out).unwrap();
        assert_eq!(out, b"x,y,series\n");
    }
}
