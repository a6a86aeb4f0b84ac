//! Per-step diagnostic rows and their CSV form.
//!
//! Columns that a solver does not compute are written as `nan`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "t,mass,m2,com_x,com_y,e_inf,e_m,asymmetry,f_value,support_radius,excess_mass,w2_to_prev";

const COLUMNS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub t: f64,
    pub mass: f64,
    pub m2: f64,
    pub com_x: f64,
    pub com_y: f64,
    pub e_inf: f64,
    pub e_m: f64,
    pub asymmetry: f64,
    pub f_value: f64,
    pub support_radius: f64,
    pub excess_mass: f64,
    pub w2_to_prev: f64,
}

impl Row {
    /// All diagnostics unset.
    pub fn at(t: f64) -> Self {
        Self {
            t,
            mass: f64::NAN,
            m2: f64::NAN,
            com_x: f64::NAN,
            com_y: f64::NAN,
            e_inf: f64::NAN,
            e_m: f64::NAN,
            asymmetry: f64::NAN,
            f_value: f64::NAN,
            support_radius: f64::NAN,
            excess_mass: f64::NAN,
            w2_to_prev: f64::NAN,
        }
    }

    fn to_array(self) -> [f64; COLUMNS] {
        [
            self.t,
            self.mass,
            self.m2,
            self.com_x,
            self.com_y,
            self.e_inf,
            self.e_m,
            self.asymmetry,
            self.f_value,
            self.support_radius,
            self.excess_mass,
            self.w2_to_prev,
        ]
    }

    fn from_array(a: [f64; COLUMNS]) -> Self {
        Self {
            t: a[0],
            mass: a[1],
            m2: a[2],
            com_x: a[3],
            com_y: a[4],
            e_inf: a[5],
            e_m: a[6],
            asymmetry: a[7],
            f_value: a[8],
            support_radius: a[9],
            excess_mass: a[10],
            w2_to_prev: a[11],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    rows: Vec<Row>,
}

impl TimeSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a row; `t` must strictly increase.
    pub fn push(&mut self, row: Row) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::domain(format!(
                    "time series must increase: {} after {}",
                    row.t, last.t
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }

    pub fn column(&self, f: impl Fn(&Row) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            let cells: Vec<String> = r.to_array().iter().map(|v| format_float(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty csv".into()))??;
        if header.trim_end() != CSV_HEADER {
            return Err(Error::Format(format!("unexpected csv header '{header}'")));
        }
        let mut out = Self::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut a = [0.0; COLUMNS];
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != COLUMNS {
                return Err(Error::Format(format!(
                    "line {}: expected {COLUMNS} columns, got {}",
                    n + 2,
                    cells.len()
                )));
            }
            for (slot, cell) in a.iter_mut().zip(cells) {
                *slot = cell
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad number '{cell}'", n + 2)))?;
            }
            out.push(Row::from_array(a))
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 2)))?;
        }
        Ok(out)
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_fixed() {
        let mut buf = Vec::new();
        TimeSeries::new().write_csv(&mut buf).unwrap();
        assert_eq!(buf, format!("{CSV_HEADER}\n").into_bytes());
    }

    #[test]
    fn rejects_non_increasing_time() {
        let mut s = TimeSeries::new();
        s.push(Row::at(0.0)).unwrap();
        assert!(s.push(Row::at(0.0)).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(vals in proptest::collection::vec(-1e300f64..1e300, 11), n in 1usize..5) {
            let mut s = TimeSeries::new();
            for k in 0..n {
                let mut a = [0.0; COLUMNS];
                a[0] = k as f64 * 0.1;
                a[1..].copy_from_slice(&vals);
                a[6] = f64::NAN;
                s.push(Row::from_array(a)).unwrap();
            }
            let mut buf = Vec::new();
            s.write_csv(&mut buf).unwrap();
            let back = TimeSeries::read_csv(&buf[..]).unwrap();
            for (x, y) in back.rows().iter().zip(s.rows()) {
                for (p, q) in x.to_array().iter().zip(y.to_array()) {
                    prop_assert!(p.to_bits() == q.to_bits() || (p.is_nan() && q.is_nan()));
                }
            }
        }
    }
}
