//! CSV emitters and readers for regression tables and curves.
//!
//! Tables: `variable,coefficient,se,stars`, one row per parameter, then the
//! footer rows `Adjusted R2`, `F-statistic`, `p-value` and `N` with the value
//! in the coefficient column. Curves: `grid,estimate,lower90,upper90`, with
//! `NA` where a value is undefined.

use super::RegressionResult;
use crate::error::{Error, Result};

pub const TABLE_HEADER: [&str; 4] = ["variable", "coefficient", "se", "stars"];
pub const CURVE_HEADER: [&str; 4] = ["grid", "estimate", "lower90", "upper90"];
pub const FOOTER: [&str; 4] = ["Adjusted R2", "F-statistic", "p-value", "N"];

/// Significance marks at the 10%, 5% and 1% two-sided levels.
pub fn stars(coefficient: f64, se: f64) -> &'static str {
    let t = (coefficient / se).abs();
    if !(se > 0.0) || !t.is_finite() {
        ""
    } else if t > 2.576 {
        "***"
    } else if t > 1.96 {
        "**"
    } else if t > 1.645 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub variable: String,
    pub coefficient: f64,
    pub se: Option<f64>,
    pub stars: String,
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

fn parse(what: &str, s: &str) -> Result<f64> {
    if s == "NA" {
        return Ok(f64::NAN);
    }
    s.parse().map_err(|_| Error::Data(format!("{what}: bad number `{s}`")))
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_regression_table(r: &RegressionResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_HEADER).expect("in-memory write");
    for (j, name) in r.names.iter().enumerate() {
        let c = r.coefficients[j];
        let (se, st) = match &r.bootstrap {
            Some(b) => (fmt(b.se[j]), stars(c, b.se[j])),
            None => (String::new(), ""),
        };
        w.write_record([name.as_str(), &fmt(c), &se, st])
            .expect("in-memory write");
    }
    for (label, v) in FOOTER.iter().zip([r.adj_r2, r.f_stat, r.f_pvalue, r.n as f64]) {
        w.write_record([*label, &fmt(v), "", ""]).expect("in-memory write");
    }
    finish(w)
}

pub fn read_regression_table(text: &str) -> Result<Vec<TableRow>> {
    let what = "regression table";
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()
        .map_err(|e| Error::Data(format!("{what}: {e}")))?
        .iter()
        .ne(TABLE_HEADER)
    {
        return Err(Error::Data(format!("{what}: unexpected header")));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Data(format!("{what}: {e}")))?;
            Ok(TableRow {
                variable: rec[0].to_string(),
                coefficient: parse(what, &rec[1])?,
                se: if rec[2].is_empty() {
                    None
                } else {
                    Some(parse(what, &rec[2])?)
                },
                stars: rec[3].to_string(),
            })
        })
        .collect()
}

/// A curve over a grid with pointwise 90% bands.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn write_curve_csv(c: &Curve) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVE_HEADER).expect("in-memory write");
    for i in 0..c.grid.len() {
        w.write_record([fmt(c.grid[i]), fmt(c.estimate[i]), fmt(c.lower[i]), fmt(c.upper[i])])
            .expect("in-memory write");
    }
    finish(w)
}

pub fn read_curve_csv(text: &str) -> Result<Curve> {
    let what = "curve csv";
    let mut r = csv::Reader::from_reader(text.as_bytes());
    if r.headers()
        .map_err(|e| Error::Data(format!("{what}: {e}")))?
        .iter()
        .ne(CURVE_HEADER)
    {
        return Err(Error::Data(format!("{what}: unexpected header")));
    }
    let mut c = Curve {
        grid: vec![],
        estimate: vec![],
        lower: vec![],
        upper: vec![],
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{what}: {e}")))?;
        c.grid.push(parse(what, &rec[0])?);
        c.estimate.push(parse(what, &rec[1])?);
        c.lower.push(parse(what, &rec[2])?);
        c.upper.push(parse(what, &rec[3])?);
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::{ols_with_bootstrap, DesignMatrix};

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(1.7, 1.0), "*");
        assert_eq!(stars(-2.0, 1.0), "**");
        assert_eq!(stars(3.0, 1.0), "***");
        assert_eq!(stars(1.0, 1.0), "");
        assert_eq!(stars(1.0, 0.0), "");
    }

    #[test]
    fn table_round_trip() {
        let x = DesignMatrix::from_columns(
            30,
            vec![("a".into(), (0..30).map(|i| (i as f64).sin()).collect())],
            true,
        )
        .unwrap();
        let y: Vec<f64> = (0..30)
            .map(|i| 1.0 + (i as f64).sin() + 0.1 * (i as f64 * 7.3).cos())
            .collect();
        let r = ols_with_bootstrap(&x, &y, 100, 1).unwrap();
        let rows = read_regression_table(&write_regression_table(&r)).unwrap();
        assert_eq!(rows.len(), 2 + 4);
        assert_eq!(rows[1].variable, "a");
        assert_eq!(rows[1].coefficient, r.coefficients[1]);
        assert_eq!(rows[1].se, Some(r.bootstrap.as_ref().unwrap().se[1]));
        assert_eq!(rows[5].variable, "N");
        assert_eq!(rows[5].coefficient, 30.0);
        assert_eq!(rows[2].se, None);
    }

    #[test]
    fn curve_round_trip_with_missing() {
        let c = Curve {
            grid: vec![0.0, 0.5],
            estimate: vec![1.25, f64::NAN],
            lower: vec![1.0, f64::NAN],
            upper: vec![1.5, f64::NAN],
        };
        let text = write_curve_csv(&c);
        assert!(text.contains("0.5,NA,NA,NA"));
        let back = read_curve_csv(&text).unwrap();
        assert_eq!(back.grid, c.grid);
        assert!(back.estimate[1].is_nan());
        assert_eq!(back.upper[0], 1.5);
    }
}
