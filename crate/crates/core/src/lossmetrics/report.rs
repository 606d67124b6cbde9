use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{l1_error, mutual_information, nmse, psnr, MetricError, PsnrMode, Result};

/// JSON numbers cannot hold infinities; they are written as strings.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    pub psnr_mode: PsnrMode,
    pub mi_bins: usize,
    pub data_range: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            psnr_mode: PsnrMode::Standard,
            mi_bins: 64,
            data_range: 1.0,
        }
    }
}

/// Metrics of a single image pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub l1: f64,
    pub nmse: f64,
    #[serde(with = "lenient_f64")]
    pub psnr_db: f64,
    pub mi: f64,
}

impl MetricRow {
    pub fn compute(pred: &[f64], reference: &[f64], opts: &MetricOptions) -> Result<Self> {
        Ok(Self {
            l1: l1_error(pred, reference)?,
            nmse: nmse(pred, reference)?,
            psnr_db: psnr(pred, reference, opts.psnr_mode)?,
            mi: mutual_information(pred, reference, opts.mi_bins, opts.data_range)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    #[serde(with = "lenient_f64")]
    pub mean: f64,
    #[serde(with = "lenient_f64")]
    pub std: f64,
}

impl MetricStat {
    /// Mean and sample standard deviation. A single value has std 0, and a
    /// set of identical values (infinite ones included) has std 0.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        if values.iter().all(|&v| v == values[0]) {
            return Self {
                mean: values[0],
                std: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if !mean.is_finite() {
            return Self {
                mean,
                std: f64::INFINITY,
            };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Self { mean, std: var.sqrt() }
    }
}

/// Per-image and aggregate metrics of one method against the references,
/// in the column order L1, NMSE, PSNR, MI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub count: usize,
    pub l1: MetricStat,
    pub nmse: MetricStat,
    pub psnr_db: MetricStat,
    pub mi: MetricStat,
    pub per_image: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn compute<P, R>(label: &str, preds: &[P], refs: &[R], opts: &MetricOptions) -> Result<Self>
    where
        P: AsRef<[f64]>,
        R: AsRef<[f64]>,
    {
        if preds.len() != refs.len() {
            return Err(MetricError::ShapeMismatch {
                got: preds.len(),
                expected: refs.len(),
            });
        }
        if preds.is_empty() {
            return Err(MetricError::EmptySet);
        }
        let rows = preds
            .iter()
            .zip(refs)
            .map(|(p, r)| MetricRow::compute(p.as_ref(), r.as_ref(), opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_rows(label, rows))
    }

    pub fn from_rows(label: &str, rows: Vec<MetricRow>) -> Self {
        let col = |f: fn(&MetricRow) -> f64| MetricStat::of(&rows.iter().map(f).collect::<Vec<_>>());
        Self {
            label: label.to_string(),
            count: rows.len(),
            l1: col(|r| r.l1),
            nmse: col(|r| r.nmse),
            psnr_db: col(|r| r.psnr_db),
            mi: col(|r| r.mi),
            per_image: rows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn cell(stat: &MetricStat, decimals: usize) -> String {
    format!("{:.*} ± {:.*}", decimals, stat.mean, decimals, stat.std)
}

/// Plain-text table, one row per report.
pub fn render_table(reports: &[&MetricsReport]) -> String {
    let header = ["model", "L1 error", "NMSE", "PSNR [dB]", "MI"];
    let rows: Vec<[String; 5]> = reports
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                cell(&r.l1, 3),
                cell(&r.nmse, 3),
                cell(&r.psnr_db, 2),
                cell(&r.mi, 2),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &header.map(String::from));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&mut out, &rule);
    for row in &rows {
        line(&mut out, row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(l1: f64, nmse: f64, psnr_db: f64, mi: f64) -> MetricRow {
        MetricRow { l1, nmse, psnr_db, mi }
    }

    #[test]
    fn single_pair_has_zero_std() {
        let r = MetricsReport::from_rows("x", vec![row(0.1, 0.2, 30.0, 1.0)]);
        assert_eq!(r.psnr_db, MetricStat { mean: 30.0, std: 0.0 });
    }

    #[test]
    fn two_pairs_mean_and_sample_std() {
        let r = MetricsReport::from_rows("x", vec![row(0.1, 0.02, 20.0, 1.0), row(0.3, 0.04, 26.0, 1.5)]);
        assert!((r.l1.mean - 0.2).abs() < 1e-15);
        // sample std of {a, b} is |a - b| / sqrt(2)
        assert!((r.l1.std - 0.2 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.psnr_db.mean, 23.0);
        assert!((r.psnr_db.std - 6.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn infinite_psnr_round_trips_through_json() {
        let r = MetricsReport::from_rows("Full", vec![row(0.0, 0.0, f64::INFINITY, 2.0); 3]);
        let json = r.to_json();
        assert!(json.contains("\"inf\""));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["l1", "nmse", "psnr_db", "mi"] {
            assert!(v[key].get("mean").is_some() && v[key].get("std").is_some());
        }
    }

    #[test]
    fn table_columns_in_order() {
        let a = MetricsReport::from_rows("Low-dose", vec![row(0.043, 0.062, 25.81, 1.01)]);
        let b = MetricsReport::from_rows("HQINet", vec![row(0.021, 0.012, 31.30, 1.30)]);
        let t = render_table(&[&a, &b]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        let h = lines[0];
        let pos: Vec<usize> = ["model", "L1 error", "NMSE", "PSNR [dB]", "MI"]
            .iter()
            .map(|c| h.find(c).unwrap())
            .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(lines[2].starts_with("Low-dose"));
        assert!(lines[3].starts_with("HQINet"));
        assert!(lines[3].contains("31.30 ± 0.00"));
    }

    #[test]
    fn mismatched_or_empty_sets_rejected() {
        let opts = MetricOptions::default();
        let a = vec![vec![0.5; 4]];
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(
            MetricsReport::compute("x", &a, &empty, &opts),
            Err(MetricError::ShapeMismatch { .. })
        ));
        assert_eq!(
            MetricsReport::compute("x", &empty, &empty, &opts),
            Err(MetricError::EmptySet)
        );
    }
}
