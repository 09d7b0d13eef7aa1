//! The loss index: `S_t = L_t^p` (default `p = 0.1`) and its lag-1
//! difference `NDI_t = S_t − S_{t−1}`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{LossPanel, Period};

pub const DEFAULT_EXPONENT: f64 = 0.1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("need at least 2 periods, got {0}")]
    TooFewPeriods(usize),
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("losses must be finite and nonnegative")]
    NegativeLoss,
    #[error("malformed index file: {0}")]
    Malformed(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Transformed loss series and its first difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdiSeries {
    pub exponent: f64,
    /// One label per period, aligned with `loss` and `s`.
    pub periods: Vec<Period>,
    pub loss: Vec<f64>,
    pub s: Vec<f64>,
    /// `ndi[t-1] = s[t] − s[t-1]`; one shorter than `s`.
    pub ndi: Vec<f64>,
}

pub fn build_ndi(panel: &LossPanel) -> Result<NdiSeries, IndexError> {
    build_ndi_with_exponent(&panel.periods, &panel.total_loss, DEFAULT_EXPONENT)
}

pub fn build_ndi_with_exponent(
    periods: &[Period],
    total_loss: &[f64],
    exponent: f64,
) -> Result<NdiSeries, IndexError> {
    if total_loss.len() < 2 {
        return Err(IndexError::TooFewPeriods(total_loss.len()));
    }
    if total_loss.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(IndexError::NegativeLoss);
    }
    let s: Vec<f64> = total_loss.iter().map(|l| l.powf(exponent)).collect();
    let ndi = difference(&s)?;
    Ok(NdiSeries {
        exponent,
        periods: periods.to_vec(),
        loss: total_loss.to_vec(),
        s,
        ndi,
    })
}

/// `out[t-1] = in[t] − in[t-1]`.
pub fn difference(series: &[f64]) -> Result<Vec<f64>, IndexError> {
    if series.len() < 2 {
        return Err(IndexError::TooFewPoints(series.len()));
    }
    Ok(series.windows(2).map(|w| w[1] - w[0]).collect())
}

impl NdiSeries {
    /// CSV rows `period,loss,s,ndi` for `t = 1..T`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), IndexError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["period", "loss", "s", "ndi"])?;
        for t in 1..self.s.len() {
            w.write_record([
                self.periods[t].label(),
                self.loss[t].to_string(),
                self.s[t].to_string(),
                self.ndi[t - 1].to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Parse the CSV written by [`NdiSeries::write_csv`]. The base period is
    /// supplied separately since the CSV carries only `t >= 1`.
    pub fn read_csv<R: Read>(
        reader: R,
        exponent: f64,
        base_period: Period,
        base_loss: f64,
    ) -> Result<Self, IndexError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut periods = vec![base_period];
        let mut loss = vec![base_loss];
        for row in rdr.records() {
            let row = row?;
            let label = row.get(0).unwrap_or("");
            periods.push(
                Period::parse(label).ok_or_else(|| IndexError::Malformed(format!("period {label:?}")))?,
            );
            let l: f64 = row
                .get(1)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| IndexError::Malformed(format!("loss in row {label}")))?;
            loss.push(l);
        }
        build_ndi_with_exponent(&periods, &loss, exponent)
    }

    /// Reconstruct `s` from `s[0]` and the cumulative index.
    pub fn reconstruct_s(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.s.len());
        let mut acc = self.s[0];
        out.push(acc);
        for d in &self.ndi {
            acc += d;
            out.push(acc);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn periods(n: usize) -> Vec<Period> {
        (0..n)
            .map(|i| Period::new(2000 + (i / 24) as i32, (i % 24 / 2) as u32 + 1, i % 2 == 1))
            .collect()
    }

    #[test]
    fn constant_losses_give_zero_index() {
        let n = build_ndi_with_exponent(&periods(5), &[7.0; 5], 0.1).unwrap();
        assert!(n.ndi.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn power_of_two() {
        let n = build_ndi_with_exponent(&periods(2), &[0.0, 1024.0], 0.1).unwrap();
        assert_eq!(n.s[0], 0.0);
        assert!((n.ndi[0] - 2.0).abs() < 1e-15);
        let n = build_ndi_with_exponent(&periods(3), &[1.0, 1.0, 1e10], 0.1).unwrap();
        assert_eq!(n.ndi[0], 0.0);
        assert!((n.ndi[1] - 9.0).abs() < 1e-14);
    }

    #[test]
    fn differencing() {
        assert_eq!(difference(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(difference(&[1.0, 3.0, 2.0]).unwrap(), vec![2.0, -1.0]);
        assert!(matches!(difference(&[1.0]), Err(IndexError::TooFewPoints(1))));
        assert!(matches!(
            build_ndi_with_exponent(&periods(1), &[1.0], 0.1),
            Err(IndexError::TooFewPeriods(1))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let losses = [3.0e6, 0.0, 1.25e9, 4.4e4];
        let n = build_ndi_with_exponent(&periods(4), &losses, 0.1).unwrap();
        let mut buf = Vec::new();
        n.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 4);
        let back = NdiSeries::read_csv(buf.as_slice(), 0.1, n.periods[0], losses[0]).unwrap();
        assert_eq!(back, n);
    }

    proptest! {
        #[test]
        fn telescoping_and_reconstruction(losses in proptest::collection::vec(0.0f64..1e12, 2..200)) {
            let n = build_ndi_with_exponent(&periods(losses.len()), &losses, 0.1).unwrap();
            let sum: f64 = n.ndi.iter().sum();
            prop_assert!((sum - (n.s[n.s.len() - 1] - n.s[0])).abs() < 1e-10);
            for (a, b) in n.reconstruct_s().iter().zip(&n.s) {
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0) * n.s.len() as f64);
            }
            for t in 1..losses.len() {
                let direct = losses[t].powf(0.1) - losses[t - 1].powf(0.1);
                prop_assert!((n.ndi[t - 1] - direct).abs() <= 1e-12 * direct.abs().max(1e-300));
            }
        }
    }
}
