use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdaError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricTarget {
    RegionIncidence,
    ContinuousRisk,
}

impl MetricTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricTarget::RegionIncidence => "region-incidence",
            MetricTarget::ContinuousRisk => "continuous-risk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub target: MetricTarget,
    pub bias: f64,
    pub rmse: f64,
    pub wpi: f64,
    pub cp: f64,
}

/// Bias, RMSE, mean interval width and coverage, averaged over every
/// (location, replicate) pair of the flattened inputs.
pub fn metrics(target: MetricTarget, truths: &[f64], predictions: &[f64], intervals: &[(f64, f64)]) -> Result<MetricReport> {
    let n = truths.len();
    if predictions.len() != n || intervals.len() != n {
        return Err(SdaError::Shape(format!(
            "{n} truths, {} predictions, {} intervals",
            predictions.len(),
            intervals.len()
        )));
    }
    if n == 0 {
        return Err(SdaError::Shape("no values to summarize".into()));
    }
    let nn = n as f64;
    let mut bias = 0.0;
    let mut sq = 0.0;
    let mut width = 0.0;
    let mut covered = 0usize;
    for ((&t, &p), &(lo, hi)) in truths.iter().zip(predictions).zip(intervals) {
        bias += p - t;
        sq += (p - t) * (p - t);
        width += hi - lo;
        covered += usize::from(lo <= t && t <= hi);
    }
    Ok(MetricReport {
        target,
        bias: bias / nn,
        rmse: (sq / nn).sqrt(),
        wpi: width / nn,
        cp: covered as f64 / nn,
    })
}

/// `target,bias,rmse,wpi,cp`
pub fn write_metrics_csv<W: Write>(mut w: W, reports: &[MetricReport]) -> std::io::Result<()> {
    writeln!(w, "target,bias,rmse,wpi,cp")?;
    for r in reports {
        writeln!(w, "{},{},{},{},{}", r.target.as_str(), r.bias, r.rmse, r.wpi, r.cp)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let r = metrics(
            MetricTarget::RegionIncidence,
            &[1.0, 2.0, 3.0, 4.0],
            &[2.0; 4],
            &[(0.0, 5.0), (2.5, 3.0), (0.0, 3.0), (0.0, 1.0)],
        )
        .unwrap();
        assert_eq!(r.bias, -0.5);
        assert_eq!(r.rmse, 1.5f64.sqrt());
        assert_eq!(r.wpi, (5.0 + 0.5 + 3.0 + 1.0) / 4.0);
        assert_eq!(r.cp, 0.5);
    }

    #[test]
    fn perfect_and_unbounded() {
        let t = [0.3, 1.7, 2.2];
        let r = metrics(MetricTarget::ContinuousRisk, &t, &t, &[(0.3, 0.3), (1.7, 1.7), (2.2, 2.2)]).unwrap();
        assert_eq!((r.bias, r.rmse, r.wpi, r.cp), (0.0, 0.0, 0.0, 1.0));
        let inf = f64::INFINITY;
        let r = metrics(MetricTarget::ContinuousRisk, &t, &[9.0, -4.0, 0.0], &[(-inf, inf); 3]).unwrap();
        assert_eq!(r.cp, 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            metrics(MetricTarget::RegionIncidence, &[1.0], &[1.0, 2.0], &[(0.0, 1.0)]),
            Err(SdaError::Shape(_))
        ));
    }

    #[test]
    fn csv_and_json() {
        let r = metrics(MetricTarget::RegionIncidence, &[1.0], &[1.0], &[(0.0, 2.0)]).unwrap();
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &[r]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "target,bias,rmse,wpi,cp\nregion-incidence,0,0,2,1\n");
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"target\":\"region-incidence\""));
    }
}
