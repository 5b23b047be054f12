//! Classification metrics and the retrieval cost-benefit measures.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::BinaryLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounts {
    pub n_total: usize,
    pub n_retrieved: usize,
    /// Triggered samples that were wrong before retrieval.
    pub n_err_classified: usize,
    pub n_dyn: usize,
    pub n_full: usize,
    pub n_no: usize,
}

impl RunCounts {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_err_classified <= self.n_retrieved
            && self.n_retrieved <= self.n_total
            && [self.n_dyn, self.n_full, self.n_no].iter().all(|&n| n <= self.n_total);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent run counts {self:?}")))
        }
    }

    pub fn scaled(&self, m: usize) -> RunCounts {
        RunCounts {
            n_total: self.n_total * m,
            n_retrieved: self.n_retrieved * m,
            n_err_classified: self.n_err_classified * m,
            n_dyn: self.n_dyn * m,
            n_full: self.n_full * m,
            n_no: self.n_no * m,
        }
    }
}

/// Share of triggered samples that were misclassified before retrieval.
pub fn retrieval_identification(c: &RunCounts) -> Result<f64> {
    if c.n_retrieved == 0 {
        return Err(Error::NoRetrievals);
    }
    Ok(c.n_err_classified as f64 / c.n_retrieved as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Annotation {
    None,
    Plus,
    Minus,
    Undefined,
}

impl Annotation {
    pub fn as_str(self) -> &'static str {
        match self {
            Annotation::None => "none",
            Annotation::Plus => "+",
            Annotation::Minus => "-",
            Annotation::Undefined => "n/a",
        }
    }
}

/// Dynamic retrieval's share of the full-retrieval gain, scaled by the
/// inverse trigger ratio. The value is `None` when full and no retrieval tie.
pub fn retrieval_efficiency(c: &RunCounts) -> Result<(Option<f64>, Annotation)> {
    if c.n_retrieved == 0 {
        return Err(Error::NoRetrievals);
    }
    if c.n_full == c.n_no {
        return Ok((None, Annotation::Undefined));
    }
    let gain = (c.n_dyn as f64 - c.n_no as f64) / (c.n_full as f64 - c.n_no as f64);
    let value = gain * (c.n_total as f64 / c.n_retrieved as f64);
    let degraded = c.n_dyn < c.n_no || c.n_full < c.n_no;
    let ann = if degraded && c.n_dyn > c.n_full {
        Annotation::Plus
    } else if degraded && c.n_dyn < c.n_full {
        Annotation::Minus
    } else {
        Annotation::None
    };
    Ok((Some(value), ann))
}

fn check_lengths(preds: &[BinaryLabel], golds: &[BinaryLabel]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch(preds.len(), golds.len()));
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    Ok(())
}

pub fn accuracy(preds: &[BinaryLabel], golds: &[BinaryLabel]) -> Result<f64> {
    check_lengths(preds, golds)?;
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum F1Mode {
    FakePositive,
    #[default]
    Macro,
}

/// F1 of one class. A class absent from both predictions and gold scores 1.
fn class_f1(preds: &[BinaryLabel], golds: &[BinaryLabel], pos: BinaryLabel) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in preds.iter().zip(golds) {
        match (p == pos, g == pos) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub fn f1(preds: &[BinaryLabel], golds: &[BinaryLabel], mode: F1Mode) -> Result<f64> {
    check_lengths(preds, golds)?;
    Ok(match mode {
        F1Mode::FakePositive => class_f1(preds, golds, BinaryLabel::Fake),
        F1Mode::Macro => {
            (class_f1(preds, golds, BinaryLabel::Fake) + class_f1(preds, golds, BinaryLabel::Real)) / 2.0
        }
    })
}

/// Metric block for one mode, in the report JSON layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub acc: f64,
    pub f1_macro: f64,
    pub f1_fake: f64,
    pub ri: Option<f64>,
    pub re: Option<(Option<f64>, Annotation)>,
    pub trigger_ratio: f64,
    pub counts: RunCounts,
}

impl MetricsReport {
    /// `counts` drives RI, RE and the trigger ratio. RE is omitted when the
    /// companion no/full runs were not available (`with_re == false`).
    pub fn compute(preds: &[BinaryLabel], golds: &[BinaryLabel], counts: RunCounts, with_re: bool) -> Result<Self> {
        let ri = match retrieval_identification(&counts) {
            Ok(v) => Some(v),
            Err(Error::NoRetrievals) => None,
            Err(e) => return Err(e),
        };
        let re = if with_re && counts.n_retrieved > 0 { Some(retrieval_efficiency(&counts)?) } else { None };
        Ok(MetricsReport {
            acc: accuracy(preds, golds)?,
            f1_macro: f1(preds, golds, F1Mode::Macro)?,
            f1_fake: f1(preds, golds, F1Mode::FakePositive)?,
            ri,
            re,
            trigger_ratio: if counts.n_total == 0 { 0.0 } else { counts.n_retrieved as f64 / counts.n_total as f64 },
            counts,
        })
    }

    pub fn to_json(&self) -> Value {
        let ri = match self.ri {
            Some(v) => json!(v),
            None => json!("*"),
        };
        let re = match self.re {
            Some((value, ann)) => json!({ "value": value, "annotation": ann.as_str() }),
            None => json!({ "value": null, "annotation": if self.ri.is_none() { "*" } else { "n/a" } }),
        };
        json!({
            "acc": self.acc,
            "f1_macro": self.f1_macro,
            "f1_fake": self.f1_fake,
            "ri": ri,
            "re": re,
            "trigger_ratio": self.trigger_ratio,
            "counts": self.counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Fake as F, Real as R};

    fn counts(n_total: usize, n_retrieved: usize, n_err: usize, n_dyn: usize, n_full: usize, n_no: usize) -> RunCounts {
        RunCounts { n_total, n_retrieved, n_err_classified: n_err, n_dyn, n_full, n_no }
    }

    #[test]
    fn ri_examples() {
        assert_eq!(retrieval_identification(&counts(100, 20, 9, 0, 0, 0)).unwrap(), 0.45);
        assert_eq!(retrieval_identification(&counts(100, 20, 20, 0, 0, 0)).unwrap(), 1.0);
        assert!(matches!(retrieval_identification(&counts(100, 0, 0, 0, 0, 0)), Err(Error::NoRetrievals)));
    }

    #[test]
    fn re_examples() {
        let (v, a) = retrieval_efficiency(&counts(200, 40, 0, 88, 90, 80)).unwrap();
        assert!((v.unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(a, Annotation::None);
        assert_eq!(retrieval_efficiency(&counts(200, 40, 0, 80, 90, 80)).unwrap().0, Some(0.0));
        assert_eq!(retrieval_efficiency(&counts(200, 40, 0, 82, 75, 80)).unwrap().1, Annotation::Plus);
        assert_eq!(retrieval_efficiency(&counts(200, 40, 0, 70, 75, 80)).unwrap().1, Annotation::Minus);
        assert_eq!(retrieval_efficiency(&counts(200, 40, 0, 80, 80, 80)).unwrap(), (None, Annotation::Undefined));
    }

    #[test]
    fn classification_examples() {
        assert_eq!(accuracy(&[F, R], &[F, R]).unwrap(), 1.0);
        assert_eq!(f1(&[F, R], &[F, R], F1Mode::Macro).unwrap(), 1.0);
        assert_eq!(f1(&[R, R], &[R, R], F1Mode::FakePositive).unwrap(), 1.0);
        assert_eq!(accuracy(&[R, R, R, R], &[F, F, R, R]).unwrap(), 0.5);
        assert_eq!(f1(&[R, R, R, R], &[F, F, R, R], F1Mode::FakePositive).unwrap(), 0.0);
        assert_eq!(f1(&[F, F, R, R], &[F, R, F, R], F1Mode::FakePositive).unwrap(), 0.5);
        assert!(matches!(accuracy(&[F], &[F, R]), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(f1(&[], &[], F1Mode::Macro), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn report_json_markers() {
        let r = MetricsReport::compute(&[F], &[F], counts(1, 0, 0, 1, 1, 1), true).unwrap();
        let j = r.to_json();
        assert_eq!(j["ri"], "*");
        assert_eq!(j["trigger_ratio"], 0.0);
        let r = MetricsReport::compute(&[F], &[F], counts(1, 1, 0, 1, 1, 1), true).unwrap();
        assert_eq!(r.to_json()["re"]["annotation"], "n/a");
        assert!(r.to_json()["re"]["value"].is_null());
    }
}
