use std::fmt;
use std::str::FromStr;

use crate::tensor::ReduceKind;
use crate::{Error, Result, Tensor};

/// Critic scores for `R` anchors against `K` candidates each. Column 0 is the
/// positive pair; the rest are negatives.
#[derive(Clone, Debug)]
pub struct ScoreMatrix {
    scores: Tensor,
    mask: Option<Vec<bool>>,
}

impl ScoreMatrix {
    pub fn new(scores: Tensor) -> Result<ScoreMatrix> {
        if scores.rank() != 2 || scores.shape()[1] < 2 {
            return Err(Error::InvalidShape {
                shape: scores.shape().to_vec(),
                reason: "score matrix needs [rows, K] with K >= 2".into(),
            });
        }
        Ok(ScoreMatrix { scores, mask: None })
    }

    /// Restricts the negatives to entries whose mask value is true. The mask
    /// is row-major over the full matrix; column 0 must stay valid and every
    /// row must keep at least one negative.
    pub fn with_mask(scores: Tensor, mask: Vec<bool>) -> Result<ScoreMatrix> {
        let mut sm = ScoreMatrix::new(scores)?;
        let k = sm.k();
        if mask.len() != sm.scores.numel() {
            return Err(Error::invalid("mask length does not match the score matrix"));
        }
        for row in mask.chunks(k) {
            if !row[0] || !row[1..].iter().any(|&m| m) {
                return Err(Error::invalid("every row needs its positive and at least one negative"));
            }
        }
        sm.mask = Some(mask);
        Ok(sm)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<ScoreMatrix> {
        ScoreMatrix::new(Tensor::from_rows(rows)?)
    }

    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    pub fn rows(&self) -> usize {
        self.scores.shape()[0]
    }

    /// Candidates per anchor, positive included.
    pub fn k(&self) -> usize {
        self.scores.shape()[1]
    }

    pub fn positives(&self) -> Result<Tensor> {
        self.scores.index_select(1, &[0])
    }

    fn valid(&self, r: usize, c: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[r * self.k() + c])
    }

    /// Every valid negative score, flattened.
    pub fn negatives(&self) -> Result<Tensor> {
        let k = self.k();
        let idx: Vec<usize> = (0..self.rows())
            .flat_map(|r| (1..k).filter(move |&c| self.valid(r, c)).map(move |c| r * k + c))
            .collect();
        let n = idx.len();
        self.scores.gather(idx, &[n])
    }

    /// Per-row logsumexp over the valid candidates, positive included.
    fn row_logsumexp(&self) -> Result<Tensor> {
        match &self.mask {
            None => self.scores.reduce(ReduceKind::LogSumExp, Some(1)),
            Some(_) => {
                let k = self.k();
                let rows = (0..self.rows())
                    .map(|r| {
                        let idx: Vec<usize> = (0..k).filter(|&c| self.valid(r, c)).map(|c| r * k + c).collect();
                        let n = idx.len();
                        self.scores.gather(idx, &[n])?.logsumexp()?.reshape(&[1])
                    })
                    .collect::<Result<Vec<_>>>()?;
                Tensor::concat(&rows.iter().collect::<Vec<_>>(), 0)
            }
        }
    }
}

/// Donsker-Varadhan bound: `mean(pos) - logsumexp(neg) + ln N`.
pub fn dv_estimate(sm: &ScoreMatrix) -> Result<Tensor> {
    let neg = sm.negatives()?;
    let n = neg.numel() as f64;
    sm.positives()?.mean()?.sub(&neg.logsumexp()?)?.shift(n.ln())
}

/// Jensen-Shannon estimator: `mean(-sp(-pos)) - mean(sp(neg))`.
pub fn jsd_estimate(sm: &ScoreMatrix) -> Result<Tensor> {
    let pos = sm.positives()?.neg()?.softplus()?.mean()?;
    let neg = sm.negatives()?.softplus()?.mean()?;
    pos.neg()?.sub(&neg)
}

/// infoNCE: `mean_rows(pos - logsumexp(row))`. Never above `ln K`; with the
/// positive counted among the candidates it is in fact never above 0.
pub fn infonce_estimate(sm: &ScoreMatrix) -> Result<Tensor> {
    sm.positives()?.reshape(&[sm.rows()])?.sub(&sm.row_logsumexp()?)?.mean()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Dv,
    Jsd,
    InfoNce,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Dv, EstimatorKind::Jsd, EstimatorKind::InfoNce];

    pub fn estimate(self, sm: &ScoreMatrix) -> Result<Tensor> {
        match self {
            EstimatorKind::Dv => dv_estimate(sm),
            EstimatorKind::Jsd => jsd_estimate(sm),
            EstimatorKind::InfoNce => infonce_estimate(sm),
        }
    }

    /// Value of the estimator on independent data with an uninformative critic.
    pub fn zero_mi_floor(self, k: usize) -> f64 {
        match self {
            EstimatorKind::Dv => 0.0,
            EstimatorKind::Jsd => -2.0 * std::f64::consts::LN_2,
            EstimatorKind::InfoNce => -(k as f64).ln(),
        }
    }

    /// Constant that puts the estimate on the nat scale of MI. Only infoNCE
    /// has one: `ln K`, giving the familiar bound capped at `ln K`.
    pub fn mi_offset(self, k: usize) -> f64 {
        match self {
            EstimatorKind::InfoNce => (k as f64).ln(),
            _ => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Dv => "dv",
            EstimatorKind::Jsd => "jsd",
            EstimatorKind::InfoNce => "infonce",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dv" => Ok(EstimatorKind::Dv),
            "jsd" => Ok(EstimatorKind::Jsd),
            "infonce" | "nce" => Ok(EstimatorKind::InfoNce),
            other => Err(Error::invalid(format!("unknown estimator {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_drops_negatives() {
        let t = Tensor::from_rows(&[vec![1.0, 5.0, 0.0], vec![2.0, 0.0, 9.0]]).unwrap();
        let sm = ScoreMatrix::with_mask(t, vec![true, false, true, true, true, false]).unwrap();
        assert_eq!(sm.negatives().unwrap().data(), &[0.0, 0.0]);
        let nce = infonce_estimate(&sm).unwrap().item().unwrap();
        let want = 0.5 * ((1.0 - (1f64.exp() + 1.0).ln()) + (2.0 - (2f64.exp() + 1.0).ln()));
        assert!((nce - want).abs() < 1e-12);
    }

    #[test]
    fn mask_must_keep_a_negative() {
        let t = Tensor::zeros(&[1, 2]).unwrap();
        assert!(ScoreMatrix::with_mask(t, vec![true, false]).is_err());
    }
}
