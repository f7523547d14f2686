use super::{EstimatorKind, ScoreMatrix};
use crate::{Error, Result, Rng, Tensor};

/// Where an anchor's negatives come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NegativeSource {
    /// Mismatched pairings inside the batch that holds the positives.
    WithinBatch,
    /// Candidates from an independent second batch.
    CrossBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NegativeSamplingConfig {
    /// Negatives kept per positive; `None` keeps every available one.
    pub negatives: Option<usize>,
    /// Drop the anchor's own sample (every location of it) from the
    /// negatives. Ignored for cross-batch negatives.
    pub exclude_positive: bool,
    pub source: NegativeSource,
}

impl Default for NegativeSamplingConfig {
    fn default() -> Self {
        NegativeSamplingConfig {
            negatives: None,
            exclude_positive: true,
            source: NegativeSource::WithinBatch,
        }
    }
}

impl NegativeSamplingConfig {
    pub fn with_negatives(n: usize) -> Self {
        NegativeSamplingConfig {
            negatives: Some(n),
            ..Default::default()
        }
    }
}

/// Scores of every anchor against every candidate column.
///
/// Within-batch layout: anchor `i`'s positive at location `l` sits in column
/// `i·L + l`. For cross-batch negatives the first `B·L` columns are laid out
/// the same way and the remaining columns belong to the independent batch.
#[derive(Clone, Debug)]
pub struct PairScores {
    pub scores: Tensor,
    pub locations: usize,
}

impl PairScores {
    pub fn new(scores: Tensor, locations: usize) -> Result<PairScores> {
        if scores.rank() != 2 || locations == 0 || scores.shape()[1] < scores.shape()[0] * locations {
            return Err(Error::InvalidShape {
                shape: scores.shape().to_vec(),
                reason: format!("pair scores need [B, >= B·{locations}]"),
            });
        }
        Ok(PairScores { scores, locations })
    }

    pub fn batch(&self) -> usize {
        self.scores.shape()[0]
    }

    fn columns(&self) -> usize {
        self.scores.shape()[1]
    }

    /// Candidate columns that may serve as negatives for anchor `i`.
    pub fn available(&self, i: usize, cfg: &NegativeSamplingConfig) -> Vec<usize> {
        let matched = self.batch() * self.locations;
        match cfg.source {
            NegativeSource::CrossBatch => (matched..self.columns()).collect(),
            NegativeSource::WithinBatch if cfg.exclude_positive => {
                let own = i * self.locations..(i + 1) * self.locations;
                (0..matched).filter(|c| !own.contains(c)).collect()
            }
            NegativeSource::WithinBatch => (0..matched).collect(),
        }
    }

    /// The score matrix for location `location`: one row per anchor.
    pub fn score_matrix(
        &self,
        location: usize,
        cfg: &NegativeSamplingConfig,
        rng: &mut Rng,
    ) -> Result<ScoreMatrix> {
        if location >= self.locations {
            return Err(Error::invalid(format!(
                "location {location} out of range for {} locations",
                self.locations
            )));
        }
        let b = self.batch();
        let cols = self.columns();
        let mut idx = Vec::new();
        let mut width = None;
        for i in 0..b {
            let avail = self.available(i, cfg);
            let picked = match cfg.negatives {
                None => avail,
                Some(n) if n > avail.len() || n == 0 => {
                    return Err(Error::InsufficientCandidates {
                        requested: n,
                        available: avail.len(),
                    })
                }
                Some(n) if n == avail.len() => avail,
                Some(n) => rng.sample_indices(avail.len(), n).into_iter().map(|k| avail[k]).collect(),
            };
            if picked.is_empty() {
                return Err(Error::InsufficientCandidates {
                    requested: 1,
                    available: 0,
                });
            }
            width.get_or_insert(picked.len());
            idx.push(i * cols + i * self.locations + location);
            idx.extend(picked.iter().map(|c| i * cols + c));
        }
        let k = 1 + width.unwrap_or(0);
        ScoreMatrix::new(self.scores.gather(idx, &[b, k])?)
    }

    /// Average of the estimator over every location.
    pub fn estimate(&self, kind: EstimatorKind, cfg: &NegativeSamplingConfig, rng: &mut Rng) -> Result<(Tensor, usize)> {
        let mut total: Option<Tensor> = None;
        let mut k = 0;
        for l in 0..self.locations {
            let sm = self.score_matrix(l, cfg, rng)?;
            k = sm.k();
            let e = kind.estimate(&sm)?;
            total = Some(match total {
                None => e,
                Some(t) => t.add(&e)?,
            });
        }
        let total = total.expect("at least one location");
        Ok((total.scale(1.0 / self.locations as f64)?, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exclusion_counts() {
        let s = PairScores::new(Tensor::zeros(&[4, 64]).unwrap(), 16).unwrap();
        let mut cfg = NegativeSamplingConfig::default();
        assert_eq!(s.available(2, &cfg).len(), 48);
        cfg.exclude_positive = false;
        assert_eq!(s.available(2, &cfg).len(), 64);
    }

    #[test]
    fn positive_lands_in_column_zero() {
        let b = 3;
        let data: Vec<f64> = (0..b * b).map(|v| v as f64).collect();
        let s = PairScores::new(Tensor::new(&[b, b], data).unwrap(), 1).unwrap();
        let sm = s
            .score_matrix(0, &NegativeSamplingConfig::default(), &mut Rng::seed_from(0))
            .unwrap();
        assert_eq!(sm.scores().data(), &[0.0, 1.0, 2.0, 4.0, 3.0, 5.0, 8.0, 6.0, 7.0]);
    }
}
