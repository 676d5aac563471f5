//! Plausibility, faithfulness, the combined trust score, and dataset means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::mean;
use crate::types::{ScoreCard, METRIC_NAMES};

/// Whether dataset-level T is the mean of per-item T or T of the mean P and F.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationOrder {
    #[default]
    PerItem,
    Dataset,
}

impl AggregationOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            AggregationOrder::PerItem => "per-item",
            AggregationOrder::Dataset => "dataset",
        }
    }
}

pub fn plausibility_score(correctness: Option<f64>, consistency: Option<f64>) -> Option<f64> {
    Some((correctness? + consistency?) / 2.0)
}

/// Mean of whichever faithfulness metrics are present.
pub fn faithfulness_score(qag: Option<f64>, counterfactual: Option<f64>, contextual: Option<f64>) -> Option<f64> {
    let present: Vec<f64> = [qag, counterfactual, contextual].into_iter().flatten().collect();
    mean(&present)
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} = {v} is outside [0, 1]")))
    }
}

/// Harmonic mean of plausibility and faithfulness; 0 when both are 0.
pub fn lext(p: f64, f: f64) -> Result<f64> {
    check_unit("plausibility", p)?;
    check_unit("faithfulness", f)?;
    if p + f == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * p * f / (p + f))
}

/// The same score written as the average minus a disagreement penalty.
pub fn lext_penalty_form(p: f64, f: f64) -> Result<f64> {
    check_unit("plausibility", p)?;
    check_unit("faithfulness", f)?;
    if p + f == 0.0 {
        return Ok(0.0);
    }
    Ok((p + f) / 2.0 - (p - f).powi(2) / (2.0 * (p + f)))
}

/// Mean of one quantity over the items where it is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStat {
    pub mean: Option<f64>,
    pub present: usize,
    pub missing: usize,
}

impl MeanStat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> MeanStat {
        let mut present = Vec::new();
        let mut missing = 0;
        for v in values {
            match v {
                Some(v) => present.push(v),
                None => missing += 1,
            }
        }
        MeanStat {
            mean: mean(&present),
            present: present.len(),
            missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetAggregate {
    pub items: usize,
    pub order: AggregationOrder,
    pub metrics: BTreeMap<String, MeanStat>,
    pub plausibility: MeanStat,
    pub faithfulness: MeanStat,
    /// Dataset-level trust score under `order`.
    pub lext: Option<f64>,
    /// Items whose own trust score is missing.
    pub lext_missing: usize,
}

impl DatasetAggregate {
    pub fn from_scorecards(cards: &[ScoreCard], order: AggregationOrder) -> DatasetAggregate {
        let metrics = METRIC_NAMES
            .iter()
            .map(|name| {
                (
                    name.to_string(),
                    MeanStat::of(cards.iter().map(|c| c.metrics.get(name))),
                )
            })
            .collect();
        let plausibility = MeanStat::of(cards.iter().map(|c| c.plausibility));
        let faithfulness = MeanStat::of(cards.iter().map(|c| c.faithfulness));
        let per_item = MeanStat::of(cards.iter().map(|c| c.lext));
        let lext = match order {
            AggregationOrder::PerItem => per_item.mean,
            AggregationOrder::Dataset => match (plausibility.mean, faithfulness.mean) {
                (Some(p), Some(f)) => lext(p, f).ok(),
                _ => None,
            },
        };
        DatasetAggregate {
            items: cards.len(),
            order,
            metrics,
            plausibility,
            faithfulness,
            lext,
            lext_missing: per_item.missing,
        }
    }

    /// More than half the items lack a trust score.
    pub fn is_degraded(&self) -> bool {
        self.items > 0 && self.lext_missing * 2 > self.items
    }
}
