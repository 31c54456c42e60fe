use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::anova::{anova_grouped, mean, GroupedSample};
use super::ptukey::{ptukey_sf, qtukey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub group_a: String,
    pub group_b: String,
    /// `mean(group_b) - mean(group_a)`.
    pub mean_diff: f64,
    pub q_stat: f64,
    pub p_adjusted: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyResult {
    pub alpha: f64,
    pub k: usize,
    pub df: usize,
    pub ms_within: f64,
    pub q_critical: f64,
    pub pairs: Vec<TukeyPair>,
}

/// Tukey–Kramer honestly significant differences for all group pairs, with
/// simultaneous `1 - alpha` intervals.
pub fn tukey_hsd<S: AsRef<str>>(values: &[f64], groups: &[S], alpha: f64) -> Result<TukeyResult> {
    tukey_grouped(&GroupedSample::new(values, groups)?, alpha)
}

pub fn tukey_grouped(sample: &GroupedSample, alpha: f64) -> Result<TukeyResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(alloc::format!("alpha must be in (0, 1), got {alpha}")));
    }
    let anova = anova_grouped(sample)?;
    let k = sample.k();
    let df = anova.df_within;
    let mse = anova.ms_within();
    let q_critical = qtukey(1.0 - alpha, k as u32, df as f64)?;
    let names: Vec<&String> = sample.groups.keys().collect();
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let a = &sample.groups[names[i]];
            let b = &sample.groups[names[j]];
            let diff = mean(b) - mean(a);
            let se = libm::sqrt(mse / 2.0 * (1.0 / a.len() as f64 + 1.0 / b.len() as f64));
            let q = libm::fabs(diff) / se;
            pairs.push(TukeyPair {
                group_a: names[i].clone(),
                group_b: names[j].clone(),
                mean_diff: diff,
                q_stat: q,
                p_adjusted: ptukey_sf(q, k as u32, df as f64)?,
                ci_low: diff - q_critical * se,
                ci_high: diff + q_critical * se,
            });
        }
    }
    Ok(TukeyResult {
        alpha,
        k,
        df,
        ms_within: mse,
        q_critical,
        pairs,
    })
}
