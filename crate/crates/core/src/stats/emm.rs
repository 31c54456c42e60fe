//! Estimated marginal means of a factor and their contrasts against a
//! baseline level, with Wald intervals on the normal reference.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::design::{FactorCoding, INTERCEPT};
use super::lmm::MixedModelFit;
use super::special::normal_two_sided;
use crate::error::{invalid, Error, Result};

/// Two-sided 95% normal critical value.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmmContrast {
    pub engine: String,
    pub emm: f64,
    pub emm_se: f64,
    /// `emm(engine) - emm(baseline)`.
    pub diff_vs_baseline: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
}

fn quad_form(v: &[f64], cov: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, vi) in v.iter().enumerate() {
        if *vi == 0.0 {
            continue;
        }
        for (j, vj) in v.iter().enumerate() {
            s += vi * cov[i][j] * vj;
        }
    }
    s.max(0.0)
}

/// EMMs for every level of `factor` at the given covariate values, and
/// contrasts against `baseline`. Covariates not listed are an error; pass
/// `Design::covariate_means()` for the usual grand-mean evaluation point.
pub fn emm_contrasts<S: AsRef<str>>(
    fit: &MixedModelFit,
    factor: &FactorCoding,
    baseline: &str,
    covariate_values: &[(S, f64)],
) -> Result<Vec<EmmContrast>> {
    if !factor.has_level(baseline) {
        return Err(Error::UnknownLevel(baseline.to_string()));
    }
    let p = fit.fixed_effects.len();
    let mut base = vec![0.0; p];
    base[fit
        .index_of(INTERCEPT)
        .ok_or_else(|| invalid!("model has no intercept"))?] = 1.0;
    for (name, value) in covariate_values {
        let idx = fit
            .index_of(name.as_ref())
            .ok_or_else(|| invalid!("covariate {:?} is not in the model", name.as_ref()))?;
        base[idx] = *value;
    }
    let factor_prefix = alloc::format!("{}[", factor.name);
    let covered: usize = 1 + covariate_values.len();
    let factor_cols = fit
        .fixed_effects
        .iter()
        .filter(|c| c.name.starts_with(&factor_prefix))
        .count();
    if covered + factor_cols != p {
        return Err(invalid!(
            "model has {p} coefficients but only {} are accounted for",
            covered + factor_cols
        ));
    }

    let level_vector = |level: &str| -> Result<Vec<f64>> {
        let mut v = base.clone();
        if let Some(col) = factor.column_name(level) {
            let idx = fit
                .index_of(&col)
                .ok_or_else(|| invalid!("coefficient {col:?} missing from the model"))?;
            v[idx] = 1.0;
        }
        Ok(v)
    };
    let estimate = |v: &[f64]| -> f64 { v.iter().zip(&fit.fixed_effects).map(|(a, c)| a * c.estimate).sum() };

    let lb = level_vector(baseline)?;
    let emm_b = estimate(&lb);
    let mut out = Vec::with_capacity(factor.levels.len());
    for level in &factor.levels {
        let lv = level_vector(level)?;
        let emm = estimate(&lv);
        let emm_se = libm::sqrt(quad_form(&lv, &fit.covariance));
        if level == baseline {
            out.push(EmmContrast {
                engine: level.clone(),
                emm,
                emm_se,
                diff_vs_baseline: 0.0,
                se: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                p_value: 1.0,
            });
            continue;
        }
        let d: Vec<f64> = lv.iter().zip(&lb).map(|(a, b)| a - b).collect();
        let diff = emm - emm_b;
        let se = libm::sqrt(quad_form(&d, &fit.covariance));
        let p_value = if se > 0.0 { normal_two_sided(diff / se) } else { 1.0 };
        out.push(EmmContrast {
            engine: level.clone(),
            emm,
            emm_se,
            diff_vs_baseline: diff,
            se,
            ci_low: diff - Z_975 * se,
            ci_high: diff + Z_975 * se,
            p_value,
        });
    }
    Ok(out)
}
