//! Signed rank-turbulence divergence between two attention vectors.
//!
//! Each system ranks its outlets by descending attention with average ranks
//! for ties. Outlets a system never shows share its trailing tied rank over
//! the union, `N + (N_union - N + 1) / 2`. An outlet's unsigned contribution
//! is `|r_a^-α - r_b^-α|^(1/(α+1))` divided by the same sum evaluated as if
//! the two systems shared no outlets, so contributions sum to the total
//! divergence and each lies in `[0, 1]`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::AttentionVector;
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Negligible,
    Moderate,
    Strong,
}

impl Band {
    /// `< 0.2` negligible, `0.2..=0.5` moderate, `> 0.5` strong.
    pub fn classify(contribution: f64) -> Band {
        let m = contribution.abs();
        if m < 0.2 {
            Band::Negligible
        } else if m <= 0.5 {
            Band::Moderate
        } else {
            Band::Strong
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtdContribution {
    pub domain: String,
    pub rank_a: f64,
    pub rank_b: f64,
    /// Positive when the outlet ranks better (smaller rank) in system A.
    pub signed_contribution: f64,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtdResult {
    pub alpha: f64,
    pub per_domain: Vec<RtdContribution>,
    pub total_divergence: f64,
    pub normalization: f64,
}

/// Fractional (average) ranks by descending count. Zero counts are dropped.
pub fn fractional_ranks(counts: &BTreeMap<String, u64>) -> BTreeMap<&str, f64> {
    let mut items: Vec<(&str, u64)> = counts
        .iter()
        .filter(|(_, c)| **c > 0)
        .map(|(d, c)| (d.as_str(), *c))
        .collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut ranks = BTreeMap::new();
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j < items.len() && items[j].1 == items[i].1 {
            j += 1;
        }
        // positions i+1 ..= j share their mean
        let rank = (i + 1 + j) as f64 / 2.0;
        for item in &items[i..j] {
            ranks.insert(item.0, rank);
        }
        i = j;
    }
    ranks
}

fn term(r1: f64, r2: f64, alpha: f64) -> f64 {
    libm::pow(libm::fabs(libm::pow(r1, -alpha) - libm::pow(r2, -alpha)), 1.0 / (alpha + 1.0))
}

pub fn rank_turbulence(a: &AttentionVector, b: &AttentionVector, alpha: f64) -> Result<RtdResult> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Parameter(alloc::format!("alpha must be positive and finite, got {alpha}")));
    }
    let ranks_a = fractional_ranks(&a.counts);
    let ranks_b = fractional_ranks(&b.counts);
    if ranks_a.is_empty() || ranks_b.is_empty() {
        return Err(Error::InvalidInput("both attention vectors must be non-empty".into()));
    }
    let mut union: Vec<&str> = ranks_a.keys().chain(ranks_b.keys()).copied().collect();
    union.sort_unstable();
    union.dedup();

    let n_a = ranks_a.len() as f64;
    let n_b = ranks_b.len() as f64;
    let n_union = union.len() as f64;
    let absent_a = n_a + (n_union - n_a + 1.0) / 2.0;
    let absent_b = n_b + (n_union - n_b + 1.0) / 2.0;

    let disjoint_a = n_a + (n_b + 1.0) / 2.0;
    let disjoint_b = n_b + (n_a + 1.0) / 2.0;
    let normalization: f64 = ranks_a.values().map(|&r| term(r, disjoint_b, alpha)).sum::<f64>()
        + ranks_b.values().map(|&r| term(disjoint_a, r, alpha)).sum::<f64>();

    let mut per_domain = Vec::with_capacity(union.len());
    let mut total = 0.0;
    for domain in union {
        let rank_a = ranks_a.get(domain).copied().unwrap_or(absent_a);
        let rank_b = ranks_b.get(domain).copied().unwrap_or(absent_b);
        let magnitude = term(rank_a, rank_b, alpha) / normalization;
        let signed = match rank_a.partial_cmp(&rank_b) {
            Some(Ordering::Less) => magnitude,
            Some(Ordering::Greater) => -magnitude,
            _ => 0.0,
        };
        total += magnitude;
        per_domain.push(RtdContribution {
            domain: String::from(domain),
            rank_a,
            rank_b,
            signed_contribution: signed,
            band: Band::classify(signed),
        });
    }
    Ok(RtdResult {
        alpha,
        per_domain,
        total_divergence: total,
        normalization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromotedSilenced {
    /// Largest positive contributions first.
    pub promoted: Vec<RtdContribution>,
    /// Most negative contributions first.
    pub silenced: Vec<RtdContribution>,
    pub total_divergence: f64,
}

/// Top-`k` outlets favoured by `llm` (promoted) and by `baseline`
/// (silenced). Ties in magnitude break by domain name.
pub fn promoted_silenced(
    llm: &AttentionVector,
    baseline: &AttentionVector,
    alpha: f64,
    k: usize,
) -> Result<PromotedSilenced> {
    let rtd = rank_turbulence(llm, baseline, alpha)?;
    let pick = |positive: bool| {
        let mut side: Vec<RtdContribution> = rtd
            .per_domain
            .iter()
            .filter(|c| {
                if positive {
                    c.signed_contribution > 0.0
                } else {
                    c.signed_contribution < 0.0
                }
            })
            .cloned()
            .collect();
        side.sort_by(|x, y| {
            y.signed_contribution
                .abs()
                .total_cmp(&x.signed_contribution.abs())
                .then_with(|| x.domain.cmp(&y.domain))
        });
        side.truncate(k);
        side
    };
    Ok(PromotedSilenced {
        promoted: pick(true),
        silenced: pick(false),
        total_divergence: rtd.total_divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Scope;
    use alloc::string::ToString;

    fn vector(pairs: &[(&str, u64)]) -> AttentionVector {
        AttentionVector {
            engine: "x".to_string(),
            scope: Scope::Global,
            counts: pairs.iter().map(|(d, c)| (d.to_string(), *c)).collect(),
        }
    }

    #[test]
    fn tie_ranks() {
        let v = vector(&[("a", 5), ("b", 3), ("c", 3), ("d", 1)]);
        let r = fractional_ranks(&v.counts);
        assert_eq!(r["a"], 1.0);
        assert_eq!(r["b"], 2.5);
        assert_eq!(r["c"], 2.5);
        assert_eq!(r["d"], 4.0);
    }

    #[test]
    fn identical_inputs() {
        let v = vector(&[("a", 5), ("b", 3), ("c", 1)]);
        let r = rank_turbulence(&v, &v, DEFAULT_ALPHA).unwrap();
        assert_eq!(r.total_divergence, 0.0);
        assert!(r.per_domain.iter().all(|c| c.signed_contribution == 0.0));
    }

    #[test]
    fn disjoint_systems_total_one() {
        let a = vector(&[("a", 5), ("b", 3)]);
        let b = vector(&[("c", 4), ("d", 4), ("e", 1)]);
        let r = rank_turbulence(&a, &b, DEFAULT_ALPHA).unwrap();
        assert!((r.total_divergence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn antisymmetry() {
        let a = vector(&[("a", 5), ("b", 3), ("c", 1)]);
        let b = vector(&[("b", 6), ("a", 2), ("d", 2)]);
        let ab = rank_turbulence(&a, &b, 0.5).unwrap();
        let ba = rank_turbulence(&b, &a, 0.5).unwrap();
        assert_eq!(ab.total_divergence, ba.total_divergence);
        for (x, y) in ab.per_domain.iter().zip(&ba.per_domain) {
            assert_eq!(x.domain, y.domain);
            assert_eq!(x.signed_contribution, -y.signed_contribution);
        }
    }

    #[test]
    fn bad_alpha() {
        let a = vector(&[("a", 1)]);
        assert!(matches!(rank_turbulence(&a, &a, 0.0), Err(Error::Parameter(_))));
        assert!(rank_turbulence(&a, &a, -1.0).is_err());
        assert!(rank_turbulence(&a, &vector(&[]), 1.0).is_err());
    }

    #[test]
    fn band_edges() {
        assert_eq!(Band::classify(0.0), Band::Negligible);
        assert_eq!(Band::classify(0.199_999_999), Band::Negligible);
        assert_eq!(Band::classify(0.2), Band::Moderate);
        assert_eq!(Band::classify(-0.2), Band::Moderate);
        assert_eq!(Band::classify(0.5), Band::Moderate);
        assert_eq!(Band::classify(0.500_000_001), Band::Strong);
        assert_eq!(Band::classify(-0.75), Band::Strong);
    }

    #[test]
    fn baseline_only_outlet_is_top_silenced() {
        // baseline pushes nytimes.com hard; the agent never cites it
        let baseline = vector(&[("nytimes.com", 50), ("apnews.com", 20), ("reuters.com", 12), ("bbc.com", 6)]);
        let llm = vector(&[("apnews.com", 18), ("reuters.com", 15), ("bbc.com", 9), ("en.wikipedia.org", 7)]);
        let ps = promoted_silenced(&llm, &baseline, DEFAULT_ALPHA, 4).unwrap();
        assert_eq!(ps.silenced[0].domain, "nytimes.com");
        assert!(ps.silenced[0].signed_contribution < 0.0);
        assert!(ps.promoted.iter().any(|c| c.domain == "en.wikipedia.org"));
        let max_abs = ps
            .promoted
            .iter()
            .chain(&ps.silenced)
            .map(|c| c.signed_contribution.abs())
            .fold(0.0, f64::max);
        assert_eq!(ps.silenced[0].signed_contribution.abs(), max_abs);
        // the ranking shift here is mild: every contribution stays below 0.2
        assert!(ps.promoted.iter().chain(&ps.silenced).all(|c| c.band == Band::Negligible));
    }

    #[test]
    fn baseline_only_outlet_can_be_strongly_silenced() {
        // the agent spreads its citations evenly; the baseline has one outlet
        let baseline = vector(&[("nytimes.com", 50)]);
        let llm = vector(&[("a.org", 4), ("b.org", 4), ("c.org", 4), ("d.org", 4), ("e.org", 4)]);
        let ps = promoted_silenced(&llm, &baseline, 0.1, 3).unwrap();
        assert_eq!(ps.silenced[0].domain, "nytimes.com");
        assert!(ps.silenced[0].signed_contribution < -0.5);
        assert_eq!(ps.silenced[0].band, Band::Strong);
    }

    #[test]
    fn llm_only_outlet_promoted_and_k_overflow() {
        let baseline = vector(&[("a.com", 3), ("b.com", 2)]);
        let llm = vector(&[("a.com", 3), ("new.org", 9)]);
        let ps = promoted_silenced(&llm, &baseline, DEFAULT_ALPHA, 100).unwrap();
        assert_eq!(ps.promoted[0].domain, "new.org");
        assert_eq!(ps.promoted.len() + ps.silenced.len(), 3);
    }

    #[test]
    fn deterministic_tie_break() {
        let baseline = vector(&[("z.com", 1)]);
        let llm = vector(&[("b.com", 1), ("a.com", 1)]);
        let ps = promoted_silenced(&llm, &baseline, DEFAULT_ALPHA, 2).unwrap();
        assert_eq!(ps.promoted[0].domain, "a.com");
        assert_eq!(ps.promoted[1].domain, "b.com");
    }
}
