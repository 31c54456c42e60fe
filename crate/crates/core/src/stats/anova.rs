use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::special::f_sf;
use crate::error::{invalid, Error, Result};

/// Observations split by group, groups in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSample {
    pub groups: BTreeMap<String, Vec<f64>>,
}

impl GroupedSample {
    pub fn new<S: AsRef<str>>(values: &[f64], groups: &[S]) -> Result<Self> {
        if values.len() != groups.len() {
            return Err(invalid!(
                "{} values but {} group labels",
                values.len(),
                groups.len()
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid!("non-finite observation {v}"));
        }
        let mut map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (v, g) in values.iter().zip(groups) {
            map.entry(g.as_ref().to_string()).or_default().push(*v);
        }
        if map.len() < 2 {
            return Err(invalid!("need at least two groups, got {}", map.len()));
        }
        if let Some((g, _)) = map.iter().find(|(_, v)| v.len() < 2) {
            return Err(invalid!("group {g:?} has fewer than two observations"));
        }
        Ok(GroupedSample { groups: map })
    }

    pub fn n(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub ss_between: f64,
    pub ss_within: f64,
    pub ss_total: f64,
    pub group_means: BTreeMap<String, f64>,
    pub group_sizes: BTreeMap<String, usize>,
}

impl AnovaResult {
    pub fn ms_within(&self) -> f64 {
        self.ss_within / self.df_within as f64
    }
}

/// One-way ANOVA of `values` by `groups`.
pub fn anova_oneway<S: AsRef<str>>(values: &[f64], groups: &[S]) -> Result<AnovaResult> {
    anova_grouped(&GroupedSample::new(values, groups)?)
}

pub fn anova_grouped(sample: &GroupedSample) -> Result<AnovaResult> {
    let all: Vec<f64> = sample.groups.values().flatten().copied().collect();
    let grand = mean(&all);
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    let mut group_means = BTreeMap::new();
    let mut group_sizes = BTreeMap::new();
    for (g, obs) in &sample.groups {
        let m = mean(obs);
        ss_between += obs.len() as f64 * (m - grand) * (m - grand);
        ss_within += obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        group_means.insert(g.clone(), m);
        group_sizes.insert(g.clone(), obs.len());
    }
    let ss_total: f64 = all.iter().map(|v| (v - grand) * (v - grand)).sum();
    let df_between = sample.k() - 1;
    let df_within = sample.n() - sample.k();
    if df_within == 0 {
        return Err(invalid!("no within-group degrees of freedom"));
    }
    if ss_within <= 0.0 {
        return Err(Error::UndefinedInput(
            "zero within-group variance: F statistic undefined".into(),
        ));
    }
    let f_stat = (ss_between / df_between as f64) / (ss_within / df_within as f64);
    let p_value = f_sf(f_stat, df_between as f64, df_within as f64)?;
    Ok(AnovaResult {
        f_stat,
        df_between,
        df_within,
        p_value,
        ss_between,
        ss_within,
        ss_total,
        group_means,
        group_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn identical_groups() {
        let r = anova_oneway(&[1.0, 2.0, 3.0, 1.0, 2.0, 3.0], &["a", "a", "a", "b", "b", "b"]).unwrap();
        assert_eq!(r.f_stat, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!((r.df_between, r.df_within), (1, 4));
    }

    #[test]
    fn hand_computed_fixture() {
        // A = {4,5,6,5}, B = {6,7,8,7}, C = {9,8,10,9}; grand mean 7
        // SSB = 4(4 + 0 + 4) = 32, SSW = 2 + 2 + 2 = 6
        // F = (32/2) / (6/9) = 24
        let values = [4.0, 5.0, 6.0, 5.0, 6.0, 7.0, 8.0, 7.0, 9.0, 8.0, 10.0, 9.0];
        let groups = ["A", "A", "A", "A", "B", "B", "B", "B", "C", "C", "C", "C"];
        let r = anova_oneway(&values, &groups).unwrap();
        assert!((r.ss_between - 32.0).abs() < 1e-12);
        assert!((r.ss_within - 6.0).abs() < 1e-12);
        assert!((r.f_stat - 24.0).abs() < 1e-10);
        // closed form for df1 = 2: p = (1 + 2F/df2)^(-df2/2) = (1 + 48/9)^(-4.5)
        let exact = libm::pow(1.0 + 48.0 / 9.0, -4.5);
        assert!((r.p_value - exact).abs() < 1e-12);
        assert_eq!(r.group_means["B"], 7.0);
    }

    #[test]
    fn errors() {
        assert!(anova_oneway(&[1.0, 2.0], &["a", "a"]).is_err());
        assert!(anova_oneway(&[1.0, 2.0, 3.0], &["a", "a", "b"]).is_err());
        assert!(anova_oneway(&[1.0, 2.0], &["a"]).is_err());
        assert!(matches!(
            anova_oneway(&[1.0, 1.0, 2.0, 2.0], &["a", "a", "b", "b"]),
            Err(Error::UndefinedInput(_))
        ));
        assert!(anova_oneway(&[f64::NAN, 1.0, 2.0, 2.0], &["a", "a", "b", "b"]).is_err());
    }

    #[test]
    fn four_engines_by_24_topics_degrees_of_freedom() {
        let mut values = vec![];
        let mut groups = vec![];
        for (e, engine) in ["claude", "gemini", "gpt", "google_news"].iter().enumerate() {
            for t in 0..24 {
                values.push((e * 3 + t % 5) as f64);
                groups.push(*engine);
            }
        }
        let r = anova_oneway(&values, &groups).unwrap();
        assert_eq!((r.df_between, r.df_within), (3, 92));
        assert!((r.ss_total - r.ss_between - r.ss_within).abs() <= 1e-9 * r.ss_total);
    }
}
