//! Outlet scales (MBFC bias and factuality, PSL reliability, IAB category)
//! and outlet profiles with coverage accounting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercases and maps `_`/`-`/whitespace runs to `sep`.
fn canonical_label(raw: &str, sep: char) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending = false;
    for c in raw.trim().chars() {
        if c == '_' || c == '-' || c.is_whitespace() {
            pending = !out.is_empty();
        } else {
            if pending {
                out.push(sep);
                pending = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

macro_rules! ordinal_scale {
    (
        $(#[$meta:meta])*
        $name:ident, $scale:literal, sep = $sep:literal {
            $($variant:ident = $score:literal => $label:literal),+ $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn score(self) -> i8 {
                match self {
                    $($name::$variant => $score),+
                }
            }

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn parse(raw: &str) -> Result<Self> {
                let key = canonical_label(raw, $sep);
                match key.as_str() {
                    $($label => Ok($name::$variant),)+
                    _ => Err(Error::UnknownLabel { scale: $scale, label: raw.to_string() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

ordinal_scale! {
    /// MBFC ideological bias, coded -3 (far left) to +3 (extreme right).
    Bias, "MBFC bias", sep = '-' {
        FarLeft = -3 => "far-left",
        Left = -2 => "left",
        LeftCenter = -1 => "left-center",
        LeastBiased = 0 => "least-biased",
        RightCenter = 1 => "right-center",
        Right = 2 => "right",
        ExtremeRight = 3 => "extreme-right",
    }
}

ordinal_scale! {
    /// MBFC factual reporting, coded 0 (very low) to 5 (very high).
    Factuality, "MBFC factuality", sep = ' ' {
        VeryLow = 0 => "very low",
        Low = 1 => "low",
        Mixed = 2 => "mixed",
        MostlyFactual = 3 => "mostly factual",
        High = 4 => "high",
        VeryHigh = 5 => "very high",
    }
}

ordinal_scale! {
    /// Perennial-sources reliability, coded 0 (deprecated) to 3 (generally
    /// reliable).
    PslLabel, "PSL", sep = '_' {
        Deprecated = 0 => "deprecated",
        GenerallyUnreliable = 1 => "generally_unreliable",
        NoConsensus = 2 => "no_consensus",
        GenerallyReliable = 3 => "generally_reliable",
    }
}

pub const IAB_TAXONOMY_VERSION: &str = "IAB Content Taxonomy 3.0 (tier 1)";

/// Provider results below this confidence are discarded.
pub const IAB_MIN_CONFIDENCE: f64 = 0.50;

/// The 27 top-level categories of the IAB content taxonomy.
pub const IAB_CATEGORIES: [&str; 27] = [
    "Adult",
    "Arts & Entertainment",
    "Autos & Vehicles",
    "Beauty & Fitness",
    "Books & Literature",
    "Business & Industrial",
    "Computers & Electronics",
    "Finance",
    "Food & Drink",
    "Games",
    "Health",
    "Hobbies & Leisure",
    "Home & Garden",
    "Internet & Telecom",
    "Jobs & Education",
    "Law & Government",
    "News",
    "Online Communities",
    "People & Society",
    "Pets & Animals",
    "Real Estate",
    "Reference",
    "Science",
    "Sensitive Subjects",
    "Shopping",
    "Sports",
    "Travel",
];

/// A category from [`IAB_CATEGORIES`], stored in its canonical spelling.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IabCategory(&'static str);

impl IabCategory {
    /// Accepts the canonical names case-insensitively, with `and` for `&`
    /// and an optional leading `/` (provider paths such as `/News/Politics`
    /// map to their top-level segment).
    pub fn parse(raw: &str) -> Result<Self> {
        let top = raw.trim().trim_start_matches('/');
        let top = top.split('/').next().unwrap_or(top);
        let key = canonical_label(&top.replace('&', " and "), ' ');
        IAB_CATEGORIES
            .iter()
            .find(|c| canonical_label(&c.replace('&', " and "), ' ') == key)
            .map(|c| IabCategory(c))
            .ok_or_else(|| Error::UnknownLabel {
                scale: "IAB category",
                label: raw.to_string(),
            })
    }

    pub fn name(&self) -> &'static str {
        self.0
    }
}

impl Serialize for IabCategory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.0)
    }
}

impl<'de> Deserialize<'de> for IabCategory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        IabCategory::parse(&raw).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for IabCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

/// MBFC rating of one outlet. Either part may be unrated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbfcRating {
    pub bias: Option<Bias>,
    pub factuality: Option<Factuality>,
}

impl MbfcRating {
    /// Parses one dataset row; empty labels mean "not rated".
    pub fn from_labels(bias: &str, factuality: &str) -> Result<Self> {
        Ok(MbfcRating {
            bias: non_empty(bias).map(Bias::parse).transpose()?,
            factuality: non_empty(factuality).map(Factuality::parse).transpose()?,
        })
    }
}

fn non_empty(s: &str) -> Option<&str> {
    let t = s.trim();
    (!t.is_empty()).then_some(t)
}

/// Where an outlet's category came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IabSource {
    Override,
    Provider,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IabAssignment {
    pub category: Option<IabCategory>,
    pub confidence: Option<f64>,
    pub source: IabSource,
    /// Set when the provider failed in transport and a later run may succeed.
    #[serde(default)]
    pub retryable: bool,
}

impl IabAssignment {
    pub fn missing(retryable: bool) -> Self {
        IabAssignment {
            category: None,
            confidence: None,
            source: IabSource::Missing,
            retryable,
        }
    }
}

/// Raw provider verdict for a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderVerdict {
    pub category: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("category provider failed: {0}")]
pub struct ProviderError(pub String);

/// Source of (category, confidence) verdicts, e.g. a web classification
/// service or a fixture table.
pub trait IabProvider {
    fn categorize(&self, domain: &str) -> core::result::Result<Option<ProviderVerdict>, ProviderError>;
}

/// Keeps a provider verdict only at confidence ≥ 0.50 and with a category
/// inside the taxonomy.
pub fn accept_verdict(verdict: &ProviderVerdict) -> Option<IabCategory> {
    if !(verdict.confidence >= IAB_MIN_CONFIDENCE) || verdict.confidence > 1.0 {
        return None;
    }
    IabCategory::parse(&verdict.category).ok()
}

/// Category for one domain: overrides win, then an accepted provider
/// verdict; anything else is missing. The provider is not called for
/// overridden domains.
pub fn categorize_iab(
    domain: &str,
    provider: &dyn IabProvider,
    overrides: &BTreeMap<String, IabCategory>,
) -> IabAssignment {
    if let Some(category) = overrides.get(domain) {
        return IabAssignment {
            category: Some(category.clone()),
            confidence: None,
            source: IabSource::Override,
            retryable: false,
        };
    }
    match provider.categorize(domain) {
        Ok(Some(verdict)) => match accept_verdict(&verdict) {
            Some(category) => IabAssignment {
                category: Some(category),
                confidence: Some(verdict.confidence),
                source: IabSource::Provider,
                retryable: false,
            },
            None => IabAssignment::missing(false),
        },
        Ok(None) => IabAssignment::missing(false),
        Err(_) => IabAssignment::missing(true),
    }
}

/// Everything known about one outlet domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutletProfile {
    pub domain: String,
    pub mbfc_bias: Option<i8>,
    pub mbfc_factuality: Option<i8>,
    pub psl_label: Option<PslLabel>,
    pub psl_score: Option<i8>,
    pub iab_category: Option<IabCategory>,
    pub iab_confidence: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCoverage {
    pub matched: usize,
    pub missing: usize,
}

impl SourceCoverage {
    fn count(&mut self, hit: bool) {
        if hit {
            self.matched += 1;
        } else {
            self.missing += 1;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub domains: usize,
    pub mbfc_bias: SourceCoverage,
    pub mbfc_factuality: SourceCoverage,
    pub psl: SourceCoverage,
    pub iab: SourceCoverage,
    /// IAB categories that came from the override table.
    pub iab_overridden: usize,
}

/// Loaded reference datasets, keyed by normalized domain.
#[derive(Debug, Clone, Default)]
pub struct Lookups {
    pub mbfc: BTreeMap<String, MbfcRating>,
    pub psl: BTreeMap<String, PslLabel>,
    pub iab: BTreeMap<String, IabAssignment>,
}

/// One profile per domain (sorted by domain) plus per-source coverage.
pub fn build_profiles(
    domains: &BTreeSet<String>,
    lookups: &Lookups,
) -> (Vec<OutletProfile>, CoverageReport) {
    let mut coverage = CoverageReport {
        domains: domains.len(),
        ..CoverageReport::default()
    };
    let mut profiles = Vec::with_capacity(domains.len());
    for domain in domains {
        let mbfc = lookups.mbfc.get(domain).copied().unwrap_or_default();
        let psl = lookups.psl.get(domain).copied();
        let iab = lookups.iab.get(domain);
        let category = iab.and_then(|a| a.category.clone());
        coverage.mbfc_bias.count(mbfc.bias.is_some());
        coverage.mbfc_factuality.count(mbfc.factuality.is_some());
        coverage.psl.count(psl.is_some());
        coverage.iab.count(category.is_some());
        if iab.is_some_and(|a| a.source == IabSource::Override) {
            coverage.iab_overridden += 1;
        }
        profiles.push(OutletProfile {
            domain: domain.clone(),
            mbfc_bias: mbfc.bias.map(Bias::score),
            mbfc_factuality: mbfc.factuality.map(Factuality::score),
            psl_label: psl,
            psl_score: psl.map(PslLabel::score),
            iab_confidence: iab.and_then(|a| if category.is_some() { a.confidence } else { None }),
            iab_category: category,
        });
    }
    (profiles, coverage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::cell::Cell;

    #[test]
    fn bias_table() {
        let expected = [
            ("far-left", -3),
            ("left", -2),
            ("left-center", -1),
            ("least-biased", 0),
            ("right-center", 1),
            ("right", 2),
            ("extreme-right", 3),
        ];
        assert_eq!(Bias::ALL.len(), expected.len());
        for (bias, (label, score)) in Bias::ALL.iter().zip(expected) {
            assert_eq!(bias.label(), label);
            assert_eq!(bias.score(), score);
            assert_eq!(Bias::parse(label).unwrap(), *bias);
        }
        assert!(Bias::ALL.windows(2).all(|w| w[0].score() < w[1].score()));
    }

    #[test]
    fn factuality_table() {
        let expected = ["very low", "low", "mixed", "mostly factual", "high", "very high"];
        for (i, label) in expected.iter().enumerate() {
            assert_eq!(Factuality::parse(label).unwrap().score(), i as i8);
        }
        assert_eq!(Factuality::ALL.len(), 6);
    }

    #[test]
    fn psl_table() {
        let expected = ["deprecated", "generally_unreliable", "no_consensus", "generally_reliable"];
        for (i, label) in expected.iter().enumerate() {
            assert_eq!(PslLabel::parse(label).unwrap().score(), i as i8);
        }
    }

    #[test]
    fn label_spelling_variants() {
        assert_eq!(Bias::parse("Left-Center").unwrap(), Bias::LeftCenter);
        assert_eq!(Bias::parse("left center").unwrap(), Bias::LeftCenter);
        assert_eq!(Bias::parse(" LEAST_BIASED ").unwrap(), Bias::LeastBiased);
        assert_eq!(Factuality::parse("Mostly-Factual").unwrap(), Factuality::MostlyFactual);
        assert_eq!(PslLabel::parse("Generally reliable").unwrap(), PslLabel::GenerallyReliable);
        assert_eq!(PslLabel::parse("no consensus").unwrap(), PslLabel::NoConsensus);
    }

    #[test]
    fn unknown_labels_rejected() {
        assert!(matches!(Bias::parse("centrist"), Err(Error::UnknownLabel { .. })));
        assert!(Factuality::parse("factual").is_err());
        assert!(PslLabel::parse("blacklisted").is_err());
    }

    #[test]
    fn mbfc_rows() {
        assert_eq!(
            MbfcRating::from_labels("left-center", "high").unwrap(),
            MbfcRating {
                bias: Some(Bias::LeftCenter),
                factuality: Some(Factuality::High)
            }
        );
        let r = MbfcRating::from_labels("least-biased", "mixed").unwrap();
        assert_eq!((r.bias.unwrap().score(), r.factuality.unwrap().score()), (0, 2));
        assert_eq!(MbfcRating::from_labels("", "high").unwrap().bias, None);
    }

    #[test]
    fn iab_vocabulary() {
        assert_eq!(IAB_CATEGORIES.len(), 27);
        let set: BTreeSet<_> = IAB_CATEGORIES.iter().collect();
        assert_eq!(set.len(), 27);
        assert_eq!(IabCategory::parse("law and government").unwrap().name(), "Law & Government");
        assert_eq!(IabCategory::parse("/News/Politics").unwrap().name(), "News");
        assert!(IabCategory::parse("Politics").is_err());
    }

    struct Fixed(Option<ProviderVerdict>, Cell<u32>);

    impl IabProvider for Fixed {
        fn categorize(&self, _: &str) -> core::result::Result<Option<ProviderVerdict>, ProviderError> {
            self.1.set(self.1.get() + 1);
            Ok(self.0.clone())
        }
    }

    fn verdict(category: &str, confidence: f64) -> Fixed {
        Fixed(
            Some(ProviderVerdict {
                category: category.to_string(),
                confidence,
            }),
            Cell::new(0),
        )
    }

    #[test]
    fn threshold_behaviour() {
        let none = BTreeMap::new();
        let at = |c| categorize_iab("x.com", &verdict("News", c), &none);
        assert_eq!(at(0.49).category, None);
        assert_eq!(at(0.50).category.unwrap().name(), "News");
        assert_eq!(at(0.51).category.unwrap().name(), "News");
        assert_eq!(at(0.93).confidence, Some(0.93));
        assert_eq!(at(0.40).source, IabSource::Missing);
    }

    #[test]
    fn override_wins_without_provider_call() {
        let mut overrides = BTreeMap::new();
        overrides.insert("un.org".to_string(), IabCategory::parse("Law & Government").unwrap());
        let provider = Fixed(None, Cell::new(0));
        let a = categorize_iab("un.org", &provider, &overrides);
        assert_eq!(a.category.unwrap().name(), "Law & Government");
        assert_eq!(a.source, IabSource::Override);
        assert_eq!(provider.1.get(), 0);
    }

    #[test]
    fn out_of_vocabulary_verdict_missing() {
        let a = categorize_iab("x.com", &verdict("Politics", 0.99), &BTreeMap::new());
        assert_eq!(a.category, None);
    }

    struct Failing;
    impl IabProvider for Failing {
        fn categorize(&self, _: &str) -> core::result::Result<Option<ProviderVerdict>, ProviderError> {
            Err(ProviderError("timeout".into()))
        }
    }

    #[test]
    fn transport_failure_is_retryable_missing() {
        let a = categorize_iab("x.com", &Failing, &BTreeMap::new());
        assert_eq!(a.category, None);
        assert!(a.retryable);
    }

    #[test]
    fn profiles_and_coverage() {
        let mut lookups = Lookups::default();
        lookups.mbfc.insert("bbc.com".into(), MbfcRating::from_labels("left-center", "high").unwrap());
        lookups.psl.insert("aa.com.tr".into(), PslLabel::parse("no_consensus").unwrap());
        lookups.iab.insert(
            "bbc.com".into(),
            categorize_iab("bbc.com", &verdict("News", 0.93), &BTreeMap::new()),
        );
        let domains: BTreeSet<String> = ["bbc.com", "aa.com.tr", "unknown.org"].iter().map(|s| s.to_string()).collect();
        let (profiles, coverage) = build_profiles(&domains, &lookups);
        assert_eq!(profiles.len(), 3);
        let aa = &profiles[0];
        assert_eq!(aa.domain, "aa.com.tr");
        assert_eq!(aa.psl_score, Some(2));
        assert_eq!(aa.mbfc_bias, None);
        let bbc = &profiles[1];
        assert_eq!((bbc.mbfc_bias, bbc.mbfc_factuality), (Some(-1), Some(4)));
        assert_eq!(bbc.psl_label, None);
        assert_eq!(bbc.iab_category.as_ref().unwrap().name(), "News");
        assert_eq!(coverage.domains, 3);
        assert_eq!(coverage.mbfc_bias, SourceCoverage { matched: 1, missing: 2 });
        assert_eq!(coverage.psl, SourceCoverage { matched: 1, missing: 2 });
        assert_eq!(coverage.iab, SourceCoverage { matched: 1, missing: 2 });

        let (empty, cov) = build_profiles(&BTreeSet::new(), &lookups);
        assert!(empty.is_empty());
        assert_eq!(cov.domains, 0);
    }
}
