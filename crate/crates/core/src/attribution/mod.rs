//! Answer text to ranked outlet domains.
//!
//! [`attribute`] runs extraction, shortener expansion and domain
//! normalization in that order and caps the result at the top ten entries.

mod extract;
mod host;
mod suffix;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use extract::{extract_urls, ExtractedLink};
pub use host::{url_host, HostError};
pub use suffix::{SuffixRules, BUILTIN_RULES, BUILTIN_RULES_VERSION};

use crate::probe::{ProbeKey, RawAnswer};

/// Maximum number of entries kept per SERP.
pub const MAX_ENTRIES: usize = 10;
/// Default redirect hop bound for shortener expansion.
pub const DEFAULT_MAX_HOPS: u32 = 5;

/// Hosts whose subdomains are outlets in their own right.
pub const DEFAULT_KEEP_SUBDOMAINS: [&str; 1] = ["wikipedia.org"];

/// Seed list of link shorteners and agent redirect hosts.
pub const DEFAULT_SHORTENERS: [&str; 22] = [
    "bit.ly",
    "t.co",
    "goo.gl",
    "tinyurl.com",
    "ow.ly",
    "buff.ly",
    "is.gd",
    "rb.gy",
    "cutt.ly",
    "shorturl.at",
    "tiny.cc",
    "lnkd.in",
    "dlvr.it",
    "trib.al",
    "amzn.to",
    "bbc.in",
    "nyti.ms",
    "wapo.st",
    "reut.rs",
    "apne.ws",
    "g.co",
    "vertexaisearch.cloud.google.com",
];

/// Host set matched exactly or as a parent domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HostSet(BTreeSet<String>);

impl HostSet {
    pub fn new<I, S>(hosts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        HostSet(
            hosts
                .into_iter()
                .map(|h| h.as_ref().trim().trim_end_matches('.').to_lowercase())
                .filter(|h| !h.is_empty() && !h.starts_with('#'))
                .collect(),
        )
    }

    /// One host per line; blank lines and `#` comments ignored.
    pub fn parse(list: &str) -> Self {
        Self::new(list.lines().map(|l| l.split('#').next().unwrap_or("")))
    }

    pub fn contains_host(&self, host: &str) -> bool {
        let host = host.strip_prefix("www.").unwrap_or(host);
        let mut rest = host;
        loop {
            if self.0.contains(rest) {
                return true;
            }
            match rest.split_once('.') {
                Some((_, parent)) if parent.contains('.') => rest = parent,
                _ => return false,
            }
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Host-to-outlet normalization rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizationRules {
    pub suffixes: SuffixRules,
    pub keep_subdomains: HostSet,
}

impl Default for NormalizationRules {
    fn default() -> Self {
        NormalizationRules {
            suffixes: SuffixRules::builtin(),
            keep_subdomains: HostSet::new(DEFAULT_KEEP_SUBDOMAINS),
        }
    }
}

/// Outlet domain of a URL: lowercase host without `www.`, reduced to its
/// registrable domain unless it sits under a keep-subdomain host.
pub fn normalize_domain(url: &str, rules: &NormalizationRules) -> Result<String, HostError> {
    let host = url_host(url)?;
    Ok(normalize_host(&host, rules))
}

pub(crate) fn normalize_host(host: &str, rules: &NormalizationRules) -> String {
    let host = match host.strip_prefix("www.") {
        Some(rest) if rest.contains('.') => rest,
        _ => host,
    };
    if host::is_ipv4(host) || rules.keep_subdomains.contains_host(host) {
        return host.to_string();
    }
    rules
        .suffixes
        .registrable_domain(host)
        .unwrap_or(host)
        .to_string()
}

/// Normalizes a bare domain or host name (as found in dataset files) with the
/// same rules as [`normalize_domain`].
pub fn normalize_domain_name(name: &str, rules: &NormalizationRules) -> Result<String, HostError> {
    let name = name.trim();
    if url_host(name).is_ok() {
        return normalize_domain(name, rules);
    }
    let mut url = String::from("https://");
    url.push_str(name);
    normalize_domain(&url, rules)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("redirect resolution failed: {0}")]
pub struct ResolveError(pub String);

/// One redirect step. Implementations return the absolute target of a
/// redirect response, or `None` when `url` answers without redirecting.
pub trait RedirectResolver {
    fn resolve_hop(&self, url: &str) -> Result<Option<String>, ResolveError>;
}

impl<R: RedirectResolver + ?Sized> RedirectResolver for &R {
    fn resolve_hop(&self, url: &str) -> Result<Option<String>, ResolveError> {
        (**self).resolve_hop(url)
    }
}

/// Resolver for offline runs: every lookup fails, so shortened links keep
/// their original URL and carry the failure flag.
#[derive(Debug, Clone, Copy, Default)]
pub struct OfflineResolver;

impl RedirectResolver for OfflineResolver {
    fn resolve_hop(&self, _url: &str) -> Result<Option<String>, ResolveError> {
        Err(ResolveError("offline".to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expansion {
    pub url: String,
    pub hops: u32,
    pub failed: bool,
}

/// Follows redirects for URLs on a shortener host. Other URLs come back
/// untouched without consulting the resolver. On failure or when more than
/// `max_hops` redirects are needed, the original URL is returned flagged.
pub fn expand_url(
    url: &str,
    shorteners: &HostSet,
    resolver: &dyn RedirectResolver,
    max_hops: u32,
) -> Expansion {
    let untouched = |failed| Expansion {
        url: url.to_string(),
        hops: 0,
        failed,
    };
    match url_host(url) {
        Ok(host) if shorteners.contains_host(&host) => {}
        _ => return untouched(false),
    }
    let mut current = url.to_string();
    for hop in 0..=max_hops {
        match resolver.resolve_hop(&current) {
            Ok(None) => {
                return Expansion {
                    url: current,
                    hops: hop,
                    failed: false,
                }
            }
            Ok(Some(next)) if hop < max_hops => current = next,
            Ok(Some(_)) | Err(_) => return untouched(true),
        }
    }
    untouched(true)
}

/// Settings for [`attribute`].
#[derive(Debug, Clone)]
pub struct Attributor {
    pub rules: NormalizationRules,
    pub shorteners: HostSet,
    pub max_hops: u32,
    pub max_entries: usize,
}

impl Default for Attributor {
    fn default() -> Self {
        Attributor {
            rules: NormalizationRules::default(),
            shorteners: HostSet::new(DEFAULT_SHORTENERS),
            max_hops: DEFAULT_MAX_HOPS,
            max_entries: MAX_ENTRIES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerpEntry {
    pub rank: u32,
    pub title: String,
    pub raw_url: String,
    pub final_url: String,
    pub domain: String,
    pub normalized_rank: f64,
    #[serde(default)]
    pub expansion_failed: bool,
}

/// An extracted link that could not be attributed to an outlet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributionIssue {
    /// 1-based position among the extracted links.
    pub position: usize,
    pub raw_url: String,
    pub reason: HostError,
}

/// Ranked outlet list for one probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerpRecord {
    #[serde(flatten)]
    pub key: ProbeKey,
    pub entries: Vec<SerpEntry>,
    pub truncated: bool,
    /// No entry could be attributed; kept for accounting, skipped by metrics.
    pub attribution_miss: bool,
    /// Links found in the answer before attribution and truncation.
    pub extracted: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<AttributionIssue>,
}

impl Attributor {
    pub fn attribute(&self, answer: &RawAnswer, resolver: &dyn RedirectResolver) -> SerpRecord {
        attribute(answer, resolver, self)
    }
}

/// Extract, expand, normalize, then keep the first `max_entries` entries.
pub fn attribute(
    answer: &RawAnswer,
    resolver: &dyn RedirectResolver,
    settings: &Attributor,
) -> SerpRecord {
    let links = extract_urls(&answer.text);
    let mut issues = Vec::new();
    let mut kept: Vec<(ExtractedLink, Expansion, String)> = Vec::new();
    for (i, link) in links.iter().enumerate() {
        if let Err(reason) = url_host(&link.url) {
            issues.push(AttributionIssue {
                position: i + 1,
                raw_url: link.url.clone(),
                reason,
            });
            continue;
        }
        let expansion = expand_url(&link.url, &settings.shorteners, resolver, settings.max_hops);
        match normalize_domain(&expansion.url, &settings.rules) {
            Ok(domain) => kept.push((link.clone(), expansion, domain)),
            Err(reason) => issues.push(AttributionIssue {
                position: i + 1,
                raw_url: link.url.clone(),
                reason,
            }),
        }
    }
    let truncated = kept.len() > settings.max_entries;
    kept.truncate(settings.max_entries);
    let len = kept.len();
    let entries: Vec<SerpEntry> = kept
        .into_iter()
        .enumerate()
        .map(|(i, (link, expansion, domain))| SerpEntry {
            rank: (i + 1) as u32,
            title: link.title,
            raw_url: link.url,
            final_url: expansion.url,
            domain,
            normalized_rank: (i + 1) as f64 / len as f64,
            expansion_failed: expansion.failed,
        })
        .collect();
    SerpRecord {
        key: answer.key.clone(),
        attribution_miss: entries.is_empty(),
        entries,
        truncated,
        extracted: links.len(),
        issues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::Persona;
    use alloc::collections::BTreeMap;
    use alloc::format;
    use core::cell::Cell;

    struct MapResolver {
        map: BTreeMap<String, String>,
        calls: Cell<u32>,
    }

    impl MapResolver {
        fn new(pairs: &[(&str, &str)]) -> Self {
            MapResolver {
                map: pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
                calls: Cell::new(0),
            }
        }
    }

    impl RedirectResolver for MapResolver {
        fn resolve_hop(&self, url: &str) -> Result<Option<String>, ResolveError> {
            self.calls.set(self.calls.get() + 1);
            Ok(self.map.get(url).cloned())
        }
    }

    fn answer(text: &str) -> RawAnswer {
        RawAnswer {
            key: ProbeKey {
                engine: "gemini".into(),
                topic: "Gaza war".into(),
                persona: Persona::BASELINE,
                day: chrono::NaiveDate::from_ymd_opt(2025, 5, 15).unwrap(),
            },
            fetched_at: "2025-05-15T20:00:00Z".into(),
            text: text.into(),
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn normalize_examples() {
        let rules = NormalizationRules::default();
        assert_eq!(normalize_domain("https://www.bbc.com/news/article", &rules).unwrap(), "bbc.com");
        assert_eq!(normalize_domain("https://en.wikipedia.org/wiki/X", &rules).unwrap(), "en.wikipedia.org");
        assert_eq!(normalize_domain("https://sub.a.co.uk/p", &rules).unwrap(), "a.co.uk");
        assert_eq!(normalize_domain("https://www.wikipedia.org/", &rules).unwrap(), "wikipedia.org");
        assert_eq!(normalize_domain("https://www.politico.eu/x", &rules).unwrap(), "politico.eu");
        assert!(normalize_domain("https://nohost/", &rules).is_err());
    }

    #[test]
    fn domain_names_from_datasets() {
        let rules = NormalizationRules::default();
        assert_eq!(normalize_domain_name("www.BBC.co.uk", &rules).unwrap(), "bbc.co.uk");
        assert_eq!(normalize_domain_name("https://edition.cnn.com/", &rules).unwrap(), "cnn.com");
        assert_eq!(normalize_domain_name("aa.com.tr", &rules).unwrap(), "aa.com.tr");
    }

    #[test]
    fn non_shortener_untouched() {
        let shorteners = HostSet::new(DEFAULT_SHORTENERS);
        let resolver = MapResolver::new(&[("https://bbc.com/x", "https://evil.com")]);
        let out = expand_url("https://bbc.com/x", &shorteners, &resolver, 5);
        assert_eq!(out.url, "https://bbc.com/x");
        assert!(!out.failed);
        assert_eq!(resolver.calls.get(), 0);
    }

    #[test]
    fn one_hop_expansion() {
        let shorteners = HostSet::new(DEFAULT_SHORTENERS);
        let resolver = MapResolver::new(&[("https://bit.ly/abc", "https://www.reuters.com/world/x")]);
        let out = expand_url("https://bit.ly/abc", &shorteners, &resolver, 5);
        assert_eq!(out.url, "https://www.reuters.com/world/x");
        assert_eq!(out.hops, 1);
        assert!(!out.failed);
    }

    #[test]
    fn redirect_cycle_fails_after_bound() {
        let shorteners = HostSet::new(DEFAULT_SHORTENERS);
        let resolver = MapResolver::new(&[
            ("https://bit.ly/a", "https://t.co/b"),
            ("https://t.co/b", "https://bit.ly/a"),
        ]);
        let out = expand_url("https://bit.ly/a", &shorteners, &resolver, 5);
        assert_eq!(out.url, "https://bit.ly/a");
        assert!(out.failed);
        assert_eq!(resolver.calls.get(), 6);
    }

    #[test]
    fn exactly_max_hops_succeeds() {
        let shorteners = HostSet::new(DEFAULT_SHORTENERS);
        let resolver = MapResolver::new(&[
            ("https://bit.ly/1", "https://bit.ly/2"),
            ("https://bit.ly/2", "https://bit.ly/3"),
            ("https://bit.ly/3", "https://bit.ly/4"),
            ("https://bit.ly/4", "https://bit.ly/5"),
            ("https://bit.ly/5", "https://apnews.com/z"),
        ]);
        let out = expand_url("https://bit.ly/1", &shorteners, &resolver, 5);
        assert_eq!(out.url, "https://apnews.com/z");
        assert!(!out.failed);
    }

    #[test]
    fn offline_resolver_flags_shorteners() {
        let shorteners = HostSet::new(DEFAULT_SHORTENERS);
        let out = expand_url("https://t.co/x", &shorteners, &OfflineResolver, 5);
        assert!(out.failed);
        assert_eq!(out.url, "https://t.co/x");
    }

    #[test]
    fn shortener_subdomain_match() {
        let set = HostSet::parse("# shorteners\nbit.ly\nvertexaisearch.cloud.google.com\n");
        assert!(set.contains_host("bit.ly"));
        assert!(set.contains_host("www.bit.ly"));
        assert!(set.contains_host("vertexaisearch.cloud.google.com"));
        assert!(!set.contains_host("cloud.google.com"));
        assert!(!set.contains_host("notbit.ly"));
    }

    #[test]
    fn ten_bullets() {
        let text: String = (1..=10).map(|i| format!("- t{i} (https://s{i}.com/)\n")).collect();
        let rec = attribute(&answer(&text), &OfflineResolver, &Attributor::default());
        assert_eq!(rec.entries.len(), 10);
        assert!(!rec.truncated);
        for (i, e) in rec.entries.iter().enumerate() {
            assert_eq!(e.rank as usize, i + 1);
            assert_eq!(e.normalized_rank, (i + 1) as f64 / 10.0);
        }
    }

    #[test]
    fn twelve_bullets_truncated() {
        let text: String = (1..=12).map(|i| format!("- t{i} (https://s{i}.com/)\n")).collect();
        let rec = attribute(&answer(&text), &OfflineResolver, &Attributor::default());
        assert_eq!(rec.entries.len(), 10);
        assert!(rec.truncated);
        assert_eq!(rec.extracted, 12);
        assert_eq!(rec.entries[9].domain, "s10.com");
    }

    #[test]
    fn gemini_style_redirect() {
        let short = "https://vertexaisearch.cloud.google.com/grounding-api-redirect/AbC123";
        let resolver = MapResolver::new(&[(short, "https://www.aljazeera.com/news/2025/5/15/x")]);
        let rec = attribute(
            &answer(&format!("- Strikes continue ({short})")),
            &resolver,
            &Attributor::default(),
        );
        assert_eq!(rec.entries[0].domain, "aljazeera.com");
        assert_eq!(rec.entries[0].raw_url, short);
        assert!(!rec.entries[0].expansion_failed);
    }

    #[test]
    fn miss_and_issues() {
        let rec = attribute(&answer("Sorry, I cannot browse."), &OfflineResolver, &Attributor::default());
        assert!(rec.attribution_miss);
        assert_eq!(rec.extracted, 0);

        let rec = attribute(
            &answer("- a (https://localhost/x)\n- b (https://cnn.com/y)"),
            &OfflineResolver,
            &Attributor::default(),
        );
        assert_eq!(rec.entries.len(), 1);
        assert_eq!(rec.entries[0].rank, 1);
        assert_eq!(rec.entries[0].normalized_rank, 1.0);
        assert_eq!(rec.issues[0].position, 1);
        assert_eq!(rec.issues[0].reason, HostError::SingleLabel);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn label() -> impl Strategy<Value = String> {
            "[a-z][a-z0-9]{0,8}"
        }

        proptest! {
            #[test]
            fn normalize_is_idempotent(
                labels in proptest::collection::vec(label(), 1..4),
                tld in prop::sample::select(&["com", "co.uk", "org", "com.tr", "eu", "wikipedia.org", "zz"][..]),
                www in any::<bool>(),
            ) {
                let rules = NormalizationRules::default();
                let host = format!("{}{}.{}", if www { "www." } else { "" }, labels.join("."), tld);
                let once = normalize_domain(&format!("https://{host}/p"), &rules).unwrap();
                let twice = normalize_domain(&format!("https://{once}"), &rules).unwrap();
                prop_assert_eq!(&once, &twice);
                prop_assert!(!once.starts_with("www."));
                prop_assert_eq!(once.to_lowercase(), once.clone());
            }

            #[test]
            fn ranks_follow_extraction_order(n in 0usize..25) {
                let text: String = (0..n).map(|i| format!("- t (https://d{i}.com/)\n")).collect();
                let rec = attribute(&answer(&text), &OfflineResolver, &Attributor::default());
                prop_assert_eq!(rec.entries.len(), n.min(10));
                prop_assert_eq!(rec.truncated, n > 10);
                prop_assert_eq!(rec.attribution_miss, n == 0);
                for (i, e) in rec.entries.iter().enumerate() {
                    prop_assert_eq!(e.rank as usize, i + 1);
                    prop_assert_eq!(&e.domain, &format!("d{i}.com"));
                }
            }
        }
    }
}
