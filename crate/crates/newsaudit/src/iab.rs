//! IAB category providers and the persistent verdict cache.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use newsaudit_core::enrichment::{IabProvider, ProviderError, ProviderVerdict};

use crate::error::Result;
use crate::store;

/// One cached provider answer; `category: null` records "no verdict".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IabCacheEntry {
    pub domain: String,
    pub category: Option<String>,
    pub confidence: Option<f64>,
    pub fetched_at: String,
}

impl IabCacheEntry {
    fn verdict(&self) -> Option<ProviderVerdict> {
        match (&self.category, self.confidence) {
            (Some(c), Some(conf)) => Some(ProviderVerdict {
                category: c.clone(),
                confidence: conf,
            }),
            _ => None,
        }
    }
}

/// Wraps a provider with a persistent cache. Transport failures are not
/// cached, so a later run retries them.
pub struct CachedProvider<'a> {
    inner: &'a (dyn IabProvider + Sync),
    entries: Mutex<BTreeMap<String, IabCacheEntry>>,
    fresh: Mutex<Vec<IabCacheEntry>>,
    calls: AtomicUsize,
}

impl<'a> CachedProvider<'a> {
    pub fn new(inner: &'a (dyn IabProvider + Sync), entries: Vec<IabCacheEntry>) -> Self {
        CachedProvider {
            inner,
            entries: Mutex::new(entries.into_iter().map(|e| (e.domain.clone(), e)).collect()),
            fresh: Mutex::new(Vec::new()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Opens the cache file; a missing file is an empty cache.
    pub fn open(inner: &'a (dyn IabProvider + Sync), path: &Path) -> Result<Self> {
        Ok(Self::new(inner, store::read_jsonl_or_empty(path)?))
    }

    /// Provider calls made through this wrapper.
    pub fn provider_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Appends verdicts fetched since opening.
    pub fn persist(&self, path: &Path) -> Result<usize> {
        let mut fresh = self.fresh.lock().unwrap_or_else(|e| e.into_inner());
        fresh.sort_by(|a, b| a.domain.cmp(&b.domain));
        store::append_jsonl(path, &fresh)?;
        let n = fresh.len();
        fresh.clear();
        Ok(n)
    }
}

impl IabProvider for CachedProvider<'_> {
    fn categorize(&self, domain: &str) -> std::result::Result<Option<ProviderVerdict>, ProviderError> {
        if let Some(hit) = self.entries.lock().unwrap_or_else(|e| e.into_inner()).get(domain) {
            return Ok(hit.verdict());
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let verdict = self.inner.categorize(domain)?;
        let entry = IabCacheEntry {
            domain: domain.to_string(),
            category: verdict.as_ref().map(|v| v.category.clone()),
            confidence: verdict.as_ref().map(|v| v.confidence),
            fetched_at: crate::now_rfc3339(),
        };
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(domain.to_string(), entry.clone());
        self.fresh.lock().unwrap_or_else(|e| e.into_inner()).push(entry);
        Ok(verdict)
    }
}

/// Verdicts from a table; unknown domains get no verdict.
#[derive(Debug, Default)]
pub struct FixtureProvider {
    table: BTreeMap<String, Option<(String, f64)>>,
    calls: AtomicUsize,
}

impl FixtureProvider {
    pub fn new(table: BTreeMap<String, Option<(String, f64)>>) -> Self {
        FixtureProvider {
            table,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl IabProvider for FixtureProvider {
    fn categorize(&self, domain: &str) -> std::result::Result<Option<ProviderVerdict>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.table.get(domain).cloned().flatten().map(|(category, confidence)| ProviderVerdict {
            category,
            confidence,
        }))
    }
}

/// Used when no provider is configured: every domain lacks a verdict.
pub struct NoProvider;

impl IabProvider for NoProvider {
    fn categorize(&self, _domain: &str) -> std::result::Result<Option<ProviderVerdict>, ProviderError> {
        Ok(None)
    }
}

/// Klazify domain categorization. Its category paths ("/News/Politics")
/// are reduced to the top-level segment.
pub struct KlazifyProvider {
    http: ureq::Agent,
    token: String,
    endpoint: String,
}

impl KlazifyProvider {
    pub const CREDENTIAL_VAR: &'static str = "NEWSAUDIT_KLAZIFY_KEY";

    pub fn from_env(timeout: Duration) -> Result<Self> {
        let token = std::env::var(Self::CREDENTIAL_VAR)
            .map_err(|_| crate::Error::Config(format!("klazify needs credentials in ${}", Self::CREDENTIAL_VAR)))?;
        Ok(KlazifyProvider {
            http: ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .build()
                .into(),
            token,
            endpoint: "https://www.klazify.com/api/categorize".into(),
        })
    }
}

impl IabProvider for KlazifyProvider {
    fn categorize(&self, domain: &str) -> std::result::Result<Option<ProviderVerdict>, ProviderError> {
        let mut resp = self
            .http
            .post(&self.endpoint)
            .header("Authorization", format!("Bearer {}", self.token))
            .send_json(json!({"url": format!("https://{domain}")}))
            .map_err(|e| ProviderError(e.to_string()))?;
        let body: Value = resp.body_mut().read_json().map_err(|e| ProviderError(e.to_string()))?;
        Ok(klazify_verdict(&body))
    }
}

pub fn klazify_verdict(body: &Value) -> Option<ProviderVerdict> {
    let first = body.pointer("/domain/categories/0")?;
    let name = first.get("name")?.as_str()?;
    let confidence = first.get("confidence")?.as_f64()?;
    let top = name.trim_start_matches('/').split('/').next()?.trim();
    (!top.is_empty()).then(|| ProviderVerdict {
        category: top.to_string(),
        confidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use newsaudit_core::enrichment::{categorize_iab, IabSource};

    fn fixture() -> FixtureProvider {
        FixtureProvider::new(
            [
                ("bbc.com".to_string(), Some(("News".to_string(), 0.93))),
                ("blog.net".to_string(), Some(("News".to_string(), 0.40))),
                ("court.gov".to_string(), None),
            ]
            .into(),
        )
    }

    #[test]
    fn warm_cache_makes_no_calls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iab.jsonl");
        let inner = fixture();
        let overrides = BTreeMap::new();
        let domains = ["bbc.com", "blog.net", "court.gov", "unknown.org"];
        let cold = CachedProvider::open(&inner, &path).unwrap();
        let first: Vec<_> = domains.iter().map(|d| categorize_iab(d, &cold, &overrides)).collect();
        assert_eq!(cold.provider_calls(), 4);
        assert_eq!(cold.persist(&path).unwrap(), 4);

        let warm = CachedProvider::open(&inner, &path).unwrap();
        let second: Vec<_> = domains.iter().map(|d| categorize_iab(d, &warm, &overrides)).collect();
        assert_eq!(warm.provider_calls(), 0);
        assert_eq!(inner.calls(), 4);
        assert_eq!(first, second);
        assert_eq!(first[0].source, IabSource::Provider);
        assert_eq!(first[1].source, IabSource::Missing);
    }

    #[test]
    fn klazify_shape() {
        let body = json!({"domain": {"categories": [{"name": "/News/Politics", "confidence": 0.91}]}});
        let v = klazify_verdict(&body).unwrap();
        assert_eq!((v.category.as_str(), v.confidence), ("News", 0.91));
        assert!(klazify_verdict(&json!({"domain": {"categories": []}})).is_none());
    }
}
