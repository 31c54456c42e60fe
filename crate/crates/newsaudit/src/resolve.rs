//! Redirect resolvers for short-link expansion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use newsaudit_core::attribution::{RedirectResolver, ResolveError};

use crate::error::{Error, Result};

/// One live request per hop with automatic redirects disabled; the
/// `Location` header of a 3xx response is the next URL. Hops are memoized.
pub struct HttpResolver {
    http: ureq::Agent,
    memo: Mutex<HashMap<String, Option<String>>>,
}

impl HttpResolver {
    pub fn new(timeout: Duration) -> Self {
        let http = ureq::Agent::config_builder()
            .max_redirects(0)
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpResolver {
            http,
            memo: Mutex::new(HashMap::new()),
        }
    }
}

impl RedirectResolver for HttpResolver {
    fn resolve_hop(&self, url: &str) -> std::result::Result<Option<String>, ResolveError> {
        if let Some(hit) = self.memo.lock().unwrap_or_else(|e| e.into_inner()).get(url) {
            return Ok(hit.clone());
        }
        let resp = self
            .http
            .get(url)
            .call()
            .map_err(|e| ResolveError(e.to_string()))?;
        let next = if resp.status().is_redirection() {
            let location = resp
                .headers()
                .get("location")
                .and_then(|v| v.to_str().ok())
                .ok_or_else(|| ResolveError(format!("{} without Location", resp.status())))?;
            let base = url::Url::parse(url).map_err(|e| ResolveError(e.to_string()))?;
            Some(base.join(location).map_err(|e| ResolveError(e.to_string()))?.to_string())
        } else {
            None
        };
        self.memo
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(url.to_string(), next.clone());
        Ok(next)
    }
}

/// Offline stand-in backed by a `url,target` table. A listed URL with an
/// empty target, or any URL that appears as a target, answers without
/// redirecting; anything else is a miss.
#[derive(Debug, Clone, Default)]
pub struct FixtureResolver {
    hops: BTreeMap<String, Option<String>>,
    terminals: BTreeSet<String>,
}

impl FixtureResolver {
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut r = FixtureResolver::default();
        for (from, to) in pairs {
            let to: String = to.into();
            if to.is_empty() {
                r.hops.insert(from.into(), None);
            } else {
                r.terminals.insert(to.clone());
                r.hops.insert(from.into(), Some(to));
            }
        }
        r
    }

    pub fn load(path: &Path) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Row {
            url: String,
            #[serde(default)]
            target: String,
        }
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, 0, e))?;
        let mut pairs = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::parse(path, i + 2, e))?;
            pairs.push((row.url.trim().to_string(), row.target.trim().to_string()));
        }
        Ok(Self::new(pairs))
    }
}

impl RedirectResolver for FixtureResolver {
    fn resolve_hop(&self, url: &str) -> std::result::Result<Option<String>, ResolveError> {
        match self.hops.get(url) {
            Some(next) => Ok(next.clone()),
            None if self.terminals.contains(url) => Ok(None),
            None => Err(ResolveError(format!("no fixture entry for {url}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use newsaudit_core::attribution::{expand_url, HostSet};

    #[test]
    fn fixture_expansion_and_cycle() {
        let shorteners = HostSet::new(["bit.ly"]);
        let r = FixtureResolver::new([
            ("https://bit.ly/a", "https://www.bbc.com/news/1"),
            ("https://bit.ly/c1", "https://bit.ly/c2"),
            ("https://bit.ly/c2", "https://bit.ly/c1"),
        ]);
        let e = expand_url("https://bit.ly/a", &shorteners, &r, 5);
        assert_eq!((e.url.as_str(), e.hops, e.failed), ("https://www.bbc.com/news/1", 1, false));
        let e = expand_url("https://bit.ly/c1", &shorteners, &r, 5);
        assert_eq!((e.url.as_str(), e.failed), ("https://bit.ly/c1", true));
        let e = expand_url("https://bit.ly/zzz", &shorteners, &r, 5);
        assert!(e.failed);
    }

    #[test]
    fn loads_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "url,target\nhttps://t.co/x,https://a.com/\nhttps://t.co/y,\n").unwrap();
        let r = FixtureResolver::load(&p).unwrap();
        assert_eq!(r.resolve_hop("https://t.co/x").unwrap().as_deref(), Some("https://a.com/"));
        assert_eq!(r.resolve_hop("https://t.co/y").unwrap(), None);
        assert_eq!(r.resolve_hop("https://a.com/").unwrap(), None);
    }
}
