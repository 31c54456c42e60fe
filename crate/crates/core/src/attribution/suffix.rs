//! Public-suffix rules and registrable-domain reduction.
//!
//! Rules use the public suffix list file syntax: one rule per line, `//`
//! comments, `*.` wildcard rules and `!` exception rules. Matching follows the
//! list's published algorithm (exception beats longest match, implicit `*`).

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Rule snapshot used when no list file is supplied. Covers generic TLDs and
/// the country second-level registries common in news domains.
pub const BUILTIN_RULES: &str = include_str!("builtin_suffixes.dat");
/// Identifier of the built-in rule snapshot, reported by `--version`.
pub const BUILTIN_RULES_VERSION: &str = "builtin-subset-2025.05";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SuffixRules {
    exact: BTreeSet<String>,
    /// Parents of `*.parent` rules.
    wildcard: BTreeSet<String>,
    /// Full names of `!name` rules.
    exception: BTreeSet<String>,
}

impl SuffixRules {
    pub fn parse(list: &str) -> Self {
        let mut rules = SuffixRules::default();
        for line in list.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let Some(rule) = line.split_whitespace().next() else {
                continue;
            };
            let rule = rule.trim_end_matches('.').to_lowercase();
            if let Some(name) = rule.strip_prefix('!') {
                rules.exception.insert(name.to_string());
            } else if let Some(parent) = rule.strip_prefix("*.") {
                rules.wildcard.insert(parent.to_string());
            } else {
                rules.exact.insert(rule);
            }
        }
        rules
    }

    pub fn builtin() -> Self {
        Self::parse(BUILTIN_RULES)
    }

    pub fn len(&self) -> usize {
        self.exact.len() + self.wildcard.len() + self.exception.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trailing labels of `host` forming its public suffix.
    fn suffix_labels(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        let mut best = 1; // implicit "*"
        for i in 0..n {
            let candidate = labels[i..].join(".");
            if self.exception.contains(&candidate) {
                return n - i - 1;
            }
            let count = n - i;
            if count <= best {
                continue;
            }
            let wildcard_hit = i + 1 < n && self.wildcard.contains(&labels[i + 1..].join("."));
            if self.exact.contains(&candidate) || wildcard_hit {
                best = count;
            }
        }
        best
    }

    /// Public suffix of a lowercase host.
    pub fn public_suffix<'a>(&self, host: &'a str) -> &'a str {
        let labels: Vec<&str> = host.split('.').collect();
        let keep = self.suffix_labels(&labels);
        tail_labels(host, keep)
    }

    /// Registrable domain (suffix plus one label), or `None` when the host is
    /// itself a public suffix.
    pub fn registrable_domain<'a>(&self, host: &'a str) -> Option<&'a str> {
        let labels: Vec<&str> = host.split('.').collect();
        let keep = self.suffix_labels(&labels) + 1;
        (keep <= labels.len()).then(|| tail_labels(host, keep))
    }
}

fn tail_labels(host: &str, keep: usize) -> &str {
    if keep == 0 {
        return "";
    }
    let mut seen = 0;
    for (i, b) in host.bytes().enumerate().rev() {
        if b == b'.' {
            seen += 1;
            if seen == keep {
                return &host[i + 1..];
            }
        }
    }
    host
}
