//! Host extraction from absolute http(s) URLs.

use alloc::string::String;

use serde::{Deserialize, Serialize};

/// Why a URL did not yield a usable host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(rename_all = "snake_case")]
pub enum HostError {
    #[error("not an http(s) URL")]
    Scheme,
    #[error("empty host")]
    Empty,
    #[error("IP literal host")]
    IpLiteral,
    #[error("single-label host")]
    SingleLabel,
    #[error("invalid host characters")]
    Invalid,
}

/// Lowercase host of an `http`/`https` URL, without port, userinfo or
/// trailing dot. IPv4 hosts are returned as is.
pub fn url_host(url: &str) -> Result<String, HostError> {
    let url = url.trim();
    let rest = strip_scheme(url).ok_or(HostError::Scheme)?;
    let authority_end = rest.find(['/', '?', '#', '\\']).unwrap_or(rest.len());
    let authority = &rest[..authority_end];
    let host_port = authority.rsplit_once('@').map_or(authority, |(_, h)| h);
    if host_port.starts_with('[') {
        return Err(HostError::IpLiteral);
    }
    let host = match host_port.rsplit_once(':') {
        Some((h, port)) if port.bytes().all(|b| b.is_ascii_digit()) => h,
        Some(_) => return Err(HostError::Invalid),
        None => host_port,
    };
    let host = host.strip_suffix('.').unwrap_or(host).to_lowercase();
    if host.is_empty() {
        return Err(HostError::Empty);
    }
    if is_ipv4(&host) {
        return Ok(host);
    }
    if !host.contains('.') {
        return Err(HostError::SingleLabel);
    }
    for label in host.split('.') {
        let valid = !label.is_empty()
            && label.len() <= 63
            && !label.starts_with('-')
            && !label.ends_with('-')
            && label
                .chars()
                .all(|c| c.is_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(HostError::Invalid);
        }
    }
    Ok(host)
}

fn strip_scheme(url: &str) -> Option<&str> {
    for scheme in ["https://", "http://"] {
        if url.len() >= scheme.len() && url[..scheme.len()].eq_ignore_ascii_case(scheme) {
            return Some(&url[scheme.len()..]);
        }
    }
    None
}

pub(crate) fn is_ipv4(host: &str) -> bool {
    let parts: alloc::vec::Vec<&str> = host.split('.').collect();
    parts.len() == 4 && parts.iter().all(|p| !p.is_empty() && p.len() <= 3 && p.parse::<u8>().is_ok())
}
