use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UrlError {
    #[error("unparsable url {0:?}: {1}")]
    UnparsableUrl(String, String),
}

/// A URL reduced to four individually keyed digests, coarsest first:
/// registrable domain, full host, host + path, host + path + query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UrlRef {
    pub h_domain: String,
    pub h_subdomain: String,
    pub h_path: String,
    pub h_full: String,
    /// Clear text, only ever populated for synthetic traces.
    pub plaintext: Option<String>,
}

impl UrlRef {
    pub fn with_plaintext(mut self, url: impl Into<String>) -> Self {
        self.plaintext = Some(url.into());
        self
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        for (name, d) in [
            ("domain", &self.h_domain),
            ("subdomain", &self.h_subdomain),
            ("path", &self.h_path),
            ("full", &self.h_full),
        ] {
            if d.is_empty() {
                return Err(format!("url digest {name} is empty"));
            }
            if !d.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
                return Err(format!("url digest {name} is not lowercase hex"));
            }
        }
        Ok(())
    }

    /// Registrable domain of the clear-text URL, when known.
    pub fn plain_domain(&self) -> Option<String> {
        self.plaintext.as_deref().and_then(|u| url_components(u).ok()).map(|c| c.domain)
    }
}

/// The four clear-text levels a URL is split into before hashing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UrlComponents {
    pub domain: String,
    pub host: String,
    pub path: String,
    pub full: String,
}

pub fn url_components(raw: &str) -> Result<UrlComponents, UrlError> {
    let trimmed = raw.trim();
    let err = |why: &str| UrlError::UnparsableUrl(raw.to_string(), why.to_string());
    if trimmed.is_empty() {
        return Err(err("empty"));
    }
    let with_scheme = if trimmed.contains("://") { trimmed.to_string() } else { format!("http://{trimmed}") };
    let parsed = url::Url::parse(&with_scheme).map_err(|e| err(&e.to_string()))?;
    let host = parsed.host_str().ok_or_else(|| err("no host"))?.trim_end_matches('.');
    if host.is_empty() {
        return Err(err("empty host"));
    }
    let domain = match parsed.host() {
        Some(url::Host::Domain(_)) => psl::domain_str(host).unwrap_or(host),
        _ => host,
    };
    let path = format!("{host}{}", parsed.path());
    let full = match parsed.query() {
        Some(q) => format!("{path}?{q}"),
        None => path.clone(),
    };
    Ok(UrlComponents { domain: domain.to_string(), host: host.to_string(), path, full })
}

fn keyed_digest(key: &[u8], data: &str) -> String {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts keys of any length");
    mac.update(data.as_bytes());
    hex::encode(mac.finalize().into_bytes())
}

/// Splits `url` into its four levels and hashes each one under `key`.
/// The scheme is optional; fragments are dropped.
pub fn hash_url(url: &str, key: &[u8]) -> Result<UrlRef, UrlError> {
    let c = url_components(url)?;
    Ok(UrlRef {
        h_domain: keyed_digest(key, &c.domain),
        h_subdomain: keyed_digest(key, &c.host),
        h_path: keyed_digest(key, &c.path),
        h_full: keyed_digest(key, &c.full),
        plaintext: None,
    })
}
