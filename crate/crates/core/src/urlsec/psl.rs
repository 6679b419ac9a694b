use std::collections::HashSet;
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use url::{Host, Url};

use super::UrlError;

const BUNDLED: &str = include_str!("../../../../data/urls/public_suffix_list.dat");

/// Parsed public suffix rules, stored in ASCII (punycode) form.
#[derive(Debug, Clone, Default)]
pub struct PublicSuffixList {
    normal: HashSet<String>,
    /// Parent of each `*.parent` rule.
    wildcard: HashSet<String>,
    exception: HashSet<String>,
}

impl PublicSuffixList {
    /// Parses the `.dat` format. Private-section rules (hosting platforms
    /// such as `blogspot.com`) are kept only when `include_private` is set.
    pub fn parse(raw: &str, include_private: bool) -> Self {
        let mut list = Self::default();
        let mut private = false;
        for line in raw.lines() {
            let line = line.trim();
            if line.starts_with("//") {
                if line.contains("===BEGIN PRIVATE DOMAINS===") {
                    private = true;
                } else if line.contains("===END PRIVATE DOMAINS===") {
                    private = false;
                }
                continue;
            }
            let Some(rule) = line.split_whitespace().next() else {
                continue;
            };
            if private && !include_private {
                continue;
            }
            let (set, body) = if let Some(rest) = rule.strip_prefix('!') {
                (&mut list.exception, rest)
            } else if let Some(rest) = rule.strip_prefix("*.") {
                (&mut list.wildcard, rest)
            } else {
                (&mut list.normal, rule)
            };
            let ascii = idna::domain_to_ascii(body).unwrap_or_else(|_| body.to_lowercase());
            set.insert(ascii);
        }
        list
    }

    pub fn bundled(include_private: bool) -> Self {
        Self::parse(BUNDLED, include_private)
    }

    pub fn load(path: &Path, include_private: bool) -> Result<Self, UrlError> {
        let raw = std::fs::read_to_string(path).map_err(|source| UrlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::parse(&raw, include_private))
    }

    pub fn len(&self) -> usize {
        self.normal.len() + self.wildcard.len() + self.exception.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of trailing labels of `labels` forming the public suffix.
    /// Unlisted TLDs fall back to the implicit `*` rule (one label).
    fn suffix_labels(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        for i in 0..n {
            if self.exception.contains(&labels[i..].join(".")) {
                return n - i - 1;
            }
        }
        for i in 0..n {
            let candidate = labels[i..].join(".");
            if self.normal.contains(&candidate) {
                return n - i;
            }
            if i + 1 < n && self.wildcard.contains(&labels[i + 1..].join(".")) {
                return n - i;
            }
        }
        1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegisteredDomain {
    pub host: String,
    pub domain: String,
    pub suffix: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HostKind {
    Domain(RegisteredDomain),
    IpLiteral(IpAddr),
}

/// Registrable domain of a host name: its public suffix plus one label.
pub fn registered_domain_of_host(host: &str, psl: &PublicSuffixList) -> Result<RegisteredDomain, UrlError> {
    let trimmed = host.trim_end_matches('.');
    let ascii = idna::domain_to_ascii(trimmed).map_err(|_| UrlError::InvalidHost(host.to_string()))?;
    if ascii.is_empty() {
        return Err(UrlError::InvalidHost(host.to_string()));
    }
    let labels: Vec<&str> = ascii.split('.').collect();
    if labels.iter().any(|l| l.is_empty()) {
        return Err(UrlError::InvalidHost(host.to_string()));
    }
    let suffix_len = psl.suffix_labels(&labels);
    if suffix_len >= labels.len() {
        return Err(UrlError::NoRegistrablePart(ascii));
    }
    let n = labels.len();
    Ok(RegisteredDomain {
        suffix: labels[n - suffix_len..].join("."),
        domain: labels[n - suffix_len - 1..].join("."),
        host: ascii,
    })
}

/// Host of an absolute URL, lowercased with port and userinfo dropped,
/// reduced to its registrable domain. IP hosts are reported as such.
pub fn registered_domain(url: &str, psl: &PublicSuffixList) -> Result<HostKind, UrlError> {
    let parsed = Url::parse(url).map_err(|e| UrlError::InvalidUrl(format!("{url}: {e}")))?;
    match parsed.host() {
        None => Err(UrlError::InvalidUrl(format!("{url}: no host"))),
        Some(Host::Ipv4(ip)) => Ok(HostKind::IpLiteral(IpAddr::V4(ip))),
        Some(Host::Ipv6(ip)) => Ok(HostKind::IpLiteral(IpAddr::V6(ip))),
        Some(Host::Domain(d)) => {
            // non-special schemes leave the host as written
            if let Ok(ip) = d.trim_start_matches('[').trim_end_matches(']').parse::<IpAddr>() {
                return Ok(HostKind::IpLiteral(ip));
            }
            registered_domain_of_host(d, psl).map(HostKind::Domain)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psl() -> PublicSuffixList {
        PublicSuffixList::parse(
            "com\nuk\nco.uk\n*.ck\n!www.ck\n// ===BEGIN PRIVATE DOMAINS===\nblogspot.com\n// ===END PRIVATE DOMAINS===\n",
            true,
        )
    }

    fn domain(url: &str, list: &PublicSuffixList) -> String {
        match registered_domain(url, list).unwrap() {
            HostKind::Domain(d) => d.domain,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn subdomains_collapse() {
        assert_eq!(domain("https://subscribe.theepochtimes.com/x", &psl()), "theepochtimes.com");
        assert_eq!(domain("https://example.co.uk/a?b=1", &psl()), "example.co.uk");
        assert_eq!(domain("http://User:pw@WWW.Example.COM:8080/", &psl()), "example.com");
    }

    #[test]
    fn wildcard_and_exception_rules() {
        assert_eq!(domain("http://a.b.foo.ck", &psl()), "b.foo.ck");
        assert_eq!(domain("http://www.ck", &psl()), "www.ck");
        assert_eq!(domain("http://x.www.ck", &psl()), "www.ck");
    }

    #[test]
    fn private_rules_are_optional() {
        assert_eq!(domain("https://me.blogspot.com", &psl()), "me.blogspot.com");
        let icann = PublicSuffixList::parse("com\n// ===BEGIN PRIVATE DOMAINS===\nblogspot.com\n", false);
        assert_eq!(domain("https://me.blogspot.com", &icann), "blogspot.com");
    }

    #[test]
    fn ip_hosts_and_bare_suffixes() {
        assert!(matches!(registered_domain("http://10.0.0.1/x", &psl()), Ok(HostKind::IpLiteral(_))));
        assert!(matches!(registered_domain("http://[::1]/", &psl()), Ok(HostKind::IpLiteral(_))));
        assert!(matches!(
            registered_domain("http://co.uk/", &psl()),
            Err(UrlError::NoRegistrablePart(_))
        ));
    }

    #[test]
    fn unicode_hosts_are_punycoded() {
        let list = PublicSuffixList::bundled(false);
        let d = registered_domain_of_host("bücher.example.de", &list).unwrap();
        assert_eq!(d.domain, "example.de");
        let d = registered_domain_of_host("Bücher.de", &list).unwrap();
        assert_eq!(d.domain, "xn--bcher-kva.de");
    }

    #[test]
    fn bundled_list_knows_common_suffixes() {
        let list = PublicSuffixList::bundled(true);
        assert!(list.len() > 5000);
        for (host, want) in [
            ("news.bbc.co.uk", "bbc.co.uk"),
            ("begadistrictnews.com.au", "begadistrictnews.com.au"),
            ("www.india.org", "india.org"),
            ("vietnam.travel", "vietnam.travel"),
            ("x.y.city.kawasaki.jp", "city.kawasaki.jp"),
        ] {
            assert_eq!(registered_domain_of_host(host, &list).unwrap().domain, want, "{host}");
        }
    }
}
