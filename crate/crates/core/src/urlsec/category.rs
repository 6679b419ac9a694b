use std::collections::BTreeMap;
use std::path::Path;

use super::UrlError;

pub const UNCATEGORIZED: &str = "Uncategorized";
pub const IP_LITERAL: &str = "ip-literal";

/// Remote category lookup used when the local map has no entry.
pub trait CategoryClient {
    /// `Ok(None)` when the service knows nothing about the domain.
    fn lookup(&mut self, domain: &str) -> Result<Option<String>, String>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryMap {
    entries: BTreeMap<String, String>,
}

impl CategoryMap {
    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: Into<String>,
    {
        Self {
            entries: pairs
                .into_iter()
                .map(|(d, c)| (d.as_ref().trim().to_lowercase(), c.into()))
                .collect(),
        }
    }

    /// CSV with header `domain,category`.
    pub fn load(path: &Path) -> Result<Self, UrlError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| UrlError::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut pairs = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| UrlError::Table {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            match (row.get(0), row.get(1)) {
                (Some(d), Some(c)) if !d.trim().is_empty() => pairs.push((d.to_string(), c.trim().to_string())),
                _ => {
                    return Err(UrlError::Table {
                        path: path.to_path_buf(),
                        message: format!("bad row {:?}", row),
                    })
                }
            }
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn get(&self, domain: &str) -> Option<&str> {
        self.entries.get(&domain.to_lowercase()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Local map first, then the optional client, then `Uncategorized`.
/// Client failures are logged and never propagate.
pub fn categorize(domain: &str, map: &CategoryMap, client: Option<&mut dyn CategoryClient>) -> String {
    if let Some(label) = map.get(domain) {
        return label.to_string();
    }
    if let Some(client) = client {
        match client.lookup(domain) {
            Ok(Some(label)) => return label,
            Ok(None) => {}
            Err(e) => log::warn!("category lookup for {domain} failed: {e}"),
        }
    }
    UNCATEGORIZED.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Failing;

    impl CategoryClient for Failing {
        fn lookup(&mut self, _: &str) -> Result<Option<String>, String> {
            Err("timeout".into())
        }
    }

    struct Fixed;

    impl CategoryClient for Fixed {
        fn lookup(&mut self, _: &str) -> Result<Option<String>, String> {
            Ok(Some("Blogs".into()))
        }
    }

    #[test]
    fn map_then_client_then_fallback() {
        let map = CategoryMap::from_pairs([("twitter.com", "Social Networks")]);
        assert_eq!(categorize("twitter.com", &map, None), "Social Networks");
        assert_eq!(categorize("Twitter.COM", &map, None), "Social Networks");
        assert_eq!(categorize("unknown.tld", &map, None), UNCATEGORIZED);
        assert_eq!(categorize("unknown.tld", &map, Some(&mut Fixed)), "Blogs");
        assert_eq!(categorize("unknown.tld", &map, Some(&mut Failing)), UNCATEGORIZED);
    }

    #[test]
    fn loads_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.csv");
        std::fs::write(&path, "domain,category\nbbc.co.uk,News and Media\n\"a.com\",\"IT, Software\"\n").unwrap();
        let map = CategoryMap::load(&path).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map.get("a.com"), Some("IT, Software"));
    }
}
