use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TextError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeGroup {
    pub ids: Vec<usize>,
    pub label: String,
}

/// Human names for cluster/topic ids. A merge group overrides the
/// individual labels of its members; an id may belong to at most one
/// group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    #[serde(default)]
    pub labels: BTreeMap<usize, String>,
    #[serde(default)]
    pub merges: Vec<MergeGroup>,
}

impl LabelMap {
    /// Every id labelled with its own number.
    pub fn identity(k: usize) -> Self {
        Self {
            labels: (0..k).map(|i| (i, i.to_string())).collect(),
            merges: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, TextError> {
        let raw = std::fs::read_to_string(path).map_err(|source| TextError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| TextError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Final label for each of `0..k`.
    pub fn resolve(&self, k: usize) -> Result<Vec<String>, TextError> {
        let mut merged: BTreeMap<usize, &str> = BTreeMap::new();
        for group in &self.merges {
            for &id in &group.ids {
                if merged.insert(id, &group.label).is_some() {
                    return Err(TextError::ConflictingMerge(id));
                }
            }
        }
        let mut out = Vec::with_capacity(k);
        let mut missing = Vec::new();
        for id in 0..k {
            match merged.get(&id).copied().or(self.labels.get(&id).map(String::as_str)) {
                Some(label) => out.push(label.to_string()),
                None => missing.push(id),
            }
        }
        if !missing.is_empty() {
            return Err(TextError::UnlabelledIds(missing));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelledAssignments {
    /// Label per input item.
    pub labels: Vec<String>,
    /// Items per label.
    pub counts: BTreeMap<String, usize>,
}

impl LabelledAssignments {
    pub fn distinct_labels(&self) -> BTreeSet<&str> {
        self.counts.keys().map(String::as_str).collect()
    }
}

/// Maps raw ids to their (possibly merged) labels. `k` is the number of
/// ids the map must cover.
pub fn apply_label_map(
    assignments: &[usize],
    map: &LabelMap,
    k: usize,
) -> Result<LabelledAssignments, TextError> {
    let names = map.resolve(k)?;
    let mut labels = Vec::with_capacity(assignments.len());
    let mut counts = BTreeMap::new();
    let mut unknown = BTreeSet::new();
    for &id in assignments {
        match names.get(id) {
            Some(name) => {
                labels.push(name.clone());
                *counts.entry(name.clone()).or_default() += 1;
            }
            None => {
                unknown.insert(id);
            }
        }
    }
    if !unknown.is_empty() {
        return Err(TextError::UnlabelledIds(unknown.into_iter().collect()));
    }
    Ok(LabelledAssignments { labels, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifteen_clusters_one_merge_gives_fourteen_labels() {
        let mut map = LabelMap::identity(15);
        map.merges.push(MergeGroup {
            ids: vec![3, 9],
            label: "politics".into(),
        });
        let assignments: Vec<usize> = (0..15).collect();
        let out = apply_label_map(&assignments, &map, 15).unwrap();
        assert_eq!(out.distinct_labels().len(), 14);
        assert_eq!(out.counts["politics"], 2);
    }

    #[test]
    fn identity_map_labels_are_ids() {
        let out = apply_label_map(&[2, 0, 1], &LabelMap::identity(3), 3).unwrap();
        assert_eq!(out.labels, ["2", "0", "1"]);
    }

    #[test]
    fn merged_counts_are_summed() {
        let map = LabelMap {
            labels: BTreeMap::from([(0, "a".into()), (1, "b".into())]),
            merges: vec![MergeGroup {
                ids: vec![0, 1],
                label: "merged".into(),
            }],
        };
        let out = apply_label_map(&[0, 0, 0, 1, 1], &map, 2).unwrap();
        assert_eq!(out.counts, BTreeMap::from([("merged".to_string(), 5)]));
    }

    #[test]
    fn missing_ids_are_listed() {
        let map = LabelMap {
            labels: BTreeMap::from([(0, "a".into())]),
            merges: vec![],
        };
        match apply_label_map(&[0], &map, 3) {
            Err(TextError::UnlabelledIds(ids)) => assert_eq!(ids, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn id_in_two_groups_is_rejected() {
        let map = LabelMap {
            labels: BTreeMap::new(),
            merges: vec![
                MergeGroup { ids: vec![0, 1], label: "x".into() },
                MergeGroup { ids: vec![1], label: "y".into() },
            ],
        };
        assert!(matches!(map.resolve(2), Err(TextError::ConflictingMerge(1))));
    }
}
