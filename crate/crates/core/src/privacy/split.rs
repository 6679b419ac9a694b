use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PrivacyError;
use crate::corpus::PostRecord;

/// Per-user chronological split: each user's earliest `⌈ratio·n⌉` posts go
/// to training, the rest to testing. Posts with equal timestamps are
/// ordered by a seeded shuffle. Both outputs are grouped by user (sorted
/// ids) and chronological within a user.
pub fn split_train_test(
    records: &[PostRecord],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<PostRecord>, Vec<PostRecord>), PrivacyError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(PrivacyError::InvalidRatio(ratio));
    }
    let mut by_user: BTreeMap<&str, Vec<&PostRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(&r.user_id).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for posts in by_user.values_mut() {
        posts.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.post_id.cmp(&b.post_id)));
        let mut i = 0;
        while i < posts.len() {
            let mut j = i + 1;
            while j < posts.len() && posts[j].timestamp == posts[i].timestamp {
                j += 1;
            }
            if j - i > 1 {
                posts[i..j].shuffle(&mut rng);
            }
            i = j;
        }
        let n = posts.len();
        let n_train = ((ratio * n as f64) - 1e-9).ceil().max(1.0) as usize;
        let n_train = n_train.min(n);
        train.extend(posts[..n_train].iter().map(|p| (*p).clone()));
        test.extend(posts[n_train..].iter().map(|p| (*p).clone()));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn posts(user: &str, n: usize) -> Vec<PostRecord> {
        let t0 = Utc.with_ymd_and_hms(2020, 4, 1, 0, 0, 0).unwrap();
        (0..n)
            .map(|i| PostRecord {
                user_id: user.into(),
                post_id: format!("{user}-{i}"),
                timestamp: t0 + Duration::hours(i as i64),
                text: String::new(),
                hashtags: vec![],
                urls: vec![],
                country: None,
                language: None,
            })
            .collect()
    }

    #[test]
    fn ten_posts_split_eight_two() {
        let (train, test) = split_train_test(&posts("a", 10), 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        assert!(train.iter().all(|t| test.iter().all(|s| t.timestamp < s.timestamp)));
    }

    #[test]
    fn single_post_goes_to_train() {
        let (train, test) = split_train_test(&posts("a", 1), 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1, 0));
    }

    #[test]
    fn sizes_add_up_and_ratio_is_validated() {
        let mut all = posts("a", 7);
        all.extend(posts("b", 3));
        all.extend(posts("c", 12));
        let (train, test) = split_train_test(&all, 0.8, 3).unwrap();
        assert_eq!(train.len() + test.len(), all.len());
        assert!(split_train_test(&all, 1.0, 3).is_err());
        assert!(split_train_test(&all, 0.0, 3).is_err());
    }

    #[test]
    fn equal_timestamps_follow_the_seed() {
        let mut all = posts("a", 6);
        let t = all[0].timestamp;
        for p in &mut all {
            p.timestamp = t;
        }
        let (a, _) = split_train_test(&all, 0.5, 42).unwrap();
        let (b, _) = split_train_test(&all, 0.5, 42).unwrap();
        assert_eq!(a, b);
    }
}
