use std::collections::BTreeMap;

use privlens::sentiment::{aggregate, compound, label, score_tokens, Lexicon, PolarityScore, SentimentLabel};
use privlens::PeriodLabel;
use proptest::prelude::*;

fn any_label() -> impl Strategy<Value = SentimentLabel> {
    prop::sample::select(vec![SentimentLabel::Positive, SentimentLabel::Neutral, SentimentLabel::Negative])
}

fn labelled() -> impl Strategy<Value = Vec<(String, PeriodLabel, SentimentLabel)>> {
    prop::collection::vec(
        (
            prop::sample::select(vec!["Testing".to_string(), "Travel".to_string()]),
            prop::sample::select(PeriodLabel::ALL.to_vec()),
            any_label(),
        ),
        0..200,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn compound_is_odd_and_bounded(s in -1e6f64..1e6) {
        prop_assert_eq!(compound(-s), -compound(s));
        prop_assert!(compound(s).abs() < 1.0);
        prop_assert_eq!(compound(s) == 0.0, s == 0.0);
    }

    #[test]
    fn compound_is_increasing(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        prop_assume!(a < b);
        prop_assert!(compound(a) < compound(b));
    }

    #[test]
    fn sign_decides_the_label_at_zero_threshold(s in -20.0f64..20.0) {
        let expected = if compound(s) >= 0.0 { SentimentLabel::Positive } else { SentimentLabel::Negative };
        prop_assert_eq!(label(PolarityScore::from_raw(s), 0.0), expected);
    }

    #[test]
    fn aggregate_matches_a_counting_oracle(items in labelled(), seed in any::<u64>()) {
        let borrowed = items.iter().map(|(t, p, l)| (t.as_str(), *p, *l));
        let dist = aggregate(borrowed, &[]);

        let mut counts: BTreeMap<(String, PeriodLabel), [u64; 3]> = BTreeMap::new();
        for (t, p, l) in &items {
            let slot = match l {
                SentimentLabel::Positive => 0,
                SentimentLabel::Neutral => 1,
                SentimentLabel::Negative => 2,
            };
            counts.entry((t.clone(), *p)).or_default()[slot] += 1;
        }
        prop_assert_eq!(dist.len(), counts.len());
        for (key, c) in &counts {
            let d = dist[key];
            let n = (c[0] + c[1] + c[2]) as f64;
            prop_assert_eq!((d.positive, d.neutral, d.negative), (c[0] as f64 / n, c[1] as f64 / n, c[2] as f64 / n));
            prop_assert!((d.positive + d.neutral + d.negative - 1.0).abs() <= 1e-12);
        }

        let mut shuffled = items.clone();
        let len = shuffled.len();
        for i in 0..len {
            let j = (seed as usize).wrapping_mul(i + 7) % len;
            shuffled.swap(i, j);
        }
        let again = aggregate(shuffled.iter().map(|(t, p, l)| (t.as_str(), *p, *l)), &[]);
        prop_assert_eq!(again, dist);
    }
}

#[test]
fn valences_sum_before_normalising() {
    let lex = Lexicon::from_entries([("Good", 1.9), ("bad", -2.5), ("great", 3.1)]);
    let s = score_tokens(&["good", "great", "bad", "meh"], &lex);
    assert!((s.raw_sum - 2.5).abs() < 1e-12);
    assert_eq!(s.compound, compound(s.raw_sum));
    assert_eq!(lex.valence("good"), Some(1.9));
}
