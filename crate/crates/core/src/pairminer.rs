//! Contrastive (slow, fast) pair mining over default tests and the
//! side-by-side hit-count report used in constraint reasoning prompts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TestInput;
use crate::harness::{CostMeasurement, LineProfile};
use crate::util::truncate_preview;

pub const DEFAULT_MIN_COST_RATIO: f64 = 2.0;
pub const DEFAULT_PREVIEW_BYTES: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum PairError {
    #[error("both token lists are empty")]
    BothEmpty,
    #[error("no pair reaches the minimum cost ratio")]
    NoQualifyingPair,
    #[error("need at least two tests, got {0}")]
    TooFewTests(usize),
    #[error("no cost measurement for test {0}")]
    MissingCost(String),
    #[error("profiles belong to different solutions: {0} vs {1}")]
    ProfileMismatch(String, String),
}

pub fn tokenize(input: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(input)
        .split(|c: char| c.is_ascii_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

/// Size of the multiset intersection over the length of the shorter list.
/// Zero when exactly one list is empty.
pub fn match_ratio(a: &[String], b: &[String]) -> Result<f64, PairError> {
    if a.is_empty() && b.is_empty() {
        return Err(PairError::BothEmpty);
    }
    let shorter = a.len().min(b.len());
    if shorter == 0 {
        return Ok(0.0);
    }
    let (ca, cb) = (counts(a), counts(b));
    let common: usize = ca
        .iter()
        .map(|(t, &n)| n.min(cb.get(t).copied().unwrap_or(0)))
        .sum();
    Ok(common as f64 / shorter as f64)
}

pub fn jaccard(a: &[String], b: &[String]) -> Result<f64, PairError> {
    let sa: BTreeSet<&String> = a.iter().collect();
    let sb: BTreeSet<&String> = b.iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return Err(PairError::BothEmpty);
    }
    Ok(sa.intersection(&sb).count() as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub match_ratio: f64,
    pub jaccard: f64,
    pub total: f64,
}

pub fn similarity(a: &[String], b: &[String]) -> Result<SimilarityScore, PairError> {
    let match_ratio = match_ratio(a, b)?;
    let jaccard = jaccard(a, b)?;
    Ok(SimilarityScore {
        match_ratio,
        jaccard,
        total: match_ratio + jaccard,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub slow: String,
    pub fast: String,
    pub similarity: SimilarityScore,
    pub cost_ratio: f64,
}

/// Picks the most similar pair whose cost ratio reaches `min_cost_ratio`;
/// ties fall to the larger ratio, then to ids.
pub fn mine_pair(
    tests: &[TestInput],
    costs: &BTreeMap<String, CostMeasurement>,
    min_cost_ratio: f64,
) -> Result<ContrastivePair, PairError> {
    if tests.len() < 2 {
        return Err(PairError::TooFewTests(tests.len()));
    }
    let mut sorted: Vec<&TestInput> = tests.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let tokens: Vec<Vec<String>> = sorted.iter().map(|t| tokenize(&t.input_bytes)).collect();
    let mean = |id: &str| {
        costs
            .get(id)
            .map(|c| c.mean_cost)
            .ok_or_else(|| PairError::MissingCost(id.to_string()))
    };

    let mut best: Option<ContrastivePair> = None;
    for i in 0..sorted.len() {
        for j in i + 1..sorted.len() {
            let (ci, cj) = (mean(&sorted[i].id)?, mean(&sorted[j].id)?);
            let (slow, fast, cs, cf) = if ci >= cj {
                (i, j, ci, cj)
            } else {
                (j, i, cj, ci)
            };
            let qualifies = if cf > 0.0 {
                cs >= min_cost_ratio * cf
            } else {
                cs > 0.0
            };
            if !qualifies {
                continue;
            }
            let Ok(sim) = similarity(&tokens[slow], &tokens[fast]) else {
                continue;
            };
            let cand = ContrastivePair {
                slow: sorted[slow].id.clone(),
                fast: sorted[fast].id.clone(),
                similarity: sim,
                cost_ratio: if cf > 0.0 { cs / cf } else { f64::INFINITY },
            };
            let better = match &best {
                None => true,
                Some(b) => cand
                    .similarity
                    .total
                    .total_cmp(&b.similarity.total)
                    .then(cand.cost_ratio.total_cmp(&b.cost_ratio))
                    .then_with(|| (&b.slow, &b.fast).cmp(&(&cand.slow, &cand.fast)))
                    .is_gt(),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.ok_or(PairError::NoQualifyingPair)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffLine {
    pub line_number: u32,
    pub source: String,
    pub slow_hits: u64,
    pub fast_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDiff {
    pub source_lines: Vec<DiffLine>,
    pub slow_input_preview: String,
    pub fast_input_preview: String,
}

pub fn build_profile_diff(
    source: &str,
    slow_profile: &LineProfile,
    fast_profile: &LineProfile,
    slow: &TestInput,
    fast: &TestInput,
    preview_bytes: usize,
) -> Result<ProfileDiff, PairError> {
    if slow_profile.solution_id != fast_profile.solution_id {
        return Err(PairError::ProfileMismatch(
            slow_profile.solution_id.clone(),
            fast_profile.solution_id.clone(),
        ));
    }
    let source_lines = source
        .lines()
        .enumerate()
        .map(|(i, text)| {
            let n = i as u32 + 1;
            DiffLine {
                line_number: n,
                source: text.to_string(),
                slow_hits: slow_profile.hits.get(&n).copied().unwrap_or(0),
                fast_hits: fast_profile.hits.get(&n).copied().unwrap_or(0),
            }
        })
        .collect();
    Ok(ProfileDiff {
        source_lines,
        slow_input_preview: truncate_preview(&String::from_utf8_lossy(&slow.input_bytes), preview_bytes),
        fast_input_preview: truncate_preview(&String::from_utf8_lossy(&fast.input_bytes), preview_bytes),
    })
}

impl ProfileDiff {
    /// One line per source line: `{line:>5} | slow:{s:>8} fast:{f:>8} | {source}`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for l in &self.source_lines {
            let _ = writeln!(
                out,
                "{:>5} | slow:{:>8} fast:{:>8} | {}",
                l.line_number, l.slow_hits, l.fast_hits, l.source
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::MeterKind;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s.as_bytes())
    }

    fn cost(c: u64) -> CostMeasurement {
        CostMeasurement::from_runs(vec![c; 5], MeterKind::TraceCounter).unwrap()
    }

    #[test]
    fn tokenizer_splits_on_ascii_whitespace() {
        assert_eq!(toks("1 2  3\n"), ["1", "2", "3"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("a\tb\nc"), ["a", "b", "c"]);
        assert_eq!(tokenize(b"\xff 1"), ["\u{fffd}", "1"]);
    }

    #[test]
    fn similarity_examples() {
        assert!((match_ratio(&toks("1 2 2 3"), &toks("2 3 4")).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(match_ratio(&toks("1 2"), &toks("1 2")).unwrap(), 1.0);
        assert_eq!(match_ratio(&toks("1 2"), &toks("3 4")).unwrap(), 0.0);
        assert_eq!(jaccard(&toks("a b c"), &toks("b c d")).unwrap(), 0.5);
        assert_eq!(jaccard(&toks("a"), &toks("a")).unwrap(), 1.0);
        assert_eq!(jaccard(&toks("a"), &toks("b")).unwrap(), 0.0);
        assert_eq!(match_ratio(&[], &[]), Err(PairError::BothEmpty));
        assert_eq!(jaccard(&[], &[]), Err(PairError::BothEmpty));
        assert_eq!(match_ratio(&toks("1"), &[]).unwrap(), 0.0);
    }

    #[test]
    fn single_pair_orients_slow_and_fast() {
        let tests = vec![
            TestInput::generated("A", b"3 1 2 3".to_vec()),
            TestInput::generated("B", b"3 1 2 4".to_vec()),
        ];
        let costs = BTreeMap::from([("A".into(), cost(100)), ("B".into(), cost(1000))]);
        let p = mine_pair(&tests, &costs, 2.0).unwrap();
        assert_eq!((p.slow.as_str(), p.fast.as_str()), ("B", "A"));
        assert_eq!(p.cost_ratio, 10.0);
    }

    #[test]
    fn similarity_dominates_cost_ratio() {
        // (B, A) is more similar than (C, A) but has a smaller ratio.
        let tests = vec![
            TestInput::generated("A", b"1 2 3 4".to_vec()),
            TestInput::generated("B", b"1 2 3 5".to_vec()),
            TestInput::generated("C", b"9 8 7 6".to_vec()),
        ];
        let costs = BTreeMap::from([
            ("A".into(), cost(10)),
            ("B".into(), cost(30)),
            ("C".into(), cost(10_000)),
        ]);
        let p = mine_pair(&tests, &costs, 2.0).unwrap();
        assert_eq!((p.slow.as_str(), p.fast.as_str()), ("B", "A"));
    }

    #[test]
    fn flat_costs_have_no_pair() {
        let tests = vec![
            TestInput::generated("A", b"1".to_vec()),
            TestInput::generated("B", b"2".to_vec()),
        ];
        let costs = BTreeMap::from([("A".into(), cost(7)), ("B".into(), cost(7))]);
        assert_eq!(mine_pair(&tests, &costs, 2.0), Err(PairError::NoQualifyingPair));
    }

    fn profile(sid: &str, hits: &[(u32, u64)]) -> LineProfile {
        LineProfile {
            solution_id: sid.into(),
            input_id: "x".into(),
            hits: hits.iter().copied().collect(),
        }
    }

    #[test]
    fn diff_aligns_hits_and_renders() {
        let src = "int n;\nfor (;;)\n  work();\n";
        let slow = profile("s", &[(1, 1), (2, 10001), (3, 10000)]);
        let fast = profile("s", &[(1, 1), (2, 4), (3, 3)]);
        let t = TestInput::generated("t", b"9".to_vec());
        let d = build_profile_diff(src, &slow, &fast, &t, &t, 16).unwrap();
        assert_eq!(d.source_lines.len(), 3);
        assert_eq!((d.source_lines[2].slow_hits, d.source_lines[2].fast_hits), (10000, 3));
        assert_eq!(
            d.render().lines().nth(2).unwrap(),
            "    3 | slow:   10000 fast:       3 |   work();"
        );

        let same = build_profile_diff(src, &slow, &slow, &t, &t, 16).unwrap();
        assert!(same.source_lines.iter().all(|l| l.slow_hits == l.fast_hits));

        assert!(matches!(
            build_profile_diff(src, &slow, &profile("other", &[]), &t, &t, 16),
            Err(PairError::ProfileMismatch(..))
        ));
    }

    #[test]
    fn previews_are_truncated_with_marker() {
        let big = TestInput::generated("b", vec![b'7'; 10_000]);
        let p = profile("s", &[]);
        let d = build_profile_diff("x\n", &p, &p, &big, &big, DEFAULT_PREVIEW_BYTES).unwrap();
        assert!(d.slow_input_preview.len() < 4200);
        assert!(d.slow_input_preview.ends_with("[truncated 5904 bytes]"));
    }

    fn small_tokens() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec("[a-d]{1,2}", 0..8)
    }

    proptest! {
        #[test]
        fn similarity_is_symmetric_and_bounded(a in small_tokens(), b in small_tokens()) {
            prop_assume!(!(a.is_empty() && b.is_empty()));
            let (m1, m2) = (match_ratio(&a, &b).unwrap(), match_ratio(&b, &a).unwrap());
            let (j1, j2) = (jaccard(&a, &b).unwrap(), jaccard(&b, &a).unwrap());
            prop_assert_eq!(m1, m2);
            prop_assert_eq!(j1, j2);
            prop_assert!((0.0..=1.0).contains(&m1) && (0.0..=1.0).contains(&j1));
            if !a.is_empty() {
                prop_assert_eq!(match_ratio(&a, &a).unwrap(), 1.0);
                prop_assert_eq!(jaccard(&a, &a).unwrap(), 1.0);
            }
        }

        #[test]
        fn mining_ignores_test_order(
            inputs in proptest::collection::vec(("[0-3]( [0-3]){0,3}", 1u64..50), 2..7),
            seed in any::<u64>(),
        ) {
            let tests: Vec<TestInput> = inputs.iter().enumerate()
                .map(|(i, (s, _))| TestInput::generated(format!("t{i}"), s.as_bytes().to_vec()))
                .collect();
            let costs: BTreeMap<String, CostMeasurement> = inputs.iter().enumerate()
                .map(|(i, (_, c))| (format!("t{i}"), cost(*c)))
                .collect();
            let mut shuffled = tests.clone();
            let k = shuffled.len();
            shuffled.rotate_left((seed % k as u64) as usize);
            shuffled.swap(0, (seed / 7 % k as u64) as usize);
            let a = mine_pair(&tests, &costs, 2.0);
            let b = mine_pair(&shuffled, &costs, 2.0);
            prop_assert_eq!(&a, &b);
            if let Ok(p) = a {
                prop_assert!(costs[&p.slow].mean_cost >= 2.0 * costs[&p.fast].mean_cost);
                prop_assert_ne!(p.slow, p.fast);
            }
        }
    }
}
