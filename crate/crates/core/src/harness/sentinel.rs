//! Stderr sentinel lines emitted by instrumented and trace-counted programs.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

pub const CHECK_HIT_PREFIX: &str = "WEDGE_CHECK_HIT:";
pub const COST_PREFIX: &str = "WEDGE_COST:";
pub const LEGACY_WARNING_PREFIX: &str = "Warning: Performance bottleneck condition triggered";
pub const LEGACY_CHECKER_ID: &str = "legacy";

static CHECKER_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^[A-Za-z0-9_]+$").unwrap());

pub fn is_valid_checker_id(id: &str) -> bool {
    CHECKER_ID.is_match(id)
}

/// Checker ids reported on stderr, one sentinel per line.
pub fn parse_checker_hits(stderr: &[u8]) -> BTreeSet<String> {
    let text = String::from_utf8_lossy(stderr);
    let mut hits = BTreeSet::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if let Some(id) = line.strip_prefix(CHECK_HIT_PREFIX) {
            if is_valid_checker_id(id) {
                hits.insert(id.to_string());
            }
        } else if line.starts_with(LEGACY_WARNING_PREFIX) {
            hits.insert(LEGACY_CHECKER_ID.to_string());
        }
    }
    hits
}

pub fn emit_checker_hits<'a>(ids: impl IntoIterator<Item = &'a str>) -> String {
    ids.into_iter()
        .map(|id| format!("{CHECK_HIT_PREFIX}{id}\n"))
        .collect()
}

/// Step count from the last `WEDGE_COST:` line on stderr.
pub fn parse_trace_cost(stderr: &[u8]) -> Option<u64> {
    let text = String::from_utf8_lossy(stderr);
    text.lines()
        .rev()
        .find_map(|l| l.trim_end_matches('\r').strip_prefix(COST_PREFIX))
        .and_then(|n| n.trim().parse().ok())
}
