use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::HarnessError;

/// Per-line execution counts of one run. Every source line in
/// `1..=line_count` is present; lines never executed carry 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineProfile {
    pub solution_id: String,
    pub input_id: String,
    pub hits: BTreeMap<u32, u64>,
}

impl LineProfile {
    pub fn from_sparse(
        solution_id: &str,
        input_id: &str,
        line_count: usize,
        sparse: &BTreeMap<u32, u64>,
    ) -> Self {
        let hits = (1..=line_count as u32)
            .map(|l| (l, sparse.get(&l).copied().unwrap_or(0)))
            .collect();
        LineProfile {
            solution_id: solution_id.to_string(),
            input_id: input_id.to_string(),
            hits,
        }
    }
}

/// Counts from `gcov -t` output for the section whose source path ends in
/// `source_name`. Non-executable (`-`) and unexecuted (`#####`) lines are
/// omitted; callers densify with [`LineProfile::from_sparse`].
pub fn parse_gcov_text(text: &str, source_name: &str) -> BTreeMap<u32, u64> {
    let mut hits = BTreeMap::new();
    let mut in_section = false;
    for line in text.lines() {
        let mut parts = line.splitn(3, ':');
        let (Some(count), Some(lineno), rest) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let lineno = lineno.trim();
        if lineno == "0" {
            if let Some(src) = rest.and_then(|r| r.strip_prefix("Source:")) {
                in_section = Path::new(src.trim())
                    .file_name()
                    .is_some_and(|f| f == source_name);
            }
            continue;
        }
        if !in_section {
            continue;
        }
        let Ok(lineno) = lineno.parse::<u32>() else {
            continue;
        };
        let count = count.trim().trim_end_matches('*');
        if let Ok(n) = count.parse::<u64>() {
            *hits.entry(lineno).or_default() += n;
        }
    }
    hits
}

/// Runs gcov over a `.gcda` captured from one execution.
pub fn gcov_counts(
    build_dir: &Path,
    source_name: &str,
    gcda: &[u8],
) -> Result<BTreeMap<u32, u64>, HarnessError> {
    let work = tempfile::Builder::new()
        .prefix("wedge-gcov-")
        .tempdir()
        .map_err(|e| HarnessError::ProfileUnavailable(e.to_string()))?;
    let stem = Path::new(source_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("main");
    let gcno = build_dir.join(format!("{stem}.gcno"));
    fs::copy(&gcno, work.path().join(format!("{stem}.gcno")))
        .map_err(|e| HarnessError::ProfileUnavailable(format!("{}: {e}", gcno.display())))?;
    fs::write(work.path().join(format!("{stem}.gcda")), gcda)
        .map_err(|e| HarnessError::ProfileUnavailable(e.to_string()))?;
    let out = Command::new("gcov")
        .arg("-t")
        .arg("-o")
        .arg(work.path())
        .arg(build_dir.join(source_name))
        .current_dir(work.path())
        .output()
        .map_err(|e| HarnessError::ProfileUnavailable(format!("gcov: {e}")))?;
    if !out.status.success() {
        return Err(HarnessError::ProfileUnavailable(format!(
            "gcov failed: {}",
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    Ok(parse_gcov_text(&String::from_utf8_lossy(&out.stdout), source_name))
}

/// Counts written by the Python line tracer.
pub fn parse_pytrace_json(bytes: &[u8]) -> Result<BTreeMap<u32, u64>, HarnessError> {
    let raw: BTreeMap<String, u64> = serde_json::from_slice(bytes)
        .map_err(|e| HarnessError::ProfileUnavailable(format!("tracer output: {e}")))?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u32>()
                .map(|l| (l, v))
                .map_err(|_| HarnessError::ProfileUnavailable(format!("bad line key {k}")))
        })
        .collect()
}

/// `<slot> <count>` lines written by the edge-coverage runtime.
pub fn parse_edge_counts(bytes: &[u8]) -> BTreeMap<u32, u64> {
    String::from_utf8_lossy(bytes)
        .lines()
        .filter_map(|l| {
            let mut it = l.split_whitespace();
            Some((it.next()?.parse().ok()?, it.next()?.parse().ok()?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gcov_text_selects_main_section() {
        let text = "        -:    0:Source:/b/main.cpp\n\
                    -:    0:Graph:main.gcno\n\
                    -:    1:#include <cstdio>\n\
                    1:    2:int main(){\n\
                    7*:    3:  for(;;) x++;\n\
                    #####:    4:  dead();\n\
                    -:    0:Source:/usr/include/c++/11/iostream\n\
                    99:    5:inline junk\n";
        let hits = parse_gcov_text(text, "main.cpp");
        assert_eq!(hits, BTreeMap::from([(2, 1), (3, 7)]));
        let dense = LineProfile::from_sparse("s", "t", 4, &hits);
        assert_eq!(dense.hits.len(), 4);
        assert_eq!(dense.hits[&4], 0);
        assert_eq!(dense.hits[&1], 0);
    }

    #[test]
    fn edge_and_pytrace_formats() {
        assert_eq!(
            parse_edge_counts(b"12 3\n40000 1\ngarbage\n"),
            BTreeMap::from([(12, 3), (40000, 1)])
        );
        assert_eq!(
            parse_pytrace_json(br#"{"1": 1, "3": 7}"#).unwrap(),
            BTreeMap::from([(1, 1), (3, 7)])
        );
    }
}
