use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First eight bytes of the SHA-256 digest, big-endian.
pub fn sha256_u64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(head)
}

/// Judge-style output normalization: trailing whitespace is stripped from
/// every line and trailing empty lines are dropped.
pub fn normalize_output(stdout: &[u8]) -> String {
    let text = String::from_utf8_lossy(stdout);
    let mut lines: Vec<&str> = text.split('\n').map(|l| l.trim_end()).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Lower-midpoint median: for an even count the smaller middle element.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some(sorted[(sorted.len() - 1) / 2])
}

/// Truncates `text` to at most `budget` bytes on a char boundary, appending
/// a marker that states how many bytes were cut.
pub fn truncate_preview(text: &str, budget: usize) -> String {
    if text.len() <= budget {
        return text.to_string();
    }
    let mut cut = budget;
    while !text.is_char_boundary(cut) {
        cut -= 1;
    }
    format!(
        "{}\n... [truncated {} bytes]",
        &text[..cut],
        text.len() - cut
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_strips_trailing_space_and_lines() {
        assert_eq!(normalize_output(b"42  \n\n\n"), "42");
        assert_eq!(normalize_output(b"1 2\r\n3\n"), "1 2\n3");
        assert_eq!(normalize_output(b""), "");
        assert_eq!(normalize_output(b"  a\n b "), "  a\n b");
    }

    #[test]
    fn lower_median_even_and_odd() {
        assert_eq!(lower_median(&[1.0, 2.0, 1000.0]), Some(2.0));
        assert_eq!(lower_median(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median(&[]), None);
    }

    #[test]
    fn preview_truncation_marks_cut() {
        assert_eq!(truncate_preview("abc", 10), "abc");
        let t = truncate_preview("abcdef", 4);
        assert!(t.starts_with("abcd\n"));
        assert!(t.ends_with("[truncated 2 bytes]"));
        // multi-byte char straddling the budget is not split
        let t = truncate_preview("aé", 2);
        assert!(t.starts_with("a\n"));
    }
}
