//! Byte-level fallback mutator, also the default-mutator ablation arm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const BUILTIN_NAME: &str = "builtin";

/// Values spliced in place of whitespace tokens. Boundary-ish numbers tend
/// to push sizes and loop bounds toward their limits.
const INTERESTING: [&str; 20] = [
    "0", "1", "-1", "2", "3", "7", "9", "10", "16", "32", "64", "99", "100", "127", "128",
    "255", "256", "1000", "1024", "65535",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum BuiltinOp {
    Generate,
    Bitflip { bit: usize },
    ByteOverwrite { at: usize, value: u8 },
    ChunkDuplicate { start: usize, len: usize },
    ChunkDelete { start: usize, len: usize },
    TokenSplice { token: usize, with: String },
}

pub fn builtin_mutate(seed: &[u8], rng_seed: u64, max_size: usize) -> Vec<u8> {
    builtin_mutate_traced(seed, rng_seed, max_size).0
}

/// Same as [`builtin_mutate`] but also reports which operation ran.
pub fn builtin_mutate_traced(seed: &[u8], rng_seed: u64, max_size: usize) -> (Vec<u8>, BuiltinOp) {
    assert!(max_size > 0, "max_size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (mut out, op) = if seed.is_empty() {
        (generate_line(&mut rng), BuiltinOp::Generate)
    } else {
        mutate_once(seed, &mut rng)
    };
    out.truncate(max_size);
    if out.is_empty() {
        // Deleting everything would hand the target an empty input forever.
        out.push(b'0' + rng.random_range(0..10u8));
    }
    (out, op)
}

fn generate_line(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = rng.random_range(1..=8);
    let words: Vec<String> = (0..n).map(|_| rng.random_range(0..1000u32).to_string()).collect();
    format!("{}\n", words.join(" ")).into_bytes()
}

/// Byte spans of whitespace-separated tokens.
fn token_spans(buf: &[u8]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, b) in buf.iter().enumerate() {
        match (b.is_ascii_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, buf.len()));
    }
    spans
}

fn mutate_once(seed: &[u8], rng: &mut ChaCha8Rng) -> (Vec<u8>, BuiltinOp) {
    let mut out = seed.to_vec();
    let len = seed.len();
    match rng.random_range(0..5u8) {
        0 => {
            let bit = rng.random_range(0..len * 8);
            out[bit / 8] ^= 1 << (bit % 8);
            (out, BuiltinOp::Bitflip { bit })
        }
        1 => {
            let at = rng.random_range(0..len);
            let value = rng.random();
            out[at] = value;
            (out, BuiltinOp::ByteOverwrite { at, value })
        }
        2 => {
            let start = rng.random_range(0..len);
            let chunk = rng.random_range(1..=len - start);
            let copy = out[start..start + chunk].to_vec();
            out.splice(start..start, copy);
            (out, BuiltinOp::ChunkDuplicate { start, len: chunk })
        }
        3 => {
            let start = rng.random_range(0..len);
            let chunk = rng.random_range(1..=len - start);
            out.drain(start..start + chunk);
            (out, BuiltinOp::ChunkDelete { start, len: chunk })
        }
        _ => {
            let spans = token_spans(seed);
            if spans.is_empty() {
                let at = rng.random_range(0..len);
                let value = rng.random();
                out[at] = value;
                return (out, BuiltinOp::ByteOverwrite { at, value });
            }
            let token = rng.random_range(0..spans.len());
            let with = if rng.random_bool(0.5) {
                INTERESTING[rng.random_range(0..INTERESTING.len())].to_string()
            } else {
                let (s, e) = spans[rng.random_range(0..spans.len())];
                String::from_utf8_lossy(&seed[s..e]).into_owned()
            };
            let (s, e) = spans[token];
            out.splice(s..e, with.bytes());
            (out, BuiltinOp::TokenSplice { token, with })
        }
    }
}
