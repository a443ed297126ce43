//! Little-endian framing for the mutator plugin protocol.
//!
//! request:  `u32 len | u8 0x01 | u64 rng_seed | u32 max_size | u32 seed_len | seed | u32 add_len | add`
//! response: `u32 len | u8 0x81 | mutated`
//! shutdown: `u32 len | u8 0x7F`
//!
//! `len` counts every byte after the length field.

use std::io::{self, Read};

pub const TAG_REQUEST: u8 = 0x01;
pub const TAG_RESPONSE: u8 = 0x81;
pub const TAG_SHUTDOWN: u8 = 0x7F;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationRequest {
    pub seed: Vec<u8>,
    pub add_seed: Option<Vec<u8>>,
    pub max_size: u32,
    pub rng_seed: u64,
}

pub fn encode_request(req: &MutationRequest) -> Vec<u8> {
    let add = req.add_seed.as_deref().unwrap_or(&[]);
    let body_len = 1 + 8 + 4 + 4 + req.seed.len() + 4 + add.len();
    let mut out = Vec::with_capacity(4 + body_len);
    out.extend_from_slice(&(body_len as u32).to_le_bytes());
    out.push(TAG_REQUEST);
    out.extend_from_slice(&req.rng_seed.to_le_bytes());
    out.extend_from_slice(&req.max_size.to_le_bytes());
    out.extend_from_slice(&(req.seed.len() as u32).to_le_bytes());
    out.extend_from_slice(&req.seed);
    out.extend_from_slice(&(add.len() as u32).to_le_bytes());
    out.extend_from_slice(add);
    out
}

pub fn encode_shutdown() -> Vec<u8> {
    let mut out = 1u32.to_le_bytes().to_vec();
    out.push(TAG_SHUTDOWN);
    out
}

pub fn encode_response(mutated: &[u8]) -> Vec<u8> {
    let mut out = ((mutated.len() + 1) as u32).to_le_bytes().to_vec();
    out.push(TAG_RESPONSE);
    out.extend_from_slice(mutated);
    out
}

fn u32_at(b: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_le_bytes(b.get(at..at + 4)?.try_into().ok()?))
}

/// Parses a request frame body (without the length prefix).
pub fn decode_request(body: &[u8]) -> Option<MutationRequest> {
    if body.first() != Some(&TAG_REQUEST) {
        return None;
    }
    let rng_seed = u64::from_le_bytes(body.get(1..9)?.try_into().ok()?);
    let max_size = u32_at(body, 9)?;
    let seed_len = u32_at(body, 13)? as usize;
    let seed = body.get(17..17 + seed_len)?.to_vec();
    let off = 17 + seed_len;
    let add_len = u32_at(body, off)? as usize;
    let add = body.get(off + 4..off + 4 + add_len)?.to_vec();
    if off + 4 + add_len != body.len() {
        return None;
    }
    Some(MutationRequest {
        seed,
        add_seed: (!add.is_empty()).then_some(add),
        max_size,
        rng_seed,
    })
}

/// Reads one frame body; `Ok(None)` on clean EOF before the header.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    match r.read_exact(&mut header) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_le_bytes(header) as usize;
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn request_layout_is_bit_exact() {
        let req = MutationRequest {
            seed: b"ab".to_vec(),
            add_seed: Some(b"c".to_vec()),
            max_size: 7,
            rng_seed: 0x0102030405060708,
        };
        let frame = encode_request(&req);
        assert_eq!(
            frame,
            [
                &[24, 0, 0, 0][..],
                &[0x01],
                &[8, 7, 6, 5, 4, 3, 2, 1],
                &[7, 0, 0, 0],
                &[2, 0, 0, 0],
                b"ab",
                &[1, 0, 0, 0],
                b"c",
            ]
            .concat()
        );
        assert_eq!(encode_response(b"xy"), [3, 0, 0, 0, 0x81, b'x', b'y']);
        assert_eq!(encode_shutdown(), [1, 0, 0, 0, 0x7F]);
    }

    proptest! {
        #[test]
        fn request_round_trips(
            seed in proptest::collection::vec(any::<u8>(), 0..64),
            add in proptest::option::of(proptest::collection::vec(any::<u8>(), 1..16)),
            max_size in any::<u32>(),
            rng_seed in any::<u64>(),
        ) {
            let req = MutationRequest { seed, add_seed: add, max_size, rng_seed };
            let frame = encode_request(&req);
            let body = read_frame(&mut frame.as_slice()).unwrap().unwrap();
            prop_assert_eq!(decode_request(&body), Some(req));
        }
    }
}
