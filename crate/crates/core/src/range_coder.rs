//! Static-table rANS coder.
//!
//! 64-bit state kept in `[2^31, 2^39)`, byte-wise renormalization, 16-bit
//! probability precision. The encoder runs over the symbols backwards and the
//! byte stream is reversed, so the decoder reads forward. The payload is the
//! final 5-byte state (big-endian) followed by the renormalization bytes.
//! Decoding must finish exactly at the initial state with every byte consumed,
//! which catches most truncation and corruption.

use crate::entropy_model::{FrequencyTable, TABLE_PRECISION_BITS};
use crate::error::{corrupt, invalid, Result};

const STATE_LOW: u64 = 1 << 31;
const STATE_BYTES: usize = 5;
const SLOT_MASK: u64 = (1 << TABLE_PRECISION_BITS) - 1;

/// Entropy-coded symbols; carries no header of its own.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedPayload {
    pub bytes: Vec<u8>,
    pub n_symbols: usize,
}

impl CodedPayload {
    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }
}

pub fn encode(symbols: &[i32], table: &FrequencyTable) -> Result<CodedPayload> {
    if let Some(s) = symbols.iter().find(|&&s| !table.contains(s)) {
        return Err(invalid(format!("symbol {s} outside the table alphabet")));
    }
    let mut out = Vec::with_capacity(symbols.len() / 2 + STATE_BYTES);
    let mut x = STATE_LOW;
    for &s in symbols.iter().rev() {
        let (start, freq) = table.slot(s);
        let (start, freq) = (u64::from(start), u64::from(freq));
        let x_max = ((STATE_LOW >> TABLE_PRECISION_BITS) << 8) * freq;
        while x >= x_max {
            out.push(x as u8);
            x >>= 8;
        }
        x = ((x / freq) << TABLE_PRECISION_BITS) + x % freq + start;
    }
    for i in 0..STATE_BYTES {
        out.push((x >> (8 * i)) as u8);
    }
    out.reverse();
    Ok(CodedPayload { bytes: out, n_symbols: symbols.len() })
}

/// Recovers exactly `n_symbols` symbols. A table different from the
/// encoder's is not detectable in general and yields garbage or an error.
pub fn decode(payload: &[u8], table: &FrequencyTable, n_symbols: usize) -> Result<Vec<i32>> {
    if n_symbols == 0 {
        return Ok(Vec::new());
    }
    if payload.len() < STATE_BYTES {
        return Err(corrupt("payload shorter than the coder state"));
    }
    let mut x = payload[..STATE_BYTES].iter().fold(0u64, |acc, &b| (acc << 8) | u64::from(b));
    let mut pos = STATE_BYTES;
    let mut symbols = Vec::with_capacity(n_symbols);
    for _ in 0..n_symbols {
        let slot = (x & SLOT_MASK) as u32;
        let (s, start, freq) = table.lookup(slot);
        x = u64::from(freq) * (x >> TABLE_PRECISION_BITS) + u64::from(slot - start);
        while x < STATE_LOW {
            let b = *payload.get(pos).ok_or_else(|| corrupt("payload truncated"))?;
            x = (x << 8) | u64::from(b);
            pos += 1;
        }
        symbols.push(s);
    }
    if x != STATE_LOW || pos != payload.len() {
        return Err(corrupt("payload does not end in the coder's initial state"));
    }
    Ok(symbols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy_model::{build_frequency_table, BorderAwareModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(k: i32) -> FrequencyTable {
        build_frequency_table(&BorderAwareModel::new(0.0, 9.0, 3, 5000, k).unwrap()).unwrap()
    }

    #[test]
    fn empty_stream() {
        let t = table(127);
        let p = encode(&[], &t).unwrap();
        assert_eq!(p.bytes.len(), STATE_BYTES);
        assert!(decode(&p.bytes, &t, 0).unwrap().is_empty());
        assert!(decode(&[1, 2, 3], &t, 0).unwrap().is_empty());
    }

    #[test]
    fn small_round_trip() {
        let t = table(127);
        let s = vec![-127, 127, 0, 1, -1];
        let p = encode(&s, &t).unwrap();
        assert_eq!(decode(&p.bytes, &t, s.len()).unwrap(), s);
    }

    #[test]
    fn out_of_alphabet_is_rejected() {
        assert!(encode(&[0, 128], &table(127)).is_err());
    }

    #[test]
    fn skewed_table_compresses_hard() {
        let k = 127;
        let mut freqs = vec![1u32; 2 * k as usize + 1];
        freqs[k as usize] = 65536 - 2 * k as u32;
        let t = FrequencyTable::from_freqs(k, freqs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<i32> = (0..10_000).map(|_| if rng.gen_ratio(1, 1000) { rng.gen_range(-k..=k) } else { 0 }).collect();
        let p = encode(&s, &t).unwrap();
        let ce = t.cross_entropy_bits(&s);
        assert!((p.bit_len() as f64) <= ce * 1.001 + 64.0);
        assert!(p.bit_len() < 10_000 * 8 / 20);
        assert_eq!(decode(&p.bytes, &t, s.len()).unwrap(), s);
    }

    #[test]
    fn truncation_is_detected() {
        let t = table(127);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<i32> = (0..2000).map(|_| rng.gen_range(-127..=127)).collect();
        let p = encode(&s, &t).unwrap();
        for cut in [1, 7, p.bytes.len() / 2] {
            let r = decode(&p.bytes[..p.bytes.len() - cut], &t, s.len());
            assert!(r.is_err(), "cut {cut}");
        }
        assert!(decode(&p.bytes[..3], &t, 1).is_err());
    }

    #[test]
    fn deterministic_bytes() {
        let t = table(31);
        let s: Vec<i32> = (-31..=31).cycle().take(1000).collect();
        assert_eq!(encode(&s, &t).unwrap(), encode(&s, &t).unwrap());
    }

    fn random_table(k: i32, rng: &mut ChaCha8Rng) -> FrequencyTable {
        let n = 2 * k as usize + 1;
        let weights: Vec<f64> = (0..n).map(|_| rng.gen::<f64>().powi(4)).collect();
        let total: f64 = weights.iter().sum();
        let mut freqs: Vec<u32> = weights.iter().map(|w| ((w / total * 65536.0) as u32).max(1)).collect();
        let sum: i64 = freqs.iter().map(|&f| i64::from(f)).sum();
        let (i, _) = freqs.iter().enumerate().max_by_key(|(_, &f)| f).unwrap();
        freqs[i] = (i64::from(freqs[i]) + 65536 - sum) as u32;
        FrequencyTable::from_freqs(k, freqs).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn lossless_on_random_tables(seed: u64, k in 1i32..600, len in 0usize..3000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_table(k, &mut rng);
            // Sample from the table itself so rare symbols still show up sometimes.
            let s: Vec<i32> = (0..len).map(|_| t.lookup(rng.gen_range(0..65536)).0).collect();
            let p = encode(&s, &t).unwrap();
            prop_assert_eq!(decode(&p.bytes, &t, s.len()).unwrap(), s.clone());
            prop_assert!(p.bit_len() as f64 <= t.cross_entropy_bits(&s) * 1.001 + 64.0);
        }

        #[test]
        fn corrupted_payload_never_panics(seed: u64, flip in 0usize..10_000, bit in 0u8..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = table(127);
            let s: Vec<i32> = (0..500).map(|_| t.lookup(rng.gen_range(0..65536)).0).collect();
            let mut bytes = encode(&s, &t).unwrap().bytes;
            let i = flip % bytes.len();
            bytes[i] ^= 1 << bit;
            let _ = decode(&bytes, &t, s.len());
        }
    }
}
