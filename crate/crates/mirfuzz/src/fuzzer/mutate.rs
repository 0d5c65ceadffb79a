//! Input mutation operators. One operator is chosen uniformly per call;
//! output always has at least one byte.

use crate::rng::SplitMix64;

pub const INTERESTING: [i64; 9] = [0, 1, -1, 127, 128, 255, 256, 32767, 65535];

const OPERATOR_COUNT: u64 = 8;

/// Applies one mutation operator to `bytes`. `splice_pool` supplies donor
/// seeds for the splice operator; with an empty pool splice degrades to a
/// copy of the input.
pub fn mutate(bytes: &[u8], rng: &mut SplitMix64, splice_pool: &[Vec<u8>]) -> Vec<u8> {
    let mut out: Vec<u8> = if bytes.is_empty() { vec![0] } else { bytes.to_vec() };
    match rng.below(OPERATOR_COUNT) {
        0 => {
            // Single-bit flip.
            let bit = rng.below(out.len() as u64 * 8);
            out[(bit / 8) as usize] ^= 1 << (bit % 8);
        }
        1 => {
            // Byte flip.
            let i = rng.below(out.len() as u64) as usize;
            out[i] ^= 0xFF;
        }
        2 => {
            // Random byte set.
            let i = rng.below(out.len() as u64) as usize;
            out[i] = rng.below(256) as u8;
        }
        3 => {
            // Bounded arithmetic on an 8/16/32-bit little-endian word.
            let width = [1usize, 2, 4][rng.below(3) as usize].min(out.len());
            let pos = rng.below((out.len() - width + 1) as u64) as usize;
            let delta = 1 + rng.below(35) as i64;
            let delta = if rng.below(2) == 0 { delta } else { -delta };
            let mut word = [0u8; 8];
            word[..width].copy_from_slice(&out[pos..pos + width]);
            let v = i64::from_le_bytes(word).wrapping_add(delta);
            out[pos..pos + width].copy_from_slice(&v.to_le_bytes()[..width]);
        }
        4 => {
            // Interesting-value overwrite.
            let width = [1usize, 2, 4][rng.below(3) as usize].min(out.len());
            let pos = rng.below((out.len() - width + 1) as u64) as usize;
            let v = INTERESTING[rng.below(INTERESTING.len() as u64) as usize];
            out[pos..pos + width].copy_from_slice(&v.to_le_bytes()[..width]);
        }
        5 => {
            // Block deletion; no-op on one-byte inputs.
            if out.len() > 1 {
                let max_del = out.len() - 1;
                let len = 1 + rng.below(max_del as u64) as usize;
                let pos = rng.below((out.len() - len + 1) as u64) as usize;
                out.drain(pos..pos + len);
            }
        }
        6 => {
            // Block duplication.
            let len = 1 + rng.below(out.len() as u64) as usize;
            let pos = rng.below((out.len() - len + 1) as u64) as usize;
            let block: Vec<u8> = out[pos..pos + len].to_vec();
            let insert_at = rng.below(out.len() as u64 + 1) as usize;
            out.splice(insert_at..insert_at, block);
        }
        _ => {
            // Splice: our prefix, a donor's suffix.
            if !splice_pool.is_empty() {
                let donor = &splice_pool[rng.below(splice_pool.len() as u64) as usize];
                if !donor.is_empty() {
                    let cut_a = rng.below(out.len() as u64 + 1) as usize;
                    let cut_b = rng.below(donor.len() as u64) as usize;
                    out.truncate(cut_a);
                    out.extend_from_slice(&donor[cut_b..]);
                    if out.is_empty() {
                        out.push(0);
                    }
                }
            }
        }
    }
    debug_assert!(!out.is_empty());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_flip_high_bit() {
        // Operator 0 draws: operator index, then bit index. Find a seed that
        // selects operator 0 and bit 7 on a one-byte input.
        for seed in 0..10_000u64 {
            let mut probe = SplitMix64::new(seed);
            if probe.below(OPERATOR_COUNT) == 0 && probe.below(8) == 7 {
                let mut rng = SplitMix64::new(seed);
                assert_eq!(mutate(&[0x00], &mut rng, &[]), vec![0x80]);
                return;
            }
        }
        panic!("no seed selected bit 7 of operator 0");
    }

    #[test]
    fn delete_on_one_byte_input_is_noop() {
        for seed in 0..10_000u64 {
            let mut probe = SplitMix64::new(seed);
            if probe.below(OPERATOR_COUNT) == 5 {
                let mut rng = SplitMix64::new(seed);
                assert_eq!(mutate(&[9], &mut rng, &[]), vec![9]);
                return;
            }
        }
        panic!("no seed selected the delete operator");
    }

    #[test]
    fn output_never_empty() {
        let pool = vec![vec![1, 2, 3], vec![]];
        let mut rng = SplitMix64::new(3);
        let mut bytes = vec![0u8; 4];
        for _ in 0..5_000 {
            bytes = mutate(&bytes, &mut rng, &pool);
            assert!(!bytes.is_empty());
        }
    }

    #[test]
    fn deterministic_given_rng() {
        let pool = vec![vec![7, 8, 9, 10]];
        let a = mutate(&[1, 2, 3, 4], &mut SplitMix64::new(11), &pool);
        let b = mutate(&[1, 2, 3, 4], &mut SplitMix64::new(11), &pool);
        assert_eq!(a, b);
    }
}
