//! Seeded RNG substreams.
//!
//! All randomness flows from one root seed. Independent components (topology,
//! pair drawing, fading blocks, relay selection) pull from named substreams so
//! that changing one component's consumption pattern does not perturb the
//! others, and so that parallel trial workers stay deterministic.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Substream labels. The numeric tag goes into the derived seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Pairs,
    Pipeline,
    Fading,
    Selection,
    Bootstrap,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Topology => 0x746f_706f,
            Stream::Pairs => 0x7061_6972,
            Stream::Pipeline => 0x7069_7065,
            Stream::Fading => 0x6661_6465,
            Stream::Selection => 0x7365_6c65,
            Stream::Bootstrap => 0x626f_6f74,
        }
    }
}

/// SplitMix64 step, used to mix the root seed with stream tags and indices.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a substream RNG from `root`, a stream label and an index path
/// (e.g. `[trial, block]`).
pub fn substream(root: u64, stream: Stream, path: &[u64]) -> ChaCha8Rng {
    let mut state = root ^ stream.tag();
    let mut seed = [0u8; 32];
    let mut words = [0u64; 4];
    for &p in path {
        state ^= splitmix64(&mut state).wrapping_add(p);
        state = state.rotate_left(17) ^ p.wrapping_mul(0x2545_f491_4f6c_dd1d);
    }
    for w in words.iter_mut() {
        *w = splitmix64(&mut state);
    }
    for (i, w) in words.iter().enumerate() {
        seed[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn substreams_are_deterministic() {
        let mut a = substream(7, Stream::Fading, &[3, 4]);
        let mut b = substream(7, Stream::Fading, &[3, 4]);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn substreams_differ_across_labels_and_paths() {
        let mut a = substream(7, Stream::Fading, &[3, 4]);
        let mut b = substream(7, Stream::Selection, &[3, 4]);
        let mut c = substream(7, Stream::Fading, &[4, 3]);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }
}
