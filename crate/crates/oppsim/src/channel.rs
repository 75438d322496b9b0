//! Path loss, block fading and SINR evaluation.
//!
//! Everything runs in the power domain: decoding is a pure SINR-threshold
//! test, so squared fading magnitudes are all that is ever materialized.

use crate::topology::Point;
use crate::{Result, SimError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Fading model for the squared channel gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FadingMode {
    /// Unit-mean exponential |g|^2 (Rayleigh amplitude), i.i.d. per link per
    /// block.
    Rayleigh,
    /// |g|^2 = 1 exactly; used by the non-opportunistic baseline.
    None,
}

/// Channel parameters.
#[derive(Debug, Clone, Copy)]
pub struct ChannelParams {
    /// Path-loss exponent, must exceed 2.
    pub alpha: f64,
    /// Noise power (linear).
    pub noise_power: f64,
    pub fading: FadingMode,
    /// SINR decode threshold (linear).
    pub eta: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 2.0 {
            return Err(SimError::Config(format!(
                "path-loss exponent must be > 2, got {}",
                self.alpha
            )));
        }
        if self.noise_power <= 0.0 {
            return Err(SimError::Config("noise power must be > 0".into()));
        }
        if self.eta <= 0.0 {
            return Err(SimError::Config("SINR threshold must be > 0".into()));
        }
        Ok(())
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            alpha: 4.0,
            noise_power: 1.0,
            fading: FadingMode::Rayleigh,
            eta: 1.0,
        }
    }
}

/// Power path gain `r^(-alpha)`.
pub fn path_gain(distance: f64, alpha: f64) -> Result<f64> {
    if distance <= 0.0 {
        return Err(SimError::Config(
            "path gain undefined for co-located nodes (r = 0)".into(),
        ));
    }
    Ok(distance.powf(-alpha))
}

/// Unit-mean exponential draw.
pub fn exp_gain(rng: &mut ChaCha8Rng) -> f64 {
    // Inverse-cdf; 1 - u avoids ln(0).
    let u: f64 = rng.gen();
    -(1.0 - u).ln()
}

/// Squared fading gains for one block over an explicit link set.
///
/// Links are stored as a dense tx-major matrix over the block's transmitter
/// and receiver lists; lookups scan the small id lists rather than hash.
#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub block_id: u64,
    pub txs: Vec<usize>,
    pub rxs: Vec<usize>,
    /// Row-major `txs.len() x rxs.len()`.
    pub gains: Vec<f64>,
}

impl ChannelSample {
    pub fn gain(&self, tx: usize, rx: usize) -> f64 {
        let ti = self.txs.iter().position(|&t| t == tx).expect("unknown tx");
        let ri = self.rxs.iter().position(|&r| r == rx).expect("unknown rx");
        self.gains[ti * self.rxs.len() + ri]
    }

    #[inline]
    pub fn gain_at(&self, tx_index: usize, rx_index: usize) -> f64 {
        self.gains[tx_index * self.rxs.len() + rx_index]
    }
}

/// Draw one block of fading for every (tx, rx) link in the cross product.
pub fn draw_block_fading(
    txs: Vec<usize>,
    rxs: Vec<usize>,
    mode: FadingMode,
    block_id: u64,
    rng: &mut ChaCha8Rng,
) -> ChannelSample {
    let len = txs.len() * rxs.len();
    let gains = match mode {
        FadingMode::None => vec![1.0; len],
        FadingMode::Rayleigh => (0..len).map(|_| exp_gain(rng)).collect(),
    };
    ChannelSample {
        block_id,
        txs,
        rxs,
        gains,
    }
}

/// SINR at `rx` for the signal from `tx` against the interferer set, all
/// transmitting at `per_hop_power`.
pub fn sinr_at(
    rx: usize,
    tx: usize,
    interferers: &[usize],
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
) -> Result<f64> {
    let p_rx = positions[rx];
    let signal =
        sample.gain(tx, rx) * path_gain(positions[tx].dist(&p_rx), params.alpha)? * per_hop_power;
    let mut interference = 0.0;
    for &i in interferers {
        debug_assert_ne!(i, tx);
        interference +=
            sample.gain(i, rx) * path_gain(positions[i].dist(&p_rx), params.alpha)? * per_hop_power;
    }
    Ok(signal / (params.noise_power + interference))
}

/// Closed-form outage probability `1 - exp(-c4 / (P * D^(alpha-1)))`.
pub fn analytic_outage_cdf(per_pair_power: f64, delay: f64, alpha: f64, c4: f64) -> f64 {
    1.0 - (-c4 / (per_pair_power * delay.powf(alpha - 1.0))).exp()
}
