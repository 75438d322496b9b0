//! Flat key=value run configuration: documented defaults, strict unknown-key
//! rejection, and an echo of the fully resolved config for reproducibility.

use crate::analytics::ScalingLaw;
use crate::routing::{Engine, RelayRule};
use crate::topology::Placement;
use crate::{Result, SimError};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Which engines a command runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineChoice {
    Opportunistic,
    Baseline,
    Both,
}

impl EngineChoice {
    pub fn engines(self) -> Vec<Engine> {
        match self {
            EngineChoice::Opportunistic => vec![Engine::Opportunistic],
            EngineChoice::Baseline => vec![Engine::Baseline],
            EngineChoice::Both => vec![Engine::Opportunistic, Engine::Baseline],
        }
    }
}

/// Fully resolved run configuration. Every field has a documented default;
/// file values override defaults and command-line flags override both.
#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Node count (perfect square for regular placement). Default 1024.
    pub n: usize,
    /// `regular` or `random`. Default regular.
    pub placement: Placement,
    /// Path-loss exponent, > 2. Default 4.
    pub alpha: f64,
    /// Noise power N0. Default 0.25.
    pub noise_power: f64,
    /// SINR decoding threshold. Default 0.4.
    pub eta: f64,
    /// TDMA parameter k (k^2 slots), 3..=5. Default 4.
    pub tdma_k: usize,
    /// `opportunistic`, `baseline`, or `both`. Default both.
    pub engine: EngineChoice,
    /// Delay targets for the sweep. Default 2,4,8.
    pub d_list: Vec<f64>,
    /// Outage budget for find_max_pairs. Default 0.05.
    pub epsilon0: f64,
    /// Trials per final measurement. Default 2000.
    pub trials: u64,
    /// Trials per calibration probe. Default 400.
    pub cal_trials: u64,
    /// Root seed for all substreams. Default 0.
    pub seed: u64,
    /// Grid-side multiplier in engine_grid_side. Default 1.28.
    pub grid_factor: f64,
    /// Baseline grid-side multiplier in engine_grid_side. Default 1.3.
    pub base_grid_factor: f64,
    /// Baseline affine grid-side offset in engine_grid_side. Default -0.8.
    pub base_grid_offset: f64,
    /// Relay tie-break: `uniform` or `closest`. Default closest.
    pub relay_rule: RelayRule,
    /// Row-spanning S-D pairs (regular grid only). Default true.
    pub horizontal: bool,
    /// Pair count for `simulate`. Default 8.
    pub m: usize,
    /// Delay target for `simulate`. Default 4.
    pub d_target: f64,
    /// Per-hop power for `simulate`; 0 = calibrate first. Default 0.
    pub per_hop_power: f64,
    /// Initial M for joint calibration. Default 8.
    pub m_init: usize,
    /// Regime-window epsilon for curve flags. Default 0.05.
    pub regime_epsilon: f64,
    /// All outputs land here. Default `out`.
    pub output_dir: PathBuf,
    /// Leading constants for the theory curves, default 1 each.
    pub constants: BTreeMap<&'static str, f64>,
}

const CONSTANT_KEYS: [(&str, ScalingLaw); 8] = [
    ("c_opp_power", ScalingLaw::OppPower),
    ("c_opp_delay", ScalingLaw::OppDelay),
    ("c_opp_power_refined", ScalingLaw::OppPowerRefined),
    ("c_opp_delay_refined", ScalingLaw::OppDelayRefined),
    ("c_base_power", ScalingLaw::BasePower),
    ("c_base_delay", ScalingLaw::BaseDelay),
    ("c_cutset", ScalingLaw::CutSet),
    ("c_outage_cdf", ScalingLaw::OutageCdf),
];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n: 1024,
            placement: Placement::RegularGrid,
            alpha: 4.0,
            noise_power: 0.25,
            eta: 0.4,
            tdma_k: 4,
            engine: EngineChoice::Both,
            d_list: vec![2.0, 4.0, 8.0],
            epsilon0: 0.05,
            trials: 2000,
            cal_trials: 400,
            seed: 0,
            grid_factor: 1.28,
            base_grid_factor: 1.3,
            base_grid_offset: -0.8,
            relay_rule: RelayRule::ClosestToDestination,
            horizontal: true,
            m: 8,
            d_target: 4.0,
            per_hop_power: 0.0,
            m_init: 8,
            regime_epsilon: 0.05,
            output_dir: PathBuf::from("out"),
            constants: CONSTANT_KEYS.iter().map(|&(k, _)| (k, 1.0)).collect(),
        }
    }
}

fn bad<T>(key: &str, value: &str, want: &str) -> Result<T> {
    Err(SimError::Config(format!(
        "invalid value `{value}` for key `{key}`: expected {want}"
    )))
}

impl RunConfig {
    /// The scaling-law constant for `law`.
    pub fn constant(&self, law: ScalingLaw) -> f64 {
        CONSTANT_KEYS
            .iter()
            .find(|&&(_, l)| l == law)
            .map(|&(k, _)| self.constants[k])
            .unwrap_or(1.0)
    }

    /// Apply one key=value assignment; unknown keys are rejected by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "n" => self.n = v.parse().or_else(|_| bad(key, v, "a positive integer"))?,
            "placement" => {
                self.placement = match v {
                    "regular" => Placement::RegularGrid,
                    "random" => Placement::RandomUniform,
                    _ => return bad(key, v, "`regular` or `random`"),
                }
            }
            "alpha" => self.alpha = v.parse().or_else(|_| bad(key, v, "a number > 2"))?,
            "N0" => self.noise_power = v.parse().or_else(|_| bad(key, v, "a number >= 0"))?,
            "eta" => self.eta = v.parse().or_else(|_| bad(key, v, "a number > 0"))?,
            "tdma_k" => self.tdma_k = v.parse().or_else(|_| bad(key, v, "3, 4 or 5"))?,
            "engine" => {
                self.engine = match v {
                    "opportunistic" => EngineChoice::Opportunistic,
                    "baseline" => EngineChoice::Baseline,
                    "both" => EngineChoice::Both,
                    _ => return bad(key, v, "`opportunistic`, `baseline` or `both`"),
                }
            }
            "D_list" => {
                let mut list = Vec::new();
                for part in v.split(',') {
                    let d: f64 = part
                        .trim()
                        .parse()
                        .or_else(|_| bad(key, v, "comma-separated numbers"))?;
                    list.push(d);
                }
                self.d_list = list;
            }
            "epsilon0" => self.epsilon0 = v.parse().or_else(|_| bad(key, v, "a number in (0,1)"))?,
            "trials" => self.trials = v.parse().or_else(|_| bad(key, v, "a positive integer"))?,
            "cal_trials" => {
                self.cal_trials = v.parse().or_else(|_| bad(key, v, "a positive integer"))?
            }
            "seed" => self.seed = v.parse().or_else(|_| bad(key, v, "a 64-bit integer"))?,
            "grid_factor" => {
                self.grid_factor = v.parse().or_else(|_| bad(key, v, "a number > 0"))?
            }
            "base_grid_factor" => {
                self.base_grid_factor = v.parse().or_else(|_| bad(key, v, "a number > 0"))?
            }
            "base_grid_offset" => {
                self.base_grid_offset = v.parse().or_else(|_| bad(key, v, "a number"))?
            }
            "relay_rule" => {
                self.relay_rule = match v {
                    "uniform" => RelayRule::Uniform,
                    "closest" => RelayRule::ClosestToDestination,
                    _ => return bad(key, v, "`uniform` or `closest`"),
                }
            }
            "horizontal" => {
                self.horizontal = match v {
                    "true" => true,
                    "false" => false,
                    _ => return bad(key, v, "`true` or `false`"),
                }
            }
            "m" => self.m = v.parse().or_else(|_| bad(key, v, "a positive integer"))?,
            "d_target" => self.d_target = v.parse().or_else(|_| bad(key, v, "a number > 0"))?,
            "per_hop_power" => {
                self.per_hop_power = v.parse().or_else(|_| bad(key, v, "a number >= 0"))?
            }
            "m_init" => self.m_init = v.parse().or_else(|_| bad(key, v, "a positive integer"))?,
            "regime_epsilon" => {
                self.regime_epsilon = v.parse().or_else(|_| bad(key, v, "a number in (0, 0.5)"))?
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ if CONSTANT_KEYS.iter().any(|&(k, _)| k == key) => {
                let c: f64 = v.parse().or_else(|_| bad(key, v, "a number > 0"))?;
                let slot = CONSTANT_KEYS.iter().find(|&&(k, _)| k == key).unwrap().0;
                self.constants.insert(slot, c);
            }
            _ => {
                return Err(SimError::Config(format!("unknown config key `{key}`")));
            }
        }
        Ok(())
    }

    /// Parse a flat key=value file body (`#` comments, blank lines allowed)
    /// on top of the defaults already in `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected key=value, got `{line}`", idx + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Cross-field validation beyond per-key parsing.
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 2.0 {
            return Err(SimError::Config(format!(
                "alpha must exceed 2, got {}",
                self.alpha
            )));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0 < 1.0) {
            return Err(SimError::Config(format!(
                "epsilon0 must lie in (0,1), got {}",
                self.epsilon0
            )));
        }
        if 2 * self.m > self.n {
            return Err(SimError::Config(format!(
                "2M <= n required: M={}, n={}",
                self.m, self.n
            )));
        }
        if self.trials == 0 || self.cal_trials == 0 {
            return Err(SimError::Config("trials must be positive".into()));
        }
        if self.d_list.is_empty() {
            return Err(SimError::Config("D_list must be nonempty".into()));
        }
        Ok(())
    }

    /// Render the fully resolved config (canonical key order) for echoing
    /// into the output directory.
    pub fn to_text(&self) -> String {
        let placement = match self.placement {
            Placement::RegularGrid => "regular",
            Placement::RandomUniform => "random",
        };
        let engine = match self.engine {
            EngineChoice::Opportunistic => "opportunistic",
            EngineChoice::Baseline => "baseline",
            EngineChoice::Both => "both",
        };
        let relay = match self.relay_rule {
            RelayRule::Uniform => "uniform",
            RelayRule::ClosestToDestination => "closest",
        };
        let d_list = self
            .d_list
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = format!(
            "n = {}\nplacement = {placement}\nalpha = {}\nN0 = {}\neta = {}\n\
             tdma_k = {}\nengine = {engine}\nD_list = {d_list}\nepsilon0 = {}\n\
             trials = {}\ncal_trials = {}\nseed = {}\ngrid_factor = {}\nbase_grid_factor = {}\nbase_grid_offset = {}\n\
             relay_rule = {relay}\nhorizontal = {}\nm = {}\nd_target = {}\n\
             per_hop_power = {}\nm_init = {}\nregime_epsilon = {}\noutput_dir = {}\n",
            self.n,
            self.alpha,
            self.noise_power,
            self.eta,
            self.tdma_k,
            self.epsilon0,
            self.trials,
            self.cal_trials,
            self.seed,
            self.grid_factor,
            self.base_grid_factor,
            self.base_grid_offset,
            self.horizontal,
            self.m,
            self.d_target,
            self.per_hop_power,
            self.m_init,
            self.regime_epsilon,
            self.output_dir.display(),
        );
        for (key, value) in &self.constants {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }
}
