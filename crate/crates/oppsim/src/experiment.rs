//! Experiment drivers: power calibration to the unit P_r / P_I operating
//! point, supportable-pair search, the power-delay trade-off sweep, and the
//! occupancy / load / interference concentration verifiers.

use crate::channel::{ChannelParams, FadingMode};
use crate::rng::{substream, Stream};
use crate::routing::{run_trial, Engine, RelayRule, TrialContext};
use crate::tdma::TdmaSchedule;
use crate::topology::{
    draw_sd_pairs, horizontal_pair_capacity, place_nodes, paths_per_cell, NetworkLayout,
    Placement, SdRoute,
};
use crate::{Result, SimError};
use rand::Rng;
use rayon::prelude::*;

/// Cells per side for an engine to realize `d_target` hops. The baseline
/// advances one cell per hop and the opportunistic engine 2.5 on average, so
/// a route spanning the grid takes about `g - 1` / `(g - 1)/2.5` hops. The
/// affine offset absorbs the fixed per-route overhead (source and
/// destination columns) that does not scale with the delay target.
pub fn engine_grid_side(
    engine: Engine,
    d_target: f64,
    grid_factor: f64,
    grid_offset: f64,
) -> usize {
    let step = match engine {
        Engine::Opportunistic => 2.5,
        Engine::Baseline => 1.0,
    };
    let raw = (step * grid_factor * d_target + grid_offset).round();
    ((raw.max(0.0) as usize) + 1).max(3)
}

/// Scenario-independent experiment parameters.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub n: usize,
    pub placement: Placement,
    pub alpha: f64,
    pub noise_power: f64,
    pub eta: f64,
    pub tdma_k: usize,
    pub relay_rule: RelayRule,
    pub grid_factor: f64,
    pub base_grid_factor: f64,
    pub base_grid_offset: f64,
    pub horizontal: bool,
    pub seed: u64,
}

/// One concrete simulated setting: spec + engine + delay target, with the
/// node layout and schedule built.
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub engine: Engine,
    pub d_target: f64,
    pub layout: NetworkLayout,
    pub schedule: TdmaSchedule,
    pub params: ChannelParams,
}

impl ScenarioSpec {
    pub fn scenario(&self, engine: Engine, d_target: f64) -> Result<Scenario> {
        let (gf, off) = match engine {
            Engine::Opportunistic => (self.grid_factor, 0.0),
            Engine::Baseline => (self.base_grid_factor, self.base_grid_offset),
        };
        let g = engine_grid_side(engine, d_target, gf, off);
        self.scenario_with_grid(engine, d_target, g)
    }

    pub fn scenario_with_grid(
        &self,
        engine: Engine,
        d_target: f64,
        g: usize,
    ) -> Result<Scenario> {
        let positions = place_nodes(self.n, self.placement, self.seed)?;
        let layout = NetworkLayout::build(self.n, self.placement, positions, g);
        let params = ChannelParams {
            alpha: self.alpha,
            noise_power: self.noise_power,
            fading: match engine {
                Engine::Opportunistic => FadingMode::Rayleigh,
                Engine::Baseline => FadingMode::None,
            },
            eta: self.eta,
        };
        params.validate()?;
        Ok(Scenario {
            spec: self.clone(),
            engine,
            d_target,
            layout,
            schedule: TdmaSchedule::new(self.tdma_k)?,
            params,
        })
    }

}

impl Scenario {
    /// Largest M the pair-drawing mode supports on this layout.
    pub fn max_pairs(&self) -> usize {
        if self.spec.horizontal {
            horizontal_pair_capacity(&self.layout).min(self.spec.n / 2)
        } else {
            self.spec.n / 2
        }
    }
}

/// Aggregate statistics over one probe (fixed M, fixed power, many trials).
#[derive(Debug, Clone)]
pub struct Measurement {
    pub m: usize,
    pub trials: u64,
    pub delivered: usize,
    pub packets: usize,
    pub delivery_rate: f64,
    pub outage_rate: f64,
    /// Mean hops over delivered packets; falls back to the delay target when
    /// nothing was delivered.
    pub d_measured: f64,
    /// Mean received signal power at chosen relays.
    pub mean_p_r: f64,
    /// Mean interference power at the hops' reference receivers, free of
    /// success conditioning.
    pub mean_p_i: f64,
    /// Per-trial delivered fraction, for bootstrap intervals.
    pub per_trial_delivery: Vec<f64>,
    /// Raw per-(receiver, block) interference samples when requested.
    pub interference_samples: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone)]
struct TrialAgg {
    delivered: usize,
    packets: usize,
    hops_delivered: usize,
    p_r_sum: f64,
    p_i_sum: f64,
    relay_hops: usize,
    interference_hops: usize,
    samples: Vec<f64>,
}

/// Run `trials` independent trials at fixed (M, power) and aggregate.
pub fn measure(
    sc: &Scenario,
    m: usize,
    per_hop_power: f64,
    trials: u64,
    keep_samples: bool,
) -> Result<Measurement> {
    let per_trial: Vec<TrialAgg> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<TrialAgg> {
            let mut prng = substream(sc.spec.seed, Stream::Pairs, &[t]);
            let pairs = draw_sd_pairs(&sc.layout, m, sc.spec.horizontal, &mut prng)?;
            let routes: Vec<SdRoute> = pairs.into_iter().map(SdRoute::build).collect();
            let ctx = TrialContext {
                layout: &sc.layout,
                routes: &routes,
                schedule: sc.schedule,
                params: sc.params,
                per_hop_power,
                engine: sc.engine,
                relay_rule: sc.spec.relay_rule,
                root_seed: sc.spec.seed,
                trial: t,
            };
            let mut agg = TrialAgg::default();
            for r in run_trial(&ctx)? {
                agg.packets += 1;
                if r.delivered {
                    agg.delivered += 1;
                    agg.hops_delivered += r.hops_taken;
                }
                for o in &r.per_hop {
                    if let Some(p_i) = o.reference_interference {
                        agg.p_i_sum += p_i;
                        agg.interference_hops += 1;
                        if keep_samples {
                            agg.samples.push(p_i);
                        }
                    }
                    // Received power: unconditioned at the predetermined
                    // receiver when one exists (baseline), otherwise at the
                    // selected relay (opportunistic, defined only on success).
                    if let Some(p_r) = o.reference_signal {
                        agg.p_r_sum += p_r;
                        agg.relay_hops += 1;
                        continue;
                    }
                    if o.chosen_relay.is_none() {
                        continue;
                    }
                    let p_r = o.measured_sinr
                        * (sc.params.noise_power + o.measured_interference);
                    agg.p_r_sum += p_r;
                    agg.relay_hops += 1;
                }
            }
            Ok(agg)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut total = TrialAgg::default();
    let mut per_trial_delivery = Vec::with_capacity(per_trial.len());
    for t in &per_trial {
        total.delivered += t.delivered;
        total.packets += t.packets;
        total.hops_delivered += t.hops_delivered;
        total.p_r_sum += t.p_r_sum;
        total.p_i_sum += t.p_i_sum;
        total.relay_hops += t.relay_hops;
        total.interference_hops += t.interference_hops;
        per_trial_delivery.push(if t.packets > 0 {
            t.delivered as f64 / t.packets as f64
        } else {
            0.0
        });
    }
    let delivery_rate = if total.packets > 0 {
        total.delivered as f64 / total.packets as f64
    } else {
        0.0
    };
    Ok(Measurement {
        m,
        trials,
        delivered: total.delivered,
        packets: total.packets,
        delivery_rate,
        outage_rate: 1.0 - delivery_rate,
        d_measured: if total.delivered > 0 {
            total.hops_delivered as f64 / total.delivered as f64
        } else {
            sc.d_target
        },
        mean_p_r: if total.relay_hops > 0 {
            total.p_r_sum / total.relay_hops as f64
        } else {
            0.0
        },
        mean_p_i: if total.interference_hops > 0 {
            total.p_i_sum / total.interference_hops as f64
        } else {
            0.0
        },
        per_trial_delivery,
        interference_samples: keep_samples.then(|| {
            per_trial.into_iter().flat_map(|t| t.samples).collect()
        }),
    })
}

/// Per-hop power such that the mean received signal power at chosen relays
/// is 1 +/- tolerance. Geometric bisection; mean P_r is monotone in power
/// under the fixed substream seeds.
pub fn calibrate_power(
    sc: &Scenario,
    m: usize,
    tolerance: f64,
    max_iters: usize,
    trials: u64,
) -> Result<(f64, Measurement)> {
    if tolerance <= 0.0 {
        return Err(SimError::Config("calibration tolerance must be > 0".into()));
    }
    // Bracket upward from a deliberately tiny power.
    let mut hi = 1e-12;
    let mut meas_hi = measure(sc, m, hi, trials, false)?;
    let mut guard = 0;
    while meas_hi.mean_p_r < 1.0 {
        guard += 1;
        if guard > 80 {
            return Err(SimError::Calibration(format!(
                "mean P_r stuck at {} after raising power to {hi:e}",
                meas_hi.mean_p_r
            )));
        }
        hi *= 4.0;
        meas_hi = measure(sc, m, hi, trials, false)?;
    }
    if (meas_hi.mean_p_r - 1.0).abs() <= tolerance {
        return Ok((hi, meas_hi));
    }
    let mut lo = hi / 4.0;
    for _ in 0..max_iters {
        let mid = (lo * hi).sqrt();
        let meas = measure(sc, m, mid, trials, false)?;
        if (meas.mean_p_r - 1.0).abs() <= tolerance {
            return Ok((mid, meas));
        }
        if meas.mean_p_r < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SimError::Calibration(format!(
        "power bisection did not reach mean P_r = 1 +/- {tolerance} in {max_iters} \
         iterations (bracket [{lo:e}, {hi:e}])"
    )))
}

/// Jointly hit mean P_r = 1 (inner power bisection) and mean P_I = 1 (outer
/// adjustment of M, which interference tracks linearly). Returns the power,
/// the balancing M and the calibration measurement.
pub fn joint_calibrate(
    sc: &Scenario,
    m_init: usize,
    pr_tolerance: f64,
    pi_tolerance: f64,
    trials: u64,
    max_outer: usize,
) -> Result<(f64, usize, Measurement)> {
    let m_max = sc.max_pairs();
    let mut m = m_init.clamp(2, m_max);
    let mut visited: Vec<usize> = Vec::new();
    let mut best: Option<(f64, f64, usize, Measurement)> = None;
    // Bracket [lo, hi] with mean P_I below 1 at lo and above 1 at hi; once
    // both sides are probed the search bisects, which is immune to the
    // over/undershoot cycles the proportional update can fall into.
    let mut lo: Option<usize> = None;
    let mut hi: Option<usize> = None;
    for _ in 0..max_outer {
        visited.push(m);
        let (p, meas) = calibrate_power(sc, m, pr_tolerance, 60, trials)?;
        let gap = (meas.mean_p_i - 1.0).abs();
        if gap <= pi_tolerance {
            return Ok((p, m, meas));
        }
        if best.as_ref().map_or(true, |b| gap < b.0) {
            best = Some((gap, p, m, meas.clone()));
        }
        if meas.mean_p_i < 1.0 {
            lo = Some(lo.map_or(m, |v: usize| v.max(m)));
        } else {
            hi = Some(hi.map_or(m, |v: usize| v.min(m)));
        }
        let mut next = match (lo, hi) {
            (Some(l), Some(h)) => {
                if h <= l + 1 {
                    break;
                }
                (l + h) / 2
            }
            // Unbracketed: interference from the M-1 other routes scales
            // roughly linearly with their count, so (m-1)/mean_p_i projects
            // the balancing M.
            _ => {
                if meas.mean_p_i > 0.0 {
                    (1.0 + (m as f64 - 1.0) / meas.mean_p_i).round() as usize
                } else {
                    m_max
                }
            }
        };
        next = next.clamp(2, m_max);
        if next == m {
            next = if meas.mean_p_i > 1.0 { m - 1 } else { m + 1 }.clamp(2, m_max);
        }
        if visited.contains(&next) {
            break;
        }
        m = next;
    }
    let (gap, p, m, meas) = best.unwrap();
    Err(SimError::Calibration(format!(
        "M adjustment could not bring mean P_I within 1 +/- {pi_tolerance}; closest was \
         {:.4} at M = {m} (gap {gap:.4}, power {p:e}, visited {visited:?})",
        meas.mean_p_i
    )))
}

/// Largest M whose per-pair delivery rate stays >= 1 - epsilon0 with power
/// recalibrated per probe. Returns 0 when even M = 1 is infeasible. The
/// monotone-in-M assumption is validated on the two bracketing probes.
pub fn find_max_pairs(
    sc: &Scenario,
    epsilon0: f64,
    trials: u64,
    cal_trials: u64,
) -> Result<usize> {
    if !(0.0..1.0).contains(&epsilon0) || epsilon0 == 0.0 {
        return Err(SimError::Config(format!(
            "epsilon0 must be in (0, 1), got {epsilon0}"
        )));
    }
    let feasible = |m: usize| -> bool {
        calibrate_power(sc, m, 0.05, 60, cal_trials)
            .and_then(|(p, _)| measure(sc, m, p, trials, false))
            .map(|meas| meas.delivery_rate >= 1.0 - epsilon0)
            .unwrap_or(false)
    };
    if !feasible(1) {
        return Ok(0);
    }
    let mut lo = 1;
    let mut hi = sc.max_pairs();
    if feasible(hi) {
        return Ok(hi);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Bracketing probes: lo feasible, lo + 1 = hi infeasible, by construction.
    Ok(lo)
}

/// Percentile bootstrap 95% interval for the mean of `values`.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = substream(seed, Stream::Bootstrap, &[values.len() as u64]);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let sum: f64 = (0..values.len())
                .map(|_| values[rng.gen_range(0..values.len())])
                .sum();
            sum / values.len() as f64
        })
        .collect();
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| means[((means.len() - 1) as f64 * q).round() as usize];
    (pick(0.025), pick(0.975))
}

/// One accepted operating point of the trade-off sweep.
#[derive(Debug, Clone)]
pub struct OperatingPoint {
    pub engine: Engine,
    pub n: usize,
    pub alpha: f64,
    pub d_target: f64,
    pub d_measured: f64,
    pub m_star: usize,
    pub per_hop_power: f64,
    pub p_total: f64,
    pub mean_p_i: f64,
    pub mean_p_r: f64,
    pub outage: f64,
    pub throughput: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Sweep result for one (engine, delay target), successful or not.
#[derive(Debug, Clone)]
pub struct TradeoffRecord {
    pub engine: Engine,
    pub d_target: f64,
    pub point: Option<OperatingPoint>,
    pub error: Option<String>,
}

/// Tunables of the sweep beyond the scenario itself.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub trials: u64,
    pub cal_trials: u64,
    pub pr_tolerance: f64,
    pub pi_tolerance: f64,
    pub m_init: usize,
    pub bootstrap_resamples: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            trials: 2000,
            cal_trials: 400,
            pr_tolerance: 0.05,
            pi_tolerance: 0.10,
            m_init: 10,
            bootstrap_resamples: 1000,
        }
    }
}

/// Refine a cheaply calibrated operating point at the full trial budget:
/// multiplicative power updates hold mean P_r at 1 (P_r is monotone in p),
/// and the outer loop nudges M whenever mean P_I drifts out of tolerance.
/// Returns the final full-budget measurement, comfortably inside both
/// tolerances (half of pr_tolerance, 80% of pi_tolerance).
pub fn polish_operating_point(
    sc: &Scenario,
    m_init: usize,
    p_init: f64,
    trials: u64,
    pr_tolerance: f64,
    pi_tolerance: f64,
) -> Result<(f64, usize, Measurement)> {
    let m_max = sc.max_pairs();
    let mut m = m_init.clamp(2, m_max);
    let mut p = p_init;
    let mut visited: Vec<usize> = Vec::new();
    let mut best: Option<(f64, f64, usize, Measurement)> = None;
    // Same bracket-then-bisect scheme as `joint_calibrate`, now at the full
    // trial budget: lo holds the largest M seen with mean P_I below 1, hi the
    // smallest above.
    let mut lo: Option<usize> = None;
    let mut hi: Option<usize> = None;
    for _ in 0..12 {
        visited.push(m);
        let mut meas = measure(sc, m, p, trials, false)?;
        for _ in 0..10 {
            if (meas.mean_p_r - 1.0).abs() <= 0.5 * pr_tolerance {
                break;
            }
            if !(meas.mean_p_r.is_finite() && meas.mean_p_r > 0.0) {
                return Err(SimError::Calibration(format!(
                    "mean P_r unusable ({}) at M = {m}, power = {p:e}",
                    meas.mean_p_r
                )));
            }
            p /= meas.mean_p_r;
            meas = measure(sc, m, p, trials, false)?;
        }
        if (meas.mean_p_r - 1.0).abs() > pr_tolerance {
            return Err(SimError::Calibration(format!(
                "power refinement stalled at mean P_r = {} (M = {m})",
                meas.mean_p_r
            )));
        }
        let gap = (meas.mean_p_i - 1.0).abs();
        if gap <= 0.8 * pi_tolerance {
            return Ok((p, m, meas));
        }
        if best.as_ref().map_or(true, |b| gap < b.0) {
            best = Some((gap, p, m, meas.clone()));
        }
        if meas.mean_p_i < 1.0 {
            lo = Some(lo.map_or(m, |v: usize| v.max(m)));
        } else {
            hi = Some(hi.map_or(m, |v: usize| v.min(m)));
        }
        let mut next = match (lo, hi) {
            (Some(l), Some(h)) => {
                if h <= l + 1 {
                    break;
                }
                (l + h) / 2
            }
            _ => ((1.0 + (m as f64 - 1.0) / meas.mean_p_i).round() as usize).clamp(2, m_max),
        };
        next = next.clamp(2, m_max);
        if next == m {
            next = if meas.mean_p_i > 1.0 { m - 1 } else { m + 1 }.clamp(2, m_max);
        }
        if visited.contains(&next) {
            break;
        }
        m = next;
    }
    if let Some((gap, p, m, meas)) = best {
        if gap <= pi_tolerance {
            return Ok((p, m, meas));
        }
        return Err(SimError::Calibration(format!(
            "M refinement stalled at mean P_I = {} (M = {m}, max {m_max})",
            meas.mean_p_i
        )));
    }
    Err(SimError::Calibration(
        "operating-point refinement did not converge".into(),
    ))
}

/// Sweep the power-delay trade-off: for each (engine, D) jointly calibrate
/// power and M to the unit P_r / P_I point, then measure the operating point.
/// Per-point failures are recorded and the sweep continues. Records are
/// sorted by engine, then by M*.
pub fn run_tradeoff_sweep(
    spec: &ScenarioSpec,
    engines: &[Engine],
    d_list: &[f64],
    settings: &SweepSettings,
) -> Vec<TradeoffRecord> {
    let mut records = Vec::new();
    for &engine in engines {
        for &d in d_list {
            let attempt = (|| -> Result<OperatingPoint> {
                let sc = spec.scenario(engine, d)?;
                // The cheap phase only needs to land near the operating
                // point; the polish pass below enforces the real tolerances
                // at the full trial budget.
                let (p0, m0, _) = joint_calibrate(
                    &sc,
                    settings.m_init,
                    settings.pr_tolerance,
                    (2.0 * settings.pi_tolerance).max(0.25),
                    settings.cal_trials,
                    24,
                )?;
                let (p, m, meas) = polish_operating_point(
                    &sc,
                    m0,
                    p0,
                    settings.trials,
                    settings.pr_tolerance,
                    settings.pi_tolerance,
                )?;
                let outages: Vec<f64> = meas
                    .per_trial_delivery
                    .iter()
                    .map(|d| 1.0 - d)
                    .collect();
                let (ci_low, ci_high) =
                    bootstrap_ci(&outages, settings.bootstrap_resamples, spec.seed);
                Ok(OperatingPoint {
                    engine,
                    n: spec.n,
                    alpha: spec.alpha,
                    d_target: d,
                    d_measured: meas.d_measured,
                    m_star: m,
                    per_hop_power: p,
                    p_total: p * meas.d_measured,
                    mean_p_i: meas.mean_p_i,
                    mean_p_r: meas.mean_p_r,
                    outage: meas.outage_rate,
                    throughput: meas.delivery_rate * m as f64,
                    ci_low,
                    ci_high,
                })
            })();
            records.push(match attempt {
                Ok(point) => TradeoffRecord {
                    engine,
                    d_target: d,
                    point: Some(point),
                    error: None,
                },
                Err(e) => TradeoffRecord {
                    engine,
                    d_target: d,
                    point: None,
                    error: Some(e.to_string()),
                },
            });
        }
    }
    records.sort_by(|a, b| {
        let key = |r: &TradeoffRecord| {
            (
                r.engine.name(),
                r.point.as_ref().map_or(usize::MAX, |p| p.m_star),
                r.d_target as u64,
            )
        };
        key(a).cmp(&key(b))
    });
    records
}

/// Plain-text verdicts for the headline sweep trends.
pub fn monotonicity_summary(records: &[TradeoffRecord]) -> String {
    let mut out = String::new();
    for engine in [Engine::Opportunistic, Engine::Baseline] {
        let mut pts: Vec<&OperatingPoint> = records
            .iter()
            .filter(|r| r.engine == engine)
            .filter_map(|r| r.point.as_ref())
            .collect();
        if pts.is_empty() {
            continue;
        }
        pts.sort_by(|a, b| a.d_target.partial_cmp(&b.d_target).unwrap());
        let m_up = pts.windows(2).all(|w| w[1].m_star > w[0].m_star);
        let mut by_m = pts.clone();
        by_m.sort_by_key(|p| p.m_star);
        let p_down = by_m.windows(2).all(|w| w[1].p_total < w[0].p_total);
        out.push_str(&format!(
            "{}: M* strictly increasing in D: {}; P_total strictly decreasing in M*: {}\n",
            engine.name(),
            if m_up { "yes" } else { "no" },
            if p_down { "yes" } else { "no" },
        ));
    }
    for (opp, base) in matched_delay_pairs(records) {
        out.push_str(&format!(
            "matched delay ~{:.2}: opportunistic P_total {:.4e} {} baseline {:.4e}\n",
            opp.d_measured,
            opp.p_total,
            if opp.p_total < base.p_total { "<" } else { ">=" },
            base.p_total,
        ));
    }
    out
}

/// Pairs of accepted operating points whose measured delays agree within 10%.
pub fn matched_delay_pairs(
    records: &[TradeoffRecord],
) -> Vec<(OperatingPoint, OperatingPoint)> {
    let of = |engine: Engine| -> Vec<&OperatingPoint> {
        records
            .iter()
            .filter(|r| r.engine == engine)
            .filter_map(|r| r.point.as_ref())
            .collect()
    };
    let mut pairs = Vec::new();
    for opp in of(Engine::Opportunistic) {
        for base in of(Engine::Baseline) {
            let ratio = opp.d_measured / base.d_measured;
            if (0.9..=1.1).contains(&ratio) {
                pairs.push((opp.clone(), base.clone()));
            }
        }
    }
    pairs
}

/// Outcome of one concentration check.
#[derive(Debug, Clone)]
pub struct ConcentrationReport {
    pub pass_fraction: f64,
    pub empirical_mean: f64,
    pub bound: f64,
    pub delta: f64,
    pub instances: usize,
}

/// Per-cell occupancy concentration: over `seeds` random placements, the
/// fraction of seeds in which every cell count lies within (1 +/- delta) of
/// the expected occupancy n / g^2.
pub fn verify_lemma1(
    n: usize,
    g: usize,
    seeds: u64,
    delta: f64,
    root_seed: u64,
) -> Result<ConcentrationReport> {
    if !(0.0..=1.0).contains(&delta) || delta == 0.0 {
        return Err(SimError::Config("delta must be in (0, 1]".into()));
    }
    let mean = n as f64 / (g * g) as f64;
    let (lo, hi) = ((1.0 - delta) * mean, (1.0 + delta) * mean);
    let mut passes = 0;
    for s in 0..seeds {
        let mut srng = substream(root_seed, Stream::Topology, &[s]);
        let seed: u64 = srng.gen();
        let positions = place_nodes(n, Placement::RandomUniform, seed)?;
        let layout = NetworkLayout::build(n, Placement::RandomUniform, positions, g);
        if layout
            .cell_index
            .iter()
            .all(|c| (lo..=hi).contains(&(c.len() as f64)))
        {
            passes += 1;
        }
    }
    Ok(ConcentrationReport {
        pass_fraction: passes as f64 / seeds as f64,
        empirical_mean: mean,
        bound: hi,
        delta,
        instances: seeds as usize,
    })
}

/// Per-cell route load concentration: over seeds, the fraction in which the
/// maximum paths-per-cell lies within (1 +/- delta) of the across-seed mean
/// of that maximum.
pub fn verify_lemma2(
    n: usize,
    g: usize,
    m: usize,
    seeds: u64,
    delta: f64,
    root_seed: u64,
    placement: Placement,
    horizontal: bool,
) -> Result<ConcentrationReport> {
    if !(0.0..=1.0).contains(&delta) || delta == 0.0 {
        return Err(SimError::Config("delta must be in (0, 1]".into()));
    }
    let mut maxima = Vec::with_capacity(seeds as usize);
    for s in 0..seeds {
        let mut srng = substream(root_seed, Stream::Topology, &[s]);
        let seed: u64 = srng.gen();
        let positions = place_nodes(n, placement, seed)?;
        let layout = NetworkLayout::build(n, placement, positions, g);
        let mut prng = substream(root_seed, Stream::Pairs, &[s]);
        let pairs = draw_sd_pairs(&layout, m, horizontal, &mut prng)?;
        let routes: Vec<SdRoute> = pairs.into_iter().map(SdRoute::build).collect();
        let max = paths_per_cell(&routes, g).into_iter().max().unwrap_or(0);
        maxima.push(max as f64);
    }
    let mean = maxima.iter().sum::<f64>() / maxima.len() as f64;
    let (lo, hi) = ((1.0 - delta) * mean, (1.0 + delta) * mean);
    let passes = maxima.iter().filter(|&&x| (lo..=hi).contains(&x)).count();
    Ok(ConcentrationReport {
        pass_fraction: passes as f64 / maxima.len() as f64,
        empirical_mean: mean,
        bound: hi,
        delta,
        instances: maxima.len(),
    })
}

/// Interference concentration: run a calibrated scenario and report the
/// fraction of per-(receiver, block) P_I samples at or below (1 + delta)
/// times their mean (upper side only).
pub fn verify_lemma3(
    spec: &ScenarioSpec,
    d_target: f64,
    m: usize,
    trials: u64,
    delta: f64,
) -> Result<ConcentrationReport> {
    if delta <= 0.0 {
        return Err(SimError::Config("delta must be > 0".into()));
    }
    let sc = spec.scenario(Engine::Opportunistic, d_target)?;
    let (p, _) = calibrate_power(&sc, m, 0.05, 60, trials.min(400))?;
    let meas = measure(&sc, m, p, trials, true)?;
    let samples = meas.interference_samples.unwrap();
    if samples.is_empty() {
        return Err(SimError::Verification(
            "no interference samples collected".into(),
        ));
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    let bound = (1.0 + delta) * mean;
    let passes = samples.iter().filter(|&&x| x <= bound).count();
    Ok(ConcentrationReport {
        pass_fraction: passes as f64 / samples.len() as f64,
        empirical_mean: mean,
        bound,
        delta,
        instances: samples.len(),
    })
}
