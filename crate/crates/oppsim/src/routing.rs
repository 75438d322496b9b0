//! Packet delivery over a route: opportunistic Mode 1 / Mode 2 hops and the
//! deterministic baseline, executed under the TDMA slot schedule with
//! saturated cross-traffic interference.
//!
//! Interference model: traffic is saturated, so every route keeps one packet
//! in flight at each hop position. Each position contributes one transmitter
//! (the route's "pipeline" stand-in node in that hop's from-cell) whenever
//! that cell's slot is active. The tracked packet's own current relay replaces
//! its route's pipeline entry at the hop being executed, and a route never
//! interferes with itself.

use crate::channel::{draw_block_fading, path_gain, ChannelParams, ChannelSample};
use crate::rng::{substream, Stream};
use crate::topology::{Cell, HopMode, NetworkLayout, Point, SdRoute};
use crate::tdma::TdmaSchedule;
use crate::{Result, SimError};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Routing engine under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Opportunistic,
    Baseline,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Opportunistic => "opportunistic",
            Engine::Baseline => "baseline",
        }
    }
}

/// Tie-break rule when several decoders are available.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelayRule {
    Uniform,
    ClosestToDestination,
}

/// Outcome of one hop attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct HopOutcome {
    pub hop_index: usize,
    pub decoders: Vec<usize>,
    pub chosen_relay: Option<usize>,
    pub outage: bool,
    pub candidate_count: usize,
    pub measured_sinr: f64,
    pub measured_interference: f64,
    /// Interference power at the hop's reference receiver (the predetermined
    /// relay for the baseline, the node nearest the target-cell center for
    /// opportunistic hops, the destination for Mode 2 Step 2), recorded
    /// whether or not the hop decoded. Unlike `measured_interference` this is
    /// free of success-conditioning bias and is what calibration targets.
    pub reference_interference: Option<f64>,
    /// Received signal power at the predetermined receiver, recorded whether
    /// or not the hop decoded. Only baseline hops have a predetermined
    /// receiver; opportunistic hops measure received power at the selected
    /// relay instead (there is no receiver when nobody decodes).
    pub reference_signal: Option<f64>,
}

impl HopOutcome {
    fn outage(hop_index: usize) -> Self {
        HopOutcome {
            hop_index,
            decoders: Vec::new(),
            chosen_relay: None,
            outage: true,
            candidate_count: 0,
            measured_sinr: 0.0,
            measured_interference: 0.0,
            reference_interference: None,
            reference_signal: None,
        }
    }
}

/// Fate of one tracked packet.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketResult {
    pub pair: usize,
    pub delivered: bool,
    pub hops_taken: usize,
    pub outage_hop: Option<usize>,
    pub per_hop: Vec<HopOutcome>,
}

/// Signal SINR and interference power at `rx` for the link from `tx`, with
/// every other node of `co_active` (minus `rx` itself) interfering.
pub fn link_sinr(
    rx: usize,
    tx: usize,
    co_active: &[usize],
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
) -> Result<(f64, f64)> {
    let p_rx = positions[rx];
    let signal = sample.gain(tx, rx)
        * path_gain(positions[tx].dist(&p_rx), params.alpha)?
        * per_hop_power;
    let mut interference = 0.0;
    for &i in co_active {
        if i == tx || i == rx {
            continue;
        }
        interference += sample.gain(i, rx)
            * path_gain(positions[i].dist(&p_rx), params.alpha)?
            * per_hop_power;
    }
    Ok((signal / (params.noise_power + interference), interference))
}

/// A node that decoded the packet, with its link statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub node: usize,
    pub sinr: f64,
    pub interference: f64,
}

/// Nodes of `targets` that decode `tx`'s packet: SINR >= eta and `tx` is the
/// strongest of the transmitters co-located in its cell (`co_located`,
/// excluding `tx`). Nodes that are themselves transmitting, the transmitter
/// and `exclude` are never decoders.
#[allow(clippy::too_many_arguments)]
pub fn decode_set(
    tx: usize,
    targets: &[usize],
    co_active: &[usize],
    co_located: &[usize],
    exclude: Option<usize>,
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
) -> Result<Vec<Decoded>> {
    let mut decoders = Vec::new();
    'next: for &k in targets {
        if k == tx || Some(k) == exclude || co_active.contains(&k) {
            continue;
        }
        let (sinr, interference) =
            link_sinr(k, tx, co_active, per_hop_power, sample, positions, params)?;
        if sinr < params.eta {
            continue;
        }
        for &t in co_located {
            if t == tx {
                continue;
            }
            let (other, _) =
                link_sinr(k, t, co_active, per_hop_power, sample, positions, params)?;
            if other > sinr {
                continue 'next;
            }
        }
        decoders.push(Decoded {
            node: k,
            sinr,
            interference,
        });
    }
    Ok(decoders)
}

fn pick_relay(
    decoders: &[Decoded],
    rule: RelayRule,
    destination: usize,
    positions: &[Point],
    rng: &mut ChaCha8Rng,
) -> Decoded {
    debug_assert!(!decoders.is_empty());
    match rule {
        RelayRule::Uniform => decoders[rng.gen_range(0..decoders.len())],
        RelayRule::ClosestToDestination => *decoders
            .iter()
            .min_by(|a, b| {
                let dest_pos = positions[destination];
                let da = positions[a.node].dist(&dest_pos);
                let db = positions[b.node].dist(&dest_pos);
                da.partial_cmp(&db).unwrap().then(a.node.cmp(&b.node))
            })
            .unwrap(),
    }
}

/// Mode 1 hop: decode in the target cell, then hand the packet to one decoder.
#[allow(clippy::too_many_arguments)]
pub fn mode1_hop(
    hop_index: usize,
    tx: usize,
    targets: &[usize],
    co_active: &[usize],
    co_located: &[usize],
    destination: usize,
    rule: RelayRule,
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
    rng: &mut ChaCha8Rng,
) -> Result<HopOutcome> {
    let decoders = decode_set(
        tx,
        targets,
        co_active,
        co_located,
        Some(destination),
        per_hop_power,
        sample,
        positions,
        params,
    )?;
    if decoders.is_empty() {
        return Ok(HopOutcome::outage(hop_index));
    }
    let chosen = pick_relay(&decoders, rule, destination, positions, rng);
    Ok(HopOutcome {
        hop_index,
        decoders: decoders.iter().map(|d| d.node).collect(),
        chosen_relay: Some(chosen.node),
        outage: false,
        candidate_count: decoders.len(),
        measured_sinr: chosen.sinr,
        measured_interference: chosen.interference,
        reference_interference: None,
        reference_signal: None,
    })
}

/// Mode 2 Step 1: decode in cell F, then keep one decoder per sub-cell of a
/// ceil(m^(1/4)) x ceil(m^(1/4)) partition of F (m = occupancy of F). Returns
/// the hop record and the candidate relay set.
#[allow(clippy::too_many_arguments)]
pub fn mode2_step1(
    hop_index: usize,
    tx: usize,
    cell_f: Cell,
    g: usize,
    targets: &[usize],
    co_active: &[usize],
    co_located: &[usize],
    destination: usize,
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
    rng: &mut ChaCha8Rng,
) -> Result<(HopOutcome, Vec<usize>)> {
    let decoders = decode_set(
        tx,
        targets,
        co_active,
        co_located,
        Some(destination),
        per_hop_power,
        sample,
        positions,
        params,
    )?;
    if decoders.is_empty() {
        return Ok((HopOutcome::outage(hop_index), Vec::new()));
    }
    let q = (targets.len() as f64).powf(0.25).ceil().max(1.0) as usize;
    let side = 1.0 / g as f64;
    let (x0, y0) = (cell_f.col as f64 * side, cell_f.row as f64 * side);
    let sub_of = |node: usize| -> usize {
        let p = positions[node];
        let sx = (((p.x - x0) / side * q as f64) as usize).min(q - 1);
        let sy = (((p.y - y0) / side * q as f64) as usize).min(q - 1);
        sy * q + sx
    };
    let mut by_sub: BTreeMap<usize, Vec<Decoded>> = BTreeMap::new();
    for d in &decoders {
        by_sub.entry(sub_of(d.node)).or_default().push(*d);
    }
    let mut candidates = Vec::new();
    let mut best = decoders[0];
    for group in by_sub.values() {
        let pick = group[rng.gen_range(0..group.len())];
        candidates.push(pick.node);
        if pick.sinr > best.sinr {
            best = pick;
        }
    }
    Ok((
        HopOutcome {
            hop_index,
            decoders: decoders.iter().map(|d| d.node).collect(),
            chosen_relay: None,
            outage: false,
            candidate_count: decoders.len(),
            measured_sinr: best.sinr,
            measured_interference: best.interference,
            reference_interference: None,
            reference_signal: None,
        },
        candidates,
    ))
}

/// Mode 2 Step 2: the destination probes the candidates and takes delivery
/// from one whose last-hop SINR clears the threshold. An empty candidate set
/// is an outage and consumes no randomness.
#[allow(clippy::too_many_arguments)]
pub fn mode2_step2(
    hop_index: usize,
    candidates: &[usize],
    destination: usize,
    co_active: &[usize],
    rule: RelayRule,
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
    rng: &mut ChaCha8Rng,
) -> Result<HopOutcome> {
    if candidates.is_empty() {
        return Ok(HopOutcome::outage(hop_index));
    }
    let mut eligible = Vec::new();
    for &c in candidates {
        let (sinr, interference) = link_sinr(
            destination,
            c,
            co_active,
            per_hop_power,
            sample,
            positions,
            params,
        )?;
        if sinr >= params.eta {
            eligible.push(Decoded {
                node: c,
                sinr,
                interference,
            });
        }
    }
    if eligible.is_empty() {
        return Ok(HopOutcome::outage(hop_index));
    }
    let chosen = pick_relay(&eligible, rule, destination, positions, rng);
    Ok(HopOutcome {
        hop_index,
        decoders: eligible.iter().map(|d| d.node).collect(),
        chosen_relay: Some(chosen.node),
        outage: false,
        candidate_count: eligible.len(),
        measured_sinr: chosen.sinr,
        measured_interference: chosen.interference,
        reference_interference: None,
        reference_signal: None,
    })
}

/// Non-opportunistic hop to a pre-selected relay. Deterministic when the
/// fading mode is None.
#[allow(clippy::too_many_arguments)]
pub fn baseline_hop(
    hop_index: usize,
    tx: usize,
    rx: usize,
    co_active: &[usize],
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
) -> Result<HopOutcome> {
    let (sinr, interference) =
        link_sinr(rx, tx, co_active, per_hop_power, sample, positions, params)?;
    // The baseline receiver is predetermined, so received signal power is
    // well defined even when the hop fails the threshold.
    let signal = sinr * (params.noise_power + interference);
    if sinr < params.eta {
        return Ok(HopOutcome {
            measured_sinr: sinr,
            measured_interference: interference,
            reference_signal: Some(signal),
            ..HopOutcome::outage(hop_index)
        });
    }
    Ok(HopOutcome {
        hop_index,
        decoders: vec![rx],
        chosen_relay: Some(rx),
        outage: false,
        candidate_count: 1,
        measured_sinr: sinr,
        measured_interference: interference,
        reference_interference: None,
        reference_signal: Some(signal),
    })
}

#[derive(Debug, Clone, Copy)]
pub enum PlanKind {
    Opportunistic(HopMode),
    Baseline { rx: Option<usize> },
}

#[derive(Debug, Clone, Copy)]
pub struct PlannedHop {
    pub from_cell: Cell,
    pub to_cell: Cell,
    pub kind: PlanKind,
}

/// Total interference power at `rx` from every co-active transmitter other
/// than `rx` itself (the caller's own transmitters must already be filtered
/// out of `co_active`).
fn interference_power(
    rx: usize,
    co_active: &[usize],
    per_hop_power: f64,
    sample: &ChannelSample,
    positions: &[Point],
    params: &ChannelParams,
) -> Result<f64> {
    let p_rx = positions[rx];
    let mut total = 0.0;
    for &i in co_active {
        if i == rx {
            continue;
        }
        total += sample.gain(i, rx)
            * path_gain(positions[i].dist(&p_rx), params.alpha)?
            * per_hop_power;
    }
    Ok(total)
}

fn nearest_to_center(layout: &NetworkLayout, cell: Cell) -> Option<usize> {
    let center = cell.center(layout.cells_per_side);
    layout
        .nodes_in(cell)
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let da = layout.positions[a].dist(&center);
            let db = layout.positions[b].dist(&center);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
}

pub fn build_plan(engine: Engine, route: &SdRoute, layout: &NetworkLayout) -> Vec<PlannedHop> {
    match engine {
        Engine::Opportunistic => route
            .hops
            .iter()
            .map(|h| PlannedHop {
                from_cell: h.from_cell,
                to_cell: h.to_cell,
                kind: PlanKind::Opportunistic(h.mode),
            })
            .collect(),
        Engine::Baseline => {
            let path = &route.cell_path;
            if path.len() == 1 {
                return vec![PlannedHop {
                    from_cell: path[0],
                    to_cell: path[0],
                    kind: PlanKind::Baseline {
                        rx: Some(route.pair.destination),
                    },
                }];
            }
            (0..path.len() - 1)
                .map(|i| {
                    let rx = if i + 2 == path.len() {
                        Some(route.pair.destination)
                    } else {
                        nearest_to_center(layout, path[i + 1])
                    };
                    PlannedHop {
                        from_cell: path[i],
                        to_cell: path[i + 1],
                        kind: PlanKind::Baseline { rx },
                    }
                })
                .collect()
        }
    }
}

/// Everything one trial needs. Routes are fixed for the trial; fading, relay
/// selection, and pipeline stand-ins are drawn from substreams of the root
/// seed keyed by the trial index.
pub struct TrialContext<'a> {
    pub layout: &'a NetworkLayout,
    pub routes: &'a [SdRoute],
    pub schedule: TdmaSchedule,
    pub params: ChannelParams,
    pub per_hop_power: f64,
    pub engine: Engine,
    pub relay_rule: RelayRule,
    pub root_seed: u64,
    pub trial: u64,
}

fn build_pipeline(ctx: &TrialContext, plans: &[Vec<PlannedHop>]) -> Vec<Vec<Option<usize>>> {
    plans
        .iter()
        .enumerate()
        .map(|(m, plan)| {
            let route = &ctx.routes[m];
            match ctx.engine {
                Engine::Baseline => {
                    // The baseline pipeline is the predetermined relay chain.
                    let mut prev = Some(route.pair.source);
                    plan.iter()
                        .map(|h| {
                            let tx = prev;
                            prev = match h.kind {
                                PlanKind::Baseline { rx } => rx,
                                PlanKind::Opportunistic(_) => unreachable!(),
                            };
                            tx
                        })
                        .collect()
                }
                Engine::Opportunistic => {
                    let mut rng =
                        substream(ctx.root_seed, Stream::Pipeline, &[ctx.trial, m as u64]);
                    plan.iter()
                        .enumerate()
                        .map(|(h, ph)| {
                            if h == 0 {
                                return Some(route.pair.source);
                            }
                            let occupants = ctx.layout.nodes_in(ph.from_cell);
                            if occupants.is_empty() {
                                None
                            } else {
                                Some(occupants[rng.gen_range(0..occupants.len())])
                            }
                        })
                        .collect()
                }
            }
        })
        .collect()
}

fn push_unique(list: &mut Vec<usize>, node: usize) {
    if !list.contains(&node) {
        list.push(node);
    }
}

/// Run every route's tracked packet through its hop plan under the TDMA
/// schedule. Hops with the same index land in the slot of their from-cell;
/// all links evaluated in one (hop, slot) group share one fading block.
pub fn run_trial(ctx: &TrialContext) -> Result<Vec<PacketResult>> {
    let g = ctx.layout.cells_per_side;
    let plans: Vec<Vec<PlannedHop>> = ctx
        .routes
        .iter()
        .map(|r| build_plan(ctx.engine, r, ctx.layout))
        .collect();
    for plan in &plans {
        for h in plan {
            if h.from_cell.row >= g || h.to_cell.row >= g || h.from_cell.col >= g
                || h.to_cell.col >= g
            {
                return Err(SimError::Config(
                    "route extends past the cell grid".into(),
                ));
            }
        }
    }
    let pipeline = build_pipeline(ctx, &plans);
    let mut current: Vec<usize> = ctx.routes.iter().map(|r| r.pair.source).collect();
    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); ctx.routes.len()];
    let mut alive: Vec<bool> = vec![true; ctx.routes.len()];
    let mut per_hop: Vec<Vec<HopOutcome>> = vec![Vec::new(); ctx.routes.len()];
    let mut delivered: Vec<bool> = vec![false; ctx.routes.len()];

    let max_hops = plans.iter().map(Vec::len).max().unwrap_or(0);
    for h in 0..max_hops {
        // Dead routes stay in their slot groups: the saturated pipeline keeps
        // transmitting behind a lost packet, and their hops still contribute
        // unconditioned reference-interference measurements.
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for m in 0..ctx.routes.len() {
            if h < plans[m].len() {
                groups
                    .entry(ctx.schedule.slot_of(plans[m][h].from_cell))
                    .or_default()
                    .push(m);
            }
        }
        for (&slot, members) in &groups {
            // Co-active transmitters this slot: with saturated pipelining,
            // every route has one in-flight packet per hop position, so each
            // route contributes all of its pipeline relays whose cells are
            // active this slot (per-cell load Θ(M/D)). The tracked relay
            // stands in for a member's own position at hop h.
            let mut txs: Vec<usize> = Vec::new();
            for (m2, plan) in plans.iter().enumerate() {
                for (h2, ph) in plan.iter().enumerate() {
                    if ctx.schedule.slot_of(ph.from_cell) != slot {
                        continue;
                    }
                    let tagged_mode1 = h2 == h
                        && alive[m2]
                        && members.contains(&m2)
                        && !matches!(ph.kind, PlanKind::Opportunistic(HopMode::Mode2Step2));
                    let node = if tagged_mode1 {
                        Some(current[m2])
                    } else {
                        pipeline[m2][h2]
                    };
                    if let Some(node) = node {
                        push_unique(&mut txs, node);
                    }
                }
            }
            for &m in members {
                if alive[m]
                    && matches!(
                        plans[m][h].kind,
                        PlanKind::Opportunistic(HopMode::Mode2Step2)
                    )
                {
                    for &c in &candidates[m] {
                        push_unique(&mut txs, c);
                    }
                }
            }
            let mut rxs: Vec<usize> = Vec::new();
            for &m in members {
                let ph = &plans[m][h];
                match ph.kind {
                    PlanKind::Opportunistic(HopMode::Mode2Step2) => {
                        push_unique(&mut rxs, ctx.routes[m].pair.destination);
                    }
                    PlanKind::Opportunistic(_) => {
                        for &k in ctx.layout.nodes_in(ph.to_cell) {
                            push_unique(&mut rxs, k);
                        }
                    }
                    PlanKind::Baseline { rx } => {
                        if let Some(rx) = rx {
                            push_unique(&mut rxs, rx);
                        }
                    }
                }
            }
            let block_id = (h as u64) << 16 | slot as u64;
            let mut frng = substream(
                ctx.root_seed,
                Stream::Fading,
                &[ctx.trial, h as u64, slot as u64],
            );
            let sample = draw_block_fading(
                txs.clone(),
                rxs.clone(),
                ctx.params.fading,
                block_id,
                &mut frng,
            );
            for &m in members {
                let ph = &plans[m][h];
                // A route never interferes with itself: drop all of its own
                // stand-ins from the co-active set it experiences.
                let co_active: Vec<usize> = txs
                    .iter()
                    .copied()
                    .filter(|&t| {
                        t != current[m]
                            && !pipeline[m].contains(&Some(t))
                            && !candidates[m].contains(&t)
                    })
                    .collect();
                let route = &ctx.routes[m];
                let ref_rx = match ph.kind {
                    PlanKind::Opportunistic(HopMode::Mode2Step2) => Some(route.pair.destination),
                    PlanKind::Opportunistic(_) => nearest_to_center(ctx.layout, ph.to_cell),
                    PlanKind::Baseline { rx } => rx,
                };
                let ref_i = match ref_rx {
                    Some(rx) => Some(interference_power(
                        rx,
                        &co_active,
                        ctx.per_hop_power,
                        &sample,
                        &ctx.layout.positions,
                        &ctx.params,
                    )?),
                    None => None,
                };
                if !alive[m] {
                    // Measurement-only hop behind a lost packet.
                    per_hop[m].push(HopOutcome {
                        reference_interference: ref_i,
                        ..HopOutcome::outage(h)
                    });
                    continue;
                }
                let mut srng = substream(
                    ctx.root_seed,
                    Stream::Selection,
                    &[ctx.trial, m as u64, h as u64],
                );
                let mut outcome = match ph.kind {
                    PlanKind::Opportunistic(HopMode::Mode1) => {
                        let co_located: Vec<usize> = co_active
                            .iter()
                            .copied()
                            .filter(|&t| ctx.layout.node_cell[t] == ph.from_cell)
                            .collect();
                        mode1_hop(
                            h,
                            current[m],
                            ctx.layout.nodes_in(ph.to_cell),
                            &co_active,
                            &co_located,
                            route.pair.destination,
                            ctx.relay_rule,
                            ctx.per_hop_power,
                            &sample,
                            &ctx.layout.positions,
                            &ctx.params,
                            &mut srng,
                        )?
                    }
                    PlanKind::Opportunistic(HopMode::Mode2Step1) => {
                        let co_located: Vec<usize> = co_active
                            .iter()
                            .copied()
                            .filter(|&t| ctx.layout.node_cell[t] == ph.from_cell)
                            .collect();
                        let (outcome, cand) = mode2_step1(
                            h,
                            current[m],
                            ph.to_cell,
                            g,
                            ctx.layout.nodes_in(ph.to_cell),
                            &co_active,
                            &co_located,
                            route.pair.destination,
                            ctx.per_hop_power,
                            &sample,
                            &ctx.layout.positions,
                            &ctx.params,
                            &mut srng,
                        )?;
                        candidates[m] = cand;
                        outcome
                    }
                    PlanKind::Opportunistic(HopMode::Mode2Step2) => mode2_step2(
                        h,
                        &candidates[m],
                        route.pair.destination,
                        &co_active,
                        ctx.relay_rule,
                        ctx.per_hop_power,
                        &sample,
                        &ctx.layout.positions,
                        &ctx.params,
                        &mut srng,
                    )?,
                    PlanKind::Baseline { rx } => match rx {
                        None => HopOutcome::outage(h),
                        Some(rx) => baseline_hop(
                            h,
                            current[m],
                            rx,
                            &co_active,
                            ctx.per_hop_power,
                            &sample,
                            &ctx.layout.positions,
                            &ctx.params,
                        )?,
                    },
                };
                outcome.reference_interference = ref_i;
                if outcome.outage {
                    alive[m] = false;
                } else {
                    if let Some(relay) = outcome.chosen_relay {
                        current[m] = relay;
                    }
                    if h + 1 == plans[m].len() {
                        delivered[m] = true;
                    }
                }
                per_hop[m].push(outcome);
            }
        }
    }

    Ok((0..ctx.routes.len())
        .map(|m| {
            let hops = std::mem::take(&mut per_hop[m]);
            let outage_hop = hops.iter().find(|o| o.outage).map(|o| o.hop_index);
            PacketResult {
                pair: m,
                delivered: delivered[m],
                // Hop attempts the packet itself made, including the failed
                // one; measurement-only entries behind an outage do not count.
                hops_taken: outage_hop.map_or(hops.len(), |o| o + 1),
                outage_hop,
                per_hop: hops,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::FadingMode;
    use crate::topology::{draw_sd_pairs, place_nodes, Placement, SdPair};

    fn params(eta: f64, n0: f64, fading: FadingMode) -> ChannelParams {
        ChannelParams {
            alpha: 4.0,
            noise_power: n0,
            fading,
            eta,
        }
    }

    fn flat_sample(txs: Vec<usize>, rxs: Vec<usize>) -> ChannelSample {
        let mut rng = substream(1, Stream::Fading, &[0]);
        draw_block_fading(txs, rxs, FadingMode::None, 0, &mut rng)
    }

    /// Candidates on a circle of radius `r` around (0.5, 0.5).
    fn ring(m: usize, r: f64) -> Vec<Point> {
        let mut pts = vec![Point { x: 0.5, y: 0.5 }];
        for i in 0..m {
            let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.3) / m as f64;
            pts.push(Point {
                x: 0.5 + r * a.cos(),
                y: 0.5 + r * a.sin(),
            });
        }
        pts
    }

    #[test]
    fn single_candidate_with_margin_is_chosen() {
        // One target at r = 0.25, alpha 4, unit gain: p = 2 * N0 * r^4 gives
        // SINR exactly 2 >= eta = 1.
        let positions = ring(1, 0.25);
        let p = 2.0 * 0.25f64.powi(4);
        let sample = flat_sample(vec![0], vec![1]);
        let mut rng = substream(7, Stream::Selection, &[0]);
        let out = mode1_hop(
            0,
            0,
            &[1],
            &[0],
            &[],
            99,
            RelayRule::Uniform,
            p,
            &sample,
            &positions,
            &params(1.0, 1.0, FadingMode::None),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.chosen_relay, Some(1));
        assert_eq!(out.candidate_count, 1);
        assert!((out.measured_sinr - 2.0).abs() < 1e-12);
        assert!(!out.outage);
    }

    #[test]
    fn sub_threshold_power_is_outage() {
        let positions = ring(3, 0.25);
        let p = 0.9 * 0.25f64.powi(4); // SINR 0.9 < 1 at every target
        let sample = flat_sample(vec![0], vec![1, 2, 3]);
        let mut rng = substream(7, Stream::Selection, &[1]);
        let out = mode1_hop(
            0,
            0,
            &[1, 2, 3],
            &[0],
            &[],
            99,
            RelayRule::Uniform,
            p,
            &sample,
            &positions,
            &params(1.0, 1.0, FadingMode::None),
            &mut rng,
        )
        .unwrap();
        assert!(out.outage);
        assert_eq!(out.candidate_count, 0);
    }

    #[test]
    fn mode1_matches_independent_links_closed_form() {
        // m equidistant candidates, no interference, Rayleigh fading:
        // per-link success q = exp(-eta*N0*r^alpha/p), hop success
        // 1 - (1-q)^m.
        let m = 4;
        let r: f64 = 0.25;
        let q: f64 = 0.4;
        let p = -1.0 * r.powi(4) / q.ln();
        let positions = ring(m, r);
        let targets: Vec<usize> = (1..=m).collect();
        let pr = params(1.0, 1.0, FadingMode::Rayleigh);
        let trials = 100_000;
        let mut ok = 0;
        for t in 0..trials {
            let mut frng = substream(11, Stream::Fading, &[t]);
            let sample =
                draw_block_fading(vec![0], targets.clone(), FadingMode::Rayleigh, t, &mut frng);
            let mut srng = substream(11, Stream::Selection, &[t]);
            let out = mode1_hop(
                0, 0, &targets, &[0], &[], 99, RelayRule::Uniform, p, &sample, &positions,
                &pr, &mut srng,
            )
            .unwrap();
            if !out.outage {
                ok += 1;
            }
        }
        let expect = 1.0 - (1.0 - q).powi(m as i32);
        let got = ok as f64 / trials as f64;
        assert!((got - expect).abs() < 0.01, "got {got}, expect {expect}");
    }

    #[test]
    fn step2_matches_independent_links_closed_form() {
        let m = 4;
        let r: f64 = 0.25;
        let q: f64 = 0.3;
        let p = -1.0 * r.powi(4) / q.ln();
        let positions = ring(m, r); // node 0 is the destination here
        let cands: Vec<usize> = (1..=m).collect();
        let pr = params(1.0, 1.0, FadingMode::Rayleigh);
        let trials = 100_000;
        let mut ok = 0;
        for t in 0..trials {
            let mut frng = substream(13, Stream::Fading, &[t]);
            let sample =
                draw_block_fading(cands.clone(), vec![0], FadingMode::Rayleigh, t, &mut frng);
            let mut srng = substream(13, Stream::Selection, &[t]);
            let out = mode2_step2(
                0, &cands, 0, &[], RelayRule::Uniform, p, &sample, &positions, &pr, &mut srng,
            )
            .unwrap();
            if !out.outage {
                ok += 1;
            }
        }
        let expect = 1.0 - (1.0 - q).powi(m as i32);
        let got = ok as f64 / trials as f64;
        assert!((got - expect).abs() < 0.01, "got {got}, expect {expect}");
    }

    #[test]
    fn step2_empty_candidates_cost_no_rng() {
        let positions = ring(1, 0.25);
        let sample = flat_sample(vec![0], vec![1]);
        let pr = params(1.0, 1.0, FadingMode::None);
        let mut rng = substream(5, Stream::Selection, &[0]);
        let before = rng.clone();
        let out = mode2_step2(
            3, &[], 1, &[], RelayRule::Uniform, 1.0, &sample, &positions, &pr, &mut rng,
        )
        .unwrap();
        assert!(out.outage);
        assert_eq!(out.hop_index, 3);
        let mut a = rng;
        let mut b = before;
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn max_sinr_receiver_rule_is_exclusive() {
        // Two co-located transmitters, full interference denominators,
        // eta = 1: a receiver can decode at most one of them.
        let positions = vec![
            Point { x: 0.10, y: 0.10 },
            Point { x: 0.12, y: 0.11 },
            Point { x: 0.40, y: 0.35 },
        ];
        let pr = params(1.0, 0.01, FadingMode::Rayleigh);
        for t in 0..10_000u64 {
            let mut frng = substream(17, Stream::Fading, &[t]);
            let sample =
                draw_block_fading(vec![0, 1], vec![2], FadingMode::Rayleigh, t, &mut frng);
            let (s0, _) = link_sinr(2, 0, &[0, 1], 1.0, &sample, &positions, &pr).unwrap();
            let (s1, _) = link_sinr(2, 1, &[0, 1], 1.0, &sample, &positions, &pr).unwrap();
            assert!(
                !(s0 >= 1.0 && s1 >= 1.0),
                "both decodable at trial {t}: {s0} {s1}"
            );
        }
    }

    #[test]
    fn decode_set_grows_with_power() {
        let positions = ring(8, 0.3);
        let targets: Vec<usize> = (1..=8).collect();
        let pr = params(1.0, 1.0, FadingMode::Rayleigh);
        for t in 0..200u64 {
            let mut frng = substream(19, Stream::Fading, &[t]);
            let sample =
                draw_block_fading(vec![0], targets.clone(), FadingMode::Rayleigh, t, &mut frng);
            let lo = decode_set(0, &targets, &[0], &[], None, 0.004, &sample, &positions, &pr)
                .unwrap();
            let hi = decode_set(0, &targets, &[0], &[], None, 0.02, &sample, &positions, &pr)
                .unwrap();
            let hi_nodes: Vec<usize> = hi.iter().map(|d| d.node).collect();
            for d in &lo {
                assert!(hi_nodes.contains(&d.node));
            }
        }
    }

    #[test]
    fn step1_keeps_one_candidate_per_sub_cell() {
        // 16 nodes spread over cell (0,0) of a 1-cell grid -> 2x2 sub-cells,
        // all decoding -> exactly 4 candidates.
        let mut positions = vec![Point { x: 0.02, y: 0.02 }]; // transmitter
        for i in 0..4 {
            for j in 0..4 {
                positions.push(Point {
                    x: 0.13 + 0.25 * j as f64,
                    y: 0.13 + 0.25 * i as f64,
                });
            }
        }
        let targets: Vec<usize> = (1..=16).collect();
        let sample = flat_sample(vec![0], targets.clone());
        let pr = params(1.0, 1.0, FadingMode::None);
        let mut rng = substream(23, Stream::Selection, &[0]);
        let (out, cands) = mode2_step1(
            0,
            0,
            Cell::new(0, 0),
            1,
            &targets,
            &[0],
            &[],
            99,
            1e6,
            &sample,
            &positions,
            &pr,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.candidate_count, 16);
        assert_eq!(cands.len(), 4);
        // One candidate per quadrant.
        let quad = |n: usize| {
            let p = positions[n];
            (p.y > 0.5) as usize * 2 + (p.x > 0.5) as usize
        };
        let mut quads: Vec<usize> = cands.iter().map(|&c| quad(c)).collect();
        quads.sort_unstable();
        assert_eq!(quads, vec![0, 1, 2, 3]);
    }

    #[test]
    fn baseline_hop_is_deterministic() {
        let positions = ring(2, 0.25);
        let sample = flat_sample(vec![0, 2], vec![1]);
        let pr = params(1.0, 1.0, FadingMode::None);
        let a = baseline_hop(0, 0, 1, &[0, 2], 0.05, &sample, &positions, &pr).unwrap();
        let b = baseline_hop(0, 0, 1, &[0, 2], 0.05, &sample, &positions, &pr).unwrap();
        assert_eq!(a, b);
        // SINR 0.99 fails, deterministically.
        let p99 = 0.99 * 0.25f64.powi(4) * (1.0 + sample.gain(2, 1) * 0.0);
        let c = baseline_hop(0, 0, 1, &[0], p99, &flat_sample(vec![0], vec![1]), &positions, &pr)
            .unwrap();
        assert!(c.outage);
        assert!((c.measured_sinr - 0.99).abs() < 1e-12);
    }

    #[test]
    fn mud_power_requirement_falls_with_occupancy() {
        // Power needed for 95% hop success vs. target-cell occupancy m.
        // Closed-form oracle at equal distances:
        //   1 - (1-q)^m >= 0.95 needs q >= 1 - 0.05^(1/m), so
        //   p_req(m) = eta*N0*r^alpha / -ln(1 - 0.05^(1/m)).
        let r: f64 = 0.3;
        let pr = params(1.0, 1.0, FadingMode::Rayleigh);
        let success_rate = |m: usize, p: f64| -> f64 {
            let positions = ring(m, r);
            let targets: Vec<usize> = (1..=m).collect();
            let trials = 4000u64;
            let mut ok = 0;
            for t in 0..trials {
                let mut frng = substream(29 + m as u64, Stream::Fading, &[t]);
                let sample = draw_block_fading(
                    vec![0],
                    targets.clone(),
                    FadingMode::Rayleigh,
                    t,
                    &mut frng,
                );
                let d = decode_set(0, &targets, &[0], &[], None, p, &sample, &positions, &pr)
                    .unwrap();
                if !d.is_empty() {
                    ok += 1;
                }
            }
            ok as f64 / trials as f64
        };
        let mut required = Vec::new();
        for &m in &[2usize, 4, 8, 16] {
            let (mut lo, mut hi) = (1e-4, 1.0);
            for _ in 0..22 {
                let mid = 0.5 * (lo + hi);
                if success_rate(m, mid) >= 0.95 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let oracle = r.powi(4) / -(1.0 - 0.05f64.powf(1.0 / m as f64)).ln();
            assert!(
                (hi - oracle).abs() / oracle < 0.15,
                "m={m}: bisected {hi}, oracle {oracle}"
            );
            required.push((m as f64).ln());
            required.push(hi);
        }
        // Strictly decreasing in m, i.e. negative slope against ln m.
        for w in required.chunks(2).collect::<Vec<_>>().windows(2) {
            assert!(w[1][1] < w[0][1]);
        }
    }

    fn trial_ctx<'a>(
        layout: &'a NetworkLayout,
        routes: &'a [SdRoute],
        engine: Engine,
        power: f64,
        eta: f64,
        fading: FadingMode,
        trial: u64,
    ) -> TrialContext<'a> {
        TrialContext {
            layout,
            routes,
            schedule: TdmaSchedule::new(4).unwrap(),
            params: params(eta, 1.0, fading),
            per_hop_power: power,
            engine,
            relay_rule: RelayRule::Uniform,
            root_seed: 42,
            trial,
        }
    }

    fn demo_layout() -> NetworkLayout {
        let positions = place_nodes(1024, Placement::RegularGrid, 0).unwrap();
        NetworkLayout::build(1024, Placement::RegularGrid, positions, 8)
    }

    fn demo_route(layout: &NetworkLayout) -> SdRoute {
        // Horizontal pair spanning the grid: source column 0, destination
        // column 31, same row.
        let pair = SdPair {
            source: 10 * 32,
            destination: 10 * 32 + 31,
            src_cell: layout.node_cell[10 * 32],
            dst_cell: layout.node_cell[10 * 32 + 31],
        };
        SdRoute::build(pair)
    }

    #[test]
    fn lone_route_with_ample_power_is_delivered() {
        let layout = demo_layout();
        let routes = vec![demo_route(&layout)];
        let ctx = trial_ctx(
            &layout,
            &routes,
            Engine::Opportunistic,
            1e9,
            1e-6,
            FadingMode::Rayleigh,
            0,
        );
        let results = run_trial(&ctx).unwrap();
        assert!(results[0].delivered);
        assert_eq!(results[0].hops_taken, routes[0].hop_count());
        assert_eq!(results[0].outage_hop, None);
    }

    #[test]
    fn zero_power_is_outage_at_first_hop() {
        let layout = demo_layout();
        let routes = vec![demo_route(&layout)];
        let ctx = trial_ctx(
            &layout,
            &routes,
            Engine::Opportunistic,
            1e-30,
            1.0,
            FadingMode::Rayleigh,
            0,
        );
        let results = run_trial(&ctx).unwrap();
        assert!(!results[0].delivered);
        assert_eq!(results[0].outage_hop, Some(0));
        assert_eq!(results[0].hops_taken, 1);
    }

    #[test]
    fn trials_are_reproducible() {
        let layout = demo_layout();
        let mut rng = substream(3, Stream::Pairs, &[0]);
        let pairs = draw_sd_pairs(&layout, 6, true, &mut rng).unwrap();
        let routes: Vec<SdRoute> = pairs.into_iter().map(SdRoute::build).collect();
        for engine in [Engine::Opportunistic, Engine::Baseline] {
            let fading = match engine {
                Engine::Opportunistic => FadingMode::Rayleigh,
                Engine::Baseline => FadingMode::None,
            };
            let ctx = trial_ctx(&layout, &routes, engine, 0.05, 0.4, fading, 5);
            let a = run_trial(&ctx).unwrap();
            let b = run_trial(&ctx).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn baseline_trial_is_deterministic_across_trial_ids() {
        // Without fading the trial index must not matter.
        let layout = demo_layout();
        let mut rng = substream(3, Stream::Pairs, &[1]);
        let pairs = draw_sd_pairs(&layout, 4, true, &mut rng).unwrap();
        let routes: Vec<SdRoute> = pairs.into_iter().map(SdRoute::build).collect();
        let a = run_trial(&trial_ctx(
            &layout,
            &routes,
            Engine::Baseline,
            0.05,
            0.4,
            FadingMode::None,
            0,
        ))
        .unwrap();
        let b = run_trial(&trial_ctx(
            &layout,
            &routes,
            Engine::Baseline,
            0.05,
            0.4,
            FadingMode::None,
            9,
        ))
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hop_outcome_invariants_hold() {
        let layout = demo_layout();
        let mut rng = substream(3, Stream::Pairs, &[2]);
        let pairs = draw_sd_pairs(&layout, 8, true, &mut rng).unwrap();
        let routes: Vec<SdRoute> = pairs.into_iter().map(SdRoute::build).collect();
        for trial in 0..20 {
            let ctx = trial_ctx(
                &layout,
                &routes,
                Engine::Opportunistic,
                0.08,
                0.4,
                FadingMode::Rayleigh,
                trial,
            );
            for r in run_trial(&ctx).unwrap() {
                assert_eq!(r.delivered, r.outage_hop.is_none());
                if r.delivered {
                    assert_eq!(r.hops_taken, r.per_hop.len());
                }
                for o in &r.per_hop {
                    assert_eq!(o.outage, o.decoders.is_empty());
                    if let Some(c) = o.chosen_relay {
                        assert!(o.decoders.contains(&c));
                        assert!(o.measured_sinr >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn delivery_rate_rises_with_power() {
        let layout = demo_layout();
        let mut rng = substream(3, Stream::Pairs, &[3]);
        let pairs = draw_sd_pairs(&layout, 6, true, &mut rng).unwrap();
        let routes: Vec<SdRoute> = pairs.into_iter().map(SdRoute::build).collect();
        let rate = |p: f64| -> f64 {
            let mut ok = 0usize;
            let trials = 200;
            for t in 0..trials {
                let ctx = trial_ctx(
                    &layout,
                    &routes,
                    Engine::Opportunistic,
                    p,
                    0.4,
                    FadingMode::Rayleigh,
                    t,
                );
                ok += run_trial(&ctx)
                    .unwrap()
                    .iter()
                    .filter(|r| r.delivered)
                    .count();
            }
            ok as f64 / (trials as usize * routes.len()) as f64
        };
        let low = rate(0.01);
        let high = rate(0.3);
        assert!(
            high >= low,
            "delivery must not fall with power: {low} -> {high}"
        );
        assert!(high > 0.0);
    }
}
