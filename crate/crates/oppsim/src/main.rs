//! Command-line front end: config resolution, subcommand dispatch, and CSV
//! emission. All outputs land inside the configured output directory.

use clap::{Args, Parser, Subcommand};
use oppsim::analytics::{curve, curves_csv, LawContext, ScalingCurve, ALL_LAWS};
use oppsim::config::{EngineChoice, RunConfig};
use oppsim::experiment::{
    calibrate_power, engine_grid_side, monotonicity_summary, run_tradeoff_sweep, verify_lemma1,
    verify_lemma2, verify_lemma3, ConcentrationReport, ScenarioSpec, Scenario, SweepSettings,
    TradeoffRecord,
};
use oppsim::rng::{substream, Stream};
use oppsim::routing::{build_plan, run_trial, Engine, PacketResult, TrialContext};
use oppsim::topology::{draw_sd_pairs, SdRoute};
use oppsim::{Result, SimError};
use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

const CSV_VERSION: &str = "# oppsim-csv v1";

#[derive(Parser)]
#[command(name = "oppsim", about = "Opportunistic multi-hop routing simulator", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file (`#` comments allowed).
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
    /// Override any config key (repeatable); flags win over the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Root seed (overrides config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides config).
    #[arg(long, global = true)]
    output_dir: Option<std::path::PathBuf>,
    /// Cap the worker-thread count.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials at a fixed (engine, M, D) and write per-packet results.
    Simulate {
        /// Also write a per-hop trace CSV.
        #[arg(long)]
        trace: bool,
    },
    /// Sweep the power-delay trade-off over D_list for the chosen engines.
    Sweep,
    /// Run the concentration checks.
    Verify {
        /// Which check to run (1, 2 or 3).
        #[arg(long, conflicts_with = "all")]
        lemma: Option<u8>,
        /// Run all three checks in order.
        #[arg(long)]
        all: bool,
        /// Concentration half-width.
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Topology seeds for checks 1 and 2.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Emit the eight theory-curve series (plus an overlay when
    /// tradeoff.csv is present in the output directory).
    Curves,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for pair in &common.sets {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            SimError::Config(format!("--set expects KEY=VALUE, got `{pair}`"))
        })?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.common.jobs {
        // Ignore the error when a global pool already exists (e.g. tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let cfg = resolve_config(&cli.common)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(SimError::Io)?;
    write_out(&cfg, "config.txt", &cfg.to_text())?;
    match cli.command {
        Command::Simulate { trace } => cmd_simulate(&cfg, trace),
        Command::Sweep => cmd_sweep(&cfg),
        Command::Verify {
            lemma,
            all,
            delta,
            seeds,
        } => cmd_verify(&cfg, lemma, all, delta, seeds),
        Command::Curves => cmd_curves(&cfg),
    }
}

fn write_out(cfg: &RunConfig, name: &str, contents: &str) -> Result<()> {
    let path = cfg.output_dir.join(name);
    std::fs::write(&path, contents).map_err(SimError::Io)
}

fn scenario_spec(cfg: &RunConfig) -> ScenarioSpec {
    ScenarioSpec {
        n: cfg.n,
        placement: cfg.placement,
        alpha: cfg.alpha,
        noise_power: cfg.noise_power,
        eta: cfg.eta,
        tdma_k: cfg.tdma_k,
        relay_rule: cfg.relay_rule,
        grid_factor: cfg.grid_factor,
        base_grid_factor: cfg.base_grid_factor,
        base_grid_offset: cfg.base_grid_offset,
        horizontal: cfg.horizontal,
        seed: cfg.seed,
    }
}

fn cmd_simulate(cfg: &RunConfig, trace: bool) -> Result<()> {
    let engine = match cfg.engine {
        EngineChoice::Baseline => Engine::Baseline,
        _ => Engine::Opportunistic,
    };
    let spec = scenario_spec(cfg);
    let sc = spec.scenario(engine, cfg.d_target)?;
    let power = if cfg.per_hop_power > 0.0 {
        cfg.per_hop_power
    } else {
        calibrate_power(&sc, cfg.m, 0.05, 60, cfg.cal_trials)?.0
    };

    let mut results = String::from(CSV_VERSION);
    results.push_str("\ntrial,pair,delivered,hops,outage_hop\n");
    let mut traces = String::from(CSV_VERSION);
    traces.push_str("\ntrial,pair,hop,slot,candidates,sinr,interference,outcome\n");
    for t in 0..cfg.trials {
        let (packets, routes) = run_one_trial(&sc, cfg.m, power, t)?;
        for r in &packets {
            writeln!(
                results,
                "{t},{},{},{},{}",
                r.pair,
                r.delivered,
                r.hops_taken,
                r.outage_hop.map_or(String::new(), |h| h.to_string()),
            )
            .unwrap();
            if trace {
                let plan = build_plan(engine, &routes[r.pair], &sc.layout);
                for o in &r.per_hop {
                    let slot = sc.schedule.slot_of(plan[o.hop_index].from_cell);
                    let outcome = if o.outage {
                        "outage"
                    } else if o.hop_index + 1 == plan.len() {
                        "delivered"
                    } else {
                        "relay"
                    };
                    writeln!(
                        traces,
                        "{t},{},{},{slot},{},{},{},{outcome}",
                        r.pair,
                        o.hop_index,
                        o.candidate_count,
                        o.measured_sinr,
                        o.measured_interference,
                    )
                    .unwrap();
                }
            }
        }
    }
    write_out(cfg, "results.csv", &results)?;
    if trace {
        write_out(cfg, "trace.csv", &traces)?;
    }
    println!(
        "simulate: engine={} n={} M={} D_target={} power={power:.6e} trials={} -> {}",
        engine.name(),
        cfg.n,
        cfg.m,
        cfg.d_target,
        cfg.trials,
        cfg.output_dir.join("results.csv").display(),
    );
    Ok(())
}

fn run_one_trial(
    sc: &Scenario,
    m: usize,
    power: f64,
    trial: u64,
) -> Result<(Vec<PacketResult>, Vec<SdRoute>)> {
    let mut prng = substream(sc.spec.seed, Stream::Pairs, &[trial]);
    let pairs = draw_sd_pairs(&sc.layout, m, sc.spec.horizontal, &mut prng)?;
    let routes: Vec<SdRoute> = pairs.into_iter().map(SdRoute::build).collect();
    let ctx = TrialContext {
        layout: &sc.layout,
        routes: &routes,
        schedule: sc.schedule,
        params: sc.params,
        per_hop_power: power,
        engine: sc.engine,
        relay_rule: sc.spec.relay_rule,
        root_seed: sc.spec.seed,
        trial,
    };
    Ok((run_trial(&ctx)?, routes))
}

pub fn tradeoff_csv(records: &[TradeoffRecord]) -> String {
    let mut out = String::from(CSV_VERSION);
    out.push_str(
        "\nengine,n,alpha,D_target,D_measured,M_star,per_hop_power,P_total,mean_PI,mean_Pr,outage,throughput,ci_low,ci_high,error\n",
    );
    for r in records {
        match &r.point {
            Some(p) => writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                p.engine.name(),
                p.n,
                p.alpha,
                p.d_target,
                p.d_measured,
                p.m_star,
                p.per_hop_power,
                p.p_total,
                p.mean_p_i,
                p.mean_p_r,
                p.outage,
                p.throughput,
                p.ci_low,
                p.ci_high,
            )
            .unwrap(),
            None => writeln!(
                out,
                "{},,,{},,,,,,,,,,,\"{}\"",
                r.engine.name(),
                r.d_target,
                r.error.as_deref().unwrap_or("").replace('"', "'"),
            )
            .unwrap(),
        }
    }
    out
}

fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let spec = scenario_spec(cfg);
    let settings = SweepSettings {
        trials: cfg.trials,
        cal_trials: cfg.cal_trials,
        m_init: cfg.m_init,
        ..SweepSettings::default()
    };
    let engines = cfg.engine.engines();
    let records = run_tradeoff_sweep(&spec, &engines, &cfg.d_list, &settings);
    write_out(cfg, "tradeoff.csv", &tradeoff_csv(&records))?;
    print!("{}", monotonicity_summary(&records));
    for r in &records {
        if let Some(e) = &r.error {
            println!("{} D_target={}: failed: {e}", r.engine.name(), r.d_target);
        }
    }
    println!(
        "sweep: {} records -> {}",
        records.len(),
        cfg.output_dir.join("tradeoff.csv").display(),
    );
    Ok(())
}

fn report_line(name: &str, rep: &ConcentrationReport, threshold: f64) -> (String, bool) {
    let ok = rep.pass_fraction >= threshold;
    (
        format!(
            "{name}: pass_fraction {:.4} (required >= {threshold}), mean {:.4}, bound {:.4}, instances {}: {}",
            rep.pass_fraction,
            rep.empirical_mean,
            rep.bound,
            rep.instances,
            if ok { "PASS" } else { "FAIL" },
        ),
        ok,
    )
}

fn cmd_verify(cfg: &RunConfig, lemma: Option<u8>, all: bool, delta: f64, seeds: u64) -> Result<()> {
    let which: Vec<u8> = if all {
        vec![1, 2, 3]
    } else {
        match lemma {
            Some(l @ 1..=3) => vec![l],
            Some(l) => {
                return Err(SimError::Config(format!(
                    "unknown check selector {l}; use 1, 2 or 3 (or --all)"
                )))
            }
            None => {
                return Err(SimError::Config(
                    "verify requires --lemma <1|2|3> or --all".into(),
                ))
            }
        }
    };
    let spec = scenario_spec(cfg);
    let g = engine_grid_side(Engine::Opportunistic, cfg.d_target, cfg.grid_factor, 0.0);
    let mut csv = String::from(CSV_VERSION);
    csv.push_str("\ncheck,pass_fraction,empirical_mean,bound,delta,instances\n");
    let mut all_ok = true;
    for l in which {
        let (name, rep, threshold) = match l {
            1 => (
                "occupancy",
                verify_lemma1(cfg.n, g, seeds, delta, cfg.seed)?,
                0.99,
            ),
            2 => (
                "route-load",
                verify_lemma2(
                    cfg.n,
                    g,
                    cfg.m,
                    seeds,
                    delta,
                    cfg.seed,
                    cfg.placement,
                    cfg.horizontal,
                )?,
                0.95,
            ),
            _ => (
                "interference",
                verify_lemma3(&spec, cfg.d_target, cfg.m, cfg.trials, delta)?,
                0.99,
            ),
        };
        let (line, ok) = report_line(name, &rep, threshold);
        println!("{line}");
        writeln!(
            csv,
            "{name},{},{},{},{},{}",
            rep.pass_fraction, rep.empirical_mean, rep.bound, rep.delta, rep.instances,
        )
        .unwrap();
        all_ok &= ok;
    }
    write_out(cfg, "verify.csv", &csv)?;
    if !all_ok {
        return Err(SimError::Verification(
            "one or more concentration checks failed".into(),
        ));
    }
    Ok(())
}

fn cmd_curves(cfg: &RunConfig) -> Result<()> {
    let ctx = LawContext {
        n: cfg.n,
        alpha: cfg.alpha,
    };
    let nf = cfg.n as f64;
    let (m_lo, m_hi) = (nf.log2(), nf.powf(0.5 - cfg.regime_epsilon));
    let ms: Vec<f64> = (0..40)
        .map(|i| m_lo * (m_hi / m_lo).powf(i as f64 / 39.0))
        .collect();
    let xs_outage: Vec<f64> = (0..40)
        .map(|i| 0.05 * (100.0f64).powf(i as f64 / 39.0))
        .collect();
    let mut curves: Vec<ScalingCurve> = Vec::new();
    for law in ALL_LAWS {
        let xs = if law.x_is_pairs() { &ms } else { &xs_outage };
        curves.push(curve(law, ctx, cfg.constant(law), xs, cfg.regime_epsilon)?);
    }
    write_out(
        cfg,
        "curves.csv",
        &format!("{CSV_VERSION}\n{}", curves_csv(&curves)),
    )?;

    let tradeoff_path = cfg.output_dir.join("tradeoff.csv");
    if tradeoff_path.exists() {
        let overlay = build_overlay(&curves, &tradeoff_path)?;
        write_out(cfg, "overlay.csv", &overlay)?;
        println!(
            "curves: wrote curves.csv and overlay.csv to {}",
            cfg.output_dir.display()
        );
    } else {
        println!(
            "curves: wrote curves.csv to {} (no tradeoff.csv, overlay skipped)",
            cfg.output_dir.display()
        );
    }
    Ok(())
}

/// Merge theory curves with simulated operating points into one long-format
/// table: source, series, x (M), y.
fn build_overlay(curves: &[ScalingCurve], tradeoff_path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(tradeoff_path).map_err(SimError::Io)?;
    let mut out = String::from(CSV_VERSION);
    out.push_str("\nsource,series,x,y\n");
    for c in curves {
        for p in &c.points {
            writeln!(out, "theory,{},{},{}", c.law.name(), p.x, p.y).unwrap();
        }
    }
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| header.iter().position(|&h| h == name);
    let (ie, im, ip, id) = match (
        col("engine"),
        col("M_star"),
        col("P_total"),
        col("D_measured"),
    ) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => {
            return Err(SimError::Config(format!(
                "{} has an unexpected header",
                tradeoff_path.display()
            )))
        }
    };
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() <= ip || f[im].is_empty() {
            continue;
        }
        writeln!(out, "sim,{}_power,{},{}", f[ie], f[im], f[ip]).unwrap();
        writeln!(out, "sim,{}_delay,{},{}", f[ie], f[im], f[id]).unwrap();
    }
    Ok(out)
}
