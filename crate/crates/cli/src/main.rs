//! Batch front end: wires JSON game configs to the solvers and writes result
//! documents, CSV traces, and a run manifest. Reference experiments ship as
//! embedded fixtures under the `repro` subcommand.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};

use gridstack_core::analysis::{check_storage_dominance, nashconv, verify_potential_property, NonStorageFamily};
use gridstack_core::config::{chain_to_json, load_config, LoadedConfig};
use gridstack_core::fixtures;
use gridstack_core::fp::{fp_mdp_solve, FpOptions, Schedule};
use gridstack_core::ingest::{estimate_forecast_and_chain, records_from_csv};
use gridstack_core::mdp::DEFAULT_STATE_CAP;
use gridstack_core::model::build_reduced_game;
use gridstack_core::mpg::{fip_solve, lift_to_pme, EquilibriumResult, PmsProfile, PurePublicPolicy};
use gridstack_core::payoff::aggregate_demand;
use gridstack_core::pricing::grid_search_pricing;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "gridstack", version, about = "Two-level demand-response game solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reduced demand game by best-response sweeps and lift the
    /// equilibrium to a private-state profile.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Iteration budget for the improvement sweep.
        #[arg(long, default_value_t = 10_000)]
        kmax: usize,
        /// Seed for random initialization (omit for the all-zero start).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decentralized fictitious-play learning over the full game.
    Learn {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of learning episodes.
        #[arg(long, default_value_t = 2_000)]
        iters: usize,
        /// Exploitability evaluation period (each costs one joint-state
        /// backward induction per user).
        #[arg(long, default_value_t = 50)]
        eval_every: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Cap on joint states per stage for exploitability evaluation.
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
    },
    /// Exhaustive grid search over the leader's pricing coefficients.
    Price {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        kmax: usize,
    },
    /// Estimate a forecast chain from a generation panel CSV.
    Estimate {
        /// JSON document naming the panel CSV, scale, and support levels.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verification battery: potential identity, equilibrium exploitability,
    /// and (when configured) the storage-dominance audit.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Random deviation trials for the potential-identity check.
        #[arg(long, default_value_t = 1_000)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
        cap: usize,
        #[arg(long, default_value_t = 10_000)]
        kmax: usize,
    },
    /// Re-run a bundled reference experiment: example1 | example2 | example3
    /// | example4.
    Repro {
        name: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10_000)]
        kmax: usize,
    },
}

/// Exit discipline: 1 = invalid config, 2 = bad usage (clap), 3 = solver
/// non-convergence or a state-space cap hit (partial outputs still written).
enum RunError {
    Config(String),
    Incomplete(String),
}

impl RunError {
    fn code(&self) -> u8 {
        match self {
            RunError::Config(_) => 1,
            RunError::Incomplete(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Incomplete(m) => m,
        }
    }
}

fn main() -> ExitCode {
    gridstack_core::par::init_threads_from_env();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn run(command: Command) -> Result<(), RunError> {
    match command {
        Command::Solve { config, out, kmax, seed } => {
            let (loaded, hash) = read_config(&config)?;
            cmd_solve(&loaded, hash, &out, kmax, seed, None)
        }
        Command::Learn { config, out, iters, eval_every, seed, cap } => {
            let (loaded, hash) = read_config(&config)?;
            cmd_learn(&loaded, hash, &out, iters, eval_every, seed, cap)
        }
        Command::Price { config, out, kmax } => {
            let (loaded, hash) = read_config(&config)?;
            cmd_price(&loaded, hash, &out, kmax, false)
        }
        Command::Estimate { config, out } => cmd_estimate(&config, &out),
        Command::Verify { config, out, iters, seed, cap, kmax } => {
            let (loaded, hash) = read_config(&config)?;
            cmd_verify(&loaded, hash, &out, iters, seed, cap, kmax)
        }
        Command::Repro { name, out, iters, seed, kmax } => match name.as_str() {
            "example1" => {
                let loaded = parse_fixture(fixtures::EXAMPLE1_JSON)?;
                let hash = sha256(fixtures::EXAMPLE1_JSON.as_bytes());
                cmd_solve(&loaded, hash, &out, kmax, seed, Some(fixtures::reference_demands()))
            }
            "example2" => {
                let loaded = parse_fixture(fixtures::EXAMPLE2_JSON)?;
                let hash = sha256(fixtures::EXAMPLE2_JSON.as_bytes());
                cmd_learn(&loaded, hash, &out, iters.unwrap_or(2_000), 50, seed.unwrap_or(0), DEFAULT_STATE_CAP)
            }
            "example3" => {
                let loaded = parse_fixture(fixtures::EXAMPLE3_JSON)?;
                let hash = sha256(fixtures::EXAMPLE3_JSON.as_bytes());
                cmd_price(&loaded, hash, &out, kmax, true)
            }
            "example4" => {
                let loaded = parse_fixture(fixtures::EXAMPLE4_JSON)?;
                let hash = sha256(fixtures::EXAMPLE4_JSON.as_bytes());
                cmd_verify(&loaded, hash, &out, iters.unwrap_or(1_000), seed.unwrap_or(0), DEFAULT_STATE_CAP, kmax)
            }
            other => Err(RunError::Config(format!(
                "unknown experiment {other:?}; expected example1|example2|example3|example4"
            ))),
        },
    }
}

fn read_config(path: &Path) -> Result<(LoadedConfig, String), RunError> {
    let text = fs::read_to_string(path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
    let loaded = load_config(&text).map_err(|e| RunError::Config(e.to_string()))?;
    Ok((loaded, sha256(text.as_bytes())))
}

fn parse_fixture(text: &str) -> Result<LoadedConfig, RunError> {
    load_config(text).map_err(|e| RunError::Config(format!("bundled fixture: {e}")))
}

fn sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn write_out(out_dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| RunError::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| RunError::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config_hash: &str,
    seed: Option<u64>,
) -> Result<(), RunError> {
    let manifest = json!({
        "command": command,
        "configSha256": config_hash,
        "seed": seed,
        "version": VERSION,
    });
    write_out(out_dir, "manifest.json", &pretty(&manifest))
}

fn pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn profile_json(profile: &PmsProfile, g1: &gridstack_core::model::GameG1) -> serde_json::Value {
    let users: Vec<serde_json::Value> = profile
        .users
        .iter()
        .zip(&g1.users)
        .map(|(pms, spec)| {
            let feasible: Vec<Vec<(u32, u32)>> =
                (0..=spec.b_max).map(|b| spec.feasible_actions(b)).collect();
            json!({ "feasibleActionsByStorage": feasible, "probs": pms.probs })
        })
        .collect();
    json!(users)
}

fn equilibrium_json(eq: &EquilibriumResult, g2: &gridstack_core::model::GameG2) -> serde_json::Value {
    let demand: Vec<&Vec<Vec<u32>>> = eq.policies.iter().map(|p| &p.demand).collect();
    json!({
        "converged": eq.converged,
        "iterations": eq.iterations,
        "demandPolicies": demand,
        "perStateValues": eq.per_state_values,
        "potentialPerState": eq.potential_per_state,
        "aggregateDemand": aggregate_demand(&eq.policies, g2.horizon(), g2.num_errors()),
    })
}

fn fip_trace_csv(eq: &EquilibriumResult) -> String {
    let mut out = String::from("iteration,user,delta,potential\n");
    for step in &eq.trace {
        out.push_str(&format!("{},{},{},{}\n", step.iteration, step.user, step.delta, step.potential));
    }
    out
}

fn cmd_solve(
    loaded: &LoadedConfig,
    config_hash: String,
    out_dir: &Path,
    kmax: usize,
    seed: Option<u64>,
    soft_tables: Option<fixtures::ReferenceDemands>,
) -> Result<(), RunError> {
    let g1 = &loaded.game;
    let g2 = build_reduced_game(g1).map_err(|e| RunError::Config(e.to_string()))?;
    let t = g2.horizon();
    let m = g2.num_errors();
    let initial: Vec<PurePublicPolicy> = match seed {
        None => (0..g2.num_users()).map(|_| PurePublicPolicy::zeros(t, m)).collect(),
        Some(seed) => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..g2.num_users())
                .map(|i| PurePublicPolicy::random(t, m, g2.demand_caps[i], &mut rng))
                .collect()
        }
    };
    let eq = fip_solve(&g2, initial, kmax);
    let lifted = lift_to_pme(&eq.policies, g1);

    let mut doc = equilibrium_json(&eq, &g2);
    doc["liftedProfile"] = profile_json(&lifted, g1);
    let mut summary = json!({
        "command": "solve",
        "converged": eq.converged,
        "iterations": eq.iterations,
        "out": out_dir.display().to_string(),
    });
    if let Some(tables) = soft_tables {
        // Reference comparison for the bundled 50-user run: cells (t=1,e=70)
        // and (t=3,e=90) against the published demand rows.
        let ours_t1: Vec<u32> = eq.policies.iter().map(|p| p.demand[0][0]).collect();
        let ours_t3: Vec<u32> = eq.policies.iter().map(|p| p.demand[2][1]).collect();
        let mism1 = ours_t1.iter().zip(&tables.demand_t1_e70).filter(|(a, b)| a != b).count();
        let mism3 = ours_t3.iter().zip(&tables.demand_t3_e90).filter(|(a, b)| a != b).count();
        let soft = json!({
            "t1e70": { "mismatches": mism1, "ourTotal": ours_t1.iter().sum::<u32>(),
                        "publishedTotal": tables.demand_t1_e70.iter().sum::<u32>() },
            "t3e90": { "mismatches": mism3, "ourTotal": ours_t3.iter().sum::<u32>(),
                        "publishedTotal": tables.demand_t3_e90.iter().sum::<u32>() },
        });
        doc["softCheck"] = soft.clone();
        summary["softCheck"] = soft;
    }

    write_out(out_dir, "equilibrium.json", &pretty(&doc))?;
    write_out(out_dir, "fip_trace.csv", &fip_trace_csv(&eq))?;
    write_manifest(out_dir, "solve", &config_hash, seed)?;
    println!("{summary}");
    if eq.converged {
        Ok(())
    } else {
        Err(RunError::Incomplete(format!("improvement sweep did not converge within {kmax} iterations")))
    }
}

fn cmd_learn(
    loaded: &LoadedConfig,
    config_hash: String,
    out_dir: &Path,
    iters: usize,
    eval_every: usize,
    seed: u64,
    cap: usize,
) -> Result<(), RunError> {
    let g1 = &loaded.game;
    let opts = FpOptions {
        iterations: iters,
        seed,
        eval_every,
        state_cap: cap,
        schedule: Schedule::Harmonic,
    };
    let (profile, trace) = match fp_mdp_solve(g1, &opts) {
        Ok(result) => result,
        Err(e) => {
            // Cap failures abort the run; still leave a manifest behind.
            write_out(out_dir, "learned_profile.json", &pretty(&json!({ "error": e.to_string() })))?;
            write_manifest(out_dir, "learn", &config_hash, Some(seed))?;
            return Err(RunError::Incomplete(e.to_string()));
        }
    };

    let mut csv = String::from("iteration,nashconv");
    for i in 0..g1.num_users() {
        csv.push_str(&format!(",user{i}_l1"));
    }
    csv.push('\n');
    for row in &trace {
        csv.push_str(&format!("{},{}", row.iteration, row.nashconv));
        for change in &row.policy_change {
            csv.push_str(&format!(",{change}"));
        }
        csv.push('\n');
    }

    let initial = trace.first().map(|r| r.nashconv);
    let fin = trace.last().map(|r| r.nashconv);
    let doc = json!({
        "iterations": iters,
        "seed": seed,
        "initialNashconv": initial,
        "finalNashconv": fin,
        "profile": profile_json(&profile, g1),
    });
    write_out(out_dir, "learned_profile.json", &pretty(&doc))?;
    write_out(out_dir, "fp_trace.csv", &csv)?;
    write_manifest(out_dir, "learn", &config_hash, Some(seed))?;
    println!(
        "{}",
        json!({
            "command": "learn",
            "iterations": iters,
            "initialNashconv": initial,
            "finalNashconv": fin,
            "out": out_dir.display().to_string(),
        })
    );
    Ok(())
}

fn cmd_price(
    loaded: &LoadedConfig,
    config_hash: String,
    out_dir: &Path,
    kmax: usize,
    strict_reference: bool,
) -> Result<(), RunError> {
    let grid = loaded
        .grid
        .as_ref()
        .ok_or_else(|| RunError::Config("config has no grid section".into()))?;
    let result = grid_search_pricing(&loaded.game, grid, kmax)
        .map_err(|e| RunError::Config(e.to_string()))?;

    let mut csv = String::from("alpha,beta,U,converged\n");
    for cell in &result.cells {
        csv.push_str(&format!("{},{},{},{}\n", cell.alpha, cell.beta, cell.payoff, cell.converged));
    }
    let cells: Vec<serde_json::Value> = result
        .cells
        .iter()
        .map(|c| {
            json!({
                "alpha": c.alpha, "beta": c.beta, "payoff": c.payoff,
                "converged": c.converged, "aggregateDemand": c.demand_totals,
            })
        })
        .collect();
    let winner = result.winner.map(|w| json!({ "alpha": w.alpha, "beta": w.beta, "payoff": w.payoff }));
    // Equilibrium-selection caveat: payoffs are evaluated at the specific
    // equilibrium the all-zero-initialized sweep converges to.
    let mut doc = json!({
        "winner": winner,
        "cells": cells,
        "initialization": "all-zero demand profile",
    });

    let mut failed_strict = None;
    if strict_reference {
        let beta_count = grid.beta_values.len();
        let row_argmax: Vec<f64> = (0..grid.alpha_values.len())
            .map(|a| {
                result
                    .row(a, beta_count)
                    .iter()
                    .max_by(|x, y| x.payoff.partial_cmp(&y.payoff).unwrap())
                    .map(|c| c.beta)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        let winner_pair = result.winner.map(|w| (w.alpha, w.beta));
        let ok = row_argmax == vec![21.0, 20.0, 19.0] && winner_pair == Some((21.0, 19.0));
        doc["referenceCheck"] = json!({
            "rowBetaArgmax": row_argmax,
            "expectedRowBetaArgmax": [21.0, 20.0, 19.0],
            "winner": winner_pair.map(|(a, b)| vec![a, b]),
            "expectedWinner": [21.0, 19.0],
            "matches": ok,
        });
        if !ok {
            failed_strict = Some("pricing table does not reproduce the reference pattern".to_string());
        }
    }

    write_out(out_dir, "pricing.json", &pretty(&doc))?;
    write_out(out_dir, "pricing_table.csv", &csv)?;
    write_manifest(out_dir, "price", &config_hash, None)?;
    println!(
        "{}",
        json!({
            "command": "price",
            "winner": result.winner.map(|w| vec![w.alpha, w.beta]),
            "cells": result.cells.len(),
            "allConverged": result.cells.iter().all(|c| c.converged),
            "out": out_dir.display().to_string(),
        })
    );
    if result.cells.iter().any(|c| !c.converged) {
        return Err(RunError::Incomplete("some grid cells did not converge".into()));
    }
    if let Some(msg) = failed_strict {
        return Err(RunError::Incomplete(msg));
    }
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct EstimateConfig {
    panel: PathBuf,
    #[serde(default = "default_scale")]
    scale: f64,
    support_levels: Vec<f64>,
}

fn default_scale() -> f64 {
    1.0
}

fn cmd_estimate(config_path: &Path, out_dir: &Path) -> Result<(), RunError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let cfg: EstimateConfig =
        serde_json::from_str(&text).map_err(|e| RunError::Config(format!("estimate config: {e}")))?;
    let panel_path = if cfg.panel.is_relative() {
        config_path.parent().unwrap_or(Path::new(".")).join(&cfg.panel)
    } else {
        cfg.panel.clone()
    };
    let csv = fs::read_to_string(&panel_path)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", panel_path.display())))?;
    let records = records_from_csv(&csv).map_err(|e| RunError::Config(e.to_string()))?;
    let outcome = estimate_forecast_and_chain(&records, cfg.scale, &cfg.support_levels)
        .map_err(|e| RunError::Config(e.to_string()))?;

    let doc = json!({
        "chain": chain_to_json(&outcome.chain),
        "snappedLevels": outcome.snapped,
        "uniformFallbackRows": outcome.uniform_rows,
    });
    write_out(out_dir, "chain.json", &pretty(&doc))?;
    write_manifest(out_dir, "estimate", &sha256(text.as_bytes()), None)?;
    println!(
        "{}",
        json!({
            "command": "estimate",
            "horizon": outcome.chain.horizon(),
            "uniformFallbackRows": outcome.uniform_rows,
            "out": out_dir.display().to_string(),
        })
    );
    Ok(())
}

fn cmd_verify(
    loaded: &LoadedConfig,
    config_hash: String,
    out_dir: &Path,
    trials: usize,
    seed: u64,
    cap: usize,
    kmax: usize,
) -> Result<(), RunError> {
    let g1 = &loaded.game;
    let mut doc = json!({});
    let mut degraded = None;

    let all_linear = g1.users.iter().all(|u| u.theta().is_some());
    if all_linear {
        let g2 = build_reduced_game(g1).map_err(|e| RunError::Config(e.to_string()))?;
        let discrepancy = verify_potential_property(&g2, trials, seed);
        doc["potentialIdentity"] = json!({
            "trials": trials,
            "maxDiscrepancy": discrepancy,
            "tolerance": 1e-9,
            "holds": discrepancy <= 1e-9,
        });
        let t = g2.horizon();
        let m = g2.num_errors();
        let initial: Vec<PurePublicPolicy> =
            (0..g2.num_users()).map(|_| PurePublicPolicy::zeros(t, m)).collect();
        let eq = fip_solve(&g2, initial, kmax);
        if eq.converged {
            let lifted = lift_to_pme(&eq.policies, g1);
            match nashconv(&lifted, g1, cap) {
                Ok(value) => {
                    doc["nashconv"] = json!({
                        "value": value,
                        "tolerance": 1e-9,
                        "isEquilibrium": value <= 1e-9,
                    });
                }
                Err(e) => {
                    doc["nashconv"] = json!({ "error": e.to_string() });
                    degraded = Some(e.to_string());
                }
            }
        } else {
            doc["nashconv"] = json!({ "error": "equilibrium solve did not converge" });
            degraded = Some("equilibrium solve did not converge".into());
        }
    } else {
        doc["potentialIdentity"] =
            json!({ "skipped": "tabulated utilities have no demand-only reduction" });
    }

    if let Some(spec) = &loaded.dominance {
        let family = NonStorageFamily { demand_choices: spec.demand_choices.clone() };
        let report = check_storage_dominance(g1, &spec.storage, &family);
        let family_size = family.strategies(g1.horizon()).len();
        doc["dominance"] = json!({
            "conditionC1Holds": report.condition_c1_holds,
            "dominatedStrategyCount": report.dominated_strategy_count,
            "familySize": family_size,
            "counterexample": report.counterexample.as_ref().map(|ce| json!({
                "user": ce.user,
                "strategyDemands": ce.strategy,
                "opponentDemands": ce.opponents,
                "initialError": ce.initial_error,
                "gap": ce.gap,
            })),
        });
    }

    write_out(out_dir, "verify.json", &pretty(&doc))?;
    write_manifest(out_dir, "verify", &config_hash, Some(seed))?;
    println!(
        "{}",
        json!({
            "command": "verify",
            "report": doc,
            "out": out_dir.display().to_string(),
        })
    );
    match degraded {
        None => Ok(()),
        Some(msg) => Err(RunError::Incomplete(msg)),
    }
}
