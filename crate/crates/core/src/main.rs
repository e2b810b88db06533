use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wincurse::bma;
use wincurse::io::{self, EffectScale, InputDefaults, PConvention, SimulateConfig};
use wincurse::normal;
use wincurse::sampler::{ChainConfig, SpikeSlabPrior, SpikeUpdate, DEFAULT_HPD_MASS, DEFAULT_U_MAX};
use wincurse::simulation;
use wincurse::{CorrectionSettings, Method};

#[derive(Parser)]
#[command(name = "wincurse", version, about = "Winner's-curse corrected effect estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correct every record of a summary-statistic TSV.
    Correct(CorrectArgs),
    /// Run the bias/RMSE simulation described by a TOML file.
    Simulate(SimulateArgs),
    /// Print prior and posterior model weights.
    Weights(WeightsArgs),
    /// Tabulate Beta densities of the false-positive probability for plotting.
    Priors(PriorsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    OneSided,
    TwoSided,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScaleArg {
    LogOr,
    Coefficient,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpikeArg {
    RedrawSlab,
    ZeroSlab,
}

#[derive(Args)]
struct CorrectArgs {
    input: PathBuf,
    /// Threshold for records whose alpha cell is empty.
    #[arg(long)]
    alpha: Option<f64>,
    /// Additional Beta(a,b) prior on the false-positive probability, as `a,b`.
    #[arg(long = "prior", value_parser = parse_prior)]
    priors: Vec<(f64, f64)>,
    #[arg(long, default_value_t = DEFAULT_U_MAX)]
    u_max: f64,
    #[arg(long, default_value_t = 20_000)]
    iterations: usize,
    #[arg(long, default_value_t = 5_000)]
    burnin: usize,
    #[arg(long, default_value_t = 0.1)]
    proposal_sd: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "one-sided")]
    p_convention: ConventionArg,
    #[arg(long, value_enum, default_value = "log-or")]
    effect_scale: ScaleArg,
    #[arg(long, value_enum, default_value = "redraw-slab")]
    spike_update: SpikeArg,
    /// Draws per model for bridge sampling, capped at the retained draws; 0 uses all.
    #[arg(long, default_value_t = 10_000)]
    bridge_draws: usize,
    #[arg(long, default_value_t = DEFAULT_HPD_MASS)]
    hpd_mass: f64,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    /// Output path without extension; stdout when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML configuration; built-in defaults when absent.
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Only print the sample size of each (alpha, power) cell.
    #[arg(long)]
    table1: bool,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    /// Critical value.
    #[arg(long, conflicts_with = "alpha", required_unless_present = "alpha")]
    c: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Marginal likelihood ratio of the skeptical to the confident model.
    #[arg(long)]
    r: Option<f64>,
}

#[derive(Args)]
struct PriorsArgs {
    /// Priors as `a,b`; the four presets when absent.
    #[arg(long = "prior", value_parser = parse_prior)]
    priors: Vec<(f64, f64)>,
    /// Interior grid points on (0, 1).
    #[arg(long, default_value_t = 199)]
    points: usize,
}

fn parse_prior(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected a,b but got '{s}'"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad shape '{a}'"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad shape '{b}'"))?;
    if !(a > 0.0 && b > 0.0) {
        return Err("Beta shapes must be positive".into());
    }
    Ok((a, b))
}

fn emit(output: Option<&Path>, ext: &str, contents: &str) -> wincurse::Result<()> {
    match output {
        Some(base) => io::write_atomic(&base.with_extension(ext), contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run_correct(args: CorrectArgs) -> wincurse::Result<ExitCode> {
    let chain = ChainConfig {
        iterations: args.iterations,
        burn_in: args.burnin,
        proposal_sd: args.proposal_sd,
        spike_update: match args.spike_update {
            SpikeArg::RedrawSlab => SpikeUpdate::RedrawSlab,
            SpikeArg::ZeroSlab => SpikeUpdate::ZeroSlab,
        },
        ..ChainConfig::default()
    };
    chain.validate()?;
    let mut settings = CorrectionSettings {
        chain,
        u_max: args.u_max,
        ci_level: args.ci_level,
        hpd_mass: args.hpd_mass,
        ..CorrectionSettings::default()
    };
    settings.bridge.draws_per_model = (args.bridge_draws > 0).then(|| args.bridge_draws.min(chain.retained()));
    for (a, b) in &args.priors {
        settings.extra_priors.push((Method::BayesCustom, SpikeSlabPrior::new(*a, *b, args.u_max)?));
    }
    if let Some(a) = args.alpha {
        normal::critical_value(a)?;
    }
    let defaults = InputDefaults {
        alpha: args.alpha,
        p_convention: match args.p_convention {
            ConventionArg::OneSided => PConvention::OneSided,
            ConventionArg::TwoSided => PConvention::TwoSided,
        },
        effect_scale: match args.effect_scale {
            ScaleArg::LogOr => EffectScale::LogOr,
            ScaleArg::Coefficient => EffectScale::Coefficient,
        },
    };

    let text = std::fs::read_to_string(&args.input)?;
    let parsed = io::parse_tsv(&text, &defaults)?;
    let report = io::correct_records(parsed, &settings, args.seed);
    for s in &report.skipped {
        eprintln!("skipped line {}: {}", s.line, s.reason);
    }
    let labels: Vec<String> =
        settings.extra_priors.iter().map(|(m, p)| io::prior_label(*m, p.a, p.b)).collect();
    let out = args.output.as_deref();
    if matches!(args.format, Format::Tsv | Format::Both) {
        emit(out, "tsv", &io::report_tsv(&report, &labels))?;
    }
    if matches!(args.format, Format::Json | Format::Both) {
        emit(out, "json", &io::report_json(&report)?)?;
    }
    Ok(if report.skipped.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_simulate(args: SimulateArgs) -> wincurse::Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(p) => SimulateConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => SimulateConfig::from_toml("")?,
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    let out = args.output.as_deref();
    if args.table1 {
        let mu = cfg.mu.unwrap_or_else(simulation::study_mu);
        emit(out, "tsv", &io::sample_size_tsv(mu, cfg.sigma, &cfg.alphas, &cfg.powers)?)?;
        return Ok(ExitCode::SUCCESS);
    }
    let scenarios = cfg.scenarios()?;
    let settings = cfg.settings()?;
    let runs = scenarios
        .iter()
        .enumerate()
        .map(|(k, s)| simulation::run_scenario(s, &settings, simulation::cell_seed(cfg.seed, k)))
        .collect::<wincurse::Result<Vec<_>>>()?;
    let tables: Vec<_> = runs.iter().map(|r| r.table.clone()).collect();
    let version = env!("CARGO_PKG_VERSION");
    if matches!(args.format, Format::Tsv | Format::Both) {
        emit(out, "tsv", &io::summary_tsv(&tables, cfg.seed, version))?;
    }
    if matches!(args.format, Format::Json | Format::Both) {
        let doc = serde_json::json!({
            "metadata": { "version": version, "seed": cfg.seed, "config": &cfg },
            "cells": &tables,
        });
        emit(out, "json", &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    if cfg.dump_replicates {
        let dump = io::replicate_tsv(&runs);
        match out {
            Some(base) => io::write_atomic(&base.with_extension("replicates.tsv"), &dump)?,
            None => eprint!("{dump}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_weights(args: WeightsArgs) -> wincurse::Result<ExitCode> {
    let c = match (args.c, args.alpha) {
        (Some(c), _) => c,
        (None, Some(a)) => normal::critical_value(a)?,
        (None, None) => unreachable!("clap requires one of --c and --alpha"),
    };
    let (p1, p2) = bma::prior_model_weights(c)?;
    println!("c\t{c:.6}");
    println!("prior_w1\t{p1:.6}");
    println!("prior_w2\t{p2:.6}");
    if let Some(r) = args.r {
        let (w1, w2) = bma::posterior_model_weights(r, c)?;
        println!("posterior_w1\t{w1:.6}");
        println!("posterior_w2\t{w2:.6}");
    }
    Ok(ExitCode::SUCCESS)
}

fn short(x: f64) -> String {
    let s = format!("{x:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn run_priors(args: PriorsArgs) -> wincurse::Result<ExitCode> {
    let priors: Vec<SpikeSlabPrior> = if args.priors.is_empty() {
        [Method::BayesLow, Method::BayesHigh, Method::BayesMixed, Method::BayesUniform]
            .iter()
            .map(|m| SpikeSlabPrior::preset(*m, DEFAULT_U_MAX).expect("preset"))
            .collect()
    } else {
        args.priors.iter().map(|(a, b)| SpikeSlabPrior::new(*a, *b, DEFAULT_U_MAX)).collect::<wincurse::Result<_>>()?
    };
    let mut out = String::from("xi");
    for p in &priors {
        out += &format!("\tBeta({},{})", short(p.a), short(p.b));
    }
    out.push('\n');
    for i in 1..=args.points {
        let xi = i as f64 / (args.points + 1) as f64;
        out += &format!("{xi:.6}");
        for p in &priors {
            out += &format!("\t{:.6e}", p.ln_xi_density(xi).exp());
        }
        out.push('\n');
    }
    print!("{out}");
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Correct(a) => run_correct(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Weights(a) => run_weights(a),
        Command::Priors(a) => run_priors(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
