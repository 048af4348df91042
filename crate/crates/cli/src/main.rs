use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neurodenote::chess::synth::{generate_pgn, SynthConfig};
use neurodenote::{Family, ObserverKind, PropertyKind};
use neurodenote_cli::config::SilhouetteSpec;
use neurodenote_cli::manifest::MANIFEST_FILE;
use neurodenote_cli::stages::{self, Run};
use neurodenote_cli::{report, CliError, CliResult, DirLock, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "neurodenote",
    version,
    about = "Probe a chess move predictor for neurons that denote board properties"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArg {
    /// Experiment config (JSON).
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write the desk-scale default config.
    Init {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "neurodenote-out")]
        output_dir: PathBuf,
    },
    /// Generate a seeded self-play PGN corpus.
    Synth {
        #[arg(long, default_value_t = 500)]
        games: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        max_plies: usize,
        #[arg(long, default_value_t = 0.3)]
        temperature: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse, label and cache positions.
    Ingest(ConfigArg),
    /// Train the object model.
    TrainObject(ConfigArg),
    /// Record activation snapshots for the observer datasets.
    Snapshot(ConfigArg),
    /// Train observers.
    TrainObserver {
        #[command(flatten)]
        config: ConfigArg,
        /// Restrict to these kinds (default: from the config).
        #[arg(long = "kind")]
        kinds: Vec<ObserverKind>,
        /// Restrict to these properties (default: from the config).
        #[arg(long = "property")]
        properties: Vec<PropertyKind>,
    },
    /// Render linear-observer heat maps.
    Heatmap {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long = "property")]
        properties: Vec<PropertyKind>,
    },
    /// Run the top-|weight| silhouette study, or assess one silhouette.
    Silhouette {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long = "property")]
        properties: Vec<PropertyKind>,
        /// Assess this silhouette (`L1N5+L2N7` or `full`) instead of the study.
        #[arg(long)]
        silhouette: Option<String>,
        #[arg(long, default_value = "linear")]
        family: Family,
        #[arg(long, default_value_t = 0.86)]
        threshold: f64,
    },
    /// Firing proportions, CDFs and the annihilation control.
    Proportions(ConfigArg),
    /// Every stage in order.
    Pipeline(ConfigArg),
    /// Summarize a manifest.
    Report {
        /// Manifest file, or the output directory holding it.
        manifest: PathBuf,
    },
}

fn open(arg: &ConfigArg) -> CliResult<(Run, DirLock)> {
    let cfg = ExperimentConfig::load(&arg.config)?;
    let lock = DirLock::acquire(&cfg.output_dir)?;
    Ok((Run::open(cfg)?, lock))
}

fn or_config<T: Clone>(given: Vec<T>, configured: &[T]) -> Vec<T> {
    if given.is_empty() {
        configured.to_vec()
    } else {
        given
    }
}

fn run(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Init { out, output_dir } => {
            let cfg = ExperimentConfig::desk(output_dir);
            let text = serde_json::to_string_pretty(&cfg).expect("config serializes") + "\n";
            std::fs::write(&out, text).map_err(|e| CliError::io(&out, e))?;
        }
        Command::Synth {
            games,
            seed,
            max_plies,
            temperature,
            out,
        } => {
            let pgn = generate_pgn(&SynthConfig {
                games,
                seed,
                max_plies,
                temperature,
            });
            std::fs::write(&out, pgn).map_err(|e| CliError::io(&out, e))?;
        }
        Command::Ingest(c) => {
            let (mut run, _lock) = open(&c)?;
            let (_, summary, reused) = stages::ingest(&mut run)?;
            run.save_manifest()?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
            if reused {
                eprintln!("input unchanged; cache reused");
            }
        }
        Command::TrainObject(c) => {
            let (mut run, _lock) = open(&c)?;
            let records = run.load_records()?;
            let (_, report) = stages::train_object_stage(&mut run, &records)?;
            run.save_manifest()?;
            println!(
                "train top-1 {:.4}  test top-1 {:.4}  uniform {:.4}",
                report.train_accuracy, report.test_accuracy, report.uniform_baseline
            );
        }
        Command::Snapshot(c) => {
            let (mut run, _lock) = open(&c)?;
            let records = run.load_records()?;
            let model = run.load_object_model()?;
            let snaps = stages::snapshot_stage(&mut run, &records, &model)?;
            run.save_manifest()?;
            for (p, (train, test)) in &snaps {
                println!("{p}: {} train / {} test rows", train.len(), test.len());
            }
        }
        Command::TrainObserver {
            config,
            kinds,
            properties,
        } => {
            let (mut run, _lock) = open(&config)?;
            let kinds = or_config(kinds, &run.cfg.observer.kinds);
            let mut snaps = std::collections::BTreeMap::new();
            for p in or_config(properties, &run.cfg.observer.properties) {
                snaps.insert(p, run.load_snapshots(p)?);
            }
            let reports = stages::observer_stage(&mut run, &snaps, &kinds)?;
            run.save_manifest()?;
            for r in reports {
                println!(
                    "{:<7} {:<22} test acc {:.4}  test F1 {:.4}",
                    r.kind.name(),
                    r.property.name(),
                    r.test.accuracy,
                    r.test.f1.unwrap_or(0.0)
                );
            }
        }
        Command::Heatmap { config, properties } => {
            let (mut run, _lock) = open(&config)?;
            let props = or_config(properties, &run.cfg.observer.properties);
            stages::heatmap_stage(&mut run, &props)?;
            run.save_manifest()?;
        }
        Command::Silhouette {
            config,
            properties,
            silhouette,
            family,
            threshold,
        } => {
            let (mut run, _lock) = open(&config)?;
            let props = or_config(properties, &run.cfg.observer.properties);
            match silhouette {
                Some(s) => {
                    for p in props {
                        let spec = SilhouetteSpec {
                            property: p,
                            silhouette: s.clone(),
                            family,
                            threshold,
                        };
                        let r = stages::assess_one(&run, p, &spec)?;
                        println!(
                            "{} {} {}: {} {:.4} (t = {}) -> {}",
                            p.name(),
                            s,
                            family,
                            r.measure,
                            r.performance,
                            r.threshold,
                            if r.verdict { "denotes" } else { "does not denote" }
                        );
                    }
                }
                None => {
                    for study in stages::silhouette_stage(&mut run, &props)? {
                        for r in &study.results {
                            println!("{} {} F1 {:.4}", study.property.name(), r.silhouette, r.f1);
                        }
                    }
                    run.save_manifest()?;
                }
            }
        }
        Command::Proportions(c) => {
            let (mut run, _lock) = open(&c)?;
            let records = run.load_records()?;
            let model = run.load_object_model()?;
            let study = stages::proportion_stage(&mut run, &records, &model)?;
            run.save_manifest()?;
            println!(
                "overall median {:.4}; layer medians {:?}; annihilated {:?}",
                study.train.overall_median, study.train.layer_medians, study.train.annihilated
            );
        }
        Command::Pipeline(c) => {
            let (mut run, _lock) = open(&c)?;
            stages::pipeline(&mut run)?;
            let rendered = report::render(&run.root.join(MANIFEST_FILE))?;
            print!("{}", rendered.text);
        }
        Command::Report { manifest } => {
            let path = if manifest.is_dir() {
                manifest.join(MANIFEST_FILE)
            } else {
                manifest
            };
            let rendered = report::render(&path)?;
            print!("{}", rendered.text);
            for m in &rendered.missing {
                eprintln!("MISSING: {m}");
            }
            return Ok(rendered.exit_code());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
