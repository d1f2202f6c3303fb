use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use csk_facets::config::Config;
use csk_facets::eval::{mean_ppref, ppref_by_facet, tune, write_tune_log, TuneOptions};
use csk_facets::grounding::{count_by_rule, write_clause_dump, RuleId};
use csk_facets::lp::write_mps;
use csk_facets::model::Facet;
use csk_facets::partition::write_telemetry;
use csk_facets::pipeline::{fixed6, ingest, prepare, run_pipeline, write_atomically};

#[derive(Parser)]
#[command(name = "csk-facets", version, about = "Score commonsense statements on four facets")]
struct Cli {
    /// key=value configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load inputs and report row, edge and matching diagnostics.
    IngestCheck,
    /// Write cues and prior scores for every candidate statement.
    PriorsDump {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Write every grounded clause with its weights.
    GroundDump {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Solve the partition anchored at one subject and print its rankings.
    SolveOne {
        subject: String,
        /// Also write the partition LP in MPS format.
        #[arg(long)]
        mps: Option<PathBuf>,
    },
    /// Run the full pipeline and write the scored output.
    Rank {
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Pairwise-preference precision of the solved ranking against labels.
    Eval {
        /// Labeled pairs; defaults to the `labels` key.
        #[arg(long)]
        pairs: Option<PathBuf>,
    },
    /// Search rule weights against the labels and print the best ones.
    Tune {
        /// Where to write the evaluation log.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Emit the best unobserved candidates per subject at several recall levels.
    Enrich {
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Comma-separated levels; defaults to the `enrich_levels` key.
        #[arg(long)]
        levels: Option<String>,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &cli.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(csk_facets::Error::Config {
                key: kv.clone(),
                message: "expected KEY=VALUE".into(),
            }
            .into());
        };
        set_from_cli(&mut cfg, k.trim(), v.trim())?;
    }
    Ok(cfg)
}

/// Command-line paths are relative to the working directory, not to the
/// config file.
fn set_from_cli(cfg: &mut Config, key: &str, value: &str) -> Result<()> {
    if Config::PATH_KEYS.contains(&key) && !value.is_empty() {
        let abs = std::path::absolute(value)?;
        cfg.set(key, &abs.display().to_string())?;
    } else {
        cfg.set(key, value)?;
    }
    Ok(())
}

/// Buffered writer to `path`, or stdout when absent.
fn emit(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    match path {
        Some(p) => write_atomically(p, body)?,
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            body(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::IngestCheck => {
            let ing = ingest(&cfg)?;
            println!("statements: {}", ing.csk.len());
            println!("csk rows: {}", ing.csk_report.rows);
            println!("csk rejected rows: {}", ing.csk_report.rejected.len());
            println!("csk merged duplicates: {}", ing.csk_report.merged_duplicates);
            println!("taxonomy nodes: {}", ing.taxonomy.node_count());
            println!("taxonomy edges: {}", ing.taxonomy.edge_count());
            print!("{}", ing.taxonomy_report.render(&ing.vocab));
        }
        Command::PriorsDump { output } => {
            let p = prepare(&cfg)?;
            log::info!("{} statements use overridden priors", p.overridden);
            emit(output.as_deref(), |w| p.write_priors(w))?;
        }
        Command::GroundDump { output } => {
            let p = prepare(&cfg)?;
            let clauses = p.ground(&cfg.weights);
            for (r, n) in RuleId::ALL.iter().zip(count_by_rule(&clauses)) {
                log::info!("{r}: {n} clauses");
            }
            emit(output.as_deref(), |w| write_clause_dump(w, &clauses, &p.candidates, &p.vocab))?;
        }
        Command::SolveOne { subject, mps } => {
            let p = prepare(&cfg)?;
            let s = p.solve_subject(&cfg.weights, &subject)?;
            if let Some(path) = mps {
                write_atomically(&path, |w| write_mps(w, &subject, &s.encoded.lp))?;
            }
            emit(None, |w| {
                write_telemetry(&mut *w, std::slice::from_ref(&s.telemetry), &p.vocab)?;
                writeln!(w)?;
                writeln!(w, "facet\trank\tproperty\tscore\tprimal")?;
                for ranking in &s.rankings {
                    for e in &ranking.entries {
                        let k = p.candidates.get(e.statement).key;
                        writeln!(
                            w,
                            "{}\t{}\t{}\t{}\t{}",
                            ranking.facet,
                            e.rank,
                            p.vocab.property_name(k.property),
                            fixed6(e.key),
                            fixed6(e.primal)
                        )?;
                    }
                }
                Ok(())
            })?;
        }
        Command::Rank { output } => {
            if let Some(o) = output {
                set_from_cli(&mut cfg, "output", &o.display().to_string())?;
            }
            let solution = run_pipeline(&cfg)?;
            log::info!("solved {} partitions", solution.telemetry.len());
        }
        Command::Eval { pairs } => {
            if let Some(path) = pairs {
                set_from_cli(&mut cfg, "labels", &path.display().to_string())?;
            }
            if cfg.paths.labels.is_none() {
                return Err(csk_facets::Error::Config {
                    key: "labels".into(),
                    message: "required path is not set".into(),
                }
                .into());
            }
            let p = prepare(&cfg)?;
            let labels = p.scorable_labels(&p.labels);
            let solution = p.solve(&cfg.weights, cfg.worker_count())?;
            let lp = p.evaluate(&solution, &labels)?;
            let prior = ppref_by_facet(&labels, |s, prop, f| {
                let key = csk_facets::model::StatementKey::new(p.vocab.find_concept(s)?, p.vocab.find_property(prop)?);
                Some(p.priors[p.candidates.id(key)?.0 as usize].get(f))
            })?;
            println!("facet\tppref\tppref_priors");
            let cell = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
            for f in Facet::ALL {
                println!("{f}\t{}\t{}", cell(lp[f.index()]), cell(prior[f.index()]));
            }
            println!("mean\t{}\t{}", cell(mean_ppref(&lp)), cell(mean_ppref(&prior)));
        }
        Command::Tune { log: log_path, budget } => {
            cfg.require("labels")?;
            let p = prepare(&cfg)?;
            let labels = p.scorable_labels(&p.labels);
            if labels.is_empty() {
                bail!("no labeled pairs refer to known statements");
            }
            let opts = TuneOptions {
                seed: cfg.seed,
                budget: budget.unwrap_or(cfg.tune_budget),
                ..TuneOptions::default()
            };
            let workers = cfg.worker_count();
            let outcome = tune(cfg.weights, &opts, |w| {
                let solution = p.solve(w, workers)?;
                p.evaluate(&solution, &labels)
            })?;
            if let Some(path) = log_path {
                write_atomically(&path, |w| write_tune_log(w, &outcome.log))?;
            }
            println!("# mean ppref {:.6} after {} evaluations", outcome.best_mean, outcome.log.len());
            for r in RuleId::ALL {
                println!("weight.{} = {}", r.tag(), outcome.best.get(r));
            }
        }
        Command::Enrich { output, levels } => {
            if let Some(l) = levels {
                cfg.set("enrich_levels", &l)?;
            }
            if !cfg.expand {
                log::warn!("expand is off, so there are no unobserved candidates to emit");
            }
            let p = prepare(&cfg)?;
            let solution = p.solve(&cfg.weights, cfg.worker_count())?;
            let rows = p.enrich(&solution, &cfg.enrich_levels);
            emit(output.as_deref(), |w| p.write_enrichment(w, &solution, &rows))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let closed = e
                .chain()
                .any(|c| c.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe));
            if closed {
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e:#}");
            let config = e
                .chain()
                .any(|c| c.downcast_ref::<csk_facets::Error>().is_some_and(|e| e.is_config()));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
