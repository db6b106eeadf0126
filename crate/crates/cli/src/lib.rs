//! Argument parsing and dispatch for the `graphst` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use graphst::eval::{evaluate_embeddings, run_ablation, write_eval_report, EvalConfig, EvalRow, REPORT_FILE};
use graphst::gradsuite::{run_gradcheck_suite, GRADCHECK_TOL};
use graphst::graph::write_graph;
use graphst::region::{load_dataset, synth_city, write_dataset, Dataset, DatasetPaths, SynthConfig};
use graphst::trainer::*;
use graphst::{Error, Result};

pub const RUN_CONFIG_FILE: &str = "run_config.txt";
pub const GRADCHECK_CASES: usize = 100;

#[derive(Parser, Debug)]
#[command(name = "graphst", version, about = "Multi-view region graph pre-training")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// `name = value` hyperparameter file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override one key; repeatable. `synth.*` keys shape generated cities.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Dataset directory; a synthetic city is generated from the seed when absent.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Verb {
    /// Write a synthetic city.
    GenData,
    /// Dump the fused multi-view graph.
    BuildGraph,
    /// Train and write the loss history, snapshot and embeddings.
    Pretrain,
    /// Recompute embeddings from a saved snapshot.
    Embed {
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
    /// Score an embeddings file on the dataset labels.
    Eval {
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Train every ablation variant per seed and compare.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
    },
    /// Finite-difference check of every differentiable operation.
    Gradcheck,
}

struct Setup {
    hp: Hyperparameters,
    synth: SynthConfig,
    out: PathBuf,
    data: Option<PathBuf>,
}

fn setup(cli: &Cli) -> Result<Setup> {
    let mut hp = match &cli.config {
        Some(p) => Hyperparameters::from_file(p)?,
        None => Hyperparameters::default(),
    };
    let mut synth = SynthConfig::default();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        match k.trim().strip_prefix("synth.") {
            Some(key) => set_synth(&mut synth, key, v.trim())?,
            None => hp.set(k, v)?,
        }
    }
    if let Some(s) = cli.seed {
        hp.seed = s;
    }
    synth.seed = hp.seed;
    hp.validate()?;
    Ok(Setup { hp, synth, out: cli.out.clone(), data: cli.data.clone() })
}

fn set_synth(cfg: &mut SynthConfig, key: &str, v: &str) -> Result<()> {
    let bad = || Error::Config(format!("synth.{key}: cannot parse `{v}`"));
    let int = || v.parse::<usize>().map_err(|_| bad());
    match key {
        "regions" => cfg.regions = int()?,
        "categories" => cfg.categories = int()?,
        "slots" => cfg.slots = int()?,
        "communities" => cfg.communities = int()?,
        "trips_per_region" => cfg.trips_per_region = int()?,
        "series_len" => cfg.series_len = int()?,
        "noise" => cfg.noise = v.parse().map_err(|_| bad())?,
        other => return Err(Error::Config(format!("unknown key `synth.{other}`"))),
    }
    Ok(())
}

impl Setup {
    fn dataset(&self) -> Result<Dataset> {
        match &self.data {
            Some(dir) => load_dataset(&DatasetPaths::in_dir(dir)),
            None => synth_city(&self.synth),
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::Io { path: self.out.clone(), source: e })?;
        Ok(&self.out)
    }

    fn echo_config(&self) -> Result<()> {
        let path = self.out_dir()?.join(RUN_CONFIG_FILE);
        let mut text = self.hp.to_text();
        match &self.data {
            Some(d) => {
                let _ = writeln!(text, "data = {}", d.display());
            }
            None => {
                let s = &self.synth;
                let _ = writeln!(
                    text,
                    "synth = regions {} categories {} slots {} communities {} noise {} trips_per_region {} series_len {}",
                    s.regions, s.categories, s.slots, s.communities, s.noise, s.trips_per_region, s.series_len
                );
            }
        }
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })
    }
}

fn print_table(rows: &[EvalRow]) {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    println!("{:<12} {:>5} {:<10} {:>10} {:>10} {:>10} {:>8}", "variant", "seed", "stratum", "mae", "mape", "rmse", "nmi");
    for r in rows {
        println!(
            "{:<12} {:>5} {:<10} {:>10.4} {:>10} {:>10.4} {:>8}",
            r.variant,
            r.seed,
            r.stratum,
            r.metrics.mae,
            fmt(r.metrics.mape),
            r.metrics.rmse,
            fmt(r.nmi)
        );
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    if let Verb::Gradcheck = cli.verb {
        let reports = run_gradcheck_suite(GRADCHECK_CASES, cli.seed.unwrap_or(0))?;
        let mut ok = true;
        for r in &reports {
            println!("{:<24} cases {:>4}  max rel error {:.3e}", r.op, r.cases, r.max_rel_error);
            ok &= r.passed();
        }
        let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        println!("max rel error {worst:.3e} (tolerance {GRADCHECK_TOL:e})");
        return Ok(if ok { 0 } else { 2 });
    }
    let s = setup(cli)?;
    match &cli.verb {
        Verb::GenData => {
            let ds = synth_city(&s.synth)?;
            write_dataset(&ds, s.out_dir()?)?;
            println!("wrote {} regions to {}", ds.num_regions(), s.out.display());
        }
        Verb::BuildGraph => {
            let model = Model::new(&s.dataset()?, &s.hp)?;
            write_graph(&model.graph, s.out_dir()?)?;
            println!("{} nodes, {} edges", model.graph.len(), model.graph.num_edges());
        }
        Verb::Pretrain => {
            let ds = s.dataset()?;
            let (emb, model, history) = train(&ds, &s.hp)?;
            let out = s.out_dir()?;
            s.echo_config()?;
            write_loss_history(&history, out.join(LOSS_HISTORY_FILE))?;
            save_snapshot(&model, out.join(SNAPSHOT_FILE))?;
            export_embeddings(&emb, out.join(EMBEDDINGS_FILE))?;
            if let (Some(first), Some(last)) = (history.first(), history.last()) {
                println!("epochs {}  total loss {:.4} -> {:.4}", history.len(), first.total, last.total);
            }
        }
        Verb::Embed { snapshot } => {
            let path = snapshot.clone().unwrap_or_else(|| s.out.join(SNAPSHOT_FILE));
            let model = load_snapshot(&path)?;
            export_embeddings(&model.embeddings()?, s.out_dir()?.join(EMBEDDINGS_FILE))?;
            println!("embeddings for {} regions", model.graph.regions());
        }
        Verb::Eval { embeddings } => {
            let path = embeddings.clone().unwrap_or_else(|| s.out.join(EMBEDDINGS_FILE));
            let emb = read_embeddings(&path)?;
            let ds = s.dataset()?;
            if emb.rows() != ds.num_regions() {
                return Err(Error::Validation(format!("{} embedding rows for {} regions", emb.rows(), ds.num_regions())));
            }
            let rows = evaluate_embeddings(&emb, &ds, "given", s.hp.seed, &EvalConfig::default())?;
            write_eval_report(&rows, s.out_dir()?.join(REPORT_FILE))?;
            print_table(&rows);
        }
        Verb::Ablate { seeds } => {
            let ds = s.dataset()?;
            let rows = run_ablation(&ds, &s.hp, &AblationFlags::VARIANTS, seeds, &EvalConfig::default())?;
            s.echo_config()?;
            write_eval_report(&rows, s.out_dir()?.join(REPORT_FILE))?;
            print_table(&rows);
        }
        Verb::Gradcheck => unreachable!(),
    }
    Ok(0)
}

/// Exit code: 0 success, 1 bad input or usage, 2 numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
