//! Command-line orchestration for the traversability benchmarks: terrain
//! generation, self-supervised data collection, training, the learning and
//! navigation benchmarks, and report rendering.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evtrav::bench::{
    self, eval_learning, nav_methods, render_report, write_bins_csv, write_episodes_csv,
    write_learning_csv, write_maps_csv, write_nav_csv, Method,
};
use evtrav::config::ExperimentConfig;
use evtrav::predictor::train as train_net;
use evtrav::sim::{collect_episodes, load_records, save_records, split_dataset, TerrainMap};
use evtrav::{Error, Result};

#[derive(Parser)]
#[command(
    name = "evtrav",
    about = "Evidential traversability learning and risk-aware navigation benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Experiment config file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, e.g. --set train.lr=1e-3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            cfg.set(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic terrain maps plus a summary CSV.
    GenMaps {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Base seed; map i uses seed + i.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of maps.
        #[arg(long, default_value_t = 6)]
        n: usize,
        /// Unevenness multiplier.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll self-supervised episodes over maps and write a dataset.
    Collect {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory of .tmap files (read in sorted order).
        #[arg(long)]
        maps: PathBuf,
        /// Episodes per map.
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 77)]
        seed: u64,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one method on a dataset's ID split and write a checkpoint.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Method name (see --help of eval-learning for the list).
        #[arg(long, default_value = "phys-evid")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Learning benchmark: method x {overall, ID, OOD} EMD^2 over seeds.
    EvalLearning {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        train_dataset: PathBuf,
        #[arg(long)]
        test_dataset: PathBuf,
        /// Comma-separated method names; trained methods run once per seed.
        #[arg(
            long,
            default_value = "phys-evid,phys-loss-evid,phys-prior-evid,mlp-phys,mlp,evid,prior,uniform"
        )]
        methods: String,
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        /// Output directory for learning.csv and bins.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Navigation benchmark over test maps.
    BenchNav {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory of test .tmap files.
        #[arg(long)]
        maps: PathBuf,
        /// Training dataset (for the trained methods).
        #[arg(long)]
        train_dataset: PathBuf,
        #[arg(long, default_value = "phys-evid,evid-ood-avoid,prior")]
        methods: String,
        /// Training seed for the deployed networks.
        #[arg(long, default_value_t = 0)]
        train_seed: u64,
        /// Output directory for nav.csv and episodes.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a plain-text report from benchmark CSVs.
    Report {
        /// learning.csv from eval-learning.
        #[arg(long)]
        learning: Option<PathBuf>,
        /// bins.csv from eval-learning.
        #[arg(long)]
        bins: Option<PathBuf>,
        /// nav.csv from bench-nav.
        #[arg(long)]
        nav: Option<PathBuf>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole micro pipeline (maps, data, both benchmarks, report).
    Pipeline {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for every artifact.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_methods(raw: &str) -> Result<Vec<Method>> {
    raw.split(',').map(|s| Method::parse(s.trim())).collect()
}

fn load_maps_dir(dir: &Path) -> Result<Vec<TerrainMap>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "tmap").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingInput(format!(
            "no .tmap files in {} (run gen-maps first)",
            dir.display()
        )));
    }
    paths.iter().map(|p| TerrainMap::load(p)).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenMaps { cfg, seed, n, scale, out } => {
            let cfg = cfg.load()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
            let mut entries = Vec::new();
            for i in 0..n {
                let map = TerrainMap::generate(&cfg.map_gen(seed + i as u64, scale)?);
                let file = format!("map_{i:03}.tmap");
                map.save(&out.join(&file))?;
                entries.push((file, map.seed(), map.scale(), map.elevation_std(), map.veg_cell_fraction()));
            }
            write_maps_csv(&out.join("maps.csv"), &entries)?;
            println!("wrote {n} maps to {}", out.display());
        }
        Command::Collect { cfg, maps, episodes, seed, out } => {
            let cfg = cfg.load()?;
            let params = cfg.robot()?;
            let gt = cfg.ground_truth()?;
            let ep = cfg.episodes()?;
            let feat = cfg.feature()?;
            let mut records = Vec::new();
            for (i, map) in load_maps_dir(&maps)?.iter().enumerate() {
                records.extend(collect_episodes(
                    map,
                    &params,
                    &gt,
                    &ep,
                    &feat,
                    episodes,
                    seed + i as u64,
                ));
            }
            save_records(&out, &records, feat.patch_cells)?;
            println!("wrote {} records to {}", records.len(), out.display());
        }
        Command::Train { cfg, dataset, method, seed, out } => {
            let cfg = cfg.load()?;
            let method = Method::parse(&method)?;
            if !method.needs_training() {
                return Err(Error::domain(format!(
                    "method '{}' is a closed-form reference and has no checkpoint",
                    method.name()
                )));
            }
            let (records, _) = load_records(&dataset)?;
            let split = split_dataset(&records, cfg.id_percentile()?)?;
            let net_cfg = method.configure(&cfg.evidential()?);
            let (mut net, curves) = train_net(&split.train_id, &split.val_id, &net_cfg, seed)?;
            net.save(&out)?;
            println!(
                "trained {} on {} ID records (threshold {:.4} m): final train EMD^2 {:.4}, val {:.4}",
                method.name(),
                split.train_id.len(),
                split.threshold,
                curves.train_emd2.last().unwrap_or(&f64::NAN),
                curves.val_emd2.last().unwrap_or(&f64::NAN),
            );
            println!("checkpoint written to {}", out.display());
        }
        Command::EvalLearning { cfg, train_dataset, test_dataset, methods, seeds, out } => {
            let cfg = cfg.load()?;
            let methods = parse_methods(&methods)?;
            let (train_pool, _) = load_records(&train_dataset)?;
            let (test_pool, _) = load_records(&test_dataset)?;
            let report = eval_learning(
                &train_pool,
                &test_pool,
                &methods,
                seeds,
                &cfg.evidential()?,
                cfg.id_percentile()?,
                6,
            )?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
            write_learning_csv(&out.join("learning.csv"), &report)?;
            write_bins_csv(&out.join("bins.csv"), &report)?;
            println!("{}", render_report(Some(&out.join("learning.csv")), None, None)?);
            println!("wrote learning.csv and bins.csv to {}", out.display());
        }
        Command::BenchNav { cfg, maps, train_dataset, methods, train_seed, out } => {
            let cfg = cfg.load()?;
            let methods = parse_methods(&methods)?;
            let maps = load_maps_dir(&maps)?;
            let (train_pool, _) = load_records(&train_dataset)?;
            let split = split_dataset(&train_pool, cfg.id_percentile()?)?;
            let base = cfg.evidential()?;
            let nav = nav_methods(&methods, &split.train_id, &split.val_id, &base, train_seed)?;
            let report = bench::bench_nav(
                &maps,
                &nav,
                &cfg.nav_alphas()?,
                cfg.nav_pairs()?,
                cfg.nav_seeds()?,
                &cfg.robot()?,
                &cfg.ground_truth()?,
                &cfg.planner(0.6)?,
                &base,
                cfg.nav_yaw_bins()?,
                cfg.nav_min_goal_dist()?,
                cfg.ood_avoid_cost()?,
                cfg.map_seed()? + 9000,
            )?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
            write_nav_csv(&out.join("nav.csv"), &report)?;
            write_episodes_csv(&out.join("episodes.csv"), &report)?;
            println!("{}", render_report(None, None, Some(&out.join("nav.csv")))?);
            println!("wrote nav.csv and episodes.csv to {}", out.display());
        }
        Command::Report { learning, bins, nav, out } => {
            if learning.is_none() && bins.is_none() && nav.is_none() {
                return Err(Error::MissingInput(
                    "report needs at least one of --learning, --bins, --nav".to_string(),
                ));
            }
            let text = render_report(learning.as_deref(), bins.as_deref(), nav.as_deref())?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text)
                        .map_err(|e| Error::io(path.display().to_string(), e))?;
                    println!("wrote report to {}", path.display());
                }
                None => print!("{text}"),
            }
        }
        Command::Pipeline { cfg, out } => {
            let cfg = cfg.load()?;
            bench::run_micro_pipeline(&cfg, &out)?;
            println!("pipeline artifacts written to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
