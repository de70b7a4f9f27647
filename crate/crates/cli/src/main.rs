use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dygssm::io::{self, Manifest};
use dygssm::model::Checkpoint;
use dygssm::{
    build_cache, evaluate, generate_synthetic, partition_snapshots, train, Error, MetricsReport,
    Model, PreparedGraph, RunConfig, Split,
};

#[derive(Parser)]
#[command(name = "dygssm", version, about = "Dynamic graph link prediction with state-space gradient updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin an edge list (or generate the synthetic graph) and precompute walks.
    Prepare(Common),
    /// Train one model per seed.
    Train(Common),
    /// Score the test snapshots with trained checkpoints.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate instead of `<out>/seed_<s>/checkpoint.txt`
        /// (single seed only).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the synthetic graph as an edge list plus its planted pairs.
    Synth(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a key, e.g. `--set delta_t=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed or comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prepared data directory (default `<out>/prepared`).
    #[arg(long)]
    prepared: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> dygssm::Result<RunConfig> {
        let mut cfg = RunConfig::with_overrides(self.config.as_deref(), &self.overrides)?.resolved();
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(&s) = self.seed.first() {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn seeds(&self, command: &str) -> dygssm::Result<Vec<u64>> {
        if self.seed.is_empty() {
            return Err(Error::Config(format!("{command} needs --seed (e.g. --seed 0,1,2)")));
        }
        Ok(self.seed.clone())
    }

    fn prepared_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.prepared.clone().unwrap_or_else(|| cfg.out.join("prepared"))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ConfigList(_) => 2,
        Error::Numeric(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(c) => prepare(&c),
        Command::Train(c) => train_cmd(&c),
        Command::Evaluate { common, checkpoint } => evaluate_cmd(&common, checkpoint.as_deref()),
        Command::Synth(c) => synth(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write(path: &Path, contents: &str) -> dygssm::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare(c: &Common) -> dygssm::Result<()> {
    let cfg = c.config()?;
    let (graph, node_ids, edges) = match &cfg.data {
        Some(path) => {
            let el = io::read_edge_list(path)?;
            let graph = partition_snapshots(&el.edges, cfg.snapshots, cfg.cumulative)?;
            let count = el.edges.len();
            (graph, el.node_ids, count)
        }
        None => {
            let g = generate_synthetic(&cfg.synthetic_spec(), cfg.seed)?;
            let ids = (0..g.graph.node_count()).map(|i| i.to_string()).collect();
            let count = g.graph.edge_count();
            (g.graph, ids, count)
        }
    };
    let walk = cfg.walk_config();
    let cache = build_cache(&graph, &walk, cfg.seed)?;
    let manifest = Manifest {
        nodes: graph.node_count(),
        edges,
        snapshots: graph.len(),
        cumulative: cfg.cumulative,
        walk,
        seed: cfg.seed,
    };
    let dir = c.prepared_dir(&cfg);
    io::write_prepared(&dir, &graph, &node_ids, &cache, &manifest)?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    println!("{}", manifest.summary());
    println!("prepared data written to {}", dir.display());
    Ok(())
}

fn load(c: &Common, cfg: &RunConfig) -> dygssm::Result<PreparedGraph> {
    let dir = c.prepared_dir(cfg);
    if !dir.join("manifest.json").exists() {
        return Err(Error::Input(format!(
            "no prepared data in {}; run `dygssm prepare` first",
            dir.display()
        )));
    }
    let (data, manifest, _) = io::load_prepared(&dir)?;
    if manifest.snapshots != cfg.snapshot_count() {
        return Err(Error::Consistency(format!(
            "prepared data has {} snapshots but the config asks for {}",
            manifest.snapshots,
            cfg.snapshot_count()
        )));
    }
    Ok(data)
}

fn seed_dir(cfg: &RunConfig, seed: u64) -> PathBuf {
    cfg.out.join(format!("seed_{seed}"))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn train_cmd(c: &Common) -> dygssm::Result<()> {
    let seeds = c.seeds("train")?;
    let base = c.config()?;
    let data = load(c, &base)?;
    let mut vals = Vec::new();
    for seed in seeds {
        let cfg = RunConfig { seed, ..base.clone() };
        let dir = seed_dir(&cfg, seed);
        write(&dir.join("config.toml"), &cfg.to_toml())?;
        let outcome = train(&cfg, &data)?;
        outcome.checkpoint(seed).save(&dir.join("checkpoint.txt"))?;
        write(&dir.join("history.csv"), &outcome.history_csv())?;
        println!(
            "seed {seed}: {} epochs, best epoch {} with validation MRR {:.4}",
            outcome.epochs_run, outcome.best_epoch, outcome.best_val_mrr
        );
        vals.push(outcome.best_val_mrr);
    }
    if vals.len() > 1 {
        let (m, s) = mean_std(&vals);
        println!("validation MRR {m:.4} ± {s:.4} over {} seeds", vals.len());
    }
    Ok(())
}

fn evaluate_cmd(c: &Common, checkpoint: Option<&Path>) -> dygssm::Result<()> {
    let seeds = c.seeds("evaluate")?;
    if checkpoint.is_some() && seeds.len() > 1 {
        return Err(Error::Config("--checkpoint takes a single --seed".into()));
    }
    let base = c.config()?;
    let data = load(c, &base)?;
    let split = Split::new(data.len(), base.train_fraction);
    let mut reports: Vec<MetricsReport> = Vec::new();
    for seed in seeds {
        let dir = seed_dir(&base, seed);
        let path = checkpoint.map_or_else(|| dir.join("checkpoint.txt"), Path::to_path_buf);
        if !path.exists() {
            return Err(Error::Input(format!("checkpoint {} does not exist", path.display())));
        }
        let ck = Checkpoint::load(&path)?;
        let model = Model::from_checkpoint(&ck, Some(&base.model_config(data.node_count())))?;
        let report = evaluate(&model, &data, split.test_targets(), base.k_neg, seed)?;
        for t in &report.skipped_snapshots {
            eprintln!("warning: snapshot {t} has no positive edges; skipped");
        }
        write(&dir.join("metrics.json"), &report.to_json())?;
        write(&dir.join("snapshots.csv"), &report.snapshots_csv())?;
        println!(
            "seed {seed}: MRR {:.4}  Recall@10 {:.4}  AUC {:.4}  AP {:.4}  accuracy {:.4}",
            report.mrr, report.recall_at_10, report.auc, report.average_precision, report.accuracy
        );
        reports.push(report);
    }
    if reports.len() > 1 {
        let col = |f: fn(&MetricsReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        for (name, (m, s)) in [
            ("MRR", col(|r| r.mrr)),
            ("Recall@10", col(|r| r.recall_at_10)),
            ("AUC", col(|r| r.auc)),
            ("AP", col(|r| r.average_precision)),
            ("accuracy", col(|r| r.accuracy)),
        ] {
            println!("{name}: {m:.4} ± {s:.4}");
        }
    }
    Ok(())
}

fn synth(c: &Common) -> dygssm::Result<()> {
    let cfg = c.config()?;
    let g = generate_synthetic(&cfg.synthetic_spec(), cfg.seed)?;
    let mut edges = String::from("source,target,timestamp\n");
    for e in g.temporal_edges() {
        edges.push_str(&format!("{},{},{}\n", e.source, e.target, e.timestamp));
    }
    let mut planted = String::from("source,target\n");
    for (u, v) in &g.planted {
        planted.push_str(&format!("{u},{v}\n"));
    }
    write(&cfg.out.join("synthetic.csv"), &edges)?;
    write(&cfg.out.join("planted.csv"), &planted)?;
    println!(
        "{} nodes, {} edges over {} snapshots written to {}",
        g.graph.node_count(),
        io::thousands(g.graph.edge_count()),
        g.graph.len(),
        cfg.out.display()
    );
    Ok(())
}
