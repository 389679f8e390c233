use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use banditmatch::datasets::{generate_corpus, log_bandit_data, read_bandit, read_corpus, split_corpus, write_jsonl, SplitConfig};
use banditmatch::dialogworld::{World, WorldSchema};
use banditmatch::policy::PolicyNet;
use banditmatch::rng;
use banditmatch::trainer::{
    compare_arms, evaluate, format_table, main_arms, read_report_csv, run_ablation_grid, run_sl_sweep, train_logging_policy,
    train_method, write_report_csv, Ablation, Arm, ExperimentConfig, Method, ReportRow, TrainConfig, TrainOptions,
};
use banditmatch::{Error, Result};

#[derive(Parser)]
#[command(name = "banditmatch", version, about = "Dialog policy learning from logged bandit feedback")]
struct Cli {
    /// Worker threads for evaluation episodes (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a world schema file.
    GenWorld {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out the expert to build a labeled corpus.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        dialogs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split the corpus, train the logging policy and log bandit feedback.
    SplitAndLog {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Labeled fraction p in (0, 1].
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Fine-tune a policy from the logging policy.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        with_kl: bool,
        #[arg(long)]
        ablation: Option<Ablation>,
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        pi0: PathBuf,
        #[arg(long)]
        bandit: PathBuf,
        /// Labeled split (FixMatch, or BanditMatch with `append_labeled`).
        #[arg(long)]
        labeled: Option<PathBuf>,
        /// Full expert corpus (SL only).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Training-log CSV; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Per-step, per-class threshold CSV.
        #[arg(long)]
        thresholds: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against the user simulator.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        world: PathBuf,
        /// Row key in the report; defaults to the checkpoint file stem.
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        dialogs: Option<usize>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Add the row to an existing report instead of replacing it.
        #[arg(long)]
        append: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Main comparison: logging, SL, IPS, BanditNet (each +/- KL), FixMatch, BanditMatch.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// BanditMatch and its ablations.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Labeled-fraction sweep for SL and BanditMatch.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config: ExperimentConfig,
    seeds: Vec<(String, u64)>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    wall_clock_secs: f64,
}

struct Recorder {
    command: &'static str,
    started: Instant,
    seeds: Vec<(String, u64)>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn new(command: &'static str) -> Self {
        Recorder {
            command,
            started: Instant::now(),
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn seed(&mut self, name: &str, value: u64) {
        self.seeds.push((name.to_string(), value));
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    fn finish(self, config: &ExperimentConfig, manifest: &Path) -> Result<()> {
        let hashes = |paths: &[PathBuf]| paths.iter().map(|p| hash_file(p)).collect::<Result<Vec<_>>>();
        let m = RunManifest {
            command: self.command.to_string(),
            config: config.clone(),
            seeds: self.seeds,
            inputs: hashes(&self.inputs)?,
            outputs: hashes(&self.outputs)?,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        std::fs::write(manifest, text + "\n").map_err(|e| io_error(manifest, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
    }
}

fn hash_file(path: &Path) -> Result<FileHash> {
    let bytes = std::fs::read(path).map_err(|e| io_error(path, e))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn load_config(common: &Common, rec: &mut Recorder) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            rec.input(p);
            ExperimentConfig::load(p)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_world(path: &Path, rec: &mut Recorder) -> Result<World> {
    rec.input(path);
    Ok(World::new(WorldSchema::load(path)?))
}

fn load_policy(path: &Path, world: &World, rec: &mut Recorder) -> Result<PolicyNet> {
    rec.input(path);
    let p = PolicyNet::load(path)?;
    p.check_world(world)?;
    Ok(p)
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    }
    match cli.command {
        Command::GenWorld { common, out } => {
            let mut rec = Recorder::new("gen-world");
            let mut cfg = load_config(&common, &mut rec)?;
            if let Some(s) = common.seed {
                cfg.world_seed = s;
            }
            rec.seed("world_seed", cfg.world_seed);
            let schema = WorldSchema::generate(&cfg.world, &mut rng::stream(cfg.world_seed, "world"))?;
            schema.save(&out)?;
            rec.output(&out);
            let world = World::new(schema);
            println!("world: {} actions, state dim {}", world.num_actions(), world.state_dim());
            rec.finish(&cfg, &sibling(&out, ".manifest.json"))
        }
        Command::GenCorpus {
            common,
            world,
            dialogs,
            out,
        } => {
            let mut rec = Recorder::new("gen-corpus");
            let mut cfg = load_config(&common, &mut rec)?;
            if let Some(n) = dialogs {
                cfg.corpus_dialogs = n;
            }
            let w = load_world(&world, &mut rec)?;
            let seed = rng::derive_seed(cfg.seed, "corpus", 0);
            rec.seed("corpus", seed);
            let corpus = generate_corpus(&w, &cfg.goals, cfg.corpus_dialogs, seed)?;
            write_jsonl(&out, &corpus)?;
            rec.output(&out);
            println!("{} examples from {} dialogs", corpus.len(), cfg.corpus_dialogs);
            rec.finish(&cfg, &sibling(&out, ".manifest.json"))
        }
        Command::SplitAndLog {
            common,
            world,
            corpus,
            p,
            out_dir,
        } => {
            let mut rec = Recorder::new("split-and-log");
            let mut cfg = load_config(&common, &mut rec)?;
            if let Some(p) = p {
                cfg.labeled_fraction = p;
            }
            cfg.validate()?;
            let w = load_world(&world, &mut rec)?;
            rec.input(&corpus);
            let examples = read_corpus(&corpus, &w)?;
            let split = SplitConfig {
                labeled_fraction: cfg.labeled_fraction,
                seed: rng::derive_seed(cfg.seed, "split", 0),
            };
            rec.seed("split", split.seed);
            let (labeled, pool) = split_corpus(&examples, &split)?;
            let train = TrainConfig {
                seed: rng::derive_seed(cfg.seed, "logging", 0),
                ..cfg.train.clone()
            };
            rec.seed("logging", train.seed);
            let (pi0, log) = train_logging_policy(&labeled, w.state_dim(), w.num_actions(), &train)?;
            let records = log_bandit_data(&pi0, &pool)?;
            create_dir(&out_dir)?;
            let paths = [
                out_dir.join("labeled.jsonl"),
                out_dir.join("bandit.jsonl"),
                out_dir.join("pi0.json"),
                out_dir.join("pi0.log.csv"),
            ];
            write_jsonl(&paths[0], &labeled)?;
            write_jsonl(&paths[1], &records)?;
            pi0.save(&paths[2])?;
            log.write_steps(&paths[3])?;
            for path in &paths {
                rec.output(path);
            }
            let positives = records.iter().filter(|r| r.is_positive()).count();
            println!("{} labeled, {} logged ({} positive)", labeled.len(), records.len(), positives);
            rec.finish(&cfg, &out_dir.join("manifest.json"))
        }
        Command::Train {
            common,
            method,
            with_kl,
            ablation,
            world,
            pi0,
            bandit,
            labeled,
            corpus,
            epochs,
            out,
            log,
            thresholds,
        } => {
            let mut rec = Recorder::new("train");
            let mut cfg = load_config(&common, &mut rec)?;
            if let Some(m) = method {
                cfg.train.method = m;
            }
            if with_kl {
                cfg.train.with_kl = true;
            }
            if let Some(a) = ablation {
                cfg.train.ablation = a;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.validate()?;
            let t = &cfg.train;
            let needs_labeled = t.method == Method::Fixmatch || (t.method == Method::Banditmatch && t.append_labeled);
            if needs_labeled && labeled.is_none() {
                return Err(Error::Usage(format!("`{}` needs --labeled", t.label())));
            }
            if t.method == Method::Sl && corpus.is_none() {
                return Err(Error::Usage("sl needs --corpus".into()));
            }
            let w = load_world(&world, &mut rec)?;
            let pi0 = load_policy(&pi0, &w, &mut rec)?;
            rec.input(&bandit);
            let records = read_bandit(&bandit, &w)?;
            let labeled = match &labeled {
                Some(p) => {
                    rec.input(p);
                    read_corpus(p, &w)?
                }
                None => Vec::new(),
            };
            let corpus = match &corpus {
                Some(p) => {
                    rec.input(p);
                    read_corpus(p, &w)?
                }
                None => Vec::new(),
            };
            let train = TrainConfig {
                seed: rng::derive_seed(cfg.seed, "finetune", 0),
                ..cfg.train.clone()
            };
            rec.seed("finetune", train.seed);
            let opts = TrainOptions {
                trace_thresholds: thresholds.is_some(),
            };
            let (policy, train_log) = train_method(&pi0, &records, &corpus, &labeled, &train, opts)?;
            policy.save(&out)?;
            rec.output(&out);
            let log = log.unwrap_or_else(|| sibling(&out, ".log.csv"));
            train_log.write_steps(&log)?;
            rec.output(&log);
            if let Some(th) = &thresholds {
                train_log.write_thresholds(th)?;
                rec.output(th);
            }
            println!("{}: {} steps", train.label(), train_log.steps.len());
            rec.finish(&cfg, &sibling(&out, ".manifest.json"))
        }
        Command::Evaluate {
            common,
            checkpoint,
            world,
            name,
            dialogs,
            runs,
            out,
            append,
            json,
        } => {
            let mut rec = Recorder::new("evaluate");
            let mut cfg = load_config(&common, &mut rec)?;
            if let Some(n) = dialogs {
                cfg.eval_dialogs = n;
            }
            if let Some(r) = runs {
                cfg.eval_runs = r;
            }
            cfg.validate()?;
            let w = load_world(&world, &mut rec)?;
            let policy = load_policy(&checkpoint, &w, &mut rec)?;
            let name = name.unwrap_or_else(|| checkpoint.file_stem().map_or("policy".into(), |s| s.to_string_lossy().into_owned()));
            let seed = rng::derive_seed(cfg.seed, "eval", 0);
            rec.seed("eval", seed);
            let report = evaluate(&policy, &name, &w, &cfg.goals, cfg.eval_dialogs, cfg.eval_runs, seed)?;
            let mut rows = if append && out.exists() {
                rec.input(&out);
                read_report_csv(&out)?
            } else {
                Vec::new()
            };
            rows.retain(|r| r.key != name);
            rows.push(ReportRow::new(name.clone(), &report));
            write_report_csv(&out, &rows)?;
            rec.output(&out);
            if let Some(j) = &json {
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                std::fs::write(j, text + "\n").map_err(|e| io_error(j, e))?;
                rec.output(j);
            }
            print!("{}", format_table(&[(name, &report)]));
            rec.finish(&cfg, &sibling(&out, ".manifest.json"))
        }
        Command::Compare { common, out_dir } => {
            let mut rec = Recorder::new("compare");
            let cfg = load_config(&common, &mut rec)?;
            rec.seed("seed", cfg.seed);
            let world = banditmatch::trainer::build_world(&cfg)?;
            let cmp = compare_arms(&world, &cfg, &main_arms(&cfg.train), cfg.labeled_fraction)?;
            let rows: Vec<ReportRow> = cmp.arms.iter().map(|(l, r)| ReportRow::new(l.clone(), r)).collect();
            create_dir(&out_dir)?;
            let out = out_dir.join("compare.csv");
            write_report_csv(&out, &rows)?;
            rec.output(&out);
            let table: Vec<(String, &_)> = cmp.arms.iter().map(|(l, r)| (l.clone(), r)).collect();
            print!("{}", format_table(&table));
            rec.finish(&cfg, &out_dir.join("manifest.json"))
        }
        Command::Ablate { common, out_dir } => {
            let mut rec = Recorder::new("ablate");
            let cfg = load_config(&common, &mut rec)?;
            rec.seed("seed", cfg.seed);
            let world = banditmatch::trainer::build_world(&cfg)?;
            let grid = run_ablation_grid(&world, &cfg)?;
            let rows: Vec<ReportRow> = grid.iter().map(|(a, r)| ReportRow::new(a.as_str(), r)).collect();
            create_dir(&out_dir)?;
            let out = out_dir.join("ablation.csv");
            write_report_csv(&out, &rows)?;
            rec.output(&out);
            let table: Vec<(String, &_)> = grid.iter().map(|(a, r)| (a.label().to_string(), r)).collect();
            print!("{}", format_table(&table));
            rec.finish(&cfg, &out_dir.join("manifest.json"))
        }
        Command::Sweep { common, out_dir } => {
            let mut rec = Recorder::new("sweep");
            let cfg = load_config(&common, &mut rec)?;
            rec.seed("seed", cfg.seed);
            let world = banditmatch::trainer::build_world(&cfg)?;
            let arms = [Arm::Logging, Arm::method(Method::Sl, false, &cfg.train), Arm::method(Method::Banditmatch, false, &cfg.train)];
            let series = run_sl_sweep(&world, &cfg, &arms)?;
            create_dir(&out_dir)?;
            for arm in &arms {
                let label = arm.label();
                let rows: Vec<ReportRow> = series
                    .get(&label)
                    .into_iter()
                    .flatten()
                    .map(|(p, report)| ReportRow::new(format!("{p}"), report))
                    .collect();
                let out = out_dir.join(format!("sweep_{label}.csv"));
                write_report_csv(&out, &rows)?;
                rec.output(&out);
                for r in &rows {
                    println!("{label:12} p={:<5} success {:6.2} inform_f1 {:.3}", r.key, r.success_mean, r.inform_f1_mean);
                }
            }
            rec.finish(&cfg, &out_dir.join("manifest.json"))
        }
    }
}

/// Process exit status for each error class.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        Error::Config(_) => 3,
        Error::MissingFile(_) => 4,
        Error::Version { .. } => 5,
        Error::Parse { .. } => 6,
        Error::Io { .. } => 7,
        Error::Dimension { .. } => 8,
        Error::NonFiniteGradient { .. } | Error::NonFiniteLoss(_) => 9,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
