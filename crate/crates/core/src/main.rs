use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use mixpath::config::{replicate_seed, RankConfig, RunConfig};
use mixpath::data::{synthetic_splits, Dataset, Splits};
use mixpath::oracle::{build_bench, oracle_masks, standalone_seeds, BenchTable};
use mixpath::ranking::{
    feature_similarity, probe_series_csv, ranking_experiment, sbn_stats, stability_probe, EvalData,
    RankingReport,
};
use mixpath::search::{run_nsga2, BenchEvaluator, SearchBackend, SupernetEvaluator};
use mixpath::space::{space_size, ArchMask, SbnMode};
use mixpath::supernet::Supernet;
use mixpath::tensor::Tensor;
use mixpath::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "mixpath", version, about = "Multi-path supernet training, ranking and search")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; the built-in micro experiment when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for parallel training and evaluation.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Root of the run directories [env: MIXPATH_RUNS_DIR, default: runs].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides one config key, e.g. `--set rank.sample_count=20`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/val/test splits.
    GenData,
    /// Train the supernet(s) and record the stability probe.
    Train,
    /// Train standalone models to build the ground-truth table.
    Oracle,
    /// Correlate one-shot and ground-truth rankings.
    Rank,
    /// Run the multi-objective evolutionary search.
    Search,
    /// Dump shadow batch-norm statistics and feature similarities.
    Stats,
    /// Print the resolved configuration and its run directory.
    ShowConfig,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) | Error::OracleTooSmall { .. } | Error::Fingerprint { .. } | Error::Format(_) => {
                EXIT_INPUT
            }
            Error::NonFinite(_) | Error::Undefined(_) | Error::Shape { .. } => EXIT_NUMERIC,
            Error::Parameter(_)
            | Error::Mask(_)
            | Error::Empty(_)
            | Error::Infeasible(_)
            | Error::Json(_) => EXIT_CONFIG,
        };
        Failure::new(code, e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve_config(&cli.global)?;
    if let Some(n) = cli.global.workers {
        if n == 0 {
            return Err(Failure::new(EXIT_CONFIG, "--workers must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::new(EXIT_CONFIG, e.to_string()))?;
    }
    let run = RunDir::new(&cli.global, &cfg)?;
    match cli.command {
        Command::ShowConfig => {
            println!("{}", cfg.to_json());
            eprintln!("run directory: {}", run.root.display());
            Ok(())
        }
        Command::GenData => cmd_gen_data(&cfg, &run),
        Command::Train => cmd_train(&cfg, &run),
        Command::Oracle => cmd_oracle(&cfg, &run),
        Command::Rank => cmd_rank(&cfg, &run),
        Command::Search => cmd_search(&cfg, &run),
        Command::Stats => cmd_stats(&cfg, &run),
    }
}

fn resolve_config(g: &Global) -> CliResult<RunConfig> {
    let mut value = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                Failure::new(EXIT_INPUT, format!("cannot read config {}: {e}", path.display()))
            })?;
            // Strict parse first: serde reports the offending field with its
            // line and column.
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| Failure::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?;
            serde_json::from_str::<Value>(&text).expect("already parsed")
        }
        None => serde_json::to_value(RunConfig::micro()).expect("config serializes"),
    };
    for item in &g.set {
        apply_override(&mut value, item)?;
    }
    if let Some(seed) = g.seed {
        value["seed"] = seed.into();
    }
    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("invalid configuration: {e}")))?;
    cfg.validate()
        .map_err(|e| Failure::new(EXIT_CONFIG, format!("invalid configuration: {e}")))?;
    Ok(cfg)
}

/// `a.b.c=value`; the value is parsed as JSON and falls back to a string.
/// Only existing keys can be overridden.
fn apply_override(root: &mut Value, item: &str) -> CliResult<()> {
    let bad = |m: String| Failure::new(EXIT_CONFIG, format!("--set {item}: {m}"));
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| bad("expected KEY=VALUE".into()))?;
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| bad(format!("unknown config key `{key}`")))?;
    }
    *node = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

struct RunDir {
    root: PathBuf,
    hash: String,
}

impl RunDir {
    fn new(g: &Global, cfg: &RunConfig) -> CliResult<Self> {
        let base = g
            .out
            .clone()
            .or_else(|| std::env::var_os("MIXPATH_RUNS_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        let hash = cfg.hash();
        Ok(Self {
            root: base.join(&hash),
            hash,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes through a temporary file so a crash never leaves a truncated artifact.
    fn write(&self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(Error::from)?;
        }
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes).map_err(Error::from)?;
        fs::rename(&tmp, &path).map_err(Error::from)?;
        Ok(())
    }

    fn write_config(&self, cfg: &RunConfig) -> CliResult<()> {
        self.write("config.json", cfg.to_json().as_bytes())
    }

    fn open(&self, rel: &str, producer: &str) -> CliResult<BufReader<fs::File>> {
        let path = self.path(rel);
        fs::File::open(&path).map(BufReader::new).map_err(|e| {
            Failure::new(
                EXIT_INPUT,
                format!("missing input {} ({e}); run `mixpath {producer}` first", path.display()),
            )
        })
    }

    fn check(&self, what: &str, found: &str) -> CliResult<()> {
        if found != self.hash {
            return Err(Failure::new(
                EXIT_INPUT,
                format!(
                    "{what} was produced by config {found}, this run is {}; refusing to mix artifacts",
                    self.hash
                ),
            ));
        }
        Ok(())
    }

    fn load_data(&self) -> CliResult<Splits> {
        let mut parts = Vec::new();
        for name in SPLITS {
            let rel = format!("data/{name}.mxds");
            let (d, fp) = Dataset::load(self.open(&rel, "gen-data")?)?;
            self.check(&rel, &fp)?;
            parts.push(d);
        }
        let test = parts.pop().expect("three splits");
        let val = parts.pop().expect("three splits");
        let train = parts.pop().expect("three splits");
        Ok(Splits { train, val, test })
    }

    fn load_bench(&self) -> CliResult<BenchTable> {
        let table = BenchTable::read_jsonl(self.open("bench.jsonl", "oracle")?)?;
        self.check("bench.jsonl", &table.fingerprint)?;
        Ok(table)
    }

    fn load_net(&self, rel: &str, cfg: &RunConfig, mode: SbnMode) -> CliResult<Supernet> {
        let spec = cfg.space.clone().with_sbn_mode(mode);
        let (net, fp) = Supernet::load(self.open(rel, "train")?, &spec)?;
        self.check(rel, &fp)?;
        Ok(net)
    }

    /// CSV with a leading comment line naming the producing config.
    fn write_csv(&self, rel: &str, body: &str) -> CliResult<()> {
        self.write(rel, format!("# config {}\n{body}", self.hash).as_bytes())
    }
}

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn cmd_gen_data(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    run.write_config(cfg)?;
    let splits = synthetic_splits(&cfg.data, cfg.seed)?;
    for (name, d) in SPLITS.iter().zip([&splits.train, &splits.val, &splits.test]) {
        let mut buf = Vec::new();
        d.save(&mut buf, &run.hash)?;
        run.write(&format!("data/{name}.mxds"), &buf)?;
        println!("{name}: {} samples", d.len());
    }
    println!("wrote {}", run.path("data").display());
    Ok(())
}

/// The (mode, replicate) supernets a run needs: the configured mode for
/// replicate 0, plus both modes for every replicate when ablating.
fn supernet_jobs(cfg: &RunConfig) -> Vec<(SbnMode, usize)> {
    let mode = cfg.space.sbn_mode;
    if !cfg.rank.ablation {
        return vec![(mode, 0)];
    }
    let mut modes = vec![SbnMode::Vanilla];
    if mode != SbnMode::Vanilla {
        modes.push(mode);
    }
    (0..cfg.rank.replicates)
        .flat_map(|r| modes.iter().map(move |&m| (m, r)))
        .collect()
}

fn replica_name(mode: SbnMode, r: usize) -> String {
    format!("{}-r{r}", mode.as_str())
}

fn cmd_train(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    let data = run.load_data()?;
    run.write_config(cfg)?;
    let jobs = supernet_jobs(cfg);
    let trained = jobs
        .par_iter()
        .map(|&(mode, r)| {
            let spec = cfg.space.clone().with_sbn_mode(mode);
            let (net, series) = stability_probe(
                &spec,
                &data.train,
                &data.val,
                &cfg.supernet,
                cfg.probe.every,
                cfg.probe.models,
                replicate_seed(cfg.seed, r),
            )?;
            let mut bytes = Vec::new();
            net.save(&mut bytes, &run.hash)?;
            Ok((bytes, probe_series_csv(&series), series.last().map(|p| p.mean)))
        })
        .collect::<mixpath::Result<Vec<_>>>()?;
    for (&(mode, r), (bytes, probe, last)) in jobs.iter().zip(&trained) {
        if (mode, r) == (cfg.space.sbn_mode, 0) {
            run.write("checkpoint.mxpt", bytes)?;
            run.write_csv("stats/probe.csv", probe)?;
        }
        if cfg.rank.ablation {
            let name = replica_name(mode, r);
            run.write(&format!("checkpoints/{name}.mxpt"), bytes)?;
            run.write_csv(&format!("stats/probe-{name}.csv"), probe)?;
        }
        println!(
            "trained {} supernet, replicate {r}: final probe mean accuracy {:.4}",
            mode.as_str(),
            last.unwrap_or(f64::NAN)
        );
    }
    println!("wrote {}", run.path("checkpoint.mxpt").display());
    Ok(())
}

fn cmd_oracle(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    let data = run.load_data()?;
    run.write_config(cfg)?;
    let masks = oracle_masks(&cfg.space, cfg.oracle.sample, cfg.seed)?;
    let seeds = standalone_seeds(cfg.seed, &cfg.oracle.seeds);
    eprintln!("training {} architectures x {} seeds", masks.len(), seeds.len());
    let table = build_bench(&cfg.space, &masks, &seeds, &data, &cfg.standalone, run.hash.clone())?;
    let mut buf = Vec::new();
    table.write_jsonl(&mut buf)?;
    run.write("bench.jsonl", &buf)?;
    println!("wrote {} ({} rows)", run.path("bench.jsonl").display(), table.len());
    if !table.complete() {
        let detail: Vec<String> = table
            .failed
            .iter()
            .map(|f| format!("{}: {}", f.mask, f.error))
            .collect();
        return Err(Failure::new(
            EXIT_NUMERIC,
            format!("{} trainings failed: {}", table.failed.len(), detail.join("; ")),
        ));
    }
    Ok(())
}

/// The first `calibration_batches` full batches of the training split.
fn calibration_set(train: &Dataset, rank: &RankConfig) -> CliResult<Vec<Tensor>> {
    let batches: Vec<Tensor> = train
        .sequential_batches(rank.calibration_batch_size)?
        .into_iter()
        .filter(|(_, y)| y.len() == rank.calibration_batch_size)
        .take(rank.calibration_batches)
        .map(|(x, _)| x)
        .collect();
    if batches.len() < rank.calibration_batches {
        return Err(Failure::new(
            EXIT_CONFIG,
            format!(
                "training split holds {} calibration batches of {}, {} requested",
                batches.len(),
                rank.calibration_batch_size,
                rank.calibration_batches
            ),
        ));
    }
    Ok(batches)
}

fn cmd_rank(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    let table = run.load_bench()?;
    if cfg.rank.sample_count > table.len() {
        return Err(Error::OracleTooSmall {
            requested: cfg.rank.sample_count,
            available: table.len(),
        }
        .into());
    }
    table.verify_costs(&cfg.space)?;
    let data = run.load_data()?;
    run.write_config(cfg)?;
    let calibration = calibration_set(&data.train, &cfg.rank)?;
    let eval = EvalData {
        eval_set: &data.val,
        calibration: &calibration,
    };
    // Each cell: (mode, calibrated) evaluated on every replicate.
    let (cells, replicates): (Vec<(SbnMode, bool)>, usize) = if cfg.rank.ablation {
        let mut modes = vec![SbnMode::Vanilla];
        if cfg.space.sbn_mode != SbnMode::Vanilla {
            modes.push(cfg.space.sbn_mode);
        }
        let cells = modes.iter().flat_map(|&m| [(m, false), (m, true)]).collect();
        (cells, cfg.rank.replicates)
    } else {
        (vec![(cfg.space.sbn_mode, cfg.rank.calibrate)], 1)
    };
    let mut summary = String::from("sbn_mode,calibrated,replicates,mean_tau,taus\n");
    for (mode, calibrated) in cells {
        let mut taus = Vec::new();
        for r in 0..replicates {
            let net = if cfg.rank.ablation {
                run.load_net(&format!("checkpoints/{}.mxpt", replica_name(mode, r)), cfg, mode)?
            } else {
                run.load_net("checkpoint.mxpt", cfg, mode)?
            };
            let report: RankingReport =
                ranking_experiment(&net, &table, cfg.rank.sample_count, calibrated, &eval, cfg.seed)?;
            let tag = if calibrated { "calibrated" } else { "raw" };
            run.write_csv(
                &format!("rank/{}-{tag}.csv", replica_name(mode, r)),
                &report.to_csv(),
            )?;
            taus.push(report.tau);
        }
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        let list: Vec<String> = taus.iter().map(f64::to_string).collect();
        let _ = writeln!(
            summary,
            "{},{calibrated},{replicates},{mean},{}",
            mode.as_str(),
            list.join(";")
        );
        println!(
            "{:<12} calibrated={:<5} mean tau {mean:.4} over {replicates} supernet(s)",
            mode.as_str(),
            calibrated
        );
    }
    run.write_csv("rank.csv", &summary)?;
    println!("wrote {}", run.path("rank.csv").display());
    Ok(())
}

fn cmd_search(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    let result = match cfg.search.backend {
        SearchBackend::Bench => {
            let table = run.load_bench()?;
            let size = space_size(&cfg.space);
            if (table.len() as u128) < size {
                return Err(Failure::new(
                    EXIT_INPUT,
                    format!(
                        "the bench backend needs every architecture; bench.jsonl has {} of {size} \
                         (set oracle.sample to null and rerun `mixpath oracle`)",
                        table.len()
                    ),
                ));
            }
            run.write_config(cfg)?;
            run_nsga2(&cfg.search, &BenchEvaluator::new(&cfg.space, &table), cfg.seed)?
        }
        SearchBackend::Supernet => {
            let net = run.load_net("checkpoint.mxpt", cfg, cfg.space.sbn_mode)?;
            let data = run.load_data()?;
            run.write_config(cfg)?;
            let calibration = calibration_set(&data.train, &cfg.rank)?;
            let evaluator = SupernetEvaluator {
                net: &net,
                eval_set: &data.val,
                calibration: cfg.search.calibrate.then_some(&calibration[..]),
            };
            run_nsga2(&cfg.search, &evaluator, cfg.seed)?
        }
    };
    let header = json!({
        "config": run.hash,
        "backend": cfg.search.backend,
        "generations_run": result.generations_run,
        "unique_evaluations": result.evaluated.len(),
        "front": result.front,
        "picks": result.picks,
    });
    let mut out = serde_json::to_string(&header).map_err(Error::from)?;
    out.push('\n');
    out.push_str(&result.audit_jsonl()?);
    run.write("search.jsonl", out.as_bytes())?;
    for p in &result.picks {
        println!("pick {}  acc {:.4}  flops {}", p.mask, p.acc, p.flops);
    }
    println!(
        "wrote {} ({} unique evaluations)",
        run.path("search.jsonl").display(),
        result.evaluated.len()
    );
    Ok(())
}

fn cmd_stats(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    let net = run.load_net("checkpoint.mxpt", cfg, cfg.space.sbn_mode)?;
    let data = run.load_data()?;
    run.write_config(cfg)?;
    let mut summary = json!({ "config": run.hash, "sbn_mode": cfg.space.sbn_mode });
    if cfg.space.sbn_mode != SbnMode::Vanilla {
        let dump = sbn_stats(&net)?;
        run.write_csv("stats/ratios.csv", &dump.ratios_csv())?;
        let medians: Vec<Value> = dump
            .blocks
            .iter()
            .map(|b| {
                let per_k: Vec<Value> = b
                    .ratios
                    .iter()
                    .map(|r| {
                        let [mean, var, gamma, beta] = r.medians();
                        json!({ "k": r.k, "mean": mean, "var": var, "gamma": gamma, "beta": beta })
                    })
                    .collect();
                json!({ "block": b.block, "ratios": per_k })
            })
            .collect();
        summary["median_ratios"] = Value::Array(medians);
        let full = serde_json::to_string_pretty(&dump).map_err(Error::from)?;
        run.write("stats/sbn.json", full.as_bytes())?;
    }
    // Earlier blocks run their first path so each block sees a fixed input.
    let base = ArchMask(vec![1; cfg.space.num_layers()]);
    let probe = data.val.head(64)?.images;
    for block in 0..cfg.space.num_layers() {
        let sim = feature_similarity(&net, &base, block, &probe)?;
        run.write_csv(&format!("stats/similarity-block{block}.csv"), &sim.to_csv())?;
    }
    let text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    run.write("stats/summary.json", text.as_bytes())?;
    println!("wrote {}", run.path("stats").display());
    Ok(())
}
