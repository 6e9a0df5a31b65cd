//! `circinv`: train policies, synthesize targets, evaluate and sample designs.

mod config;
mod fail;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::anyhow;
use circinv_core::evaluator::{
    error_db, insertion_loss, passband_iou, passband_range, serve_lines, serve_tcp, Endpoint, Evaluator,
    ExternalEvaluator, SurrogateEvaluator, TransferFunction,
};
use circinv_core::geometry::{CircuitDesign, CompoundAction};
use circinv_core::io::{load_design, load_target, save_design, save_target, TargetFile};
use circinv_core::policy::{substream, Checkpoint};
use circinv_core::trainer::{uniform_action, Trainer, HISTORY_HEADER};
use clap::{Args, Parser, Subcommand};
use log::info;

use config::RunConfig;
use fail::{io, Failure};

#[derive(Parser, Debug)]
#[command(name = "circinv", version, about = "Inverse design of coupled square-resonator circuits")]
struct Cli {
    /// Print the default configuration as TOML and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (or file, where noted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of resonators.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// builtin | exec:<cmd> | tcp:<host:port>
    #[arg(long)]
    evaluator: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy against a target and export the best design.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: PathBuf,
    },
    /// Write target_<N>_<seed>.json and the generating truth_<N>_<seed>.json.
    SynthTarget {
        #[command(flatten)]
        common: Common,
    },
    /// Print error, pass-band IOU and insertion loss; write freq_hz,mag_db CSV to --out.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Draw designs from a checkpoint.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Serve the built-in surrogate over the evaluator protocol (stdio, or TCP with --listen).
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        listen: Option<String>,
    },
}

fn settings(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(n) = common.n {
        cfg.train.n = n;
    }
    if let Some(it) = common.iterations {
        cfg.train.iterations = it;
    }
    if let Some(ev) = &common.evaluator {
        cfg.evaluator = ev.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn evaluator(cfg: &RunConfig) -> Result<Box<dyn Evaluator>, Failure> {
    if cfg.evaluator == "builtin" {
        return Ok(Box::new(SurrogateEvaluator::new(cfg.surrogate.clone())));
    }
    let endpoint: Endpoint = cfg.evaluator.parse().map_err(|e: String| Failure::Config(anyhow!(e)))?;
    let mut ext = ExternalEvaluator::new(endpoint);
    ext.timeout = Duration::from_secs_f64(cfg.external.timeout_secs);
    ext.max_in_flight = cfg.external.max_in_flight;
    ext.connect().map_err(|e| Failure::Eval(anyhow::Error::new(e).context(format!("evaluator {}", cfg.evaluator))))?;
    Ok(Box::new(ext))
}

fn evaluate_one(ev: &dyn Evaluator, design: &CircuitDesign, freqs: &[f64]) -> Result<TransferFunction, Failure> {
    ev.evaluate_batch(std::slice::from_ref(design), freqs)
        .pop()
        .ok_or_else(|| Failure::Eval(anyhow!("evaluator returned no result")))?
        .map_err(|e| Failure::Eval(anyhow::Error::new(e)))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io(e, format!("cannot create {}", dir.display())))
}

fn read_target(path: &Path) -> Result<TransferFunction, Failure> {
    load_target(path).map_err(|e| Failure::from_core(e, format!("target {}", path.display())))
}

fn cmd_train(common: &Common, target_path: &Path) -> Result<(), Failure> {
    let cfg = settings(common)?;
    let target = read_target(target_path)?;
    let ev = evaluator(&cfg)?;
    let out = &cfg.out;
    create_dir(&out.join("checkpoints"))?;
    let hist_path = out.join("history.csv");
    let mut hist =
        BufWriter::new(File::create(&hist_path).map_err(|e| io(e, format!("cannot create {}", hist_path.display())))?);
    let wr = |e| io(e, format!("cannot write {}", hist_path.display()));
    writeln!(hist, "{HISTORY_HEADER}").map_err(wr)?;

    let mut trainer = Trainer::new(cfg.train.clone(), target.clone(), ev.as_ref())
        .map_err(|e| Failure::from_core(e, "training setup"))?;
    let save_ck = |trainer: &Trainer, name: String| -> Result<(), Failure> {
        let mut ck = trainer.checkpoint();
        ck.target = Some(TargetFile::from_transfer(&target));
        let path = out.join("checkpoints").join(name);
        ck.save(&path).map_err(|e| Failure::from_core(e, format!("checkpoint {}", path.display())))
    };
    while !trainer.is_done() {
        let row =
            trainer.step().map_err(|e| Failure::from_core(e, format!("iteration {}", trainer.iteration() + 1)))?;
        writeln!(hist, "{}", row.csv()).map_err(wr)?;
        info!("iteration {} mean {:.3} best {:.3}", row.iteration, row.mean_reward, row.best_reward);
        let every = cfg.train.checkpoint_every;
        if every > 0 && row.iteration % every == 0 {
            save_ck(&trainer, format!("policy_{:05}.json", row.iteration))?;
        }
    }
    hist.flush().map_err(wr)?;
    save_ck(&trainer, "policy_final.json".into())?;
    let best = trainer.best().ok_or_else(|| Failure::Eval(anyhow!("no sample was evaluated")))?;
    let p = out.join("best_design.json");
    save_design(&p, &best.design).map_err(|e| Failure::from_core(e, format!("{}", p.display())))?;
    let p = out.join("best_s21.json");
    save_target(&p, &best.response).map_err(|e| Failure::from_core(e, format!("{}", p.display())))?;
    println!("best eps_db = {:.6}", -best.reward);
    Ok(())
}

fn cmd_synth(common: &Common) -> Result<(), Failure> {
    let cfg = settings(common)?;
    let (n, seed) = (cfg.train.n, cfg.train.seed);
    let action = uniform_action(n, &mut substream(seed, 0));
    let action = CompoundAction::from_flat(n, &action).map_err(|e| Failure::from_core(e, "sampled action"))?;
    let design = cfg.train.geometry.map(&action).map_err(|e| Failure::from_core(e, "mapping"))?;
    let ev = SurrogateEvaluator::new(cfg.surrogate.clone());
    let tf = evaluate_one(&ev, &design, &cfg.surrogate.grid())?;
    create_dir(&cfg.out)?;
    let tp = cfg.out.join(format!("target_{n}_{seed}.json"));
    let dp = cfg.out.join(format!("truth_{n}_{seed}.json"));
    save_target(&tp, &tf).map_err(|e| Failure::from_core(e, tp.display().to_string()))?;
    save_design(&dp, &design).map_err(|e| Failure::from_core(e, dp.display().to_string()))?;
    println!("{}\n{}", tp.display(), dp.display());
    Ok(())
}

fn cmd_eval(common: &Common, design_path: &Path, target_path: &Path) -> Result<(), Failure> {
    let cfg = settings(common)?;
    let design =
        load_design(design_path).map_err(|e| Failure::from_core(e, format!("design {}", design_path.display())))?;
    let target = read_target(target_path)?;
    let ev = evaluator(&cfg)?;
    let tf = evaluate_one(ev.as_ref(), &design, &target.freqs)?;
    let eps = error_db(&target, &tf).map_err(|e| Failure::from_core(e, "error"))?;
    let iou = passband_iou(&target, &tf, cfg.threshold_db).map_err(|e| Failure::from_core(e, "iou"))?;
    let il = insertion_loss(&tf, passband_range(&target, cfg.threshold_db))
        .map_err(|e| Failure::from_core(e, "insertion loss"))?;
    println!("eps_db = {eps:.6}\niou = {iou:.6}\ninsertion_loss_db = {il:.6}");
    let csv = common.out.clone().unwrap_or_else(|| PathBuf::from("s21.csv"));
    if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let mut text = String::from("freq_hz,mag_db\n");
    for (f, db) in tf.freqs.iter().zip(tf.mag_db()) {
        text.push_str(&format!("{f:e},{db:e}\n"));
    }
    std::fs::write(&csv, text).map_err(|e| io(e, format!("cannot write {}", csv.display())))?;
    Ok(())
}

fn cmd_sample(common: &Common, ck_path: &Path, count: usize) -> Result<(), Failure> {
    let cfg = settings(common)?;
    let ck =
        Checkpoint::load(ck_path).map_err(|e| Failure::from_core(e, format!("checkpoint {}", ck_path.display())))?;
    let policy = ck.policy().map_err(|e| Failure::from_core(e, "checkpoint"))?;
    let target = match &ck.target {
        Some(t) => Some(t.to_transfer().map_err(|e| Failure::from_core(e, "recorded target"))?),
        None => None,
    };
    let ev = match target {
        Some(_) => Some(evaluator(&cfg)?),
        None => None,
    };
    create_dir(&cfg.out)?;
    let batch = policy.sample_batch(count, cfg.train.seed, u64::from(u32::MAX));
    for (i, a) in batch.actions.iter().enumerate() {
        let action = CompoundAction::from_flat(ck.n, a).map_err(|e| Failure::from_core(e, "sampled action"))?;
        let design = ck.geometry.map(&action).map_err(|e| Failure::from_core(e, "mapping"))?;
        let p = cfg.out.join(format!("design_{i}.json"));
        save_design(&p, &design).map_err(|e| Failure::from_core(e, p.display().to_string()))?;
        match (&target, &ev) {
            (Some(t), Some(ev)) => {
                let tf = evaluate_one(ev.as_ref(), &design, &t.freqs)?;
                let eps = error_db(t, &tf).map_err(|e| Failure::from_core(e, "error"))?;
                println!("{} reward {:.6}", p.display(), -eps);
            }
            _ => println!("{}", p.display()),
        }
    }
    Ok(())
}

fn cmd_serve(common: &Common, listen: Option<&str>) -> Result<(), Failure> {
    let cfg = settings(common)?;
    match listen {
        Some(addr) => {
            let listener = std::net::TcpListener::bind(addr).map_err(|e| io(e, format!("cannot listen on {addr}")))?;
            eprintln!("listening on {}", listener.local_addr().map_err(|e| io(e, "listener"))?);
            serve_tcp(listener, cfg.surrogate).map_err(|e| io(e, "serve"))
        }
        None => {
            let stdin = std::io::stdin();
            serve_lines(stdin.lock(), std::io::stdout().lock(), &cfg.surrogate).map_err(|e| io(e, "serve"))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.print_defaults {
        print!("{}", RunConfig::defaults_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Failure::Config(anyhow!("no command given; see --help")));
    };
    match command {
        Command::Train { common, target } => cmd_train(&common, &target),
        Command::SynthTarget { common } => cmd_synth(&common),
        Command::Eval { common, design, target } => cmd_eval(&common, &design, &target),
        Command::Sample { common, checkpoint, count } => cmd_sample(&common, &checkpoint, count),
        Command::Serve { common, listen } => cmd_serve(&common, listen.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code() as u8)
        }
    }
}
