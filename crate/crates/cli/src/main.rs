use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use euphemism::pipeline::{
    cmd_detect, cmd_evaluate, cmd_identify, cmd_synth, exit_code, parse_config_pairs, RunConfig, RunDir, RunManifest,
    WordSelection, EXIT_CONFIG, EXIT_STAGE,
};
use euphemism::synth::SynthConfig;
use euphemism::Error;

/// Euphemism detection and identification.
#[derive(Parser)]
#[command(name = "euphemism", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank euphemism candidates for a keyword list.
    Detect(RunArgs),
    /// Map words to target keywords.
    Identify {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated words, or `from-detection:<k>`.
        #[arg(long)]
        words: String,
    },
    /// Write P@k / Acc@k reports for a run.
    Evaluate(RunArgs),
    /// Serve the review API over a runs directory.
    Serve {
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Generate a synthetic corpus with planted euphemisms.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        cover_ratio: f64,
        #[arg(long, default_value_t = 3)]
        keywords: usize,
        #[arg(long, default_value_t = 5)]
        euphemisms_per_keyword: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    keywords: Option<String>,
    #[arg(long)]
    truth: Option<String>,
    /// contextual-mlm or count-oracle.
    #[arg(long)]
    backend: Option<String>,
    /// MLM threshold.
    #[arg(long)]
    t: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    run_id: Option<String>,
    /// Comma-separated k values for P@k.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    runs_dir: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn overrides(&self) -> Result<Vec<(String, String)>, Error> {
        let mut out: Vec<(String, String)> = [
            ("corpus", &self.corpus),
            ("keywords", &self.keywords),
            ("truth", &self.truth),
            ("backend", &self.backend),
            ("t", &self.t),
            ("seed", &self.seed),
            ("run_id", &self.run_id),
            ("k", &self.k),
            ("runs_dir", &self.runs_dir),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    /// Defaults, then the stored config of an existing run (when
    /// `reuse_run`), then `--config`, then flags.
    fn resolve(&self, reuse_run: bool) -> Result<RunConfig, Error> {
        let overrides = self.overrides()?;
        let mut cfg = RunConfig::default();
        if reuse_run {
            let mut probe = RunConfig::default();
            if let Some(p) = &self.config {
                probe = RunConfig::load(Some(p), Vec::<(String, String)>::new())?;
            }
            probe.apply(overrides.iter().cloned())?;
            if !probe.run_id.is_empty() {
                let stored = RunDir::new(probe.run_dir()).config();
                if stored.is_file() {
                    let text = std::fs::read_to_string(&stored).map_err(|e| Error::Config(e.to_string()))?;
                    cfg.apply(parse_config_pairs(&text)?)?;
                }
            }
        }
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
            cfg.apply(parse_config_pairs(&text)?)?;
        }
        cfg.apply(overrides)?;
        Ok(cfg)
    }
}

fn print_manifest(m: &RunManifest, runs_dir: &Path) {
    println!("run {} ({})", m.run_id, runs_dir.join(&m.run_id).display());
    for e in m.stages() {
        let status = serde_json::to_value(e.status).unwrap_or_default();
        println!("  {:<12} {}", e.stage, status.as_str().unwrap_or("?"));
        for (k, v) in &e.artifacts {
            println!("    {k}: {v}");
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Detect(args) => {
            let mut cfg = args.resolve(false)?;
            cfg.ensure_run_id();
            let m = cmd_detect(&cfg)?;
            print_manifest(&m, &cfg.runs_dir);
        }
        Command::Identify { run, words } => {
            let cfg = run.resolve(true)?;
            if cfg.run_id.is_empty() {
                return Err(Error::Config("identify needs --run-id".into()));
            }
            let m = cmd_identify(&cfg, &words.parse::<WordSelection>()?)?;
            print_manifest(&m, &cfg.runs_dir);
        }
        Command::Evaluate(args) => {
            let cfg = args.resolve(true)?;
            if cfg.run_id.is_empty() {
                return Err(Error::Config("evaluate needs --run-id".into()));
            }
            for p in cmd_evaluate(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Serve { runs_dir, host, port } => {
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Config(e.to_string()))?;
            rt.block_on(euphemism_review::serve(runs_dir, SocketAddr::new(host, port)))
                .map_err(|e| match e {
                    euphemism_review::ServeError::NoRuns(_) | euphemism_review::ServeError::Bind { .. } => {
                        Error::Config(e.to_string())
                    }
                    other => Error::InvalidInput(other.to_string()),
                })?;
        }
        Command::Synth {
            out,
            seed,
            cover_ratio,
            keywords,
            euphemisms_per_keyword,
        } => {
            let cfg = SynthConfig {
                seed,
                cover_ratio,
                keywords,
                euphemisms_per_keyword,
                ..SynthConfig::default()
            };
            let paths = cmd_synth(&cfg, &out)?;
            println!("corpus: {}", paths.corpus.display());
            println!("keywords: {}", paths.keywords.display());
            println!("truth: {}", paths.truth.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            debug_assert!(code == EXIT_CONFIG || code == EXIT_STAGE);
            ExitCode::from(code as u8)
        }
    }
}
