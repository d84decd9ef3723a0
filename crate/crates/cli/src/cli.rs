//! Argument parsing and command dispatch for the `radvid` binary.
//!
//! Settings are resolved as built-in defaults, then the config file
//! (`--config`, else `./radvid.toml` when present), then flags.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use radvid_core::media::MuxTarget;

use crate::config::PipelineConfig;
use crate::demo::{write_demo, Scenario};
use crate::error::CliError;
use crate::pipeline::{Pipeline, StageName, ERROR_FILE};
use crate::runlog::RunLog;

pub const DEFAULT_CONFIG: &str = "radvid.toml";

#[derive(Debug, Parser)]
#[command(name = "radvid", version, about = "Turn a chest CT and its report into a narrated video report")]
pub struct Args {
    /// Pipeline config file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `paths.output`.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Provider override: llm=mock|http, seg=files|http|phantom, tts=offline|http.
    #[arg(long = "provider", global = true, value_name = "KIND=BACKEND")]
    pub providers: Vec<String>,
    /// Reserved; every stage is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the whole pipeline and write the video (or frame directory).
    Generate,
    /// Print the storyboard JSON without rendering media.
    Storyboard,
    /// Run one stage: findings, segment, register or mesh.
    Stage { name: StageName },
    /// Write demo inputs (phantom scans, report, LLM fixture, config).
    Demo {
        dir: PathBuf,
        /// lower-lobes, pair or clear.
        #[arg(long, default_value = "lower-lobes")]
        scenario: Scenario,
    },
}

impl Command {
    fn name(&self) -> String {
        match self {
            Command::Generate => "generate".into(),
            Command::Storyboard => "storyboard".into(),
            Command::Stage { name } => format!("stage {}", name.as_str()),
            Command::Demo { .. } => "demo".into(),
        }
    }
}

/// Resolve the effective config from the file and flags.
pub fn resolve_config(args: &Args) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None if Path::new(DEFAULT_CONFIG).is_file() => PipelineConfig::load(Path::new(DEFAULT_CONFIG))?,
        None => PipelineConfig::default(),
    };
    for spec in &args.providers {
        cfg.set_provider(spec)?;
    }
    if let Some(out) = &args.out {
        cfg.paths.output = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_logging(verbose: bool) {
    let level = if verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("RADVID_LOG")
        .format_timestamp(None)
        .try_init();
}

fn report_error(e: &CliError, out_dir: Option<&Path>) -> i32 {
    let rec = e.record();
    let json = serde_json::to_string(&rec).expect("error record serializes");
    eprintln!("{json}");
    if let Some(dir) = out_dir {
        let written = std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(dir.join(ERROR_FILE), format!("{json}\n")));
        if let Err(w) = written {
            log::warn!("could not write {}: {w}", dir.join(ERROR_FILE).display());
        }
    }
    rec.exit_code
}

fn execute(args: &Args, stdout: &mut dyn Write) -> Result<(), (CliError, Option<PathBuf>)> {
    if let Command::Demo { dir, scenario } = &args.command {
        let files = write_demo(dir, *scenario).map_err(|e| (CliError::pipeline("demo", e), None))?;
        let _ = writeln!(stdout, "{}", files.config.display());
        return Ok(());
    }
    let cfg = resolve_config(args).map_err(|e| (e, None))?;
    if args.seed.is_some() {
        log::info!("--seed is reserved and has no effect");
    }
    let pipeline = Pipeline::new(cfg).map_err(|e| (e, None))?;
    let out_dir = pipeline.out_dir().to_path_buf();
    let writes_files = !matches!(args.command, Command::Storyboard);
    let log_dir = writes_files.then_some(out_dir.as_path());
    let mut log = RunLog::create(log_dir, pipeline.calls.clone())
        .map_err(|e| (CliError::pipeline("output", e), None))?;
    if writes_files {
        let _ = std::fs::remove_file(out_dir.join(ERROR_FILE));
    }
    let command = args.command.name();
    log.emit(pipeline.run_event(&command, "started", None));
    let result = match &args.command {
        Command::Generate => pipeline.generate(&mut log).map(|o| {
            let (MuxTarget::Video(p) | MuxTarget::Fallback(p)) = &o.mux.target;
            let _ = writeln!(stdout, "{}", p.display());
        }),
        Command::Storyboard => pipeline.plan(&mut log).map(|p| {
            let _ = write!(stdout, "{}", p.storyboard.to_json());
        }),
        Command::Stage { name } => pipeline.stage(*name, &mut log).map(|paths| {
            for p in paths {
                let _ = writeln!(stdout, "{}", p.display());
            }
        }),
        Command::Demo { .. } => unreachable!("handled above"),
    };
    match result {
        Ok(()) => {
            log.emit(pipeline.run_event(&command, "ok", Some(0)));
            Ok(())
        }
        Err(e) => {
            log.emit(pipeline.run_event(&command, "error", Some(e.exit_code())));
            Err((e, writes_files.then_some(out_dir)))
        }
    }
}

/// Run the CLI with `argv` (including the program name); returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(args.verbose);
    match execute(&args, stdout) {
        Ok(()) => 0,
        Err((e, dir)) => report_error(&e, dir.as_deref()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(argv: &[&str]) -> Args {
        Args::try_parse_from(argv).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.toml");
        std::fs::write(&f, "[providers]\ntts = \"offline\"\n[paths]\noutput = \"o\"\n").unwrap();
        let a = parse(&[
            "radvid",
            "--config",
            f.to_str().unwrap(),
            "storyboard",
            "--provider",
            "seg=files",
            "--out",
            "/tmp/x",
        ]);
        let e = resolve_config(&a).unwrap_err();
        assert!(e.to_string().contains("paths.mask_dir"), "{e}");
        let a = parse(&["radvid", "--config", f.to_str().unwrap(), "--out", "/tmp/x", "generate"]);
        let cfg = resolve_config(&a).unwrap();
        assert_eq!(cfg.paths.output, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn stage_names() {
        let a = parse(&["radvid", "stage", "mesh"]);
        assert!(matches!(a.command, Command::Stage { name: StageName::Mesh }));
        assert!(Args::try_parse_from(["radvid", "stage", "render"]).is_err());
    }

    #[test]
    fn bad_arguments_exit_2() {
        let mut out = Vec::new();
        assert_eq!(run(["radvid", "frobnicate"], &mut out), 2);
        assert_eq!(run(["radvid", "--help"], &mut out), 0);
    }
}
