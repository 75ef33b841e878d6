mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};
use commands::{CliError, Ctx};
use config::RunConfig;
use report::{Artifacts, Summary};
use std::path::PathBuf;
use std::process::ExitCode;

/// Effective magnetic Hamiltonians from Parseval frames of isolated Bloch bands.
#[derive(Parser)]
#[command(name = "bandframe", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Frame seed; overrides `frame.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the regression reference instead of comparing against it.
    #[arg(long, global = true)]
    bless: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Bands, isolated family and Chern number.
    Bands,
    /// Parseval frame field with n_B escalation.
    Frame,
    /// Wannier functions and their decay.
    Wannier,
    /// Unperturbed and magnetic effective hoppings.
    Effective,
    /// Spectra of the effective symbol over rational fluxes.
    Butterfly,
    /// Hausdorff distance between full and effective spectra.
    Compare,
    /// Schur complement spectrum check and Feshbach norms.
    Schur,
    /// Effective dynamics against the full evolution.
    Evolve,
    /// Property certificates for the configured model.
    Selftest,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Bands => "bands",
            Cmd::Frame => "frame",
            Cmd::Wannier => "wannier",
            Cmd::Effective => "effective",
            Cmd::Butterfly => "butterfly",
            Cmd::Compare => "compare",
            Cmd::Schur => "schur",
            Cmd::Evolve => "evolve",
            Cmd::Selftest => "selftest",
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.frame.seed = Some(s);
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    Ok(cfg.resolve()?)
}

fn model_label(cfg: &RunConfig) -> String {
    match (&cfg.model.name, &cfg.model.path) {
        (Some(n), _) => n.clone(),
        (None, Some(p)) => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        _ => String::new(),
    }
}

fn run(cli: &Cli) -> Result<Summary, (CliError, Option<Summary>)> {
    let cfg = load(cli).map_err(|e| (e, None))?;
    if let Some(n) = cli.workers {
        // a second initialisation only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let model = cfg.model().map_err(|e| (e.into(), None))?;
    let canonical = cfg.to_toml();
    let fp = bandframe::validate::fingerprint(&canonical);
    let mut art = Artifacts::new(&cfg.output.dir).map_err(|e| (e.into(), None))?;
    art.text("effective_config.toml", &canonical).map_err(|e| (e.into(), None))?;
    let s = Summary::new(cli.cmd.name(), fp, model_label(&cfg));
    let mut ctx = Ctx { cfg, model, art, s };
    let out = match cli.cmd {
        Cmd::Bands => commands::bands(&mut ctx),
        Cmd::Frame => commands::frame(&mut ctx),
        Cmd::Wannier => commands::wannier(&mut ctx),
        Cmd::Effective => commands::effective(&mut ctx),
        Cmd::Butterfly => commands::butterfly(&mut ctx),
        Cmd::Compare => commands::compare(&mut ctx),
        Cmd::Schur => commands::schur(&mut ctx),
        Cmd::Evolve => commands::evolve(&mut ctx),
        Cmd::Selftest => commands::selftest(&mut ctx),
    };
    let Ctx { cfg, mut art, mut s, .. } = ctx;
    if let Err(e) = out {
        s.set("error", e.to_string());
        finish(&mut art, &mut s).map_err(|e| (e.into(), None))?;
        return Err((e, Some(s)));
    }
    if cfg.model.name.is_some() {
        let path = cfg.output.reference_dir.join(&s.model).join(format!("{}.json", s.subcommand));
        report::regression(&mut s, &path, cli.bless).map_err(|e| (e.into(), None))?;
    }
    finish(&mut art, &mut s).map_err(|e| (e.into(), None))?;
    Ok(s)
}

fn finish(art: &mut Artifacts, s: &mut Summary) -> std::io::Result<()> {
    s.artifacts = art.written.clone();
    s.artifacts.push("summary.json".into());
    let snapshot = s.clone();
    art.json("summary.json", &snapshot)
}

fn print_certificates(s: &Summary) {
    for c in &s.certificates {
        let tag = if c.passed { "ok  " } else { "FAIL" };
        let rel = if c.lower { ">=" } else { "<=" };
        println!("{tag} {}: {:.3e} {rel} {:.1e}", c.name, c.value, c.bound);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(s) => {
            print_certificates(&s);
            let failed = s.failed();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                for c in failed {
                    eprintln!("error: certificate failed: {} (value {:e}, bound {:e})", c.name, c.value, c.bound);
                }
                ExitCode::from(2)
            }
        }
        Err((e, s)) => {
            if let Some(s) = s {
                print_certificates(&s);
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
