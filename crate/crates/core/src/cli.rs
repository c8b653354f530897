//! Command-line entry point.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::experiments::{preset_appendix_c, preset_by_name, run_experiment, AppendixVariant, ExperimentPreset};
use crate::report::{self, load_config, ResolvedConfig};
use crate::sampling::derive_stream;
use crate::theory::{self, BoundInputs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "coevolve", version, about = "Co-evolving text and image model collapse simulator")]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, env = "COEVOLVE_SEED")]
    seed: Option<u64>,
    /// Independent runs per sweep value.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use the full run count and horizons.
    #[arg(long, global = true)]
    paper_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a configuration file.
    Run { config: PathBuf },
    /// Run a named figure preset.
    Figure { name: Figure },
    /// Evaluate theory calculators and print `name=value` lines.
    Bounds {
        name: BoundName,
        #[command(flatten)]
        inputs: BoundArgs,
    },
    /// Monte Carlo estimate of the Wishart square-root scalar.
    AlphaWishart {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        dof: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Figure {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    #[value(name = "fig7-deterministic")]
    Fig7Deterministic,
    #[value(name = "appendixC")]
    AppendixC,
}

impl Figure {
    fn preset_name(self) -> &'static str {
        match self {
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig7Deterministic => "fig7-deterministic",
            Figure::AppendixC => "appendixC",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BoundName {
    DiversityFloor,
    ImageRate,
    MatthewRatio,
    FrozenTextFidelity,
    TextInjectionFloor,
    ImageInjectionDiversityFloor,
    ImageInjectionFidelity,
    All,
}

#[derive(Debug, Args)]
struct BoundArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    h0: Option<f64>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long = "C")]
    c: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long = "N0")]
    n0: Option<usize>,
    #[arg(long)]
    tr_sigma0: Option<f64>,
    #[arg(long)]
    tr_sqrt_user: Option<f64>,
    #[arg(long)]
    alpha_wishart: Option<f64>,
}

impl BoundArgs {
    fn resolve(&self) -> BoundInputs {
        let mut b = BoundInputs::default();
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => { $(if let Some(v) = self.$src { b.$dst = v; })* };
        }
        set!(d => d, n => n, k => k, p => p, h0 => h0, t => t, c => c, alpha => alpha_inj, eps => eps_inj,
             n0 => n0, tr_sigma0 => tr_sigma0, tr_sqrt_user => tr_sqrt_sigma_user, alpha_wishart => alpha_wishart);
        b.rho = self.rho.unwrap_or_else(|| theory::image_rate_approx(b.d, b.n, b.p));
        b
    }
}

fn bound_lines(name: BoundName, b: &BoundInputs) -> Result<Vec<String>> {
    let all = name == BoundName::All;
    let mut out = Vec::new();
    if all || name == BoundName::DiversityFloor {
        out.push(format!("diversity_floor={}", theory::diversity_floor(b.h0, b.n, b.t)));
    }
    if all || name == BoundName::ImageRate {
        out.push(format!("image_rate={}", theory::image_rate_approx(b.d, b.n, b.p)));
    }
    if all || name == BoundName::MatthewRatio {
        out.push(format!("matthew_ratio={}", theory::matthew_ratio_bound(b.d, b.n, b.k, b.eps_inj)));
    }
    if all || name == BoundName::FrozenTextFidelity {
        out.push(format!(
            "frozen_text_fidelity={}",
            theory::frozen_text_fidelity_bound(b.c, b.rho, b.n, b.p)?
        ));
    }
    if all || name == BoundName::TextInjectionFloor {
        out.push(format!(
            "text_injection_floor={}",
            theory::text_injection_floor(b.alpha_inj, b.eps_inj, b.n)
        ));
    }
    if all || name == BoundName::ImageInjectionDiversityFloor {
        out.push(format!(
            "image_injection_diversity_floor={}",
            theory::image_injection_diversity_floor(b.alpha_wishart, b.n, b.n0, b.tr_sqrt_sigma_user)?
        ));
    }
    if all || name == BoundName::ImageInjectionFidelity {
        let v = match theory::image_injection_fidelity_limit(b.n, b.p, b.n0, b.tr_sigma0)? {
            theory::FidelityLimit::Bounded(v) => v.to_string(),
            theory::FidelityLimit::Unbounded => "unbounded".into(),
        };
        out.push(format!("image_injection_fidelity={v}"));
    }
    Ok(out)
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

struct Harness {
    seed: u64,
    workers: usize,
    out: PathBuf,
    paper_scale: bool,
}

/// Runs a preset and writes its artifacts; returns whether any run aborted.
fn execute(h: &Harness, preset: &ExperimentPreset, dir: &Path, out: &mut dyn Write) -> Result<bool> {
    let result = run_experiment(preset, h.seed, h.workers)?;
    let resolved = ResolvedConfig::new(preset, h.seed, h.workers, h.paper_scale);
    let paths = report::write_outputs(dir, preset, &resolved, &result)?;
    for p in paths {
        let _ = writeln!(out, "wrote {}", p.display());
    }
    for a in &result.metadata.aborts {
        let _ = writeln!(out, "aborted: sweep value {} run {}: {}", a.sweep_value, a.run, a.message);
    }
    Ok(!result.metadata.aborts.is_empty())
}

fn run_command(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let runs = cli.runs;
    let mut harness = Harness {
        seed: cli.seed.unwrap_or(0),
        workers: cli.workers.unwrap_or_else(default_workers),
        out: cli.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        paper_scale: cli.paper_scale,
    };
    if harness.workers == 0 {
        return Err(Error::Range {
            key: "workers".into(),
            message: "must be at least 1".into(),
        });
    }
    if runs == Some(0) {
        return Err(Error::Range {
            key: "runs".into(),
            message: "must be at least 1".into(),
        });
    }
    let aborted = match cli.command {
        Command::Run { config } => {
            let file = load_config(&config)?;
            let mut preset = {
                let mut f = file.clone();
                f.paper_scale = Some(cli.paper_scale || file.paper_scale.unwrap_or(false));
                harness.paper_scale = f.paper_scale.unwrap_or(false);
                f.resolve()?
            };
            if let Some(r) = runs {
                preset.runs = r;
            }
            harness.seed = cli.seed.or(file.seed).unwrap_or(0);
            harness.workers = cli.workers.or(file.workers).unwrap_or(harness.workers);
            harness.out = cli.out.or(file.out).unwrap_or(harness.out);
            let dir = harness.out.clone();
            execute(&harness, &preset, &dir, out)?
        }
        Command::Figure { name: Figure::AppendixC } => {
            let mut any = false;
            for v in AppendixVariant::ALL {
                let preset = preset_appendix_c(v);
                let dir = harness.out.join(&preset.name);
                any |= execute(&harness, &preset, &dir, out)?;
            }
            any
        }
        Command::Figure { name } => {
            let mut preset = preset_by_name(name.preset_name())?;
            if harness.paper_scale {
                preset = preset.paper_scale();
            }
            if let Some(r) = runs {
                preset.runs = r;
            }
            let dir = harness.out.clone();
            execute(&harness, &preset, &dir, out)?
        }
        Command::Bounds { name, inputs } => {
            for line in bound_lines(name, &inputs.resolve())? {
                let _ = writeln!(out, "{line}");
            }
            false
        }
        Command::AlphaWishart { d, dof, samples } => {
            let mut rng = derive_stream(harness.seed, 0, 0);
            let (alpha, se) = theory::estimate_wishart_sqrt_alpha(d, dof, samples, &mut rng)?;
            let _ = writeln!(out, "alpha={alpha}");
            let _ = writeln!(out, "stderr={se}");
            false
        }
    };
    Ok(if aborted { EXIT_ABORTED } else { EXIT_OK })
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_main_with(argv, &mut std::io::stdout())
}

pub fn cli_main_with<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
