//! `thermo`: command-line front end for the thermography pipeline.
//!
//! Exit codes: 0 success, 2 input error, 3 pipeline error, 4 report
//! transport error (pipeline artifacts are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use thermo_core::pipeline::{self, PipelineConfig, Stage, StageError};
use thermo_core::synth::SynthSpec;

#[derive(Parser)]
#[command(name = "thermo", version, about = "Pulsed thermography analysis and reporting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute feature maps, masks, consensus, metrics and the report.
    Analyze {
        /// `.tcube` payload; the JSON sidecar must sit next to it.
        cube: PathBuf,
        /// Optical photograph (ROI- or full-frame-sized) for overlays.
        #[arg(long)]
        optical: Option<PathBuf>,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Render a synthetic cube and its ground-truth mask (`gt.json`).
    Synth {
        /// JSON scene description.
        spec: PathBuf,
        /// Output `.tcube` path.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score the consensus mask against a ground-truth RLE mask (JSON on stdout).
    Eval {
        cube: PathBuf,
        gt: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Re-render maps and masks from a previous `analyze` output directory.
    Export {
        run_dir: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration (JSON); flags below override it.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Use the deterministic offline report generator.
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    pct_k: Option<usize>,
    #[arg(long)]
    ppt_bin: Option<usize>,
    #[arg(long)]
    tsr_degree: Option<usize>,
    #[arg(long)]
    tsr_z: Option<f64>,
    #[arg(long)]
    min_area: Option<usize>,
    #[arg(long)]
    border_margin: Option<usize>,
    #[arg(long)]
    dilation: Option<usize>,
    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if self.offline {
            cfg.report.offline = true;
        }
        if let Some(e) = &self.endpoint {
            cfg.report.base_url = e.clone();
        }
        if let Some(m) = &self.model {
            cfg.report.model = m.clone();
        }
        if let Some(k) = self.pct_k {
            cfg.pct_k = k;
        }
        if let Some(b) = self.ppt_bin {
            cfg.ppt_bin = b;
        }
        if let Some(d) = self.tsr_degree {
            cfg.tsr.degree = d;
        }
        if let Some(z) = self.tsr_z {
            cfg.detect.tsr_slope_z = z;
        }
        if self.min_area.is_some() {
            cfg.detect.min_area = self.min_area;
        }
        if self.border_margin.is_some() {
            cfg.detect.border_margin = self.border_margin;
        }
        if let Some(r) = self.dilation {
            cfg.fusion.dilation_r = r;
        }
        Ok(cfg)
    }
}

fn input_failure(e: anyhow::Error) -> ExitCode {
    eprintln!("error: {e:#}");
    ExitCode::from(2)
}

fn core_failure(e: thermo_core::Error) -> ExitCode {
    let err = StageError::from(e);
    eprintln!("error: {}", err.source);
    ExitCode::from(err.exit_code() as u8)
}

fn analyze(cube: &Path, optical: Option<&Path>, opts: &ConfigArgs) -> ExitCode {
    let cfg = match opts.resolve() {
        Ok(c) => c,
        Err(e) => return input_failure(e),
    };
    if opts.print_config {
        print!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    match pipeline::run_analyze(cube, &cfg, optical) {
        Ok(outcome) => {
            let m = &outcome.metrics;
            println!(
                "consensus {:.2}% ({} region{}); t0 = {}, t_peak = {}; outputs in {}",
                m.consensus_area_percent,
                m.consensus_regions,
                if m.consensus_regions == 1 { "" } else { "s" },
                m.t0,
                m.t_peak,
                outcome.output_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            if e.stage == Stage::Report {
                eprintln!("error: report stage failed: {}", e.source);
                eprintln!("maps, masks and metrics were written to {}", cfg.output_dir.display());
            } else {
                eprintln!("error: {}", e.source);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn synth(spec_path: &Path, out: &Path) -> ExitCode {
    let spec: SynthSpec = match std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))
        .and_then(|t| serde_json::from_str(&t).with_context(|| format!("parsing {}", spec_path.display())))
    {
        Ok(s) => s,
        Err(e) => return input_failure(e),
    };
    match pipeline::run_synth(&spec, out) {
        Ok(gt) => {
            println!("wrote {} and {}", out.display(), gt.display());
            ExitCode::SUCCESS
        }
        // Every synth failure is a bad spec or an unwritable path.
        Err(e) => input_failure(e.into()),
    }
}

fn eval(cube: &Path, gt: &Path, opts: &ConfigArgs) -> ExitCode {
    let cfg = match opts.resolve() {
        Ok(c) => c,
        Err(e) => return input_failure(e),
    };
    if opts.print_config {
        print!("{}", cfg.to_json());
        return ExitCode::SUCCESS;
    }
    match pipeline::run_eval(cube, gt, &cfg) {
        Ok(r) => {
            println!("{}", serde_json::to_string_pretty(&r).expect("eval serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => core_failure(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Analyze { cube, optical, opts } => analyze(cube, optical.as_deref(), opts),
        Command::Synth { spec, out } => synth(spec, out),
        Command::Eval { cube, gt, opts } => eval(cube, gt, opts),
        Command::Export { run_dir, out } => match pipeline::run_export(run_dir, out) {
            Ok(files) => {
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => core_failure(e),
        },
    }
}
