use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbffd::geometry::{write_nodes_csv, generate_nodes};
use rbffd::runner::{run_convergence, run_solve, ProblemKind, RunConfig};
use rbffd::Error;

#[derive(Parser)]
#[command(name = "rbffd", version, about = "Adaptive-degree RBF-FD Poisson solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once at a single N.
    Solve(Overrides),
    /// Run a convergence sweep over the N list.
    Converge(Overrides),
    /// Generate a node set and write it as CSV.
    Nodes(Overrides),
}

#[derive(Args)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    problem: Option<String>,
    /// Node counts, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    g: Option<u32>,
    #[arg(long)]
    adaptive: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn load(&self) -> rbffd::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(p) = &self.problem {
            cfg.problem = p.parse::<ProblemKind>()?;
        }
        if let Some(n) = &self.n {
            cfg.n = n.clone();
        }
        if let Some(g) = self.g {
            cfg.g = g;
        }
        if let Some(a) = self.adaptive {
            cfg.adaptive = a;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> rbffd::Result<()> {
    match cli.command {
        Command::Solve(o) => {
            let rec = run_solve(&o.load()?)?;
            println!(
                "N={} h_e={:.4e} nnz={} max_error={:.3e} rel_l2={:.3e} seconds={:.2} degrees={}",
                rec.n, rec.h_e, rec.nnz, rec.max_error, rec.rel_l2_error, rec.seconds, rec.degrees
            );
        }
        Command::Converge(o) => {
            let summary = run_convergence(&o.load()?)?;
            println!("N,h_e,nnz,max_error,rel_l2,seconds,degrees");
            for r in &summary.records {
                println!(
                    "{},{:.4e},{},{:.3e},{:.3e},{:.2},{}",
                    r.n, r.h_e, r.nnz, r.max_error, r.rel_l2_error, r.seconds, r.degrees
                );
            }
            let note = if summary.below_noise_floor { " (below noise floor)" } else { "" };
            println!("slope {:.3}{note}", summary.slope);
        }
        Command::Nodes(o) => {
            let cfg = o.load()?;
            let domain = cfg.problem_spec().domain;
            let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
            fs::create_dir_all(&dir)?;
            for &n in &cfg.n {
                let nodes = generate_nodes(&cfg.generator, n, domain, cfg.seed)?;
                let path = dir.join(format!("nodes_N{n}.csv"));
                write_nodes_csv(&nodes, BufWriter::new(File::create(&path)?))?;
                println!("{} nodes -> {}", nodes.len(), path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}
