use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tbc_core::config::{BoundaryMode, SimulationConfig};
use tbc_core::harness::{
    cmd_bench, cmd_precompute, cmd_reference, cmd_run, compare, convergence_orders, exit_code, growth, ReferenceKind,
    RunOptions,
};
use tbc_core::output::Trajectory;
use tbc_core::{Error, Result};

#[derive(Parser)]
#[command(name = "tbc", version, about = "1D Schrodinger solver with transparent boundaries under a vector potential")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the boundary operator and write it to a file.
    Precompute {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// March the configured problem.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ops: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<BoundaryMode>,
        /// Output directory (default: output.dir of the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also export the snapshots as CSV.
        #[arg(long)]
        csv: bool,
    },
    /// Write a reference trajectory on the interior grid.
    Reference {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: ReferenceKind,
        /// Half-width of the Dirichlet domain.
        #[arg(long = "L")]
        half_width: Option<f64>,
        /// Output file (default: <output.dir>/reference_<kind>.bin).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Max L2 error between trajectories. With more than two files the
    /// first is the reference and the rest a step-halving series.
    Compare {
        #[arg(required = true, num_args = 2..)]
        files: Vec<PathBuf>,
        #[arg(long, value_parser = parse_domain)]
        domain: Option<(f64, f64)>,
        /// Write the per-time error curve(s) to this CSV file.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Time both transparent modes for a list of step counts.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        steps: Vec<usize>,
        /// Write the reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<BoundaryMode, String> {
    BoundaryMode::parse(s).map_err(|e| e.to_string())
}

fn parse_kind(s: &str) -> std::result::Result<ReferenceKind, String> {
    ReferenceKind::parse(s).map_err(|e| e.to_string())
}

fn parse_domain(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err("need lo < hi".into())
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Precompute { config, out } => {
            let cfg = SimulationConfig::load(&config)?;
            let rep = cmd_precompute(&cfg, &out)?;
            let st = rep.storage;
            println!("wrote {} in {:.2} s", out.display(), rep.seconds);
            println!(
                "block storage: {} of {} dense entries (ratio {:.4}), near field {} entries, {} fallback blocks",
                st.s_blocks.factors + st.d_blocks.factors,
                st.s_blocks.dense + st.d_blocks.dense,
                st.block_ratio(),
                st.near_field,
                st.fallback_blocks
            );
            print!("{}", rep.rank_table());
        }
        Cmd::Run { config, ops, mode, out, csv } => {
            let cfg = SimulationConfig::load(&config)?;
            let mut opts = RunOptions::from_config(&cfg);
            if ops.is_some() {
                opts.ops = ops;
            }
            opts.mode = mode;
            if let Some(o) = out {
                opts.out_dir = o;
            }
            opts.csv = csv;
            let s = cmd_run(&cfg, &opts)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            println!("mode {} steps {} final L2 {:e} final max {:e}", s.mode, s.steps, s.final_l2, s.final_max);
            println!(
                "marching {:.3} s, tbc obtain {:.3} s, row generation {:.3} s, precompute {:.3} s",
                s.times.marching, s.times.tbc_obtain, s.times.row_generation, s.times.precompute
            );
            println!("outputs in {}", opts.out_dir.display());
        }
        Cmd::Reference { config, kind, half_width, out } => {
            let cfg = SimulationConfig::load(&config)?;
            let name = match kind {
                ReferenceKind::Analytic => "reference_analytic.bin",
                ReferenceKind::Dirichlet => "reference_dirichlet.bin",
            };
            let out = out.unwrap_or_else(|| cfg.resolve(&cfg.output_dir).join(name));
            let frames = cmd_reference(&cfg, kind, half_width, &out)?;
            println!("wrote {frames} frames to {}", out.display());
        }
        Cmd::Compare { files, domain, curve } => {
            let reference = Trajectory::load(&files[0])?;
            let mut errors = Vec::new();
            let mut curves = Vec::new();
            for f in &files[1..] {
                let rep = compare(&reference, &Trajectory::load(f)?, domain)?;
                println!("{}: max L2 error {:e}", f.display(), rep.max_l2);
                errors.push(rep.max_l2);
                curves.push((f.display().to_string(), rep.curve));
            }
            if errors.len() > 1 {
                println!("{:>14}  {:>8}", "error", "order");
                println!("{:>14.6e}  {:>8}", errors[0], "-");
                for (e, p) in errors[1..].iter().zip(convergence_orders(&errors)) {
                    println!("{e:>14.6e}  {p:>8.3}");
                }
            }
            if let Some(path) = curve {
                use std::io::Write;
                let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
                writeln!(w, "file,t,l2").map_err(io_err)?;
                for (name, c) in &curves {
                    for (t, e) in c {
                        writeln!(w, "{name},{t:e},{e:e}").map_err(io_err)?;
                    }
                }
            }
        }
        Cmd::Bench { config, steps, json } => {
            let cfg = SimulationConfig::load(&config)?;
            let reps = cmd_bench(&cfg, &steps, |m| eprintln!("{m}"))?;
            println!(
                "{:>8} {:>12} {:>14} {:>14} {:>14} {:>10}",
                "N", "marching s", "obtain bfly s", "obtain dir s", "precompute s", "storage"
            );
            for r in &reps {
                println!(
                    "{:>8} {:>12.3} {:>14.4} {:>14.4} {:>14.2} {:>10.4}",
                    r.steps, r.butterfly.marching, r.butterfly.tbc_obtain, r.direct.tbc_obtain, r.butterfly.precompute, r.storage_ratio
                );
            }
            let gb = growth(&reps, |r| r.butterfly.tbc_obtain);
            let gd = growth(&reps, |r| r.direct.tbc_obtain);
            for (i, (b, d)) in gb.iter().zip(&gd).enumerate() {
                let flag = if *b <= 2.6 { "ok" } else { "exceeds 2.6" };
                println!("N {} -> {}: butterfly x{b:.2} ({flag}), direct x{d:.2}", reps[i].steps, reps[i + 1].steps);
            }
            if let Some(path) = json {
                let text = serde_json::to_string_pretty(&reps).map_err(|e| Error::Domain(e.to_string()))?;
                std::fs::write(path, text + "\n").map_err(io_err)?;
            }
        }
    }
    Ok(())
}
