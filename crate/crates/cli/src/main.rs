use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use synfem_core::config::Config;
use synfem_core::harness::{self, Diagnostic};

#[derive(Parser)]
#[command(
    name = "synfem",
    about = "Mixed finite element solver and diagnostics for concentration-dependent power-law fluids",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON problem description
    #[arg(long)]
    config: PathBuf,
    /// override the element pairing from the config (p2p0 or crouzeix-raviart)
    #[arg(long)]
    pairing: Option<String>,
}

impl CommonArgs {
    fn load(&self) -> anyhow::Result<Config> {
        let mut cfg = Config::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(p) = &self.pairing {
            cfg.pairing = p.clone();
            cfg.pairing().context("bad --pairing")?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled flow/transport problem and write the solution
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// output directory (defaults to the config's output.dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convergence study against the built-in manufactured solution
    Study {
        #[command(flatten)]
        common: CommonArgs,
        /// number of refinement levels, starting from the config mesh
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// write the table to this CSV file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mesh-quality diagnostics across refinement levels
    Diagnose {
        #[command(flatten)]
        common: CommonArgs,
        /// which diagnostic to run
        #[arg(long)]
        which: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        /// write the table to this CSV file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print mesh statistics
    MeshInfo {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, out } => {
            let cfg = common.load()?;
            let arts = harness::run(&cfg, out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&arts.header)?);
            for f in &arts.files {
                eprintln!("wrote {}", f.display());
            }
            if !arts.header.converged {
                anyhow::bail!("coupled iteration did not converge");
            }
        }
        Command::Study { common, levels, out } => {
            let cfg = common.load()?;
            let lv: Vec<usize> = (1..=levels).collect();
            let table = harness::convergence_study(&cfg, &lv)?;
            let mut text = table.csv();
            for (w, o) in table.rows.windows(2).zip(table.orders()) {
                text.push_str(&format!(
                    "# order {}->{}: velocity {:.2}, pressure {:.2}, concentration {:.2}\n",
                    w[0].level, w[1].level, o[0], o[1], o[2]
                ));
            }
            emit(&text, out.as_ref())?;
        }
        Command::Diagnose { common, which, levels, out } => {
            let cfg = common.load()?;
            let which = Diagnostic::parse(&which)?;
            let lv: Vec<usize> = (1..=levels).collect();
            let csv = harness::diagnose(&cfg, which, &lv)?;
            emit(&csv, out.as_ref())?;
        }
        Command::MeshInfo { common } => {
            let cfg = common.load()?;
            print!("{}", harness::mesh_info(&cfg)?);
        }
    }
    Ok(())
}
