use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use annobench::export::{self, ExportFormat};
use annobench::session::{Workbench, WorkbenchOptions};
use annobench::wizard::{self, InteractiveIo, ScriptedIo};
use annobench::{data, gallery, load_config, server, Error};

#[derive(Parser)]
#[command(name = "annobench", version, about = "Self-hosted text annotation server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve a task until interrupted.
    Start {
        config: PathBuf,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Build a task config by answering questions.
    Init {
        /// Read answers from a file, one per line, instead of the terminal.
        #[arg(long)]
        answers: Option<PathBuf>,
        #[arg(long, default_value = "config.yaml")]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Check a config and its data files. Exits 1 on any problem.
    Validate { config: PathBuf },
    /// Write stored annotations to files.
    Export {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        format: ExportFormat,
        /// Defaults to `<output_dir>/export`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in templates.
    Templates,
    /// Copy a built-in template into a directory.
    Scaffold { id: String, dir: PathBuf },
}

fn overrides(config: &mut annobench::TaskConfig) -> anyhow::Result<()> {
    server::apply_env_overrides(config, |k| std::env::var(k).ok())?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Start {
            config,
            port,
            host,
            output_dir,
        } => {
            let mut cfg = load_config(&config)?;
            overrides(&mut cfg)?;
            if let Some(p) = port {
                cfg.server.port = p;
            }
            if let Some(h) = host {
                cfg.server.host = h;
            }
            if let Some(d) = output_dir {
                cfg.server.output_dir = d;
            }
            let wb = Workbench::open(cfg)?;
            let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            rt.block_on(server::serve(wb))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Init { answers, out, force } => {
            if out.exists() && !force {
                bail!("{} exists; pass --force to overwrite", out.display());
            }
            let cfg = match answers {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    wizard::run_wizard(&mut ScriptedIo::from_text(&text))?
                }
                None => {
                    let stdin = io::stdin();
                    let mut io = InteractiveIo::new(stdin.lock(), io::stdout());
                    wizard::run_wizard(&mut io)?
                }
            };
            std::fs::write(&out, wizard::to_yaml(&cfg)).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let result = load_config(&config).and_then(|c| data::load_instances(&c).map(|i| (c, i)));
            match result {
                Ok((c, instances)) => {
                    println!(
                        "ok: {:?}, {} scheme(s), {} instance(s)",
                        c.task_name,
                        c.schemes.len(),
                        instances.len()
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(Error::Invalid(issues)) => {
                    for i in issues {
                        eprintln!("{i}");
                    }
                    Ok(ExitCode::FAILURE)
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Export { config, format, out } => {
            let mut cfg = load_config(&config)?;
            overrides(&mut cfg)?;
            let dir = out.unwrap_or_else(|| export::default_dir(&cfg));
            let wb = Workbench::open_with(
                cfg,
                WorkbenchOptions {
                    background_training: false,
                    ..Default::default()
                },
            )?;
            let summary = export::export(&wb, format, &dir)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Templates => {
            for t in gallery::list_templates() {
                println!("{:<24} {}", t.id, t.description);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Scaffold { id, dir } => {
            let path = gallery::scaffold(&id, &dir)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
