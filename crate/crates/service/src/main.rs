use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tilewise::cost::{estimate_nest, rank_compute_locations, rank_tile_suggestions, tiling_skip_reason, MachineParams};
use tilewise::exec::io::{read_image, write_image};
use tilewise::exec::{execute_nest, reference_execute, ExecOptions, Inputs};
use tilewise::gen::random_inputs;
use tilewise::guide::{Phase, Session, SUGGESTIONS};
use tilewise::lower::lower_with;
use tilewise::schedule::{Decision, Position, Schedule, TileSplit};
use tilewise::{corpus, parse_pipeline, Pipeline};
use tilewise_service::api::{parse_size, router};
use tilewise_service::store::SessionStore;

#[derive(Parser)]
#[command(name = "tilewise", version, about = "Guided scheduling of stencil image pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a pipeline and print its functions and dependency graph.
    Check { pipeline: String },
    /// Print the loop nest a schedule lowers to.
    Lower {
        pipeline: String,
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Override the image size, WIDTHxHEIGHT.
        #[arg(long)]
        size: Option<String>,
    },
    /// Print the estimated cost of a schedule, per function.
    Cost {
        pipeline: String,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        machine: Option<PathBuf>,
    },
    /// Rank compute locations and tile ranges for one function.
    Suggest {
        pipeline: String,
        #[arg(long)]
        func: String,
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long, default_value_t = SUGGESTIONS)]
        top: usize,
    },
    /// Execute a schedule on input images and report counters.
    Run {
        pipeline: String,
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Input image as NAME=PATH (.pgm, .ppm or .f64); repeatable. Seeded random inputs when absent.
        #[arg(long = "input", value_name = "NAME=PATH")]
        inputs: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also run the unscheduled reference and compare outputs bit for bit.
        #[arg(long)]
        reference: bool,
    },
    /// Serve the HTTP session API.
    Serve {
        #[arg(long, env = "TILEWISE_PORT", default_value_t = 8080)]
        port: u16,
        /// Persist sessions here and reload them on startup.
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
    /// Interactive guided scheduling on the terminal.
    Guide {
        pipeline: String,
        #[arg(long)]
        machine: Option<PathBuf>,
        /// Write the final schedule here.
        #[arg(long)]
        save: Option<PathBuf>,
    },
}

/// A bundled pipeline name (`gaussian`, `unsharp`) or a path to a `.pipe` file.
fn load_pipeline(arg: &str) -> Result<Pipeline> {
    let text = match corpus::source(arg) {
        Some(src) => src.to_string(),
        None => std::fs::read_to_string(arg).with_context(|| format!("reading pipeline {arg}"))?,
    };
    parse_pipeline(&text).with_context(|| format!("parsing pipeline {arg}"))
}

/// Parsed script, with the output placed at root when the script leaves it out.
fn load_schedule(p: &Pipeline, path: Option<&Path>) -> Result<Schedule> {
    let mut s = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading schedule {}", path.display()))?;
            Schedule::from_script(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?
        }
        None => Schedule::new(),
    };
    let out = p.name_of(p.output);
    if !s.has_decision(out) {
        s.set(out, Decision::ComputedAt { position: Position::root(0), split: None::<TileSplit> });
    }
    Ok(s)
}

fn load_machine(path: Option<&Path>) -> Result<MachineParams> {
    match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading machine {}", path.display()))?;
            MachineParams::from_config(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
        }
        None => Ok(MachineParams::default()),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Check { pipeline } => {
            let p = load_pipeline(&pipeline)?;
            let graph = p.dependency_graph(None).map_err(anyhow::Error::msg)?;
            println!("pipeline {}", p.name);
            for f in p.inverse_topological_order() {
                println!("  {} ({} ops/point)", p.name_of(f), p.ops_per_point(f));
            }
            println!("{}", serde_json::to_string_pretty(&graph)?);
        }
        Command::Lower { pipeline, schedule, size } => {
            let mut p = load_pipeline(&pipeline)?;
            if let Some(size) = size {
                let (w, h) = parse_size(&size).with_context(|| format!("size `{size}` is not WIDTHxHEIGHT"))?;
                p = p.with_size(w, h);
            }
            let s = load_schedule(&p, schedule.as_deref())?;
            let m = MachineParams::default();
            let nest = lower_with(&p, &s, m.vector_width, m.intrinsic_weight)?;
            print!("{}", nest.listing());
        }
        Command::Cost { pipeline, schedule, machine } => {
            let p = load_pipeline(&pipeline)?;
            let s = load_schedule(&p, schedule.as_deref())?;
            let m = load_machine(machine.as_deref())?;
            let nest = lower_with(&p, &s, m.vector_width, m.intrinsic_weight)?;
            let c = estimate_nest(&p, &nest, &m);
            println!("{:<12} {:>14} {:>14} {:>14} {:>14}", "func", "points", "compute", "load", "store");
            for f in &c.per_func {
                println!("{:<12} {:>14} {:>14.0} {:>14.0} {:>14.0}", f.name, f.points, f.compute, f.load, f.store);
            }
            println!("total {:.0} (compute {:.0}, load {:.0}, store {:.0})", c.total, c.compute, c.load, c.store);
        }
        Command::Suggest { pipeline, func, schedule, machine, top } => {
            let p = load_pipeline(&pipeline)?;
            let s = load_schedule(&p, schedule.as_deref())?;
            let m = load_machine(machine.as_deref())?;
            if p.find(&func) != Some(p.output) {
                println!("compute locations for {func}:");
                for o in rank_compute_locations(&p, &s, &func, &m)?.iter().take(top) {
                    println!("  {:<40} {:.0}", o.location.to_string(), o.cost.total);
                }
            }
            if s.is_computed(&func) {
                match tiling_skip_reason(&p, &s, &func)? {
                    Some(reason) => println!("tiling skipped: {reason}"),
                    None => {
                        println!("tile ranges for {func}:");
                        for t in rank_tile_suggestions(&p, &s, &func, &m, top)? {
                            println!("  {:>5} x {:<5} {:.0}", t.range_x, t.range_y, t.cost.total);
                        }
                    }
                }
            }
        }
        Command::Run { pipeline, schedule, inputs, output, reference } => {
            let p = load_pipeline(&pipeline)?;
            let s = load_schedule(&p, schedule.as_deref())?;
            let mut images = Inputs::new();
            for spec in &inputs {
                let (name, path) = spec.split_once('=').with_context(|| format!("`{spec}` is not NAME=PATH"))?;
                images.insert(name.to_string(), read_image(Path::new(path))?);
            }
            // Image sizes come from the inputs, which may differ from the declared ones.
            let p = match images.values().next() {
                Some(b) if p.inputs().count() == 1 => p.with_size(b.extent[0], b.extent[1]),
                _ => p,
            };
            if images.is_empty() {
                images = random_inputs(&p, 0);
            }
            let m = MachineParams::default();
            let nest = lower_with(&p, &s, m.vector_width, m.intrinsic_weight)?;
            let run = execute_nest(&p, &nest, &images, &ExecOptions::default())?;
            println!("{:<12} {:>14} {:>14} {:>14}", "func", "evaluations", "stores", "loads");
            for f in &run.report.funcs {
                println!("{:<12} {:>14} {:>14} {:>14}", f.name, f.evaluations, f.stores, f.loads);
            }
            println!("total evaluations {} in {:.3}s", run.report.total_evaluations(), run.report.wall_time);
            if reference {
                let expected = reference_execute(&p, &images)?;
                if !expected.bit_eq(&run.output) {
                    bail!("output differs from the reference");
                }
                println!("output matches the reference bit for bit");
            }
            if let Some(path) = output {
                write_image(&path, &run.output)?;
            }
        }
        Command::Serve { port, state_dir } => {
            let store = match state_dir {
                Some(dir) => SessionStore::open(&dir)?,
                None => SessionStore::in_memory(),
            };
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let addr = SocketAddr::from(([0, 0, 0, 0], port));
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on {addr}");
                axum::serve(listener, router(Arc::new(store)))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Guide { pipeline, machine, save } => {
            let p = load_pipeline(&pipeline)?;
            let m = load_machine(machine.as_deref())?;
            let s = guide(Session::start(p, m)?)?;
            let script = s.export_schedule();
            match save {
                Some(path) => std::fs::write(&path, &script)?,
                None => print!("{script}"),
            }
        }
    }
    Ok(())
}

fn guide(mut s: Session) -> Result<Session> {
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    loop {
        let ins = s.instruction();
        println!("\n{}   (cost {:.0})", ins.text, ins.current_cost.total);
        if s.phase() == Phase::Done {
            return Ok(s);
        }
        for (i, o) in s.options()?.iter().enumerate() {
            println!("  [{}] {:<44} {:>8.1}", i + 1, o.description, o.display_cost);
        }
        let tile_hint = if s.phase() == Phase::TileRange { ", t RX RY" } else { "" };
        print!("number{tile_hint}, u to undo, q to quit> ");
        std::io::stdout().flush()?;
        let Some(line) = lines.next() else { return Ok(s) };
        let line = line?;
        let words: Vec<&str> = line.split_whitespace().collect();
        let result = match words.as_slice() {
            ["q"] => return Ok(s),
            ["u"] => s.undo(),
            ["t", rx, ry] => match (rx.parse(), ry.parse()) {
                (Ok(rx), Ok(ry)) => s.custom_tile(rx, ry),
                _ => {
                    println!("tile ranges must be integers");
                    continue;
                }
            },
            [n] => match n
                .parse::<usize>()
                .ok()
                .and_then(|n| s.options().ok()?.get(n.wrapping_sub(1)).map(|o| o.id.clone()))
            {
                Some(id) => s.choose(&id),
                None => {
                    println!("no option {n}");
                    continue;
                }
            },
            _ => continue,
        };
        if let Err(e) = result {
            println!("{e}");
        }
    }
}
