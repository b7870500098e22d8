//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

mod support;

use axum::http::StatusCode;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use std::sync::Arc;
use std::time::{Duration, Instant};
use support::{Client, Step, WALKTHROUGH};
use tilewise::cost::{counts, estimate_nest, rank_tile_suggestions, tile_range_candidates, MachineParams};
use tilewise::exec::{execute, execute_many, reference_execute, ExecError, Execution};
use tilewise::gen::{random_inputs, random_schedule};
use tilewise::guide::{OptionAction, Phase, Session};
use tilewise::lower::lower;
use tilewise::view::view_model;
use tilewise::{
    apply_compute_location, apply_tile_range, corpus, default_schedule, parent_tile, Decision, Location, Pipeline,
    Position, Schedule,
};
use tilewise_service::api::router;
use tilewise_service::store::SessionStore;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Suite {
    failures: usize,
}

impl Suite {
    fn run(&mut self, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if took > limit => Err(format!("{detail}; took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}  ({took:.2?})  {detail}"),
            Err(why) => {
                self.failures += 1;
                println!("FAIL  {name}  ({took:.2?})  {why}");
            }
        }
    }
}

fn at(path: &[&str]) -> Location {
    Location::At(Position { path: path.iter().map(|s| s.to_string()).collect(), index: 0 })
}

fn tile_arithmetic() -> Outcome {
    let u = corpus::unsharp();
    let s = apply_tile_range(&u, &default_schedule(&u), "unsharp", 4, 52).map_err(|e| e.to_string())?;
    let s = apply_compute_location(&u, &s, "ratio", &at(&["unsharp.outer"])).map_err(|e| e.to_string())?;
    let s = apply_tile_range(&u, &s, "ratio", 20, 31).map_err(|e| e.to_string())?;
    let viz = view_model(&u, &lower(&u, &s).map_err(|e| e.to_string())?);
    let size = |block: &str| viz.iter().find(|t| t.block == block).map(|t| (t.width, t.height));
    ensure!(size("unsharp.outer") == Some((640, 31)), "unsharp tile {:?}", size("unsharp.outer"));
    ensure!(size("ratio.outer") == Some((32, 1)), "ratio tile {:?}", size("ratio.outer"));
    Ok("640x31 and 32x1".into())
}

fn tiled_listing() -> Outcome {
    let g = corpus::gaussian();
    let s = apply_tile_range(&g, &default_schedule(&g), "blur", 32, 16).map_err(|e| e.to_string())?;
    let s = apply_compute_location(&g, &s, "blur_y", &at(&["blur.outer"])).map_err(|e| e.to_string())?;
    let nest = lower(&g, &s).map_err(|e| e.to_string())?;
    let outer = nest.block("blur.outer").ok_or("no blur.outer block")?;
    ensure!(outer.tile == (8, 16), "tile {:?}", outer.tile);
    let tiles: i64 = outer.vars.iter().map(|v| v.extent).product();
    ensure!(tiles == 512, "{tiles} tiles");
    let skeleton: Vec<String> = nest
        .listing()
        .lines()
        .map(|l| l.split('#').next().unwrap().trim_end().to_string())
        .map(|l| l.split(" = ").next().unwrap().to_string())
        .collect();
    let expected = [
        "  for x_outer in 0..31",
        "    for y_outer in 0..15",
        "      for x in 0..13",
        "        for y in 0..15",
        "          blur_y(x, y)",
        "      for y_inner in 0..15",
        "        for x_inner in 0..7",
        "          blur(x, y)",
    ];
    ensure!(skeleton == expected, "listing\n{}", nest.listing());
    Ok("512 tiles of 8x16, blur_y per tile".into())
}

type RunSet = (Pipeline, Vec<Schedule>, Vec<Result<Execution, ExecError>>);

struct Runs {
    pipelines: Vec<RunSet>,
}

fn random_runs() -> Runs {
    let mut rng = StdRng::seed_from_u64(2024);
    let mut pipelines = Vec::new();
    for p in [corpus::gaussian().with_size(64, 64), corpus::unsharp().with_size(64, 64)] {
        let schedules: Vec<Schedule> = (0..200).map(|_| random_schedule(&p, &mut rng)).collect();
        let inputs = random_inputs(&p, 11);
        let runs = execute_many(&p, &schedules, &inputs);
        pipelines.push((p, schedules, runs));
    }
    Runs { pipelines }
}

fn schedule_invariance(runs: &Runs) -> Outcome {
    let mut n = 0;
    for (p, _, results) in &runs.pipelines {
        let expected = reference_execute(p, &random_inputs(p, 11)).map_err(|e| e.to_string())?;
        for (i, r) in results.iter().enumerate() {
            let r = r.as_ref().map_err(|e| format!("{} schedule {i}: {e}", p.name))?;
            ensure!(r.output.bit_eq(&expected), "{} schedule {i} differs from the reference", p.name);
            n += 1;
        }
    }
    Ok(format!("{n} schedules bitwise equal"))
}

fn count_oracle(runs: &Runs) -> Outcome {
    let m = MachineParams::default();
    let mut n = 0;
    for (p, schedules, results) in &runs.pipelines {
        for (i, (s, r)) in schedules.iter().zip(results).enumerate() {
            let report = &r.as_ref().map_err(|e| e.to_string())?.report;
            let nest = lower(p, s).map_err(|e| e.to_string())?;
            let c = counts(p, &nest);
            let est = estimate_nest(p, &nest, &m);
            for (f, got) in report.funcs.iter().enumerate() {
                ensure!(
                    got.evaluations == c.evaluations[f],
                    "{} #{i} {} evaluations {} vs {}",
                    p.name,
                    got.name,
                    got.evaluations,
                    c.evaluations[f]
                );
                ensure!(
                    got.stores == c.stores[f],
                    "{} #{i} {} stores {} vs {}",
                    p.name,
                    got.name,
                    got.stores,
                    c.stores[f]
                );
                ensure!(got.loads == c.loads[f], "{} #{i} {} loads {} vs {}", p.name, got.name, got.loads, c.loads[f]);
            }
            for fc in &est.per_func {
                let got = report.func(&fc.name).ok_or("missing counters")?;
                ensure!(
                    fc.points == got.stores,
                    "{} #{i} {} points {} vs stores {}",
                    p.name,
                    fc.name,
                    fc.points,
                    got.stores
                );
                ensure!(fc.evaluations == got.evaluations, "{} #{i} {} evaluations", p.name, fc.name);
            }
            let sites: i64 = est.per_func.iter().map(|f| f.load_sites).sum();
            let loads: i64 = report.funcs.iter().map(|f| f.loads).sum();
            ensure!(sites == loads, "{} #{i} load sites {sites} vs loads {loads}", p.name);
            n += 1;
        }
    }
    Ok(format!("{n} schedules, every counter exact"))
}

fn redundancy() -> Outcome {
    let g = corpus::gaussian();
    let inputs = random_inputs(&g, 0);
    let blur_y = |s: &Schedule| -> Result<i64, String> {
        let r = execute(&g, s, &inputs).map_err(|e| e.to_string())?;
        Ok(r.report.func("blur_y").ok_or("no blur_y")?.evaluations)
    };
    let d = default_schedule(&g);
    let root = apply_compute_location(&g, &d, "blur_y", &Location::At(Position::root(0))).map_err(|e| e.to_string())?;
    let per_tile = |rx, ry| -> Result<Schedule, String> {
        let s = apply_tile_range(&g, &d, "blur", rx, ry).map_err(|e| e.to_string())?;
        apply_compute_location(&g, &s, "blur_y", &at(&["blur.outer"])).map_err(|e| e.to_string())
    };
    let (inline, at_root, tiled) = (blur_y(&d)?, blur_y(&root)?, blur_y(&per_tile(32, 16)?)?);
    ensure!((inline, at_root, tiled) == (458752, 67072, 114688), "inline {inline}, root {at_root}, per tile {tiled}");
    // Larger tiles (fewer ranges) never cost more blur_y evaluations.
    let mut sweep = Vec::new();
    for r in [256, 128, 64, 32, 16, 8, 4, 2, 1] {
        sweep.push(blur_y(&per_tile(r, r)?)?);
    }
    ensure!(sweep.windows(2).all(|w| w[0] >= w[1]), "sweep {sweep:?}");
    Ok(format!("458752 / 67072 / 114688; sweep {sweep:?}"))
}

/// Guided sessions over the full-size corpus: the greedy run plus seeded random runs.
fn suggestion_contract() -> Outcome {
    let m = MachineParams::default();
    let mut phases = 0;
    for (k, p) in [corpus::gaussian(), corpus::unsharp()].into_iter().enumerate() {
        for seed in 0..3u64 {
            let mut rng = StdRng::seed_from_u64(seed + 10 * k as u64);
            let mut s = Session::start(p.clone(), m.clone()).map_err(|e| e.to_string())?;
            while !s.is_done() {
                let opts = s.options().map_err(|e| e.to_string())?.to_vec();
                if s.phase() == Phase::TileRange {
                    phases += 1;
                    let f = s.current_func().unwrap().to_string();
                    let (w, h) = parent_tile(&p, s.schedule(), &f).map_err(|e| e.to_string())?;
                    ensure!(!opts.is_empty() && opts.len() <= 5, "{f}: {} suggestions", opts.len());
                    ensure!(opts.windows(2).all(|w| w[0].cost.total <= w[1].cost.total), "{f}: totals not ascending");
                    for o in &opts {
                        let OptionAction::Tile { range_x, range_y } = o.action else {
                            return Err("non-tile option".into());
                        };
                        let one_d = p.func(p.find(&f).unwrap()).dims == 1;
                        ensure!(range_x % 4 == 0 && range_x <= w, "{f}: range_x {range_x} of {w}");
                        ensure!(
                            if one_d { range_y == 1 } else { range_y % 4 == 0 && range_y <= h },
                            "{f}: range_y {range_y} of {h}"
                        );
                    }
                }
                let pick = if seed == 0 { 0 } else { rng.gen_range(0..opts.len()) };
                s.choose(&opts[pick].id).map_err(|e| e.to_string())?;
            }
        }
    }
    let u = corpus::unsharp();
    let start = Instant::now();
    let n = tile_range_candidates((2560, 1600), false).len();
    let top = rank_tile_suggestions(&u, &default_schedule(&u), "unsharp", &m, 5).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    ensure!(n == 256000 && top.len() == 5, "{n} candidates, {} suggestions", top.len());
    ensure!(took < Duration::from_secs(1), "2560x1600 enumeration took {took:.2?}");
    Ok(format!("{phases} tile phases checked; 256000 candidates ranked in {took:.2?}"))
}

fn walkthrough() -> Outcome {
    let mut s = Session::start(corpus::gaussian(), MachineParams::default()).map_err(|e| e.to_string())?;
    let mut seen = vec![(s.instruction().text, s.phase())];
    for option in WALKTHROUGH {
        s.choose(option).map_err(|e| format!("{option}: {e}"))?;
        seen.push((s.instruction().text, s.phase()));
    }
    let first = s.options().map_err(|e| e.to_string())?[0].id.clone();
    s.choose(&first).map_err(|e| e.to_string())?;
    seen.push((s.instruction().text, s.phase()));
    let expected = [
        ("Choose or type the tile range of Func blur.", Phase::TileRange),
        ("Choose the compute location of Func blur_y.", Phase::ComputeLocation),
        ("Choose the compute location of Func bounded.", Phase::ComputeLocation),
        ("Choose the compute location of Func kernel.", Phase::ComputeLocation),
        ("Choose or type the tile range of Func kernel.", Phase::TileRange),
        ("Done!", Phase::Done),
    ];
    let got: Vec<(&str, Phase)> = seen.iter().map(|(t, p)| (t.as_str(), *p)).collect();
    ensure!(got == expected, "{got:?}");
    Ok("6 instructions match".into())
}

/// Re-applies `s` to a smaller image, clamping each split to its parent tile.
fn fit(small: &Pipeline, s: &Schedule) -> Result<Schedule, String> {
    let mut out = default_schedule(small);
    for f in small.inverse_topological_order() {
        let name = small.name_of(f);
        match s.decision(name) {
            Some(Decision::Inline) => {
                out = apply_compute_location(small, &out, name, &Location::Inline).map_err(|e| e.to_string())?
            }
            Some(Decision::ComputedAt { position, split }) => {
                if f != small.output {
                    out = apply_compute_location(small, &out, name, &Location::At(position.clone()))
                        .map_err(|e| e.to_string())?;
                }
                if let Some(t) = split {
                    let (w, h) = parent_tile(small, &out, name).map_err(|e| e.to_string())?;
                    out = apply_tile_range(small, &out, name, t.range_x.min(w), t.range_y.min(h))
                        .map_err(|e| e.to_string())?;
                }
            }
            None => {}
        }
    }
    Ok(out)
}

fn greedy_beats_default() -> Outcome {
    let u = corpus::unsharp();
    let mut s = Session::start(u, MachineParams::default()).map_err(|e| e.to_string())?;
    while !s.is_done() {
        let opts = s.options().map_err(|e| e.to_string())?;
        let best = opts.iter().min_by(|a, b| a.cost.total.total_cmp(&b.cost.total)).ok_or("no options")?.id.clone();
        s.choose(&best).map_err(|e| e.to_string())?;
    }
    let small = corpus::unsharp().with_size(64, 64);
    let greedy = fit(&small, s.schedule())?;
    let inputs = random_inputs(&small, 5);
    let run = |sched: &Schedule| {
        execute(&small, sched, &inputs).map(|r| r.report.total_evaluations()).map_err(|e| e.to_string())
    };
    let (g, d) = (run(&greedy)?, run(&default_schedule(&small))?);
    let script = s.export_schedule().trim_end().replace('\n', "; ");
    ensure!(2 * g <= d, "greedy {g} vs default {d} evaluations ({script})");
    Ok(format!("greedy {g} vs default {d} evaluations ({:.1}%): {script}", 100.0 * g as f64 / d as f64))
}

async fn api_determinism() -> Outcome {
    let steps = vec![
        Step::Tile(4, 52),
        Step::Choose("ratio/at/unsharp.outer:0".into()),
        Step::Undo,
        Step::Choose("ratio/at/root:0".into()),
        Step::Tile(8, 8),
        Step::Choose("sharpen/inline".into()),
        Step::Choose("blur/at/ratio.outer:0".into()),
    ];
    let record = Client { app: router(Arc::new(SessionStore::in_memory())) };
    let (id, _) = record.create(corpus::UNSHARP_SOURCE).await;
    let mut log = Vec::new();
    for step in &steps {
        let r = record.apply(&id, step).await;
        ensure!(r.status == StatusCode::OK, "recording {step:?}: {} {}", r.status, r.text);
        log.push(step.clone());
    }
    let mut state: Value = record.get(&format!("/sessions/{id}")).await.json();
    while state["done"] == false {
        let first = state["options"][0]["id"].as_str().ok_or("no options")?.to_string();
        let step = Step::Choose(first);
        state = record.apply(&id, &step).await.json();
        log.push(step);
    }
    let replay = Client { app: router(Arc::new(SessionStore::in_memory())) };
    let (rid, _) = replay.create(corpus::UNSHARP_SOURCE).await;
    for step in &log {
        ensure!(replay.apply(&rid, step).await.status == StatusCode::OK, "replaying {step:?}");
    }
    let replayed = replay.get(&format!("/sessions/{rid}")).await.json();
    ensure!(replayed == state, "final state documents differ");
    let a = record.get(&format!("/sessions/{id}/schedule")).await.text;
    let b = replay.get(&format!("/sessions/{rid}/schedule")).await.text;
    ensure!(a == b, "schedules differ");
    Ok(format!("{} recorded steps replay to an identical state", log.len()))
}

fn main() {
    let mut suite = Suite { failures: 0 };
    let secs = Duration::from_secs;
    suite.run("tile arithmetic 640x31 / 32x1", secs(1), tile_arithmetic);
    suite.run("tiled listing structure", secs(1), tiled_listing);
    let start = Instant::now();
    let runs = random_runs();
    let exec_time = start.elapsed();
    suite.run("schedule invariance (400 random schedules)", secs(60).saturating_sub(exec_time), || {
        schedule_invariance(&runs)
    });
    suite.run("cost/execution count oracle", secs(120).saturating_sub(exec_time), || count_oracle(&runs));
    suite.run("redundancy trade-off", secs(30), redundancy);
    suite.run("suggestion contract", Duration::MAX, suggestion_contract);
    suite.run("guided walkthrough strings", Duration::MAX, walkthrough);
    suite.run("greedy guided <= 50% of default", secs(60), greedy_beats_default);
    let rt = tokio::runtime::Runtime::new().expect("runtime");
    suite.run("api replay determinism", Duration::MAX, || rt.block_on(api_determinism()));
    println!("shared execution of the random schedules took {exec_time:.2?}");
    if suite.failures > 0 {
        println!("{} criteria failed", suite.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
