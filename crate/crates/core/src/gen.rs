//! Random valid schedules, small random pipelines and random input images.

use crate::exec::{Buffer, Inputs};
use crate::ir::{parse_pipeline, Pipeline};
use crate::lower::{apply_compute_location, apply_tile_range, default_schedule, parent_tile, valid_compute_locations};
use crate::schedule::Schedule;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

fn pick_range<R: Rng>(rng: &mut R, max: i64) -> i64 {
    if rng.gen_bool(0.5) {
        let pow = [1, 2, 4, 8, 16, 32];
        *pow.iter().filter(|&&r| r <= max).collect::<Vec<_>>().choose(rng).copied().unwrap_or(&1)
    } else {
        rng.gen_range(1..=max.max(1))
    }
}

/// A schedule built the way a guided session would: in scheduling order,
/// each function gets a random valid location and possibly a random split.
pub fn random_schedule<R: Rng>(p: &Pipeline, rng: &mut R) -> Schedule {
    let mut s = default_schedule(p);
    for f in p.inverse_topological_order() {
        let name = p.name_of(f).to_string();
        if f != p.output {
            let locations = valid_compute_locations(p, &s, &name).expect("consumers are decided first");
            let choice = locations.choose(rng).expect("inline is always offered");
            s = apply_compute_location(p, &s, &name, choice).expect("offered locations apply");
        }
        if (f == p.output || s.is_computed(&name)) && rng.gen_bool(0.6) {
            let (w, h) = parent_tile(p, &s, &name).expect("computed");
            let (rx, ry) = (pick_range(rng, w), pick_range(rng, h));
            s = apply_tile_range(p, &s, &name, rx, ry).expect("ranges within the parent tile");
        }
    }
    s
}

/// Pipeline source with up to `max_funcs` two-dimensional stencil stages
/// over a clamped input of `size` x `size`.
pub fn random_pipeline_source<R: Rng>(rng: &mut R, max_funcs: usize, size: i64) -> String {
    let n = rng.gen_range(1..=max_funcs.max(1));
    let mut src = format!("pipeline random\ninput img(x, y) : {size}x{size}\nfunc b = clamp_edge(img)\n");
    let mut names = vec!["b".to_string()];
    for i in 0..n {
        let name = format!("f{i}");
        let terms = rng.gen_range(1..=3);
        let mut parts = Vec::new();
        for t in 0..terms {
            // The previous stage is always read so every stage reaches the output.
            let src_name = if t == 0 {
                names.last().expect("non-empty").clone()
            } else {
                names.choose(rng).expect("non-empty").clone()
            };
            let ix = index(rng, "x");
            let iy = if rng.gen_bool(0.15) { rng.gen_range(0..size).to_string() } else { index(rng, "y") };
            let weight = rng.gen_range(1..=9);
            parts.push(format!("0.{weight} * {src_name}({ix}, {iy})"));
        }
        src.push_str(&format!("func {name}(x, y) = {}\n", parts.join(" + ")));
        names.push(name);
    }
    src.push_str(&format!("output {} : {size}x{size}\n", names.last().expect("non-empty")));
    src
}

fn index<R: Rng>(rng: &mut R, var: &str) -> String {
    match rng.gen_range(-2i64..=2) {
        0 => var.to_string(),
        k if k > 0 => format!("{var} + {k}"),
        k => format!("{var} - {}", -k),
    }
}

pub fn random_pipeline<R: Rng>(rng: &mut R, max_funcs: usize, size: i64) -> Pipeline {
    parse_pipeline(&random_pipeline_source(rng, max_funcs, size)).expect("generated source is valid")
}

/// Uniform `[0, 1)` values for every input, deterministic in `seed`.
pub fn random_inputs(p: &Pipeline, seed: u64) -> Inputs {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Inputs::new();
    for i in p.inputs() {
        let extent = p.func(i).input_extent().expect("input").clone();
        let mut b = Buffer::from_extent(&extent);
        for v in &mut b.data {
            *v = rng.gen();
        }
        out.insert(p.name_of(i).to_string(), b);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::lower::lower;

    #[test]
    fn random_schedules_lower() {
        let mut rng = StdRng::seed_from_u64(7);
        let p = corpus::unsharp().with_size(32, 32);
        for _ in 0..50 {
            let s = random_schedule(&p, &mut rng);
            lower(&p, &s).unwrap();
        }
    }

    #[test]
    fn random_pipelines_parse() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_pipeline(&mut rng, 4, 12);
            assert!(p.funcs.len() >= 3);
        }
    }
}
