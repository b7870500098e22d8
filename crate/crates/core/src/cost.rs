//! Analytical cost model.
//!
//! Costs are closed-form functions of the lowered nest's point counts:
//!
//! ```text
//! compute(f) = points(f) * ops(f) * weight_op / vec(f)
//! store(f)   = points(f) * weight_store
//! load(f)    = sum over reads r of materialized t: points(f) * paths(r) * weight(t)
//! ```
//!
//! `ops(f)` folds in the arithmetic of inlined producers, `vec(f)` is the
//! vector width when `f`'s innermost loop is vectorized, and `weight(t)` is
//! the cached or uncached load weight depending on whether `t`'s buffer fits
//! in `cache_bytes`.

use crate::interval::ceil_div;
use crate::ir::{FuncId, Pipeline, DEFAULT_INTRINSIC_WEIGHT};
use crate::lower::{
    apply_compute_location, apply_tile_range, lower_with, parent_tile, valid_compute_locations, LoopNest, Node,
    ScheduleError,
};
use crate::par::{self, Exec};
use crate::schedule::{Decision, Location, Schedule, TileSplit};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    pub cache_bytes: u64,
    pub weight_op: f64,
    pub weight_store: f64,
    pub weight_load_cached: f64,
    pub weight_load_uncached: f64,
    pub vector_width: i64,
    pub bytes_per_element: u64,
    pub intrinsic_weight: u64,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            cache_bytes: 32768,
            weight_op: 1.0,
            weight_store: 2.0,
            weight_load_cached: 1.0,
            weight_load_uncached: 8.0,
            vector_width: 8,
            bytes_per_element: 8,
            intrinsic_weight: DEFAULT_INTRINSIC_WEIGHT,
        }
    }
}

impl MachineParams {
    /// Parses `key = value` lines; missing keys keep their defaults.
    pub fn from_config(text: &str) -> Result<MachineParams, String> {
        let m: MachineParams = toml::from_str(text).map_err(|e| e.to_string())?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), String> {
        let weights = [
            ("weight_op", self.weight_op),
            ("weight_store", self.weight_store),
            ("weight_load_cached", self.weight_load_cached),
            ("weight_load_uncached", self.weight_load_uncached),
        ];
        for (k, w) in weights {
            if !(w > 0.0 && w.is_finite()) {
                return Err(format!("{k} must be a positive number"));
            }
        }
        if self.cache_bytes == 0 || self.vector_width < 1 || self.bytes_per_element == 0 {
            return Err("cache_bytes, vector_width and bytes_per_element must be positive".into());
        }
        Ok(())
    }

    /// All weights multiplied by `c`.
    pub fn scaled(&self, c: f64) -> MachineParams {
        MachineParams {
            weight_op: self.weight_op * c,
            weight_store: self.weight_store * c,
            weight_load_cached: self.weight_load_cached * c,
            weight_load_uncached: self.weight_load_uncached * c,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuncCost {
    pub name: String,
    /// Points stored (materialized functions only).
    pub points: i64,
    /// Point evaluations, counting every inlined expansion.
    pub evaluations: i64,
    /// Reads this function performs from materialized buffers and inputs.
    pub load_sites: i64,
    pub compute: f64,
    pub load: f64,
    pub store: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostEstimate {
    pub total: f64,
    pub load: f64,
    pub store: f64,
    pub compute: f64,
    /// Declaration order; inputs are omitted.
    pub per_func: Vec<FuncCost>,
}

impl CostEstimate {
    fn assemble(per_func: Vec<FuncCost>) -> CostEstimate {
        let (load, store, compute) = sums(per_func.iter().map(|c| (c.load, c.store, c.compute)));
        CostEstimate { total: load + store + compute, load, store, compute, per_func }
    }

    pub fn func(&self, name: &str) -> Option<&FuncCost> {
        self.per_func.iter().find(|c| c.name == name)
    }
}

fn sums(parts: impl Iterator<Item = (f64, f64, f64)>) -> (f64, f64, f64) {
    parts.fold((0.0, 0.0, 0.0), |(l, s, c), (a, b, d)| (l + a, s + b, c + d))
}

/// Exact counts implied by a lowered nest, per function (declaration order).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub evaluations: Vec<i64>,
    pub stores: Vec<i64>,
    /// Reads of each materialized function or input, by any reader.
    pub loads: Vec<i64>,
}

pub fn counts(p: &Pipeline, nest: &LoopNest) -> Counts {
    let n = p.funcs.len();
    let mut c = Counts { evaluations: vec![0; n], stores: vec![0; n], loads: vec![0; n] };
    for u in 0..n {
        let st = &nest.stats[u];
        if !st.materialized || p.func(u).is_input() {
            continue;
        }
        c.evaluations[u] += st.points;
        c.stores[u] += st.points;
        for &(g, k) in &nest.flow.expansions[u] {
            c.evaluations[g] += st.points * k as i64;
        }
    }
    for (t, sites) in nest.flow.uses.iter().enumerate() {
        for site in sites {
            c.loads[t] += nest.stats[site.reader].points * site.reads_per_point() as i64;
        }
    }
    c
}

fn vectorized(nest: &LoopNest, f: FuncId, split: Option<TileSplit>, vw: i64) -> bool {
    let max_x = nest.stats[f].max_extent[0];
    let inner = match split {
        Some(s) => ceil_div(max_x, s.range_x),
        None => max_x,
    };
    inner >= vw
}

fn allocation_bytes(p: &Pipeline, nest: &LoopNest, t: FuncId, m: &MachineParams) -> u64 {
    let points = match p.func(t).input_extent() {
        Some(e) => e.points(),
        None => nest.stats[t].max_points(),
    };
    points.max(0) as u64 * m.bytes_per_element
}

fn compute_cost(points: i64, ops: u64, vectorized: bool, m: &MachineParams) -> f64 {
    let discount = if vectorized { m.vector_width as f64 } else { 1.0 };
    points as f64 * ops as f64 * m.weight_op / discount
}

/// Estimate of an already lowered nest.
pub fn estimate_nest(p: &Pipeline, nest: &LoopNest, m: &MachineParams) -> CostEstimate {
    let c = counts(p, nest);
    let cached: Vec<bool> = (0..p.funcs.len()).map(|t| allocation_bytes(p, nest, t, m) <= m.cache_bytes).collect();
    let mut per_func = Vec::new();
    for f in p.schedulable() {
        let st = &nest.stats[f];
        let mut fc = FuncCost {
            name: p.name_of(f).to_string(),
            points: 0,
            evaluations: c.evaluations[f],
            load_sites: 0,
            compute: 0.0,
            load: 0.0,
            store: 0.0,
        };
        if st.materialized {
            fc.points = st.points;
            fc.store = st.points as f64 * m.weight_store;
            let vec = vectorized(nest, f, nest.splits[f], m.vector_width);
            fc.compute = compute_cost(st.points, nest.flow.effective_ops[f], vec, m);
            for (t, sites) in nest.flow.uses.iter().enumerate() {
                for site in sites.iter().filter(|s| s.reader == f) {
                    let n = st.points * site.reads_per_point() as i64;
                    fc.load_sites += n;
                    let w = if cached[t] { m.weight_load_cached } else { m.weight_load_uncached };
                    fc.load += n as f64 * w;
                }
            }
        }
        per_func.push(fc);
    }
    CostEstimate::assemble(per_func)
}

/// Cost of `s`; functions without a decision are inline.
pub fn estimate(p: &Pipeline, s: &Schedule, m: &MachineParams) -> Result<CostEstimate, ScheduleError> {
    let nest = lower_with(p, s, m.vector_width, m.intrinsic_weight)?;
    Ok(estimate_nest(p, &nest, m))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocationOption {
    pub location: Location,
    pub cost: CostEstimate,
}

/// One estimate per valid location of `f`, in option order.
pub fn rank_compute_locations(
    p: &Pipeline,
    s: &Schedule,
    f: &str,
    m: &MachineParams,
) -> Result<Vec<LocationOption>, ScheduleError> {
    let options = valid_compute_locations(p, s, f)?;
    let rows = par::map(&options, |loc| {
        let next = apply_compute_location(p, s, f, loc)?;
        Ok(LocationOption { location: loc.clone(), cost: estimate(p, &next, m)? })
    });
    rows.into_iter().collect()
}

/// Multiples of four up to the parent tile in each tiled dimension
/// (`y` is fixed to 1 for one-dimensional functions), `x` varying fastest.
pub fn tile_range_candidates(parent: (i64, i64), one_dimensional: bool) -> Vec<(i64, i64)> {
    let xs: Vec<i64> = (1..=parent.0 / 4).map(|i| 4 * i).collect();
    let ys: Vec<i64> = if one_dimensional { vec![1] } else { (1..=parent.1 / 4).map(|i| 4 * i).collect() };
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push((x, y));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileSuggestion {
    pub range_x: i64,
    pub range_y: i64,
    pub cost: CostEstimate,
}

/// Why the tile phase does not apply to `f`, if it does not: `f` is inline,
/// or a tiled dimension of its enclosing tile is below two quanta of four.
pub fn tiling_skip_reason(p: &Pipeline, s: &Schedule, f: &str) -> Result<Option<String>, ScheduleError> {
    let id = p.find(f).ok_or_else(|| ScheduleError::UnknownFunc(f.to_string()))?;
    if id != p.output && !s.is_computed(f) {
        return Ok(Some("it is inlined".into()));
    }
    let (w, h) = parent_tile(p, s, f)?;
    if w < 8 || (p.func(id).dims >= 2 && h < 8) {
        return Ok(Some(format!("its enclosing tile {w}x{h} is smaller than 8 in a tiled dimension")));
    }
    Ok(None)
}

pub fn rank_tile_suggestions(
    p: &Pipeline,
    s: &Schedule,
    f: &str,
    m: &MachineParams,
    k: usize,
) -> Result<Vec<TileSuggestion>, ScheduleError> {
    rank_tile_suggestions_with(Exec::default(), p, s, f, m, k)
}

/// Top `k` tile ranges for `f` by ascending total, ties by `(range_y, range_x)`.
pub fn rank_tile_suggestions_with(
    exec: Exec,
    p: &Pipeline,
    s: &Schedule,
    f: &str,
    m: &MachineParams,
    k: usize,
) -> Result<Vec<TileSuggestion>, ScheduleError> {
    let id = p.find(f).ok_or_else(|| ScheduleError::UnknownFunc(f.to_string()))?;
    if let Some(reason) = tiling_skip_reason(p, s, f)? {
        return Err(ScheduleError::TilingNotApplicable { func: f.to_string(), reason });
    }
    let parent = parent_tile(p, s, f)?;
    let candidates = tile_range_candidates(parent, p.func(id).dims == 1);
    if candidates.is_empty() {
        return Err(ScheduleError::TilingNotApplicable {
            func: f.to_string(),
            reason: "no multiple of four fits".into(),
        });
    }
    let nest = lower_with(p, s, m.vector_width, m.intrinsic_weight)?;
    let mut scored: Vec<(f64, (i64, i64), Option<CostEstimate>)> = if hosts_nothing(&nest, id) {
        let base = estimate_nest(p, &nest, m);
        let slot = base.per_func.iter().position(|c| c.name == f).expect("schedulable function");
        let points = nest.stats[id].points;
        let ops = nest.flow.effective_ops[id];
        let totals = par::map_with(exec, &candidates, |&(rx, ry)| {
            let vec = vectorized(&nest, id, Some(TileSplit::new(rx, ry)), m.vector_width);
            let compute = compute_cost(points, ops, vec, m);
            let (l, st, c) = sums(
                base.per_func
                    .iter()
                    .enumerate()
                    .map(|(i, fc)| (fc.load, fc.store, if i == slot { compute } else { fc.compute })),
            );
            l + st + c
        });
        candidates.iter().zip(totals).map(|(&r, t)| (t, r, None)).collect()
    } else {
        let rows = par::map_with(exec, &candidates, |&(rx, ry)| -> Result<_, ScheduleError> {
            let next = apply_tile_range(p, s, f, rx, ry)?;
            let e = estimate(p, &next, m)?;
            Ok((e.total, (rx, ry), Some(e)))
        });
        rows.into_iter().collect::<Result<_, _>>()?
    };
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1 .1, a.1 .0).cmp(&(b.1 .1, b.1 .0))));
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(_, (rx, ry), e)| {
            let cost = match e {
                Some(e) => e,
                None => estimate(p, &apply_tile_range(p, s, f, rx, ry)?, m)?,
            };
            Ok(TileSuggestion { range_x: rx, range_y: ry, cost })
        })
        .collect()
}

/// True when no other function's loops sit inside `f`'s loops, so that
/// changing `f`'s split only changes its own vectorization.
fn hosts_nothing(nest: &LoopNest, f: FuncId) -> bool {
    nest.blocks()
        .iter()
        .filter(|b| b.func == f)
        .all(|b| b.body.iter().all(|n| matches!(n, Node::Block(c) if c.func == f) || matches!(n, Node::Compute(_))))
}

/// Display value: `total / 10^floor(log10(max))`, one decimal.
pub fn normalized(total: f64, max_total: f64) -> f64 {
    if max_total <= 0.0 {
        return 0.0;
    }
    let scale = 10f64.powi(max_total.log10().floor() as i32);
    (total / scale * 10.0).round() / 10.0
}

/// The schedule with explicit `Inline` decisions for every undecided function.
pub fn with_explicit_inline(p: &Pipeline, s: &Schedule) -> Schedule {
    let mut out = s.clone();
    for f in p.schedulable() {
        let name = p.name_of(f);
        if f != p.output && !out.has_decision(name) {
            out.set(name, Decision::Inline);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ir::parse_pipeline;
    use crate::lower::default_schedule;
    use crate::schedule::Position;

    #[test]
    fn machine_config_overrides_defaults() {
        let m = MachineParams::from_config("cache_bytes = 1024\nweight_store = 3.5\n").unwrap();
        assert_eq!(m.cache_bytes, 1024);
        assert_eq!(m.weight_store, 3.5);
        assert_eq!(m.vector_width, 8);
        assert!(MachineParams::from_config("weight_op = 0\n").is_err());
        assert!(MachineParams::from_config("bogus = 1\n").is_err());
    }

    #[test]
    fn single_point_pipeline() {
        let p = parse_pipeline("pipeline one\nfunc f(x, y) = 1\noutput f : 1x1\n").unwrap();
        let e = estimate(&p, &default_schedule(&p), &MachineParams::default()).unwrap();
        assert_eq!((e.compute, e.store, e.load), (0.0, 2.0, 0.0));
        assert_eq!(e.total, 2.0);
    }

    #[test]
    fn default_gaussian_folds_blur_y() {
        let p = corpus::gaussian();
        let e = estimate(&p, &default_schedule(&p), &MachineParams::default()).unwrap();
        assert_eq!(e.func("blur").unwrap().points, 65536);
        assert_eq!(e.func("blur_y").unwrap().evaluations, 458752);
        assert_eq!(e.total, e.load + e.store + e.compute);
    }

    #[test]
    fn candidate_grids() {
        assert_eq!(tile_range_candidates((16, 16), false).len(), 16);
        assert_eq!(tile_range_candidates((8, 4), false), vec![(4, 4), (8, 4)]);
        assert_eq!(tile_range_candidates((2560, 1600), false).len(), 256000);
        assert_eq!(tile_range_candidates((256, 1), true).len(), 64);
    }

    #[test]
    fn incremental_ranking_matches_full_estimates() {
        let p = corpus::gaussian();
        let m = MachineParams::default();
        let s = default_schedule(&p);
        let top = rank_tile_suggestions(&p, &s, "blur", &m, 5).unwrap();
        assert_eq!(top.len(), 5);
        for t in &top {
            let full = estimate(&p, &apply_tile_range(&p, &s, "blur", t.range_x, t.range_y).unwrap(), &m).unwrap();
            assert_eq!(t.cost, full);
        }
        assert_eq!((top[0].range_x, top[0].range_y), (4, 4));
        assert_eq!((top[1].range_x, top[1].range_y), (8, 4));
    }

    #[test]
    fn per_tile_location_sits_between_root_and_inline() {
        let p = corpus::gaussian();
        let m = MachineParams::default();
        let s = apply_tile_range(&p, &default_schedule(&p), "blur", 32, 16).unwrap();
        let rows = rank_compute_locations(&p, &s, "blur_y", &m).unwrap();
        assert_eq!(rows.len(), 4);
        let evals: Vec<i64> = rows.iter().map(|r| r.cost.func("blur_y").unwrap().evaluations).collect();
        assert_eq!(evals[0], 458752);
        assert_eq!(evals[1], 67072);
        assert_eq!(evals[2], 114688);
        assert!(matches!(&rows[2].location, Location::At(Position { path, .. }) if path == &["blur.outer"]));
    }

    #[test]
    fn normalized_display() {
        assert_eq!(normalized(91234.0, 154321.0), 0.9);
        assert_eq!(normalized(154321.0, 154321.0), 1.5);
        assert_eq!(normalized(0.0, 0.0), 0.0);
    }
}
