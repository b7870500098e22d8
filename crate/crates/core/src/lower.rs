//! Lowering a pipeline and schedule to a loop nest.
//!
//! Every materialized function owns a small chain of loop blocks:
//!
//! * unsplit: one block `f.vec` iterating all of its dimensions;
//! * split: `f.outer` over tile indices, `f.inner` over the rows (`y`, `c`)
//!   of one tile and `f.vec` over `x` inside a row. `f.inner` is omitted for
//!   one-dimensional functions.
//!
//! Producers are inserted into the nest in scheduling order, before the
//! earliest block that uses them. Regions are inferred dynamically from the
//! consumers' current iteration (see [`LoopNest`]).

use crate::bounds::Dataflow;
use crate::interval::{ceil_div, Interval, Region};
use crate::ir::{FuncId, Pipeline, DEFAULT_INTRINSIC_WEIGHT, DIM_NAMES};
use crate::schedule::{Decision, Location, Position, Schedule, TileSplit};
use serde::Serialize;
use std::fmt;

pub const DEFAULT_VECTOR_WIDTH: i64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("unknown function `{0}`")]
    UnknownFunc(String),
    #[error("`{0}` is an input image and takes no schedule")]
    NotSchedulable(String),
    #[error("the output `{0}` must be computed at root")]
    OutputNotAtRoot(String),
    #[error("cannot place `{func}` before its consumer `{consumer}` is scheduled")]
    ConsumerNotScheduled { func: String, consumer: String },
    #[error("`{position}` is not a valid compute location for `{func}`")]
    InvalidPosition { func: String, position: String },
    #[error("`{0}` is inlined and has no loops to tile")]
    NotComputed(String),
    #[error("tile range {range} of `{func}` in {dim} is outside 1..={max}")]
    RangeOutOfBounds { func: String, dim: &'static str, range: i64, max: i64 },
    #[error("tiling does not apply to `{func}`: {reason}")]
    TilingNotApplicable { func: String, reason: String },
    #[error("`{reader}` reads `{input}` at {region}, outside its extent; read it through clamp_edge")]
    OutOfBounds { reader: String, input: String, region: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    OuterExternal,
    InnerExternal,
    VectorizedInner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "count", rename_all = "snake_case")]
pub enum VarKind {
    /// Iterates `count` tiles of the enclosing region.
    Tiles(i64),
    /// Iterates every point of the enclosing region.
    Points,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoopVar {
    pub name: String,
    pub dim: usize,
    pub kind: VarKind,
    /// Largest iteration count over all dynamic instances.
    pub extent: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopBlock {
    pub id: String,
    pub func: FuncId,
    pub level: Level,
    pub vars: Vec<LoopVar>,
    pub parallel: bool,
    pub vectorized: bool,
    /// True for the outermost block of `func`, where its buffer is allocated.
    pub realizes: bool,
    /// Tile width and height covered by one iteration of the enclosing block, by
    /// display arithmetic (`ceil(parent / range)`).
    pub tile: (i64, i64),
    pub body: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComputeStmt {
    pub func: FuncId,
    /// Region of the first dynamic instance.
    pub region: Region,
    /// Largest per-instance extent in each dimension.
    pub tile_size: [i64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Block(LoopBlock),
    Compute(ComputeStmt),
}

/// Model-level counts for one function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FuncStats {
    pub materialized: bool,
    /// Dynamic realizations.
    pub instances: i64,
    /// Points computed over all realizations.
    pub points: i64,
    /// Largest realization, per dimension.
    pub max_extent: [i64; 3],
    pub first_region: Option<Region>,
}

impl FuncStats {
    pub fn max_points(&self) -> i64 {
        self.max_extent.iter().product()
    }
}

#[derive(Debug, Clone)]
pub struct LoopNest {
    pub body: Vec<Node>,
    pub stats: Vec<FuncStats>,
    pub flow: Dataflow,
    pub output: FuncId,
    pub output_extent: [i64; 3],
    pub image: (i64, i64),
    pub splits: Vec<Option<TileSplit>>,
    names: Vec<String>,
    dims: Vec<usize>,
}

impl LoopNest {
    pub fn name_of(&self, f: FuncId) -> &str {
        &self.names[f]
    }

    pub fn dims_of(&self, f: FuncId) -> usize {
        self.dims[f]
    }

    pub fn blocks(&self) -> Vec<&LoopBlock> {
        let mut out = Vec::new();
        fn go<'a>(nodes: &'a [Node], out: &mut Vec<&'a LoopBlock>) {
            for n in nodes {
                if let Node::Block(b) = n {
                    out.push(b);
                    go(&b.body, out);
                }
            }
        }
        go(&self.body, &mut out);
        out
    }

    pub fn compute_stmts(&self) -> Vec<&ComputeStmt> {
        let mut out = Vec::new();
        fn go<'a>(nodes: &'a [Node], out: &mut Vec<&'a ComputeStmt>) {
            for n in nodes {
                match n {
                    Node::Block(b) => go(&b.body, out),
                    Node::Compute(c) => out.push(c),
                }
            }
        }
        go(&self.body, &mut out);
        out
    }

    pub fn block(&self, id: &str) -> Option<&LoopBlock> {
        self.blocks().into_iter().find(|b| b.id == id)
    }

    pub fn is_materialized(&self, f: FuncId) -> bool {
        self.flow.materialized[f]
    }

    /// Region of `f` given the current region of every active function.
    /// Inactive readers use the region they will have when realized in the
    /// same context.
    pub fn region_of(&self, f: FuncId, cur: &[Option<Region>]) -> Region {
        if f == self.output {
            return Region::from_extent(&self.output_extent);
        }
        let mut r = Region::EMPTY;
        for site in &self.flow.uses[f] {
            let at = match cur[site.reader] {
                Some(c) => c,
                None => self.region_of(site.reader, cur),
            };
            for (m, _) in &site.maps {
                r = r.hull(m.apply(&at));
            }
        }
        r
    }

    fn region_of_dim(&self, f: FuncId, d: usize, cur: &[Option<Interval>]) -> Interval {
        if f == self.output {
            return Interval::extent(self.output_extent[d]);
        }
        let mut r = Interval::EMPTY;
        for site in &self.flow.uses[f] {
            let at = match cur[site.reader] {
                Some(c) => c,
                None => self.region_of_dim(site.reader, d, cur),
            };
            for (m, _) in &site.maps {
                r = r.hull(m.apply_dim(d, at));
            }
        }
        r
    }
}

/// Per-function schedule state resolved against a pipeline.
pub(crate) fn materialized_set(p: &Pipeline, s: &Schedule) -> Vec<bool> {
    (0..p.funcs.len()).map(|f| f == p.output || s.is_computed(p.name_of(f))).collect()
}

struct Builder<'a> {
    p: &'a Pipeline,
    body: Vec<Node>,
    flow: Dataflow,
}

impl Builder<'_> {
    /// Block-id paths (with body indices) to each materialized reader of `f`.
    fn use_paths(&self, f: FuncId) -> Vec<Vec<(String, usize)>> {
        let readers: Vec<FuncId> = self.flow.uses[f].iter().map(|s| s.reader).collect();
        let mut out = Vec::new();
        for r in readers {
            let mut path = Vec::new();
            if find_compute(&self.body, r, &mut path) {
                out.push(path);
            }
        }
        out
    }

    fn positions(&self, f: FuncId) -> Vec<Position> {
        let paths = self.use_paths(f);
        let Some(first) = paths.first() else {
            return vec![Position::root(0)];
        };
        let common =
            (0..first.len()).take_while(|&k| paths.iter().all(|p| p.len() > k && p[k].0 == first[k].0)).count();
        let mut out = Vec::new();
        let mut body = &self.body;
        for k in 0..=common {
            if k > 0 {
                let b = block_by_id(body, &first[k - 1].0).expect("path addresses a block");
                if b.level == Level::VectorizedInner {
                    break;
                }
                body = &b.body;
            }
            let index = paths.iter().filter_map(|p| p.get(k).map(|e| e.1)).min().unwrap_or(body.len());
            let path = first[..k].iter().map(|e| e.0.clone()).collect();
            out.push(Position { path, index });
        }
        out
    }

    fn insert(&mut self, f: FuncId, pos: &Position, split: Option<TileSplit>) {
        let node = Node::Block(skeleton(self.p, f, split));
        let mut body = &mut self.body;
        for id in &pos.path {
            let b = body
                .iter_mut()
                .find_map(|n| match n {
                    Node::Block(b) if &b.id == id => Some(b),
                    _ => None,
                })
                .expect("validated position");
            body = &mut b.body;
        }
        body.insert(pos.index, node);
    }
}

fn block_by_id<'a>(body: &'a [Node], id: &str) -> Option<&'a LoopBlock> {
    body.iter().find_map(|n| match n {
        Node::Block(b) if b.id == id => Some(b),
        _ => None,
    })
}

fn find_compute(body: &[Node], f: FuncId, path: &mut Vec<(String, usize)>) -> bool {
    for (i, n) in body.iter().enumerate() {
        match n {
            Node::Compute(c) if c.func == f => return true,
            Node::Block(b) => {
                path.push((b.id.clone(), i));
                if find_compute(&b.body, f, path) {
                    return true;
                }
                path.pop();
            }
            _ => {}
        }
    }
    false
}

fn var(name: impl Into<String>, dim: usize, kind: VarKind) -> LoopVar {
    LoopVar { name: name.into(), dim, kind, extent: 0 }
}

fn block(p: &Pipeline, f: FuncId, suffix: &str, level: Level, vars: Vec<LoopVar>, body: Vec<Node>) -> LoopBlock {
    LoopBlock {
        id: format!("{}.{suffix}", p.name_of(f)),
        func: f,
        level,
        vars,
        parallel: false,
        vectorized: false,
        realizes: false,
        tile: (0, 0),
        body,
    }
}

fn skeleton(p: &Pipeline, f: FuncId, split: Option<TileSplit>) -> LoopBlock {
    let dims = p.func(f).dims;
    let compute = Node::Compute(ComputeStmt { func: f, region: Region::EMPTY, tile_size: [0; 3] });
    let mut top = match split {
        None => {
            let vars = (0..dims).map(|d| var(DIM_NAMES[d], d, VarKind::Points)).collect();
            block(p, f, "vec", Level::VectorizedInner, vars, vec![compute])
        }
        Some(s) => {
            let vec =
                block(p, f, "vec", Level::VectorizedInner, vec![var("x_inner", 0, VarKind::Points)], vec![compute]);
            let mut outer_vars = vec![var("x_outer", 0, VarKind::Tiles(s.range_x))];
            if dims >= 2 {
                outer_vars.push(var("y_outer", 1, VarKind::Tiles(s.range_y)));
            }
            let inner_body = if dims >= 2 {
                let mut vars = vec![var("y_inner", 1, VarKind::Points)];
                if dims == 3 {
                    vars.push(var("c", 2, VarKind::Points));
                }
                vec![Node::Block(block(p, f, "inner", Level::InnerExternal, vars, vec![Node::Block(vec)]))]
            } else {
                vec![Node::Block(vec)]
            };
            block(p, f, "outer", Level::OuterExternal, outer_vars, inner_body)
        }
    };
    top.realizes = true;
    top
}

/// Normalizes a split for `f`'s dimensionality (one-dimensional functions only tile `x`).
fn normalized(p: &Pipeline, f: FuncId, split: TileSplit) -> TileSplit {
    if p.func(f).dims == 1 {
        TileSplit { range_y: 1, ..split }
    } else {
        split
    }
}

fn func_id(p: &Pipeline, name: &str) -> Result<FuncId, ScheduleError> {
    let id = p.find(name).ok_or_else(|| ScheduleError::UnknownFunc(name.to_string()))?;
    if p.func(id).is_input() {
        return Err(ScheduleError::NotSchedulable(name.to_string()));
    }
    Ok(id)
}

/// Schedule with only the output materialized (at root, unsplit).
pub fn default_schedule(p: &Pipeline) -> Schedule {
    let mut s = Schedule::new();
    s.set(p.name_of(p.output), Decision::ComputedAt { position: Position::root(0), split: None });
    s
}

/// `ceil(parent / range)`; errors unless `1 <= range <= parent`.
pub fn tile_extent(parent: i64, range: i64) -> Result<i64, ScheduleError> {
    if range < 1 || range > parent {
        return Err(ScheduleError::RangeOutOfBounds { func: String::new(), dim: "x", range, max: parent });
    }
    Ok(ceil_div(parent, range))
}

/// Builds the block structure for the funcs scheduled before `stop` (all
/// when `None`), validating every position as it is replayed.
fn build<'a>(p: &'a Pipeline, s: &Schedule, stop: Option<FuncId>) -> Result<Builder<'a>, ScheduleError> {
    for (name, _) in s.iter() {
        func_id(p, name)?;
    }
    let out_name = p.name_of(p.output);
    match s.decision(out_name) {
        None => {}
        Some(Decision::ComputedAt { position, .. }) if position.is_root() && position.index == 0 => {}
        Some(_) => return Err(ScheduleError::OutputNotAtRoot(out_name.to_string())),
    }
    let flow = Dataflow::new(p, materialized_set(p, s), DEFAULT_INTRINSIC_WEIGHT);
    let mut b = Builder { p, body: Vec::new(), flow };
    for f in p.inverse_topological_order() {
        if Some(f) == stop {
            break;
        }
        let name = p.name_of(f);
        let (position, split) = match s.effective(name) {
            Decision::Inline if f == p.output => (Position::root(0), s.split(name)),
            Decision::Inline => continue,
            Decision::ComputedAt { position, split } => (position, split),
        };
        if !b.positions(f).contains(&position) {
            return Err(ScheduleError::InvalidPosition { func: name.to_string(), position: position.to_string() });
        }
        b.insert(f, &position, split.map(|t| normalized(p, f, t)));
    }
    Ok(b)
}

fn require_consumers_decided(p: &Pipeline, s: &Schedule, f: FuncId) -> Result<(), ScheduleError> {
    for &c in p.consumers(f) {
        if c != p.output && !s.has_decision(p.name_of(c)) {
            return Err(ScheduleError::ConsumerNotScheduled {
                func: p.name_of(f).to_string(),
                consumer: p.name_of(c).to_string(),
            });
        }
    }
    Ok(())
}

/// Compute-location options for `f`: inline, root, then every deeper block
/// enclosing all of `f`'s materialized readers.
pub fn valid_compute_locations(p: &Pipeline, s: &Schedule, f: &str) -> Result<Vec<Location>, ScheduleError> {
    let id = func_id(p, f)?;
    if id == p.output {
        return Ok(vec![Location::At(Position::root(0))]);
    }
    require_consumers_decided(p, s, id)?;
    // Regions do not matter here; the structure is decided by the funcs before `f`.
    let mut probe = s.clone();
    probe.set(f, Decision::ComputedAt { position: Position::root(0), split: None });
    let b = build(p, &probe, Some(id))?;
    let mut out = vec![Location::Inline];
    out.extend(b.positions(id).into_iter().map(Location::At));
    Ok(out)
}

/// Replaces `f`'s decision. The split of a function that stays at the same
/// position is kept; moving it drops the split.
pub fn apply_compute_location(
    p: &Pipeline,
    s: &Schedule,
    f: &str,
    choice: &Location,
) -> Result<Schedule, ScheduleError> {
    let options = valid_compute_locations(p, s, f)?;
    if !options.contains(choice) {
        return Err(ScheduleError::InvalidPosition { func: f.to_string(), position: choice.to_string() });
    }
    let mut next = s.clone();
    match choice {
        Location::Inline => next.set(f, Decision::Inline),
        Location::At(position) => {
            let split = match s.decision(f) {
                Some(Decision::ComputedAt { position: old, split }) if old == position => *split,
                _ => None,
            };
            next.set(f, Decision::ComputedAt { position: position.clone(), split });
        }
    }
    Ok(next)
}

/// Width and height of one iteration of the block enclosing `f`'s loops
/// (the image at root). One-dimensional functions report height 1.
pub fn parent_tile(p: &Pipeline, s: &Schedule, f: &str) -> Result<(i64, i64), ScheduleError> {
    let id = func_id(p, f)?;
    let position = match s.decision(f) {
        Some(Decision::ComputedAt { position, .. }) => position.clone(),
        None if id == p.output => Position::root(0),
        _ => return Err(ScheduleError::NotComputed(f.to_string())),
    };
    let b = build(p, s, Some(id))?;
    let mut tile = p.image_size();
    let mut body = &b.body;
    let mut splits = vec![None; p.funcs.len()];
    for (name, d) in s.iter() {
        if let Decision::ComputedAt { split, .. } = d {
            let g = func_id(p, name)?;
            splits[g] = split.map(|t| normalized(p, g, t));
        }
    }
    for id in &position.path {
        let blk = block_by_id(body, id)
            .ok_or_else(|| ScheduleError::InvalidPosition { func: f.to_string(), position: position.to_string() })?;
        tile = child_tile(tile, blk, splits[blk.func], p.func(blk.func).dims);
        body = &blk.body;
    }
    if p.func(id).dims == 1 {
        tile.1 = 1;
    }
    Ok(tile)
}

/// Tile covered by one iteration of `b` (for an unsplit block, all of it),
/// given the tile covered by one iteration of its parent.
fn child_tile(parent: (i64, i64), b: &LoopBlock, split: Option<TileSplit>, dims: usize) -> (i64, i64) {
    let own = |t: (i64, i64)| if dims == 1 { (t.0, 1) } else { t };
    match (b.level, split) {
        (Level::OuterExternal, Some(s)) => {
            own((ceil_div(parent.0, s.range_x).max(1), ceil_div(parent.1, s.range_y).max(1)))
        }
        (Level::InnerExternal, _) | (Level::VectorizedInner, Some(_)) => (parent.0, 1),
        (_, None) => own(parent),
    }
}

/// Records a tile split for `f` after checking it against the enclosing tile.
/// For one-dimensional functions `range_y` is forced to 1.
pub fn apply_tile_range(
    p: &Pipeline,
    s: &Schedule,
    f: &str,
    range_x: i64,
    range_y: i64,
) -> Result<Schedule, ScheduleError> {
    let id = func_id(p, f)?;
    let position = match s.decision(f) {
        Some(Decision::ComputedAt { position, .. }) => position.clone(),
        None if id == p.output => Position::root(0),
        _ => return Err(ScheduleError::NotComputed(f.to_string())),
    };
    let (w, h) = parent_tile(p, s, f)?;
    let one_d = p.func(id).dims == 1;
    let range_y = if one_d { 1 } else { range_y };
    let check = |dim, range: i64, max| {
        if range < 1 || range > max {
            Err(ScheduleError::RangeOutOfBounds { func: f.to_string(), dim, range, max })
        } else {
            Ok(())
        }
    };
    check("x", range_x, w)?;
    if !one_d {
        check("y", range_y, h)?;
    }
    let mut next = s.clone();
    next.set(f, Decision::ComputedAt { position, split: Some(TileSplit::new(range_x, range_y)) });
    Ok(next)
}

pub fn lower(p: &Pipeline, s: &Schedule) -> Result<LoopNest, ScheduleError> {
    lower_with(p, s, DEFAULT_VECTOR_WIDTH, DEFAULT_INTRINSIC_WEIGHT)
}

pub fn lower_with(
    p: &Pipeline,
    s: &Schedule,
    vector_width: i64,
    intrinsic_weight: u64,
) -> Result<LoopNest, ScheduleError> {
    let b = build(p, s, None)?;
    let materialized = b.flow.materialized.clone();
    let flow = if intrinsic_weight == DEFAULT_INTRINSIC_WEIGHT {
        b.flow
    } else {
        Dataflow::new(p, materialized.clone(), intrinsic_weight)
    };
    let mut splits = vec![None; p.funcs.len()];
    for (f, m) in materialized.iter().enumerate() {
        if *m {
            splits[f] = s.split(p.name_of(f)).map(|t| normalized(p, f, t));
        }
    }
    let mut nest = LoopNest {
        body: b.body,
        stats: vec![FuncStats::default(); p.funcs.len()],
        flow,
        output: p.output,
        output_extent: [p.output_extent.get(0), p.output_extent.get(1), p.output_extent.get(2)],
        image: p.image_size(),
        splits,
        names: p.funcs.iter().map(|f| f.name.clone()).collect(),
        dims: p.funcs.iter().map(|f| f.dims).collect(),
    };
    let image = nest.image;
    let mut body = std::mem::take(&mut nest.body);
    assign_tiles(p, &nest.splits, &mut body, image)?;
    nest.body = body;
    walk_all(p, &mut nest)?;
    let mut body = std::mem::take(&mut nest.body);
    finish(&nest, &mut body, vector_width);
    nest.body = body;
    Ok(nest)
}

fn assign_tiles(
    p: &Pipeline,
    splits: &[Option<TileSplit>],
    body: &mut [Node],
    parent: (i64, i64),
) -> Result<(), ScheduleError> {
    for n in body {
        let Node::Block(b) = n else { continue };
        let dims = p.func(b.func).dims;
        if b.realizes {
            if let Some(s) = splits[b.func] {
                let name = p.name_of(b.func).to_string();
                let max_y = if dims == 1 { 1 } else { parent.1 };
                for (dim, range, max) in [("x", s.range_x, parent.0), ("y", s.range_y, max_y)] {
                    if range < 1 || range > max {
                        return Err(ScheduleError::RangeOutOfBounds { func: name, dim, range, max });
                    }
                }
            }
        }
        let tile = child_tile(parent, b, splits[b.func], dims);
        b.tile = tile;
        assign_tiles(p, splits, &mut b.body, tile)?;
    }
    Ok(())
}

/// Per-dimension walk: the instance set of every function is a product over
/// dimensions, so summing extents one dimension at a time gives exact counts.
struct DimWalk<'a> {
    nest: &'a LoopNest,
    d: usize,
    cur: Vec<Option<Interval>>,
    sum: Vec<i64>,
    count: Vec<i64>,
    max: Vec<i64>,
    first: Vec<Option<Interval>>,
    error: Option<ScheduleError>,
    p: &'a Pipeline,
}

impl DimWalk<'_> {
    fn nodes(&mut self, nodes: &[Node]) {
        for n in nodes {
            if self.error.is_some() {
                return;
            }
            let Node::Block(b) = n else { continue };
            if b.realizes {
                let f = b.func;
                let r = self.nest.region_of_dim(f, self.d, &self.cur);
                self.sum[f] += r.len();
                self.count[f] += 1;
                self.max[f] = self.max[f].max(r.len());
                if self.first[f].is_none() {
                    self.first[f] = Some(r);
                }
                self.check_inputs(f, r);
                if r.is_empty() {
                    continue;
                }
                self.cur[f] = Some(r);
                self.block(b);
                self.cur[f] = None;
            } else {
                self.block(b);
            }
        }
    }

    fn block(&mut self, b: &LoopBlock) {
        if !b.body.iter().any(|n| matches!(n, Node::Block(_))) {
            return;
        }
        let f = b.func;
        let base = self.cur[f].expect("owner is active");
        match b.vars.iter().find(|v| v.dim == self.d).map(|v| v.kind) {
            None => self.nodes(&b.body),
            Some(VarKind::Tiles(r)) => {
                for t in 0..r {
                    let tile = base.tile(t, r);
                    if tile.is_empty() {
                        continue;
                    }
                    self.cur[f] = Some(tile);
                    self.nodes(&b.body);
                }
                self.cur[f] = Some(base);
            }
            Some(VarKind::Points) => {
                for v in base.lo..=base.hi {
                    self.cur[f] = Some(Interval::point(v));
                    self.nodes(&b.body);
                }
                self.cur[f] = Some(base);
            }
        }
    }

    fn check_inputs(&mut self, reader: FuncId, r: Interval) {
        for (t, sites) in self.nest.flow.uses.iter().enumerate() {
            let Some(extent) = self.p.func(t).input_extent() else { continue };
            let limit = Interval::extent(extent.get(self.d));
            for site in sites.iter().filter(|s| s.reader == reader) {
                for (m, _) in &site.maps {
                    let read = m.apply_dim(self.d, r);
                    if !read.is_empty() && (read.lo < limit.lo || read.hi > limit.hi) {
                        self.error = Some(ScheduleError::OutOfBounds {
                            reader: self.p.name_of(reader).to_string(),
                            input: self.p.name_of(t).to_string(),
                            region: format!("{} {read}", DIM_NAMES[self.d]),
                        });
                        return;
                    }
                }
            }
        }
    }
}

fn walk_all(p: &Pipeline, nest: &mut LoopNest) -> Result<(), ScheduleError> {
    let n = p.funcs.len();
    let mut stats = vec![FuncStats::default(); n];
    let mut instances = vec![1i64; n];
    let mut points = vec![1i64; n];
    let mut firsts = vec![Region::UNIT; n];
    #[allow(clippy::needless_range_loop)]
    for d in 0..3 {
        let mut w = DimWalk {
            nest,
            d,
            cur: vec![None; n],
            sum: vec![0; n],
            count: vec![0; n],
            max: vec![0; n],
            first: vec![None; n],
            error: None,
            p,
        };
        let body = &nest.body;
        w.nodes(body);
        if let Some(e) = w.error {
            return Err(e);
        }
        for f in 0..n {
            stats[f].max_extent[d] = w.max[f];
            instances[f] *= w.count[f];
            points[f] *= w.sum[f];
            if let Some(i) = w.first[f] {
                firsts[f][d] = i;
            }
        }
    }
    for f in 0..n {
        stats[f].materialized = nest.flow.materialized[f];
        if stats[f].materialized {
            stats[f].instances = instances[f];
            stats[f].points = points[f];
            stats[f].first_region = Some(firsts[f]);
        } else {
            stats[f].max_extent = [0; 3];
        }
    }
    nest.stats = stats;
    Ok(())
}

fn finish(nest: &LoopNest, body: &mut [Node], vector_width: i64) {
    for n in body {
        match n {
            Node::Block(b) => {
                let st = &nest.stats[b.func];
                let split = nest.splits[b.func];
                let tile = |d: usize| match split {
                    Some(s) if d < 2 => ceil_div(st.max_extent[d], s.range(d)),
                    _ => st.max_extent[d],
                };
                for v in &mut b.vars {
                    v.extent = match v.kind {
                        VarKind::Tiles(r) => r,
                        VarKind::Points => tile(v.dim),
                    };
                }
                if b.level == Level::VectorizedInner {
                    b.vectorized = tile(0) >= vector_width;
                }
                b.parallel = b.realizes && b.func == nest.output;
                finish(nest, &mut b.body, vector_width);
            }
            Node::Compute(c) => {
                let st = &nest.stats[c.func];
                c.region = st.first_region.unwrap_or(Region::EMPTY);
                c.tile_size = st.max_extent;
            }
        }
    }
}

impl LoopNest {
    /// Indented loop listing, e.g. `for x in 0..255`.
    pub fn listing(&self) -> String {
        let mut out = String::new();
        self.write_nodes(&self.body, 1, &mut out);
        out
    }

    fn write_nodes(&self, nodes: &[Node], depth: usize, out: &mut String) {
        for n in nodes {
            match n {
                Node::Block(b) => {
                    let mut depth = depth;
                    for (i, v) in b.vars.iter().enumerate() {
                        out.push_str(&"  ".repeat(depth));
                        out.push_str(&format!("for {} in 0..{}", v.name, v.extent - 1));
                        if i == 0 {
                            let mut marks = Vec::new();
                            if b.parallel {
                                marks.push("parallel");
                            }
                            if b.vectorized {
                                marks.push("vectorized");
                            }
                            if !marks.is_empty() {
                                out.push_str(&format!("  # {}", marks.join(", ")));
                            }
                        }
                        out.push('\n');
                        depth += 1;
                    }
                    self.write_nodes(&b.body, depth, out);
                }
                Node::Compute(c) => {
                    out.push_str(&"  ".repeat(depth));
                    let dims = self.dims[c.func];
                    let vars = DIM_NAMES[..dims].join(", ");
                    out.push_str(&format!(
                        "{}({vars}) = ...;  # region {}\n",
                        self.name_of(c.func),
                        RegionDisplay(&c.region, dims)
                    ));
                }
            }
        }
    }
}

struct RegionDisplay<'a>(&'a Region, usize);

impl fmt::Display for RegionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (d, name) in DIM_NAMES.iter().enumerate().take(self.1) {
            if d > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{name}:{}", self.0[d])?;
        }
        Ok(())
    }
}
