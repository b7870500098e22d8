//! Access summaries between materialized functions.
//!
//! Inlined functions are expanded away: every read of a materialized
//! function (or input) is described by a per-dimension coordinate map from
//! the reading function's loop point, composed through any inlined
//! intermediates, together with the number of access paths using that map.

use crate::interval::{Interval, Region};
use crate::ir::{Expr, FuncId, FuncKind, Index, Pipeline};
use std::collections::BTreeMap;

/// Coordinate map of one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DimMap {
    /// `v + k`
    Offset(i64),
    /// A fixed coordinate, read whenever the source range is non-empty.
    Const(i64),
}

impl DimMap {
    fn then(self, inner: DimMap) -> DimMap {
        match (self, inner) {
            (_, DimMap::Const(k)) => DimMap::Const(k),
            (DimMap::Offset(a), DimMap::Offset(b)) => DimMap::Offset(a + b),
            (DimMap::Const(c), DimMap::Offset(b)) => DimMap::Const(c + b),
        }
    }
}

/// Map from a reader's point to the coordinate read in the target, with an
/// optional clamp into `[0, hi]` per dimension (reads through `clamp_edge`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainMap {
    pub dims: [DimMap; 3],
    pub clamp: Option<[i64; 3]>,
}

impl ChainMap {
    pub const IDENTITY: ChainMap = ChainMap { dims: [DimMap::Offset(0); 3], clamp: None };

    fn from_args(args: &[Index]) -> ChainMap {
        let mut dims = [DimMap::Const(0); 3];
        for (d, a) in args.iter().enumerate() {
            dims[d] = match *a {
                Index::Var { offset, .. } => DimMap::Offset(offset),
                Index::Const(k) => DimMap::Const(k),
            };
        }
        ChainMap { dims, clamp: None }
    }

    /// `self` followed by `inner` (a map out of the function `self` reaches).
    fn then(&self, inner: &ChainMap) -> ChainMap {
        debug_assert!(self.clamp.is_none(), "clamped reads end at an input");
        let dims =
            [self.dims[0].then(inner.dims[0]), self.dims[1].then(inner.dims[1]), self.dims[2].then(inner.dims[2])];
        ChainMap { dims, clamp: inner.clamp }
    }

    pub fn apply_dim(&self, d: usize, iv: Interval) -> Interval {
        if iv.is_empty() {
            return Interval::EMPTY;
        }
        let out = match self.dims[d] {
            DimMap::Offset(k) => iv.shift(k),
            DimMap::Const(k) => Interval::point(k),
        };
        match self.clamp {
            Some(hi) => out.clamp_into(0, hi[d]),
            None => out,
        }
    }

    pub fn apply(&self, r: &Region) -> Region {
        if r.is_empty() {
            return Region::EMPTY;
        }
        Region([self.apply_dim(0, r[0]), self.apply_dim(1, r[1]), self.apply_dim(2, r[2])])
    }

    /// Coordinate read for reader point `p`.
    #[inline]
    pub fn apply_point(&self, p: [i64; 3]) -> [i64; 3] {
        let mut out = [0; 3];
        for d in 0..3 {
            out[d] = match self.dims[d] {
                DimMap::Offset(k) => p[d] + k,
                DimMap::Const(k) => k,
            };
            if let Some(hi) = self.clamp {
                out[d] = out[d].clamp(0, hi[d]);
            }
        }
        out
    }
}

/// All reads of one target by one materialized reader.
#[derive(Debug, Clone, PartialEq)]
pub struct UseSite {
    pub reader: FuncId,
    /// Distinct maps with their path multiplicities.
    pub maps: Vec<(ChainMap, u64)>,
}

impl UseSite {
    pub fn reads_per_point(&self) -> u64 {
        self.maps.iter().map(|(_, n)| n).sum()
    }
}

#[derive(Debug, Clone, Default)]
struct Summary {
    reads: BTreeMap<(FuncId, ChainMap), u64>,
    expansions: BTreeMap<FuncId, u64>,
    ops: u64,
}

/// Read structure of a pipeline under a fixed set of materialized functions.
#[derive(Debug, Clone)]
pub struct Dataflow {
    pub materialized: Vec<bool>,
    /// Indexed by target (materialized function or input).
    pub uses: Vec<Vec<UseSite>>,
    /// Indexed by materialized reader: inlined functions evaluated per point.
    pub expansions: Vec<Vec<(FuncId, u64)>>,
    /// Indexed by materialized reader: arithmetic per point with inlined producers folded in.
    pub effective_ops: Vec<u64>,
}

impl Dataflow {
    pub fn new(p: &Pipeline, materialized: Vec<bool>, intrinsic_weight: u64) -> Dataflow {
        let n = p.funcs.len();
        let mut memo: Vec<Option<Summary>> = vec![None; n];
        let mut uses: Vec<Vec<UseSite>> = vec![Vec::new(); n];
        let mut expansions = vec![Vec::new(); n];
        let mut effective_ops = vec![0; n];
        for u in 0..n {
            if !materialized[u] || p.func(u).is_input() {
                continue;
            }
            let s = summarize(p, &materialized, u, intrinsic_weight, &mut memo);
            effective_ops[u] = s.ops;
            expansions[u] = s.expansions.iter().map(|(&f, &c)| (f, c)).collect();
            let mut per_target: BTreeMap<FuncId, Vec<(ChainMap, u64)>> = BTreeMap::new();
            for (&(t, m), &c) in &s.reads {
                per_target.entry(t).or_default().push((m, c));
            }
            for (t, maps) in per_target {
                uses[t].push(UseSite { reader: u, maps });
            }
        }
        Dataflow { materialized, uses, expansions, effective_ops }
    }

    /// Loads per point of `reader`, per target.
    pub fn reads_of(&self, reader: FuncId) -> impl Iterator<Item = (FuncId, u64)> + '_ {
        self.uses.iter().enumerate().flat_map(move |(t, sites)| {
            sites.iter().filter(move |s| s.reader == reader).map(move |s| (t, s.reads_per_point()))
        })
    }
}

fn is_target(p: &Pipeline, materialized: &[bool], f: FuncId) -> bool {
    materialized[f] || p.func(f).is_input()
}

/// Reads and expansions of one point of `f`, treating `f` itself as evaluated.
fn summarize(p: &Pipeline, materialized: &[bool], f: FuncId, w: u64, memo: &mut Vec<Option<Summary>>) -> Summary {
    if let Some(s) = &memo[f] {
        return s.clone();
    }
    let mut s = Summary { ops: p.ops_per_point_weighted(f, w), ..Summary::default() };
    match &p.func(f).kind {
        FuncKind::Input { .. } => {}
        FuncKind::ClampEdge { input } => {
            let m = ChainMap { clamp: Some(clamp_bounds(p, *input)), ..ChainMap::IDENTITY };
            *s.reads.entry((*input, m)).or_default() += 1;
        }
        FuncKind::Computed { expr } => {
            let mut accesses = Vec::new();
            collect(expr, &mut accesses);
            for (g, args) in accesses {
                let m = ChainMap::from_args(args);
                if is_target(p, materialized, g) {
                    *s.reads.entry((g, m)).or_default() += 1;
                    continue;
                }
                let inner = summarize(p, materialized, g, w, memo);
                *s.expansions.entry(g).or_default() += 1;
                for (&h, &c) in &inner.expansions {
                    *s.expansions.entry(h).or_default() += c;
                }
                s.ops += inner.ops;
                for (&(t, im), &c) in &inner.reads {
                    *s.reads.entry((t, m.then(&im))).or_default() += c;
                }
            }
        }
    }
    memo[f] = Some(s.clone());
    s
}

fn collect<'a>(e: &'a Expr, out: &mut Vec<(FuncId, &'a [Index])>) {
    e.for_each_access(&mut |f, args| out.push((f, args)));
}

fn clamp_bounds(p: &Pipeline, input: FuncId) -> [i64; 3] {
    let e = p.func(input).input_extent().expect("clamp_edge wraps an input");
    [e.get(0) - 1, e.get(1) - 1, e.get(2) - 1]
}
