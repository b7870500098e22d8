use super::{Expr, FuncDef, FuncId, FuncKind, Index, Pipeline};
use crate::interval::Interval;
use serde::Serialize;

/// Scheduling order: output first, every consumer before its producers.
/// Among ready functions the latest-declared one goes first, which keeps
/// helpers declared at the top of a file (such as a filter kernel) last.
pub(super) fn inverse_topological_order(p: &Pipeline) -> Vec<FuncId> {
    let n = p.funcs.len();
    let mut pending: Vec<usize> =
        (0..n).map(|f| p.consumers(f).iter().filter(|&&c| !p.func(c).is_input()).count()).collect();
    let mut done = vec![false; n];
    let mut order = Vec::new();
    loop {
        let next = (0..n).rev().find(|&f| {
            !done[f] && !p.func(f).is_input() && pending[f] == 0 && (f == p.output || !p.consumers(f).is_empty())
        });
        let Some(f) = next else { break };
        done[f] = true;
        order.push(f);
        for &q in p.producers(f) {
            pending[q] -= 1;
        }
    }
    order
}

/// Access offsets from one consumer to one producer in a single dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct DimFootprint {
    /// Hull of `var + k` offsets, if any access uses the variable.
    pub relative: Option<Interval>,
    /// Hull of constant coordinates, if any access uses one.
    pub fixed: Option<Interval>,
}

impl DimFootprint {
    /// Relative offsets as `[lo, hi]`; `[0, 0]` for a dimension not accessed relatively.
    pub fn offsets(&self) -> (i64, i64) {
        self.relative.map(|i| (i.lo, i.hi)).unwrap_or((0, 0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Footprint {
    pub dims: Vec<DimFootprint>,
}

pub(super) fn footprint(p: &Pipeline, consumer: FuncId, producer: FuncId) -> Option<Footprint> {
    let mut dims = vec![DimFootprint::default(); p.func(producer).dims];
    let mut found = false;
    match &p.func(consumer).kind {
        FuncKind::Input { .. } => return None,
        FuncKind::ClampEdge { input } => {
            if *input != producer {
                return None;
            }
            // A clamp reads its input at the same coordinate (before clamping).
            for d in &mut dims {
                d.relative = Some(Interval::point(0));
            }
            found = true;
        }
        FuncKind::Computed { expr } => expr.for_each_access(&mut |f, args| {
            if f != producer {
                return;
            }
            found = true;
            for (d, a) in args.iter().enumerate() {
                let slot = match *a {
                    Index::Var { .. } => &mut dims[d].relative,
                    Index::Const(_) => &mut dims[d].fixed,
                };
                let k = match *a {
                    Index::Var { offset, .. } | Index::Const(offset) => offset,
                };
                *slot = Some(slot.map_or(Interval::point(k), |i| i.hull(Interval::point(k))));
            }
        }),
    }
    found.then_some(Footprint { dims })
}

pub(super) fn ops_per_point(f: &FuncDef, intrinsic_weight: u64) -> u64 {
    fn count(e: &Expr, w: u64) -> u64 {
        match e {
            Expr::Lit(_) | Expr::Param(_) | Expr::Var(_) | Expr::Access { .. } => 0,
            Expr::Neg(a) => 1 + count(a, w),
            Expr::Binary(_, a, b) => 1 + count(a, w) + count(b, w),
            Expr::Call(_, a) => w + count(a, w),
        }
    }
    f.expr().map_or(0, |e| count(e, intrinsic_weight))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphNode {
    pub name: String,
    /// `input`, `clamp_edge` or `computed`.
    pub kind: &'static str,
    pub highlighted: bool,
    pub output: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GraphEdge {
    pub from: String,
    pub to: String,
}

/// Dependency graph document. `nodes` holds the schedulable functions; the
/// input images are listed separately in `inputs` and appear as edge sources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DependencyGraph {
    pub nodes: Vec<GraphNode>,
    pub inputs: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

pub(super) fn dependency_graph(p: &Pipeline, highlighted: Option<&str>) -> Result<DependencyGraph, String> {
    if let Some(h) = highlighted {
        match p.find(h) {
            Some(id) if !p.func(id).is_input() => {}
            _ => return Err(format!("unknown function `{h}`")),
        }
    }
    let mut nodes = Vec::new();
    let mut inputs = Vec::new();
    let mut edges = Vec::new();
    for (id, f) in p.funcs.iter().enumerate() {
        if f.is_input() {
            inputs.push(f.name.clone());
        } else {
            let kind = if f.is_clamp() { "clamp_edge" } else { "computed" };
            nodes.push(GraphNode {
                name: f.name.clone(),
                kind,
                highlighted: highlighted == Some(f.name.as_str()),
                output: id == p.output,
            });
        }
        for &q in p.producers(id) {
            edges.push(GraphEdge { from: p.name_of(q).to_string(), to: f.name.clone() });
        }
    }
    Ok(DependencyGraph { nodes, inputs, edges })
}
