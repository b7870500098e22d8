//! Tile visualization model: one entry per loop block.

use crate::ir::Pipeline;
use crate::lower::{LoopNest, Node};
use serde::Serialize;

pub const PALETTE: [&str; 12] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45", "#469990", "#9a6324",
    "#800000", "#000075",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TileViz {
    pub block: String,
    pub func: String,
    pub depth: usize,
    pub width: i64,
    pub height: i64,
    pub color: &'static str,
    pub parallel: bool,
    pub vectorized: bool,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Palette index per function (declaration order), by name hash with
/// linear probing so that up to 12 functions get distinct colors.
pub fn colors(p: &Pipeline) -> Vec<&'static str> {
    let mut used = [false; 12];
    let mut out = Vec::with_capacity(p.funcs.len());
    for f in &p.funcs {
        let mut i = (fnv1a(&f.name) % 12) as usize;
        if used.iter().all(|&u| u) {
            used = [false; 12];
        }
        while used[i] {
            i = (i + 1) % 12;
        }
        used[i] = true;
        out.push(PALETTE[i]);
    }
    out
}

pub fn view_model(p: &Pipeline, nest: &LoopNest) -> Vec<TileViz> {
    let colors = colors(p);
    let mut out = Vec::new();
    fn go(nodes: &[Node], depth: usize, p: &Pipeline, colors: &[&'static str], out: &mut Vec<TileViz>) {
        for n in nodes {
            if let Node::Block(b) = n {
                out.push(TileViz {
                    block: b.id.clone(),
                    func: p.name_of(b.func).to_string(),
                    depth,
                    width: b.tile.0,
                    height: b.tile.1,
                    color: colors[b.func],
                    parallel: b.parallel,
                    vectorized: b.vectorized,
                });
                go(&b.body, depth + 1, p, colors, out);
            }
        }
    }
    go(&nest.body, 0, p, &colors, &mut out);
    out
}
