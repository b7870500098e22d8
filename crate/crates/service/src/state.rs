//! JSON projection of a guided session.

use serde::Serialize;
use tilewise::cost::CostEstimate;
use tilewise::guide::{GuideOption, Phase, Session};
use tilewise::ir::DependencyGraph;
use tilewise::lower::{lower_with, Level, LoopNest, Node, VarKind};
use tilewise::view::{view_model, TileViz};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSummary {
    pub total: f64,
    pub load: f64,
    pub store: f64,
    pub compute: f64,
}

impl From<&CostEstimate> for CostSummary {
    fn from(c: &CostEstimate) -> Self {
        CostSummary { total: c.total, load: c.load, store: c.store, compute: c.compute }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionDoc {
    pub id: String,
    pub description: String,
    pub cost: CostSummary,
    pub display_cost: f64,
}

impl From<&GuideOption> for OptionDoc {
    fn from(o: &GuideOption) -> Self {
        OptionDoc {
            id: o.id.clone(),
            description: o.description.clone(),
            cost: (&o.cost).into(),
            display_cost: o.display_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopDoc {
    pub var: String,
    /// Inclusive iteration range, `[0, extent - 1]`.
    pub range: [i64; 2],
    pub tiles: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum NestDoc {
    Block {
        id: String,
        func: String,
        level: Level,
        loops: Vec<LoopDoc>,
        parallel: bool,
        vectorized: bool,
        tile: [i64; 2],
        body: Vec<NestDoc>,
    },
    Compute {
        func: String,
        /// First-instance region per dimension, `[lo, hi]`.
        region: Vec<[i64; 2]>,
        tile_size: Vec<i64>,
    },
}

fn nest_doc(nest: &LoopNest, nodes: &[Node]) -> Vec<NestDoc> {
    nodes
        .iter()
        .map(|n| match n {
            Node::Block(b) => NestDoc::Block {
                id: b.id.clone(),
                func: nest.name_of(b.func).to_string(),
                level: b.level,
                loops: b
                    .vars
                    .iter()
                    .map(|v| LoopDoc {
                        var: v.name.clone(),
                        range: [0, v.extent - 1],
                        tiles: matches!(v.kind, VarKind::Tiles(_)),
                    })
                    .collect(),
                parallel: b.parallel,
                vectorized: b.vectorized,
                tile: [b.tile.0, b.tile.1],
                body: nest_doc(nest, &b.body),
            },
            Node::Compute(c) => {
                let dims = nest.dims_of(c.func);
                NestDoc::Compute {
                    func: nest.name_of(c.func).to_string(),
                    region: (0..dims).map(|d| [c.region[d].lo, c.region[d].hi]).collect(),
                    tile_size: c.tile_size[..dims].to_vec(),
                }
            }
        })
        .collect()
}

/// Everything the UI renders, derived from the session alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateDoc {
    pub instruction: String,
    pub highlighted_func: Option<String>,
    pub phase: Phase,
    pub dependency_graph: DependencyGraph,
    pub loop_nest: Vec<NestDoc>,
    pub tile_viz: Vec<TileViz>,
    pub options: Vec<OptionDoc>,
    pub current_cost: CostSummary,
    pub done: bool,
}

pub fn state_doc(s: &Session) -> StateDoc {
    let p = s.pipeline();
    let m = s.machine();
    let instruction = s.instruction();
    let nest = lower_with(p, s.schedule(), m.vector_width, m.intrinsic_weight).expect("session schedules always lower");
    StateDoc {
        dependency_graph: p
            .dependency_graph(instruction.highlighted_func.as_deref())
            .expect("highlight names a function"),
        loop_nest: nest_doc(&nest, &nest.body),
        tile_viz: view_model(p, &nest),
        options: s.options().map(|o| o.iter().map(OptionDoc::from).collect()).unwrap_or_default(),
        current_cost: (&instruction.current_cost).into(),
        done: s.is_done(),
        phase: s.phase(),
        instruction: instruction.text,
        highlighted_func: instruction.highlighted_func,
    }
}
