//! Pipeline intermediate representation.
//!
//! A [`Pipeline`] is a DAG of grid functions over the canonical loop
//! variables `x`, `y`, `c`. Every access index is either `var + const`
//! (with the variable matching the argument position) or a constant, which
//! keeps bounds inference exact under interval translation.

mod analysis;
mod parse;
mod print;

pub use analysis::{DependencyGraph, DimFootprint, Footprint, GraphEdge, GraphNode};
pub use parse::{parse_pipeline, ParseError, Span};

use serde::{Deserialize, Serialize};

/// Index of a function inside [`Pipeline::funcs`] (declaration order).
pub type FuncId = usize;

/// Canonical loop variable names, outermost-declared first.
pub const DIM_NAMES: [&str; 3] = ["x", "y", "c"];

/// Weight of one intrinsic call when counting arithmetic per point.
pub const DEFAULT_INTRINSIC_WEIGHT: u64 = 10;

/// Per-dimension sizes in pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Extent(pub Vec<i64>);

impl Extent {
    pub fn new(sizes: Vec<i64>) -> Self {
        Extent(sizes)
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    /// Size of dimension `d`, 1 for dimensions the extent does not have.
    pub fn get(&self, d: usize) -> i64 {
        self.0.get(d).copied().unwrap_or(1)
    }

    pub fn points(&self) -> i64 {
        self.0.iter().product()
    }
}

impl std::fmt::Display for Extent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Intrinsic {
    Exp,
    Sqrt,
}

impl Intrinsic {
    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Exp => "exp",
            Intrinsic::Sqrt => "sqrt",
        }
    }

    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Intrinsic::Exp => v.exp(),
            Intrinsic::Sqrt => v.sqrt(),
        }
    }
}

/// One argument of an access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Index {
    /// `var + offset`, where `var` is the canonical variable of this argument position.
    Var { dim: usize, offset: i64 },
    /// A fixed coordinate such as the `0` in `kernel(0)`.
    Const(i64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(f64),
    Param(usize),
    Var(usize),
    Access { func: FuncId, args: Vec<Index> },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Intrinsic, Box<Expr>),
}

impl Expr {
    /// Visits every access in the tree, left to right.
    pub fn for_each_access<'a>(&'a self, f: &mut impl FnMut(FuncId, &'a [Index])) {
        match self {
            Expr::Access { func, args } => f(*func, args),
            Expr::Neg(e) | Expr::Call(_, e) => e.for_each_access(f),
            Expr::Binary(_, a, b) => {
                a.for_each_access(f);
                b.for_each_access(f);
            }
            Expr::Lit(_) | Expr::Param(_) | Expr::Var(_) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FuncKind {
    /// A materialized input image.
    Input {
        extent: Extent,
    },
    /// Coordinate clamping of an input to its extent.
    ClampEdge {
        input: FuncId,
    },
    Computed {
        expr: Expr,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub name: String,
    /// Number of dimensions; the variables are the first `dims` of [`DIM_NAMES`].
    pub dims: usize,
    pub kind: FuncKind,
}

impl FuncDef {
    pub fn is_input(&self) -> bool {
        matches!(self.kind, FuncKind::Input { .. })
    }

    pub fn is_clamp(&self) -> bool {
        matches!(self.kind, FuncKind::ClampEdge { .. })
    }

    pub fn expr(&self) -> Option<&Expr> {
        match &self.kind {
            FuncKind::Computed { expr } => Some(expr),
            _ => None,
        }
    }

    pub fn input_extent(&self) -> Option<&Extent> {
        match &self.kind {
            FuncKind::Input { extent } => Some(extent),
            _ => None,
        }
    }

    pub fn dim_names(&self) -> &'static [&'static str] {
        &DIM_NAMES[..self.dims]
    }
}

/// A validated pipeline. Construct with [`parse_pipeline`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub name: String,
    pub params: Vec<(String, f64)>,
    pub funcs: Vec<FuncDef>,
    pub output: FuncId,
    pub output_extent: Extent,
    producers: Vec<Vec<FuncId>>,
    consumers: Vec<Vec<FuncId>>,
}

impl Pipeline {
    pub(crate) fn from_parts(
        name: String,
        params: Vec<(String, f64)>,
        funcs: Vec<FuncDef>,
        output: FuncId,
        output_extent: Extent,
    ) -> Self {
        let mut producers = vec![Vec::new(); funcs.len()];
        let mut consumers = vec![Vec::new(); funcs.len()];
        for (id, f) in funcs.iter().enumerate() {
            let mut direct = Vec::new();
            match &f.kind {
                FuncKind::Input { .. } => {}
                FuncKind::ClampEdge { input } => direct.push(*input),
                FuncKind::Computed { expr } => expr.for_each_access(&mut |p, _| {
                    if !direct.contains(&p) {
                        direct.push(p);
                    }
                }),
            }
            for &p in &direct {
                if !consumers[p].contains(&id) {
                    consumers[p].push(id);
                }
            }
            producers[id] = direct;
        }
        for c in &mut consumers {
            c.sort_unstable();
        }
        Pipeline { name, params, funcs, output, output_extent, producers, consumers }
    }

    pub fn func(&self, id: FuncId) -> &FuncDef {
        &self.funcs[id]
    }

    pub fn name_of(&self, id: FuncId) -> &str {
        &self.funcs[id].name
    }

    pub fn find(&self, name: &str) -> Option<FuncId> {
        self.funcs.iter().position(|f| f.name == name)
    }

    /// Functions read directly by `id`, in order of first access.
    pub fn producers(&self, id: FuncId) -> &[FuncId] {
        &self.producers[id]
    }

    /// Functions that read `id` directly, in declaration order.
    pub fn consumers(&self, id: FuncId) -> &[FuncId] {
        &self.consumers[id]
    }

    pub fn inputs(&self) -> impl Iterator<Item = FuncId> + '_ {
        (0..self.funcs.len()).filter(move |&i| self.funcs[i].is_input())
    }

    /// Functions that take scheduling decisions (everything except inputs).
    pub fn schedulable(&self) -> impl Iterator<Item = FuncId> + '_ {
        (0..self.funcs.len()).filter(move |&i| !self.funcs[i].is_input())
    }

    pub fn param_value(&self, idx: usize) -> f64 {
        self.params[idx].1
    }

    /// Copy of the pipeline with the output and every input resized to
    /// `width` x `height` in their `x`/`y` dimensions (channels kept).
    pub fn with_size(&self, width: i64, height: i64) -> Pipeline {
        let mut out = self.clone();
        let resize = |e: &mut Extent| {
            if let Some(w) = e.0.get_mut(0) {
                *w = width;
            }
            if let Some(h) = e.0.get_mut(1) {
                *h = height;
            }
        };
        resize(&mut out.output_extent);
        for f in &mut out.funcs {
            if let FuncKind::Input { extent } = &mut f.kind {
                resize(extent);
            }
        }
        out
    }

    /// Output extent in `x` and `y` (the image the schedule tiles).
    pub fn image_size(&self) -> (i64, i64) {
        (self.output_extent.get(0), self.output_extent.get(1))
    }

    pub fn inverse_topological_order(&self) -> Vec<FuncId> {
        analysis::inverse_topological_order(self)
    }

    pub fn footprint(&self, consumer: FuncId, producer: FuncId) -> Option<Footprint> {
        analysis::footprint(self, consumer, producer)
    }

    /// Arithmetic cost of one point of `id` with the default intrinsic weight.
    pub fn ops_per_point(&self, id: FuncId) -> u64 {
        analysis::ops_per_point(self.func(id), DEFAULT_INTRINSIC_WEIGHT)
    }

    pub fn ops_per_point_weighted(&self, id: FuncId, intrinsic_weight: u64) -> u64 {
        analysis::ops_per_point(self.func(id), intrinsic_weight)
    }

    pub fn dependency_graph(&self, highlighted: Option<&str>) -> Result<DependencyGraph, String> {
        analysis::dependency_graph(self, highlighted)
    }
}
