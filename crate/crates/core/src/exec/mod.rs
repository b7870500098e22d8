//! Instrumented interpreter for lowered loop nests, and the schedule-free
//! reference evaluator.

pub mod io;

pub use io::{read_image, write_image, ImageError};

use crate::interval::{Interval, Region};
use crate::ir::{Expr, Extent, FuncId, FuncKind, Index, Pipeline};
use crate::lower::{lower, LoopBlock, LoopNest, Node, ScheduleError, VarKind};
use crate::par;
use crate::schedule::Schedule;
use serde::Serialize;
use std::collections::BTreeMap;
use std::time::Instant;

/// Dense float64 grid over a box; dimensions the owner lacks have extent 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    pub dims: usize,
    pub origin: [i64; 3],
    pub extent: [i64; 3],
    pub data: Vec<f64>,
}

impl Buffer {
    pub fn new(dims: usize, region: Region) -> Buffer {
        let extent = region.extents();
        let origin = [region[0].lo, region[1].lo, region[2].lo];
        Buffer { dims, origin, extent, data: vec![0.0; region.points().max(0) as usize] }
    }

    pub fn from_extent(e: &Extent) -> Buffer {
        Buffer::new(e.dims(), Region::from_extent(&e.0))
    }

    /// Buffer at origin 0 filled by `f(x, y, c)`.
    pub fn from_fn(e: &Extent, f: impl Fn(i64, i64, i64) -> f64) -> Buffer {
        let mut b = Buffer::from_extent(e);
        for c in 0..b.extent[2] {
            for y in 0..b.extent[1] {
                for x in 0..b.extent[0] {
                    let i = b.index([x, y, c]);
                    b.data[i] = f(x, y, c);
                }
            }
        }
        b
    }

    pub fn region(&self) -> Region {
        let mut r = Region::UNIT;
        for d in 0..3 {
            r[d] = Interval::new(self.origin[d], self.origin[d] + self.extent[d] - 1);
        }
        r
    }

    pub fn extent(&self) -> Extent {
        Extent(self.extent[..self.dims].to_vec())
    }

    #[inline]
    fn index(&self, p: [i64; 3]) -> usize {
        let x = p[0] - self.origin[0];
        let y = p[1] - self.origin[1];
        let c = p[2] - self.origin[2];
        (x + self.extent[0] * (y + self.extent[1] * c)) as usize
    }

    #[inline]
    pub fn contains(&self, p: [i64; 3]) -> bool {
        (0..3).all(|d| p[d] >= self.origin[d] && p[d] < self.origin[d] + self.extent[d])
    }

    pub fn get(&self, p: [i64; 3]) -> Option<f64> {
        self.contains(p).then(|| self.data[self.index(p)])
    }

    /// Bitwise equality of extents and contents.
    pub fn bit_eq(&self, other: &Buffer) -> bool {
        self.extent == other.extent
            && self.origin == other.origin
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("missing input image `{0}`")]
    MissingInput(String),
    #[error("input `{name}` has extent {found}, expected {expected}")]
    InputExtent { name: String, expected: String, found: String },
    #[error("`{reader}` read `{target}` at {point:?}, outside its computed region {region}")]
    ReadOutOfRegion { reader: String, target: String, point: [i64; 3], region: String },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FuncCounters {
    pub name: String,
    pub evaluations: i64,
    pub stores: i64,
    pub loads: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// Declaration order, inputs included (they only ever have loads).
    pub funcs: Vec<FuncCounters>,
    pub wall_time: f64,
}

impl Report {
    pub fn func(&self, name: &str) -> Option<&FuncCounters> {
        self.funcs.iter().find(|f| f.name == name)
    }

    pub fn total_evaluations(&self) -> i64 {
        self.funcs.iter().map(|f| f.evaluations).sum()
    }
}

/// One access performed while evaluating `consumer` at `at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Read {
    pub consumer: FuncId,
    pub at: [i64; 3],
    pub producer: FuncId,
    /// Coordinate requested by the access (before any clamping).
    pub coord: [i64; 3],
}

/// Shrinks every realization of `func` by one point at one end of `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shrink {
    pub func: FuncId,
    pub dim: usize,
    pub at_hi: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub trace: bool,
    pub shrink: Option<Shrink>,
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub output: Buffer,
    pub report: Report,
    pub trace: Vec<Read>,
}

pub type Inputs = BTreeMap<String, Buffer>;

fn check_inputs(p: &Pipeline, inputs: &Inputs) -> Result<Vec<Option<Buffer>>, ExecError> {
    let mut bufs = vec![None; p.funcs.len()];
    for i in p.inputs() {
        let name = p.name_of(i);
        let b = inputs.get(name).ok_or_else(|| ExecError::MissingInput(name.to_string()))?;
        let expected = p.func(i).input_extent().expect("input").clone();
        if b.extent() != expected || b.origin != [0; 3] {
            return Err(ExecError::InputExtent {
                name: name.to_string(),
                expected: expected.to_string(),
                found: b.extent().to_string(),
            });
        }
        bufs[i] = Some(b.clone());
    }
    Ok(bufs)
}

pub fn execute(p: &Pipeline, s: &Schedule, inputs: &Inputs) -> Result<Execution, ExecError> {
    let nest = lower(p, s)?;
    execute_nest(p, &nest, inputs, &ExecOptions::default())
}

/// Executes several schedules of one pipeline, concurrently when the
/// `parallel` feature is on. Each execution is single-threaded.
pub fn execute_many(p: &Pipeline, schedules: &[Schedule], inputs: &Inputs) -> Vec<Result<Execution, ExecError>> {
    par::map(schedules, |s| execute(p, s, inputs))
}

pub fn execute_nest(
    p: &Pipeline,
    nest: &LoopNest,
    inputs: &Inputs,
    opts: &ExecOptions,
) -> Result<Execution, ExecError> {
    let start = Instant::now();
    let n = p.funcs.len();
    let mut m = Machine {
        p,
        nest,
        bufs: check_inputs(p, inputs)?,
        cur: vec![None; n],
        evaluations: vec![0; n],
        stores: vec![0; n],
        loads: vec![0; n],
        trace: opts.trace.then(Vec::new),
        shrink: opts.shrink,
        output: None,
    };
    m.nodes(&nest.body)?;
    let output = m.output.take().expect("the output is realized at root");
    let funcs = (0..n)
        .map(|f| FuncCounters {
            name: p.name_of(f).to_string(),
            evaluations: m.evaluations[f],
            stores: m.stores[f],
            loads: m.loads[f],
        })
        .collect();
    Ok(Execution {
        output,
        report: Report { funcs, wall_time: start.elapsed().as_secs_f64() },
        trace: m.trace.unwrap_or_default(),
    })
}

struct Machine<'a> {
    p: &'a Pipeline,
    nest: &'a LoopNest,
    bufs: Vec<Option<Buffer>>,
    cur: Vec<Option<Region>>,
    evaluations: Vec<i64>,
    stores: Vec<i64>,
    loads: Vec<i64>,
    trace: Option<Vec<Read>>,
    shrink: Option<Shrink>,
    output: Option<Buffer>,
}

impl Machine<'_> {
    fn nodes(&mut self, nodes: &[Node]) -> Result<(), ExecError> {
        let mut realized = Vec::new();
        for n in nodes {
            match n {
                Node::Block(b) if b.realizes => {
                    let f = b.func;
                    let mut r = self.nest.region_of(f, &self.cur);
                    if let Some(s) = self.shrink.filter(|s| s.func == f) {
                        let iv = r[s.dim];
                        r[s.dim] =
                            if s.at_hi { Interval::new(iv.lo, iv.hi - 1) } else { Interval::new(iv.lo + 1, iv.hi) };
                    }
                    self.bufs[f] = Some(Buffer::new(self.p.func(f).dims, r));
                    realized.push(f);
                    if r.is_empty() {
                        continue;
                    }
                    self.cur[f] = Some(r);
                    self.block(b, 0)?;
                    self.cur[f] = None;
                }
                Node::Block(b) => self.block(b, 0)?,
                Node::Compute(c) => {
                    let f = c.func;
                    let r = self.cur[f].expect("compute runs inside its own loops");
                    let at = [r[0].lo, r[1].lo, r[2].lo];
                    let v = self.eval_func(f, at)?;
                    let buf = self.bufs[f].as_mut().expect("realized");
                    let i = buf.index(at);
                    buf.data[i] = v;
                    self.evaluations[f] += 1;
                    self.stores[f] += 1;
                }
            }
        }
        for f in realized {
            let b = self.bufs[f].take();
            if f == self.nest.output {
                self.output = b;
            }
        }
        Ok(())
    }

    fn block(&mut self, b: &LoopBlock, vi: usize) -> Result<(), ExecError> {
        if vi == b.vars.len() {
            return self.nodes(&b.body);
        }
        let f = b.func;
        let v = &b.vars[vi];
        let base = self.cur[f].expect("owner is active");
        let iv = base[v.dim];
        match v.kind {
            VarKind::Tiles(count) => {
                for t in 0..count {
                    let tile = iv.tile(t, count);
                    if tile.is_empty() {
                        continue;
                    }
                    self.cur[f].as_mut().expect("active")[v.dim] = tile;
                    self.block(b, vi + 1)?;
                }
            }
            VarKind::Points => {
                for x in iv.lo..=iv.hi {
                    self.cur[f].as_mut().expect("active")[v.dim] = Interval::point(x);
                    self.block(b, vi + 1)?;
                }
            }
        }
        self.cur[f] = Some(base);
        Ok(())
    }

    /// Evaluates the definition of `f` at `at` (inlined producers expanded).
    fn eval_func(&mut self, f: FuncId, at: [i64; 3]) -> Result<f64, ExecError> {
        match &self.p.func(f).kind {
            FuncKind::Input { .. } => unreachable!("inputs are buffers"),
            FuncKind::ClampEdge { input } => self.read_clamped(f, *input, at),
            FuncKind::Computed { expr } => self.eval(f, expr, at),
        }
    }

    fn read_clamped(&mut self, clamp: FuncId, input: FuncId, at: [i64; 3]) -> Result<f64, ExecError> {
        if let Some(t) = self.trace.as_mut() {
            t.push(Read { consumer: clamp, at, producer: input, coord: at });
        }
        let e = self.p.func(input).input_extent().expect("clamp wraps an input");
        let mut q = at;
        for (d, v) in q.iter_mut().enumerate() {
            *v = (*v).clamp(0, e.get(d) - 1);
        }
        self.load(clamp, input, q)
    }

    fn load(&mut self, reader: FuncId, target: FuncId, q: [i64; 3]) -> Result<f64, ExecError> {
        let buf = self.bufs[target].as_ref().expect("materialized producers are realized before use");
        match buf.get(q) {
            Some(v) => {
                self.loads[target] += 1;
                Ok(v)
            }
            None => Err(ExecError::ReadOutOfRegion {
                reader: self.p.name_of(reader).to_string(),
                target: self.p.name_of(target).to_string(),
                point: q,
                region: format!("{:?}", buf.region().0.map(|i| i.to_string())),
            }),
        }
    }

    fn eval(&mut self, f: FuncId, e: &Expr, at: [i64; 3]) -> Result<f64, ExecError> {
        Ok(match e {
            Expr::Lit(v) => *v,
            Expr::Param(i) => self.p.param_value(*i),
            Expr::Var(d) => at[*d] as f64,
            Expr::Neg(a) => -self.eval(f, a, at)?,
            Expr::Binary(op, a, b) => {
                let l = self.eval(f, a, at)?;
                let r = self.eval(f, b, at)?;
                op.apply(l, r)
            }
            Expr::Call(op, a) => op.apply(self.eval(f, a, at)?),
            Expr::Access { func, args } => {
                let q = coord(args, at);
                if let Some(t) = self.trace.as_mut() {
                    t.push(Read { consumer: f, at, producer: *func, coord: q });
                }
                let g = *func;
                if self.nest.is_materialized(g) || self.p.func(g).is_input() {
                    self.load(f, g, q)?
                } else {
                    self.evaluations[g] += 1;
                    match &self.p.func(g).kind {
                        FuncKind::ClampEdge { input } => {
                            let input = *input;
                            self.read_clamped(g, input, q)?
                        }
                        FuncKind::Computed { expr } => self.eval(g, expr, q)?,
                        FuncKind::Input { .. } => unreachable!(),
                    }
                }
            }
        })
    }
}

#[inline]
fn coord(args: &[Index], at: [i64; 3]) -> [i64; 3] {
    let mut q = [0; 3];
    for (d, a) in args.iter().enumerate() {
        q[d] = match *a {
            Index::Var { dim, offset } => at[dim] + offset,
            Index::Const(k) => k,
        };
    }
    q
}

/// Direct recursive evaluation of the output at every point, with no
/// scheduling and no buffers besides the inputs.
pub fn reference_execute(p: &Pipeline, inputs: &Inputs) -> Result<Buffer, ExecError> {
    let bufs = check_inputs(p, inputs)?;
    let r = Reference { p, bufs: &bufs };
    let mut out = Buffer::from_extent(&p.output_extent);
    for c in 0..out.extent[2] {
        for y in 0..out.extent[1] {
            for x in 0..out.extent[0] {
                let at = [x, y, c];
                let i = out.index(at);
                out.data[i] = r.func(p.output, at);
            }
        }
    }
    Ok(out)
}

struct Reference<'a> {
    p: &'a Pipeline,
    bufs: &'a [Option<Buffer>],
}

impl Reference<'_> {
    fn func(&self, f: FuncId, at: [i64; 3]) -> f64 {
        match &self.p.func(f).kind {
            FuncKind::Input { .. } => {
                self.bufs[f].as_ref().and_then(|b| b.get(at)).expect("reads of inputs stay inside")
            }
            FuncKind::ClampEdge { input } => {
                let e = self.p.func(*input).input_extent().expect("input");
                let mut q = at;
                for (d, v) in q.iter_mut().enumerate() {
                    *v = (*v).clamp(0, e.get(d) - 1);
                }
                self.func(*input, q)
            }
            FuncKind::Computed { expr } => self.eval(expr, at),
        }
    }

    fn eval(&self, e: &Expr, at: [i64; 3]) -> f64 {
        match e {
            Expr::Lit(v) => *v,
            Expr::Param(i) => self.p.param_value(*i),
            Expr::Var(d) => at[*d] as f64,
            Expr::Neg(a) => -self.eval(a, at),
            Expr::Binary(op, a, b) => op.apply(self.eval(a, at), self.eval(b, at)),
            Expr::Call(op, a) => op.apply(self.eval(a, at)),
            Expr::Access { func, args } => self.func(*func, coord(args, at)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::lower::{apply_compute_location, default_schedule};
    use crate::schedule::{Location, Position};

    fn gaussian_inputs(p: &Pipeline, f: impl Fn(i64, i64, i64) -> f64) -> Inputs {
        let e = p.func(p.find("input").unwrap()).input_extent().unwrap().clone();
        BTreeMap::from([("input".to_string(), Buffer::from_fn(&e, f))])
    }

    #[test]
    fn constant_input_gives_squared_kernel_sum() {
        let p = corpus::gaussian().with_size(16, 16);
        let inputs = gaussian_inputs(&p, |_, _, _| 0.5);
        let out = execute(&p, &default_schedule(&p), &inputs).unwrap().output;
        let sigma: f64 = 1.5;
        let k = |x: f64| (-x * x / (2.0 * sigma * sigma)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
        let sum = k(0.0) + 2.0 * (k(1.0) + k(2.0) + k(3.0));
        for v in &out.data {
            assert!((v - 0.5 * sum * sum).abs() < 1e-12);
        }
    }

    #[test]
    fn default_counts_match_the_inline_story() {
        let p = corpus::gaussian();
        let inputs = gaussian_inputs(&p, |x, y, _| ((x * 7 + y * 3) % 11) as f64);
        let r = execute(&p, &default_schedule(&p), &inputs).unwrap().report;
        assert_eq!(r.func("blur").unwrap().evaluations, 65536);
        assert_eq!(r.func("blur_y").unwrap().evaluations, 458752);
        assert_eq!(r.func("input").unwrap().loads, 49 * 65536);
    }

    #[test]
    fn root_blur_y_matches_reference_bitwise() {
        let p = corpus::gaussian().with_size(64, 64);
        let inputs = gaussian_inputs(&p, |x, y, _| ((x * 31 + y * 17) % 23) as f64 / 23.0);
        let s = apply_compute_location(&p, &default_schedule(&p), "blur_y", &Location::At(Position::root(0))).unwrap();
        let a = execute(&p, &s, &inputs).unwrap().output;
        let b = reference_execute(&p, &inputs).unwrap();
        assert!(a.bit_eq(&b));
        assert!(execute(&p, &default_schedule(&p), &inputs).unwrap().output.bit_eq(&b));
    }

    #[test]
    fn identity_pipeline() {
        let p = crate::ir::parse_pipeline("pipeline id\ninput i(x, y) : 1x1\nfunc o(x, y) = i(x, y)\noutput o : 1x1\n")
            .unwrap();
        let inputs = BTreeMap::from([("i".to_string(), Buffer::from_fn(&Extent(vec![1, 1]), |_, _, _| 0.25))]);
        assert_eq!(reference_execute(&p, &inputs).unwrap().data, vec![0.25]);
    }

    #[test]
    fn missing_input_is_reported() {
        let p = corpus::gaussian();
        assert!(matches!(reference_execute(&p, &Inputs::new()), Err(ExecError::MissingInput(_))));
    }
}
