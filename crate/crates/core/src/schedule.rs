//! Schedule values and the line-oriented schedule script.
//!
//! ```text
//! compute blur at root
//! tile blur 32 16
//! compute blur_y at blur.outer slot 0
//! compute kernel inline
//! ```

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Insertion point in a loop nest: the chain of block ids from the root and
/// the slot inside the last block's body (the root body when `path` is empty).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub path: Vec<String>,
    pub index: usize,
}

impl Position {
    pub fn root(index: usize) -> Self {
        Position { path: Vec::new(), index }
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.path.is_empty(), self.index) {
            (true, 0) => write!(f, "root"),
            (true, i) => write!(f, "root slot {i}"),
            (false, i) => write!(f, "{} slot {i}", self.path.join("/")),
        }
    }
}

/// Outer-loop iteration counts of a tiled function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileSplit {
    pub range_x: i64,
    pub range_y: i64,
}

impl TileSplit {
    pub fn new(range_x: i64, range_y: i64) -> Self {
        TileSplit { range_x, range_y }
    }

    pub fn range(&self, d: usize) -> i64 {
        if d == 0 {
            self.range_x
        } else {
            self.range_y
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Inline,
    ComputedAt { position: Position, split: Option<TileSplit> },
}

/// A compute-location option: inline, or a concrete insertion point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    Inline,
    At(Position),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Inline => write!(f, "inline"),
            Location::At(p) => write!(f, "at {p}"),
        }
    }
}

/// Per-function decisions keyed by function name. Functions without an
/// entry are inlined.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    decisions: BTreeMap<String, Decision>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn decision(&self, func: &str) -> Option<&Decision> {
        self.decisions.get(func)
    }

    /// The effective decision: missing entries are inline.
    pub fn effective(&self, func: &str) -> Decision {
        self.decisions.get(func).cloned().unwrap_or(Decision::Inline)
    }

    pub fn has_decision(&self, func: &str) -> bool {
        self.decisions.contains_key(func)
    }

    pub fn is_computed(&self, func: &str) -> bool {
        matches!(self.decisions.get(func), Some(Decision::ComputedAt { .. }))
    }

    pub fn split(&self, func: &str) -> Option<TileSplit> {
        match self.decisions.get(func) {
            Some(Decision::ComputedAt { split, .. }) => *split,
            _ => None,
        }
    }

    pub fn set(&mut self, func: impl Into<String>, decision: Decision) {
        self.decisions.insert(func.into(), decision);
    }

    pub fn remove(&mut self, func: &str) -> Option<Decision> {
        self.decisions.remove(func)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Decision)> {
        self.decisions.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    /// Script text; `order` fixes the line order (functions not listed come last).
    pub fn to_script(&self, order: &[&str]) -> String {
        let mut names: Vec<&str> = order.iter().copied().filter(|n| self.decisions.contains_key(*n)).collect();
        for k in self.decisions.keys() {
            if !names.contains(&k.as_str()) {
                names.push(k);
            }
        }
        let mut out = String::new();
        for name in names {
            match &self.decisions[name] {
                Decision::Inline => out.push_str(&format!("compute {name} inline\n")),
                Decision::ComputedAt { position, split } => {
                    out.push_str(&format!("compute {name} at {position}\n"));
                    if let Some(s) = split {
                        out.push_str(&format!("tile {name} {} {}\n", s.range_x, s.range_y));
                    }
                }
            }
        }
        out
    }

    /// Parses a schedule script. Structural validity against a pipeline is
    /// checked when the schedule is lowered.
    pub fn from_script(text: &str) -> Result<Schedule, ScriptError> {
        let mut s = Schedule::new();
        let mut pending_tiles = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let words: Vec<&str> = body.split_whitespace().collect();
            let err = |m: &str| ScriptError { line, message: m.to_string() };
            match words.as_slice() {
                ["compute", f, "inline"] => s.set(*f, Decision::Inline),
                ["compute", f, "at", "root"] => s.set(*f, at(Position::root(0))),
                ["compute", f, "at", "root", "slot", i] => {
                    let index = i.parse().map_err(|_| err("slot must be a non-negative integer"))?;
                    s.set(*f, at(Position::root(index)));
                }
                ["compute", f, "at", path, "slot", i] => {
                    let index = i.parse().map_err(|_| err("slot must be a non-negative integer"))?;
                    let path = path.split('/').map(str::to_string).collect();
                    s.set(*f, at(Position { path, index }));
                }
                ["tile", f, rx, ry] => {
                    let rx: i64 = rx.parse().map_err(|_| err("tile ranges must be integers"))?;
                    let ry: i64 = ry.parse().map_err(|_| err("tile ranges must be integers"))?;
                    pending_tiles.push((line, f.to_string(), TileSplit::new(rx, ry)));
                }
                _ => return Err(err("expected `compute <f> at root|<path> slot <i>|inline` or `tile <f> <rx> <ry>`")),
            }
        }
        for (line, f, t) in pending_tiles {
            match s.decisions.get_mut(&f) {
                Some(Decision::ComputedAt { split, .. }) => *split = Some(t),
                _ => {
                    return Err(ScriptError {
                        line,
                        message: format!("`{f}` must be computed at a location before it can be tiled"),
                    })
                }
            }
        }
        Ok(s)
    }
}

fn at(position: Position) -> Decision {
    Decision::ComputedAt { position, split: None }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("schedule script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}
