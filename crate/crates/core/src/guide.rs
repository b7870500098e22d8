//! Guided scheduling sessions.
//!
//! A session walks the functions in inverse topological order. Each function
//! first gets a compute location (the output is fixed at root and skips this)
//! and then a tile range, unless tiling does not apply. Every step offers a
//! list of options with estimated costs; choosing one advances the cursor.

use crate::cost::{
    estimate, normalized, rank_compute_locations, rank_tile_suggestions, tiling_skip_reason, CostEstimate,
    MachineParams,
};
use crate::ir::{FuncId, Pipeline};
use crate::lower::{apply_compute_location, apply_tile_range, default_schedule, ScheduleError};
use crate::schedule::{Location, Schedule};
use serde::{Deserialize, Serialize};

pub const SUGGESTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ComputeLocation,
    TileRange,
    Done,
}

/// A recorded user action, enough to replay a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Choice {
    Option { option_id: String },
    Tile { range_x: i64, range_y: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptionAction {
    Location { location: Location },
    Tile { range_x: i64, range_y: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuideOption {
    pub id: String,
    pub description: String,
    pub action: OptionAction,
    pub cost: CostEstimate,
    /// Total scaled by the largest option's power of ten, one decimal.
    pub display_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instruction {
    pub text: String,
    pub highlighted_func: Option<String>,
    pub current_cost: CostEstimate,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GuideError {
    #[error("the session is done")]
    Done,
    #[error("option `{0}` is not among the current options")]
    StaleOption(String),
    #[error("a custom tile range can only be entered in the tile range phase")]
    NotTilePhase,
    #[error("nothing to undo")]
    EmptyHistory,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    cursor: usize,
    phase: Phase,
    schedule: Schedule,
    options: Vec<GuideOption>,
    cost: CostEstimate,
}

#[derive(Debug, Clone)]
pub struct Session {
    pipeline: Pipeline,
    machine: MachineParams,
    order: Vec<FuncId>,
    state: State,
    history: Vec<State>,
    log: Vec<Choice>,
}

impl Session {
    pub fn start(pipeline: Pipeline, machine: MachineParams) -> Result<Session, GuideError> {
        let order = pipeline.inverse_topological_order();
        let schedule = default_schedule(&pipeline);
        let cost = estimate(&pipeline, &schedule, &machine)?;
        let state = State { cursor: 0, phase: Phase::TileRange, schedule, options: Vec::new(), cost };
        let mut s = Session { pipeline, machine, order, state, history: Vec::new(), log: Vec::new() };
        s.settle()?;
        Ok(s)
    }

    /// Rebuilds a session by replaying recorded choices.
    pub fn replay(pipeline: Pipeline, machine: MachineParams, log: &[Choice]) -> Result<Session, GuideError> {
        let mut s = Session::start(pipeline, machine)?;
        for c in log {
            s.apply(c)?;
        }
        Ok(s)
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn machine(&self) -> &MachineParams {
        &self.machine
    }

    pub fn schedule(&self) -> &Schedule {
        &self.state.schedule
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn is_done(&self) -> bool {
        self.state.phase == Phase::Done
    }

    pub fn log(&self) -> &[Choice] {
        &self.log
    }

    pub fn order(&self) -> Vec<&str> {
        self.order.iter().map(|&f| self.pipeline.name_of(f)).collect()
    }

    pub fn current_func(&self) -> Option<&str> {
        self.order.get(self.state.cursor).map(|&f| self.pipeline.name_of(f))
    }

    pub fn cost(&self) -> &CostEstimate {
        &self.state.cost
    }

    pub fn instruction(&self) -> Instruction {
        let func = self.current_func().map(str::to_string);
        let text = match (self.state.phase, &func) {
            (Phase::TileRange, Some(f)) => format!("Choose or type the tile range of Func {f}."),
            (Phase::ComputeLocation, Some(f)) => format!("Choose the compute location of Func {f}."),
            _ => "Done!".to_string(),
        };
        let highlighted_func = if self.is_done() { None } else { func };
        Instruction { text, highlighted_func, current_cost: self.state.cost.clone() }
    }

    pub fn options(&self) -> Result<&[GuideOption], GuideError> {
        if self.is_done() {
            return Err(GuideError::Done);
        }
        Ok(&self.state.options)
    }

    pub fn choose(&mut self, option_id: &str) -> Result<(), GuideError> {
        self.apply(&Choice::Option { option_id: option_id.to_string() })
    }

    pub fn custom_tile(&mut self, range_x: i64, range_y: i64) -> Result<(), GuideError> {
        self.apply(&Choice::Tile { range_x, range_y })
    }

    pub fn apply(&mut self, choice: &Choice) -> Result<(), GuideError> {
        if self.is_done() {
            return Err(GuideError::Done);
        }
        let f = self.current_func().expect("not done").to_string();
        let p = &self.pipeline;
        let s = &self.state.schedule;
        let (next, phase_done) = match choice {
            Choice::Option { option_id } => {
                let opt = self
                    .state
                    .options
                    .iter()
                    .find(|o| &o.id == option_id)
                    .ok_or_else(|| GuideError::StaleOption(option_id.clone()))?;
                match &opt.action {
                    OptionAction::Location { location } => {
                        (apply_compute_location(p, s, &f, location)?, Phase::ComputeLocation)
                    }
                    OptionAction::Tile { range_x, range_y } => {
                        (apply_tile_range(p, s, &f, *range_x, *range_y)?, Phase::TileRange)
                    }
                }
            }
            Choice::Tile { range_x, range_y } => {
                if self.state.phase != Phase::TileRange {
                    return Err(GuideError::NotTilePhase);
                }
                (apply_tile_range(p, s, &f, *range_x, *range_y)?, Phase::TileRange)
            }
        };
        let cost = estimate(p, &next, &self.machine)?;
        let previous = self.state.clone();
        self.state.schedule = next;
        self.state.cost = cost;
        match phase_done {
            Phase::ComputeLocation => self.state.phase = Phase::TileRange,
            _ => {
                self.state.cursor += 1;
                self.state.phase = Phase::ComputeLocation;
            }
        }
        if let Err(e) = self.settle() {
            self.state = previous;
            return Err(e);
        }
        self.history.push(previous);
        self.log.push(choice.clone());
        Ok(())
    }

    pub fn undo(&mut self) -> Result<(), GuideError> {
        let prev = self.history.pop().ok_or(GuideError::EmptyHistory)?;
        self.state = prev;
        self.log.pop();
        Ok(())
    }

    /// Schedule script of the current schedule, in scheduling order.
    pub fn export_schedule(&self) -> String {
        self.state.schedule.to_script(&self.order())
    }

    /// Moves past phases that do not apply and fills in the options.
    fn settle(&mut self) -> Result<(), GuideError> {
        loop {
            let Some(&f) = self.order.get(self.state.cursor) else {
                self.state.phase = Phase::Done;
                self.state.options.clear();
                return Ok(());
            };
            let name = self.pipeline.name_of(f).to_string();
            match self.state.phase {
                Phase::ComputeLocation if f == self.pipeline.output => self.state.phase = Phase::TileRange,
                Phase::ComputeLocation => {
                    self.state.options = self.location_options(&name)?;
                    return Ok(());
                }
                Phase::TileRange => {
                    if tiling_skip_reason(&self.pipeline, &self.state.schedule, &name)?.is_some() {
                        self.state.cursor += 1;
                        self.state.phase = Phase::ComputeLocation;
                        continue;
                    }
                    self.state.options = self.tile_options(&name)?;
                    return Ok(());
                }
                Phase::Done => return Ok(()),
            }
        }
    }

    fn location_options(&self, f: &str) -> Result<Vec<GuideOption>, GuideError> {
        let rows = rank_compute_locations(&self.pipeline, &self.state.schedule, f, &self.machine)?;
        let max = rows.iter().map(|r| r.cost.total).fold(0.0, f64::max);
        Ok(rows
            .into_iter()
            .map(|r| {
                let (id, description) = match &r.location {
                    Location::Inline => (format!("{f}/inline"), "inline at every use".to_string()),
                    Location::At(pos) if pos.is_root() => {
                        (format!("{f}/at/root:{}", pos.index), format!("compute at root, slot {}", pos.index))
                    }
                    Location::At(pos) => (
                        format!("{f}/at/{}:{}", pos.path.join("/"), pos.index),
                        format!("compute inside {}, slot {}", pos.path.last().expect("non-root"), pos.index),
                    ),
                };
                GuideOption {
                    id,
                    description,
                    display_cost: normalized(r.cost.total, max),
                    action: OptionAction::Location { location: r.location },
                    cost: r.cost,
                }
            })
            .collect())
    }

    fn tile_options(&self, f: &str) -> Result<Vec<GuideOption>, GuideError> {
        let rows = rank_tile_suggestions(&self.pipeline, &self.state.schedule, f, &self.machine, SUGGESTIONS)?;
        let max = rows.iter().map(|r| r.cost.total).fold(0.0, f64::max);
        Ok(rows
            .into_iter()
            .map(|r| GuideOption {
                id: format!("{f}/tile/{}x{}", r.range_x, r.range_y),
                description: format!("x: {}, y: {}", r.range_x, r.range_y),
                display_cost: normalized(r.cost.total, max),
                action: OptionAction::Tile { range_x: r.range_x, range_y: r.range_y },
                cost: r.cost,
            })
            .collect())
    }
}

impl PartialEq for Session {
    fn eq(&self, other: &Self) -> bool {
        self.pipeline == other.pipeline
            && self.machine == other.machine
            && self.state == other.state
            && self.history == other.history
            && self.log == other.log
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::ir::parse_pipeline;

    fn start(p: Pipeline) -> Session {
        Session::start(p, MachineParams::default()).unwrap()
    }

    #[test]
    fn gaussian_starts_with_the_output_tile() {
        let s = start(corpus::gaussian());
        let i = s.instruction();
        assert_eq!(i.text, "Choose or type the tile range of Func blur.");
        assert_eq!(i.highlighted_func.as_deref(), Some("blur"));
        assert!(s.options().unwrap().len() <= 5);
        assert_eq!(s.export_schedule(), "compute blur at root\n");
    }

    #[test]
    fn unsharp_starts_with_unsharp() {
        let s = start(corpus::unsharp());
        assert_eq!(s.instruction().text, "Choose or type the tile range of Func unsharp.");
    }

    #[test]
    fn one_pixel_pipeline_is_done_immediately() {
        let s = start(parse_pipeline("pipeline one\nfunc f(x, y) = 1\noutput f : 1x1\n").unwrap());
        assert!(s.is_done());
        assert_eq!(s.instruction().text, "Done!");
        assert_eq!(s.options().unwrap_err(), GuideError::Done);
    }

    #[test]
    fn choose_then_undo_restores_state() {
        let mut s = start(corpus::gaussian());
        let before = s.clone();
        let id = s.options().unwrap()[0].id.clone();
        s.choose(&id).unwrap();
        assert_eq!(s.instruction().text, "Choose the compute location of Func blur_y.");
        s.undo().unwrap();
        assert_eq!(s, before);
        assert_eq!(s.undo().unwrap_err(), GuideError::EmptyHistory);
        assert!(matches!(s.choose("blur_y/inline"), Err(GuideError::StaleOption(_))));
    }

    #[test]
    fn inline_skips_the_tile_phase() {
        let mut s = start(corpus::gaussian());
        s.custom_tile(32, 16).unwrap();
        s.choose("blur_y/inline").unwrap();
        assert_eq!(s.instruction().text, "Choose the compute location of Func bounded.");
    }

    #[test]
    fn custom_tile_validation() {
        let mut s = start(corpus::gaussian());
        assert!(matches!(s.custom_tile(0, 4), Err(GuideError::Schedule(ScheduleError::RangeOutOfBounds { .. }))));
        s.custom_tile(1, 1).unwrap();
        assert!(matches!(s.custom_tile(4, 4), Err(GuideError::NotTilePhase)));
    }
}
