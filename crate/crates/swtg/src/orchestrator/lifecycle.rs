//! Run lifecycle: Idle → Running → Idle and Idle → PlanRunning → Idle.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    #[default]
    Idle,
    Running,
    PlanRunning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    Start,
    Stop,
    RunPlan,
    PlanFinished,
    AbortPlan,
}

/// Rejected transition, reported as HTTP 409.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Conflict {
    #[error("a run is already active")]
    AlreadyRunning,
    #[error("no run is active")]
    NotRunning,
    #[error("a test plan is running")]
    PlanRunning,
}

impl Conflict {
    pub fn code(&self) -> &'static str {
        match self {
            Conflict::AlreadyRunning => "AlreadyRunning",
            Conflict::NotRunning => "NotRunning",
            Conflict::PlanRunning => "PlanRunning",
        }
    }
}

pub fn transition(state: State, event: Event) -> Result<State, Conflict> {
    use Event::*;
    use State::*;
    match (state, event) {
        (Idle, Start) => Ok(Running),
        (Idle, RunPlan) => Ok(PlanRunning),
        (Running, Stop) => Ok(Idle),
        (PlanRunning, PlanFinished) => Ok(Idle),
        // abort is a request; the plan reports PlanFinished once it halted
        (PlanRunning, AbortPlan) => Ok(PlanRunning),
        (Running, Start | RunPlan) => Err(Conflict::AlreadyRunning),
        (PlanRunning, Start | Stop | RunPlan) => Err(Conflict::PlanRunning),
        (Idle | Running, Stop | PlanFinished | AbortPlan) => Err(Conflict::NotRunning),
    }
}
