use std::fmt;

use thiserror::Error;

use super::{LinkLossPolicy, MissionState, Mode, DEFAULT_CLEAR_FRAMES};
use crate::telemetry::Command;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    ArrivedAtDropPoint,
    VerdictReady { safe: bool },
    OperatorCommand(Command),
    LinkLost,
    Timeout,
    /// Release actuator fired.
    ActuationTick,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ArrivedAtDropPoint => f.write_str("Arrived"),
            Self::VerdictReady { safe: true } => f.write_str("Verdict(safe)"),
            Self::VerdictReady { safe: false } => f.write_str("Verdict(unsafe)"),
            Self::OperatorCommand(Command::Release) => f.write_str("Operator(release)"),
            Self::OperatorCommand(Command::Abort) => f.write_str("Operator(abort)"),
            Self::LinkLost => f.write_str("LinkLost"),
            Self::Timeout => f.write_str("Timeout"),
            Self::ActuationTick => f.write_str("ActuationTick"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("mission already ended in {state}; {event} not accepted")]
    Terminal { state: MissionState, event: Event },
    #[error("{event} is not defined in state {state} ({mode} mode)")]
    Undefined {
        state: MissionState,
        mode: Mode,
        event: Event,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: MissionState,
    pub to: MissionState,
    pub event: Event,
    /// Consecutive safe verdicts after the step.
    pub consecutive_safe: u32,
}

/// Delivery state machine. Every accepted event yields a [`Transition`]
/// (possibly to the same state); events the table does not define are errors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissionMachine {
    mode: Mode,
    required_clear_frames: u32,
    link_policy: LinkLossPolicy,
    state: MissionState,
    consecutive_safe: u32,
    link_up: bool,
}

impl MissionMachine {
    pub fn new(mode: Mode, required_clear_frames: u32, link_policy: LinkLossPolicy) -> Self {
        Self {
            mode,
            required_clear_frames: required_clear_frames.max(1),
            link_policy,
            state: MissionState::Enroute,
            consecutive_safe: 0,
            link_up: mode == Mode::Piloted,
        }
    }

    pub fn state(&self) -> MissionState {
        self.state
    }
    pub fn mode(&self) -> Mode {
        self.mode
    }
    pub fn consecutive_safe(&self) -> u32 {
        self.consecutive_safe
    }
    pub fn link_up(&self) -> bool {
        self.link_up
    }
    pub fn required_clear_frames(&self) -> u32 {
        self.required_clear_frames
    }

    /// Where a piloted mission without a link goes once it would need the
    /// operator.
    fn without_operator(&self) -> MissionState {
        match self.link_policy {
            LinkLossPolicy::Abort => MissionState::Aborted,
            LinkLossPolicy::Autonomous => MissionState::ReleaseCleared,
        }
    }

    fn cleared(&self) -> MissionState {
        match (self.mode, self.link_up) {
            (Mode::Autonomous, _) => MissionState::ReleaseCleared,
            (Mode::Piloted, true) => MissionState::AwaitingOperator,
            (Mode::Piloted, false) => self.without_operator(),
        }
    }

    pub fn step(&mut self, event: Event) -> Result<Transition, StepError> {
        use Event as E;
        use MissionState as S;
        let from = self.state;
        if from.is_terminal() {
            return Err(StepError::Terminal { state: from, event });
        }
        let undefined = StepError::Undefined {
            state: from,
            mode: self.mode,
            event,
        };
        let piloted = self.mode == Mode::Piloted;
        let to = match (from, event) {
            (_, E::OperatorCommand(Command::Abort)) => S::Aborted,
            (_, E::LinkLost) if piloted && self.link_up => {
                self.link_up = false;
                match from {
                    S::AwaitingOperator => self.without_operator(),
                    s => s,
                }
            }
            (S::Enroute, E::ArrivedAtDropPoint) => S::Assessing,
            (S::Assessing | S::AwaitingOperator | S::ReleaseCleared, E::VerdictReady { safe: false }) => {
                self.consecutive_safe = 0;
                S::Assessing
            }
            (S::Assessing, E::VerdictReady { safe: true }) => {
                self.consecutive_safe += 1;
                if self.consecutive_safe >= self.required_clear_frames {
                    self.cleared()
                } else {
                    S::Assessing
                }
            }
            (S::AwaitingOperator | S::ReleaseCleared, E::VerdictReady { safe: true }) => {
                self.consecutive_safe += 1;
                from
            }
            (S::AwaitingOperator, E::OperatorCommand(Command::Release)) => S::ReleaseCleared,
            (S::Assessing | S::AwaitingOperator, E::Timeout) => S::Aborted,
            (S::ReleaseCleared, E::ActuationTick) => S::Released,
            _ => return Err(undefined),
        };
        self.state = to;
        Ok(Transition {
            from,
            to,
            event,
            consecutive_safe: self.consecutive_safe,
        })
    }
}

impl Default for MissionMachine {
    fn default() -> Self {
        Self::new(Mode::Autonomous, DEFAULT_CLEAR_FRAMES, LinkLossPolicy::Abort)
    }
}
