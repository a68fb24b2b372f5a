//! Simulated device: app screen graphs, observation noise, grounding
//! faults, stochastic events and ground truth.

mod env;
mod noise;
mod render;
mod spec;
mod truth;

pub use env::{
    check_termination, describe_performed, AbortCause, EnvConfig, Environment, StepReport,
    TerminationReason, POPUP_CLOSE, POPUP_TEXT, REPEAT_LIMIT,
};
pub use noise::{
    is_sound, perturb, replay_draws, EventModel, GroundingFaultModel, NoiseChannel, NoiseDraw,
    NoiseModel, MISLABEL_CLASS,
};
pub use render::{
    hit_test, launcher_app, render_background, render_screen, substitute, RenderedScreen,
    HOME_SCREEN_ID,
};
pub use spec::{
    truthy, ActionPattern, AppSpec, DeviceSnapshot, Effect, Layout, NodeTemplate, PartialQuestion,
    Predicate, QuestionWhen, ReferenceTexts, ScreenSpec, Suite, SuiteFile, TaskSpec, Transition,
    World, DEFAULT_MAX_STEPS, LAUNCHER_APP, LAUNCHER_PACKAGE,
};
pub use truth::{ActionTruth, EnvEvent, EpisodeTruth, MistakeEntry, MistakeKind, StateTruth};

/// Qualified id of the launcher screen.
pub fn home_screen() -> String {
    format!("{LAUNCHER_APP}/{HOME_SCREEN_ID}")
}
