//! Pixel gridworlds with memory demands, plus diagnostic environments whose
//! values are known in closed form.
//!
//! | scenario        | view              | reward rules                                   |
//! |-----------------|-------------------|------------------------------------------------|
//! | `k_item`        | egocentric 5×5    | +0.5 correct item, −0.25 wrong, +1 on finishing |
//! | `labyrinth`     | full grid         | −0.01 per step, +1 at the goal                 |
//! | `two_color`     | egocentric 5×5    | +1 matching the early cue, −1 otherwise        |
//! | `const_obs`     | constant frame    | none                                           |
//! | `tabular_chain` | one-hot state     | per-state reward                               |

mod chain;
pub mod dump;
mod env;
mod maze;
pub mod render;
mod scenario;

pub use chain::analytic_values;
pub use env::{Action, Cell, Env, EnvState, IndicatorColor, StepResult, NUM_ACTIONS};
pub use scenario::{ChainSpec, Scenario, ScenarioKind};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("scenario configuration error: {0}")]
    Config(String),
    #[error("environment usage error: {0}")]
    Usage(String),
    #[error("action {0} out of range (0..4)")]
    Action(usize),
}
