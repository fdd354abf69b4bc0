use serde::{Deserialize, Serialize};

use super::EnvError;

/// Which gridworld to build and its rule parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    /// Collect `items` distinctly coloured items in a fixed colour order.
    KItem { items: usize },
    /// Reach the goal in a maze regenerated every episode.
    Labyrinth,
    /// Collect items matching an indicator colour that disappears early.
    TwoColor {
        #[serde(default = "default_indicator_steps")]
        indicator_visible_steps: usize,
        #[serde(default = "default_items_per_color")]
        items_per_color: usize,
    },
    /// Every pixel of every frame equals `value`; no rewards.
    ConstObs { value: f64 },
    /// Markov chain with one-hot observations.
    TabularChain(ChainSpec),
}

fn default_indicator_steps() -> usize {
    15
}

fn default_items_per_color() -> usize {
    2
}

/// Action-independent Markov chain; `rewards[s]` is paid on leaving state `s`
/// and entering a terminal state ends the episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub transitions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub terminal: Vec<bool>,
    #[serde(default)]
    pub start: usize,
}

impl ChainSpec {
    /// `s0 → s1 → terminal` paying `r0` then `r1`.
    pub fn two_step(r0: f64, r1: f64) -> Self {
        ChainSpec {
            transitions: vec![
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0],
            ],
            rewards: vec![r0, r1, 0.0],
            terminal: vec![false, false, true],
            start: 0,
        }
    }

    pub fn states(&self) -> usize {
        self.rewards.len()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let n = self.rewards.len();
        if n == 0 || self.transitions.len() != n || self.terminal.len() != n {
            return Err(EnvError::Config(format!(
                "chain needs matching sizes: {} transition rows, {} rewards, {} terminal flags",
                self.transitions.len(),
                n,
                self.terminal.len()
            )));
        }
        if self.start >= n || self.terminal[self.start] {
            return Err(EnvError::Config(format!("start state {} is invalid", self.start)));
        }
        for (s, row) in self.transitions.iter().enumerate() {
            if self.terminal[s] {
                continue;
            }
            let total: f64 = row.iter().sum();
            if row.len() != n || row.iter().any(|p| *p < 0.0) || (total - 1.0).abs() > 1e-9 {
                return Err(EnvError::Config(format!(
                    "transition row {s} is not a probability distribution"
                )));
            }
        }
        Ok(())
    }
}

/// Full description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub grid_size: usize,
    /// Egocentric half-width; `None` renders the whole grid.
    pub view_radius: Option<usize>,
    pub timeout: usize,
}

impl Scenario {
    pub fn k_item(items: usize) -> Self {
        Scenario {
            kind: ScenarioKind::KItem { items },
            grid_size: 9,
            view_radius: Some(2),
            timeout: 200,
        }
    }

    pub fn labyrinth(grid_size: usize) -> Self {
        Scenario {
            kind: ScenarioKind::Labyrinth,
            grid_size,
            view_radius: None,
            timeout: 250,
        }
    }

    pub fn two_color() -> Self {
        Scenario {
            kind: ScenarioKind::TwoColor {
                indicator_visible_steps: default_indicator_steps(),
                items_per_color: default_items_per_color(),
            },
            grid_size: 9,
            view_radius: Some(2),
            timeout: 200,
        }
    }

    pub fn const_obs(value: f64) -> Self {
        Scenario {
            kind: ScenarioKind::ConstObs { value },
            grid_size: 5,
            view_radius: Some(2),
            timeout: 64,
        }
    }

    pub fn tabular_chain(spec: ChainSpec) -> Self {
        Scenario {
            kind: ScenarioKind::TabularChain(spec),
            grid_size: 1,
            view_radius: None,
            timeout: 100,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ScenarioKind::KItem { .. } => "k_item",
            ScenarioKind::Labyrinth => "labyrinth",
            ScenarioKind::TwoColor { .. } => "two_color",
            ScenarioKind::ConstObs { .. } => "const_obs",
            ScenarioKind::TabularChain(_) => "tabular_chain",
        }
    }

    pub fn is_grid(&self) -> bool {
        matches!(
            self.kind,
            ScenarioKind::KItem { .. } | ScenarioKind::Labyrinth | ScenarioKind::TwoColor { .. }
        )
    }

    /// Observation shape `(C, H, W)`.
    pub fn obs_shape(&self) -> [usize; 3] {
        match &self.kind {
            ScenarioKind::TabularChain(chain) => [1, 1, chain.states()],
            _ => {
                let side = self.view_radius.map_or(self.grid_size, |r| 2 * r + 1);
                [3, side, side]
            }
        }
    }

    /// Flattened observation size `d`.
    pub fn obs_len(&self) -> usize {
        self.obs_shape().iter().product()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.timeout < 1 {
            return Err(EnvError::Config("timeout must be at least 1".into()));
        }
        if let ScenarioKind::TabularChain(chain) = &self.kind {
            return chain.validate();
        }
        if let Some(r) = self.view_radius {
            if 2 * r + 1 > self.grid_size {
                return Err(EnvError::Config(format!(
                    "view window {} exceeds grid size {}",
                    2 * r + 1,
                    self.grid_size
                )));
            }
        }
        let interior = self.grid_size.saturating_sub(2).pow(2);
        match &self.kind {
            ScenarioKind::KItem { items } => {
                if *items == 0 || *items > super::render::ITEM_COLORS.len() {
                    return Err(EnvError::Config(format!(
                        "k_item supports 1..={} items, got {items}",
                        super::render::ITEM_COLORS.len()
                    )));
                }
                if items + 1 > interior {
                    return Err(EnvError::Config(format!(
                        "{items} items and the agent do not fit in {interior} free cells"
                    )));
                }
            }
            ScenarioKind::TwoColor { items_per_color, .. } => {
                if *items_per_color == 0 {
                    return Err(EnvError::Config("two_color needs at least one item per colour".into()));
                }
                if 2 * items_per_color + 2 > interior {
                    return Err(EnvError::Config(format!(
                        "{} items, indicator and agent do not fit in {interior} free cells",
                        2 * items_per_color
                    )));
                }
                if self.view_radius == Some(0) {
                    return Err(EnvError::Config("two_color needs view_radius >= 1".into()));
                }
            }
            ScenarioKind::Labyrinth => {
                if self.grid_size < 5 || self.grid_size.is_multiple_of(2) {
                    return Err(EnvError::Config(format!(
                        "labyrinth grid size must be odd and at least 5, got {}",
                        self.grid_size
                    )));
                }
            }
            ScenarioKind::ConstObs { value } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(EnvError::Config(format!("constant observation {value} outside [0, 1]")));
                }
            }
            ScenarioKind::TabularChain(_) => unreachable!(),
        }
        Ok(())
    }
}
