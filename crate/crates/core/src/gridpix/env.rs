use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::render::{self, Rgb};
use super::{maze, EnvError, Scenario, ScenarioKind};
use crate::tensorgrad::Tensor;

pub const NUM_ACTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub fn from_index(i: usize) -> Result<Self, EnvError> {
        match i {
            0 => Ok(Action::Up),
            1 => Ok(Action::Down),
            2 => Ok(Action::Left),
            3 => Ok(Action::Right),
            _ => Err(EnvError::Action(i)),
        }
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Floor,
    Wall,
    /// Item with a palette index (k-item order, or 0 = red / 1 = green for two-colour).
    Item(usize),
    Goal,
    Indicator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndicatorColor {
    Red,
    Green,
}

impl IndicatorColor {
    fn item_index(self) -> usize {
        match self {
            IndicatorColor::Red => 0,
            IndicatorColor::Green => 1,
        }
    }
}

/// One transition's outcome.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub obs: Tensor,
    pub reward: f64,
    /// The task ended; no bootstrapping past this step.
    pub terminated: bool,
    /// The timeout hit; the episode could have continued.
    pub truncated: bool,
}

/// Mutable state of a running episode.
#[derive(Clone, Debug)]
pub struct EnvState {
    pub agent: (usize, usize),
    pub cells: Vec<Cell>,
    pub items_remaining: usize,
    /// Next item index to collect (k-item).
    pub correct_next_item: usize,
    /// Hidden cue colour (two-colour).
    pub indicator_color: Option<IndicatorColor>,
    /// Current chain state (tabular chain).
    pub chain_state: usize,
    pub step_counter: usize,
    pub rng: ChaCha8Rng,
}

/// A single environment instance; owned by exactly one worker.
#[derive(Clone, Debug)]
pub struct Env {
    scenario: Scenario,
    state: Option<EnvState>,
    finished: bool,
}

const KITEM_CORRECT: f64 = 0.5;
const KITEM_WRONG: f64 = -0.25;
const KITEM_BONUS: f64 = 1.0;
const GOAL_REWARD: f64 = 1.0;
const STEP_COST: f64 = -0.01;
const MATCH_REWARD: f64 = 1.0;
const MISMATCH_REWARD: f64 = -1.0;

impl Env {
    pub fn new(scenario: Scenario) -> Result<Self, EnvError> {
        scenario.validate()?;
        Ok(Env { scenario, state: None, finished: false })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn state_mut(&mut self) -> Option<&mut EnvState> {
        self.state.as_mut()
    }

    pub fn obs_shape(&self) -> [usize; 3] {
        self.scenario.obs_shape()
    }

    pub fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    /// Draws a fresh layout from the episode stream `seed` and returns the
    /// first observation.
    pub fn reset(&mut self, seed: u64) -> Result<Tensor, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = self.scenario.grid_size;
        let mut state = EnvState {
            agent: (0, 0),
            cells: Vec::new(),
            items_remaining: 0,
            correct_next_item: 0,
            indicator_color: None,
            chain_state: 0,
            step_counter: 0,
            rng: rng.clone(),
        };
        match &self.scenario.kind {
            ScenarioKind::KItem { items } => {
                state.cells = bordered(g);
                let picks = sample_free(&state.cells, g, items + 1, &mut rng)?;
                state.agent = picks[0];
                for (i, &(r, c)) in picks[1..].iter().enumerate() {
                    state.cells[r * g + c] = Cell::Item(i);
                }
                state.items_remaining = *items;
            }
            ScenarioKind::Labyrinth => {
                let walls = maze::generate(g, &mut rng);
                state.cells = walls.iter().map(|&w| if w { Cell::Wall } else { Cell::Floor }).collect();
                state.agent = (1, 1);
                state.cells[(g - 2) * g + (g - 2)] = Cell::Goal;
            }
            ScenarioKind::TwoColor { items_per_color, .. } => {
                state.cells = bordered(g);
                let radius = self.scenario.view_radius.unwrap_or(g) as isize;
                let agent = sample_free(&state.cells, g, 1, &mut rng)?[0];
                state.agent = agent;
                // indicator sits inside the first frame's view
                let near: Vec<(usize, usize)> = free_cells(&state.cells, g)
                    .into_iter()
                    .filter(|&(r, c)| {
                        (r, c) != agent
                            && (r as isize - agent.0 as isize).abs() <= radius
                            && (c as isize - agent.1 as isize).abs() <= radius
                    })
                    .collect();
                let &(ir, ic) = near
                    .choose(&mut rng)
                    .ok_or_else(|| EnvError::Config("no room for the indicator".into()))?;
                state.cells[ir * g + ic] = Cell::Indicator;
                state.indicator_color = Some(if rng.gen_bool(0.5) {
                    IndicatorColor::Red
                } else {
                    IndicatorColor::Green
                });
                let mut blocked = state.cells.clone();
                blocked[agent.0 * g + agent.1] = Cell::Wall;
                let spots = sample_free(&blocked, g, 2 * items_per_color, &mut rng)?;
                for (i, &(r, c)) in spots.iter().enumerate() {
                    state.cells[r * g + c] = Cell::Item(i % 2);
                }
                state.items_remaining = 2 * items_per_color;
            }
            ScenarioKind::ConstObs { .. } => {}
            ScenarioKind::TabularChain(chain) => {
                state.chain_state = chain.start;
            }
        }
        state.rng = rng;
        self.state = Some(state);
        self.finished = false;
        Ok(self.render())
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EnvError> {
        let action = Action::from_index(action)?;
        if self.finished {
            return Err(EnvError::Usage("step called after the episode ended; call reset first".into()));
        }
        let g = self.scenario.grid_size;
        let scenario = &self.scenario;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| EnvError::Usage("step called before reset".into()))?;
        state.step_counter += 1;
        let mut reward = 0.0;
        let mut terminated = false;

        match &scenario.kind {
            ScenarioKind::KItem { .. } => {
                if let Some(cell) = try_move(state, g, action) {
                    if let Cell::Item(i) = state.cells[cell] {
                        if i == state.correct_next_item {
                            state.cells[cell] = Cell::Floor;
                            state.items_remaining -= 1;
                            state.correct_next_item += 1;
                            reward += KITEM_CORRECT;
                            if state.items_remaining == 0 {
                                reward += KITEM_BONUS;
                                terminated = true;
                            }
                        } else {
                            reward += KITEM_WRONG;
                        }
                    }
                }
            }
            ScenarioKind::Labyrinth => {
                reward += STEP_COST;
                if let Some(cell) = try_move(state, g, action) {
                    if state.cells[cell] == Cell::Goal {
                        reward += GOAL_REWARD;
                        terminated = true;
                    }
                }
            }
            ScenarioKind::TwoColor { .. } => {
                if let Some(cell) = try_move(state, g, action) {
                    if let Cell::Item(i) = state.cells[cell] {
                        let target = state.indicator_color.expect("indicator set at reset").item_index();
                        reward += if i == target { MATCH_REWARD } else { MISMATCH_REWARD };
                        state.cells[cell] = Cell::Floor;
                        state.items_remaining -= 1;
                        terminated = state.items_remaining == 0;
                    }
                }
            }
            ScenarioKind::ConstObs { .. } => {}
            ScenarioKind::TabularChain(chain) => {
                let s = state.chain_state;
                reward = chain.rewards[s];
                let u: f64 = state.rng.gen();
                let row = &chain.transitions[s];
                let mut next = row.len() - 1;
                let mut cum = 0.0;
                for (j, p) in row.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        next = j;
                        break;
                    }
                }
                state.chain_state = next;
                terminated = chain.terminal[next];
            }
        }

        let truncated = !terminated && state.step_counter >= scenario.timeout;
        self.finished = terminated || truncated;
        Ok(StepResult {
            obs: self.render(),
            reward,
            terminated,
            truncated,
        })
    }

    /// Renders the current state; before the first reset this is an all-zero frame.
    pub fn render(&self) -> Tensor {
        let [c, h, w] = self.obs_shape();
        let Some(state) = &self.state else {
            return Tensor::zeros(&[c, h, w]);
        };
        let g = self.scenario.grid_size;
        match &self.scenario.kind {
            ScenarioKind::ConstObs { value } => Tensor::full(&[c, h, w], *value as _),
            ScenarioKind::TabularChain(chain) => {
                let mut t = Tensor::zeros(&[1, 1, chain.states()]);
                t.data_mut()[state.chain_state] = 1.0;
                t
            }
            kind => {
                let indicator_visible = match kind {
                    ScenarioKind::TwoColor { indicator_visible_steps, .. } => {
                        state.step_counter < *indicator_visible_steps
                    }
                    _ => false,
                };
                let color_at = |r: usize, col: usize| -> Rgb {
                    if (r, col) == state.agent {
                        return render::AGENT;
                    }
                    match state.cells[r * g + col] {
                        Cell::Floor => render::FLOOR,
                        Cell::Wall => render::WALL,
                        Cell::Goal => render::GOAL,
                        Cell::Item(i) => match kind {
                            ScenarioKind::TwoColor { .. } => {
                                if i == 0 {
                                    render::RED
                                } else {
                                    render::GREEN
                                }
                            }
                            _ => render::ITEM_COLORS[i],
                        },
                        Cell::Indicator => {
                            if indicator_visible {
                                match state.indicator_color {
                                    Some(IndicatorColor::Red) => render::RED,
                                    _ => render::GREEN,
                                }
                            } else {
                                render::NEUTRAL
                            }
                        }
                    }
                };
                match self.scenario.view_radius {
                    Some(radius) => render::paint_window(
                        2 * radius + 1,
                        state.agent.0 as isize - radius as isize,
                        state.agent.1 as isize - radius as isize,
                        g,
                        color_at,
                    ),
                    None => render::paint_window(g, 0, 0, g, color_at),
                }
            }
        }
    }
}

fn bordered(g: usize) -> Vec<Cell> {
    let mut cells = vec![Cell::Floor; g * g];
    for i in 0..g {
        cells[i] = Cell::Wall;
        cells[(g - 1) * g + i] = Cell::Wall;
        cells[i * g] = Cell::Wall;
        cells[i * g + g - 1] = Cell::Wall;
    }
    cells
}

fn free_cells(cells: &[Cell], g: usize) -> Vec<(usize, usize)> {
    (0..g * g)
        .filter(|&i| cells[i] == Cell::Floor)
        .map(|i| (i / g, i % g))
        .collect()
}

fn sample_free<R: Rng>(cells: &[Cell], g: usize, count: usize, rng: &mut R) -> Result<Vec<(usize, usize)>, EnvError> {
    let free = free_cells(cells, g);
    if free.len() < count {
        return Err(EnvError::Config(format!(
            "layout needs {count} free cells, only {} available",
            free.len()
        )));
    }
    Ok(free.choose_multiple(rng, count).cloned().collect())
}

/// Moves the agent unless a wall blocks it; returns the entered cell index.
fn try_move(state: &mut EnvState, g: usize, action: Action) -> Option<usize> {
    let (dr, dc) = action.delta();
    let r = state.agent.0 as isize + dr;
    let c = state.agent.1 as isize + dc;
    if r < 0 || c < 0 || r as usize >= g || c as usize >= g {
        return None;
    }
    let idx = r as usize * g + c as usize;
    if state.cells[idx] == Cell::Wall {
        return None;
    }
    state.agent = (r as usize, c as usize);
    Some(idx)
}
