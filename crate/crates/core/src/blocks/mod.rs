//! Blocks world: a grid with metal cubes and a magnetic manipulator.
//!
//! Rows are counted from the floor (row 0). The manipulator starts in the
//! top-left cell with the magnet off. The only source of randomness is the
//! initial cube layout, drawn from a seed in [`reset`].

mod observation;
pub mod scripted;
mod session;

pub use observation::ObservationKey;
pub use session::EnvSession;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reward for completing the tower.
pub const TOWER_REWARD: f64 = 100.0;
/// Reward for every other step, no-ops included.
pub const STEP_REWARD: f64 = -0.00001;

/// Largest number of grid cells the packed observation key can hold.
pub const MAX_CELLS: usize = 112;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlocksConfig {
    pub grid_height: usize,
    pub grid_width: usize,
    pub num_cubes: usize,
    pub episode_length: usize,
    pub tower_target: usize,
}

impl BlocksConfig {
    pub fn new(
        grid_height: usize,
        grid_width: usize,
        num_cubes: usize,
        episode_length: usize,
        tower_target: usize,
    ) -> Result<Self> {
        let config = BlocksConfig {
            grid_height,
            grid_width,
            num_cubes,
            episode_length,
            tower_target,
        };
        config.validate()?;
        Ok(config)
    }

    /// First training environment: 4x3 grid, 3 cubes, 200 steps, tower of 3.
    pub fn training_small() -> Self {
        BlocksConfig::new(4, 3, 3, 200, 3).expect("preset is valid")
    }

    /// Second training environment: 5x4 grid, 4 cubes, 500 steps, tower of 4.
    pub fn training_large() -> Self {
        BlocksConfig::new(5, 4, 4, 500, 4).expect("preset is valid")
    }

    /// Held-out environment: 6x4 grid, 5 cubes, 800 steps, tower of 5.
    pub fn test() -> Self {
        BlocksConfig::new(6, 4, 5, 800, 5).expect("preset is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("grid_height", self.grid_height),
            ("grid_width", self.grid_width),
            ("num_cubes", self.num_cubes),
            ("episode_length", self.episode_length),
            ("tower_target", self.tower_target),
        ];
        for (name, value) in fields {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.grid_height < 2 {
            return Err(Error::Config("grid_height must be at least 2".into()));
        }
        if self.grid_width > 255 || self.grid_height > 255 {
            return Err(Error::Config("grid dimensions must fit in a byte".into()));
        }
        if self.grid_width * self.grid_height > MAX_CELLS {
            return Err(Error::Config(format!(
                "grid has {} cells, at most {MAX_CELLS} supported",
                self.grid_width * self.grid_height
            )));
        }
        // Cubes beyond the bottom row are stacked, but the top row stays free
        // for the manipulator.
        let capacity = self.grid_width * (self.grid_height - 1);
        if self.num_cubes > capacity {
            return Err(Error::Config(format!(
                "{} cubes do not fit below the top row of a {}x{} grid",
                self.num_cubes, self.grid_height, self.grid_width
            )));
        }
        if self.tower_target > self.num_cubes.min(self.grid_height) {
            return Err(Error::Config(format!(
                "tower_target {} exceeds min(num_cubes, grid_height)",
                self.tower_target
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.grid_width * self.grid_height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlocksAction {
    Left,
    Right,
    Up,
    Down,
    ToggleMagnet,
}

impl BlocksAction {
    /// All actions in tie-break order.
    pub const ALL: [BlocksAction; 5] = [
        BlocksAction::Left,
        BlocksAction::Right,
        BlocksAction::Up,
        BlocksAction::Down,
        BlocksAction::ToggleMagnet,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            BlocksAction::Left => "Left",
            BlocksAction::Right => "Right",
            BlocksAction::Up => "Up",
            BlocksAction::Down => "Down",
            BlocksAction::ToggleMagnet => "ToggleMagnet",
        }
    }
}

impl fmt::Display for BlocksAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlocksAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Ok(match lower.as_str() {
            "left" | "l" => BlocksAction::Left,
            "right" | "r" => BlocksAction::Right,
            "up" | "u" => BlocksAction::Up,
            "down" | "d" => BlocksAction::Down,
            "togglemagnet" | "toggle" | "magnet" | "t" => BlocksAction::ToggleMagnet,
            _ => return Err(Error::Config(format!("unknown action `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: u8,
    pub row: u8,
}

impl Cell {
    pub fn new(col: usize, row: usize) -> Self {
        Cell {
            col: col as u8,
            row: row as u8,
        }
    }
}

/// Feature tuple selecting which sub-machine serves a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterKey {
    pub manip_height: usize,
    pub holding: bool,
}

impl ClusterKey {
    pub fn new(manip_height: usize, holding: bool) -> Self {
        ClusterKey { manip_height, holding }
    }

    /// Clusters that can occur in every one of `configs`. The manipulator
    /// cannot hold a cube while on the floor row.
    pub fn represented_in(configs: &[BlocksConfig]) -> Vec<ClusterKey> {
        let Some(min_height) = configs.iter().map(|c| c.grid_height).min() else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for h in 0..min_height {
            out.push(ClusterKey::new(h, false));
            if h > 0 {
                out.push(ClusterKey::new(h, true));
            }
        }
        out.sort();
        out
    }
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.manip_height, self.holding)
    }
}

/// Complete environment state. Cube occupancy is a bitmask indexed by
/// `row * width + col`; the held cube, if any, stays in the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlocksState {
    width: u8,
    height: u8,
    cubes: u128,
    manip: Cell,
    magnet_on: bool,
    holding: bool,
    steps_taken: u32,
}

impl BlocksState {
    /// Builds a state from parts. No physical checks beyond bounds; see
    /// [`BlocksState::check_invariants`].
    pub fn from_parts(
        config: &BlocksConfig,
        cube_cells: &[Cell],
        manip: Cell,
        magnet_on: bool,
        holding: bool,
    ) -> Result<Self> {
        let mut state = BlocksState {
            width: config.grid_width as u8,
            height: config.grid_height as u8,
            cubes: 0,
            manip,
            magnet_on,
            holding,
            steps_taken: 0,
        };
        if !state.in_grid(manip.col as isize, manip.row as isize) {
            return Err(Error::Config(format!("manipulator {manip:?} outside grid")));
        }
        for &c in cube_cells {
            if !state.in_grid(c.col as isize, c.row as isize) {
                return Err(Error::Config(format!("cube {c:?} outside grid")));
            }
            let bit = state.bit(c.col as usize, c.row as usize);
            if state.cubes & bit != 0 {
                return Err(Error::Config(format!("two cubes at {c:?}")));
            }
            state.cubes |= bit;
        }
        Ok(state)
    }

    pub fn width(&self) -> usize {
        self.width as usize
    }

    pub fn height(&self) -> usize {
        self.height as usize
    }

    pub fn manip(&self) -> Cell {
        self.manip
    }

    pub fn magnet_on(&self) -> bool {
        self.magnet_on
    }

    pub fn holding(&self) -> bool {
        self.holding
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken as usize
    }

    pub(crate) fn cube_mask(&self) -> u128 {
        self.cubes
    }

    pub fn num_cubes(&self) -> usize {
        self.cubes.count_ones() as usize
    }

    /// Cube cells in row-major order.
    pub fn cube_cells(&self) -> Vec<Cell> {
        let w = self.width();
        (0..self.width() * self.height())
            .filter(|i| self.cubes & (1u128 << i) != 0)
            .map(|i| Cell::new(i % w, i / w))
            .collect()
    }

    pub fn has_cube(&self, col: usize, row: usize) -> bool {
        self.cubes & self.bit(col, row) != 0
    }

    /// Cell of the held cube, if any.
    pub fn held_cube(&self) -> Option<Cell> {
        self.holding
            .then(|| Cell::new(self.manip.col as usize, self.manip.row as usize - 1))
    }

    fn bit(&self, col: usize, row: usize) -> u128 {
        1u128 << (row * self.width as usize + col)
    }

    fn in_grid(&self, col: isize, row: isize) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width() && (row as usize) < self.height()
    }

    fn free(&self, col: isize, row: isize) -> bool {
        self.in_grid(col, row) && !self.has_cube(col as usize, row as usize)
    }

    fn top_row(&self) -> usize {
        self.height() - 1
    }

    /// Lets the cube at `(col, row)` fall onto the first occupied cell below.
    fn settle(&mut self, col: usize, mut row: usize) {
        self.cubes &= !self.bit(col, row);
        while row > 0 && !self.has_cube(col, row - 1) {
            row -= 1;
        }
        self.cubes |= self.bit(col, row);
    }

    fn release(&mut self) {
        if let Some(held) = self.held_cube() {
            self.holding = false;
            self.settle(held.col as usize, held.row as usize);
        }
        self.magnet_on = false;
    }

    fn apply(&mut self, action: BlocksAction) {
        let col = self.manip.col as isize;
        let row = self.manip.row as isize;
        match action {
            BlocksAction::Left | BlocksAction::Right => {
                let dc = if action == BlocksAction::Left { -1 } else { 1 };
                if self.holding {
                    if self.manip.row as usize != self.top_row() {
                        // Sideways moves are only allowed from the top row;
                        // anywhere else the cube drops and the arm stays put.
                        self.release();
                    } else if self.free(col + dc, row) && self.free(col + dc, row - 1) {
                        let held = self.bit(col as usize, row as usize - 1);
                        self.cubes &= !held;
                        self.cubes |= self.bit((col + dc) as usize, row as usize - 1);
                        self.manip.col = (col + dc) as u8;
                    }
                } else if self.free(col + dc, row) {
                    self.manip.col = (col + dc) as u8;
                }
            }
            BlocksAction::Up => {
                if self.free(col, row + 1) {
                    if self.holding {
                        self.cubes &= !self.bit(col as usize, row as usize - 1);
                        self.cubes |= self.bit(col as usize, row as usize);
                    }
                    self.manip.row += 1;
                }
            }
            BlocksAction::Down => {
                if self.holding {
                    if self.free(col, row - 2) {
                        self.cubes &= !self.bit(col as usize, row as usize - 1);
                        self.cubes |= self.bit(col as usize, row as usize - 2);
                        self.manip.row -= 1;
                    }
                } else if self.free(col, row - 1) {
                    self.manip.row -= 1;
                }
            }
            BlocksAction::ToggleMagnet => {
                if self.magnet_on {
                    self.release();
                } else {
                    self.magnet_on = true;
                    self.holding = row > 0 && self.has_cube(col as usize, row as usize - 1);
                }
            }
        }
    }

    /// Lists every violated physical invariant (empty when the state is sound).
    pub fn check_invariants(&self, config: &BlocksConfig) -> Vec<String> {
        let mut problems = Vec::new();
        if self.num_cubes() != config.num_cubes {
            problems.push(format!("cube count {} != {}", self.num_cubes(), config.num_cubes));
        }
        let m = self.manip;
        if self.has_cube(m.col as usize, m.row as usize) {
            problems.push("manipulator shares a cell with a cube".into());
        }
        if self.holding {
            if !self.magnet_on {
                problems.push("holding with magnet off".into());
            }
            if m.row == 0 || !self.has_cube(m.col as usize, m.row as usize - 1) {
                problems.push("holding without a cube below the manipulator".into());
            }
        }
        let held = self.held_cube();
        for c in self.cube_cells() {
            if Some(c) == held || c.row == 0 {
                continue;
            }
            if !self.has_cube(c.col as usize, c.row as usize - 1) {
                problems.push(format!("floating cube at {c:?}"));
            }
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    pub state: BlocksState,
}

/// Initial state: the bottom row takes up to `grid_width` cubes on seeded
/// distinct columns; any remaining cubes are stacked on seeded columns,
/// never reaching the top row.
pub fn reset(config: &BlocksConfig, seed: u64) -> Result<BlocksState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = config.grid_width;
    let mut columns: Vec<usize> = (0..width).collect();
    columns.shuffle(&mut rng);

    let mut heights = vec![0usize; width];
    for &c in columns.iter().take(config.num_cubes.min(width)) {
        heights[c] = 1;
    }
    for _ in width..config.num_cubes.max(width) {
        let open: Vec<usize> = (0..width).filter(|&c| heights[c] < config.grid_height - 1).collect();
        let c = open[rng.gen_range(0..open.len())];
        heights[c] += 1;
    }

    let cubes: Vec<Cell> = heights
        .iter()
        .enumerate()
        .flat_map(|(c, &h)| (0..h).map(move |r| Cell::new(c, r)))
        .collect();
    BlocksState::from_parts(config, &cubes, Cell::new(0, config.grid_height - 1), false, false)
}

/// Whether some column holds at least `tower_target` resting cubes stacked
/// from the floor. A held cube does not count.
pub fn tower_built(state: &BlocksState, config: &BlocksConfig) -> bool {
    let held = state.held_cube();
    (0..state.width()).any(|col| {
        let mut height = 0;
        while height < state.height() && state.has_cube(col, height) && held != Some(Cell::new(col, height)) {
            height += 1;
        }
        height >= config.tower_target
    })
}

pub fn is_terminal(state: &BlocksState, config: &BlocksConfig) -> bool {
    state.steps_taken() >= config.episode_length || tower_built(state, config)
}

pub fn step(state: &BlocksState, action: BlocksAction, config: &BlocksConfig) -> Result<StepOutcome> {
    if is_terminal(state, config) {
        return Err(Error::EpisodeDone);
    }
    let mut next = *state;
    next.apply(action);
    next.steps_taken += 1;
    let built = tower_built(&next, config);
    Ok(StepOutcome {
        reward: if built { TOWER_REWARD } else { STEP_REWARD },
        done: built || next.steps_taken() >= config.episode_length,
        state: next,
    })
}

pub fn cluster_of(state: &BlocksState) -> ClusterKey {
    ClusterKey::new(state.manip.row as usize, state.holding)
}

pub fn observe(state: &BlocksState) -> ObservationKey {
    ObservationKey::encode(state)
}
