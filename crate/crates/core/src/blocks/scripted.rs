//! Hand-coded tower builder, used as a solvability reference.

use super::{BlocksAction, BlocksConfig, BlocksState, EnvSession};
use crate::error::Result;

/// Carries cubes one by one onto the initially tallest column, travelling
/// along the top row.
#[derive(Debug, Clone, Default)]
pub struct TowerBuilder {
    target: Option<usize>,
}

fn resting_height(state: &BlocksState, col: usize) -> usize {
    let held = state.held_cube();
    (0..state.height())
        .take_while(|&r| state.has_cube(col, r) && held.is_none_or(|h| (h.col as usize, h.row as usize) != (col, r)))
        .count()
}

fn toward(from: usize, to: usize) -> BlocksAction {
    if to < from {
        BlocksAction::Left
    } else {
        BlocksAction::Right
    }
}

impl TowerBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_action(&mut self, state: &BlocksState) -> BlocksAction {
        let target = *self.target.get_or_insert_with(|| {
            (0..state.width())
                .max_by_key(|&c| (resting_height(state, c), std::cmp::Reverse(c)))
                .unwrap_or(0)
        });
        let m = state.manip();
        let (col, row) = (m.col as usize, m.row as usize);
        let top = state.height() - 1;

        if state.holding() {
            if col != target {
                return if row != top {
                    BlocksAction::Up
                } else {
                    toward(col, target)
                };
            }
            return if row - 1 > resting_height(state, target) {
                BlocksAction::Down
            } else {
                BlocksAction::ToggleMagnet
            };
        }
        if state.magnet_on() {
            return BlocksAction::ToggleMagnet;
        }
        let source = (0..state.width())
            .filter(|&c| c != target && resting_height(state, c) > 0)
            .min_by_key(|&c| c.abs_diff(col));
        let Some(source) = source else {
            return BlocksAction::Up;
        };
        if col != source {
            return if row != top {
                BlocksAction::Up
            } else {
                toward(col, source)
            };
        }
        if row > resting_height(state, source) {
            BlocksAction::Down
        } else {
            BlocksAction::ToggleMagnet
        }
    }
}

/// Plays one scripted episode; returns `(total_reward, steps)`.
pub fn play(config: BlocksConfig, layout_seed: u64) -> Result<(f64, usize)> {
    let mut session = EnvSession::new(config, layout_seed)?;
    let mut builder = TowerBuilder::new();
    let mut total = 0.0;
    while !session.is_done() {
        let action = builder.next_action(session.state());
        total += session.step(action)?.0;
    }
    Ok((total, session.state().steps_taken()))
}
