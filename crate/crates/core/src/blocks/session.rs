use std::fmt::Write as _;

use super::{
    cluster_of, is_terminal, observe, reset, step, BlocksAction, BlocksConfig, BlocksState, ClusterKey, ObservationKey,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t: usize,
    pub action: BlocksAction,
    pub reward: f64,
    pub done: bool,
    pub cluster: ClusterKey,
}

/// One running episode.
#[derive(Debug, Clone)]
pub struct EnvSession {
    config: BlocksConfig,
    state: BlocksState,
    done: bool,
    trace: Option<Vec<TraceStep>>,
}

impl EnvSession {
    pub fn new(config: BlocksConfig, layout_seed: u64) -> Result<Self> {
        let state = reset(&config, layout_seed)?;
        Ok(Self::from_state(config, state))
    }

    pub fn from_state(config: BlocksConfig, state: BlocksState) -> Self {
        EnvSession {
            done: is_terminal(&state, &config),
            config,
            state,
            trace: None,
        }
    }

    /// Records every subsequent step for [`EnvSession::trace_text`].
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &BlocksConfig {
        &self.config
    }

    pub fn state(&self) -> &BlocksState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observe(&self) -> ObservationKey {
        observe(&self.state)
    }

    pub fn cluster(&self) -> ClusterKey {
        cluster_of(&self.state)
    }

    /// Applies one primitive action, returning `(reward, done)`.
    pub fn step(&mut self, action: BlocksAction) -> Result<(f64, bool)> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let out = step(&self.state, action, &self.config)?;
        self.state = out.state;
        self.done = out.done;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceStep {
                t: out.state.steps_taken(),
                action,
                reward: out.reward,
                done: out.done,
                cluster: cluster_of(&out.state),
            });
        }
        Ok((out.reward, out.done))
    }

    pub fn trace(&self) -> &[TraceStep] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// Trace as `t action reward done cluster` lines.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for s in self.trace() {
            let _ = writeln!(
                out,
                "{} {} {} {} {},{}",
                s.t, s.action, s.reward, s.done, s.cluster.manip_height, s.cluster.holding
            );
        }
        out
    }
}
