//! The implementation side of a test run: an LTS simulator with a FIFO output
//! queue, reachable in-process or over a TCP line protocol.

mod fault;
mod tcp;

use std::collections::VecDeque;
use std::io;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::iolts::{ActionKind, Iolts, StateId};

pub use fault::{FaultError, FaultSpec};
pub use tcp::{serve_tcp, ServeError, SimServer, TcpPort};

/// What the tester observes when it listens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Observation {
    Output(String),
    Quiescent,
}

#[derive(Debug, Error)]
pub enum PortError {
    #[error("transport failure: {0}")]
    Io(#[from] io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Interface to a system under test.
///
/// Outputs are delivered in emission order. Once `Quiescent` has been
/// returned, no output arrives before the next `send`.
pub trait SutPort {
    /// Stimulates the implementation. Returns false if it refused the input.
    fn send(&mut self, input: &str) -> Result<bool, PortError>;
    fn receive(&mut self, timeout: Duration) -> Result<Observation, PortError>;
    fn reset(&mut self) -> Result<(), PortError>;
}

/// How quiescence is detected on an empty queue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMode {
    /// Report quiescence immediately.
    #[default]
    Logical,
    /// Wait for the full timeout first.
    WallClock,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("model defect: output/tau cycle through state {state} (more than {limit} autonomous steps)")]
    OutputCycle { state: StateId, limit: usize },
}

/// Executes a model under run-to-completion semantics: an accepted input is
/// followed by autonomous output (and tau) steps until a quiescent state is
/// reached, and every emitted output is queued.
#[derive(Clone, Debug)]
pub struct Simulator {
    model: Arc<Iolts>,
    current: StateId,
    queue: VecDeque<String>,
    rng: ChaCha8Rng,
    mode: TimeMode,
}

impl Simulator {
    pub fn new(model: Arc<Iolts>, mode: TimeMode, seed: u64) -> Result<Self, SimError> {
        let mut sim = Simulator {
            current: model.initial(),
            model,
            queue: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            mode,
        };
        sim.run_to_completion()?;
        Ok(sim)
    }

    pub fn model(&self) -> &Iolts {
        &self.model
    }

    pub fn current(&self) -> StateId {
        self.current
    }

    pub fn queued(&self) -> impl Iterator<Item = &str> {
        self.queue.iter().map(String::as_str)
    }

    pub fn knows_input(&self, name: &str) -> bool {
        self.model.input_id(name).is_some()
    }

    /// Takes an enabled input transition and runs to completion. A disabled
    /// or unknown input leaves the simulator untouched and returns false.
    pub fn send(&mut self, input: &str) -> Result<bool, SimError> {
        let Some(label) = self.model.input_id(input) else {
            return Ok(false);
        };
        let targets: Vec<StateId> = self.model.successors(self.current, label).collect();
        if targets.is_empty() {
            return Ok(false);
        }
        self.current = targets[self.rng.random_range(0..targets.len())];
        self.run_to_completion()?;
        Ok(true)
    }

    fn run_to_completion(&mut self) -> Result<(), SimError> {
        let limit = self.model.state_count();
        let mut steps = 0usize;
        loop {
            let model = &self.model;
            let choices: Vec<_> = model
                .outgoing(self.current)
                .iter()
                .filter(|t| matches!(model.kind(t.label), ActionKind::Output | ActionKind::Tau))
                .collect();
            if choices.is_empty() {
                return Ok(());
            }
            steps += 1;
            if steps > limit {
                return Err(SimError::OutputCycle { state: self.current, limit });
            }
            let t = choices[self.rng.random_range(0..choices.len())];
            if model.kind(t.label) == ActionKind::Output {
                self.queue.push_back(model.label(t.label).name().to_string());
            }
            self.current = t.target;
        }
    }

    /// Pops the oldest queued output, or reports quiescence.
    pub fn receive(&mut self, timeout: Duration) -> Observation {
        match self.queue.pop_front() {
            Some(name) => Observation::Output(name),
            None => {
                if self.mode == TimeMode::WallClock {
                    thread::sleep(timeout);
                }
                Observation::Quiescent
            }
        }
    }

    /// Installs a fault; the simulator keeps its current state and queue and
    /// behaves per the mutated model from now on.
    pub fn mutate(&mut self, fault: &FaultSpec) -> Result<(), FaultError> {
        self.model = Arc::new(fault.apply(&self.model)?);
        Ok(())
    }

    pub fn reset(&mut self) -> Result<(), SimError> {
        self.current = self.model.initial();
        self.queue.clear();
        self.run_to_completion()
    }
}

impl SutPort for Simulator {
    fn send(&mut self, input: &str) -> Result<bool, PortError> {
        Ok(Simulator::send(self, input)?)
    }

    fn receive(&mut self, timeout: Duration) -> Result<Observation, PortError> {
        Ok(Simulator::receive(self, timeout))
    }

    fn reset(&mut self) -> Result<(), PortError> {
        Ok(Simulator::reset(self)?)
    }
}
