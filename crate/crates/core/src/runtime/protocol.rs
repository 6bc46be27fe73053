//! Lockstep exchange between a controller and a simulator thread.
//!
//! The simulator thread owns an [`HvacEnv`] and talks over two rendezvous
//! channels of capacity 1. After a reset it emits observation 0 and then
//! alternates strictly: it waits for an action carrying the index of the
//! observation it answers, advances one step, and emits the next
//! observation. The step that ends the episode is answered with a
//! [`SimEvent::Terminal`] instead. An action with the wrong index is a
//! protocol error and stops the simulator; a vanished peer makes it stop
//! quietly.

use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{bounded, Receiver, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{EnergyBreakdown, HvacEnv, RewardBreakdown};

/// Capacity of both lockstep channels.
pub const LOCKSTEP_CAPACITY: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SimRequest {
    Reset { seed: u64 },
    Act { index: usize, action: Vec<f64> },
    Stop,
}

/// Result of the step that produced an observation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: RewardBreakdown,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    /// Observation `index` of the running episode; `outcome` is `None` right
    /// after a reset.
    Observation {
        index: usize,
        features: Vec<f64>,
        outcome: Option<StepOutcome>,
    },
    /// Final observation; no action is expected for it.
    Terminal {
        index: usize,
        features: Vec<f64>,
        outcome: StepOutcome,
    },
    Fault(ProtocolError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProtocolError {
    #[error("worker {worker}: action index {got} does not answer observation {expected:?}")]
    OutOfOrder {
        worker: usize,
        expected: Option<usize>,
        got: usize,
    },
    #[error("worker {worker}: environment error: {message}")]
    Environment { worker: usize, message: String },
    #[error("worker {worker}: simulator disconnected")]
    Disconnected { worker: usize },
    #[error("worker {worker}: unexpected event {event}")]
    Unexpected { worker: usize, event: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogKind {
    Observation,
    Action,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub worker: usize,
    pub kind: LogKind,
    pub index: usize,
}

/// Shared record of every message, in the order the simulators saw them.
pub type ProtocolLog = Arc<Mutex<Vec<LogEntry>>>;

/// Random scheduling delays injected on the simulator side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub seed: u64,
    /// Probability of sleeping before answering; otherwise the thread yields.
    pub sleep_probability: f64,
    pub max_micros: u64,
}

/// Controller-side end of a lockstep pair.
#[derive(Debug)]
pub struct SimulatorHandle {
    worker: usize,
    requests: Sender<SimRequest>,
    events: Receiver<SimEvent>,
    thread: Option<JoinHandle<Result<u64, ProtocolError>>>,
    /// Index of the observation awaiting an action.
    pending: Option<usize>,
}

impl SimulatorHandle {
    pub fn spawn(worker: usize, env: HvacEnv, log: Option<ProtocolLog>, jitter: Option<Jitter>) -> Self {
        let (req_tx, req_rx) = bounded(LOCKSTEP_CAPACITY);
        let (ev_tx, ev_rx) = bounded(LOCKSTEP_CAPACITY);
        let thread = thread::Builder::new()
            .name(format!("sim-{worker}"))
            .spawn(move || simulator_loop(worker, env, req_rx, ev_tx, log, jitter))
            .expect("spawn simulator thread");
        Self {
            worker,
            requests: req_tx,
            events: ev_rx,
            thread: Some(thread),
            pending: None,
        }
    }

    pub fn worker(&self) -> usize {
        self.worker
    }

    pub fn pending(&self) -> Option<usize> {
        self.pending
    }

    /// Sends a request without any client-side checks.
    pub fn send(&self, request: SimRequest) -> Result<(), ProtocolError> {
        self.requests
            .send(request)
            .map_err(|_| ProtocolError::Disconnected { worker: self.worker })
    }

    pub fn recv(&self) -> Result<SimEvent, ProtocolError> {
        self.events
            .recv()
            .map_err(|_| ProtocolError::Disconnected { worker: self.worker })
    }

    /// Starts an episode and returns observation 0.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<f64>, ProtocolError> {
        self.send(SimRequest::Reset { seed })?;
        match self.recv()? {
            SimEvent::Observation { index: 0, features, .. } => {
                self.pending = Some(0);
                Ok(features)
            }
            SimEvent::Fault(e) => Err(e),
            other => Err(self.unexpected(&other)),
        }
    }

    /// Answers the pending observation and returns the next event, which is
    /// either the following observation or the terminal one.
    pub fn act(&mut self, action: Vec<f64>) -> Result<SimEvent, ProtocolError> {
        let Some(index) = self.pending else {
            return Err(ProtocolError::Unexpected {
                worker: self.worker,
                event: "action without a pending observation".into(),
            });
        };
        self.send(SimRequest::Act { index, action })?;
        let event = self.recv()?;
        match &event {
            SimEvent::Observation { index: i, .. } if *i == index + 1 => self.pending = Some(*i),
            SimEvent::Terminal { index: i, .. } if *i == index + 1 => self.pending = None,
            SimEvent::Fault(e) => return Err(e.clone()),
            other => return Err(self.unexpected(other)),
        }
        Ok(event)
    }

    /// Stops the simulator and returns the number of steps it executed.
    pub fn stop(mut self) -> Result<u64, ProtocolError> {
        let _ = self.requests.send(SimRequest::Stop);
        self.join()
    }

    fn join(&mut self) -> Result<u64, ProtocolError> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or(Err(ProtocolError::Disconnected { worker: self.worker })),
            None => Ok(0),
        }
    }

    fn unexpected(&self, event: &SimEvent) -> ProtocolError {
        ProtocolError::Unexpected {
            worker: self.worker,
            event: format!("{event:?}").chars().take(120).collect(),
        }
    }
}

impl Drop for SimulatorHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            let _ = self.requests.try_send(SimRequest::Stop);
            // dropping our receiver unblocks a simulator stuck in send
            let (_, dummy) = bounded(0);
            drop(std::mem::replace(&mut self.events, dummy));
            let (dummy_tx, _) = bounded(0);
            drop(std::mem::replace(&mut self.requests, dummy_tx));
            let _ = self.join();
        }
    }
}

fn simulator_loop(
    worker: usize,
    mut env: HvacEnv,
    requests: Receiver<SimRequest>,
    events: Sender<SimEvent>,
    log: Option<ProtocolLog>,
    jitter: Option<Jitter>,
) -> Result<u64, ProtocolError> {
    let mut rng = jitter.map(|j| ChaCha8Rng::seed_from_u64(j.seed ^ worker as u64));
    let record = |kind, index| {
        if let Some(l) = &log {
            l.lock().expect("protocol log").push(LogEntry { worker, kind, index });
        }
    };
    let mut delay = || {
        if let (Some(j), Some(r)) = (jitter, rng.as_mut()) {
            if r.gen_bool(j.sleep_probability) {
                thread::sleep(Duration::from_micros(r.gen_range(0..=j.max_micros)));
            } else {
                thread::yield_now();
            }
        }
    };
    let mut expected: Option<usize> = None;
    let mut steps = 0u64;
    // A failed send means the controller is gone: stop without error.
    while let Ok(request) = requests.recv() {
        delay();
        match request {
            SimRequest::Stop => break,
            SimRequest::Reset { seed } => {
                let features = env.reset(seed).features();
                expected = Some(0);
                record(LogKind::Observation, 0);
                if events
                    .send(SimEvent::Observation { index: 0, features, outcome: None })
                    .is_err()
                {
                    break;
                }
            }
            SimRequest::Act { index, action } => {
                record(LogKind::Action, index);
                if expected != Some(index) {
                    let err = ProtocolError::OutOfOrder { worker, expected, got: index };
                    let _ = events.send(SimEvent::Fault(err.clone()));
                    return Err(err);
                }
                let step = match env.step_raw(&action) {
                    Ok(s) => s,
                    Err(e) => {
                        let err = ProtocolError::Environment { worker, message: e.to_string() };
                        let _ = events.send(SimEvent::Fault(err.clone()));
                        return Err(err);
                    }
                };
                steps += 1;
                let next = index + 1;
                let outcome = StepOutcome { reward: step.reward, energy: step.energy };
                let features = step.observation.features();
                let event = if step.done {
                    expected = None;
                    record(LogKind::Terminal, next);
                    SimEvent::Terminal { index: next, features, outcome }
                } else {
                    expected = Some(next);
                    record(LogKind::Observation, next);
                    SimEvent::Observation { index: next, features, outcome: Some(outcome) }
                };
                if events.send(event).is_err() {
                    break;
                }
            }
        }
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::building::build_reference_topology;
    use crate::env::EnvConfig;
    use crate::weather::synthetic::{generate_epw, ClimateProfile};
    use crate::weather::parse_epw;

    fn one_day_env() -> HvacEnv {
        let text = generate_epw(&ClimateProfile::toronto(), 1);
        let weather = Arc::new(parse_epw(&text).unwrap());
        let cfg = EnvConfig {
            num_days: 1,
            start_day_of_year: 182,
            ..EnvConfig::default()
        };
        HvacEnv::new(cfg, weather, Arc::new(build_reference_topology())).unwrap()
    }

    #[test]
    fn one_episode_counts_messages() {
        let log: ProtocolLog = Arc::default();
        let mut sim = SimulatorHandle::spawn(0, one_day_env(), Some(log.clone()), None);
        sim.reset(5).unwrap();
        let mut terminal = None;
        for t in 0..96 {
            match sim.act(vec![0.0; 30]).unwrap() {
                SimEvent::Observation { index, .. } => assert_eq!(index, t + 1),
                SimEvent::Terminal { index, .. } => terminal = Some((t, index)),
                SimEvent::Fault(e) => panic!("{e}"),
            }
        }
        assert_eq!(terminal, Some((95, 96)));
        assert_eq!(sim.stop().unwrap(), 96);
        let log = log.lock().unwrap();
        let obs: Vec<usize> = log.iter().filter(|e| e.kind == LogKind::Observation).map(|e| e.index).collect();
        let acts: Vec<usize> = log.iter().filter(|e| e.kind == LogKind::Action).map(|e| e.index).collect();
        assert_eq!(obs, (0..96).collect::<Vec<_>>());
        assert_eq!(acts, (0..96).collect::<Vec<_>>());
        assert_eq!(log.iter().filter(|e| e.kind == LogKind::Terminal).count(), 1);
    }

    #[test]
    fn stale_index_is_a_protocol_error() {
        let mut sim = SimulatorHandle::spawn(3, one_day_env(), None, None);
        sim.reset(1).unwrap();
        sim.act(vec![0.0; 30]).unwrap();
        // observation 1 is pending; answer observation 0 again
        sim.send(SimRequest::Act { index: 0, action: vec![0.0; 30] }).unwrap();
        assert_eq!(
            sim.recv().unwrap(),
            SimEvent::Fault(ProtocolError::OutOfOrder { worker: 3, expected: Some(1), got: 0 })
        );
        assert!(sim.stop().is_err());
    }

    #[test]
    fn action_before_reset_rejected() {
        let sim = SimulatorHandle::spawn(0, one_day_env(), None, None);
        sim.send(SimRequest::Act { index: 0, action: vec![0.0; 30] }).unwrap();
        assert!(matches!(sim.recv().unwrap(), SimEvent::Fault(ProtocolError::OutOfOrder { expected: None, .. })));
    }

    #[test]
    fn wrong_action_width_reported() {
        let mut sim = SimulatorHandle::spawn(0, one_day_env(), None, None);
        sim.reset(1).unwrap();
        assert!(matches!(sim.act(vec![0.0; 3]), Err(ProtocolError::Environment { .. })));
    }

    #[test]
    fn dropping_the_controller_stops_the_simulator() {
        let mut sim = SimulatorHandle::spawn(0, one_day_env(), None, None);
        sim.reset(1).unwrap();
        drop(sim);
    }
}
