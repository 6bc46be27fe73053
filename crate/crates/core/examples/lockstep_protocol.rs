// Drives one simulator thread through the lockstep request/response
// protocol by hand, then shows that a stale action index is rejected.

use anyhow::{bail, Result};
use hvac_drl::baseline::{baseline_action, BaselinePolicy};
use hvac_drl::env::{encode_action, EnvConfig};
use hvac_drl::runtime::protocol::{ProtocolLog, SimEvent, SimRequest, SimulatorHandle};
use hvac_drl::runtime::EnvSetup;

pub fn run_example() -> Result<()> {
    let setup = EnvSetup::synthetic_toronto(EnvConfig {
        num_days: 1,
        start_day_of_year: 182,
        ..EnvConfig::default()
    });
    let env = setup.make_env()?;
    let action = encode_action(
        &baseline_action(&BaselinePolicy::default(), &setup.config, env.num_zones()),
        &setup.config,
    );
    let log = ProtocolLog::default();
    let mut sim = SimulatorHandle::spawn(0, env, Some(log.clone()), None);

    sim.reset(42)?;
    let mut reward = 0.0;
    loop {
        match sim.act(action.clone())? {
            SimEvent::Observation { outcome: Some(o), .. } => reward += o.reward.reward,
            SimEvent::Terminal { index, outcome, .. } => {
                reward += outcome.reward.reward;
                println!("episode finished after {index} steps, reward {reward:.3}");
                break;
            }
            other => bail!("unexpected event {other:?}"),
        }
    }

    sim.reset(43)?;
    // Observation 0 is pending; answering observation 7 is a protocol fault
    // and the simulator shuts down.
    sim.send(SimRequest::Act { index: 7, action })?;
    match sim.recv()? {
        SimEvent::Fault(e) => println!("rejected: {e}"),
        other => bail!("expected a fault, got {other:?}"),
    }
    match sim.stop() {
        Ok(_) => bail!("simulator kept running after a fault"),
        Err(e) => println!("simulator stopped: {e}"),
    }
    println!("{} protocol log entries", log.lock().unwrap().len());
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
