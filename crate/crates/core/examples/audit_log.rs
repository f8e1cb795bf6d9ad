//! Run with kinematic auditing on and check the event log for conservation
//! and ordering violations.
//!
//! cargo run --release --example audit_log

use crowdroute::engine::{audit_log, run_with, RunOptions};
use crowdroute::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = scenarios::evacuation();
    let out = run_with(&sc, 7, &RunOptions { audit: true })?;
    println!("{:?}", out.stats.audit);
    let report = audit_log(&out.log, &sc.network, sc.mode);
    println!("{} events, clean: {}", out.log.events.len(), report.is_clean());
    for v in &report.violations {
        println!("  {v:?}");
    }
    println!("log digest {}", out.log.digest());
    Ok(())
}
