//! Replications are seeded from the base seed and their index, so results
//! do not depend on the thread count.
//!
//! cargo run --release --example parallel_replications

use std::time::Instant;

use crowdroute::engine::{replicate_map, replication_seed, RunOptions};
use crowdroute::scenarios;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = scenarios::evacuation();
    let mut digests = Vec::new();
    for threads in [1, 4] {
        let start = Instant::now();
        let d = replicate_map(&sc, threads, &RunOptions::default(), |_, out| out.log.digest())?;
        println!("{threads} thread(s): {} replications in {:.2?}", d.len(), start.elapsed());
        digests.push(d);
    }
    println!("identical: {}", digests[0] == digests[1]);
    for i in 0..3 {
        println!("replication {i}: seed {} digest {}", replication_seed(sc.base_seed, i), &digests[0][i][..16]);
    }
    Ok(())
}
