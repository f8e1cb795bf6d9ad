//! Step a follower behind a slow leader and print the gap and speeds.
//!
//! cargo run --example walking_dynamics

use crowdroute::engine::DT;
use crowdroute::walking::{headway, step_kinematics, AgentKinematics, WalkParams};

fn main() {
    let params = WalkParams::default();
    let length = 100.0;
    let mut follower = AgentKinematics { link: 0, offset: 0.0, speed: 0.0 };
    let mut leader = 8.0;
    let leader_speed = 0.6;
    println!("lanes on a 2 m link: {}", params.lanes_for_width(2.0));
    println!("outflow bound on a 2 m link: {:.2} /s", params.max_outflow(2.0));
    for tick in 0..=300 {
        let gap = headway(follower.offset, length, Some(leader), None);
        if tick % 25 == 0 {
            println!(
                "t {:>5.1} s  follower {:>6.2} m at {:.2} m/s  gap {:.2} m",
                tick as f64 * DT,
                follower.offset,
                follower.speed,
                gap.unwrap_or(f64::INFINITY)
            );
        }
        follower = step_kinematics(follower, gap, &params, DT);
        leader += leader_speed * DT;
    }
}
