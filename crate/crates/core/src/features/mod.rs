//! Route-choice factors: online extraction for evacuation decisions and
//! offline conversion of trajectory and choice logs into observations.

mod observations;

pub use observations::{
    evacuation_observations, firework_observations, read_choice_log, read_trajectories, write_choice_log,
    write_trajectories, ChoiceLogRow, EvacExtraction, ObservationBuild, TrajectorySample,
};

use crate::dcm::FeatureMatrix;

/// Factor order of the evacuation utility.
pub const EVAC_FACTORS: [&str; 4] = ["DIST", "CH", "NF", "NB"];
/// Factor order of the firework utility.
pub const FIREWORK_FACTORS: [&str; 3] = ["DIST", "GUIDE", "ATT"];

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown junction {0:?}")]
    UnknownJunction(String),
    #[error("row {row}: chosen alternative {chosen} out of range")]
    BadChoice { row: usize, chosen: usize },
    #[error("junctions offer different numbers of alternatives")]
    MixedAlternatives,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Dcm(#[from] crate::dcm::DcmError),
}

impl From<csv::Error> for FeatureError {
    fn from(e: csv::Error) -> Self {
        FeatureError::Format(e.to_string())
    }
}

/// Another pedestrian seen by the decision-maker, with its latest choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub position: [f64; 2],
    pub choice: usize,
}

/// Everything an evacuating pedestrian's route factors depend on.
#[derive(Debug, Clone, Copy)]
pub struct EvacDecisionContext<'a> {
    pub position: [f64; 2],
    /// Unit vector of the decision-maker's walking direction.
    pub heading: [f64; 2],
    /// Start point of each route alternative.
    pub route_starts: &'a [[f64; 2]],
    pub previous_choice: Option<usize>,
    /// Other pedestrians; only those within `sensing_radius` are counted.
    pub neighbors: &'a [Neighbor],
    pub sensing_radius: f64,
    /// DIST is reported in multiples of this many metres.
    pub distance_unit_m: f64,
}

/// Default radius within which other pedestrians' choices are perceived, m.
pub const DEFAULT_SENSING_RADIUS_M: f64 = 5.0;

/// (DIST, CH, NF, NB) for every route alternative.
///
/// NF and NB count neighbours whose latest choice is the alternative, split by
/// the sign of their offset projected onto the heading (strictly positive is
/// in front).
pub fn evac_features(ctx: &EvacDecisionContext<'_>) -> FeatureMatrix {
    let n_alt = ctx.route_starts.len();
    let mut x = FeatureMatrix::zeros(n_alt, EVAC_FACTORS.len());
    for (j, start) in ctx.route_starts.iter().enumerate() {
        let dist = (start[0] - ctx.position[0]).hypot(start[1] - ctx.position[1]);
        x.set(j, 0, dist / ctx.distance_unit_m);
        if ctx.previous_choice == Some(j) {
            x.set(j, 1, 1.0);
        }
    }
    let r2 = ctx.sensing_radius * ctx.sensing_radius;
    for nb in ctx.neighbors {
        if nb.choice >= n_alt {
            continue;
        }
        let dx = nb.position[0] - ctx.position[0];
        let dy = nb.position[1] - ctx.position[1];
        if dx * dx + dy * dy > r2 {
            continue;
        }
        let column = if dx * ctx.heading[0] + dy * ctx.heading[1] > 0.0 { 2 } else { 3 };
        x.set(nb.choice, column, x.get(nb.choice, column) + 1.0);
    }
    x
}

/// Index of the route whose start-point bearing from `position` is angularly
/// closest to `heading`. Ties go to the lower index.
pub fn closest_bearing(position: [f64; 2], heading: [f64; 2], route_starts: &[[f64; 2]]) -> usize {
    let heading_angle = heading[1].atan2(heading[0]);
    let mut best = 0;
    let mut best_diff = f64::INFINITY;
    for (j, s) in route_starts.iter().enumerate() {
        let bearing = (s[1] - position[1]).atan2(s[0] - position[0]);
        let mut diff = (bearing - heading_angle).abs() % std::f64::consts::TAU;
        if diff > std::f64::consts::PI {
            diff = std::f64::consts::TAU - diff;
        }
        if diff < best_diff {
            best = j;
            best_diff = diff;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const STARTS: [[f64; 2]; 2] = [[10.0, 0.0], [0.0, 10.0]];

    fn ctx<'a>(neighbors: &'a [Neighbor], previous: Option<usize>) -> EvacDecisionContext<'a> {
        EvacDecisionContext {
            position: [0.0, 0.0],
            heading: [1.0, 0.0],
            route_starts: &STARTS,
            previous_choice: previous,
            neighbors,
            sensing_radius: DEFAULT_SENSING_RADIUS_M,
            distance_unit_m: 1.0,
        }
    }

    #[test]
    fn front_and_rear_neighbour_on_route1() {
        let nbs = [
            Neighbor {
                position: [1.0, 0.2],
                choice: 0,
            },
            Neighbor {
                position: [-1.0, -0.3],
                choice: 0,
            },
        ];
        let x = evac_features(&ctx(&nbs, Some(0)));
        assert_eq!(x.row(0), &[10.0, 1.0, 1.0, 1.0]);
        assert_eq!(x.row(1), &[10.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn first_decision_without_neighbours() {
        let x = evac_features(&ctx(&[], None));
        for j in 0..2 {
            assert_eq!(&x.row(j)[1..], &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn all_ahead_choosing_route2() {
        let nbs: Vec<Neighbor> = (1..=4)
            .map(|i| Neighbor {
                position: [i as f64, 0.5 * i as f64 - 1.0],
                choice: 1,
            })
            .collect();
        let x = evac_features(&ctx(&nbs, None));
        let front = nbs.iter().filter(|n| n.position[0] > 0.0 && n.position[0].hypot(n.position[1]) <= 5.0).count();
        assert_eq!(front, 4);
        assert_eq!(x.get(1, 2), 4.0);
        assert_eq!(x.get(1, 3), 0.0);
    }

    #[test]
    fn neighbours_outside_radius_ignored() {
        let nbs = [Neighbor {
            position: [5.1, 0.0],
            choice: 0,
        }];
        assert_eq!(evac_features(&ctx(&nbs, None)).get(0, 2), 0.0);
    }

    #[test]
    fn bearing_ties_go_low() {
        assert_eq!(closest_bearing([0.0, 0.0], [1.0, 1.0], &STARTS), 0);
        assert_eq!(closest_bearing([0.0, 0.0], [0.1, 1.0], &STARTS), 1);
        assert_eq!(closest_bearing([0.0, 0.0], [-1.0, -0.01], &[[-5.0, 1.0], [-5.0, -1.0]]), 1);
    }

    fn rigid(p: [f64; 2], angle: f64, shift: [f64; 2]) -> [f64; 2] {
        let (s, c) = angle.sin_cos();
        [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]]
    }

    proptest! {
        #[test]
        fn counts_and_rigid_invariance(
            positions in proptest::collection::vec((-6.0f64..6.0, -6.0f64..6.0, 0usize..2), 0..12),
            angle in 0.0f64..std::f64::consts::TAU,
            sx in -50.0f64..50.0,
            sy in -50.0f64..50.0,
            hx in -1.0f64..1.0,
        ) {
            let nbs: Vec<Neighbor> = positions
                .iter()
                .map(|&(x, y, c)| Neighbor { position: [x, y], choice: c })
                .collect();
            let hy = (1.0 - hx * hx).sqrt();
            let starts = [[4.0, 1.0], [-2.0, 7.0]];
            let base = EvacDecisionContext {
                position: [0.3, -0.2],
                heading: [hx, hy],
                route_starts: &starts,
                previous_choice: Some(1),
                neighbors: &nbs,
                sensing_radius: 5.0,
                distance_unit_m: 1.0,
            };
            let x = evac_features(&base);
            let in_range = nbs
                .iter()
                .filter(|n| (n.position[0] - 0.3).hypot(n.position[1] + 0.2) <= 5.0)
                .count() as f64;
            let counted: f64 = (0..2).map(|j| x.get(j, 2) + x.get(j, 3)).sum();
            prop_assert_eq!(counted, in_range);
            prop_assert_eq!(x.get(0, 1) + x.get(1, 1), 1.0);

            let moved_nbs: Vec<Neighbor> = nbs
                .iter()
                .map(|n| Neighbor { position: rigid(n.position, angle, [sx, sy]), choice: n.choice })
                .collect();
            let moved_starts = [rigid(starts[0], angle, [sx, sy]), rigid(starts[1], angle, [sx, sy])];
            let h = rigid([hx, hy], angle, [0.0, 0.0]);
            let moved = EvacDecisionContext {
                position: rigid(base.position, angle, [sx, sy]),
                heading: h,
                route_starts: &moved_starts,
                neighbors: &moved_nbs,
                ..base
            };
            let y = evac_features(&moved);
            for j in 0..2 {
                prop_assert!((x.get(j, 0) - y.get(j, 0)).abs() < 1e-9);
                for k in 1..4 {
                    // points sitting on the radius or the split line can flip under rounding
                    let near_edge = nbs.iter().any(|n| {
                        let (dx, dy) = (n.position[0] - 0.3, n.position[1] + 0.2);
                        (dx.hypot(dy) - 5.0).abs() < 1e-9 || (dx * hx + dy * hy).abs() < 1e-9
                    });
                    if !near_edge {
                        prop_assert_eq!(x.get(j, k), y.get(j, k));
                    }
                }
            }
        }
    }
}
