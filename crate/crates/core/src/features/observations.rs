use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{closest_bearing, evac_features, EvacDecisionContext, FeatureError, Neighbor, DEFAULT_SENSING_RADIUS_M};
use crate::dcm::ChoiceObservation;
use crate::network::Network;

/// One row of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub id: u64,
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
}

/// One junction crossing of a firework-style choice log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceLogRow {
    pub id: String,
    pub t_s: f64,
    pub junction_id: String,
    pub chosen: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvacExtraction {
    /// Decision cadence, s.
    pub window_s: f64,
    pub sensing_radius_m: f64,
    /// Windows with less displacement reuse the previous heading.
    pub min_displacement_m: f64,
    pub distance_unit_m: f64,
}

impl Default for EvacExtraction {
    fn default() -> Self {
        Self {
            window_s: 0.5,
            sensing_radius_m: DEFAULT_SENSING_RADIUS_M,
            min_displacement_m: 0.05,
            distance_unit_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ObservationBuild {
    pub observations: Vec<ChoiceObservation>,
    /// Agents with fewer than two samples.
    pub skipped_agents: usize,
    /// Stationary windows with no earlier heading to carry over.
    pub skipped_windows: usize,
}

struct Track {
    id: u64,
    samples: Vec<TrajectorySample>,
}

impl Track {
    fn position_at(&self, t: f64) -> Option<[f64; 2]> {
        let s = &self.samples;
        if t < s[0].t_s - 1e-9 || t > s[s.len() - 1].t_s + 1e-9 {
            return None;
        }
        let i = s.partition_point(|p| p.t_s <= t).clamp(1, s.len() - 1);
        let (a, b) = (&s[i - 1], &s[i]);
        let span = b.t_s - a.t_s;
        let f = if span > 0.0 { ((t - a.t_s) / span).clamp(0.0, 1.0) } else { 0.0 };
        Some([a.x_m + f * (b.x_m - a.x_m), a.y_m + f * (b.y_m - a.y_m)])
    }
}

struct Window {
    t: f64,
    position: [f64; 2],
    heading: [f64; 2],
    choice: usize,
}

/// Repeated-decision observations from trajectories: one per agent per
/// window, chosen route given by the walking direction over the window.
pub fn evacuation_observations(
    samples: &[TrajectorySample],
    route_starts: &[[f64; 2]],
    options: &EvacExtraction,
) -> ObservationBuild {
    let mut order: Vec<u64> = Vec::new();
    let mut by_id: HashMap<u64, Vec<TrajectorySample>> = HashMap::new();
    for s in samples {
        by_id
            .entry(s.id)
            .or_insert_with(|| {
                order.push(s.id);
                Vec::new()
            })
            .push(*s);
    }

    let mut build = ObservationBuild::default();
    let mut tracks = Vec::new();
    for id in order {
        let mut samples = by_id.remove(&id).unwrap_or_default();
        if samples.len() < 2 {
            build.skipped_agents += 1;
            continue;
        }
        samples.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
        tracks.push(Track { id, samples });
    }

    // First pass: headings and chosen routes per window.
    let windows: Vec<Vec<Window>> = tracks
        .iter()
        .map(|track| {
            let t0 = track.samples[0].t_s;
            let t_end = track.samples[track.samples.len() - 1].t_s;
            let n_windows = ((t_end - t0) / options.window_s + 1e-9).floor() as usize;
            let mut out = Vec::with_capacity(n_windows);
            let mut heading: Option<[f64; 2]> = None;
            for n in 0..n_windows {
                let t = t0 + n as f64 * options.window_s;
                let a = track.position_at(t).expect("inside track");
                let b = track.position_at(t + options.window_s).expect("inside track");
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let len = dx.hypot(dy);
                if len >= options.min_displacement_m {
                    heading = Some([dx / len, dy / len]);
                }
                match heading {
                    Some(h) => out.push(Window {
                        t,
                        position: a,
                        heading: h,
                        choice: closest_bearing(a, h, route_starts),
                    }),
                    None => build.skipped_windows += 1,
                }
            }
            out
        })
        .collect();

    // Second pass: factors, using each neighbour's latest choice made
    // strictly before the decision time.
    let latest_choice = |w: &[Window], t: f64| -> Option<usize> {
        let i = w.partition_point(|x| x.t < t - 1e-9);
        (i > 0).then(|| w[i - 1].choice)
    };
    for (a, track) in tracks.iter().enumerate() {
        for (n, win) in windows[a].iter().enumerate() {
            let previous_choice = n
                .checked_sub(1)
                .map(|p| &windows[a][p])
                .filter(|p| (win.t - p.t - options.window_s).abs() < 1e-6)
                .map(|p| p.choice);
            let neighbors: Vec<Neighbor> = tracks
                .iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .filter_map(|(b, other)| {
                    Some(Neighbor {
                        position: other.position_at(win.t)?,
                        choice: latest_choice(&windows[b], win.t)?,
                    })
                })
                .collect();
            let ctx = EvacDecisionContext {
                position: win.position,
                heading: win.heading,
                route_starts,
                previous_choice,
                neighbors: &neighbors,
                sensing_radius: options.sensing_radius_m,
                distance_unit_m: options.distance_unit_m,
            };
            let obs = ChoiceObservation::new(track.id.to_string(), win.t, evac_features(&ctx), win.choice)
                .expect("features built for every route");
            build.observations.push(obs);
        }
    }
    build
}

/// One-shot junction observations with (DIST, GUIDE, ATT) evaluated at the
/// crossing time.
pub fn firework_observations(
    rows: &[ChoiceLogRow],
    network: &Network,
    distance_unit_m: f64,
) -> Result<Vec<ChoiceObservation>, FeatureError> {
    let n_alt = network.junctions().first().map(|j| j.alternatives.len());
    if network.junctions().iter().any(|j| Some(j.alternatives.len()) != n_alt) {
        return Err(FeatureError::MixedAlternatives);
    }
    rows.iter()
        .enumerate()
        .map(|(row, r)| {
            let junction = network
                .junction_index(&r.junction_id)
                .ok_or_else(|| FeatureError::UnknownJunction(r.junction_id.clone()))?;
            if r.chosen >= network.junctions()[junction].alternatives.len() {
                return Err(FeatureError::BadChoice { row: row + 1, chosen: r.chosen });
            }
            let x = network.junction_features(junction, r.t_s, distance_unit_m);
            Ok(ChoiceObservation::new(r.id.clone(), r.t_s, x, r.chosen)?)
        })
        .collect()
}

pub fn read_trajectories<R: Read>(reader: R) -> Result<Vec<TrajectorySample>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let rows = rdr.deserialize().collect::<Result<Vec<TrajectorySample>, _>>()?;
    if rows.iter().any(|r| !(r.t_s.is_finite() && r.x_m.is_finite() && r.y_m.is_finite())) {
        return Err(FeatureError::Format("non-finite trajectory value".into()));
    }
    Ok(rows)
}

pub fn write_trajectories<W: Write>(writer: W, rows: &[TrajectorySample]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| FeatureError::Format(e.to_string()))
}

pub fn read_choice_log<R: Read>(reader: R) -> Result<Vec<ChoiceLogRow>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<Vec<ChoiceLogRow>, _>>()?)
}

pub fn write_choice_log<W: Write>(writer: W, rows: &[ChoiceLogRow]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| FeatureError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const STARTS: [[f64; 2]; 2] = [[10.0, 0.0], [5.0, 8.0]];

    fn walk(id: u64, from: [f64; 2], velocity: [f64; 2], t0: f64, seconds: f64, hz: f64) -> Vec<TrajectorySample> {
        let n = (seconds * hz).round() as usize;
        (0..=n)
            .map(|i| {
                let dt = i as f64 / hz;
                TrajectorySample {
                    id,
                    t_s: t0 + dt,
                    x_m: from[0] + velocity[0] * dt,
                    y_m: from[1] + velocity[1] * dt,
                }
            })
            .collect()
    }

    #[test]
    fn straight_walk_to_route1() {
        let samples = walk(1, [0.0, 0.0], [1.0, 0.0], 0.0, 5.0, 2.0);
        let build = evacuation_observations(&samples, &STARTS, &EvacExtraction::default());
        assert_eq!(build.observations.len(), 10);
        assert!(build.observations.iter().all(|o| o.chosen == 0));
        // CH set from the second decision on
        assert_eq!(build.observations[0].features.get(0, 1), 0.0);
        assert!(build.observations[1..].iter().all(|o| o.features.get(0, 1) == 1.0));
    }

    #[test]
    fn turning_path_flips_at_bisector() {
        // walk along +x, then turn toward (5, 8)
        let mut samples = Vec::new();
        let mut pos = [0.0, 0.0];
        let mut t = 0.0;
        let dt = 0.1;
        while t <= 6.0 + 1e-9 {
            samples.push(TrajectorySample {
                id: 3,
                t_s: t,
                x_m: pos[0],
                y_m: pos[1],
            });
            let v = if t < 2.95 { [1.0, 0.0] } else { [0.3, 1.0] };
            pos = [pos[0] + v[0] * dt, pos[1] + v[1] * dt];
            t += dt;
        }
        let build = evacuation_observations(&samples, &STARTS, &EvacExtraction::default());

        // independent oracle: compare absolute bearing differences in degrees
        let oracle = |p: [f64; 2], h: [f64; 2]| {
            let ang = |v: [f64; 2]| v[1].atan2(v[0]).to_degrees();
            let diff = |a: f64, b: f64| {
                let d = (a - b).rem_euclid(360.0);
                d.min(360.0 - d)
            };
            let d0 = diff(ang([STARTS[0][0] - p[0], STARTS[0][1] - p[1]]), ang(h));
            let d1 = diff(ang([STARTS[1][0] - p[0], STARTS[1][1] - p[1]]), ang(h));
            usize::from(d1 < d0)
        };
        let chosen: Vec<usize> = build.observations.iter().map(|o| o.chosen).collect();
        let expected: Vec<usize> = build
            .observations
            .iter()
            .map(|o| {
                let t = o.time;
                let at = |t: f64| {
                    let i = samples.iter().position(|s| (s.t_s - t).abs() < 1e-6).unwrap();
                    [samples[i].x_m, samples[i].y_m]
                };
                let (a, b) = (at(t), at(t + 0.5));
                oracle(a, [b[0] - a[0], b[1] - a[1]])
            })
            .collect();
        assert_eq!(chosen, expected);
        assert_eq!(chosen.first(), Some(&0));
        assert_eq!(chosen.last(), Some(&1));
        let flips = chosen.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(flips, 1);
    }

    #[test]
    fn short_tracks_and_stationary_windows() {
        let mut samples = vec![TrajectorySample {
            id: 9,
            t_s: 0.0,
            x_m: 0.0,
            y_m: 0.0,
        }];
        // stands still for one second, then walks
        samples.extend(walk(4, [0.0, 0.0], [0.0, 0.0], 0.0, 1.0, 2.0));
        samples.extend(walk(4, [0.0, 0.0], [1.0, 0.0], 1.5, 1.0, 2.0));
        let build = evacuation_observations(&samples, &STARTS, &EvacExtraction::default());
        assert_eq!(build.skipped_agents, 1);
        assert_eq!(build.skipped_windows, 3);
        assert_eq!(build.observations.len(), 2);
    }

    #[test]
    fn neighbours_use_earlier_choices() {
        let mut samples = walk(1, [0.0, 0.0], [1.0, 0.0], 0.0, 3.0, 2.0);
        samples.extend(walk(2, [2.0, 0.0], [1.0, 0.0], 0.0, 3.0, 2.0));
        let build = evacuation_observations(&samples, &STARTS, &EvacExtraction::default());
        let first_of_1 = &build.observations[0];
        assert_eq!(first_of_1.features.get(0, 2), 0.0);
        let second_of_1 = build.observations.iter().find(|o| o.individual_id == "1" && o.time == 0.5).unwrap();
        assert_eq!(second_of_1.features.get(0, 2), 1.0);
        let second_of_2 = build.observations.iter().find(|o| o.individual_id == "2" && o.time == 0.5).unwrap();
        assert_eq!(second_of_2.features.get(0, 3), 1.0);
    }

    #[test]
    fn log_files_round_trip() {
        let samples = walk(5, [1.5, -2.0], [0.7, 0.1], 10.0, 1.0, 4.0);
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &samples).unwrap();
        assert!(buf.starts_with(b"id,t_s,x_m,y_m\n"));
        assert_eq!(read_trajectories(buf.as_slice()).unwrap(), samples);

        let rows = vec![ChoiceLogRow {
            id: "a".into(),
            t_s: 12.5,
            junction_id: "J1".into(),
            chosen: 1,
        }];
        let mut buf = Vec::new();
        write_choice_log(&mut buf, &rows).unwrap();
        assert!(buf.starts_with(b"id,t_s,junction_id,chosen\n"));
        assert_eq!(read_choice_log(buf.as_slice()).unwrap(), rows);
    }
}
