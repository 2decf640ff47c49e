use serde::{Deserialize, Serialize};

use super::{GridPath, PathError};
use crate::kinematics::wrap_angle;

/// Segment length and duration policy for the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedParams {
    /// Target arc length per segment, meters.
    pub segment_length: f64,
    /// Initial duration of every segment, seconds.
    pub initial_duration: f64,
    /// Lower bound on the segment count for non-degenerate paths.
    pub min_segments: usize,
    /// Clearance beyond the safety distance requested from the grid search.
    pub search_margin: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        SeedParams { segment_length: 1.0, initial_duration: 0.8, min_segments: 3, search_margin: 0.2 }
    }
}

/// Optimizer starting point derived from a polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    /// Interior junction values `[theta, s]`, one per junction (M-1 entries).
    pub waypoints: Vec<[f64; 2]>,
    pub durations: Vec<f64>,
    pub s_f: f64,
    /// Target end position of each segment (M entries, last is the goal).
    pub anchors: Vec<[f64; 2]>,
    /// Final heading, continuous with the waypoint sequence.
    pub theta_f: f64,
}

impl InitialGuess {
    pub fn num_segments(&self) -> usize {
        self.durations.len()
    }
}

/// Sample `path` into an initial guess. Headings follow the polyline tangent,
/// unwrapped against the previous heading starting from `theta0`. A goal
/// heading, when given, is unwrapped against the last junction heading.
pub fn seed_trajectory(
    path: &GridPath,
    theta0: f64,
    goal_heading: Option<f64>,
    params: &SeedParams,
) -> Result<InitialGuess, PathError> {
    if path.points.len() < 2 {
        return Err(PathError::TooShort(path.points.len()));
    }
    let goal = *path.points.last().unwrap();
    if path.length < 1e-6 {
        let theta_f = theta0 + wrap_angle(goal_heading.unwrap_or(theta0) - theta0);
        return Ok(InitialGuess {
            waypoints: Vec::new(),
            durations: vec![params.initial_duration],
            s_f: 0.0,
            anchors: vec![goal],
            theta_f,
        });
    }
    let m = ((path.length / params.segment_length).ceil() as usize).max(params.min_segments.max(1));
    let step = path.length / m as f64;
    let mut prev = theta0;
    let mut waypoints = Vec::with_capacity(m - 1);
    let mut anchors = Vec::with_capacity(m);
    for i in 1..=m {
        let s = if i == m { path.length } else { step * i as f64 };
        let (p, dir) = path.sample(s);
        anchors.push(if i == m { goal } else { p });
        if i < m {
            let heading = dir[1].atan2(dir[0]);
            let theta = prev + wrap_angle(heading - prev);
            waypoints.push([theta, s]);
            prev = theta;
        }
    }
    let final_heading = goal_heading.unwrap_or_else(|| {
        let (_, dir) = path.sample(path.length);
        dir[1].atan2(dir[0])
    });
    let theta_f = prev + wrap_angle(final_heading - prev);
    Ok(InitialGuess { waypoints, durations: vec![params.initial_duration; m], s_f: path.length, anchors, theta_f })
}
