//! Desired trap trajectories and the step-count and speed criteria.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `10 s^3 - 15 s^4 + 6 s^5`, zero velocity and acceleration at both ends.
    Smoothstep,
    Linear,
    /// `(1 - cos(pi s)) / 2`
    Cosine,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Smoothstep => "smoothstep",
            ScheduleKind::Linear => "linear",
            ScheduleKind::Cosine => "cosine",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoothstep" => Ok(ScheduleKind::Smoothstep),
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::Config {
                field: "schedule",
                message: format!("unknown schedule `{other}` (expected smoothstep, linear or cosine)"),
            }),
        }
    }
}

/// Fraction of the path covered at normalized time `s`.
pub fn schedule_value(kind: ScheduleKind, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::domain(format!("schedule parameter {s} outside [0, 1]")));
    }
    Ok(match kind {
        ScheduleKind::Smoothstep => s * s * s * (10.0 + s * (-15.0 + 6.0 * s)),
        ScheduleKind::Linear => s,
        ScheduleKind::Cosine => 0.5 * (1.0 - (PI * s).cos()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    /// Initial trap minimum, m.
    pub start: Vector3<f64>,
    /// Total displacement, m.
    pub displacement: Vector3<f64>,
    pub step_count: usize,
    pub kind: ScheduleKind,
    /// Transport durations to evaluate, s.
    pub durations: Vec<f64>,
}

impl TransportPlan {
    pub fn validate(&self) -> Result<()> {
        if self.step_count < 1 {
            return Err(Error::Config {
                field: "steps",
                message: "step count must be at least 1".into(),
            });
        }
        if let Some(t) = self.durations.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Config {
                field: "durations",
                message: format!("durations must be positive, got {t}"),
            });
        }
        Ok(())
    }
}

/// `N + 1` samples `start + schedule(i / N) * displacement`, endpoints exact.
pub fn desired_trajectory(plan: &TransportPlan) -> Result<Vec<Vector3<f64>>> {
    plan.validate()?;
    let n = plan.step_count;
    (0..=n)
        .map(|i| {
            if i == n {
                return Ok(plan.start + plan.displacement);
            }
            let f = schedule_value(plan.kind, i as f64 / n as f64)?;
            Ok(plan.start + plan.displacement * f)
        })
        .collect()
}

/// `ceil(margin * delta_x / r_tf)`: steps needed to keep every increment a
/// `1/margin` fraction of the condensate radius.
pub fn minimum_step_count(delta_x: f64, r_tf: f64, margin: f64) -> Result<usize> {
    if !(delta_x > 0.0 && r_tf > 0.0 && margin > 0.0) {
        return Err(Error::domain(format!(
            "step-count inputs must be positive (delta_x={delta_x}, r_tf={r_tf}, margin={margin})"
        )));
    }
    Ok((margin * delta_x / r_tf).ceil() as usize)
}

/// Per-step displacement divided by `T / N`, m/s. One entry per step.
pub fn step_velocities(trajectory: &[Vector3<f64>], duration: f64) -> Result<Vec<Vector3<f64>>> {
    if trajectory.len() < 2 {
        return Err(Error::domain("a trajectory needs at least two samples"));
    }
    if !(duration > 0.0) {
        return Err(Error::domain(format!("duration must be positive, got {duration}")));
    }
    let steps = (trajectory.len() - 1) as f64;
    Ok(trajectory
        .windows(2)
        .map(|w| (w[1] - w[0]) * steps / duration)
        .collect())
}
