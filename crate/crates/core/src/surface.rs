//! Plain gradient descent on two-dimensional analytic surfaces.

use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::schedules::{LrPolicy, ScheduleError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurfaceError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid surface: {0}")]
    InvalidSurface(String),
    #[error("a trajectory needs at least one step")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Surface {
    /// `f(p) = ½ pᵀ H p` for a symmetric positive-definite `H`.
    Quadratic { h: [[f64; 2]; 2] },
    /// `f(x, y) = (x² − 1)² + y²`, minima at `(±1, 0)`.
    DoubleWell,
}

impl Surface {
    pub fn quadratic(h: [[f64; 2]; 2]) -> Result<Self, SurfaceError> {
        let s = Surface::Quadratic { h };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SurfaceError> {
        if let Surface::Quadratic { h } = self {
            if h.iter().flatten().any(|v| !v.is_finite()) || h[0][1] != h[1][0] {
                return Err(SurfaceError::InvalidSurface("H must be finite and symmetric".into()));
            }
            let (lo, _) = symmetric_eigenvalues(h);
            if !(lo > 0.0) {
                return Err(SurfaceError::InvalidSurface(format!(
                    "H must be positive definite (smallest eigenvalue {lo})"
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, p: [f64; 2]) -> f64 {
        match self {
            Surface::Quadratic { h } => {
                0.5 * (h[0][0] * p[0] * p[0] + 2.0 * h[0][1] * p[0] * p[1] + h[1][1] * p[1] * p[1])
            }
            Surface::DoubleWell => (p[0] * p[0] - 1.0).powi(2) + p[1] * p[1],
        }
    }

    pub fn gradient(&self, p: [f64; 2]) -> [f64; 2] {
        match self {
            Surface::Quadratic { h } => {
                [h[0][0] * p[0] + h[0][1] * p[1], h[1][0] * p[0] + h[1][1] * p[1]]
            }
            Surface::DoubleWell => [4.0 * p[0] * (p[0] * p[0] - 1.0), 2.0 * p[1]],
        }
    }

    /// Largest Hessian eigenvalue for a quadratic; `None` otherwise.
    pub fn max_curvature(&self) -> Option<f64> {
        match self {
            Surface::Quadratic { h } => Some(symmetric_eigenvalues(h).1),
            Surface::DoubleWell => None,
        }
    }
}

fn symmetric_eigenvalues(h: &[[f64; 2]; 2]) -> (f64, f64) {
    let mean = 0.5 * (h[0][0] + h[1][1]);
    let radius = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[0][1]).sqrt();
    (mean - radius, mean + radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: u64,
    pub x: f64,
    pub y: f64,
    pub f: f64,
    /// Rate applied in the step leaving this point.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub const CSV_HEADER: [&'static str; 5] = ["t", "x", "y", "f", "lr"];

    pub fn last(&self) -> Option<[f64; 2]> {
        self.points.last().map(|p| [p.x, p.y])
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for p in &self.points {
            w.write_record([p.t.to_string(), p.x.to_string(), p.y.to_string(), p.f.to_string(), p.lr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `steps` iterations of `p ← p − lr_at(t)·∇f(p)` and records all
/// `steps + 1` points.
pub fn simulate(surface: &Surface, policy: &LrPolicy, x0: [f64; 2], steps: u64) -> Result<Trajectory, SurfaceError> {
    surface.validate()?;
    policy.validate().into_result()?;
    if steps == 0 {
        return Err(SurfaceError::NoSteps);
    }
    let mut p = x0;
    let mut points = Vec::with_capacity(steps as usize + 1);
    for t in 0..=steps {
        let lr = policy.lr_at(t)?;
        points.push(TrajectoryPoint { t, x: p[0], y: p[1], f: surface.value(p), lr });
        if t < steps {
            let g = surface.gradient(p);
            p = [p[0] - lr * g[0], p[1] - lr * g[1]];
        }
    }
    Ok(Trajectory { points })
}

/// Whether the final point lies within Euclidean distance `tol` of `target`.
pub fn converged_to(trajectory: &Trajectory, target: [f64; 2], tol: f64) -> bool {
    match trajectory.last() {
        Some(p) if tol > 0.0 => ((p[0] - target[0]).powi(2) + (p[1] - target[1]).powi(2)).sqrt() <= tol,
        _ => false,
    }
}

/// Double-well basin of a point: -1 left of the ridge, +1 right of it.
pub fn double_well_basin(p: [f64; 2]) -> i8 {
    if p[0] < 0.0 {
        -1
    } else {
        1
    }
}

/// The three comparison policies (constant, multi-step, damped triangle).
pub fn default_policies() -> Vec<(&'static str, LrPolicy)> {
    vec![
        ("FIX", LrPolicy::fix(0.025)),
        ("NSTEP", LrPolicy::nstep(0.05, 0.1, vec![150, 180])),
        ("TRIEXP", LrPolicy::triexp(0.05, 0.3, 0.94, 100)),
    ]
}

pub const DEFAULT_STEPS: u64 = 200;

/// Seeded start on the outer slope of the left double-well basin.
pub fn seeded_start(seed: u64) -> [f64; 2] {
    let mut r = rng::stream(seed, "surface/start");
    [r.random_range(-2.65..-2.5), r.random_range(-1.0..1.0)]
}
