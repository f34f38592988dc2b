// SPDX-License-Identifier: Apache-2.0

//! Sampled trade-off curves over an NDS-rate grid and their maxima.

use serde::{Deserialize, Serialize};

use crate::analytics::{self, LinkLoad, ServiceModel};
use crate::error::{Error, Result};

/// Evaluations of a trade-off objective (g or f) over increasing NDS rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCurve {
    pub lambda_b_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Location of the maximum, refined by a parabolic fit when interior.
    pub argmax_rate: f64,
    pub argmax_value: f64,
    /// Index of the largest sample.
    pub argmax_index: usize,
}

impl GainCurve {
    pub fn new(lambda_b_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if lambda_b_grid.is_empty() || lambda_b_grid.len() != values.len() {
            return Err(Error::InvalidArgument(format!(
                "curve needs matching non-empty grid and values ({} vs {})",
                lambda_b_grid.len(),
                values.len()
            )));
        }
        if lambda_b_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "curve grid must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("curve values must be finite".into()));
        }
        let argmax_index = discrete_argmax(&values);
        let (argmax_rate, argmax_value) = refine_peak(&lambda_b_grid, &values, argmax_index);
        Ok(Self {
            lambda_b_grid,
            values,
            argmax_rate,
            argmax_value,
            argmax_index,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid point holding the largest sample, without refinement.
    pub fn grid_argmax(&self) -> f64 {
        self.lambda_b_grid[self.argmax_index]
    }

    /// True when the largest sample is neither the first nor the last one.
    pub fn has_interior_max(&self) -> bool {
        self.argmax_index > 0 && self.argmax_index + 1 < self.len()
    }

    /// Number of direction reversals beyond `tolerance` after the first rise.
    /// A unimodal curve has at most one (rise then fall).
    pub fn trend_changes(&self, tolerance: f64) -> usize {
        let mut changes = 0;
        let mut last_sign = 0i8;
        for w in self.values.windows(2) {
            let d = w[1] - w[0];
            let sign = if d > tolerance {
                1
            } else if d < -tolerance {
                -1
            } else {
                continue;
            };
            if last_sign != 0 && sign != last_sign {
                changes += 1;
            }
            last_sign = sign;
        }
        changes
    }
}

/// Divides every value by the curve maximum.
pub fn normalize_curve(curve: &GainCurve) -> Result<GainCurve> {
    let max = curve.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::DegenerateCurve);
    }
    let values = curve.values.iter().map(|v| v / max).collect();
    GainCurve::new(curve.lambda_b_grid.clone(), values)
}

/// Index of the first largest value.
pub fn discrete_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Vertex of the parabola through three points with `x0 < x1 < x2`.
/// Returns `None` unless the parabola is concave.
pub fn parabolic_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> Option<(f64, f64)> {
    let (x0, y0) = p0;
    let (x1, y1) = p1;
    let (x2, y2) = p2;
    // Newton divided differences.
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curvature = (d12 - d01) / (x2 - x0);
    if !(curvature < 0.0) || !curvature.is_finite() {
        return None;
    }
    let slope = d01 - curvature * (x0 + x1);
    let x = -slope / (2.0 * curvature);
    let y = y0 + d01 * (x - x0) + curvature * (x - x0) * (x - x1);
    if x.is_finite() && y.is_finite() {
        Some((x, y))
    } else {
        None
    }
}

/// Sub-grid peak location around sample `idx`. Falls back to the grid point at
/// the curve ends or when the local fit is not concave.
pub fn refine_peak(grid: &[f64], values: &[f64], idx: usize) -> (f64, f64) {
    let fallback = (grid[idx], values[idx]);
    if idx == 0 || idx + 1 >= grid.len() {
        return fallback;
    }
    match parabolic_vertex(
        (grid[idx - 1], values[idx - 1]),
        (grid[idx], values[idx]),
        (grid[idx + 1], values[idx + 1]),
    ) {
        Some((x, y)) if x >= grid[idx - 1] && x <= grid[idx + 1] => (x, y.max(values[idx])),
        _ => fallback,
    }
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
pub fn uniform_grid(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        n => {
            let span = stop - start;
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + span * (i as f64) / last })
                .collect()
        }
    }
}

/// g over `[0, λb⁺]` with `points` samples.
pub fn analytic_g_curve(lambda_s: f64, svc: &ServiceModel, points: usize) -> Result<GainCurve> {
    let bplus = analytics::max_alloc(lambda_s, svc)?;
    let grid = uniform_grid(0.0, bplus, points);
    let values = grid
        .iter()
        .map(|&b| analytics::gain(LinkLoad::new(lambda_s, b)?, svc))
        .collect::<Result<Vec<_>>>()?;
    GainCurve::new(grid, values)
}

/// f with closed-form delays over `[0, λb⁺]` with `points` samples.
pub fn analytic_f_curve(lambda_s: f64, svc: &ServiceModel, points: usize) -> Result<GainCurve> {
    let bplus = analytics::max_alloc(lambda_s, svc)?;
    let grid = uniform_grid(0.0, bplus, points);
    let delay = analytics::analytic_delay(lambda_s, *svc);
    let values = grid
        .iter()
        .map(|&b| analytics::f_alt(b.min(bplus), bplus, &delay))
        .collect::<Result<Vec<_>>>()?;
    GainCurve::new(grid, values)
}
