//! Bounded multistart Nelder-Mead.
//!
//! Each coordinate is mapped onto its interval through a logistic transform, so the
//! simplex moves in an unbounded space while every probed point stays strictly inside
//! the box. Starts are the box center followed by a seeded Halton sequence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("objective returned {value} at {x:?}")]
    NonFiniteObjective { x: Vec<f64>, value: f64 },
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("starts must be >= 1")]
    NoStarts,
}

/// Axis-aligned box `lower[i] < upper[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OptimError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(OptimError::InvalidBounds(format!(
                "lower has {} entries, upper has {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(OptimError::InvalidBounds(format!("coordinate {i}: [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, OptimError> {
        Self::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| v > l && v < u)
    }

    fn to_box(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&zi, (&l, &u))| {
                let s = 1.0 / (1.0 + (-zi).exp());
                let x = l + (u - l) * s;
                x.clamp(l.next_up(), u.next_down())
            })
            .collect()
    }

    fn unit_to_free(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter().map(|&s| (s / (1.0 - s)).ln()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub starts: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { starts: 16, tol: 1e-8, max_iter: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub starts_tried: usize,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `dim <= 16` dimensions.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "halton sequence supports at most {} dimensions", PRIMES.len());
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

fn halton_offset(seed: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    1 + z % 65_536
}

/// Start points in box coordinates: the center, then `starts` Halton points.
pub fn start_points(bounds: &Bounds, starts: usize, seed: u64) -> Vec<Vec<f64>> {
    let offset = halton_offset(seed);
    let mut pts = vec![bounds.center()];
    for k in 0..starts as u64 {
        let unit = halton(offset + k, bounds.dim());
        pts.push(unit.iter().zip(bounds.lower.iter().zip(&bounds.upper)).map(|(s, (l, u))| l + s * (u - l)).collect());
    }
    pts
}

struct LocalResult {
    z: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn eval<F: Fn(&[f64]) -> f64>(objective: &F, bounds: &Bounds, z: &[f64]) -> Result<f64, OptimError> {
    let x = bounds.to_box(z);
    let value = objective(&x);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(OptimError::NonFiniteObjective { x, value })
    }
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(
    objective: &F,
    bounds: &Bounds,
    z0: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<LocalResult, OptimError> {
    const STEP: f64 = 0.75;
    let n = z0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(objective, bounds, &z0)?;
    simplex.push((z0.clone(), f0));
    for i in 0..n {
        let mut z = z0.clone();
        z[i] += STEP;
        let f = eval(objective, bounds, &z)?;
        simplex.push((z, f));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best_x = bounds.to_box(&simplex[0].0);
        let f_spread = simplex.iter().map(|(_, f)| (f - simplex[0].1).abs()).fold(0.0, f64::max);
        let x_spread = simplex[1..]
            .iter()
            .map(|(z, _)| bounds.to_box(z).iter().zip(&best_x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if f_spread <= tol && x_spread <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(z, _)| z[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect() };

        let zr = along(1.0);
        let fr = eval(objective, bounds, &zr)?;
        if fr < simplex[0].1 {
            let ze = along(2.0);
            let fe = eval(objective, bounds, &ze)?;
            simplex[n] = if fe < fr { (ze, fe) } else { (zr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (zr, fr);
            continue;
        }
        let (zc, fc) = if fr < worst.1 {
            let zc = along(0.5);
            let fc = eval(objective, bounds, &zc)?;
            (zc, fc)
        } else {
            let zc = along(-0.5);
            let fc = eval(objective, bounds, &zc)?;
            (zc, fc)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (zc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            let z: Vec<f64> = best.iter().zip(&entry.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
            let f = eval(objective, bounds, &z)?;
            *entry = (z, f);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (z, f) = simplex.swap_remove(0);
    Ok(LocalResult { z, f, iterations, converged })
}

/// Minimize `objective` over `bounds` from the box center plus `opts.starts` quasi-random starts.
///
/// Returns the best terminal point; ties keep the earlier start.
pub fn minimize<F: Fn(&[f64]) -> f64>(
    objective: F,
    bounds: &Bounds,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult, OptimError> {
    if opts.starts < 1 {
        return Err(OptimError::NoStarts);
    }
    let mut best: Option<LocalResult> = None;
    let mut iterations = 0;
    let starts = start_points(bounds, opts.starts, opts.seed);
    let starts_tried = starts.len();
    for start in starts {
        let unit: Vec<f64> =
            start.iter().zip(bounds.lower.iter().zip(&bounds.upper)).map(|(x, (l, u))| (x - l) / (u - l)).collect();
        let local = nelder_mead(&objective, bounds, bounds.unit_to_free(&unit), opts.tol, opts.max_iter)?;
        iterations += local.iterations;
        if best.as_ref().is_none_or(|b| local.f < b.f) {
            best = Some(local);
        }
    }
    let best = best.expect("at least one start");
    let x = bounds.to_box(&best.z);
    let f = objective(&x);
    if !f.is_finite() {
        return Err(OptimError::NonFiniteObjective { x, value: f });
    }
    Ok(MinimizeResult { x, f, iterations, converged: best.converged, starts_tried })
}
