//! Motion metrics: log dimensionless jerk over a window, transition windows
//! around segment boundaries, raw-feature diversity and Frechet distance, and
//! per-frame speed/jerk profiles.

use std::fmt::Write as _;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::codebook::MotionTrajectory;
use crate::error::{param, Result};

pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_WINDOW: usize = 40;
pub const DEFAULT_FPS: f64 = 20.0;

/// Covariance diagonal loading applied when a covariance is rank deficient.
const COV_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JerkReport {
    /// `ln(max(integral, eps) / max(v_peak^2, eps))` per joint.
    pub per_joint: Vec<f64>,
    /// Sum of `per_joint`.
    pub total: f64,
    pub window: (usize, usize),
    pub fps: f64,
    pub eps: f64,
    /// Joints whose jerk integral hit the `eps` floor.
    pub floored: Vec<bool>,
}

/// Log dimensionless jerk over frames `window` (half-open).
///
/// Derivatives are central differences using only frames inside the window
/// (velocity needs one neighbour each side, jerk two), the squared jerk norm
/// is integrated with the trapezoid rule, and `v_peak` is the largest joint
/// speed inside the window.
pub fn jerk(traj: &MotionTrajectory, window: Range<usize>, eps: f64) -> Result<JerkReport> {
    if window.end > traj.len() || window.start >= window.end {
        return Err(param(format!(
            "window {window:?} not inside a trajectory of {} frames",
            traj.len()
        )));
    }
    if window.len() < 5 {
        return Err(param(format!(
            "window has {} frames, need >= 5",
            window.len()
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(param("eps must be positive"));
    }
    let x = traj.frames();
    let dt = 1.0 / traj.fps();
    let jd = traj.joint_dim();
    let (s, e) = (window.start, window.end);
    let mut per_joint = Vec::with_capacity(traj.num_joints());
    let mut floored = Vec::with_capacity(traj.num_joints());
    for p in 0..traj.num_joints() {
        let cols = p * jd..(p + 1) * jd;
        let mut v_peak_sq: f64 = 0.0;
        for f in (s + 1)..(e - 1) {
            let sq: f64 = cols
                .clone()
                .map(|c| ((x[[f + 1, c]] - x[[f - 1, c]]) / (2.0 * dt)).powi(2))
                .sum();
            v_peak_sq = v_peak_sq.max(sq);
        }
        let jerk_sq: Vec<f64> = ((s + 2)..(e - 2))
            .map(|f| {
                cols.clone()
                    .map(|c| {
                        let j = (x[[f + 2, c]] - 2.0 * x[[f + 1, c]] + 2.0 * x[[f - 1, c]]
                            - x[[f - 2, c]])
                            / (2.0 * dt * dt * dt);
                        j * j
                    })
                    .sum()
            })
            .collect();
        let integral = trapezoid(&jerk_sq, dt);
        floored.push(integral < eps);
        per_joint.push((integral.max(eps) / v_peak_sq.max(eps)).ln());
    }
    Ok(JerkReport {
        total: per_joint.iter().sum(),
        per_joint,
        window: (s, e),
        fps: traj.fps(),
        eps,
        floored,
    })
}

fn trapezoid(samples: &[f64], dt: f64) -> f64 {
    match samples {
        [] | [_] => 0.0,
        [first, .., last] => dt * (samples.iter().sum::<f64>() - 0.5 * (first + last)),
    }
}

/// Windows `[b - span/2, b + span/2)` around each boundary, clipped to
/// `0..total_frames`.
pub fn transition_windows(
    boundaries: &[usize],
    span: usize,
    total_frames: usize,
) -> Vec<Range<usize>> {
    let half = span / 2;
    boundaries
        .iter()
        .map(|&b| b.saturating_sub(half)..(b + half).min(total_frames))
        .collect()
}

/// Mean Euclidean distance over `pair_count` random pairs. Pairs are drawn
/// disjointly from a fresh shuffle; more pairs than `n / 2` take further
/// shuffles.
pub fn diversity<R: RngCore + ?Sized>(
    features: &[Vec<f64>],
    pair_count: usize,
    rng: &mut R,
) -> Result<f64> {
    if features.len() < 2 {
        return Err(param("diversity needs at least 2 feature vectors"));
    }
    if pair_count == 0 {
        return Err(param("pair_count must be >= 1"));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(param("feature vectors differ in length"));
    }
    let mut idx: Vec<usize> = (0..features.len()).collect();
    let mut total = 0.0;
    let mut drawn = 0;
    while drawn < pair_count {
        idx.shuffle(rng);
        for pair in idx.chunks_exact(2) {
            if drawn == pair_count {
                break;
            }
            total += euclid(&features[pair[0]], &features[pair[1]]);
            drawn += 1;
        }
    }
    Ok(total / pair_count as f64)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn mean_and_cov(set: &[Vec<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len() as f64;
    let mut mean = DVector::zeros(d);
    for v in set {
        mean += DVector::from_column_slice(v);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let c = DVector::from_column_slice(v) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    (mean, cov)
}

fn regularize(cov: &mut DMatrix<f64>, which: &str) {
    let eig = SymmetricEigen::new(cov.clone());
    let min = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let scale = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    if min <= 1e-12 * scale {
        log::warn!("covariance of {which} is rank deficient; adding {COV_RIDGE:e} to the diagonal");
        for i in 0..cov.nrows() {
            cov[(i, i)] += COV_RIDGE;
        }
    }
}

fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Frechet distance between Gaussian fits of two feature sets,
/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`. The trace of the
/// cross term is taken as `tr((S_a^{1/2} S_b S_a^{1/2})^{1/2})`, with
/// negative eigenvalues clamped to zero.
pub fn frechet_lite(set_a: &[Vec<f64>], set_b: &[Vec<f64>]) -> Result<f64> {
    let d = set_a.first().map(|v| v.len()).unwrap_or(0);
    if d == 0 {
        return Err(param("feature sets must be non-empty"));
    }
    if set_a.iter().chain(set_b).any(|v| v.len() != d) {
        return Err(param("feature vectors differ in length"));
    }
    if set_a.len() <= d || set_b.len() <= d {
        return Err(param(format!(
            "each set needs more than {d} samples, got {} and {}",
            set_a.len(),
            set_b.len()
        )));
    }
    let (mu_a, mut cov_a) = mean_and_cov(set_a, d);
    let (mu_b, mut cov_b) = mean_and_cov(set_b, d);
    regularize(&mut cov_a, "set A");
    regularize(&mut cov_b, "set B");
    let root_a = sym_sqrt(&cov_a);
    let mut inner = &root_a * &cov_b * &root_a;
    inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0).sqrt())
        .sum();
    let mean_term = (&mu_a - &mu_b).norm_squared();
    Ok(mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross)
}

/// Per-frame mean joint speed and mean jerk magnitude.
pub fn profile(traj: &MotionTrajectory) -> Vec<(f64, f64)> {
    let x = traj.frames();
    let l = traj.len();
    let dt = 1.0 / traj.fps();
    let jd = traj.joint_dim();
    let joints = traj.num_joints();
    (0..l)
        .map(|f| {
            let (lo, hi, span) = if f == 0 {
                (0, 1, 1.0)
            } else if f == l - 1 {
                (l - 2, l - 1, 1.0)
            } else {
                (f - 1, f + 1, 2.0)
            };
            let jc = f.clamp(2.min(l - 1), l.saturating_sub(3).max(2.min(l - 1)));
            let mut speed = 0.0;
            let mut jmag = 0.0;
            for p in 0..joints {
                let cols = p * jd..(p + 1) * jd;
                speed += cols
                    .clone()
                    .map(|c| ((x[[hi, c]] - x[[lo, c]]) / (span * dt)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if l >= 5 {
                    jmag += cols
                        .map(|c| {
                            ((x[[jc + 2, c]] - 2.0 * x[[jc + 1, c]] + 2.0 * x[[jc - 1, c]]
                                - x[[jc - 2, c]])
                                / (2.0 * dt * dt * dt))
                                .powi(2)
                        })
                        .sum::<f64>()
                        .sqrt();
                }
            }
            (speed / joints as f64, jmag / joints as f64)
        })
        .collect()
}

/// Fixed-width table of [`profile`], one row per frame, flagging boundary
/// frames.
pub fn profile_export(traj: &MotionTrajectory, boundaries: &[usize]) -> String {
    let mut s = format!(
        "{:>6} {:>10} {:>16} {:>16} {:>3}\n",
        "frame", "time_s", "mean_speed", "mean_jerk", "bnd"
    );
    for (f, (speed, jerk)) in profile(traj).into_iter().enumerate() {
        let _ = writeln!(
            s,
            "{:>6} {:>10.4} {:>16.8e} {:>16.8e} {:>3}",
            f,
            f as f64 / traj.fps(),
            speed,
            jerk,
            u8::from(boundaries.contains(&f))
        );
    }
    s
}
