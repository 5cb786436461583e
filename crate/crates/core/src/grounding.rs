//! Logistic map between averaged self-reported trust (1 to 10) and the
//! model's probability of high trust.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `S(r) = asymptote / (1 + exp(-slope * (r - midpoint)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingCurve {
    pub asymptote: f64,
    pub slope: f64,
    pub midpoint: f64,
}

/// Reference fit of median filtered trust against averaged self-reports.
pub const REFERENCE_CURVE: GroundingCurve = GroundingCurve {
    asymptote: 0.9642,
    slope: 0.8267,
    midpoint: 4.911,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GroundingError {
    #[error("curve parameters out of range: {0}")]
    InvalidCurve(String),
    #[error("need at least {MIN_PAIRS} pairs, got {0}")]
    InsufficientData(usize),
    #[error("all self-report values are identical")]
    Degenerate,
    #[error("non-finite value in input pairs")]
    NonFinite,
    #[error("least-squares fit did not converge after {0} iterations")]
    NonConvergence(usize),
}

pub const MIN_PAIRS: usize = 4;

impl GroundingCurve {
    pub fn new(asymptote: f64, slope: f64, midpoint: f64) -> Result<Self, GroundingError> {
        let curve = Self {
            asymptote,
            slope,
            midpoint,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<(), GroundingError> {
        if !(self.asymptote > 0.0 && self.asymptote <= 1.0) {
            return Err(GroundingError::InvalidCurve(format!("asymptote {} not in (0, 1]", self.asymptote)));
        }
        if !(self.slope > 0.0) || !self.slope.is_finite() {
            return Err(GroundingError::InvalidCurve(format!("slope {} not positive", self.slope)));
        }
        if !(1.0..=10.0).contains(&self.midpoint) {
            return Err(GroundingError::InvalidCurve(format!("midpoint {} not in [1, 10]", self.midpoint)));
        }
        Ok(())
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.asymptote / (1.0 + (-self.slope * (r - self.midpoint)).exp())
    }

    /// Self-report value mapping to `p`, if `0 < p < asymptote`.
    pub fn invert(&self, p: f64) -> Option<f64> {
        (p > 0.0 && p < self.asymptote).then(|| self.midpoint - (self.asymptote / p - 1.0).ln() / self.slope)
    }
}

/// Evaluates a validated curve at `r`.
pub fn grounding_eval(curve: &GroundingCurve, r: f64) -> f64 {
    curve.eval(r)
}

/// Result of a least-squares logistic fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingFit {
    pub curve: GroundingCurve,
    /// Euclidean norm of the residuals at the returned curve.
    pub residual_norm: f64,
    pub iterations: usize,
    /// Parameters that were clamped into range after fitting.
    pub warnings: Vec<String>,
}

const MAX_ITERATIONS: usize = 2000;

/// Least-squares fit of all three logistic parameters (Levenberg-Marquardt).
pub fn fit_grounding(pairs: &[(f64, f64)]) -> Result<GroundingFit, GroundingError> {
    if pairs.len() < MIN_PAIRS {
        return Err(GroundingError::InsufficientData(pairs.len()));
    }
    if pairs.iter().any(|(r, p)| !r.is_finite() || !p.is_finite()) {
        return Err(GroundingError::NonFinite);
    }
    let r0 = pairs[0].0;
    if pairs.iter().all(|(r, _)| *r == r0) {
        return Err(GroundingError::Degenerate);
    }

    let mut theta = initial_guess(pairs);
    let mut sse = sum_squares(pairs, &theta);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(pairs, &theta);
        let mut improved = false;
        // Raise damping until a step reduces the error.
        while lambda < 1e16 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[i][i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve3(damped, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = [theta[0] + step[0], theta[1] + step[1], theta[2] + step[2]];
            let candidate_sse = sum_squares(pairs, &candidate);
            if candidate_sse.is_finite() && candidate_sse <= sse {
                let rel_change = (sse - candidate_sse) / sse.max(f64::MIN_POSITIVE);
                let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
                theta = candidate;
                sse = candidate_sse;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel_change < 1e-14 || step_norm < 1e-13 || sse < 1e-28 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction left: at a (numerical) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(GroundingError::NonConvergence(iterations));
    }

    let mut warnings = Vec::new();
    let [mut asymptote, mut slope, mut midpoint] = theta;
    if asymptote > 1.0 {
        warnings.push(format!("asymptote {asymptote:.4} clamped to 1"));
        asymptote = 1.0;
    }
    if asymptote <= 0.0 {
        warnings.push(format!("asymptote {asymptote:.4} clamped to 1e-6"));
        asymptote = 1e-6;
    }
    if slope <= 0.0 {
        warnings.push(format!("slope {slope:.4} clamped to 1e-6"));
        slope = 1e-6;
    }
    if !(1.0..=10.0).contains(&midpoint) {
        let clamped = midpoint.clamp(1.0, 10.0);
        warnings.push(format!("midpoint {midpoint:.4} clamped to {clamped}"));
        midpoint = clamped;
    }
    let curve = GroundingCurve {
        asymptote,
        slope,
        midpoint,
    };
    let residual_norm = sum_squares(pairs, &[asymptote, slope, midpoint]).sqrt();
    Ok(GroundingFit {
        curve,
        residual_norm,
        iterations,
        warnings,
    })
}

fn logistic(theta: &[f64; 3], r: f64) -> f64 {
    theta[0] / (1.0 + (-theta[1] * (r - theta[2])).exp())
}

fn sum_squares(pairs: &[(f64, f64)], theta: &[f64; 3]) -> f64 {
    pairs.iter().map(|&(r, p)| (logistic(theta, r) - p).powi(2)).sum()
}

/// Returns (JᵀJ, -Jᵀ·residual) for residual = S(r) - p.
fn normal_equations(pairs: &[(f64, f64)], theta: &[f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    for &(r, p) in pairs {
        let sigma = 1.0 / (1.0 + (-theta[1] * (r - theta[2])).exp());
        let d = theta[0] * sigma * (1.0 - sigma);
        let grad = [sigma, d * (r - theta[2]), -d * theta[1]];
        let residual = theta[0] * sigma - p;
        for i in 0..3 {
            jtr[i] -= grad[i] * residual;
            for j in 0..3 {
                jtj[i][j] += grad[i] * grad[j];
            }
        }
    }
    (jtj, jtr)
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Starting point from a linear fit of logit(p / L) against r.
fn initial_guess(pairs: &[(f64, f64)]) -> [f64; 3] {
    let p_max = pairs.iter().map(|&(_, p)| p).fold(f64::MIN, f64::max);
    let asymptote = (p_max * 1.02).clamp(0.05, 1.0);
    let n = pairs.len() as f64;
    let r_mean = pairs.iter().map(|&(r, _)| r).sum::<f64>() / n;

    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter_map(|&(r, p)| {
            let q = p / asymptote;
            (q > 1e-3 && q < 1.0 - 1e-3).then(|| (r, (q / (1.0 - q)).ln()))
        })
        .collect();
    if pts.len() >= 2 {
        let m = pts.len() as f64;
        let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        if sxx > 0.0 && sxy > 0.0 {
            let slope = sxy / sxx;
            let midpoint = xm - ym / slope;
            if midpoint.is_finite() {
                return [asymptote, slope, midpoint];
            }
        }
    }
    [asymptote, 1.0, r_mean]
}

/// Means of consecutive non-overlapping groups of three.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedAverages {
    pub values: Vec<f64>,
    /// The last value averages a trailing group of only one or two entries.
    pub partial_tail: bool,
}

pub fn three_trial_average(series: &[f64]) -> GroupedAverages {
    GroupedAverages {
        values: series
            .chunks(3)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect(),
        partial_tail: series.len() % 3 != 0,
    }
}
