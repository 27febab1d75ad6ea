//! Group propensity `e_g(x)`: multinomial logistic regression on a polynomial
//! basis of the standardized running variable, fitted by damped Newton steps.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, GroupId};
use crate::error::{Error, Result};

pub const DEFAULT_CLAMP: f64 = 0.01;
pub const DEFAULT_BASIS_DEGREE: usize = 3;

const MAX_ITERATIONS: usize = 200;
const TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone)]
pub struct PropensityModel {
    num_groups: usize,
    degree: usize,
    /// `(Q - 1) x (degree + 1)`, group 0 is the reference class.
    coefficients: Vec<Vec<f64>>,
    center: f64,
    scale: f64,
    clamp: f64,
    converged: bool,
    trace: Vec<f64>,
}

impl PropensityModel {
    /// Fits on `(x, group)` pairs.
    pub fn fit(points: &[(f64, GroupId)], num_groups: usize, degree: usize, clamp: f64) -> Result<Self> {
        validate_clamp(clamp, num_groups)?;
        let mut counts = vec![0usize; num_groups];
        for &(_, g) in points {
            counts[g.0] += 1;
        }
        if let Some((g, &c)) = counts.iter().enumerate().find(|(_, &c)| c < degree + 2) {
            return Err(Error::TooFewRecords {
                group: GroupId(g).to_string(),
                count: c,
                needed: degree + 2,
            });
        }
        let n = points.len() as f64;
        let center = points.iter().map(|p| p.0).sum::<f64>() / n;
        let var = points.iter().map(|p| (p.0 - center).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::DegenerateSpread);
        }
        let scale = var.sqrt();
        let basis: Vec<Vec<f64>> = points.iter().map(|p| powers((p.0 - center) / scale, degree)).collect();
        let labels: Vec<usize> = points.iter().map(|p| p.1 .0).collect();

        let k = num_groups - 1;
        let b = degree + 1;
        let dim = k * b;
        let mut theta = DVector::<f64>::zeros(dim);
        // intercepts at the log-odds of the marginal shares
        for j in 0..k {
            theta[j * b] = (counts[j + 1] as f64 / counts[0] as f64).ln();
        }
        let mut ll = log_likelihood(&theta, &basis, &labels, k, b);
        let mut trace = vec![ll];
        let mut converged = false;

        for _ in 0..MAX_ITERATIONS {
            let (grad, info) = score_and_information(&theta, &basis, &labels, k, b);
            let step = match newton_direction(info, &grad) {
                Some(s) => s,
                None => break,
            };
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand = &theta + &step * t;
                let cand_ll = log_likelihood(&cand, &basis, &labels, k, b);
                if cand_ll.is_finite() && cand_ll >= ll {
                    accepted = Some((cand, cand_ll));
                    break;
                }
                t *= 0.5;
            }
            let Some((cand, cand_ll)) = accepted else {
                converged = true;
                break;
            };
            debug_assert!(cand_ll >= ll);
            let change = cand_ll - ll;
            theta = cand;
            ll = cand_ll;
            trace.push(ll);
            if change < TOLERANCE {
                converged = true;
                break;
            }
        }
        if !converged {
            log::warn!("group propensity fit did not converge in {MAX_ITERATIONS} iterations; using best iterate");
        }
        let coefficients = (0..k).map(|j| theta.as_slice()[j * b..(j + 1) * b].to_vec()).collect();
        Ok(Self {
            num_groups,
            degree,
            coefficients,
            center,
            scale,
            clamp,
            converged,
            trace,
        })
    }

    /// Builds a model from explicit coefficients on the standardized basis.
    pub fn from_coefficients(coefficients: Vec<Vec<f64>>, center: f64, scale: f64, clamp: f64) -> Result<Self> {
        let num_groups = coefficients.len() + 1;
        validate_clamp(clamp, num_groups)?;
        let degree = coefficients.first().map_or(0, |c| c.len().saturating_sub(1));
        if coefficients.iter().any(|c| c.len() != degree + 1) || !(scale > 0.0) {
            return Err(Error::InvalidConfig("malformed propensity coefficients".into()));
        }
        Ok(Self {
            num_groups,
            degree,
            coefficients,
            center,
            scale,
            clamp,
            converged: true,
            trace: Vec::new(),
        })
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Log-likelihood after each accepted iteration (first entry: start).
    pub fn log_likelihood_trace(&self) -> &[f64] {
        &self.trace
    }

    /// Softmax probabilities before clamping.
    pub fn raw_probabilities(&self, x: f64) -> Vec<f64> {
        let z = powers((x - self.center) / self.scale, self.degree);
        let mut eta = Vec::with_capacity(self.num_groups);
        eta.push(0.0);
        for c in &self.coefficients {
            eta.push(c.iter().zip(&z).map(|(a, b)| a * b).sum());
        }
        softmax(&eta)
    }

    /// Clamped probability vector: every component in `[ε, 1 - ε]`, sum 1.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        clamp_probabilities(self.raw_probabilities(x), self.clamp)
    }
}

pub fn fit_group_propensity(dataset: &Dataset, degree: usize, clamp: f64) -> Result<PropensityModel> {
    let points: Vec<(f64, GroupId)> = dataset.records().iter().map(|r| (r.x, r.group)).collect();
    PropensityModel::fit(&points, dataset.design().num_groups(), degree, clamp)
}

pub fn eval_propensity(model: &PropensityModel, x: f64) -> Vec<f64> {
    model.eval(x)
}

fn validate_clamp(clamp: f64, num_groups: usize) -> Result<()> {
    if !(clamp > 0.0 && clamp < 0.5) {
        return Err(Error::InvalidConfig(format!("propensity clamp must lie in (0, 0.5), got {clamp}")));
    }
    if clamp * num_groups as f64 > 1.0 {
        return Err(Error::InvalidConfig(format!(
            "propensity clamp {clamp} is infeasible for {num_groups} groups"
        )));
    }
    Ok(())
}

/// Raises components below `floor` to `floor`, rescaling the rest to keep the
/// total at one; repeats until no free component falls below the floor.
pub(crate) fn clamp_probabilities(mut p: Vec<f64>, floor: f64) -> Vec<f64> {
    let mut fixed = vec![false; p.len()];
    loop {
        let n_fixed = fixed.iter().filter(|&&f| f).count();
        let free_mass: f64 = p.iter().zip(&fixed).filter(|(_, &f)| !f).map(|(v, _)| v).sum();
        let target = 1.0 - floor * n_fixed as f64;
        let ratio = if free_mass > 0.0 { target / free_mass } else { 0.0 };
        let mut changed = false;
        for (v, f) in p.iter_mut().zip(fixed.iter_mut()) {
            if *f {
                *v = floor;
            } else if *v * ratio < floor {
                *f = true;
                changed = true;
            }
        }
        if !changed {
            for (v, f) in p.iter_mut().zip(&fixed) {
                if !f {
                    *v *= ratio;
                }
            }
            return p;
        }
    }
}

fn powers(z: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut v = 1.0;
    for _ in 0..=degree {
        out.push(v);
        v *= z;
    }
    out
}

fn softmax(eta: &[f64]) -> Vec<f64> {
    let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = eta.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn linear_predictors(theta: &DVector<f64>, z: &[f64], k: usize, b: usize) -> Vec<f64> {
    let mut eta = Vec::with_capacity(k + 1);
    eta.push(0.0);
    for j in 0..k {
        eta.push((0..b).map(|m| theta[j * b + m] * z[m]).sum());
    }
    eta
}

fn log_likelihood(theta: &DVector<f64>, basis: &[Vec<f64>], labels: &[usize], k: usize, b: usize) -> f64 {
    basis
        .iter()
        .zip(labels)
        .map(|(z, &g)| {
            let eta = linear_predictors(theta, z, k, b);
            let max = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + eta.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
            eta[g] - lse
        })
        .sum()
}

/// Gradient and observed information (negative Hessian) of the log-likelihood.
fn score_and_information(
    theta: &DVector<f64>,
    basis: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    b: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let dim = k * b;
    let mut grad = DVector::zeros(dim);
    let mut info = DMatrix::zeros(dim, dim);
    for (z, &g) in basis.iter().zip(labels) {
        let p = softmax(&linear_predictors(theta, z, k, b));
        for j in 0..k {
            let resid = (g == j + 1) as u8 as f64 - p[j + 1];
            for m in 0..b {
                grad[j * b + m] += resid * z[m];
            }
            for l in 0..k {
                let w = p[j + 1] * (((j == l) as u8 as f64) - p[l + 1]);
                if w == 0.0 {
                    continue;
                }
                for m in 0..b {
                    let wz = w * z[m];
                    for r in 0..b {
                        info[(j * b + m, l * b + r)] += wz * z[r];
                    }
                }
            }
        }
    }
    (grad, info)
}

fn newton_direction(info: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let dim = info.nrows();
    let trace = info.trace().abs().max(1.0) / dim as f64;
    let mut ridge = 0.0;
    for _ in 0..12 {
        let mut m = info.clone();
        for i in 0..dim {
            m[(i, i)] += ridge;
        }
        if let Some(chol) = m.cholesky() {
            let step = chol.solve(grad);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        ridge = if ridge == 0.0 { 1e-10 * trace } else { ridge * 100.0 };
    }
    None
}
