//! Ball-constrained convex subproblems
//!
//! ```text
//! min_d  G(d) = g^T d + d^T H d / 2 + h(x + d)   s.t. ||d|| <= r
//! ```
//!
//! solved by smoothed FISTA: `h` is replaced by its Moreau envelope with a
//! parameter chosen from the requested accuracy, and the iteration count
//! follows from the same accuracy (capped). The trust-region step, the
//! criticality measure and the smoothed trust-region step are thin
//! parameterizations of the same engine.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interpolation::QuadraticModel;
use crate::regularizer::{project_ball, Regularizer};

pub const DEFAULT_ITERATION_CAP: usize = 500;
/// Lower bound on the requested accuracy, so the iteration count stays finite.
pub const EPSILON_FLOOR: f64 = 1e-14;

const DYKSTRA_ITERS: usize = 200;

#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub gradient: &'a DVector<f64>,
    /// `None` stands for `H = 0`.
    pub hessian: Option<&'a DMatrix<f64>>,
    pub hessian_norm: f64,
    pub anchor: &'a DVector<f64>,
    pub radius: f64,
    pub regularizer: &'a Regularizer,
    pub epsilon: f64,
    pub iteration_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub step: DVector<f64>,
    pub objective_value: f64,
    pub iterations_used: usize,
    /// Smoothing parameter; `None` when `h` was handled without smoothing.
    pub mu_used: Option<f64>,
}

impl SubproblemSpec<'_> {
    fn hess_times(&self, d: &DVector<f64>) -> DVector<f64> {
        match self.hessian {
            Some(h) => h * d,
            None => DVector::zeros(d.len()),
        }
    }

    /// Exact objective `G(d)`; `+inf` outside `dom h`.
    pub fn objective(&self, d: &DVector<f64>) -> f64 {
        let quad = self.gradient.dot(d) + 0.5 * d.dot(&self.hess_times(d));
        match self.regularizer.value(&(self.anchor + d)) {
            Ok(hv) => quad + hv,
            Err(_) => f64::INFINITY,
        }
    }
}

/// `mu(gamma) = 2 gamma / (L_h (L_h + sqrt(L_h^2 + 2 ||H|| gamma)))`.
pub fn mu_of_gamma(gamma: f64, lipschitz: f64, hessian_norm: f64) -> Result<f64> {
    if lipschitz <= 0.0 {
        return Err(Error::SmoothingUnavailable);
    }
    let l = lipschitz;
    Ok(2.0 * gamma / (l * (l + (l * l + 2.0 * hessian_norm * gamma).sqrt())))
}

/// Iteration count `K = r (2 L_h + sqrt(2 ||H|| eps)) / eps`, capped.
pub fn iteration_count(radius: f64, lipschitz: f64, hessian_norm: f64, epsilon: f64, cap: usize) -> usize {
    let k = radius * (2.0 * lipschitz + (2.0 * hessian_norm * epsilon).sqrt()) / epsilon;
    clamp_count(k, cap)
}

fn clamp_count(k: f64, cap: usize) -> usize {
    if !k.is_finite() || k >= cap as f64 {
        cap.max(1)
    } else {
        (k.ceil() as usize).clamp(1, cap.max(1))
    }
}

struct Fista {
    best: DVector<f64>,
    best_value: f64,
    iterations: usize,
}

/// FISTA from `d = y = 0` with step `1 / lipschitz`, tracking the best
/// iterate under `objective` (which always sees `d = 0` first).
fn fista<G, O, P>(n: usize, lipschitz: f64, iterations: usize, grad: G, objective: O, project: P) -> Fista
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
    O: Fn(&DVector<f64>) -> f64,
    P: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut d = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    let mut t = 1.0f64;
    let mut best = d.clone();
    let mut best_value = objective(&d);
    let step = 1.0 / lipschitz;
    for _ in 0..iterations {
        let d_next = project(&(&y - grad(&y) * step));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &d_next + (&d_next - &d) * ((t - 1.0) / t_next);
        let v = objective(&d_next);
        if v < best_value {
            best_value = v;
            best.copy_from(&d_next);
        }
        d = d_next;
        t = t_next;
    }
    Fista {
        best,
        best_value,
        iterations,
    }
}

/// Projection onto `B(0, r) ∩ (dom h - x)` for indicator regularizers
/// (Dykstra's alternating projections). The result is always feasible:
/// the final correction lands in `dom h` and then scales into the ball,
/// which keeps `x + d` in `dom h` by convexity.
fn project_feasible(h: &Regularizer, x: &DVector<f64>, r: f64, z: &DVector<f64>) -> DVector<f64> {
    if !h.is_indicator() {
        return project_ball(z, r);
    }
    let to_domain = |v: &DVector<f64>| h.prox(1.0, &(x + v)) - x;
    let mut cur = z.clone();
    let mut p = DVector::zeros(z.len());
    let mut q = DVector::zeros(z.len());
    for _ in 0..DYKSTRA_ITERS {
        let a = project_ball(&(&cur + &p), r);
        p = &cur + &p - &a;
        let b = to_domain(&(&a + &q));
        q = &a + &q - &b;
        let change = (&b - &cur).norm();
        cur = b;
        if change <= 1e-15 * (1.0 + r) {
            break;
        }
    }
    let mut d = to_domain(&cur);
    let norm = d.norm();
    if norm > r {
        d *= r / norm;
    }
    d
}

/// Smoothed FISTA for the general subproblem.
///
/// With `L_h > 0` the envelope parameter and iteration count follow the
/// accuracy `epsilon`. With `L_h = 0` (zero or indicator `h`) no smoothing is
/// needed: plain projected FISTA runs on the quadratic with step
/// `1 / max(||H||, ||g|| / r)` and the matching FISTA iteration count.
pub fn sfista(spec: &SubproblemSpec<'_>) -> SubproblemSolution {
    let n = spec.gradient.len();
    let eps = spec.epsilon.max(EPSILON_FLOOR);
    let r = spec.radius;
    let h = spec.regularizer;
    let lh = h.lipschitz(n);

    if lh > 0.0 {
        let mu = mu_of_gamma(eps, lh, spec.hessian_norm).expect("positive Lipschitz constant");
        let lip = spec.hessian_norm + 1.0 / mu;
        let k = iteration_count(r, lh, spec.hessian_norm, eps, spec.iteration_cap);
        let grad = |d: &DVector<f64>| {
            spec.gradient + spec.hess_times(d) + h.moreau(mu, &(spec.anchor + d)).envelope_gradient
        };
        let out = fista(n, lip, k, grad, |d| spec.objective(d), |z| project_ball(z, r));
        SubproblemSolution {
            step: out.best,
            objective_value: out.best_value,
            iterations_used: out.iterations,
            mu_used: Some(mu),
        }
    } else {
        let lip = spec.hessian_norm.max(spec.gradient.norm() / r);
        if lip <= 0.0 {
            let step = DVector::zeros(n);
            return SubproblemSolution {
                objective_value: spec.objective(&step),
                step,
                iterations_used: 0,
                mu_used: None,
            };
        }
        let k = clamp_count(r * (2.0 * lip / eps).sqrt(), spec.iteration_cap);
        let grad = |d: &DVector<f64>| spec.gradient + spec.hess_times(d);
        let project = |z: &DVector<f64>| project_feasible(h, spec.anchor, r, z);
        let out = fista(n, lip, k, grad, |d| spec.objective(d), project);
        SubproblemSolution {
            step: out.best,
            objective_value: out.best_value,
            iterations_used: out.iterations,
            mu_used: None,
        }
    }
}

/// Exact prox of `t (lambda ||x + .||_1 + I_{||.|| <= r})` at `v`.
///
/// With multiplier `nu` for the ball, each coordinate is a shifted
/// soft-threshold in `s = 1 / (1 + t nu)`; `||d(s)||` grows with `s` from
/// `d(0) = 0`, so the active multiplier is found by bisection on `s`.
fn prox_l1_ball(lambda: f64, x: &DVector<f64>, v: &DVector<f64>, t: f64, r: f64) -> DVector<f64> {
    let at = |s: f64| {
        DVector::from_iterator(
            x.len(),
            x.iter().zip(v.iter()).map(|(&xi, &vi)| {
                let z = xi + s * vi;
                let thr = lambda * t * s;
                z.signum() * (z.abs() - thr).max(0.0) - xi
            }),
        )
    };
    let full = at(1.0);
    if full.norm() <= r {
        return full;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if at(mid).norm() <= r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    project_ball(&at(lo), r)
}

/// Proximal FISTA on the unsmoothed subproblem, available when the prox of
/// `h(x + .)` restricted to the ball has a closed form (the l1 case).
/// Returns `None` otherwise.
pub fn prox_fista(spec: &SubproblemSpec<'_>) -> Option<SubproblemSolution> {
    let Regularizer::L1 { lambda } = *spec.regularizer else {
        return None;
    };
    let n = spec.gradient.len();
    let r = spec.radius;
    let scale = (spec.gradient.norm() + spec.regularizer.lipschitz(n)) / r;
    let lip = spec.hessian_norm.max(1e-6 * scale).max(f64::MIN_POSITIVE);
    let step = 1.0 / lip;
    let grad = |d: &DVector<f64>| spec.gradient + spec.hess_times(d);
    let mut d = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    let mut t = 1.0f64;
    let mut best = d.clone();
    let mut best_value = spec.objective(&d);
    let mut used = 0;
    for _ in 0..spec.iteration_cap {
        used += 1;
        let d_next = prox_l1_ball(lambda, spec.anchor, &(&y - grad(&y) * step), step, r);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &d_next + (&d_next - &d) * ((t - 1.0) / t_next);
        let value = spec.objective(&d_next);
        if value < best_value {
            best_value = value;
            best.copy_from(&d_next);
        }
        let moved = (&d_next - &d).norm();
        d = d_next;
        t = t_next;
        if moved <= 1e-15 * (1.0 + r) {
            break;
        }
    }
    Some(SubproblemSolution {
        step: best,
        objective_value: best_value,
        iterations_used: used,
        mu_used: None,
    })
}

/// Smoothed FISTA, refined by proximal FISTA when the exact prox is cheap;
/// the better of the two candidates is returned.
pub fn solve_composite(spec: &SubproblemSpec<'_>) -> SubproblemSolution {
    let smoothed = sfista(spec);
    match prox_fista(spec) {
        Some(exact) if exact.objective_value < smoothed.objective_value => SubproblemSolution {
            mu_used: smoothed.mu_used,
            ..exact
        },
        _ => smoothed,
    }
}

/// `m(x) - m(x + s)` for the composite model `p(x + s) + h(x + s)`.
pub fn model_decrease(model: &QuadraticModel, h: &Regularizer, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
    let hx = h.value(x).unwrap_or(f64::INFINITY);
    let hxs = h.value(&(x + s)).unwrap_or(f64::INFINITY);
    -(model.gradient.dot(s) + 0.5 * s.dot(&(&model.hessian * s))) + hx - hxs
}

/// Sufficient-decrease target `e3 c1 eta min(Delta, eta / max(1, ||H||))`.
pub fn required_decrease(e3: f64, c1: f64, eta_bar: f64, delta: f64, hessian_norm: f64) -> f64 {
    e3 * c1 * eta_bar * delta.min(eta_bar / hessian_norm.max(1.0))
}

/// Trust-region step for the composite model, accurate enough for the
/// sufficient-decrease condition.
#[allow(clippy::too_many_arguments)]
pub fn solve_trust_region(
    model: &QuadraticModel,
    h: &Regularizer,
    x_k: &DVector<f64>,
    delta: f64,
    eta_bar: f64,
    e3: f64,
    c1: f64,
    cap: usize,
) -> SubproblemSolution {
    let eps = ((1.0 - e3) * c1 * eta_bar * delta.min(eta_bar / model.hessian_norm.max(1.0))).max(EPSILON_FLOOR);
    solve_composite(&SubproblemSpec {
        gradient: &model.gradient,
        hessian: Some(&model.hessian),
        hessian_norm: model.hessian_norm,
        anchor: x_k,
        radius: delta,
        regularizer: h,
        epsilon: eps,
        iteration_cap: cap,
    })
}

/// Minimize the composite model along `theta * min(Delta, 1) * d`,
/// `theta in [0, 1]`, where `d` is the criticality minimizer. The model is
/// convex in `theta`, so golden-section search suffices.
pub fn criticality_step_search(
    model: &QuadraticModel,
    h: &Regularizer,
    x_k: &DVector<f64>,
    delta: f64,
    direction: &DVector<f64>,
) -> DVector<f64> {
    let base = direction * delta.min(1.0);
    let phi = |theta: f64| -model_decrease(model, h, x_k, &(&base * theta));
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - golden * (b - a);
    let mut d = a + golden * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - golden * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + golden * (b - a);
            fd = phi(d);
        }
    }
    let candidates = [0.0, 1.0, 0.5 * (a + b)];
    let theta = candidates
        .into_iter()
        .min_by(|&p, &q| phi(p).total_cmp(&phi(q)))
        .unwrap_or(0.0);
    base * theta
}

/// Inexact criticality measure: minimize `g^T d + h(x + d)` over the unit
/// ball and return `eta_bar = h(x) - min >= 0` with the minimizer.
pub fn estimate_criticality(
    g: &DVector<f64>,
    h: &Regularizer,
    x_k: &DVector<f64>,
    accuracy: f64,
    cap: usize,
) -> (f64, DVector<f64>) {
    let sol = solve_composite(&SubproblemSpec {
        gradient: g,
        hessian: None,
        hessian_norm: 0.0,
        anchor: x_k,
        radius: 1.0,
        regularizer: h,
        epsilon: accuracy,
        iteration_cap: cap,
    });
    let hx = h.value(x_k).unwrap_or(f64::INFINITY);
    let eta = (hx - sol.objective_value).max(0.0);
    (eta, sol.step)
}

/// Trust-region step for the smoothed model `p(x + s) + M_h^{mu(gamma)}(x + s)`.
pub fn solve_smoothed_trust_region(
    model: &QuadraticModel,
    h: &Regularizer,
    x_k: &DVector<f64>,
    delta: f64,
    gamma: f64,
    cap: usize,
) -> SubproblemSolution {
    let n = x_k.len();
    let lh = h.lipschitz(n);
    let Ok(mu) = mu_of_gamma(gamma, lh, model.hessian_norm) else {
        return sfista(&SubproblemSpec {
            gradient: &model.gradient,
            hessian: Some(&model.hessian),
            hessian_norm: model.hessian_norm,
            anchor: x_k,
            radius: delta,
            regularizer: h,
            epsilon: gamma,
            iteration_cap: cap,
        });
    };
    let lip = model.hessian_norm + 1.0 / mu;
    let k = iteration_count(delta, lh, model.hessian_norm, gamma, cap);
    let smooth_value = |s: &DVector<f64>| {
        model.gradient.dot(s) + 0.5 * s.dot(&(&model.hessian * s)) + h.moreau(mu, &(x_k + s)).envelope_value
    };
    let grad = |s: &DVector<f64>| model.gradient_at(s) + h.moreau(mu, &(x_k + s)).envelope_gradient;
    let out = fista(n, lip, k, grad, smooth_value, |z| project_ball(z, delta));
    SubproblemSolution {
        step: out.best,
        objective_value: out.best_value,
        iterations_used: out.iterations,
        mu_used: Some(mu),
    }
}
