//! Smoothing solver: minimize `f + M_h^{mu(gamma)}` for a decreasing
//! sequence `gamma_j = sigma^j gamma_0` with a smooth derivative-free
//! trust-region method, stopping each inner run once `Delta < mu(gamma)^2`.
//!
//! Inner steps are accepted on the modified ratio
//! `(Phi^g(x) - Phi^g(x + s) - c Delta^p) / (m(x) - m(x + s))`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{improve_geometry, poisedness, replacement_index, InterpolationSet, QuadraticModel};
use crate::regularizer::Regularizer;
use crate::solver::{
    is_budget, model_with_repair, radius_update, Evaluator, Phase, PhaseCounts, Progress, SolveResult,
    SolverConfig, Termination,
};
use crate::subproblem::{mu_of_gamma, solve_smoothed_trust_region};
use crate::testbed::LeastSquares;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub gamma0: f64,
    pub sigma_shrink: f64,
    pub ratio_c: f64,
    pub ratio_p: f64,
    pub max_outer: usize,
    /// Radii, ratio thresholds, poisedness, caps and the global budget.
    pub inner: SolverConfig,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            gamma0: 0.01,
            sigma_shrink: 0.1,
            ratio_c: 1e-2,
            ratio_p: 1.5,
            max_outer: 100,
            inner: SolverConfig::default(),
        }
    }
}

/// Outer loop stops once `gamma` drops below this.
pub const GAMMA_FLOOR: f64 = 1e-12;

/// Relative radius below which interpolation is numerically meaningless.
pub const RESOLUTION_FLOOR: f64 = 1e-12;

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if !(self.gamma0 > 0.0) {
            return Err(Error::InvalidConfig("need gamma0 > 0".into()));
        }
        if !(0.0 < self.sigma_shrink && self.sigma_shrink < 1.0) {
            return Err(Error::InvalidConfig("need 0 < sigma_shrink < 1".into()));
        }
        if !(self.ratio_c >= 0.0 && self.ratio_p > 1.0) {
            return Err(Error::InvalidConfig("need ratio_c >= 0 and ratio_p > 1".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidConfig("need max_outer >= 1".into()));
        }
        Ok(())
    }

    /// `key=value` override; unknown keys fall through to the inner config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let float = || {
            value.trim().parse::<f64>().map_err(|_| Error::Parse {
                input: format!("{key}={value}"),
                reason: "invalid value".into(),
            })
        };
        match key.trim() {
            "gamma0" => self.gamma0 = float()?,
            "sigma_shrink" => self.sigma_shrink = float()?,
            "ratio_c" => self.ratio_c = float()?,
            "ratio_p" => self.ratio_p = float()?,
            "max_outer" => {
                self.max_outer = value.trim().parse().map_err(|_| Error::Parse {
                    input: format!("{key}={value}"),
                    reason: "invalid value".into(),
                })?
            }
            _ => self.inner.set(key, value)?,
        }
        Ok(())
    }

    /// `gamma_j = sigma^j gamma_0`.
    pub fn gamma(&self, j: usize) -> f64 {
        self.gamma0 * self.sigma_shrink.powi(j as i32)
    }
}

/// `Phi^gamma(x) = ||r||^2 / 2 + M_h^mu(x)` given the residual.
pub fn smoothed_phi(residual: &DVector<f64>, h: &Regularizer, mu: f64, x: &DVector<f64>) -> f64 {
    0.5 * residual.norm_squared() + h.moreau(mu, x).envelope_value
}

/// Modified ratio `(actual - c Delta^p) / predicted`.
pub fn modified_ratio(actual: f64, predicted: f64, delta: f64, c: f64, p: f64) -> f64 {
    if predicted > 0.0 {
        (actual - c * delta.powf(p)) / predicted
    } else {
        f64::NEG_INFINITY
    }
}

/// Smoothed model decrease `q(0) - q(s) + M(x) - M(x + s)`.
fn smoothed_model_decrease(model: &QuadraticModel, h: &Regularizer, mu: f64, x: &DVector<f64>, s: &DVector<f64>) -> f64 {
    -(model.gradient.dot(s) + 0.5 * s.dot(&(&model.hessian * s))) + h.moreau(mu, x).envelope_value
        - h.moreau(mu, &(x + s)).envelope_value
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerExit {
    /// `Delta < mu(gamma)^2`.
    Radius,
    Criticality,
    Budget,
    EvaluationFailure,
    /// Radius below what double precision resolves around the base point.
    Resolution,
}

/// One inner iteration, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingIteration {
    pub outer: usize,
    pub gamma: f64,
    pub mu: f64,
    pub phase: Phase,
    pub delta: f64,
    pub rho: f64,
    pub step_norm: f64,
    pub model_decrease: f64,
    /// `Phi^gamma(x_k) - Phi^gamma(x_k + s_k)` at the iteration's `mu`.
    pub actual_decrease: Option<f64>,
    /// `c Delta^p`.
    pub penalty: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub j: usize,
    pub gamma: f64,
    pub mu: f64,
    pub evaluations: usize,
    pub delta_last: f64,
    pub exit: InnerExit,
    /// End point of the inner run.
    pub x: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingResult {
    /// Best point and history under the exact objective.
    pub solve: SolveResult,
    pub inner: Vec<SmoothingIteration>,
    pub outer: Vec<OuterRecord>,
}

#[derive(Debug, Clone)]
pub enum SmoothingEvent<'a> {
    Outer { j: usize, gamma: f64, mu: f64 },
    Inner(Progress<'a>),
}

struct InnerState<'s> {
    set: &'s mut InterpolationSet,
    delta_init: f64,
    rho_init: f64,
    last_mu: f64,
}

fn envelope_gradient_norm(model: &QuadraticModel, h: &Regularizer, mu: f64, x: &DVector<f64>) -> f64 {
    (&model.gradient + h.moreau(mu, x).envelope_gradient).norm()
}

/// Smooth trust-region run on `Phi^gamma` from the current base point until
/// the radius drops below `mu(gamma)^2`.
#[allow(clippy::too_many_arguments)]
fn inner_smooth_solve<P, C>(
    ev: &mut Evaluator<'_, P>,
    st: &mut InnerState<'_>,
    j: usize,
    gamma: f64,
    h: &Regularizer,
    cfg: &SmoothingConfig,
    counts: &mut PhaseCounts,
    records: &mut Vec<SmoothingIteration>,
    max_hess: &mut f64,
    callback: &mut C,
) -> Result<InnerExit>
where
    P: LeastSquares,
    C: FnMut(&SmoothingEvent<'_>),
{
    let ic = &cfg.inner;
    let n = st.set.dim();
    let lh = h.lipschitz(n);
    let gamma_s = ic.gamma_s();
    loop {
        if ev.exhausted() {
            return Ok(InnerExit::Budget);
        }
        let x_k = st.set.base().clone();
        let floor = RESOLUTION_FLOOR * x_k.amax().max(1.0);
        if st.delta_init < floor {
            return Ok(InnerExit::Resolution);
        }
        let mut model = model_with_repair(st.set, st.delta_init, ic, ev)?;
        let mut mu = mu_of_gamma(gamma, lh, model.hessian_norm)?;
        st.last_mu = mu;
        if st.delta_init < mu * mu {
            return Ok(InnerExit::Radius);
        }
        let mut crit = envelope_gradient_norm(&model, h, mu, &x_k);

        let (delta, rho) = if crit <= ic.e1 * ic.epsilon_c {
            counts.criticality += 1;
            let mut radius = st.delta_init;
            let mut done = false;
            for _ in 0..ic.criticality_cap {
                if radius < mu * mu {
                    st.delta_init = radius;
                    return Ok(InnerExit::Radius);
                }
                if radius < floor {
                    st.delta_init = radius;
                    return Ok(InnerExit::Resolution);
                }
                let containment = ic.containment * radius;
                *st.set = improve_geometry(st.set, &x_k, radius, ic.lambda, containment, |x| ev.eval(x))?;
                model = model_with_repair(st.set, radius, ic, ev)?;
                mu = mu_of_gamma(gamma, lh, model.hessian_norm)?;
                st.last_mu = mu;
                crit = envelope_gradient_norm(&model, h, mu, &x_k);
                if radius <= ic.mu_crit * crit {
                    done = true;
                    break;
                }
                radius *= ic.omega_c;
            }
            if !done {
                st.delta_init = radius;
                return Ok(InnerExit::Criticality);
            }
            (radius, st.rho_init.min(radius))
        } else {
            (st.delta_init, st.rho_init)
        };
        *max_hess = max_hess.max(model.hessian_norm);

        let step = solve_smoothed_trust_region(&model, h, &x_k, delta, gamma, ic.sfista_cap).step;
        let step_norm = step.norm();
        let decrease = smoothed_model_decrease(&model, h, mu, &x_k, &step);
        let penalty = cfg.ratio_c * delta.powf(cfg.ratio_p);
        let mut record = SmoothingIteration {
            outer: j,
            gamma,
            mu,
            phase: Phase::Safety,
            delta,
            rho,
            step_norm,
            model_decrease: decrease,
            actual_decrease: None,
            penalty,
            ratio: None,
        };
        let phi_k = smoothed_phi(st.set.base_residual(), h, mu, &x_k);

        if step_norm < gamma_s * rho {
            let delta_next = rho.max(ic.omega_s * delta);
            *st.set = improve_geometry(st.set, &x_k, delta_next, ic.lambda, ic.containment * delta_next, |x| ev.eval(x))?;
            if delta_next == rho {
                st.rho_init = ic.alpha1 * rho;
                st.delta_init = ic.alpha2 * rho;
            } else {
                st.rho_init = rho;
                st.delta_init = delta_next;
            }
            counts.bump(Phase::Safety);
            callback(&SmoothingEvent::Inner(Progress {
                k: records.len(),
                x: &x_k,
                phi: phi_k,
                delta,
                rho,
                eta_bar: crit,
                phase: Phase::Safety,
            }));
            records.push(record);
            continue;
        }

        let x_trial = &x_k + &step;
        let r_trial = ev.eval_trial(&x_trial)?;
        let phi_trial = match &r_trial {
            Some(r) => smoothed_phi(r, h, mu, &x_trial),
            None => f64::INFINITY,
        };
        let actual = phi_k - phi_trial;
        let ratio = modified_ratio(actual, decrease, delta, cfg.ratio_c, cfg.ratio_p);
        record.actual_decrease = Some(actual);
        record.ratio = Some(ratio);
        let upd = radius_update(ratio, delta, step_norm, rho, 1.0, ic);

        let phase = if let (true, Some(r_trial)) = (upd.accepted, r_trial) {
            let t = replacement_index(st.set, &x_trial);
            st.set.shift_base(t, x_trial, r_trial);
            st.rho_init = rho;
            st.delta_init = upd.delta_next;
            Phase::Successful
        } else if !poisedness(st.set, &x_k, delta).is_poised_within(ic.lambda, ic.containment * delta.max(rho)) {
            let containment = ic.containment * upd.delta_next.max(rho);
            *st.set = improve_geometry(st.set, &x_k, upd.delta_next, ic.lambda, containment, |x| ev.eval(x))?;
            st.rho_init = rho;
            st.delta_init = upd.delta_next;
            Phase::ModelImproving
        } else {
            if upd.hits_rho {
                st.rho_init = ic.alpha1 * rho;
                st.delta_init = ic.alpha2 * rho;
            } else {
                st.rho_init = rho;
                st.delta_init = upd.delta_next;
            }
            Phase::Unsuccessful
        };
        record.phase = phase;
        counts.bump(phase);
        callback(&SmoothingEvent::Inner(Progress {
            k: records.len(),
            x: st.set.base(),
            phi: phi_k,
            delta,
            rho,
            eta_bar: crit,
            phase,
        }));
        records.push(record);
    }
}

pub fn solve<P: LeastSquares>(
    problem: &mut P,
    x0: &DVector<f64>,
    h: &Regularizer,
    cfg: &SmoothingConfig,
) -> Result<SmoothingResult> {
    solve_with_callback(problem, x0, h, cfg, |_| {})
}

pub fn solve_with_callback<P, C>(
    problem: &mut P,
    x0: &DVector<f64>,
    h: &Regularizer,
    cfg: &SmoothingConfig,
    mut callback: C,
) -> Result<SmoothingResult>
where
    P: LeastSquares,
    C: FnMut(&SmoothingEvent<'_>),
{
    cfg.validate()?;
    let n = problem.n();
    if n == 0 || problem.m() == 0 {
        return Err(Error::InvalidConfig("need n >= 1 and m >= 1".into()));
    }
    if x0.len() != n {
        return Err(Error::Dimension { expected: n, got: x0.len() });
    }
    h.value(x0)?;
    if h.lipschitz(n) <= 0.0 {
        return Err(Error::SmoothingUnavailable);
    }
    let ic = &cfg.inner;
    let mut ev = Evaluator::new(problem, h, ic.max_evals);
    let mut counts = PhaseCounts::default();
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    let mut max_hess = 0.0f64;

    fn finish<P: LeastSquares>(
        ev: Evaluator<'_, P>,
        t: Termination,
        counts: PhaseCounts,
        inner: Vec<SmoothingIteration>,
        outer: Vec<OuterRecord>,
        max_hess: f64,
    ) -> SmoothingResult {
        SmoothingResult {
            solve: ev.finish(t, counts, Vec::new(), max_hess),
            inner,
            outer,
        }
    }

    let mut radius = ic.initial_radius(x0);
    let mut x_j = x0.clone();
    let mut r_j = match ev.eval(x0) {
        Ok(r) => r,
        Err(e) if is_budget(&e) => return Ok(finish(ev, Termination::Budget, counts, inner, outer, max_hess)),
        Err(e) => return Err(e),
    };

    let mut termination = Termination::GammaFloor;
    for j in 0..cfg.max_outer {
        let gamma = cfg.gamma(j);
        if gamma < GAMMA_FLOOR {
            break;
        }
        let start = ev.history.len();
        let mut set = match InterpolationSet::coordinate_simplex(x_j.clone(), r_j.clone(), radius.min(ic.delta_max), |x| ev.eval(x)) {
            Ok(s) => s,
            Err(e) if is_budget(&e) => {
                termination = Termination::Budget;
                break;
            }
            Err(Error::Evaluation(_)) => {
                termination = Termination::EvaluationFailure;
                break;
            }
            Err(e) => return Err(e),
        };
        let mut st = InnerState {
            set: &mut set,
            delta_init: radius.min(ic.delta_max),
            rho_init: radius.min(ic.delta_max),
            last_mu: mu_of_gamma(gamma, h.lipschitz(n), 0.0)?,
        };
        callback(&SmoothingEvent::Outer { j, gamma, mu: st.last_mu });
        let exit = match inner_smooth_solve(&mut ev, &mut st, j, gamma, h, cfg, &mut counts, &mut inner, &mut max_hess, &mut callback) {
            Ok(e) => e,
            Err(e) if is_budget(&e) => InnerExit::Budget,
            Err(Error::Evaluation(_)) => InnerExit::EvaluationFailure,
            Err(e) => return Err(e),
        };
        let delta_last = st.delta_init;
        let mu_last = st.last_mu;
        outer.push(OuterRecord {
            j,
            gamma,
            mu: mu_last,
            evaluations: ev.history.len() - start,
            delta_last,
            exit,
            x: set.base().clone(),
        });
        x_j = set.base().clone();
        r_j = set.base_residual().clone();
        match exit {
            InnerExit::Budget => {
                termination = Termination::Budget;
                break;
            }
            InnerExit::EvaluationFailure => {
                termination = Termination::EvaluationFailure;
                break;
            }
            InnerExit::Resolution => {
                termination = Termination::RhoFloor;
                break;
            }
            InnerExit::Criticality | InnerExit::Radius => {}
        }
        let next_mu = mu_of_gamma(cfg.gamma(j + 1), h.lipschitz(n), 0.0)?;
        radius = delta_last.max(10.0 * next_mu * next_mu);
    }
    Ok(finish(ev, termination, counts, inner, outer, max_hess))
}

/// Smoothing-run invariants: accepted steps decrease `Phi^gamma` by more
/// than `c Delta^p`, `rho <= Delta <= Delta_max`, `gamma` and `mu` decrease
/// across outer iterations, normal inner exits end below `mu^2`, and the
/// reported best value is the exact objective of a history point.
pub fn audit(result: &SmoothingResult, cfg: &SmoothingConfig) -> Vec<String> {
    let mut out = Vec::new();
    for (k, it) in result.inner.iter().enumerate() {
        if it.phase == Phase::Successful {
            match it.actual_decrease {
                Some(a) if a > it.penalty => {}
                a => out.push(format!("inner {k}: accepted with decrease {a:?} <= penalty {}", it.penalty)),
            }
        }
        if it.rho > it.delta * (1.0 + 1e-12) {
            out.push(format!("inner {k}: rho {} > Delta {}", it.rho, it.delta));
        }
        if it.delta > cfg.inner.delta_max * (1.0 + 1e-12) {
            out.push(format!("inner {k}: Delta {} > Delta_max", it.delta));
        }
    }
    for w in result.outer.windows(2) {
        if !(w[1].gamma < w[0].gamma) {
            out.push(format!("outer {}: gamma not decreasing", w[1].j));
        }
    }
    for o in &result.outer {
        if o.exit == InnerExit::Radius && !(o.delta_last < o.mu * o.mu) {
            out.push(format!("outer {}: exit radius {} not below mu^2 {}", o.j, o.delta_last, o.mu * o.mu));
        }
    }
    let best = result.solve.history.iter().map(|e| e.phi).fold(f64::INFINITY, f64::min);
    if result.solve.phi_best != best {
        out.push("reported best value differs from history minimum".into());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::FnLeastSquares;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn gamma_sequence() {
        let cfg = SmoothingConfig::default();
        for j in 0..6 {
            let expected = 0.01 * 10f64.powi(-(j as i32));
            assert!((cfg.gamma(j) - expected).abs() <= 1e-15 * expected);
        }
    }

    #[test]
    fn ratio_identities() {
        assert_eq!(modified_ratio(3.0, 4.0, 0.5, 0.0, 1.5), 0.75);
        let d = 2.0;
        let delta = 0.3f64;
        let c = 0.1 * d / delta.powf(1.5);
        assert_abs_diff_eq!(modified_ratio(d, d, delta, c, 1.5), 0.9, epsilon = 1e-14);
        assert_eq!(modified_ratio(1.0, 0.0, 1.0, 0.0, 1.5), f64::NEG_INFINITY);
    }

    #[test]
    fn smoothed_objective_examples() {
        let h = Regularizer::l1(1.0);
        let r = dvector![1.0, -2.0];
        let x0 = dvector![0.0, 0.0];
        assert_eq!(smoothed_phi(&r, &h, 0.3, &x0), 2.5);
        let mu = mu_of_gamma(0.01, 1.0, 0.0).unwrap();
        assert_abs_diff_eq!(mu, 0.01, epsilon = 1e-15);
        let x = dvector![2.0, 0.0];
        let zero = dvector![0.0];
        // prox = (1.99, 0): 1.99 + 0.01^2 / (2 * 0.01)
        assert_abs_diff_eq!(smoothed_phi(&zero, &h, mu, &x), 1.995, epsilon = 1e-12);
        let mut grid = f64::INFINITY;
        for i in 0..=200_000 {
            let z = 1.9 + i as f64 * 1e-6;
            grid = grid.min(z.abs() + (z - 2.0).powi(2) / (2.0 * mu));
        }
        assert_abs_diff_eq!(grid, 1.995, epsilon = 1e-10);
    }

    #[test]
    fn sandwich() {
        let h = Regularizer::l1(1.0);
        let lh = h.lipschitz(3);
        let mu = 0.05;
        let r = dvector![0.3];
        for i in 0..100 {
            let t = i as f64 * 0.37;
            let x = dvector![t.sin() * 3.0, (1.3 * t).cos(), t.cos() * t.sin()];
            let smooth = smoothed_phi(&r, &h, mu, &x);
            let exact = 0.5 * r.norm_squared() + h.value(&x).unwrap();
            assert!(smooth <= exact + 1e-12);
            assert!(exact <= smooth + lh * lh * mu / 2.0 + 1e-12);
        }
    }

    #[test]
    fn zero_regularizer_is_rejected() {
        let mut prob = FnLeastSquares::new(2, 2, |x: &DVector<f64>| x.clone());
        let err = solve(&mut prob, &dvector![1.0, 1.0], &Regularizer::Zero, &SmoothingConfig::default()).unwrap_err();
        assert_eq!(err, Error::SmoothingUnavailable);
    }

    #[test]
    fn l1_toy_reaches_the_kink() {
        // f = ((x1 - 0.5)^2 + (x2 + 2)^2) / 2 with l1: minimizer (0, -1)
        let mut prob = FnLeastSquares::new(2, 2, |x: &DVector<f64>| dvector![x[0] - 0.5, x[1] + 2.0]);
        let cfg = SmoothingConfig {
            inner: SolverConfig {
                max_evals: 200,
                ..SolverConfig::default()
            },
            ..SmoothingConfig::default()
        };
        let res = solve(&mut prob, &dvector![1.0, 1.0], &Regularizer::l1(1.0), &cfg).unwrap();
        assert!((&res.solve.x_best - dvector![0.0, -1.0]).norm() < 1e-2, "{}", res.solve.x_best);
        assert!(audit(&res, &cfg).is_empty(), "{:?}", audit(&res, &cfg));
        let gammas: Vec<f64> = res.outer.iter().map(|o| o.gamma).collect();
        assert!(gammas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn envelope_criticality_vanishes_along_outer_iterations() {
        // f = (x - 0.3)^2 / 2 in 1-D with l1: x* = 0, |f'(0)| = 0.3 < 1
        let mut prob = FnLeastSquares::new(1, 1, |x: &DVector<f64>| dvector![x[0] - 0.3]);
        let cfg = SmoothingConfig {
            inner: SolverConfig {
                max_evals: 300,
                ..SolverConfig::default()
            },
            ..SmoothingConfig::default()
        };
        let h = Regularizer::l1(1.0);
        let res = solve(&mut prob, &dvector![1.0], &h, &cfg).unwrap();
        let crit = |x: f64, mu: f64| ((x - 0.3) + h.moreau(mu, &dvector![x]).envelope_gradient[0]).abs();
        let values: Vec<f64> = res.outer.iter().map(|o| crit(o.x[0], o.mu)).collect();
        assert!(values.len() >= 4);
        assert!(values[..4].iter().all(|&v| v < 1e-3), "{values:?}");
    }
}
