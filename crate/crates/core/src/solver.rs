//! Derivative-free trust-region solver for `||r(x)||^2 / 2 + h(x)`.
//!
//! Each iteration builds a linear interpolation model of `r`, estimates the
//! criticality measure inexactly, takes a trust-region step computed by
//! smoothed FISTA and runs the safety / acceptance / model-improvement logic.
//! The radius `Delta_k` has a lower bound `rho_k` that only shrinks on safety
//! and unsuccessful iterations; `tau_k` scales both the safety test and the
//! unsuccessful radius update.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::{
    build_residual_model, gauss_newton_model, improve_geometry, poisedness, replacement_index,
    InterpolationSet, QuadraticModel,
};
use crate::regularizer::Regularizer;
use crate::subproblem::{
    criticality_step_search, estimate_criticality, model_decrease, required_decrease,
    solve_trust_region, DEFAULT_ITERATION_CAP,
};
use crate::testbed::LeastSquares;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// `None`: `0.1 * max(||x0||_inf, 1)`.
    pub delta0_init: Option<f64>,
    pub delta_max: f64,
    pub gamma_dec: f64,
    pub gamma_inc: f64,
    pub gamma_inc_bar: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon_c: f64,
    pub mu_crit: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub omega_s: f64,
    /// `None`: half of the admissible upper bound.
    pub gamma_s: Option<f64>,
    pub omega_c: f64,
    pub lambda: f64,
    pub rho_end: f64,
    pub max_evals: usize,
    pub sfista_cap: usize,
    pub criticality_cap: usize,
    /// Points may sit within `containment * max(Delta, rho)` of the iterate
    /// before geometry improvement is forced.
    pub containment: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            delta0_init: None,
            delta_max: 100.0,
            gamma_dec: 0.5,
            gamma_inc: 2.0,
            gamma_inc_bar: 4.0,
            alpha1: 0.1,
            alpha2: 0.5,
            beta1: 0.1,
            beta2: 0.7,
            epsilon_c: 1e-2,
            mu_crit: 1.0,
            e1: 0.9,
            e2: 1.0,
            e3: 0.5,
            omega_s: 0.1,
            gamma_s: None,
            omega_c: 0.5,
            lambda: 100.0,
            rho_end: 1e-8,
            max_evals: 1000,
            sfista_cap: DEFAULT_ITERATION_CAP,
            criticality_cap: 50,
            containment: 5.0,
        }
    }
}

impl SolverConfig {
    /// `c1 = min(1, Delta_max^-2) / 2`.
    pub fn c1(&self) -> f64 {
        0.5 * (1.0f64).min(self.delta_max.powi(-2))
    }

    /// Strict upper bound `2 e3 c1 / (1 + sqrt(1 + 2 e3 c1))` on `gamma_S`.
    pub fn gamma_s_bound(&self) -> f64 {
        let a = 2.0 * self.e3 * self.c1();
        a / (1.0 + (1.0 + a).sqrt())
    }

    pub fn gamma_s(&self) -> f64 {
        self.gamma_s.unwrap_or_else(|| 0.5 * self.gamma_s_bound())
    }

    pub fn initial_radius(&self, x0: &DVector<f64>) -> f64 {
        self.delta0_init
            .unwrap_or_else(|| 0.1 * x0.amax().max(1.0))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if let Some(d0) = self.delta0_init {
            if !(d0 > 0.0 && d0 <= self.delta_max) {
                return fail("need 0 < delta0_init <= delta_max");
            }
        }
        if !(self.delta_max > 1.0) {
            return fail("need delta_max > 1");
        }
        if !(0.0 < self.gamma_dec && self.gamma_dec < 1.0 && 1.0 < self.gamma_inc && self.gamma_inc <= self.gamma_inc_bar) {
            return fail("need 0 < gamma_dec < 1 < gamma_inc <= gamma_inc_bar");
        }
        if !(0.0 < self.alpha1 && self.alpha1 < self.alpha2 && self.alpha2 < 1.0) {
            return fail("need 0 < alpha1 < alpha2 < 1");
        }
        if !(0.0 < self.beta1 && self.beta1 <= self.beta2 && self.beta2 < 1.0) {
            return fail("need 0 < beta1 <= beta2 < 1");
        }
        if !(self.epsilon_c > 0.0 && self.mu_crit > 0.0) {
            return fail("need epsilon_c > 0 and mu_crit > 0");
        }
        if !(0.0 < self.e1 && self.e1 < 1.0 && self.e2 > 0.0 && 0.0 < self.e3 && self.e3 < 1.0) {
            return fail("need 0 < e1 < 1, e2 > 0, 0 < e3 < 1");
        }
        if !(0.0 < self.omega_s && self.omega_s < 1.0) {
            return fail("need 0 < omega_s < 1");
        }
        let gs = self.gamma_s();
        if !(gs > 0.0 && gs < self.gamma_s_bound()) {
            return fail("need 0 < gamma_s < 2 e3 c1 / (1 + sqrt(1 + 2 e3 c1))");
        }
        if !(0.0 < self.omega_c && self.omega_c < 1.0) {
            return fail("need 0 < omega_c < 1");
        }
        if !(self.lambda >= 1.0) {
            return fail("need lambda >= 1");
        }
        if !(self.rho_end > 0.0) {
            return fail("need rho_end > 0");
        }
        if self.max_evals == 0 || self.sfista_cap == 0 || self.criticality_cap == 0 {
            return fail("need positive max_evals, sfista_cap and criticality_cap");
        }
        if !(self.containment >= 1.0) {
            return fail("need containment >= 1");
        }
        Ok(())
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Parse {
            input: format!("{key}={value}"),
            reason: "invalid value".into(),
        };
        let float = || value.trim().parse::<f64>().map_err(|_| bad());
        let int = || value.trim().parse::<usize>().map_err(|_| bad());
        match key.trim() {
            "delta0_init" => self.delta0_init = Some(float()?),
            "delta_max" => self.delta_max = float()?,
            "gamma_dec" => self.gamma_dec = float()?,
            "gamma_inc" => self.gamma_inc = float()?,
            "gamma_inc_bar" => self.gamma_inc_bar = float()?,
            "alpha1" => self.alpha1 = float()?,
            "alpha2" => self.alpha2 = float()?,
            "beta1" => self.beta1 = float()?,
            "beta2" => self.beta2 = float()?,
            "epsilon_c" => self.epsilon_c = float()?,
            "mu_crit" => self.mu_crit = float()?,
            "e1" => self.e1 = float()?,
            "e2" => self.e2 = float()?,
            "e3" => self.e3 = float()?,
            "omega_s" => self.omega_s = float()?,
            "gamma_s" => self.gamma_s = Some(float()?),
            "omega_c" => self.omega_c = float()?,
            "lambda" => self.lambda = float()?,
            "rho_end" => self.rho_end = float()?,
            "max_evals" => self.max_evals = int()?,
            "sfista_cap" => self.sfista_cap = int()?,
            "criticality_cap" => self.criticality_cap = int()?,
            "containment" => self.containment = float()?,
            other => {
                return Err(Error::Parse {
                    input: other.to_string(),
                    reason: "unknown configuration key".into(),
                })
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Budget,
    RhoFloor,
    Criticality,
    /// A model or geometry point produced a nonfinite residual.
    EvaluationFailure,
    /// The smoothing parameter reached its floor or the outer cap.
    GammaFloor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Safety,
    Successful,
    ModelImproving,
    Unsuccessful,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub criticality: usize,
    pub safety: usize,
    pub successful: usize,
    pub model_improving: usize,
    pub unsuccessful: usize,
}

impl PhaseCounts {
    pub(crate) fn bump(&mut self, phase: Phase) {
        match phase {
            Phase::Safety => self.safety += 1,
            Phase::Successful => self.successful += 1,
            Phase::ModelImproving => self.model_improving += 1,
            Phase::Unsuccessful => self.unsuccessful += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub x: DVector<f64>,
    /// Objective as seen by the solver (`+inf` outside `dom h`).
    pub phi: f64,
}

/// One completed iteration, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub phase: Phase,
    pub criticality_passes: usize,
    /// `Phi(x_k)` at the start of the iteration.
    pub phi: f64,
    pub delta: f64,
    pub rho: f64,
    pub tau: f64,
    pub eta_bar: f64,
    pub step_norm: f64,
    pub model_decrease: f64,
    pub required_decrease: f64,
    pub hessian_norm: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_best: DVector<f64>,
    pub phi_best: f64,
    pub history: Vec<Evaluation>,
    pub termination: Termination,
    pub phase_counts: PhaseCounts,
    pub iterations: Vec<IterationRecord>,
    pub max_hessian_norm: f64,
}

/// Snapshot handed to the progress callback after every iteration.
#[derive(Debug, Clone)]
pub struct Progress<'a> {
    pub k: usize,
    pub x: &'a DVector<f64>,
    pub phi: f64,
    pub delta: f64,
    pub rho: f64,
    pub eta_bar: f64,
    pub phase: Phase,
}

/// Outcome of the acceptance test and radius update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusUpdate {
    pub delta_next: f64,
    pub accepted: bool,
    /// `R < beta1` and the new radius equals `rho`: the caller shrinks
    /// `(rho, Delta)` to `(alpha1 rho, alpha2 rho)` on an unsuccessful
    /// iteration.
    pub hits_rho: bool,
}

pub fn radius_update(ratio: f64, delta: f64, step_norm: f64, rho: f64, tau: f64, cfg: &SolverConfig) -> RadiusUpdate {
    if ratio >= cfg.beta2 {
        RadiusUpdate {
            delta_next: (cfg.gamma_inc * delta).max(cfg.gamma_inc_bar * step_norm).min(cfg.delta_max),
            accepted: true,
            hits_rho: false,
        }
    } else if ratio >= cfg.beta1 {
        RadiusUpdate {
            delta_next: (cfg.gamma_dec * delta).max(step_norm).max(rho),
            accepted: true,
            hits_rho: false,
        }
    } else {
        // Dividing by tau < 1 can leave the radius unchanged or larger, which
        // repeats the same rejected step forever; fall back to gamma_dec.
        let printed = ((cfg.gamma_dec * delta).min(step_norm) / tau).max(rho);
        let delta_next = if printed < delta {
            printed
        } else {
            (cfg.gamma_dec * delta).max(rho)
        };
        RadiusUpdate {
            delta_next,
            accepted: false,
            hits_rho: delta_next == rho,
        }
    }
}

/// `tau_k = min(eta_bar / (||g_k|| + L_h), 1)`.
pub fn safety_scale(eta_bar: f64, gradient_norm: f64, lipschitz: f64) -> f64 {
    let denom = gradient_norm + lipschitz;
    if denom > 0.0 {
        (eta_bar / denom).min(1.0)
    } else {
        1.0
    }
}

/// Budgeted residual evaluations with a running history.
pub(crate) struct Evaluator<'a, P: LeastSquares> {
    problem: &'a mut P,
    h: &'a Regularizer,
    max_evals: usize,
    pub(crate) history: Vec<Evaluation>,
}

impl<'a, P: LeastSquares> Evaluator<'a, P> {
    pub(crate) fn new(problem: &'a mut P, h: &'a Regularizer, max_evals: usize) -> Self {
        Self {
            problem,
            h,
            max_evals,
            history: Vec::new(),
        }
    }

    pub(crate) fn eval(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if self.history.len() >= self.max_evals {
            return Err(Error::BudgetExhausted);
        }
        let r = self.problem.residuals(x)?;
        let phi = match self.h.value(x) {
            Ok(hv) => 0.5 * r.norm_squared() + hv,
            Err(_) => f64::INFINITY,
        };
        self.history.push(Evaluation { x: x.clone(), phi });
        Ok(r)
    }

    /// Evaluate a trial step. A nonfinite residual counts against the budget
    /// and is reported as `None` (objective `+inf`) instead of an error.
    pub(crate) fn eval_trial(&mut self, x: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        match self.eval(x) {
            Ok(r) => Ok(Some(r)),
            Err(Error::Evaluation(_)) => {
                self.history.push(Evaluation {
                    x: x.clone(),
                    phi: f64::INFINITY,
                });
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    pub(crate) fn exhausted(&self) -> bool {
        self.history.len() >= self.max_evals
    }

    pub(crate) fn finish(
        self,
        termination: Termination,
        phase_counts: PhaseCounts,
        iterations: Vec<IterationRecord>,
        max_hessian_norm: f64,
    ) -> SolveResult {
        let (x_best, phi_best) = self
            .history
            .iter()
            .min_by(|a, b| a.phi.total_cmp(&b.phi))
            .map(|e| (e.x.clone(), e.phi))
            .unwrap_or_else(|| (DVector::zeros(0), f64::INFINITY));
        SolveResult {
            x_best,
            phi_best,
            history: self.history,
            termination,
            phase_counts,
            iterations,
            max_hessian_norm,
        }
    }
}

pub(crate) fn build_model(set: &InterpolationSet) -> Result<QuadraticModel> {
    let rm = build_residual_model(set)?;
    let f = 0.5 * set.base_residual().norm_squared();
    Ok(gauss_newton_model(&rm, f))
}

/// Build the model, repairing the geometry first if the set is singular.
pub(crate) fn model_with_repair<P: LeastSquares>(
    set: &mut InterpolationSet,
    delta: f64,
    cfg: &SolverConfig,
    ev: &mut Evaluator<'_, P>,
) -> Result<QuadraticModel> {
    match build_model(set) {
        Ok(m) => Ok(m),
        Err(Error::SingularDirections { .. }) => {
            let center = set.base().clone();
            *set = improve_geometry(set, &center, delta, cfg.lambda, delta, |x| ev.eval(x))?;
            build_model(set)
        }
        Err(e) => Err(e),
    }
}

pub(crate) fn is_budget(e: &Error) -> bool {
    matches!(e, Error::BudgetExhausted)
}

struct CriticalityOutcome {
    delta: f64,
    eta_bar: f64,
    direction: DVector<f64>,
    model: QuadraticModel,
    passes: usize,
}

/// Shrink the radius by `omega_C` until `Delta <= mu * eta_bar`, repairing
/// the geometry and re-estimating the criticality measure on every pass.
/// Returns `None` when the pass cap or `rho_end` is reached.
fn criticality_phase<P: LeastSquares>(
    set: &mut InterpolationSet,
    delta_init: f64,
    rho: f64,
    h: &Regularizer,
    cfg: &SolverConfig,
    ev: &mut Evaluator<'_, P>,
) -> Result<Option<CriticalityOutcome>> {
    let x_k = set.base().clone();
    let mut radius = delta_init;
    for pass in 1..=cfg.criticality_cap {
        if radius < cfg.rho_end {
            return Ok(None);
        }
        let containment = cfg.containment * radius.max(rho.min(radius));
        *set = improve_geometry(set, &x_k, radius, cfg.lambda, containment, |x| ev.eval(x))?;
        let model = model_with_repair(set, radius, cfg, ev)?;
        let (eta_bar, direction) = estimate_criticality(&model.gradient, h, &x_k, cfg.e2 * radius, cfg.sfista_cap);
        if radius <= cfg.mu_crit * eta_bar {
            return Ok(Some(CriticalityOutcome {
                delta: radius,
                eta_bar,
                direction,
                model,
                passes: pass,
            }));
        }
        radius *= cfg.omega_c;
    }
    Ok(None)
}

pub fn solve<P: LeastSquares>(
    problem: &mut P,
    x0: &DVector<f64>,
    h: &Regularizer,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve_with_callback(problem, x0, h, cfg, |_| {})
}

pub fn solve_with_callback<P, C>(
    problem: &mut P,
    x0: &DVector<f64>,
    h: &Regularizer,
    cfg: &SolverConfig,
    mut callback: C,
) -> Result<SolveResult>
where
    P: LeastSquares,
    C: FnMut(&Progress<'_>),
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

    let lh = h.lipschitz(n);
    let c1 = cfg.c1();
    let gamma_s = cfg.gamma_s();
    let mut ev = Evaluator::new(problem, h, cfg.max_evals);
    let mut counts = PhaseCounts::default();
    let mut records = Vec::new();
    let mut max_hess = 0.0f64;

    let mut delta_init = cfg.initial_radius(x0);
    let mut rho_init = delta_init;

    let r0 = match ev.eval(x0) {
        Ok(r) => r,
        Err(e) if is_budget(&e) => return Ok(ev.finish(Termination::Budget, counts, records, max_hess)),
        Err(e) => return Err(e),
    };
    let mut set = match InterpolationSet::coordinate_simplex(x0.clone(), r0, delta_init, |x| ev.eval(x)) {
        Ok(s) => s,
        Err(e) if is_budget(&e) => return Ok(ev.finish(Termination::Budget, counts, records, max_hess)),
        Err(e) => return Err(e),
    };
    let mut phi_k = ev.history[0].phi;

    let termination = 'outer: loop {
        let k = records.len();
        if rho_init <= cfg.rho_end {
            break Termination::RhoFloor;
        }
        if ev.exhausted() {
            break Termination::Budget;
        }
        let x_k = set.base().clone();

        macro_rules! attempt {
            ($e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(e) if is_budget(&e) => break 'outer Termination::Budget,
                    Err(Error::Evaluation(_)) => break 'outer Termination::EvaluationFailure,
                    Err(e) => return Err(e),
                }
            };
        }

        let mut model = attempt!(model_with_repair(&mut set, delta_init, cfg, &mut ev));
        let accuracy = ((1.0 - cfg.e1) * cfg.epsilon_c).min(cfg.e2 * delta_init);
        let (mut eta_bar, mut direction) = estimate_criticality(&model.gradient, h, &x_k, accuracy, cfg.sfista_cap);

        let (delta, rho, passes) = if eta_bar <= cfg.e1 * cfg.epsilon_c {
            counts.criticality += 1;
            match attempt!(criticality_phase(&mut set, delta_init, rho_init, h, cfg, &mut ev)) {
                Some(out) => {
                    model = out.model;
                    eta_bar = out.eta_bar;
                    direction = out.direction;
                    (out.delta, rho_init.min(out.delta), out.passes)
                }
                None => break Termination::Criticality,
            }
        } else {
            (delta_init, rho_init, 0)
        };
        max_hess = max_hess.max(model.hessian_norm);

        let mut step = solve_trust_region(&model, h, &x_k, delta, eta_bar, cfg.e3, c1, cfg.sfista_cap).step;
        let required = required_decrease(cfg.e3, c1, eta_bar, delta, model.hessian_norm);
        let mut decrease = model_decrease(&model, h, &x_k, &step);
        if decrease < required {
            let alt = criticality_step_search(&model, h, &x_k, delta, &direction);
            let alt_decrease = model_decrease(&model, h, &x_k, &alt);
            if alt_decrease > decrease {
                step = alt;
                decrease = alt_decrease;
            }
        }
        let step_norm = step.norm();
        let tau = safety_scale(eta_bar, model.gradient.norm(), lh);

        let mut record = IterationRecord {
            k,
            phase: Phase::Safety,
            criticality_passes: passes,
            phi: phi_k,
            delta,
            rho,
            tau,
            eta_bar,
            step_norm,
            model_decrease: decrease,
            required_decrease: required,
            hessian_norm: model.hessian_norm,
            ratio: None,
        };

        if step_norm < tau * gamma_s * rho {
            let delta_next = rho.max(cfg.omega_s * delta);
            let containment = cfg.containment * delta_next;
            set = attempt!(improve_geometry(&set, &x_k, delta_next, cfg.lambda, containment, |x| ev.eval(x)));
            if delta_next == rho {
                rho_init = cfg.alpha1 * rho;
                delta_init = cfg.alpha2 * rho;
            } else {
                rho_init = rho;
                delta_init = delta_next;
            }
            counts.bump(Phase::Safety);
            callback(&Progress {
                k,
                x: &x_k,
                phi: phi_k,
                delta,
                rho,
                eta_bar,
                phase: Phase::Safety,
            });
            records.push(record);
            continue;
        }

        let x_trial = &x_k + &step;
        let r_trial = attempt!(ev.eval_trial(&x_trial));
        let phi_trial = ev.history.last().map(|e| e.phi).unwrap_or(f64::INFINITY);
        let ratio = if decrease > 0.0 {
            (phi_k - phi_trial) / decrease
        } else {
            f64::NEG_INFINITY
        };
        record.ratio = Some(ratio);
        let upd = radius_update(ratio, delta, step_norm, rho, tau, cfg);

        let phase = if let (true, Some(r_trial)) = (upd.accepted, r_trial) {
            let t = replacement_index(&set, &x_trial);
            set.shift_base(t, x_trial, r_trial);
            phi_k = phi_trial;
            rho_init = rho;
            delta_init = upd.delta_next;
            Phase::Successful
        } else if !poisedness(&set, &x_k, delta).is_poised_within(cfg.lambda, cfg.containment * delta.max(rho)) {
            let containment = cfg.containment * upd.delta_next.max(rho);
            set = attempt!(improve_geometry(&set, &x_k, upd.delta_next, cfg.lambda, containment, |x| ev.eval(x)));
            rho_init = rho;
            delta_init = upd.delta_next;
            Phase::ModelImproving
        } else {
            if upd.hits_rho {
                rho_init = cfg.alpha1 * rho;
                delta_init = cfg.alpha2 * rho;
            } else {
                rho_init = rho;
                delta_init = upd.delta_next;
            }
            Phase::Unsuccessful
        };
        record.phase = phase;
        counts.bump(phase);
        callback(&Progress {
            k,
            x: set.base(),
            phi: phi_k,
            delta,
            rho,
            eta_bar,
            phase,
        });
        records.push(record);
    };

    Ok(ev.finish(termination, counts, records, max_hess))
}

/// Check the run invariants: monotone objective, sufficient decrease on
/// non-safety iterations, `rho <= Delta <= Delta_max`, nonincreasing `rho`,
/// `tau in (0, 1]` and the safety-entry rule. Returns one message per
/// violation.
pub fn audit(result: &SolveResult, cfg: &SolverConfig) -> Vec<String> {
    let mut out = Vec::new();
    let gamma_s = cfg.gamma_s();
    let mut prev: Option<&IterationRecord> = None;
    for it in &result.iterations {
        let k = it.k;
        if let Some(p) = prev {
            if it.phi > p.phi {
                out.push(format!("iteration {k}: objective increased {} -> {}", p.phi, it.phi));
            }
            if it.rho > p.rho * (1.0 + 1e-12) && it.criticality_passes == 0 {
                out.push(format!("iteration {k}: rho increased {} -> {}", p.rho, it.rho));
            }
        }
        if it.rho > it.delta * (1.0 + 1e-12) {
            out.push(format!("iteration {k}: rho {} > Delta {}", it.rho, it.delta));
        }
        if it.delta > cfg.delta_max * (1.0 + 1e-12) {
            out.push(format!("iteration {k}: Delta {} > Delta_max", it.delta));
        }
        if !(it.tau > 0.0 && it.tau <= 1.0) {
            out.push(format!("iteration {k}: tau {} outside (0, 1]", it.tau));
        }
        let safety = it.step_norm < it.tau * gamma_s * it.rho;
        if safety != (it.phase == Phase::Safety) {
            out.push(format!("iteration {k}: safety branch mismatch"));
        }
        if it.phase != Phase::Safety {
            let slack = 1e-12 * (1.0 + it.phi.abs());
            if it.model_decrease + slack < it.required_decrease {
                out.push(format!(
                    "iteration {k}: model decrease {} below required {}",
                    it.model_decrease, it.required_decrease
                ));
            }
        }
        prev = Some(it);
    }
    out
}
