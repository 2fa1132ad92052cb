//! Linear interpolation models of the residual vector and the geometry of
//! the interpolation set.
//!
//! The set always holds `n + 1` points with the base point `x_k` at index 0.
//! The residual model `r(x_k) + J_k s` is fixed by interpolating the other
//! `n` points; the Gauss-Newton model of `f = ||r||^2 / 2` follows from it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which the direction matrix counts as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// Points `y_0 = x_k, y_1, ..., y_n` and their residual vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationSet {
    points: Vec<DVector<f64>>,
    residuals: Vec<DVector<f64>>,
}

impl InterpolationSet {
    pub fn new(points: Vec<DVector<f64>>, residuals: Vec<DVector<f64>>) -> Result<Self> {
        let Some(n) = points.first().map(|p| p.len()) else {
            return Err(Error::InvalidConfig("empty interpolation set".into()));
        };
        if points.len() != n + 1 {
            return Err(Error::Dimension {
                expected: n + 1,
                got: points.len(),
            });
        }
        if residuals.len() != points.len() {
            return Err(Error::Dimension {
                expected: points.len(),
                got: residuals.len(),
            });
        }
        let m = residuals[0].len();
        if let Some(bad) = residuals.iter().find(|r| r.len() != m) {
            return Err(Error::Dimension {
                expected: m,
                got: bad.len(),
            });
        }
        Ok(Self { points, residuals })
    }

    /// Base point plus coordinate displacements `x + delta * e_i`.
    pub fn coordinate_simplex<F>(
        base: DVector<f64>,
        base_residual: DVector<f64>,
        delta: f64,
        mut evaluate: F,
    ) -> Result<Self>
    where
        F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    {
        let n = base.len();
        let mut points = Vec::with_capacity(n + 1);
        let mut residuals = Vec::with_capacity(n + 1);
        points.push(base.clone());
        residuals.push(base_residual);
        for i in 0..n {
            let mut y = base.clone();
            y[i] += delta;
            residuals.push(evaluate(&y)?);
            points.push(y);
        }
        Self::new(points, residuals)
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn base(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn base_residual(&self) -> &DVector<f64> {
        &self.residuals[0]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn residuals(&self) -> &[DVector<f64>] {
        &self.residuals
    }

    /// Replace the non-base point `t`.
    pub fn replace(&mut self, t: usize, point: DVector<f64>, residual: DVector<f64>) {
        assert!(t >= 1 && t < self.points.len(), "cannot replace the base point");
        self.points[t] = point;
        self.residuals[t] = residual;
    }

    /// Drop point `t` and insert a new base point at index 0.
    pub fn shift_base(&mut self, t: usize, point: DVector<f64>, residual: DVector<f64>) {
        self.points.remove(t);
        self.residuals.remove(t);
        self.points.insert(0, point);
        self.residuals.insert(0, residual);
    }

    /// `n x n` matrix whose row `t - 1` is `y_t - x_k`.
    pub fn directions(&self) -> DMatrix<f64> {
        let n = self.dim();
        let base = self.base();
        DMatrix::from_fn(n, n, |i, j| self.points[i + 1][j] - base[j])
    }

    pub fn max_distance(&self, center: &DVector<f64>) -> f64 {
        self.points
            .iter()
            .map(|p| (p - center).norm())
            .fold(0.0, f64::max)
    }
}

/// `m(x_k + s) = r(x_k) + J_k s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualModel {
    pub residual_at_base: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl ResidualModel {
    pub fn eval(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.residual_at_base + &self.jacobian * s
    }
}

/// Gauss-Newton model `p_k(x_k + s) = f + g^T s + s^T H s / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub constant: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub hessian_norm: f64,
}

impl QuadraticModel {
    pub fn value(&self, s: &DVector<f64>) -> f64 {
        self.constant + self.gradient.dot(s) + 0.5 * s.dot(&(&self.hessian * s))
    }

    pub fn gradient_at(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.gradient + &self.hessian * s
    }
}

fn condition_number(d: &DMatrix<f64>) -> f64 {
    let sv = d.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

fn check_conditioning(d: &DMatrix<f64>) -> Result<()> {
    let cond = condition_number(d);
    if cond > MAX_CONDITION || !cond.is_finite() {
        Err(Error::SingularDirections { cond })
    } else {
        Ok(())
    }
}

/// Solve the interpolation conditions for `J_k`, one row per residual.
pub fn build_residual_model(set: &InterpolationSet) -> Result<ResidualModel> {
    let n = set.dim();
    let m = set.base_residual().len();
    let d = set.directions();
    check_conditioning(&d)?;
    let base_r = set.base_residual();
    let rhs = DMatrix::from_fn(n, m, |t, i| set.residuals[t + 1][i] - base_r[i]);
    let jt = d
        .col_piv_qr()
        .solve(&rhs)
        .ok_or(Error::SingularDirections {
            cond: f64::INFINITY,
        })?;
    Ok(ResidualModel {
        residual_at_base: base_r.clone(),
        jacobian: jt.transpose(),
    })
}

/// Largest eigenvalue of a symmetric PSD matrix (its spectral norm).
pub fn symmetric_norm(h: &DMatrix<f64>) -> f64 {
    if h.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn gauss_newton_model(rm: &ResidualModel, f_at_base: f64) -> QuadraticModel {
    let j = &rm.jacobian;
    let gradient = j.transpose() * &rm.residual_at_base;
    let mut hessian = j.transpose() * j;
    // exact symmetry, so the eigen-solver sees a symmetric input
    hessian = (&hessian + hessian.transpose()) * 0.5;
    let hessian_norm = symmetric_norm(&hessian);
    QuadraticModel {
        constant: f_at_base,
        gradient,
        hessian,
        hessian_norm,
    }
}

/// Affine Lagrange polynomial `c + b^T (y - x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangePolynomial {
    pub base: DVector<f64>,
    pub constant: f64,
    pub gradient: DVector<f64>,
}

impl LagrangePolynomial {
    pub fn eval(&self, y: &DVector<f64>) -> f64 {
        self.constant + self.gradient.dot(&(y - &self.base))
    }

    /// Maximum of `|value|` over `B(center, delta)`.
    pub fn max_abs_on_ball(&self, center: &DVector<f64>, delta: f64) -> f64 {
        self.eval(center).abs() + delta * self.gradient.norm()
    }
}

pub fn lagrange_polynomials(set: &InterpolationSet) -> Result<Vec<LagrangePolynomial>> {
    let n = set.dim();
    let d = set.directions();
    check_conditioning(&d)?;
    let inv = d
        .try_inverse()
        .ok_or(Error::SingularDirections {
            cond: f64::INFINITY,
        })?;
    let base = set.base().clone();
    let mut polys = Vec::with_capacity(n + 1);
    let grad0 = -inv.column_sum();
    polys.push(LagrangePolynomial {
        base: base.clone(),
        constant: 1.0,
        gradient: grad0,
    });
    for t in 0..n {
        polys.push(LagrangePolynomial {
            base: base.clone(),
            constant: 0.0,
            gradient: inv.column(t).into_owned(),
        });
    }
    Ok(polys)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoisednessReport {
    /// `max_t max_{y in B} |L_t(y)|`; infinite for a singular set.
    pub lambda_value: f64,
    pub worst_index: usize,
    /// Largest distance from the ball center to a point of the set.
    pub max_distance: f64,
}

impl PoisednessReport {
    pub fn is_poised(&self, lambda_target: f64) -> bool {
        self.lambda_value <= lambda_target
    }

    pub fn is_poised_within(&self, lambda_target: f64, containment: f64) -> bool {
        self.is_poised(lambda_target) && self.max_distance <= containment
    }
}

pub fn poisedness(set: &InterpolationSet, center: &DVector<f64>, delta: f64) -> PoisednessReport {
    let max_distance = set.max_distance(center);
    match lagrange_polynomials(set) {
        Ok(polys) => {
            let (worst_index, lambda_value) = polys
                .iter()
                .map(|p| p.max_abs_on_ball(center, delta))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (t, v)| {
                    if v > best.1 {
                        (t, v)
                    } else {
                        best
                    }
                });
            PoisednessReport {
                lambda_value,
                worst_index,
                max_distance,
            }
        }
        Err(_) => PoisednessReport {
            lambda_value: f64::INFINITY,
            worst_index: degenerate_index(set).0,
            max_distance,
        },
    }
}

/// For a (nearly) singular set: the point contributing most to the
/// smallest singular direction and the direction missing from the span.
fn degenerate_index(set: &InterpolationSet) -> (usize, DVector<f64>) {
    let n = set.dim();
    let svd = set.directions().svd(true, true);
    let sv = &svd.singular_values;
    let j = sv.argmin().0;
    let u = svd.u.as_ref().expect("requested u");
    let v_t = svd.v_t.as_ref().expect("requested v_t");
    let t = (0..n)
        .max_by(|&a, &b| u[(a, j)].abs().total_cmp(&u[(b, j)].abs()))
        .unwrap_or(0);
    (t + 1, v_t.row(j).transpose())
}

/// Bound on single-point replacements before falling back to a fresh frame.
fn replacement_cap(n: usize) -> usize {
    3 * (n + 1)
}

/// Modify `set` until it is `lambda_target`-poised in `B(center, delta)` and
/// every point lies within `containment` of `center`.
///
/// Points outside the containment ball go first (farthest first). Then the
/// point with the largest Lagrange maximum moves to the maximizer of its
/// polynomial on the ball boundary. If the replacement cap is hit, the
/// non-base points are reset to an orthonormal frame of radius `delta`,
/// which is `(1 + sqrt(n))`-poised.
pub fn improve_geometry<F>(
    set: &InterpolationSet,
    center: &DVector<f64>,
    delta: f64,
    lambda_target: f64,
    containment: f64,
    mut evaluate: F,
) -> Result<InterpolationSet>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    assert!(lambda_target >= 1.0, "poisedness target must be >= 1");
    assert!(delta > 0.0);
    let containment = containment.max(delta);
    let n = set.dim();
    let mut current = set.clone();

    for _ in 0..replacement_cap(n) {
        // points too far away
        let far = (1..current.len())
            .map(|t| (t, (&current.points[t] - center).norm()))
            .filter(|&(_, dist)| dist > containment)
            .max_by(|a, b| a.1.total_cmp(&b.1));

        let (t, new_point) = if let Some((t, _)) = far {
            (t, replacement_point(&current, t, center, delta))
        } else {
            let report = poisedness(&current, center, delta);
            if report.is_poised(lambda_target) {
                return Ok(current);
            }
            if report.lambda_value.is_infinite() {
                let (t, dir) = degenerate_index(&current);
                (t, center + dir * delta)
            } else {
                let t = if report.worst_index == 0 {
                    worst_non_base(&current, center, delta)
                } else {
                    report.worst_index
                };
                (t, replacement_point(&current, t, center, delta))
            }
        };
        let r = evaluate(&new_point)?;
        current.replace(t, new_point, r);
    }

    let report = poisedness(&current, center, delta);
    if report.is_poised_within(lambda_target, containment) {
        return Ok(current);
    }
    reset_to_frame(&current, center, delta, &mut evaluate)
}

fn worst_non_base(set: &InterpolationSet, center: &DVector<f64>, delta: f64) -> usize {
    match lagrange_polynomials(set) {
        Ok(polys) => (1..polys.len())
            .max_by(|&a, &b| {
                polys[a]
                    .max_abs_on_ball(center, delta)
                    .total_cmp(&polys[b].max_abs_on_ball(center, delta))
            })
            .unwrap_or(1),
        Err(_) => degenerate_index(set).0,
    }
}

/// Maximizer of `|L_t|` on `B(center, delta)`, or a fresh direction when
/// the Lagrange polynomials are unavailable.
fn replacement_point(
    set: &InterpolationSet,
    t: usize,
    center: &DVector<f64>,
    delta: f64,
) -> DVector<f64> {
    if let Ok(polys) = lagrange_polynomials(set) {
        let p = &polys[t];
        let gnorm = p.gradient.norm();
        if gnorm > 0.0 {
            let unit = &p.gradient / gnorm;
            let plus = center + &unit * delta;
            let minus = center - &unit * delta;
            return if p.eval(&plus).abs() >= p.eval(&minus).abs() {
                plus
            } else {
                minus
            };
        }
    }
    // direction orthogonal to the remaining directions
    let n = set.dim();
    let base = set.base();
    let others: Vec<DVector<f64>> = (1..set.len())
        .filter(|&s| s != t)
        .map(|s| &set.points[s] - base)
        .collect();
    let mut best = DVector::zeros(n);
    let mut best_norm = -1.0;
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let q = gram_schmidt_residual(&others, e);
        let qn = q.norm();
        if qn > best_norm {
            best_norm = qn;
            best = q;
        }
    }
    center + best.normalize() * delta
}

fn gram_schmidt_residual(basis: &[DVector<f64>], mut v: DVector<f64>) -> DVector<f64> {
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(basis.len());
    for b in basis {
        let mut w = b.clone();
        for q in &ortho {
            w -= q * q.dot(&w);
        }
        let wn = w.norm();
        if wn > 1e-14 {
            ortho.push(w / wn);
        }
    }
    for q in &ortho {
        v -= q * q.dot(&v);
    }
    v
}

fn reset_to_frame<F>(
    set: &InterpolationSet,
    center: &DVector<f64>,
    delta: f64,
    evaluate: &mut F,
) -> Result<InterpolationSet>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = set.dim();
    let d = set.directions();
    let q = d.transpose().qr().q();
    let mut out = set.clone();
    for t in 1..=n {
        let mut dir = q.column(t - 1).into_owned();
        if dir.norm() == 0.0 {
            dir = DVector::zeros(n);
            dir[t - 1] = 1.0;
        }
        let y = center + dir * delta;
        let r = evaluate(&y)?;
        out.replace(t, y, r);
    }
    Ok(out)
}

/// Index to drop when `new_point` joins the set after a successful step:
/// maximizes `||y_t - x_new|| * |L_t(x_new)|`.
pub fn replacement_index(set: &InterpolationSet, new_point: &DVector<f64>) -> usize {
    let dist = |t: usize| (&set.points[t] - new_point).norm();
    match lagrange_polynomials(set) {
        Ok(polys) => (0..set.len())
            .max_by(|&a, &b| {
                let ma = dist(a) * polys[a].eval(new_point).abs();
                let mb = dist(b) * polys[b].eval(new_point).abs();
                ma.total_cmp(&mb)
            })
            .unwrap_or(0),
        Err(_) => (0..set.len())
            .max_by(|&a, &b| dist(a).total_cmp(&dist(b)))
            .unwrap_or(0),
    }
}
