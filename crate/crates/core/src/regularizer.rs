//! Convex regularizers `h` with proximal maps and Moreau envelopes.
//!
//! Every built-in regularizer is separable or a simple set indicator, so the
//! proximal operator has a closed form and the envelope is exact.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Relative slack accepted when testing membership of an indicator's set.
const DOMAIN_SLACK: f64 = 1e-9;

/// The nonsmooth convex term of the composite objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Zero,
    /// `lambda * ||x||_1`
    L1 { lambda: f64 },
    /// Indicator of the Euclidean ball; `center == None` means the origin.
    Ball {
        center: Option<DVector<f64>>,
        radius: f64,
    },
    /// Indicator of the box `[lo, hi]^n`.
    Box { lo: f64, hi: f64 },
}

/// Envelope value, gradient and prox point of `M_h^mu` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MoreauEvaluation {
    pub envelope_value: f64,
    pub envelope_gradient: DVector<f64>,
    pub prox_point: DVector<f64>,
    pub mu: f64,
}

impl Regularizer {
    pub fn l1(lambda: f64) -> Self {
        assert!(lambda >= 0.0, "l1 weight must be nonnegative");
        Regularizer::L1 { lambda }
    }

    pub fn ball(radius: f64) -> Self {
        assert!(radius > 0.0, "ball radius must be positive");
        Regularizer::Ball {
            center: None,
            radius,
        }
    }

    pub fn boxed(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi, "box bounds must satisfy lo <= hi");
        Regularizer::Box { lo, hi }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, Regularizer::Ball { .. } | Regularizer::Box { .. })
    }

    /// Euclidean Lipschitz constant `L_h` on `R^n` (indicators report 0:
    /// they are constant on their domain).
    pub fn lipschitz(&self, n: usize) -> f64 {
        match self {
            Regularizer::L1 { lambda } => lambda * (n as f64).sqrt(),
            _ => 0.0,
        }
    }

    /// Lower bound `h_low`.
    pub fn lower_bound(&self) -> f64 {
        0.0
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            Regularizer::Zero | Regularizer::L1 { .. } => true,
            Regularizer::Ball { center, radius } => {
                let dist = match center {
                    Some(c) => (x - c).norm(),
                    None => x.norm(),
                };
                dist <= radius * (1.0 + DOMAIN_SLACK) + DOMAIN_SLACK
            }
            Regularizer::Box { lo, hi } => {
                let slack = DOMAIN_SLACK * (1.0 + lo.abs().max(hi.abs()));
                x.iter().all(|&v| v >= lo - slack && v <= hi + slack)
            }
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            Regularizer::Zero => Ok(0.0),
            Regularizer::L1 { lambda } => Ok(lambda * x.lp_norm(1)),
            _ if self.contains(x) => Ok(0.0),
            _ => Err(Error::OutsideDomain(self.to_string())),
        }
    }

    /// `argmin_z h(z) + ||z - y||^2 / (2 mu)`.
    pub fn prox(&self, mu: f64, y: &DVector<f64>) -> DVector<f64> {
        debug_assert!(mu > 0.0);
        match self {
            Regularizer::Zero => y.clone(),
            Regularizer::L1 { lambda } => {
                let t = mu * lambda;
                y.map(|v| v.signum() * (v.abs() - t).max(0.0))
            }
            Regularizer::Ball { center, radius } => match center {
                Some(c) => c + project_ball(&(y - c), *radius),
                None => project_ball(y, *radius),
            },
            Regularizer::Box { lo, hi } => y.map(|v| v.clamp(*lo, *hi)),
        }
    }

    pub fn moreau(&self, mu: f64, x: &DVector<f64>) -> MoreauEvaluation {
        let prox_point = self.prox(mu, x);
        let diff = x - &prox_point;
        let h_at_prox = match self {
            Regularizer::L1 { lambda } => lambda * prox_point.lp_norm(1),
            _ => 0.0,
        };
        let envelope_value = h_at_prox + diff.norm_squared() / (2.0 * mu);
        MoreauEvaluation {
            envelope_value,
            envelope_gradient: diff / mu,
            prox_point,
            mu,
        }
    }
}

/// Euclidean projection onto `B(0, radius)`.
pub fn project_ball(y: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = y.norm();
    if norm <= radius {
        y.clone()
    } else {
        y * (radius / norm)
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularizer::Zero => write!(f, "zero"),
            Regularizer::L1 { lambda } => write!(f, "l1:{lambda}"),
            Regularizer::Ball { radius, .. } => write!(f, "ball:{radius}"),
            Regularizer::Box { lo, hi } => write!(f, "box:{lo},{hi}"),
        }
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("expected a number"));
        let s_trim = s.trim();
        if s_trim == "zero" {
            return Ok(Regularizer::Zero);
        }
        let (kind, arg) = s_trim
            .split_once(':')
            .ok_or_else(|| bad("expected zero | l1:<lambda> | ball:<r> | box:<lo>,<hi>"))?;
        match kind {
            "l1" => {
                let lambda = num(arg)?;
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(bad("l1 weight must be finite and nonnegative"));
                }
                Ok(Regularizer::L1 { lambda })
            }
            "ball" => {
                let radius = num(arg)?;
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(bad("ball radius must be positive"));
                }
                Ok(Regularizer::ball(radius))
            }
            "box" => {
                let (lo, hi) = arg.split_once(',').ok_or_else(|| bad("box needs lo,hi"))?;
                let (lo, hi) = (num(lo)?, num(hi)?);
                if !(lo <= hi) {
                    return Err(bad("box bounds must satisfy lo <= hi"));
                }
                Ok(Regularizer::Box { lo, hi })
            }
            _ => Err(bad("unknown regularizer kind")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use proptest::prelude::*;

    #[test]
    fn values() {
        assert_eq!(Regularizer::l1(1.0).value(&dvector![3.0, -4.0]).unwrap(), 7.0);
        assert_eq!(Regularizer::Zero.value(&dvector![5.0, -1.0]).unwrap(), 0.0);
        assert_eq!(Regularizer::l1(0.5).value(&dvector![0.0, 0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn indicator_outside_domain_is_an_error() {
        let ball = Regularizer::ball(1.0);
        assert!(ball.value(&dvector![0.6, 0.8]).is_ok());
        assert!(matches!(ball.value(&dvector![2.0, 0.0]), Err(Error::OutsideDomain(_))));
        let bx = Regularizer::boxed(-1.0, 1.0);
        assert!(bx.value(&dvector![1.5, 0.0]).is_err());
    }

    #[test]
    fn prox_closed_forms() {
        let p = Regularizer::l1(1.0).prox(1.0, &dvector![2.0, -0.5, 0.0]);
        assert_eq!(p, dvector![1.0, 0.0, 0.0]);
        let p = Regularizer::Zero.prox(7.0, &dvector![1.0, 2.0]);
        assert_eq!(p, dvector![1.0, 2.0]);
        let p = Regularizer::l1(2.0).prox(0.25, &dvector![1.0, -1.0]);
        assert_eq!(p, dvector![0.5, -0.5]);
        let p = Regularizer::boxed(0.0, 1.0).prox(3.0, &dvector![-2.0, 0.5, 9.0]);
        assert_eq!(p, dvector![0.0, 0.5, 1.0]);
    }

    #[test]
    fn moreau_closed_forms() {
        let h = Regularizer::l1(1.0);
        let m = h.moreau(1.0, &dvector![0.0, 0.0]);
        assert_eq!(m.envelope_value, 0.0);
        assert_eq!(m.envelope_gradient, dvector![0.0, 0.0]);

        let m = h.moreau(1.0, &dvector![2.0, 0.0]);
        assert_eq!(m.prox_point, dvector![1.0, 0.0]);
        assert_abs_diff_eq!(m.envelope_value, 1.5, epsilon = 1e-15);
        assert_eq!(m.envelope_gradient, dvector![1.0, 0.0]);

        let m = Regularizer::ball(1.0).moreau(0.5, &dvector![3.0, 0.0]);
        assert_abs_diff_eq!(m.envelope_value, 4.0, epsilon = 1e-14);
    }

    #[test]
    fn moreau_matches_grid_search() {
        // per-coordinate brute force of h(z) + (z - x)^2 / (2 mu), step 1e-5
        let mu = 0.1;
        let x = dvector![0.05, -0.2];
        let grid_min = |xi: f64| {
            let mut best = f64::INFINITY;
            let mut z: f64 = -1.0;
            while z <= 1.0 {
                best = best.min(z.abs() + (z - xi).powi(2) / (2.0 * mu));
                z += 1e-5;
            }
            best
        };
        let oracle = grid_min(0.05) + grid_min(-0.2);
        let m = Regularizer::l1(1.0).moreau(mu, &x);
        assert!((m.envelope_value - oracle).abs() < 1e-6);
        assert_abs_diff_eq!(m.envelope_value, 0.0125 + 0.15, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_constants() {
        assert_abs_diff_eq!(Regularizer::l1(2.0).lipschitz(4), 4.0);
        assert_eq!(Regularizer::ball(1.0).lipschitz(3), 0.0);
        assert_eq!(Regularizer::Zero.lipschitz(3), 0.0);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["zero", "l1:1", "l1:0.5", "ball:2", "box:-1,3"] {
            let r: Regularizer = s.parse().unwrap();
            assert_eq!(r.to_string().parse::<Regularizer>().unwrap(), r);
        }
        assert!("l2:1".parse::<Regularizer>().is_err());
        assert!("l1:-1".parse::<Regularizer>().is_err());
        assert!("box:2,1".parse::<Regularizer>().is_err());
    }

    fn regs() -> impl Strategy<Value = Regularizer> {
        prop_oneof![
            Just(Regularizer::Zero),
            (0.0..3.0f64).prop_map(Regularizer::l1),
            (0.1..3.0f64).prop_map(Regularizer::ball),
            (-2.0..0.0f64, 0.0..2.0f64).prop_map(|(a, b)| Regularizer::boxed(a, b)),
        ]
    }

    fn vec3() -> impl Strategy<Value = DVector<f64>> {
        proptest::collection::vec(-5.0..5.0f64, 3).prop_map(DVector::from_vec)
    }

    proptest! {
        #[test]
        fn l1_is_convex(x in vec3(), y in vec3(), t in 0.0..=1.0f64, lambda in 0.0..3.0f64) {
            let h = Regularizer::l1(lambda);
            let mid = &x * t + &y * (1.0 - t);
            let lhs = h.value(&mid).unwrap();
            let rhs = t * h.value(&x).unwrap() + (1.0 - t) * h.value(&y).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn prox_is_optimal(h in regs(), y in vec3(), z in vec3(), mu in 0.01..2.0f64) {
            let p = h.prox(mu, &y);
            let obj = |v: &DVector<f64>| h.value(v).unwrap() + (v - &y).norm_squared() / (2.0 * mu);
            let z = h.prox(1.0, &z); // keep z in dom h
            prop_assert!(obj(&p) <= obj(&z) + 1e-10);
        }

        #[test]
        fn prox_is_nonexpansive(h in regs(), a in vec3(), b in vec3(), mu in 0.01..2.0f64) {
            let d = (h.prox(mu, &a) - h.prox(mu, &b)).norm();
            prop_assert!(d <= (a - b).norm() + 1e-12);
        }

        #[test]
        fn envelope_invariants(h in regs(), x in vec3(), mu in 0.01..2.0f64) {
            let m = h.moreau(mu, &x);
            let grad = (&x - &m.prox_point) / mu;
            prop_assert_eq!(&m.envelope_gradient, &grad);
            let direct = h.value(&m.prox_point).unwrap() + (&m.prox_point - &x).norm_squared() / (2.0 * mu);
            prop_assert!((m.envelope_value - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }
}
