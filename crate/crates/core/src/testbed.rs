//! Nonlinear least-squares test problems (Moré, Garbow & Hillstrom
//! definitions with their standard starting points) and noise models.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Anything that maps `x` to a residual vector. `&mut self` lets wrappers
/// count evaluations.
pub trait LeastSquares {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn residuals(&mut self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

type ResidualFn = fn(&[f64]) -> Vec<f64>;

#[derive(Clone)]
pub struct Problem {
    pub name: &'static str,
    pub n: usize,
    pub m: usize,
    pub x0: DVector<f64>,
    residual: ResidualFn,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .finish()
    }
}

impl Problem {
    /// Noiseless residuals.
    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
            });
        }
        let r = DVector::from_vec((self.residual)(x.as_slice()));
        debug_assert_eq!(r.len(), self.m);
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(Error::Evaluation(format!("{}: nonfinite residual", self.name)))
        }
    }

    /// `f(x) = ||r(x)||^2 / 2`, noiseless.
    pub fn f(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * self.eval(x)?.norm_squared())
    }
}

impl LeastSquares for Problem {
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn residuals(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.eval(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    /// `r_i (1 + e_i)`
    Multiplicative,
    /// `r_i + e_i`
    Additive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            kind: NoiseKind::None,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseModel { seed, ..self }
    }

    pub fn is_noiseless(&self) -> bool {
        self.kind == NoiseKind::None || self.sigma == 0.0
    }

    /// Apply the noise for evaluation number `index`. The draws depend only on
    /// `(seed, index, component)`: a ChaCha stream keyed by the seed with the
    /// evaluation index as stream id.
    pub fn apply(&self, r: &DVector<f64>, index: u64) -> DVector<f64> {
        if self.kind == NoiseKind::None {
            return r.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        r.map(|ri| {
            let e: f64 = StandardNormal.sample(&mut rng);
            let e = self.sigma * e;
            match self.kind {
                NoiseKind::Multiplicative => ri * (1.0 + e),
                NoiseKind::Additive => ri + e,
                NoiseKind::None => ri,
            }
        })
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Multiplicative => write!(f, "mult:{}", self.sigma),
            NoiseKind::Additive => write!(f, "add:{}", self.sigma),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let s = s.trim();
        if s == "none" {
            return Ok(NoiseModel::none());
        }
        let (kind, sigma) = s
            .split_once(':')
            .ok_or_else(|| bad("expected none | mult:<sigma> | add:<sigma>"))?;
        let sigma: f64 = sigma.trim().parse().map_err(|_| bad("sigma must be a number"))?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(bad("sigma must be finite and nonnegative"));
        }
        let kind = match kind {
            "mult" => NoiseKind::Multiplicative,
            "add" => NoiseKind::Additive,
            _ => return Err(bad("unknown noise kind")),
        };
        Ok(NoiseModel { kind, sigma, seed: 0 })
    }
}

/// A problem seen through a noise model; counts evaluations so every call
/// draws fresh noise.
#[derive(Debug, Clone)]
pub struct NoisyProblem<'a> {
    pub problem: &'a Problem,
    pub noise: NoiseModel,
    evaluations: u64,
}

impl<'a> NoisyProblem<'a> {
    pub fn new(problem: &'a Problem, noise: NoiseModel) -> Self {
        Self {
            problem,
            noise,
            evaluations: 0,
        }
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

impl LeastSquares for NoisyProblem<'_> {
    fn n(&self) -> usize {
        self.problem.n
    }
    fn m(&self) -> usize {
        self.problem.m
    }
    fn residuals(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let r = self.problem.eval(x)?;
        let out = self.noise.apply(&r, self.evaluations);
        self.evaluations += 1;
        Ok(out)
    }
}

/// Residual map given as a closure.
pub struct FnLeastSquares<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnLeastSquares<F>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F> LeastSquares for FnLeastSquares<F>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    fn n(&self) -> usize {
        self.n
    }
    fn m(&self) -> usize {
        self.m
    }
    fn residuals(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let r = (self.f)(x);
        if r.iter().all(|v| v.is_finite()) {
            Ok(r)
        } else {
            Err(Error::Evaluation("nonfinite residual".into()))
        }
    }
}

// ---------------------------------------------------------------------------
// problem definitions

fn rosenbrock(x: &[f64]) -> Vec<f64> {
    vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]
}

fn freudenstein_roth(x: &[f64]) -> Vec<f64> {
    vec![
        -13.0 + x[0] + ((5.0 - x[1]) * x[1] - 2.0) * x[1],
        -29.0 + x[0] + ((x[1] + 1.0) * x[1] - 14.0) * x[1],
    ]
}

fn brown_badly_scaled(x: &[f64]) -> Vec<f64> {
    vec![x[0] - 1e6, x[1] - 2e-6, x[0] * x[1] - 2.0]
}

fn beale(x: &[f64]) -> Vec<f64> {
    [1.5, 2.25, 2.625]
        .iter()
        .enumerate()
        .map(|(i, y)| y - x[0] * (1.0 - x[1].powi(i as i32 + 1)))
        .collect()
}

fn jennrich_sampson(x: &[f64]) -> Vec<f64> {
    (1..=10)
        .map(|i| {
            let i = i as f64;
            2.0 + 2.0 * i - ((i * x[0]).exp() + (i * x[1]).exp())
        })
        .collect()
}

fn helical_valley(x: &[f64]) -> Vec<f64> {
    let tp = 2.0 * std::f64::consts::PI;
    let theta = if x[0] > 0.0 {
        (x[1] / x[0]).atan() / tp
    } else if x[0] < 0.0 {
        (x[1] / x[0]).atan() / tp + 0.5
    } else {
        0.25 * x[1].signum()
    };
    vec![
        10.0 * (x[2] - 10.0 * theta),
        10.0 * ((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0),
        x[2],
    ]
}

const BARD_Y: [f64; 15] = [
    0.14, 0.18, 0.22, 0.25, 0.29, 0.32, 0.35, 0.39, 0.37, 0.58, 0.73, 0.96, 1.34, 2.10, 4.39,
];

fn bard(x: &[f64]) -> Vec<f64> {
    (1..=15)
        .map(|i| {
            let u = i as f64;
            let v = 16.0 - u;
            let w = u.min(v);
            BARD_Y[i - 1] - (x[0] + u / (v * x[1] + w * x[2]))
        })
        .collect()
}

const GAUSSIAN_Y: [f64; 15] = [
    0.0009, 0.0044, 0.0175, 0.0540, 0.1295, 0.2420, 0.3521, 0.3989, 0.3521, 0.2420, 0.1295, 0.0540,
    0.0175, 0.0044, 0.0009,
];

fn gaussian(x: &[f64]) -> Vec<f64> {
    (1..=15)
        .map(|i| {
            let t = (8.0 - i as f64) / 2.0;
            x[0] * (-0.5 * x[1] * (t - x[2]).powi(2)).exp() - GAUSSIAN_Y[i - 1]
        })
        .collect()
}

fn box3d(x: &[f64]) -> Vec<f64> {
    (1..=10)
        .map(|i| {
            let t = 0.1 * i as f64;
            (-t * x[0]).exp() - (-t * x[1]).exp() - x[2] * ((-t).exp() - (-10.0 * t).exp())
        })
        .collect()
}

fn powell_singular(x: &[f64]) -> Vec<f64> {
    vec![
        x[0] + 10.0 * x[1],
        5f64.sqrt() * (x[2] - x[3]),
        (x[1] - 2.0 * x[2]).powi(2),
        10f64.sqrt() * (x[0] - x[3]).powi(2),
    ]
}

fn wood(x: &[f64]) -> Vec<f64> {
    vec![
        10.0 * (x[1] - x[0] * x[0]),
        1.0 - x[0],
        90f64.sqrt() * (x[3] - x[2] * x[2]),
        1.0 - x[2],
        10f64.sqrt() * (x[1] + x[3] - 2.0),
        (x[1] - x[3]) / 10f64.sqrt(),
    ]
}

const KOWALIK_Y: [f64; 11] = [
    0.1957, 0.1947, 0.1735, 0.1600, 0.0844, 0.0627, 0.0456, 0.0342, 0.0323, 0.0235, 0.0246,
];
const KOWALIK_U: [f64; 11] = [
    4.0, 2.0, 1.0, 0.5, 0.25, 0.167, 0.125, 0.1, 0.0833, 0.0714, 0.0625,
];

fn kowalik_osborne(x: &[f64]) -> Vec<f64> {
    KOWALIK_Y
        .iter()
        .zip(KOWALIK_U.iter())
        .map(|(y, u)| y - x[0] * (u * u + u * x[1]) / (u * u + u * x[2] + x[3]))
        .collect()
}

fn brown_dennis(x: &[f64]) -> Vec<f64> {
    (1..=20)
        .map(|i| {
            let t = i as f64 / 5.0;
            (x[0] + t * x[1] - t.exp()).powi(2) + (x[2] + x[3] * t.sin() - t.cos()).powi(2)
        })
        .collect()
}

const OSBORNE1_Y: [f64; 33] = [
    0.844, 0.908, 0.932, 0.936, 0.925, 0.908, 0.881, 0.850, 0.818, 0.784, 0.751, 0.718, 0.685,
    0.658, 0.628, 0.603, 0.580, 0.558, 0.538, 0.522, 0.506, 0.490, 0.478, 0.467, 0.457, 0.448,
    0.438, 0.431, 0.424, 0.420, 0.414, 0.411, 0.406,
];

fn osborne1(x: &[f64]) -> Vec<f64> {
    OSBORNE1_Y
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let t = 10.0 * i as f64;
            y - (x[0] + x[1] * (-t * x[3]).exp() + x[2] * (-t * x[4]).exp())
        })
        .collect()
}

fn biggs_exp6(x: &[f64]) -> Vec<f64> {
    (1..=13)
        .map(|i| {
            let t = 0.1 * i as f64;
            let y = (-t).exp() - 5.0 * (-10.0 * t).exp() + 3.0 * (-4.0 * t).exp();
            x[2] * (-t * x[0]).exp() - x[3] * (-t * x[1]).exp() + x[5] * (-t * x[4]).exp() - y
        })
        .collect()
}

fn watson(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut r = Vec::with_capacity(31);
    for i in 1..=29 {
        let t = i as f64 / 29.0;
        let mut s1 = 0.0;
        for j in 2..=n {
            s1 += (j as f64 - 1.0) * x[j - 1] * t.powi(j as i32 - 2);
        }
        let mut s2 = 0.0;
        for j in 1..=n {
            s2 += x[j - 1] * t.powi(j as i32 - 1);
        }
        r.push(s1 - s2 * s2 - 1.0);
    }
    r.push(x[0]);
    r.push(x[1] - x[0] * x[0] - 1.0);
    r
}

fn trigonometric(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let sum_cos: f64 = x.iter().map(|v| v.cos()).sum();
    x.iter()
        .enumerate()
        .map(|(i, &xi)| n - sum_cos + (i as f64 + 1.0) * (1.0 - xi.cos()) - xi.sin())
        .collect()
}

const OSBORNE2_Y: [f64; 65] = [
    1.366, 1.191, 1.112, 1.013, 0.991, 0.885, 0.831, 0.847, 0.786, 0.725, 0.746, 0.679, 0.608,
    0.655, 0.616, 0.606, 0.602, 0.626, 0.651, 0.724, 0.649, 0.649, 0.694, 0.644, 0.624, 0.661,
    0.612, 0.558, 0.533, 0.495, 0.500, 0.423, 0.395, 0.375, 0.372, 0.391, 0.396, 0.405, 0.428,
    0.429, 0.523, 0.562, 0.607, 0.653, 0.672, 0.708, 0.633, 0.668, 0.645, 0.632, 0.591, 0.559,
    0.597, 0.625, 0.739, 0.710, 0.729, 0.720, 0.636, 0.581, 0.428, 0.292, 0.162, 0.098, 0.054,
];

fn osborne2(x: &[f64]) -> Vec<f64> {
    OSBORNE2_Y
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let t = i as f64 / 10.0;
            y - (x[0] * (-t * x[4]).exp()
                + x[1] * (-(t - x[8]).powi(2) * x[5]).exp()
                + x[2] * (-(t - x[9]).powi(2) * x[6]).exp()
                + x[3] * (-(t - x[10]).powi(2) * x[7]).exp())
        })
        .collect()
}

fn make(name: &'static str, m: usize, x0: &[f64], residual: ResidualFn) -> Problem {
    Problem {
        name,
        n: x0.len(),
        m,
        x0: DVector::from_column_slice(x0),
        residual,
    }
}

/// Every registered problem, in registry order.
pub fn all_problems() -> Vec<Problem> {
    vec![
        make("rosenbrock", 2, &[-1.2, 1.0], rosenbrock),
        make("freudenstein_roth", 2, &[0.5, -2.0], freudenstein_roth),
        make("brown_badly_scaled", 3, &[1.0, 1.0], brown_badly_scaled),
        make("beale", 3, &[1.0, 1.0], beale),
        make("jennrich_sampson", 10, &[0.3, 0.4], jennrich_sampson),
        make("helical_valley", 3, &[-1.0, 0.0, 0.0], helical_valley),
        make("bard", 15, &[1.0, 1.0, 1.0], bard),
        make("gaussian", 15, &[0.4, 1.0, 0.0], gaussian),
        make("box3d", 10, &[0.0, 10.0, 20.0], box3d),
        make("powell_singular", 4, &[3.0, -1.0, 0.0, 1.0], powell_singular),
        make("wood", 6, &[-3.0, -1.0, -3.0, -1.0], wood),
        make("kowalik_osborne", 11, &[0.25, 0.39, 0.415, 0.39], kowalik_osborne),
        make("brown_dennis", 20, &[25.0, 5.0, -5.0, -1.0], brown_dennis),
        make("osborne1", 33, &[0.5, 1.5, -1.0, 0.01, 0.02], osborne1),
        make("biggs_exp6", 13, &[1.0, 2.0, 1.0, 1.0, 1.0, 1.0], biggs_exp6),
        make("watson", 31, &[0.0; 6], watson),
        make("trigonometric", 10, &[0.1; 10], trigonometric),
        make(
            "osborne2",
            65,
            &[1.3, 0.65, 0.65, 0.7, 0.6, 3.0, 5.0, 7.0, 2.0, 4.5, 5.5],
            osborne2,
        ),
    ]
}

pub fn list_problems() -> Vec<&'static str> {
    all_problems().into_iter().map(|p| p.name).collect()
}

pub fn get_problem(name: &str) -> Result<Problem> {
    all_problems()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownProblem(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn registry_basics() {
        let names = list_problems();
        assert!(names.len() >= 12);
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        for p in all_problems() {
            assert!((2..=12).contains(&p.n), "{}", p.name);
            assert!((2..=65).contains(&p.m), "{}", p.name);
            assert!(p.m >= p.n, "{}", p.name);
            let r = p.eval(&p.x0).unwrap();
            assert_eq!(r.len(), p.m, "{}", p.name);
        }
    }

    #[test]
    fn standard_definitions() {
        let p = get_problem("rosenbrock").unwrap();
        assert_eq!((p.n, p.m), (2, 2));
        assert_eq!(p.x0, dvector![-1.2, 1.0]);
        let r = p.eval(&p.x0).unwrap();
        assert_abs_diff_eq!(r, dvector![-4.4, 2.2], epsilon = 1e-12);
        assert_abs_diff_eq!(p.f(&p.x0).unwrap(), 12.1, epsilon = 1e-12);

        let p = get_problem("powell_singular").unwrap();
        assert_eq!((p.n, p.m), (4, 4));
        assert_eq!(p.x0, dvector![3.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn unknown_problem() {
        assert_eq!(
            get_problem("nope").unwrap_err(),
            Error::UnknownProblem("nope".into())
        );
    }

    #[test]
    fn helical_valley_branches() {
        // theta = 0.5 for x1 < 0, x2 = 0
        let r = helical_valley(&[-1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(r[0], -50.0, epsilon = 1e-12);
        let r = helical_valley(&[0.0, 1.0, 2.5]);
        assert_abs_diff_eq!(r[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn noise_models() {
        let p = get_problem("rosenbrock").unwrap();
        let r = p.eval(&p.x0).unwrap();
        let zero_mult = NoiseModel {
            kind: NoiseKind::Multiplicative,
            sigma: 0.0,
            seed: 3,
        };
        assert_eq!(zero_mult.apply(&r, 5), r);

        let mult: NoiseModel = "mult:0.01".parse().unwrap();
        let mult = mult.with_seed(42);
        let zero = dvector![0.0, 1.0];
        assert_eq!(mult.apply(&zero, 9)[0], 0.0);

        let mut a = NoisyProblem::new(&p, mult);
        let mut b = NoisyProblem::new(&p, mult);
        for _ in 0..5 {
            assert_eq!(a.residuals(&p.x0).unwrap(), b.residuals(&p.x0).unwrap());
        }
        // different indices draw different noise
        assert_ne!(mult.apply(&r, 0), mult.apply(&r, 1));
    }

    #[test]
    fn noise_is_unbiased() {
        let sigma = 0.01;
        let r = dvector![2.0];
        for kind in [NoiseKind::Multiplicative, NoiseKind::Additive] {
            let noise = NoiseModel { kind, sigma, seed: 17 };
            let draws = 100_000u64;
            let mean: f64 = (0..draws).map(|i| noise.apply(&r, i)[0]).sum::<f64>() / draws as f64;
            let scale = if kind == NoiseKind::Multiplicative { 2.0 } else { 1.0 };
            assert!((mean - 2.0).abs() <= 4.0 * sigma * scale / (draws as f64).sqrt());
        }
    }

    #[test]
    fn noise_spec_parsing() {
        assert_eq!("none".parse::<NoiseModel>().unwrap().kind, NoiseKind::None);
        let add: NoiseModel = "add:0.5".parse().unwrap();
        assert_eq!(add.kind, NoiseKind::Additive);
        assert_eq!(add.to_string(), "add:0.5");
        assert!("mult:-1".parse::<NoiseModel>().is_err());
        assert!("gauss:1".parse::<NoiseModel>().is_err());
    }
}
