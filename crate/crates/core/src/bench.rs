//! Benchmark matrix, `N_p` scoring, data / performance profiles and output
//! files (JSON lines, CSV, SVG).
//!
//! Solvers see noisy residuals, but every record stores the noiseless
//! objective at the evaluated points and scoring uses those values only.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regularizer::Regularizer;
use crate::smoothing::{self, SmoothingConfig};
use crate::solver::{self, Termination};
use crate::testbed::{get_problem, NoiseModel, NoisyProblem, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverId {
    Dfolsr,
    Dfolssr,
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverId::Dfolsr => "dfolsr",
            SolverId::Dfolssr => "dfolssr",
        })
    }
}

impl FromStr for SolverId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dfolsr" => Ok(SolverId::Dfolsr),
            "dfolssr" => Ok(SolverId::Dfolssr),
            other => Err(Error::Parse {
                input: other.to_string(),
                reason: "expected dfolsr or dfolssr".into(),
            }),
        }
    }
}

/// Run the benchmark cells on the rayon pool or one after another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

fn map_cells<T, R, F>(cells: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec == Execution::Parallel {
        use rayon::prelude::*;
        return cells.par_iter().map(f).collect();
    }
    let _ = exec;
    cells.iter().map(f).collect()
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub solvers: Vec<SolverId>,
    pub problems: Vec<String>,
    pub regularizer: Regularizer,
    /// Kind and level; the seed is set per cell.
    pub noise: NoiseModel,
    pub seeds: usize,
    pub budget_mult: usize,
    /// Smoothing settings; `inner` doubles as the direct solver's config.
    pub config: SmoothingConfig,
}

impl RunSpec {
    pub fn new(solvers: Vec<SolverId>, problems: Vec<String>, regularizer: Regularizer) -> Self {
        RunSpec {
            solvers,
            problems,
            regularizer,
            noise: NoiseModel::none(),
            seeds: 1,
            budget_mult: 100,
            config: SmoothingConfig::default(),
        }
    }

    /// FNV-1a hash of everything that influences a run except the cell.
    pub fn config_hash(&self) -> String {
        let payload = serde_json::json!({
            "config": self.config,
            "regularizer": self.regularizer.to_string(),
            "noise": self.noise.to_string(),
            "budget_mult": self.budget_mult,
        })
        .to_string();
        format!("{:016x}", fnv1a(payload.as_bytes()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.is_finite().then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

/// One (solver, problem, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub solver: SolverId,
    pub problem: String,
    pub n: usize,
    pub seed: u64,
    pub noise: String,
    pub regularizer: String,
    pub budget: usize,
    /// Noiseless objective at every evaluated point, in evaluation order.
    /// `null` in JSON stands for a point outside `dom h` or a failed
    /// evaluation.
    #[serde(with = "finite_or_null")]
    pub phi: Vec<f64>,
    pub termination: Option<Termination>,
    /// Set when the cell failed; the history is then empty.
    pub error: Option<String>,
    pub audit_violations: Vec<String>,
    pub config_hash: String,
}

impl RunRecord {
    pub fn phi0(&self) -> Option<f64> {
        self.phi.first().copied()
    }

    pub fn best(&self) -> f64 {
        self.phi.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn exact_phi(problem: &Problem, h: &Regularizer, x: &nalgebra::DVector<f64>) -> f64 {
    match (problem.f(x), h.value(x)) {
        (Ok(f), Ok(hv)) => f + hv,
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell<'a> {
    solver: SolverId,
    problem: &'a Problem,
    seed: u64,
}

fn run_cell(spec: &RunSpec, cell: &Cell<'_>, hash: &str) -> RunRecord {
    let p = cell.problem;
    let budget = spec.budget_mult * (p.n + 1);
    let noise = spec.noise.with_seed(cell.seed);
    let mut noisy = NoisyProblem::new(p, noise);
    let h = &spec.regularizer;
    let mut cfg = spec.config.clone();
    cfg.inner.max_evals = budget;

    let outcome = match cell.solver {
        SolverId::Dfolsr => solver::solve(&mut noisy, &p.x0, h, &cfg.inner).map(|r| {
            let v = solver::audit(&r, &cfg.inner);
            (r, v)
        }),
        SolverId::Dfolssr => match smoothing::solve(&mut noisy, &p.x0, h, &cfg) {
            Ok(r) => {
                let v = smoothing::audit(&r, &cfg);
                Ok((r.solve, v))
            }
            // Smooth problems go to the direct solver, which then is plain
            // derivative-free Gauss-Newton.
            Err(Error::SmoothingUnavailable) => solver::solve(&mut noisy, &p.x0, h, &cfg.inner).map(|r| {
                let v = solver::audit(&r, &cfg.inner);
                (r, v)
            }),
            Err(e) => Err(e),
        },
    };

    let mut record = RunRecord {
        solver: cell.solver,
        problem: p.name.to_string(),
        n: p.n,
        seed: cell.seed,
        noise: spec.noise.to_string(),
        regularizer: h.to_string(),
        budget,
        phi: Vec::new(),
        termination: None,
        error: None,
        audit_violations: Vec::new(),
        config_hash: hash.to_string(),
    };
    match outcome {
        Ok((res, violations)) => {
            record.phi = res.history.iter().map(|e| exact_phi(p, h, &e.x)).collect();
            record.termination = Some(res.termination);
            record.audit_violations = violations;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Run every (solver, problem, seed) cell. Records come back sorted by
/// (solver, problem, seed) whatever the execution mode.
pub fn run_benchmark(spec: &RunSpec, exec: Execution) -> Result<Vec<RunRecord>> {
    spec.config.validate()?;
    if spec.seeds == 0 || spec.budget_mult == 0 {
        return Err(Error::InvalidConfig("need seeds >= 1 and budget_mult >= 1".into()));
    }
    let problems = spec
        .problems
        .iter()
        .map(|name| get_problem(name))
        .collect::<Result<Vec<_>>>()?;
    let mut solvers = spec.solvers.clone();
    solvers.sort();
    solvers.dedup();
    let mut cells = Vec::new();
    for &solver in &solvers {
        let mut ordered: Vec<&Problem> = problems.iter().collect();
        ordered.sort_by_key(|p| p.name);
        ordered.dedup_by_key(|p| p.name);
        for p in ordered {
            for seed in 0..spec.seeds as u64 {
                cells.push(Cell { solver, problem: p, seed });
            }
        }
    }
    let hash = spec.config_hash();
    Ok(map_cells(&cells, exec, |c| run_cell(spec, c, &hash)))
}

/// `N_p` for one record at one tolerance; `None` means never solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpEntry {
    pub solver: SolverId,
    pub problem: String,
    pub seed: u64,
    pub n: usize,
    pub tau: f64,
    pub np: Option<usize>,
}

/// First 1-based index with `Phi <= Phi* + tau (Phi(x0) - Phi*)`.
pub fn first_solved(phi: &[f64], phi_star: f64, tau: f64) -> Option<usize> {
    let phi0 = *phi.first()?;
    let target = phi_star + tau * (phi0 - phi_star);
    phi.iter().position(|&v| v <= target).map(|i| i + 1)
}

/// `N_p` for every record, with `Phi*` per problem taken as the smallest
/// value in the whole record set.
pub fn compute_np(records: &[RunRecord], tau: f64) -> Result<Vec<NpEntry>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut star: BTreeMap<&str, f64> = BTreeMap::new();
    for r in records {
        let e = star.entry(r.problem.as_str()).or_insert(f64::INFINITY);
        *e = e.min(r.best());
    }
    let mut out: Vec<NpEntry> = records
        .iter()
        .map(|r| {
            let s = star[r.problem.as_str()];
            let np = if s.is_finite() { first_solved(&r.phi, s, tau) } else { None };
            NpEntry {
                solver: r.solver,
                problem: r.problem.clone(),
                seed: r.seed,
                n: r.n,
                tau,
                np,
            }
        })
        .collect();
    out.sort_by(|a, b| (a.solver, &a.problem, a.seed).cmp(&(b.solver, &b.problem, b.seed)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Data,
    Performance,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::Data => "data",
            ProfileKind::Performance => "performance",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub solver: SolverId,
    pub kind: ProfileKind,
    pub tau: f64,
    pub alpha: Vec<f64>,
    pub fraction: Vec<f64>,
}

type Instance = (String, u64);

/// Entries grouped per solver and per (problem, seed) instance.
fn by_solver(entries: &[NpEntry]) -> (BTreeMap<SolverId, BTreeMap<Instance, &NpEntry>>, Vec<Instance>) {
    let mut table: BTreeMap<SolverId, BTreeMap<Instance, &NpEntry>> = BTreeMap::new();
    let mut instances = Vec::new();
    for e in entries {
        let key = (e.problem.clone(), e.seed);
        instances.push(key.clone());
        table.entry(e.solver).or_default().insert(key, e);
    }
    instances.sort();
    instances.dedup();
    (table, instances)
}

fn tau_of(entries: &[NpEntry]) -> f64 {
    entries.first().map(|e| e.tau).unwrap_or(f64::NAN)
}

/// `d(alpha) = |{p : N_p <= alpha (n_p + 1)}| / |P|` per solver.
pub fn data_profile(entries: &[NpEntry], alpha: &[f64]) -> Vec<ProfileCurve> {
    let (table, instances) = by_solver(entries);
    let total = instances.len().max(1) as f64;
    table
        .into_iter()
        .map(|(solver, rows)| {
            let fraction = alpha
                .iter()
                .map(|&a| {
                    let solved = rows
                        .values()
                        .filter(|e| e.np.is_some_and(|np| np as f64 <= a * (e.n as f64 + 1.0)))
                        .count();
                    solved as f64 / total
                })
                .collect();
            ProfileCurve {
                solver,
                kind: ProfileKind::Data,
                tau: tau_of(entries),
                alpha: alpha.to_vec(),
                fraction,
            }
        })
        .collect()
}

/// `pi(alpha) = |{p : N_p <= alpha N_p*}| / |P|` per solver, where `N_p*` is
/// the best `N_p` over solvers on the same instance.
pub fn performance_profile(entries: &[NpEntry], alpha: &[f64]) -> Vec<ProfileCurve> {
    let (table, instances) = by_solver(entries);
    let total = instances.len().max(1) as f64;
    let best: BTreeMap<&Instance, usize> = instances
        .iter()
        .filter_map(|inst| {
            table
                .values()
                .filter_map(|rows| rows.get(inst).and_then(|e| e.np))
                .min()
                .map(|b| (inst, b))
        })
        .collect();
    table
        .iter()
        .map(|(&solver, rows)| {
            let fraction = alpha
                .iter()
                .map(|&a| {
                    let solved = rows
                        .iter()
                        .filter(|(inst, e)| match (e.np, best.get(inst)) {
                            (Some(np), Some(&b)) => np as f64 <= a * b as f64,
                            _ => false,
                        })
                        .count();
                    solved as f64 / total
                })
                .collect();
            ProfileCurve {
                solver,
                kind: ProfileKind::Performance,
                tau: tau_of(entries),
                alpha: alpha.to_vec(),
                fraction,
            }
        })
        .collect()
}

/// `0, 0.5, ..., max_alpha`.
pub fn data_alpha_grid(max_alpha: f64) -> Vec<f64> {
    let steps = (2.0 * max_alpha).round() as usize;
    (0..=steps).map(|i| i as f64 * 0.5).collect()
}

/// Log-spaced grid on `[1, max_alpha]`.
pub fn performance_alpha_grid(max_alpha: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    let top = max_alpha.max(1.0).ln();
    (0..points)
        .map(|i| (top * i as f64 / (points - 1) as f64).exp())
        .collect()
}

pub fn write_records_jsonl(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let f = fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Parse {
            input: format!("{}:{}", path.display(), i + 1),
            reason: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

/// CSV with header `solver,problem,seed,tau,Np`; unsolved entries print `inf`.
pub fn write_np_csv(entries: &[NpEntry], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "solver,problem,seed,tau,Np")?;
    for e in entries {
        let np = e.np.map_or_else(|| "inf".to_string(), |v| v.to_string());
        writeln!(f, "{},{},{},{:e},{}", e.solver, e.problem, e.seed, e.tau, np)?;
    }
    Ok(())
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Step plot of the curves (same kind and tolerance) with a legend.
pub fn render_svg(curves: &[ProfileCurve]) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let kind = curves.first().map_or(ProfileKind::Data, |c| c.kind);
    let tau = curves.first().map_or(f64::NAN, |c| c.tau);
    let log_x = kind == ProfileKind::Performance;
    let xs: Vec<f64> = curves.iter().flat_map(|c| c.alpha.iter().copied()).collect();
    let tx = |a: f64| if log_x { a.max(1.0).log10() } else { a };
    let x_min = xs.iter().copied().map(tx).fold(f64::INFINITY, f64::min);
    let x_max = xs.iter().copied().map(tx).fold(f64::NEG_INFINITY, f64::max);
    let span = if x_max > x_min { x_max - x_min } else { 1.0 };
    let px = |a: f64| pad + (tx(a) - x_min) / span * (w - 2.0 * pad);
    let py = |f: f64| h - pad - f * (h - 2.0 * pad);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    s.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{} profile, tau = {:e}</text>\n",
        w / 2.0,
        kind,
        tau
    ));
    s.push_str(&format!(
        "<path d=\"M{pad} {pad} L{pad} {} L{} {}\" stroke=\"black\" fill=\"none\"/>\n",
        h - pad,
        w - pad,
        h - pad
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{f}</text>\n",
            pad - 6.0,
            py(f) + 4.0
        ));
    }
    let label = if log_x { "alpha (log scale)" } else { "alpha (simplex gradients)" };
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{label}</text>\n",
        w / 2.0,
        h - 20.0
    ));
    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for (i, (&a, &f)) in c.alpha.iter().zip(&c.fraction).enumerate() {
            if i == 0 {
                d.push_str(&format!("M{:.2} {:.2}", px(a), py(f)));
            } else {
                d.push_str(&format!(" L{:.2} {:.2} L{:.2} {:.2}", px(a), py(c.fraction[i - 1]), px(a), py(f)));
            }
        }
        s.push_str(&format!("<path d=\"{d}\" stroke=\"{color}\" stroke-width=\"2\" fill=\"none\"/>\n"));
        let ly = pad + 18.0 * k as f64;
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            w - pad - 110.0,
            w - pad - 90.0
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            w - pad - 84.0,
            ly + 4.0,
            c.solver
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// One SVG per (kind, tau) in `dir`; returns the written paths. An empty
/// curve set writes nothing.
pub fn emit_profiles(curves: &[ProfileCurve], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<(String, String), Vec<ProfileCurve>> = BTreeMap::new();
    for c in curves {
        groups
            .entry((c.kind.to_string(), format!("{:e}", c.tau)))
            .or_default()
            .push(c.clone());
    }
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for ((kind, tau), group) in groups {
        let path = dir.join(format!("{kind}_tau{tau}.svg"));
        fs::write(&path, render_svg(&group))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(solver: SolverId, problem: &str, seed: u64, n: usize, phi: Vec<f64>) -> RunRecord {
        RunRecord {
            solver,
            problem: problem.into(),
            n,
            seed,
            noise: "none".into(),
            regularizer: "l1:1".into(),
            budget: 100 * (n + 1),
            phi,
            termination: Some(Termination::Budget),
            error: None,
            audit_violations: Vec::new(),
            config_hash: String::new(),
        }
    }

    fn entry(solver: SolverId, problem: &str, n: usize, np: Option<usize>) -> NpEntry {
        NpEntry {
            solver,
            problem: problem.into(),
            seed: 0,
            n,
            tau: 1e-3,
            np,
        }
    }

    #[test]
    fn np_examples() {
        assert_eq!(first_solved(&[10.0, 5.0, 1.0, 0.1], 0.0, 0.1), Some(3));
        assert_eq!(first_solved(&[2.0, 3.0], 2.0, 1e-7), Some(1));
        assert_eq!(first_solved(&[10.0, 9.0, 8.0], 0.0, 0.1), None);
        assert_eq!(first_solved(&[], 0.0, 0.1), None);
    }

    #[test]
    fn np_uses_consensus_minimum() {
        let recs = vec![
            record(SolverId::Dfolsr, "p", 0, 2, vec![10.0, 5.0, 1.0, 0.1]),
            record(SolverId::Dfolssr, "p", 0, 2, vec![10.0, 0.0]),
        ];
        let t = compute_np(&recs, 0.1).unwrap();
        assert_eq!(t[0].np, Some(3));
        assert_eq!(t[1].np, Some(2));
        assert_eq!(compute_np(&[], 0.1).unwrap_err(), Error::EmptyRecords);
    }

    #[test]
    fn data_profile_examples() {
        let grid = data_alpha_grid(100.0);
        let one = data_profile(&[entry(SolverId::Dfolsr, "a", 2, Some(6))], &grid);
        for (&a, &f) in one[0].alpha.iter().zip(&one[0].fraction) {
            assert_eq!(f, if a < 2.0 { 0.0 } else { 1.0 });
        }
        let none = data_profile(&[entry(SolverId::Dfolsr, "a", 2, None)], &grid);
        assert!(none[0].fraction.iter().all(|&f| f == 0.0));
        let two = data_profile(
            &[entry(SolverId::Dfolsr, "a", 1, Some(4)), entry(SolverId::Dfolsr, "b", 1, Some(100))],
            &grid,
        );
        for (&a, &f) in two[0].alpha.iter().zip(&two[0].fraction) {
            let expected = if a < 2.0 { 0.0 } else if a < 50.0 { 0.5 } else { 1.0 };
            assert_eq!(f, expected, "alpha {a}");
        }
    }

    #[test]
    fn performance_profile_examples() {
        let grid = [1.0, 1.5, 2.0, 3.0];
        let curves = performance_profile(
            &[entry(SolverId::Dfolsr, "a", 2, Some(10)), entry(SolverId::Dfolssr, "a", 2, Some(20))],
            &grid,
        );
        assert_eq!(curves[0].fraction, vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(curves[1].fraction, vec![0.0, 0.0, 1.0, 1.0]);
        let single = performance_profile(
            &[entry(SolverId::Dfolsr, "a", 2, Some(10)), entry(SolverId::Dfolsr, "b", 2, None)],
            &grid,
        );
        assert_eq!(single[0].fraction[0], 0.5);
    }

    #[test]
    fn profiles_ignore_entry_order() {
        let mut es = vec![
            entry(SolverId::Dfolsr, "a", 2, Some(10)),
            entry(SolverId::Dfolssr, "a", 2, Some(30)),
            entry(SolverId::Dfolsr, "b", 3, None),
            entry(SolverId::Dfolssr, "b", 3, Some(7)),
        ];
        let grid = performance_alpha_grid(10.0, 20);
        let a = (data_profile(&es, &data_alpha_grid(100.0)), performance_profile(&es, &grid));
        es.reverse();
        let b = (data_profile(&es, &data_alpha_grid(100.0)), performance_profile(&es, &grid));
        assert_eq!(a, b);
    }

    #[test]
    fn jsonl_round_trip_keeps_infinities() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let recs = vec![record(SolverId::Dfolsr, "p", 0, 2, vec![3.0, f64::INFINITY, 1.0])];
        write_records_jsonl(&recs, &path).unwrap();
        assert_eq!(read_records_jsonl(&path).unwrap(), recs);
    }

    #[test]
    fn emit_writes_one_svg_per_kind_and_tau() {
        let dir = tempfile::tempdir().unwrap();
        let es = vec![entry(SolverId::Dfolsr, "a", 2, Some(10)), entry(SolverId::Dfolssr, "a", 2, Some(20))];
        let mut curves = data_profile(&es, &data_alpha_grid(10.0));
        curves.extend(performance_profile(&es, &performance_alpha_grid(10.0, 10)));
        let paths = emit_profiles(&curves, dir.path()).unwrap();
        assert_eq!(paths.len(), 2);
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert!(text.starts_with("<svg") && text.contains("dfolsr") && text.contains("dfolssr"));
        assert!(emit_profiles(&[], &dir.path().join("empty")).unwrap().is_empty());
        assert!(!dir.path().join("empty").exists());
    }

    #[test]
    fn csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("np.csv");
        write_np_csv(&[entry(SolverId::Dfolsr, "a", 2, Some(10)), entry(SolverId::Dfolssr, "a", 2, None)], &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "solver,problem,seed,tau,Np");
        assert_eq!(lines[1], "dfolsr,a,0,1e-3,10");
        assert_eq!(lines[2], "dfolssr,a,0,1e-3,inf");
    }

    #[test]
    fn solver_ids_parse() {
        assert_eq!("dfolssr".parse::<SolverId>().unwrap(), SolverId::Dfolssr);
        assert!("nomad".parse::<SolverId>().is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let spec = RunSpec::new(vec![SolverId::Dfolsr], vec!["rosenbrock".into()], Regularizer::l1(1.0));
        assert_eq!(spec.config_hash(), spec.config_hash());
        let mut other = spec.clone();
        other.budget_mult = 50;
        assert_ne!(spec.config_hash(), other.config_hash());
    }
}
