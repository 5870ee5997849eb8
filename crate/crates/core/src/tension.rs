//! Minimum-internal-force tension distribution.
//!
//! Solves `min ||f||^2  s.t.  tau_ref = -G(q)^T f,  f >= f_min` with a dual
//! active-set method (Goldfarb-Idnani): start from the minimum-norm solution of
//! the torque equality, then repeatedly add the most violated tension bound,
//! dropping previously active bounds whose multipliers would turn negative.
//! Every iterate is dual feasible, so the first primal-feasible iterate is the
//! optimum. When the bounds make the torque unreachable the solver falls back
//! to the closest reachable torque and flags the result as degraded.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wire::{MuscleJacobian, Vector6, WireGeometry, N_WIRES};

pub const DEFAULT_MIN_TENSION: f64 = 8.0;
/// Hardware tension limit. Logged when exceeded, never enforced.
pub const MAX_TENSION: f64 = 230.0;

const RANK_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 64;

type TorqueMap = SMatrix<f64, 3, 6>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensionSolution {
    pub f_ref: Vector6,
    /// `tau_ref + G^T f_ref`; zero unless degraded.
    pub residual_torque: Vector3<f64>,
    pub degraded: bool,
    /// Wires held at the tension floor.
    pub active_set: Vec<usize>,
}

impl TensionSolution {
    pub fn exceeds_max_tension(&self) -> bool {
        self.f_ref.iter().any(|&f| f > MAX_TENSION)
    }
}

pub fn distribute_tensions(
    geometry: &WireGeometry,
    q: &Vector3<f64>,
    tau_ref: &Vector3<f64>,
    f_min: f64,
) -> Result<TensionSolution> {
    solve_with_jacobian(&geometry.muscle_jacobian(q), tau_ref, f_min, None)
}

/// True when `tau` is reachable with every tension at or above `f_min`.
pub fn feasible_wrench_check(geometry: &WireGeometry, q: &Vector3<f64>, tau: &Vector3<f64>, f_min: f64) -> bool {
    matches!(distribute_tensions(geometry, q, tau, f_min), Ok(s) if !s.degraded)
}

/// Per-environment solver that warm-starts from the previous tick's active set.
#[derive(Debug, Clone)]
pub struct TensionDistributor {
    pub f_min: f64,
    warm: Vec<usize>,
}

impl TensionDistributor {
    pub fn new(f_min: f64) -> Self {
        Self { f_min, warm: Vec::new() }
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn solve(&mut self, geometry: &WireGeometry, q: &Vector3<f64>, tau_ref: &Vector3<f64>) -> Result<TensionSolution> {
        let sol = solve_with_jacobian(&geometry.muscle_jacobian(q), tau_ref, self.f_min, Some(&self.warm))?;
        self.warm.clone_from(&sol.active_set);
        Ok(sol)
    }
}

pub fn solve_with_jacobian(
    g: &MuscleJacobian,
    tau_ref: &Vector3<f64>,
    f_min: f64,
    warm_start: Option<&[usize]>,
) -> Result<TensionSolution> {
    let sv = g.svd(false, false).singular_values;
    let smallest = sv.min();
    if !(smallest > RANK_TOL * sv.max().max(1.0)) {
        return Err(Error::RankDeficient(smallest));
    }
    let a: TorqueMap = g.transpose();
    let b = -tau_ref;

    let active = warm_start
        .filter(|w| w.len() <= 3)
        .and_then(|w| kkt_point(&a, &b, f_min, w).map(|_| w.to_vec()))
        .or_else(|| dual_active_set(&a, &b, f_min));

    if let Some(active) = active {
        if let Some(f) = equality_solution(&a, &b, f_min, &active) {
            return Ok(finish(g, tau_ref, f, f_min, false));
        }
    }
    Ok(relaxed_solution(g, &a, &b, tau_ref, f_min))
}

fn finish(g: &MuscleJacobian, tau_ref: &Vector3<f64>, mut f: Vector6, f_min: f64, degraded: bool) -> TensionSolution {
    for x in f.iter_mut() {
        if *x < f_min {
            *x = f_min;
        }
    }
    let active_set = (0..N_WIRES).filter(|&i| f[i] == f_min).collect();
    TensionSolution {
        residual_torque: tau_ref + g.transpose() * f,
        f_ref: f,
        degraded,
        active_set,
    }
}

/// Least-norm solution with the wires in `active` clamped to `f_min`.
fn equality_solution(a: &TorqueMap, b: &Vector3<f64>, f_min: f64, active: &[usize]) -> Option<Vector6> {
    let free: Vec<usize> = (0..N_WIRES).filter(|i| !active.contains(i)).collect();
    let mut rhs = *b;
    for &i in active {
        rhs -= a.column(i) * f_min;
    }
    let mut af_aft = Matrix3::zeros();
    for &i in &free {
        af_aft += a.column(i) * a.column(i).transpose();
    }
    let lambda = af_aft.cholesky()?.solve(&rhs);
    let mut f = Vector6::from_element(f_min);
    for &i in &free {
        f[i] = a.column(i).dot(&lambda);
    }
    Some(f)
}

/// Checks primal and dual feasibility of the equality solution on `active`.
fn kkt_point(a: &TorqueMap, b: &Vector3<f64>, f_min: f64, active: &[usize]) -> Option<Vector6> {
    let f = equality_solution(a, b, f_min, active)?;
    let tol = 1e-10 * (1.0 + f.amax());
    let free: Vec<usize> = (0..N_WIRES).filter(|i| !active.contains(i)).collect();
    if free.iter().any(|&i| f[i] < f_min - tol) {
        return None;
    }
    // stationarity on the free wires gives the torque multiplier
    let mut af_aft = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for &i in &free {
        af_aft += a.column(i) * a.column(i).transpose();
        rhs += a.column(i) * f[i];
    }
    let lambda = af_aft.cholesky()?.solve(&rhs);
    if active.iter().any(|&i| f_min - a.column(i).dot(&lambda) < -tol) {
        return None;
    }
    Some(f)
}

/// Goldfarb-Idnani iteration; returns the optimal active set or `None` if the
/// constraints are inconsistent.
fn dual_active_set(a: &TorqueMap, b: &Vector3<f64>, f_min: f64) -> Option<Vec<usize>> {
    let w = (a * a.transpose()).cholesky()?.solve(b);
    let mut x: Vector6 = a.transpose() * w;
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let tol = 1e-12 * (1.0 + f_min.abs() + x.amax());

    for _ in 0..MAX_ITERATIONS {
        let violated = (0..N_WIRES)
            .filter(|i| !active.contains(i))
            .map(|i| (i, x[i] - f_min))
            .min_by(|l, r| l.1.total_cmp(&r.1));
        let Some((p, slack)) = violated else { return Some(active) };
        if slack >= -tol {
            return Some(active);
        }
        let mut mult_p = 0.0;
        loop {
            let n_cols = 3 + active.len();
            let mut normals = DMatrix::<f64>::zeros(N_WIRES, n_cols);
            for r in 0..3 {
                normals.set_column(r, &a.row(r).transpose());
            }
            for (k, &j) in active.iter().enumerate() {
                normals[(j, 3 + k)] = 1.0;
            }
            let mut e_p = DVector::<f64>::zeros(N_WIRES);
            e_p[p] = 1.0;
            let gram = normals.transpose() * &normals;
            let r = gram.cholesky()?.solve(&(normals.transpose() * &e_p));
            let z = &e_p - &normals * &r;

            let mut dual_step = f64::INFINITY;
            let mut blocking = None;
            for k in 0..active.len() {
                let rk = r[3 + k];
                if rk > 1e-14 {
                    let t = mult[k] / rk;
                    if t < dual_step {
                        dual_step = t;
                        blocking = Some(k);
                    }
                }
            }
            let primal_step = if z.norm_squared() > 1e-20 {
                (f_min - x[p]) / z[p]
            } else {
                f64::INFINITY
            };
            if primal_step.is_infinite() && dual_step.is_infinite() {
                return None;
            }
            let t = primal_step.min(dual_step);
            if primal_step.is_finite() {
                for i in 0..N_WIRES {
                    x[i] += t * z[i];
                }
            }
            for k in 0..active.len() {
                mult[k] -= t * r[3 + k];
            }
            mult_p += t;
            if primal_step <= dual_step {
                active.push(p);
                mult.push(mult_p);
                break;
            }
            let k = blocking.expect("finite dual step has a blocking constraint");
            active.remove(k);
            mult.remove(k);
        }
    }
    None
}

/// Two-stage relaxation: closest reachable torque first, then minimum norm on
/// that torque.
fn relaxed_solution(
    g: &MuscleJacobian,
    a: &TorqueMap,
    b: &Vector3<f64>,
    tau_ref: &Vector3<f64>,
    f_min: f64,
) -> TensionSolution {
    let shift = a * Vector6::from_element(f_min);
    let extra = nnls(a, &(b - shift));
    let f_star = extra.add_scalar(f_min);
    let reachable = a * f_star;
    let f = dual_active_set(a, &reachable, f_min)
        .and_then(|act| equality_solution(a, &reachable, f_min, &act))
        .filter(|f| (a * f - reachable).amax() < 1e-9 * (1.0 + reachable.amax()))
        .unwrap_or(f_star);
    finish(g, tau_ref, f, f_min, true)
}

/// Lawson-Hanson non-negative least squares: `min ||A x - d||` with `x >= 0`.
pub fn nnls(a: &TorqueMap, d: &Vector3<f64>) -> Vector6 {
    let mut x = Vector6::zeros();
    let mut passive = [false; N_WIRES];
    let tol = 1e-12 * (1.0 + a.amax() * d.amax());

    for _ in 0..3 * N_WIRES {
        let w = a.transpose() * (d - a * x);
        let candidate = (0..N_WIRES)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;

        for _ in 0..3 * N_WIRES {
            let idx: Vec<usize> = (0..N_WIRES).filter(|&i| passive[i]).collect();
            let sub = DMatrix::from_fn(3, idx.len(), |r, c| a[(r, idx[c])]);
            let rhs = DVector::from_column_slice(d.as_slice());
            let Ok(sol) = sub.svd(true, true).solve(&rhs, 1e-14) else { return x };
            let mut z = Vector6::zeros();
            for (k, &i) in idx.iter().enumerate() {
                z[i] = sol[k];
            }
            if idx.iter().all(|&i| z[i] > 0.0) {
                x = z;
                break;
            }
            let mut alpha = f64::INFINITY;
            for &i in &idx {
                if z[i] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - z[i]));
                }
            }
            x += (z - x) * alpha;
            for &i in &idx {
                if x[i] <= tol {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn home_pose_null_torque_is_uniform_floor() {
        let geo = WireGeometry::default();
        let sol = distribute_tensions(&geo, &geo.home_pose(), &Vector3::zeros(), DEFAULT_MIN_TENSION).unwrap();
        assert!(!sol.degraded);
        for i in 0..N_WIRES {
            assert!((sol.f_ref[i] - 8.0).abs() < 1e-9);
        }
        assert!(sol.residual_torque.amax() < 1e-9);
    }

    #[test]
    fn warm_start_gives_same_answer() {
        let geo = WireGeometry::default();
        let q = Vector3::new(0.2, -0.3, 0.6);
        let mut dist = TensionDistributor::new(DEFAULT_MIN_TENSION);
        let taus = [Vector3::new(10.0, -5.0, -100.0), Vector3::new(11.0, -4.0, -98.0), Vector3::new(-30.0, 20.0, 40.0)];
        for tau in taus {
            let warm = dist.solve(&geo, &q, &tau).unwrap();
            let cold = distribute_tensions(&geo, &q, &tau, DEFAULT_MIN_TENSION).unwrap();
            assert!((warm.f_ref - cold.f_ref).amax() < 1e-9);
        }
    }

    #[test]
    fn rank_deficient_jacobian_is_rejected() {
        let mut g = MuscleJacobian::zeros();
        for i in 0..N_WIRES {
            g[(i, 0)] = 1.0;
            g[(i, 1)] = 2.0;
        }
        assert!(matches!(
            solve_with_jacobian(&g, &Vector3::zeros(), 8.0, None),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn non_antagonistic_layout_degrades() {
        // every wire shortens when every joint moves positively: no tension
        // pattern can produce a positive torque on any axis
        let g = MuscleJacobian::from_fn(|i, j| 0.1 + 0.05 * ((i * 3 + j) % 5) as f64);
        let tau = Vector3::new(5.0, 5.0, 5.0);
        let sol = solve_with_jacobian(&g, &tau, 8.0, None).unwrap();
        assert!(sol.degraded);
        assert!(sol.f_ref.iter().all(|&f| f >= 8.0));
        assert!(sol.residual_torque.norm() > 1.0);
    }

    #[test]
    fn nnls_recovers_interior_solution() {
        let a = TorqueMap::from_fn(|i, j| if i == j % 3 { 1.0 + j as f64 } else { 0.1 });
        let x_true = Vector6::new(0.0, 0.0, 0.0, 1.0, 2.0, 3.0);
        let d = a * x_true;
        let x = nnls(&a, &d);
        assert!((a * x - d).amax() < 1e-10);
        assert!(x.iter().all(|&v| v >= 0.0));
    }
}
