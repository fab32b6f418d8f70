//! Single shooting for the free-time two-point boundary value problem, with
//! homotopy continuation from the smoothed cost to the pure fuel cost.
//!
//! Unknowns are the initial costate (7 components) and the free final time.
//! The square residual pairs them with the s manifold constraints, the n - s
//! transversality projections p(t_f) T = 0, and the free-time condition
//! H(t_f) = 0.

use crate::dynamics::{self, pack, Chart, EngineSpec, ThrustBranch};
use crate::flow::{propagate, ExtremalTrajectory, FlowError, IntegratorOpts};
use crate::manifold::{ManifoldError, TargetManifold};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A transfer problem instance in canonical units.
#[derive(Clone, Debug)]
pub struct TransferProblem {
    pub chart: Chart,
    pub engine: EngineSpec,
    pub x0: [f64; 7],
    pub manifold: TargetManifold,
}

impl TransferProblem {
    pub fn validate(&self) -> Result<(), String> {
        self.engine.validate()?;
        self.manifold.validate().map_err(|e| e.to_string())?;
        if let Some(chart) = self.manifold.required_chart() {
            if chart != self.chart {
                return Err("manifold is written in a different chart than the problem".into());
            }
        }
        Ok(())
    }
}

/// Shooting unknowns: initial costate and free final time.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ShootingUnknowns {
    pub p0: [f64; 7],
    pub t_f: f64,
}

impl ShootingUnknowns {
    fn to_vec(self) -> DVector<f64> {
        let mut v = DVector::zeros(8);
        for i in 0..7 {
            v[i] = self.p0[i];
        }
        v[7] = self.t_f;
        v
    }

    fn from_vec(v: &DVector<f64>) -> Self {
        let mut p0 = [0.0; 7];
        for i in 0..7 {
            p0[i] = v[i];
        }
        Self { p0, t_f: v[7] }
    }
}

/// Residual blocks of the shooting system.
#[derive(Clone, Debug)]
pub struct ShootingResidual {
    /// phi(x(t_f)), s components.
    pub manifold: DVector<f64>,
    /// p(t_f) T_j, n - s components.
    pub transversality: DVector<f64>,
    /// H(x(t_f), p(t_f)).
    pub free_time: f64,
}

impl ShootingResidual {
    pub fn to_vec(&self) -> DVector<f64> {
        let s = self.manifold.len();
        let k = self.transversality.len();
        let mut v = DVector::zeros(s + k + 1);
        v.rows_mut(0, s).copy_from(&self.manifold);
        v.rows_mut(s, k).copy_from(&self.transversality);
        v[s + k] = self.free_time;
        v
    }

    pub fn inf_norm(&self) -> f64 {
        self.to_vec().amax()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShootingOpts {
    /// Convergence threshold on the residual infinity norm.
    pub tol: f64,
    pub max_iters: usize,
    /// Central-difference step for the shooting Jacobian.
    pub fd_step: f64,
    pub max_backtracks: usize,
    pub integrator: IntegratorOpts,
}

impl Default for ShootingOpts {
    fn default() -> Self {
        Self {
            tol: 1.0e-9,
            max_iters: 60,
            fd_step: 1.0e-7,
            max_backtracks: 24,
            integrator: IntegratorOpts::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ShootingError {
    #[error("propagation failed: {0}")]
    Flow(#[from] FlowError),
    #[error("manifold error: {0}")]
    Manifold(#[from] ManifoldError),
    #[error("invalid unknowns: {0}")]
    InvalidUnknowns(String),
    #[error(
        "Newton iteration did not converge (residual {residual_norm:.3e} after {iterations} iterations)"
    )]
    Diverged {
        best: ShootingUnknowns,
        residual_norm: f64,
        iterations: usize,
    },
    #[error("shooting Jacobian is singular")]
    SingularJacobian,
    #[error("homotopy continuation stuck at lambda = {lambda_achieved} (step underflow)")]
    ContinuationStuck {
        lambda_achieved: f64,
        best: Box<ExtremalSolution>,
    },
}

/// A converged extremal.
#[derive(Clone, Debug)]
pub struct ExtremalSolution {
    pub unknowns: ShootingUnknowns,
    pub lambda: f64,
    pub trajectory: ExtremalTrajectory,
    pub residual_norm: f64,
    /// Lagrange multiplier row reconstructing p(t_f) = nu * grad(phi).
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

/// Least-squares multipliers nu = p grad^T (grad grad^T)^{-1}.
pub fn compute_multipliers(
    p_tf: &[f64; 7],
    grad_phi: &DMatrix<f64>,
) -> Result<DVector<f64>, ManifoldError> {
    let p = DVector::from_row_slice(p_tf);
    let gram = grad_phi * grad_phi.transpose();
    let rhs = grad_phi * p;
    gram.lu().solve(&rhs).ok_or(ManifoldError::RankDeficient)
}

/// Evaluate the shooting residual; also returns the propagated trajectory.
pub fn residual(
    u: &ShootingUnknowns,
    lambda: f64,
    problem: &TransferProblem,
    opts: &ShootingOpts,
) -> Result<(ShootingResidual, ExtremalTrajectory), ShootingError> {
    if !(u.t_f > 0.0) || !u.t_f.is_finite() || u.p0.iter().any(|v| !v.is_finite()) {
        return Err(ShootingError::InvalidUnknowns(format!(
            "t_f = {}, p0 finite = {}",
            u.t_f,
            u.p0.iter().all(|v| v.is_finite())
        )));
    }
    let z0 = pack(&problem.x0, &u.p0);
    let traj = propagate(
        problem.chart,
        &problem.engine,
        lambda,
        z0,
        0.0,
        u.t_f,
        &opts.integrator,
    )?;
    let (x_f, p_f) = dynamics::split(&traj.z_f);
    let phi = problem.manifold.phi(&x_f);
    let tb = problem.manifold.tangent_basis(&x_f)?;
    let p_row = DVector::from_row_slice(&p_f);
    let transversality = tb.0.transpose() * &p_row;
    let free_time = dynamics::hamiltonian_at(
        problem.chart,
        &problem.engine,
        lambda,
        ThrustBranch::Smoothed,
        &traj.z_f,
    );
    Ok((
        ShootingResidual {
            manifold: phi,
            transversality,
            free_time,
        },
        traj,
    ))
}

fn residual_vec(
    u: &ShootingUnknowns,
    lambda: f64,
    problem: &TransferProblem,
    opts: &ShootingOpts,
) -> Result<DVector<f64>, ShootingError> {
    residual(u, lambda, problem, opts).map(|(r, _)| r.to_vec())
}

/// Shooting Jacobian by central finite differences, with one-sided fallback
/// when a probe fails to propagate.
fn fd_jacobian(
    u: &ShootingUnknowns,
    r0: &DVector<f64>,
    lambda: f64,
    problem: &TransferProblem,
    opts: &ShootingOpts,
) -> Result<DMatrix<f64>, ShootingError> {
    let n = r0.len();
    let mut j = DMatrix::zeros(n, 8);
    let base = u.to_vec();
    for col in 0..8 {
        let h = opts.fd_step;
        let mut up = base.clone();
        let mut um = base.clone();
        up[col] += h;
        um[col] -= h;
        let rp = residual_vec(&ShootingUnknowns::from_vec(&up), lambda, problem, opts);
        let rm = residual_vec(&ShootingUnknowns::from_vec(&um), lambda, problem, opts);
        let column = match (rp, rm) {
            (Ok(rp), Ok(rm)) => (rp - rm) / (2.0 * h),
            (Ok(rp), Err(_)) => (rp - r0) / h,
            (Err(_), Ok(rm)) => (r0 - rm) / h,
            (Err(e), Err(_)) => return Err(e),
        };
        j.set_column(col, &column);
    }
    Ok(j)
}

/// Damped Newton iteration on the shooting system at fixed lambda.
pub fn solve(
    guess: &ShootingUnknowns,
    lambda: f64,
    problem: &TransferProblem,
    opts: &ShootingOpts,
) -> Result<ExtremalSolution, ShootingError> {
    let mut u = *guess;
    let mut r = residual_vec(&u, lambda, problem, opts)?;
    let mut rn = r.amax();
    let mut iterations = 0;

    loop {
        if rn < opts.tol {
            let (res, traj) = residual(&u, lambda, problem, opts)?;
            let (x_f, p_f) = dynamics::split(&traj.z_f);
            let grad = problem.manifold.grad(&x_f);
            let multipliers = compute_multipliers(&p_f, &grad)?;
            return Ok(ExtremalSolution {
                unknowns: u,
                lambda,
                trajectory: traj,
                residual_norm: res.inf_norm(),
                multipliers,
                iterations,
            });
        }
        if iterations >= opts.max_iters {
            return Err(ShootingError::Diverged {
                best: u,
                residual_norm: rn,
                iterations,
            });
        }
        iterations += 1;

        let j = fd_jacobian(&u, &r, lambda, problem, opts)?;
        let step = j
            .lu()
            .solve(&(-&r))
            .ok_or(ShootingError::SingularJacobian)?;

        // Backtracking line search on the residual norm.
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_backtracks {
            let u_try = ShootingUnknowns::from_vec(&(u.to_vec() + alpha * &step));
            if u_try.t_f > 0.0 {
                if let Ok(r_try) = residual_vec(&u_try, lambda, problem, opts) {
                    let rn_try = r_try.amax();
                    if rn_try < rn * (1.0 - 1.0e-4 * alpha) || rn_try < opts.tol {
                        u = u_try;
                        r = r_try;
                        rn = rn_try;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        log::debug!(
            "newton it {iterations}: |r| = {rn:.3e}, alpha = {alpha:.2e}, t_f = {:.4}",
            u.t_f
        );
        if !accepted {
            return Err(ShootingError::Diverged {
                best: u,
                residual_norm: rn,
                iterations,
            });
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ContinuationOpts {
    pub shooting: ShootingOpts,
    /// Smallest lambda increment before the continuation gives up.
    pub min_lambda_step: f64,
    /// Residual tolerance for the intermediate (lambda < 1) solves. The
    /// smoothed flow crosses throttle-saturation corners mid-step, which
    /// floors the attainable residual above the bang-bang case; intermediate
    /// solutions only warm-start the next solve.
    pub intermediate_tol: f64,
}

impl Default for ContinuationOpts {
    fn default() -> Self {
        Self {
            shooting: ShootingOpts::default(),
            min_lambda_step: 1.0e-4,
            intermediate_tol: 3.0e-9,
        }
    }
}

/// Trace entry of a continuation run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub lambda: f64,
    pub unknowns: ShootingUnknowns,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Chain of Newton solves along a lambda schedule, each warm-started from the
/// previous solution, with adaptive step halving between schedule points.
pub fn continue_homotopy(
    guess: &ShootingUnknowns,
    schedule: &[f64],
    problem: &TransferProblem,
    opts: &ContinuationOpts,
    mut trace: Option<&mut Vec<ContinuationRecord>>,
) -> Result<ExtremalSolution, ShootingError> {
    assert!(!schedule.is_empty(), "empty lambda schedule");
    let opts_for = |lambda: f64| {
        let mut o = opts.shooting;
        if lambda < 1.0 {
            o.tol = o.tol.max(opts.intermediate_tol);
        }
        o
    };
    let mut current = solve(guess, schedule[0], problem, &opts_for(schedule[0]))?;
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(ContinuationRecord {
            lambda: schedule[0],
            unknowns: current.unknowns,
            residual_norm: current.residual_norm,
            iterations: current.iterations,
        });
    }
    let mut lambda_good = schedule[0];

    for &target in &schedule[1..] {
        if target <= lambda_good {
            continue;
        }
        let mut pending = vec![target];
        while let Some(&next) = pending.last() {
            log::debug!("continuation: attempting lambda = {next}");
            match solve(&current.unknowns, next, problem, &opts_for(next)) {
                Ok(sol) => {
                    pending.pop();
                    lambda_good = next;
                    if let Some(tr) = trace.as_deref_mut() {
                        tr.push(ContinuationRecord {
                            lambda: next,
                            unknowns: sol.unknowns,
                            residual_norm: sol.residual_norm,
                            iterations: sol.iterations,
                        });
                    }
                    current = sol;
                }
                Err(ShootingError::Diverged { .. }) | Err(ShootingError::Flow(_)) => {
                    let mid = 0.5 * (lambda_good + next);
                    if next - lambda_good < opts.min_lambda_step {
                        return Err(ShootingError::ContinuationStuck {
                            lambda_achieved: lambda_good,
                            best: Box::new(current),
                        });
                    }
                    pending.push(mid);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(current)
}

/// Coast-based estimate of the transfer time: the true longitude must sweep
/// from l0 to l_f, so average the mean motions of the initial and final
/// orbits and divide the sweep by it.
pub fn coast_time_estimate(p0: f64, e0: f64, pf: f64, ef: f64, l0: f64, l_f: f64) -> f64 {
    let n = |p: f64, e: f64| {
        let a = p / (1.0 - e * e);
        (1.0 / (a * a * a)).sqrt()
    };
    let n_avg = 0.5 * (n(p0, e0) + n(pf, ef));
    (l_f - l0) / n_avg
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GuessSearchOpts {
    pub trials: usize,
    /// Newton iterations allotted to each polish attempt.
    pub polish_iters: usize,
    /// Candidates kept for polishing.
    pub keep: usize,
    pub seed: u64,
    /// Standard deviation of the sampled costate components.
    pub costate_scale: f64,
    /// Relative jitter applied to the estimated final time.
    pub t_f_jitter: f64,
}

impl Default for GuessSearchOpts {
    fn default() -> Self {
        Self {
            trials: 64,
            polish_iters: 12,
            keep: 6,
            seed: 20260810,
            costate_scale: 1.0,
            t_f_jitter: 0.15,
        }
    }
}

/// Seeded random multistart for the smoothed problem: sample initial
/// costates, rank by residual norm, polish the best few with short Newton
/// runs, and return the best unknowns found (converged or not).
pub fn search_initial_guess(
    problem: &TransferProblem,
    lambda0: f64,
    t_f_estimate: f64,
    opts: &ShootingOpts,
    search: &GuessSearchOpts,
) -> Result<ShootingUnknowns, ShootingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut candidates: Vec<(f64, ShootingUnknowns)> = Vec::new();
    // Cheap ranking pass at loose tolerance.
    let mut rank_opts = *opts;
    rank_opts.integrator.rel_tol = opts.integrator.rel_tol.max(1.0e-9);
    rank_opts.integrator.abs_tol = opts.integrator.abs_tol.max(1.0e-9);

    for _ in 0..search.trials {
        let mut p0 = [0.0; 7];
        for v in &mut p0 {
            // Box-Muller keeps the dependency surface small.
            let u1: f64 = rng.random::<f64>().max(1.0e-12);
            let u2: f64 = rng.random();
            *v = search.costate_scale
                * (-2.0 * u1.ln()).sqrt()
                * (std::f64::consts::TAU * u2).cos();
        }
        let jitter = 1.0 + search.t_f_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let u = ShootingUnknowns {
            p0,
            t_f: t_f_estimate * jitter,
        };
        if let Ok(r) = residual_vec(&u, lambda0, problem, &rank_opts) {
            candidates.push((r.amax(), u));
        }
    }
    if candidates.is_empty() {
        return Err(ShootingError::InvalidUnknowns(
            "no random candidate propagated successfully".into(),
        ));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best = candidates[0];
    let mut polish_opts = rank_opts;
    polish_opts.max_iters = search.polish_iters;
    for (_, u) in candidates.iter().take(search.keep) {
        match solve(u, lambda0, problem, &polish_opts) {
            Ok(sol) => return Ok(sol.unknowns),
            Err(ShootingError::Diverged {
                best: b,
                residual_norm,
                ..
            }) => {
                if residual_norm < best.0 {
                    best = (residual_norm, b);
                }
            }
            Err(_) => {}
        }
    }
    Ok(best.1)
}
