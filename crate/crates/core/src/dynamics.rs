//! State/costate spaces, controlled vector fields, the Hamiltonian and
//! switching function, the pointwise-optimal control law, and coordinate
//! charts.
//!
//! Two charts of the same seven-dimensional state space are supported:
//!
//! * `Cartesian`: x = (r, v, m) with the inverse-square drift field,
//! * `Meoe`: x = (P, ex, ey, hx, hy, l, m), modified equinoctial elements
//!   with Gauss variational thrust dynamics. The true longitude `l` is kept
//!   unwrapped so multi-revolution boundary conditions can pin it.
//!
//! Everything works in canonical units with mu = 1 (see [`crate::scale`]).
//! The phase vector convention throughout the crate is `z[0..7] = x`,
//! `z[7..14] = p`.

use crate::dual::{Dual, Dual2, Real};
use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATE_DIM: usize = 7;
pub const PHASE_DIM: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("radius {r} below floor {floor}")]
    RadiusBelowFloor { r: f64, floor: f64 },
    #[error("mass {m} below dry mass {m_c}")]
    DryMassViolated { m: f64, m_c: f64 },
    #[error("evaluation on the switching surface (|H1| = {h1_abs} < {tol}); control branch ambiguous")]
    BranchAmbiguous { h1_abs: f64, tol: f64 },
    #[error("orbit is not elliptic (e = {ecc})")]
    UnsupportedOrbit { ecc: f64 },
    #[error("degenerate orbit geometry: {0}")]
    DegenerateGeometry(String),
}

/// Admissibility floors used by pointwise evaluations.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Limits {
    /// Minimum radius (canonical length) before a singularity error.
    pub radius_floor: f64,
    /// Primer norm below which the thrust direction is considered degenerate.
    pub primer_floor: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            radius_floor: 1.0e-6,
            primer_floor: 1.0e-12,
        }
    }
}

/// Engine parameters in canonical units.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EngineSpec {
    /// Maximum thrust magnitude.
    pub u_max: f64,
    /// Mass-flow coefficient beta = 1/(Isp*g0).
    pub beta: f64,
    /// Dry mass.
    pub m_c: f64,
}

impl EngineSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.u_max <= 0.0 || self.beta <= 0.0 || self.m_c <= 0.0 {
            return Err(format!(
                "engine parameters must be positive: u_max={}, beta={}, m_c={}",
                self.u_max, self.beta, self.m_c
            ));
        }
        Ok(())
    }

    /// Canonicalize SI engine data: thrust in N, Isp in s, g0 in m/s^2,
    /// dry mass in kg.
    pub fn from_si(
        scale: &crate::scale::ScaleSet,
        u_max_newton: f64,
        isp_s: f64,
        g0_m_s2: f64,
        m_dry_kg: f64,
    ) -> Self {
        Self {
            u_max: scale.thrust_to_canonical(u_max_newton),
            beta: scale.beta_to_canonical(1.0 / (isp_s * g0_m_s2)),
            m_c: scale.mass_to_canonical(m_dry_kg),
        }
    }
}

/// Cartesian state (r, v, m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub m: f64,
}

impl StateVector {
    pub fn from_array(x: &[f64; 7]) -> Self {
        Self {
            r: Vector3::new(x[0], x[1], x[2]),
            v: Vector3::new(x[3], x[4], x[5]),
            m: x[6],
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.r.x, self.r.y, self.r.z, self.v.x, self.v.y, self.v.z, self.m,
        ]
    }
}

/// Adjoint of [`StateVector`]: (p_r, p_v, p_m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostateVector {
    pub p_r: Vector3<f64>,
    pub p_v: Vector3<f64>,
    pub p_m: f64,
}

impl CostateVector {
    pub fn from_array(p: &[f64; 7]) -> Self {
        Self {
            p_r: Vector3::new(p[0], p[1], p[2]),
            p_v: Vector3::new(p[3], p[4], p[5]),
            p_m: p[6],
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.p_r.x, self.p_r.y, self.p_r.z, self.p_v.x, self.p_v.y, self.p_v.z, self.p_m,
        ]
    }
}

/// Modified equinoctial elements plus mass. `l` is unwrapped (not reduced
/// mod 2pi) so it grows monotonically along a propagated trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meoe {
    pub p: f64,
    pub ex: f64,
    pub ey: f64,
    pub hx: f64,
    pub hy: f64,
    pub l: f64,
    pub m: f64,
}

impl Meoe {
    pub fn from_array(x: &[f64; 7]) -> Self {
        Self {
            p: x[0],
            ex: x[1],
            ey: x[2],
            hx: x[3],
            hy: x[4],
            l: x[5],
            m: x[6],
        }
    }

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.p, self.ex, self.ey, self.hx, self.hy, self.l, self.m,
        ]
    }

    /// Orbital radius P / (1 + ex cos l + ey sin l).
    pub fn radius(&self) -> f64 {
        self.p / (1.0 + self.ex * self.l.cos() + self.ey * self.l.sin())
    }
}

/// Pointwise control: throttle and unit thrust direction. The direction is
/// expressed in the chart's control frame (inertial axes for the Cartesian
/// chart, the radial/transverse/normal frame for the MEOE chart).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlSample {
    pub rho: f64,
    pub omega: Vector3<f64>,
    /// Set when the primer vector vanished and `omega` is an arbitrary unit
    /// vector rather than an optimal direction.
    pub degenerate_primer: bool,
}

/// Coordinate chart of the state space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    Cartesian,
    Meoe,
}

/// Fixed control branch along an arc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThrustBranch {
    /// rho = 0.
    Coast,
    /// rho = 1.
    Burn,
    /// rho maximizes the smoothed Hamiltonian for the given homotopy lambda.
    Smoothed,
}

#[inline]
fn dot3<S: Real>(a: &[S; 3], b: &[S; 3]) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn norm3<S: Real>(a: &[S; 3]) -> S {
    dot3(a, a).sqrt()
}

/// Drift field f0 in the given chart (mu = 1).
pub fn f0_generic<S: Real>(chart: Chart, x: &[S; 7]) -> [S; 7] {
    let zero = S::cst(0.0);
    match chart {
        Chart::Cartesian => {
            let r = [x[0], x[1], x[2]];
            let rn = norm3(&r);
            let inv_r3 = (rn * rn * rn).recip();
            [
                x[3],
                x[4],
                x[5],
                -r[0] * inv_r3,
                -r[1] * inv_r3,
                -r[2] * inv_r3,
                zero,
            ]
        }
        Chart::Meoe => {
            let (p, ex, ey, l) = (x[0], x[1], x[2], x[5]);
            let w = ex * l.cos() + ey * l.sin() + 1.0;
            // l_dot = sqrt(mu/P^3) w^2
            let ldot = w * w / (p * p.sqrt());
            [zero, zero, zero, zero, zero, ldot, zero]
        }
    }
}

/// Thrust input matrix B(x): maps a unit direction in the chart's control
/// frame to the first six state rows. The full thrust field is
/// f1 = ((u_max/m) B(x) omega, -beta u_max).
pub fn thrust_matrix_generic<S: Real>(chart: Chart, x: &[S; 7]) -> [[S; 3]; 6] {
    let zero = S::cst(0.0);
    match chart {
        Chart::Cartesian => {
            let one = S::cst(1.0);
            let mut b = [[zero; 3]; 6];
            b[3][0] = one;
            b[4][1] = one;
            b[5][2] = one;
            b
        }
        Chart::Meoe => {
            let (p, ex, ey, hx, hy, l) = (x[0], x[1], x[2], x[3], x[4], x[5]);
            let (sl, cl) = (l.sin(), l.cos());
            let w = ex * cl + ey * sl + 1.0;
            let inv_w = w.recip();
            let s2 = hx * hx + hy * hy + 1.0;
            let sq = p.sqrt(); // sqrt(P/mu), mu = 1
            let tilt = (hx * sl - hy * cl) * inv_w;
            [
                [zero, sq * (p * 2.0) * inv_w, zero],
                [
                    sq * sl,
                    sq * ((w + 1.0) * cl + ex) * inv_w,
                    -sq * ey * tilt,
                ],
                [
                    -(sq * cl),
                    sq * ((w + 1.0) * sl + ey) * inv_w,
                    sq * ex * tilt,
                ],
                [zero, zero, sq * s2 * cl * inv_w * 0.5],
                [zero, zero, sq * s2 * sl * inv_w * 0.5],
                [zero, zero, sq * tilt],
            ]
        }
    }
}

/// Thrust field f1(x, omega) for a unit direction omega.
pub fn f1_generic<S: Real>(
    chart: Chart,
    x: &[S; 7],
    omega: &[S; 3],
    engine: &EngineSpec,
) -> [S; 7] {
    let b = thrust_matrix_generic(chart, x);
    let acc = x[6].recip() * engine.u_max;
    let mut out = [S::cst(0.0); 7];
    for i in 0..6 {
        out[i] = dot3(&b[i], omega) * acc;
    }
    out[6] = S::cst(-engine.beta * engine.u_max);
    out
}

/// Primer vector in the chart's control frame: B(x)^T p_{0..6}.
pub fn primer_generic<S: Real>(chart: Chart, z: &[S; 14]) -> [S; 3] {
    let x: &[S; 7] = z[0..7].try_into().unwrap();
    let b = thrust_matrix_generic(chart, x);
    let mut out = [S::cst(0.0); 3];
    for (i, row) in b.iter().enumerate() {
        for k in 0..3 {
            out[k] = out[k] + row[k] * z[7 + i];
        }
    }
    out
}

/// p f1 at the optimal thrust direction: (u_max/m) |B^T p| - beta u_max p_m.
/// The switching function is this minus one.
pub fn s1_generic<S: Real>(chart: Chart, engine: &EngineSpec, z: &[S; 14]) -> S {
    let primer = primer_generic(chart, z);
    let pn = norm3(&primer);
    z[6].recip() * pn * engine.u_max - z[13] * (engine.beta * engine.u_max)
}

/// Drift Hamiltonian H0 = p f0(x).
pub fn h0_generic<S: Real>(chart: Chart, z: &[S; 14]) -> S {
    let x: &[S; 7] = z[0..7].try_into().unwrap();
    let f0 = f0_generic(chart, x);
    let mut acc = S::cst(0.0);
    for i in 0..7 {
        acc = acc + z[7 + i] * f0[i];
    }
    acc
}

/// Switching function H1 = p f1(x, omega(x,p)) - 1.
pub fn h1_generic<S: Real>(chart: Chart, engine: &EngineSpec, z: &[S; 14]) -> S {
    s1_generic(chart, engine, z) - 1.0
}

/// Pointwise maximizer of the smoothed Hamiltonian with running cost
/// lambda*rho + (1-lambda)*rho^2, saturated to [0, 1]. Reduces to bang-bang
/// on the sign of H1 = s1 - 1 at lambda = 1.
pub fn smoothed_rho(s1: f64, lambda: f64) -> f64 {
    if lambda >= 1.0 {
        if s1 - 1.0 >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        ((s1 - lambda) / (2.0 * (1.0 - lambda))).clamp(0.0, 1.0)
    }
}

/// Maximized Hamiltonian in a fixed control branch.
///
/// For the `Smoothed` branch the saturation case is decided on the primal
/// value of s1 and the corresponding closed form is evaluated, which keeps
/// the expression exact for dual arguments away from the clamp corners.
pub fn hamiltonian_generic<S: Real>(
    chart: Chart,
    engine: &EngineSpec,
    lambda: f64,
    branch: ThrustBranch,
    z: &[S; 14],
) -> S {
    let h0 = h0_generic(chart, z);
    match branch {
        ThrustBranch::Coast => h0,
        ThrustBranch::Burn => h0 + s1_generic(chart, engine, z) - 1.0,
        ThrustBranch::Smoothed => {
            let s1 = s1_generic(chart, engine, z);
            let rho = smoothed_rho(s1.val(), lambda);
            if lambda >= 1.0 {
                if rho > 0.0 {
                    h0 + s1 - 1.0
                } else {
                    h0
                }
            } else if rho <= 0.0 {
                h0
            } else if rho >= 1.0 {
                // Saturated at full throttle: H0 + s1 - lambda - (1-lambda).
                h0 + s1 - 1.0
            } else {
                // Interior optimum: H0 + (s1-lambda)^2 / (4(1-lambda)).
                let d = s1 - lambda;
                h0 + d * d / (4.0 * (1.0 - lambda))
            }
        }
    }
}

/// Throttle for the given branch at a phase point.
pub fn rho_at(
    chart: Chart,
    engine: &EngineSpec,
    lambda: f64,
    branch: ThrustBranch,
    z: &[f64; 14],
) -> f64 {
    match branch {
        ThrustBranch::Coast => 0.0,
        ThrustBranch::Burn => 1.0,
        ThrustBranch::Smoothed => smoothed_rho(s1_generic(chart, engine, z), lambda),
    }
}

/// Maximized Hamiltonian value.
pub fn hamiltonian_at(
    chart: Chart,
    engine: &EngineSpec,
    lambda: f64,
    branch: ThrustBranch,
    z: &[f64; 14],
) -> f64 {
    hamiltonian_generic(chart, engine, lambda, branch, z)
}

/// Switching function value.
pub fn h1_at(chart: Chart, engine: &EngineSpec, z: &[f64; 14]) -> f64 {
    h1_generic(chart, engine, z)
}

/// Gradient of H1 with respect to the full phase vector.
pub fn h1_grad(chart: Chart, engine: &EngineSpec, z: &[f64; 14]) -> [f64; 14] {
    let mut zd = [Dual::<14>::cst(0.0); 14];
    for i in 0..14 {
        zd[i] = Dual::var(z[i], i);
    }
    h1_generic(chart, engine, &zd).eps
}

/// Time derivative of H1 along the extremal flow.
///
/// This is the Poisson bracket {H0, H1}: the rho H1 part of the Hamiltonian
/// commutes with H1, so the value is branch-independent and in particular
/// continuous across switching times.
pub fn h1_dot_at(chart: Chart, engine: &EngineSpec, z: &[f64; 14]) -> f64 {
    let g = h1_grad(chart, engine, z);
    let drift = canonical_rhs(chart, engine, 1.0, ThrustBranch::Coast, z);
    let mut acc = 0.0;
    for i in 0..14 {
        acc += g[i] * drift[i];
    }
    acc
}

/// Right-hand side of the canonical equations xdot = dH/dp, pdot = -dH/dx
/// in a fixed control branch.
pub fn canonical_rhs(
    chart: Chart,
    engine: &EngineSpec,
    lambda: f64,
    branch: ThrustBranch,
    z: &[f64; 14],
) -> [f64; 14] {
    let mut zd = [Dual::<14>::cst(0.0); 14];
    for i in 0..14 {
        zd[i] = Dual::var(z[i], i);
    }
    let h = hamiltonian_generic(chart, engine, lambda, branch, &zd);
    let mut out = [0.0; 14];
    for i in 0..7 {
        out[i] = h.eps[7 + i];
        out[7 + i] = -h.eps[i];
    }
    out
}

/// First and second partials of the maximized Hamiltonian with the active
/// control branch held fixed.
#[derive(Clone, Debug)]
pub struct HamiltonianDerivatives {
    pub value: f64,
    pub h_x: SVector<f64, 7>,
    pub h_p: SVector<f64, 7>,
    pub h_xx: SMatrix<f64, 7, 7>,
    /// d2H/dx_i dp_j.
    pub h_xp: SMatrix<f64, 7, 7>,
    /// d2H/dp_i dx_j = h_xp transposed.
    pub h_px: SMatrix<f64, 7, 7>,
    pub h_pp: SMatrix<f64, 7, 7>,
}

/// Hessian blocks of the maximized Hamiltonian for a known branch.
pub fn hamiltonian_derivatives_branch(
    chart: Chart,
    engine: &EngineSpec,
    lambda: f64,
    branch: ThrustBranch,
    z: &[f64; 14],
) -> HamiltonianDerivatives {
    let mut zd = [Dual2::<14>::cst(0.0); 14];
    for i in 0..14 {
        zd[i] = Dual2::var(z[i], i);
    }
    let h = hamiltonian_generic(chart, engine, lambda, branch, &zd);
    let mut h_x = SVector::<f64, 7>::zeros();
    let mut h_p = SVector::<f64, 7>::zeros();
    let mut h_xx = SMatrix::<f64, 7, 7>::zeros();
    let mut h_xp = SMatrix::<f64, 7, 7>::zeros();
    let mut h_pp = SMatrix::<f64, 7, 7>::zeros();
    for i in 0..7 {
        h_x[i] = h.eps[i];
        h_p[i] = h.eps[7 + i];
        for j in 0..7 {
            h_xx[(i, j)] = h.hess[i][j];
            h_xp[(i, j)] = h.hess[i][7 + j];
            h_pp[(i, j)] = h.hess[7 + i][7 + j];
        }
    }
    HamiltonianDerivatives {
        value: h.re,
        h_x,
        h_p,
        h_xx,
        h_px: h_xp.transpose(),
        h_xp,
        h_pp,
    }
}

/// Hessian blocks with the branch selected from the sign of H1.
///
/// Errors if the point lies on the switching surface (at lambda = 1), where
/// the active branch is ambiguous.
pub fn hamiltonian_derivatives(
    chart: Chart,
    engine: &EngineSpec,
    lambda: f64,
    z: &[f64; 14],
    h1_tol: f64,
) -> Result<HamiltonianDerivatives, DynamicsError> {
    let branch = if lambda >= 1.0 {
        let h1 = h1_at(chart, engine, z);
        if h1.abs() < h1_tol {
            return Err(DynamicsError::BranchAmbiguous {
                h1_abs: h1.abs(),
                tol: h1_tol,
            });
        }
        if h1 > 0.0 {
            ThrustBranch::Burn
        } else {
            ThrustBranch::Coast
        }
    } else {
        ThrustBranch::Smoothed
    };
    Ok(hamiltonian_derivatives_branch(
        chart, engine, lambda, branch, z,
    ))
}

// ---------------------------------------------------------------------------
// Cartesian-chart operations in the shapes the rest of the crate and the
// reports use.
// ---------------------------------------------------------------------------

/// Drift field at a Cartesian state.
pub fn eval_f0(x: &StateVector, limits: &Limits) -> Result<[f64; 7], DynamicsError> {
    let r = x.r.norm();
    if r < limits.radius_floor {
        return Err(DynamicsError::RadiusBelowFloor {
            r,
            floor: limits.radius_floor,
        });
    }
    Ok(f0_generic(Chart::Cartesian, &x.to_array()))
}

/// Thrust field at a Cartesian state for a unit direction.
pub fn eval_f1(
    x: &StateVector,
    omega: &Vector3<f64>,
    engine: &EngineSpec,
) -> Result<[f64; 7], DynamicsError> {
    if x.m < engine.m_c {
        return Err(DynamicsError::DryMassViolated {
            m: x.m,
            m_c: engine.m_c,
        });
    }
    let om = [omega.x, omega.y, omega.z];
    Ok(f1_generic(Chart::Cartesian, &x.to_array(), &om, engine))
}

/// Pointwise-optimal control from the costate (Cartesian chart).
pub fn control_from_costate(
    x: &StateVector,
    p: &CostateVector,
    engine: &EngineSpec,
    lambda: f64,
) -> ControlSample {
    let limits = Limits::default();
    let pv_norm = p.p_v.norm();
    let (omega, degenerate) = if pv_norm > limits.primer_floor {
        (p.p_v / pv_norm, false)
    } else {
        (Vector3::x(), true)
    };
    let s1 = engine.u_max / x.m * pv_norm - engine.beta * engine.u_max * p.p_m;
    ControlSample {
        rho: smoothed_rho(s1, lambda),
        omega,
        degenerate_primer: degenerate,
    }
}

/// Switching function at a Cartesian phase point:
/// H1 = (u_max/m) |p_v| - beta u_max p_m - 1.
pub fn switching_fn(x: &StateVector, p: &CostateVector, engine: &EngineSpec) -> f64 {
    engine.u_max / x.m * p.p_v.norm() - engine.beta * engine.u_max * p.p_m - 1.0
}

/// Time derivative of the switching function along the flow.
pub fn switching_fn_dot(x: &StateVector, p: &CostateVector, engine: &EngineSpec) -> f64 {
    let z = pack(&x.to_array(), &p.to_array());
    h1_dot_at(Chart::Cartesian, engine, &z)
}

/// Maximized Hamiltonian at a Cartesian phase point.
pub fn hamiltonian(x: &StateVector, p: &CostateVector, engine: &EngineSpec, lambda: f64) -> f64 {
    let z = pack(&x.to_array(), &p.to_array());
    hamiltonian_at(
        Chart::Cartesian,
        engine,
        lambda,
        ThrustBranch::Smoothed,
        &z,
    )
}

#[inline]
pub fn pack(x: &[f64; 7], p: &[f64; 7]) -> [f64; 14] {
    let mut z = [0.0; 14];
    z[..7].copy_from_slice(x);
    z[7..].copy_from_slice(p);
    z
}

#[inline]
pub fn split(z: &[f64; 14]) -> ([f64; 7], [f64; 7]) {
    let mut x = [0.0; 7];
    let mut p = [0.0; 7];
    x.copy_from_slice(&z[..7]);
    p.copy_from_slice(&z[7..]);
    (x, p)
}

// ---------------------------------------------------------------------------
// Chart conversions (Broucke-Cefola equinoctial elements).
// ---------------------------------------------------------------------------

/// Equinoctial in-plane basis vectors f_hat, g_hat from the inclination
/// vector (hx, hy). Together with h_hat they form an orthonormal frame; the
/// position direction at true longitude l is cos(l) f_hat + sin(l) g_hat.
fn equinoctial_basis<S: Real>(hx: S, hy: S) -> ([S; 3], [S; 3]) {
    let s2 = hx * hx + hy * hy + 1.0;
    let inv = s2.recip();
    let f = [
        (hx * hx - hy * hy + 1.0) * inv,
        hx * hy * 2.0 * inv,
        -(hy * 2.0 * inv),
    ];
    let g = [
        hx * hy * 2.0 * inv,
        (hy * hy - hx * hx + 1.0) * inv,
        hx * 2.0 * inv,
    ];
    (f, g)
}

/// MEOE to Cartesian, generic over the scalar type. No validation.
pub fn meoe_to_cartesian_generic<S: Real>(e: &[S; 7], mu: f64) -> [S; 7] {
    let (p, ex, ey, hx, hy, l, m) = (e[0], e[1], e[2], e[3], e[4], e[5], e[6]);
    let (sl, cl) = (l.sin(), l.cos());
    let w = ex * cl + ey * sl + 1.0;
    let r = p / w;
    let c = (p.recip() * mu).sqrt();
    let (f, g) = equinoctial_basis(hx, hy);
    let mut out = [S::cst(0.0); 7];
    for k in 0..3 {
        out[k] = r * (f[k] * cl + g[k] * sl);
        out[3 + k] = c * (g[k] * (cl + ex) - f[k] * (sl + ey));
    }
    out[6] = m;
    out
}

/// Cartesian to MEOE, generic over the scalar type. The true longitude is
/// returned on the winding branch closest to `l_hint`. No validation.
pub fn cartesian_to_meoe_generic<S: Real>(x: &[S; 7], l_hint: f64, mu: f64) -> [S; 7] {
    let r = [x[0], x[1], x[2]];
    let v = [x[3], x[4], x[5]];
    let hv = [
        r[1] * v[2] - r[2] * v[1],
        r[2] * v[0] - r[0] * v[2],
        r[0] * v[1] - r[1] * v[0],
    ];
    let hn = norm3(&hv);
    let p = dot3(&hv, &hv) / mu;
    // hx = -h_hat_y / (1 + h_hat_z), hy = h_hat_x / (1 + h_hat_z).
    let denom = (hn + hv[2]).recip();
    let hx = -(hv[1] * denom);
    let hy = hv[0] * denom;
    // Eccentricity vector (v x h)/mu - r_hat.
    let rn = norm3(&r);
    let inv_rn = rn.recip();
    let vxh = [
        v[1] * hv[2] - v[2] * hv[1],
        v[2] * hv[0] - v[0] * hv[2],
        v[0] * hv[1] - v[1] * hv[0],
    ];
    let ev = [
        vxh[0] / mu - r[0] * inv_rn,
        vxh[1] / mu - r[1] * inv_rn,
        vxh[2] / mu - r[2] * inv_rn,
    ];
    let (f, g) = equinoctial_basis(hx, hy);
    let ex = dot3(&ev, &f);
    let ey = dot3(&ev, &g);
    let l_principal = dot3(&r, &g).atan2(dot3(&r, &f));
    let two_pi = std::f64::consts::TAU;
    let k = ((l_hint - l_principal.val()) / two_pi).round();
    let l = l_principal + two_pi * k;
    [p, ex, ey, hx, hy, l, x[6]]
}

/// MEOE to Cartesian with validation: requires an elliptic orbit.
pub fn meoe_to_cartesian(e: &Meoe, mu: f64) -> Result<StateVector, DynamicsError> {
    let ecc = (e.ex * e.ex + e.ey * e.ey).sqrt();
    if !(ecc < 1.0) || e.p <= 0.0 {
        return Err(DynamicsError::UnsupportedOrbit { ecc });
    }
    let out = meoe_to_cartesian_generic(&e.to_array(), mu);
    Ok(StateVector::from_array(&out))
}

/// Cartesian to MEOE with validation: requires an elliptic, non-degenerate,
/// non-retrograde-singular orbit. `l_hint` selects the winding branch of the
/// unwrapped true longitude.
pub fn cartesian_to_meoe(
    x: &StateVector,
    l_hint: f64,
    mu: f64,
) -> Result<Meoe, DynamicsError> {
    let hv = x.r.cross(&x.v);
    let hn = hv.norm();
    if hn < 1.0e-12 * x.r.norm().max(1.0) {
        return Err(DynamicsError::DegenerateGeometry(
            "angular momentum r x v vanishes".into(),
        ));
    }
    if hn + hv.z < 1.0e-9 * hn {
        return Err(DynamicsError::DegenerateGeometry(
            "retrograde equatorial orbit is singular in equinoctial elements".into(),
        ));
    }
    let out = cartesian_to_meoe_generic(&x.to_array(), l_hint, mu);
    let e = Meoe::from_array(&out);
    let ecc = (e.ex * e.ex + e.ey * e.ey).sqrt();
    if !(ecc < 1.0) {
        return Err(DynamicsError::UnsupportedOrbit { ecc });
    }
    Ok(e)
}

/// Jacobian of the Cartesian-to-MEOE map at a point. Used to transform
/// costates between charts: p_cart = p_meoe * J.
pub fn cartesian_to_meoe_jacobian(x: &StateVector, l_hint: f64, mu: f64) -> SMatrix<f64, 7, 7> {
    let xa = x.to_array();
    let mut seeds = [Dual::<7>::cst(0.0); 7];
    for i in 0..7 {
        seeds[i] = Dual::var(xa[i], i);
    }
    let y = cartesian_to_meoe_generic(&seeds, l_hint, mu);
    let mut j = SMatrix::<f64, 7, 7>::zeros();
    for (row, yi) in y.iter().enumerate() {
        for col in 0..7 {
            j[(row, col)] = yi.eps[col];
        }
    }
    j
}

/// Orthonormal radial/transverse/normal basis at a Cartesian state, as the
/// columns of a rotation matrix (r_hat, s_hat, h_hat).
pub fn rsw_basis(x: &StateVector) -> Matrix3<f64> {
    let r_hat = x.r.normalize();
    let h_hat = x.r.cross(&x.v).normalize();
    let s_hat = h_hat.cross(&r_hat);
    Matrix3::from_columns(&[r_hat, s_hat, h_hat])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn engine() -> EngineSpec {
        EngineSpec {
            u_max: 0.0297,
            beta: 0.1569,
            m_c: 0.2,
        }
    }

    /// Table values of the transfer problem in canonical units (GEO scale,
    /// 1500 kg mass unit).
    fn gto_meoe(l: f64) -> Meoe {
        Meoe {
            p: 11625.0 / 42165.0,
            ex: 0.75,
            ey: 0.0,
            hx: 6.12e-2,
            hy: 0.0,
            l,
            m: 1.0,
        }
    }

    #[test]
    fn f0_on_unit_circular_orbit() {
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            m: 1.0,
        };
        let f = eval_f0(&x, &Limits::default()).unwrap();
        let expect = [0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0];
        for i in 0..7 {
            assert!((f[i] - expect[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn f0_inverse_square_at_distance_two() {
        let x = StateVector {
            r: Vector3::new(0.0, 2.0, 0.0),
            v: Vector3::zeros(),
            m: 1.0,
        };
        let f = eval_f0(&x, &Limits::default()).unwrap();
        assert!((f[4] - (-0.25)).abs() < 1e-15);
        assert_eq!(f[3], 0.0);
        assert_eq!(f[5], 0.0);
    }

    #[test]
    fn f0_radius_floor_is_an_error() {
        let x = StateVector {
            r: Vector3::new(1e-9, 0.0, 0.0),
            v: Vector3::zeros(),
            m: 1.0,
        };
        assert!(matches!(
            eval_f0(&x, &Limits::default()),
            Err(DynamicsError::RadiusBelowFloor { .. })
        ));
    }

    /// Independent two-body oracle at the initial perigee state.
    #[test]
    fn f0_matches_independent_two_body_rhs_at_table_perigee() {
        let x = meoe_to_cartesian(&gto_meoe(0.0), 1.0).unwrap();
        let f = eval_f0(&x, &Limits::default()).unwrap();
        // Separately coded two-body acceleration.
        let rn = (x.r.x * x.r.x + x.r.y * x.r.y + x.r.z * x.r.z).sqrt();
        let acc = [
            -x.r.x / (rn * rn * rn),
            -x.r.y / (rn * rn * rn),
            -x.r.z / (rn * rn * rn),
        ];
        for i in 0..3 {
            assert!((f[i] - [x.v.x, x.v.y, x.v.z][i]).abs() < 1e-14);
            assert!((f[3 + i] - acc[i]).abs() < 1e-14);
        }
        assert_eq!(f[6], 0.0);
    }

    #[test]
    fn f1_componentwise() {
        // Engine off.
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            m: 1.0,
        };
        let eng_off = EngineSpec {
            u_max: 1e-300,
            beta: 0.1,
            m_c: 0.1,
        };
        let f = eval_f1(&x, &Vector3::z(), &eng_off).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-299));

        // m = 2, u_max = 1, omega = e_z, beta = 0.1.
        let x2 = StateVector { m: 2.0, ..x };
        let eng = EngineSpec {
            u_max: 1.0,
            beta: 0.1,
            m_c: 0.1,
        };
        let f = eval_f1(&x2, &Vector3::z(), &eng).unwrap();
        let expect = [0.0, 0.0, 0.0, 0.0, 0.0, 0.5, -0.1];
        for i in 0..7 {
            assert!((f[i] - expect[i]).abs() < 1e-15);
        }
        // Dry-mass violation.
        let x3 = StateVector { m: 0.05, ..x };
        assert!(matches!(
            eval_f1(&x3, &Vector3::z(), &eng),
            Err(DynamicsError::DryMassViolated { .. })
        ));
    }

    /// Case engine in SI: 10 N on 1500 kg gives 10/1500 m/s^2 and
    /// mdot = -5.1e-4 kg/s at full throttle.
    #[test]
    fn f1_case_engine_si_values() {
        let scale = crate::scale::ScaleSet::geo(1500.0);
        let eng = EngineSpec::from_si(&scale, 10.0, 2000.0, 9.8, 500.0);
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            m: 1.0,
        };
        let f = eval_f1(&x, &Vector3::x(), &eng).unwrap();
        // Acceleration back to m/s^2.
        let acc_unit_m_s2 = scale.length_km * 1.0e3 / (scale.time_s * scale.time_s);
        assert!((f[3] * acc_unit_m_s2 - 10.0 / 1500.0).abs() < 1e-9);
        // Mass flow back to kg/s.
        let mdot_kg_s = f[6] * scale.mass_kg / scale.time_s;
        assert!((mdot_kg_s + 5.102e-4).abs() < 2e-6);
    }

    #[test]
    fn control_direction_is_normalized_primer() {
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            m: 1.0,
        };
        let p = CostateVector {
            p_r: Vector3::zeros(),
            p_v: Vector3::new(0.0, 0.0, 2.0),
            p_m: 0.0,
        };
        let c = control_from_costate(&x, &p, &engine(), 1.0);
        assert!((c.omega - Vector3::z()).norm() < 1e-15);
        assert!(!c.degenerate_primer);
        assert!((c.omega.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bang_bang_throttle_follows_switching_sign() {
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            m: 1.0,
        };
        // Primer small enough that H1 = u_max |p_v|/m - 1 < 0.
        let p = CostateVector {
            p_r: Vector3::zeros(),
            p_v: Vector3::new(1.0, 0.0, 0.0),
            p_m: 0.0,
        };
        let eng = engine();
        assert!(switching_fn(&x, &p, &eng) < 0.0);
        assert_eq!(control_from_costate(&x, &p, &eng, 1.0).rho, 0.0);
        // Large primer: H1 > 0, full throttle.
        let p2 = CostateVector {
            p_v: Vector3::new(100.0, 0.0, 0.0),
            ..p
        };
        assert!(switching_fn(&x, &p2, &eng) > 0.0);
        assert_eq!(control_from_costate(&x, &p2, &eng, 1.0).rho, 1.0);
    }

    #[test]
    fn degenerate_primer_is_flagged() {
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            m: 1.0,
        };
        let p = CostateVector {
            p_r: Vector3::new(0.1, 0.0, 0.0),
            p_v: Vector3::zeros(),
            p_m: 0.0,
        };
        let c = control_from_costate(&x, &p, &engine(), 1.0);
        assert!(c.degenerate_primer);
        assert!((c.omega.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn switching_fn_closed_form_values() {
        let eng = EngineSpec {
            u_max: 1.0,
            beta: 0.0_f64.max(1e-300),
            m_c: 0.1,
        };
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 1.0, 0.0),
            m: 1.0,
        };
        // No primer, unit cost.
        let p0 = CostateVector {
            p_r: Vector3::zeros(),
            p_v: Vector3::zeros(),
            p_m: 0.0,
        };
        assert!((switching_fn(&x, &p0, &eng) + 1.0).abs() < 1e-12);
        // |p_v| = 1, m = 1, u_max = 1, beta ~ 0: on the switching surface.
        let p1 = CostateVector {
            p_v: Vector3::x(),
            ..p0
        };
        assert!(switching_fn(&x, &p1, &eng).abs() < 1e-12);
    }

    /// Fibonacci-sphere directions for the brute-force control oracles.
    fn sphere_directions(n: usize) -> Vec<[f64; 3]> {
        let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        (0..n)
            .map(|k| {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                [r * phi.cos(), r * phi.sin(), z]
            })
            .collect()
    }

    /// Raw (pre-maximization) Hamiltonian for a concrete control.
    fn h_raw(z: &[f64; 14], eng: &EngineSpec, lambda: f64, rho: f64, omega: &[f64; 3]) -> f64 {
        let h0 = h0_generic(Chart::Cartesian, z);
        let x: [f64; 7] = z[..7].try_into().unwrap();
        let f1 = f1_generic(Chart::Cartesian, &x, omega, eng);
        let mut pf1 = 0.0;
        for i in 0..7 {
            pf1 += z[7 + i] * f1[i];
        }
        h0 + rho * pf1 - (lambda * rho + (1.0 - lambda) * rho * rho)
    }

    fn random_phase(rng: &mut ChaCha8Rng) -> [f64; 14] {
        let mut z = [0.0; 14];
        // Keep the state on a sane orbit-like region.
        z[0] = 1.0 + 0.3 * rng.random::<f64>();
        z[1] = 0.4 * rng.random::<f64>();
        z[2] = 0.2 * rng.random::<f64>();
        z[3] = -0.3 + 0.6 * rng.random::<f64>();
        z[4] = 0.8 + 0.3 * rng.random::<f64>();
        z[5] = 0.2 * rng.random::<f64>();
        z[6] = 0.6 + 0.4 * rng.random::<f64>();
        for i in 7..14 {
            z[i] = -2.0 + 4.0 * rng.random::<f64>();
        }
        z
    }

    /// The smoothed throttle maximizes the raw Hamiltonian over a discretized
    /// control ball.
    #[test]
    fn smoothed_control_matches_brute_force_maximizer() {
        let eng = engine();
        let lambda = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let z = random_phase(&mut rng);
            let (x, p) = (StateVector::from_array(&z[..7].try_into().unwrap()),
                          CostateVector::from_array(&z[7..].try_into().unwrap()));
            let c = control_from_costate(&x, &p, &eng, lambda);
            let h_star = h_raw(
                &z,
                &eng,
                lambda,
                c.rho,
                &[c.omega.x, c.omega.y, c.omega.z],
            );
            // 2000 directions x 500 throttle levels.
            let mut best = f64::NEG_INFINITY;
            for dir in sphere_directions(2000) {
                for k in 0..=500 {
                    let rho = k as f64 / 500.0;
                    best = best.max(h_raw(&z, &eng, lambda, rho, &dir));
                }
            }
            assert!(
                h_star >= best - 1e-3,
                "control law beaten by grid: {h_star} vs {best}"
            );
        }
    }

    /// Pointwise maximization property: no random admissible control beats
    /// the control law's Hamiltonian value.
    #[test]
    fn control_law_dominates_random_controls() {
        let eng = engine();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for lambda in [0.0, 0.5, 1.0] {
            let z = random_phase(&mut rng);
            let (x, p) = (StateVector::from_array(&z[..7].try_into().unwrap()),
                          CostateVector::from_array(&z[7..].try_into().unwrap()));
            let c = control_from_costate(&x, &p, &eng, lambda);
            let h_star = h_raw(
                &z,
                &eng,
                lambda,
                c.rho,
                &[c.omega.x, c.omega.y, c.omega.z],
            );
            for _ in 0..10_000 {
                let mut dir = [0.0; 3];
                let mut n = 0.0;
                while n < 1e-6 {
                    for d in &mut dir {
                        *d = -1.0 + 2.0 * rng.random::<f64>();
                    }
                    n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
                }
                for d in &mut dir {
                    *d /= n;
                }
                let rho = rng.random::<f64>();
                let h = h_raw(&z, &eng, lambda, rho, &dir);
                assert!(h <= h_star + 1e-12, "random control beat the law");
            }
        }
    }

    #[test]
    fn coast_hamiltonian_is_drift_only() {
        let z = {
            let mut z = [0.0; 14];
            z[..7].copy_from_slice(&[1.1, 0.2, 0.0, 0.0, 0.95, 0.0, 1.0]);
            z[7..].copy_from_slice(&[0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7]);
            z
        };
        let h = hamiltonian_at(Chart::Cartesian, &engine(), 1.0, ThrustBranch::Coast, &z);
        let (x, p) = split(&z);
        let rn = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let pr_v = p[0] * x[3] + p[1] * x[4] + p[2] * x[5];
        let pv_r = p[3] * x[0] + p[4] * x[1] + p[5] * x[2];
        let expect = pr_v - pv_r / (rn * rn * rn);
        assert!((h - expect).abs() < 1e-14);
    }

    /// Hessian blocks against central finite differences of the Hamiltonian,
    /// in both charts, away from the switching surface.
    #[test]
    fn hamiltonian_derivatives_match_finite_differences() {
        let eng = engine();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for chart in [Chart::Cartesian, Chart::Meoe] {
            let mut checked = 0;
            while checked < 20 {
                let z = match chart {
                    Chart::Cartesian => random_phase(&mut rng),
                    Chart::Meoe => {
                        let mut z = random_phase(&mut rng);
                        // Reinterpret the state block as equinoctial elements.
                        z[0] = 0.8 + 0.4 * rng.random::<f64>(); // P
                        z[1] = 0.3 * rng.random::<f64>(); // ex
                        z[2] = 0.2 * rng.random::<f64>(); // ey
                        z[3] = 0.1 * rng.random::<f64>(); // hx
                        z[4] = 0.1 * rng.random::<f64>(); // hy
                        z[5] = std::f64::consts::TAU * rng.random::<f64>(); // l
                        z
                    }
                };
                let h1 = h1_at(chart, &eng, &z);
                if h1.abs() < 1e-3 {
                    continue; // stay off the switching surface
                }
                checked += 1;
                let d = hamiltonian_derivatives(chart, &eng, 1.0, &z, 1e-6).unwrap();
                let branch = if h1 > 0.0 {
                    ThrustBranch::Burn
                } else {
                    ThrustBranch::Coast
                };
                let h_at = |z: &[f64; 14]| hamiltonian_at(chart, &eng, 1.0, branch, z);
                let step = 1e-5;
                for i in 0..14 {
                    for j in 0..14 {
                        let mut zpp = z;
                        let mut zpm = z;
                        let mut zmp = z;
                        let mut zmm = z;
                        zpp[i] += step;
                        zpp[j] += step;
                        zpm[i] += step;
                        zpm[j] -= step;
                        zmp[i] -= step;
                        zmp[j] += step;
                        zmm[i] -= step;
                        zmm[j] -= step;
                        let fd = (h_at(&zpp) - h_at(&zpm) - h_at(&zmp) + h_at(&zmm))
                            / (4.0 * step * step);
                        let ad = match (i < 7, j < 7) {
                            (true, true) => d.h_xx[(i, j)],
                            (true, false) => d.h_xp[(i, j - 7)],
                            (false, true) => d.h_px[(i - 7, j)],
                            (false, false) => d.h_pp[(i - 7, j - 7)],
                        };
                        let scale = ad.abs().max(fd.abs()).max(1.0);
                        assert!(
                            (ad - fd).abs() / scale < 1e-5,
                            "{chart:?} block ({i},{j}): ad {ad} vs fd {fd}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hamiltonian_derivatives_symmetry_and_coast_structure() {
        let eng = engine();
        let z = {
            let mut z = [0.0; 14];
            z[..7].copy_from_slice(&[1.1, 0.2, -0.1, 0.1, 0.9, 0.05, 1.0]);
            z[7..].copy_from_slice(&[0.3, -0.2, 0.15, 0.25, -0.4, 0.1, 0.2]);
            z
        };
        let d = hamiltonian_derivatives_branch(Chart::Cartesian, &eng, 1.0, ThrustBranch::Coast, &z);
        // Schwarz symmetry is exact by construction.
        assert_eq!((d.h_xx - d.h_xx.transpose()).norm(), 0.0);
        assert_eq!((d.h_pp - d.h_pp.transpose()).norm(), 0.0);
        assert_eq!((d.h_xp - d.h_px.transpose()).norm(), 0.0);
        // Coast Hamiltonian is linear in p: H_pp vanishes.
        assert_eq!(d.h_pp.norm(), 0.0);
        // H_px is the Jacobian of the drift field: position-velocity block is
        // the identity, mass row and column vanish.
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d.h_px[(i, 3 + j)] - expect).abs() < 1e-14);
            }
        }
        for k in 0..7 {
            assert_eq!(d.h_px[(6, k)], 0.0);
            assert_eq!(d.h_px[(k, 6)], 0.0);
        }
        // Branch ambiguity on the switching surface is an error.
        let mut z_s = z;
        z_s[10] = 0.0; // shrink primer
        z_s[11] = 0.0;
        z_s[12] = 0.0;
        // Construct |p_v| so that H1 = 0: |p_v| = m(1 + beta u p_m)/u.
        let pv = z_s[6] * (1.0 + eng.beta * eng.u_max * z_s[13]) / eng.u_max;
        z_s[10] = pv;
        assert!(matches!(
            hamiltonian_derivatives(Chart::Cartesian, &eng, 1.0, &z_s, 1e-6),
            Err(DynamicsError::BranchAmbiguous { .. })
        ));
    }

    #[test]
    fn table_orbit_radius_at_perigee() {
        // Conic radius P/(1+e) at l = 0, checked in km.
        let x = meoe_to_cartesian(&gto_meoe(0.0), 1.0).unwrap();
        let r_km = x.r.norm() * 42165.0;
        assert!((r_km - 11625.0 / 1.75 * 1.0).abs() < 1e-6);
        assert!((r_km - 6642.857142857143).abs() < 1e-6);
    }

    #[test]
    fn circular_equatorial_quarter_longitude() {
        let e = Meoe {
            p: 1.0,
            ex: 0.0,
            ey: 0.0,
            hx: 0.0,
            hy: 0.0,
            l: std::f64::consts::FRAC_PI_2,
            m: 1.0,
        };
        let x = meoe_to_cartesian(&e, 1.0).unwrap();
        assert!((x.r - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-14);
        assert!((x.v - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn hyperbolic_orbit_is_rejected() {
        let e = Meoe {
            p: 1.0,
            ex: 1.2,
            ey: 0.0,
            hx: 0.0,
            hy: 0.0,
            l: 0.0,
            m: 1.0,
        };
        assert!(matches!(
            meoe_to_cartesian(&e, 1.0),
            Err(DynamicsError::UnsupportedOrbit { .. })
        ));
        // And in the other direction: a state with v well above escape speed.
        let x = StateVector {
            r: Vector3::new(1.0, 0.0, 0.0),
            v: Vector3::new(0.0, 2.0, 0.0),
            m: 1.0,
        };
        assert!(matches!(
            cartesian_to_meoe(&x, 0.0, 1.0),
            Err(DynamicsError::UnsupportedOrbit { .. })
        ));
    }

    #[test]
    fn longitude_unwrapping_follows_hint() {
        let l_true = 4.0 * std::f64::consts::TAU + 0.3;
        let e = gto_meoe(l_true);
        let x = meoe_to_cartesian(&e, 1.0).unwrap();
        let back = cartesian_to_meoe(&x, l_true - 0.5, 1.0).unwrap();
        assert!((back.l - l_true).abs() < 1e-10);
        // A hint on a different winding branch lands 2 pi away.
        let off = cartesian_to_meoe(&x, l_true - std::f64::consts::TAU, 1.0).unwrap();
        assert!((off.l - (l_true - std::f64::consts::TAU)).abs() < 1e-10);
    }

    #[test]
    fn round_trip_random_elliptic_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let e = Meoe {
                p: 0.3 + 1.5 * rng.random::<f64>(),
                ex: -0.4 + 0.8 * rng.random::<f64>(),
                ey: -0.4 + 0.8 * rng.random::<f64>(),
                hx: -0.5 + rng.random::<f64>(),
                hy: -0.5 + rng.random::<f64>(),
                l: -20.0 + 40.0 * rng.random::<f64>(),
                m: 0.5 + rng.random::<f64>(),
            };
            if e.ex * e.ex + e.ey * e.ey > 0.8 {
                continue;
            }
            let x = meoe_to_cartesian(&e, 1.0).unwrap();
            let back = cartesian_to_meoe(&x, e.l, 1.0).unwrap();
            let ea = e.to_array();
            let ba = back.to_array();
            for i in 0..7 {
                let scale = ea[i].abs().max(1.0);
                assert!(
                    (ea[i] - ba[i]).abs() / scale < 1e-10,
                    "component {i}: {} vs {}",
                    ea[i],
                    ba[i]
                );
            }
        }
    }

    /// Conversions must agree with the conic radius equation everywhere.
    #[test]
    fn conic_radius_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let e = Meoe {
                p: 0.5 + rng.random::<f64>(),
                ex: 0.5 * rng.random::<f64>(),
                ey: 0.3 * rng.random::<f64>(),
                hx: 0.2 * rng.random::<f64>(),
                hy: 0.2 * rng.random::<f64>(),
                l: 10.0 * rng.random::<f64>(),
                m: 1.0,
            };
            let x = meoe_to_cartesian(&e, 1.0).unwrap();
            assert!((x.r.norm() - e.radius()).abs() < 1e-12);
        }
    }
}
