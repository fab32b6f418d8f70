//! Propagation of the coupled state-costate system.
//!
//! An embedded Dormand-Prince 5(4) pair with the standard fourth-order dense
//! output drives all integrations. At lambda = 1 the extremal flow is a
//! hybrid system: the control branch is constant between switching times and
//! flips where the switching function H1 crosses zero. Every crossing is
//! located by safeguarded root refinement on the dense output, the integrator
//! restarts exactly at the refined time, and the resulting arc structure is
//! recorded. For lambda < 1 the smoothed flow is propagated as a single arc.

use crate::dynamics::{
    self, canonical_rhs, h1_at, h1_dot_at, Chart, EngineSpec, ThrustBranch,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("fuel exhausted at t = {t}: mass reached dry mass")]
    FuelExhausted { t: f64 },
    #[error("radius {r} fell below floor {floor} at t = {t}")]
    RadiusBelowFloor { t: f64, r: f64, floor: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    MaxStepsExceeded { t: f64 },
    #[error("switching at t = {t} is not regular: |H1_dot| = {h1_dot_abs} below floor {floor}")]
    IrregularSwitching { t: f64, h1_dot_abs: f64, floor: f64 },
    #[error("switching function stayed near zero over a finite span at t = {t}; singular arc rejected")]
    SingularArc { t: f64 },
}

/// Integration and event-location controls.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntegratorOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Switching times are located to within this interval of canonical time.
    pub event_tol: f64,
    /// Largest step the controller may take (0 disables the cap).
    pub h_max: f64,
    pub max_steps: usize,
    /// Radius floor for the collision guard.
    pub radius_floor: f64,
    /// Regularity floor for |H1_dot| at switching times.
    pub h1_dot_floor: f64,
    /// Roots closer than this to the start of an arc are treated as the
    /// arc's own boundary zero, not a new switching.
    pub min_arc_length: f64,
    /// |H1| band of the singular-arc detector.
    pub singular_h1_band: f64,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        Self {
            rel_tol: 1.0e-12,
            abs_tol: 1.0e-12,
            event_tol: 1.0e-10,
            h_max: 0.0,
            max_steps: 4_000_000,
            radius_floor: 1.0e-6,
            h1_dot_floor: 1.0e-8,
            min_arc_length: 1.0e-8,
            singular_h1_band: 1.0e-9,
        }
    }
}

// Dormand-Prince 5(4) coefficients. The flow is autonomous, so the stage
// abscissae are not needed.
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const A7: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D_CONT: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
pub struct DenseStep<const D: usize> {
    pub t0: f64,
    pub h: f64,
    cont: [[f64; D]; 5],
}

impl<const D: usize> DenseStep<D> {
    /// Evaluate the fourth-order interpolant at time `t` in [t0, t0 + h].
    pub fn eval(&self, t: f64) -> [f64; D] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let mut y = [0.0; D];
        for i in 0..D {
            y[i] = self.cont[0][i]
                + s * (self.cont[1][i]
                    + s1 * (self.cont[2][i] + s * (self.cont[3][i] + s1 * self.cont[4][i])));
        }
        y
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }
}

/// Low-level adaptive stepper. Owns the current (t, y, k1) triple and a step
/// size suggestion; `advance` produces one accepted step clamped to a limit.
pub(crate) struct Stepper<'f, const D: usize> {
    rhs: &'f mut dyn FnMut(&[f64; D]) -> [f64; D],
    pub t: f64,
    pub y: [f64; D],
    k1: [f64; D],
    pub h: f64,
    rel_tol: f64,
    abs_tol: f64,
    h_max: f64,
    pub steps_taken: usize,
    max_steps: usize,
}

pub(crate) enum StepFail {
    Underflow(f64),
    Budget(f64),
    NonFinite(f64),
}

impl StepFail {
    fn into_flow(self) -> FlowError {
        match self {
            StepFail::Underflow(t) => FlowError::StepSizeUnderflow { t },
            StepFail::Budget(t) => FlowError::MaxStepsExceeded { t },
            StepFail::NonFinite(t) => FlowError::NonFiniteState { t },
        }
    }
}

impl<'f, const D: usize> Stepper<'f, D> {
    pub fn new(
        rhs: &'f mut dyn FnMut(&[f64; D]) -> [f64; D],
        t: f64,
        y: [f64; D],
        opts: &IntegratorOpts,
        h_suggestion: Option<f64>,
    ) -> Self {
        let k1 = rhs(&y);
        let h_max = if opts.h_max > 0.0 { opts.h_max } else { f64::INFINITY };
        let h = h_suggestion.unwrap_or(0.0);
        let mut s = Self {
            rhs,
            t,
            y,
            k1,
            h,
            rel_tol: opts.rel_tol,
            abs_tol: opts.abs_tol,
            h_max,
            steps_taken: 0,
            max_steps: opts.max_steps,
        };
        if s.h <= 0.0 {
            s.h = s.initial_step();
        }
        s
    }

    /// Standard automatic initial step selection.
    fn initial_step(&mut self) -> f64 {
        let sc =
            |y: &[f64; D], i: usize| self.abs_tol + self.rel_tol * y[i].abs();
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..D {
            let s = sc(&self.y, i);
            d0 += (self.y[i] / s).powi(2);
            d1 += (self.k1[i] / s).powi(2);
        }
        d0 = (d0 / D as f64).sqrt();
        d1 = (d1 / D as f64).sqrt();
        let h0 = if d0 < 1e-10 || d1 < 1e-10 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let mut y1 = self.y;
        for i in 0..D {
            y1[i] += h0 * self.k1[i];
        }
        let f1 = (self.rhs)(&y1);
        let mut d2 = 0.0;
        for i in 0..D {
            d2 += ((f1[i] - self.k1[i]) / sc(&self.y, i)).powi(2);
        }
        d2 = (d2 / D as f64).sqrt() / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dm).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.h_max)
    }

    /// Take one accepted step, never stepping past `t_limit`.
    pub fn advance(&mut self, t_limit: f64) -> Result<DenseStep<D>, StepFail> {
        let dir = (t_limit - self.t).signum();
        debug_assert!(dir > 0.0, "only forward integration is used here");
        let mut facmax = 10.0;
        loop {
            if self.steps_taken >= self.max_steps {
                return Err(StepFail::Budget(self.t));
            }
            self.steps_taken += 1;
            let mut h = self.h.min(self.h_max);
            let clamped = self.t + h >= t_limit;
            if clamped {
                h = t_limit - self.t;
            }
            if h.abs() < 1e-14 * self.t.abs().max(1.0) {
                return Err(StepFail::Underflow(self.t));
            }

            let mut k = [[0.0; D]; 7];
            k[0] = self.k1;
            let stage = |k: &[[f64; D]; 7], coeffs: &[f64], y: &[f64; D], h: f64| {
                let mut out = *y;
                for (j, a) in coeffs.iter().enumerate() {
                    if *a != 0.0 {
                        for i in 0..D {
                            out[i] += h * a * k[j][i];
                        }
                    }
                }
                out
            };
            k[1] = (self.rhs)(&stage(&k, &A2, &self.y, h));
            k[2] = (self.rhs)(&stage(&k, &A3, &self.y, h));
            k[3] = (self.rhs)(&stage(&k, &A4, &self.y, h));
            k[4] = (self.rhs)(&stage(&k, &A5, &self.y, h));
            k[5] = (self.rhs)(&stage(&k, &A6, &self.y, h));
            let y_new = stage(&k, &A7, &self.y, h);
            k[6] = (self.rhs)(&y_new);

            // Error norm (Hairer scaling).
            let mut err = 0.0;
            let mut finite = true;
            for i in 0..D {
                let mut e = 0.0;
                for j in 0..7 {
                    e += E[j] * k[j][i];
                }
                e *= h;
                let scale = self.abs_tol + self.rel_tol * self.y[i].abs().max(y_new[i].abs());
                err += (e / scale).powi(2);
                finite &= y_new[i].is_finite();
            }
            err = (err / D as f64).sqrt();

            if !finite || !err.is_finite() {
                // Retreat hard; if the state is already bad, the underflow
                // guard terminates the retreat.
                self.h = h * 0.1;
                facmax = 1.0;
                if self.h.abs() < 1e-14 * self.t.abs().max(1.0) {
                    return Err(StepFail::NonFinite(self.t));
                }
                continue;
            }

            if err <= 1.0 {
                // Accept: build the dense-output coefficients.
                let mut cont = [[0.0; D]; 5];
                for i in 0..D {
                    let dy = y_new[i] - self.y[i];
                    let bspl = h * k[0][i] - dy;
                    cont[0][i] = self.y[i];
                    cont[1][i] = dy;
                    cont[2][i] = bspl;
                    cont[3][i] = dy - h * k[6][i] - bspl;
                    let mut c5 = 0.0;
                    for j in 0..7 {
                        c5 += D_CONT[j] * k[j][i];
                    }
                    cont[4][i] = h * c5;
                }
                let step = DenseStep {
                    t0: self.t,
                    h,
                    cont,
                };
                self.t = if clamped { t_limit } else { self.t + h };
                self.y = y_new;
                self.k1 = k[6]; // FSAL
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, facmax);
                self.h = (h * fac).min(self.h_max);
                return Ok(step);
            }
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            self.h = h * fac;
            facmax = 1.0;
        }
    }
}

/// A switching point of the bang-bang structure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SwitchingEvent {
    pub t: f64,
    /// Phase state at the switching time.
    pub z: [f64; 14],
    /// rho(t+) - rho(t-): +1 for coast-to-burn, -1 for burn-to-coast.
    pub delta_rho: f64,
    pub h1_dot: f64,
}

/// One smooth arc of the flow.
#[derive(Clone, Debug)]
pub struct Arc {
    pub branch: ThrustBranch,
    pub t0: f64,
    pub t1: f64,
    pub steps: Vec<DenseStep<14>>,
}

impl Arc {
    fn eval(&self, t: f64) -> [f64; 14] {
        let idx = self
            .steps
            .partition_point(|s| s.t_end() < t)
            .min(self.steps.len() - 1);
        self.steps[idx].eval(t)
    }
}

/// A propagated extremal with its switching structure.
#[derive(Clone, Debug)]
pub struct ExtremalTrajectory {
    pub chart: Chart,
    pub engine: EngineSpec,
    pub lambda: f64,
    pub t0: f64,
    pub t_f: f64,
    pub arcs: Vec<Arc>,
    pub events: Vec<SwitchingEvent>,
    pub z0: [f64; 14],
    pub z_f: [f64; 14],
}

impl ExtremalTrajectory {
    /// Dense evaluation of the phase vector. At a switching time the
    /// left-arc limit is returned.
    pub fn eval(&self, t: f64) -> [f64; 14] {
        let idx = self
            .arcs
            .partition_point(|a| a.t1 < t)
            .min(self.arcs.len() - 1);
        self.arcs[idx].eval(t)
    }

    pub fn arc_index_at(&self, t: f64) -> usize {
        self.arcs
            .partition_point(|a| a.t1 < t)
            .min(self.arcs.len() - 1)
    }

    pub fn rho_at_time(&self, t: f64) -> f64 {
        let arc = &self.arcs[self.arc_index_at(t)];
        let z = arc.eval(t);
        dynamics::rho_at(self.chart, &self.engine, self.lambda, arc.branch, &z)
    }

    pub fn h1(&self, t: f64) -> f64 {
        h1_at(self.chart, &self.engine, &self.eval(t))
    }

    pub fn hamiltonian(&self, t: f64) -> f64 {
        let arc = &self.arcs[self.arc_index_at(t)];
        let z = arc.eval(t);
        dynamics::hamiltonian_at(self.chart, &self.engine, self.lambda, arc.branch, &z)
    }

    pub fn burn_arc_count(&self) -> usize {
        self.arcs
            .iter()
            .filter(|a| matches!(a.branch, ThrustBranch::Burn))
            .count()
    }

    pub fn switching_count(&self) -> usize {
        self.events.len()
    }

    /// Max over sampled t of |H(t) - H(0)|: a direct measure of how well the
    /// integrator preserved the free-time first integral.
    pub fn hamiltonian_drift(&self, samples_per_arc: usize) -> f64 {
        let h0 = self.hamiltonian(self.t0);
        let mut drift: f64 = 0.0;
        for arc in &self.arcs {
            for i in 0..=samples_per_arc {
                let t = arc.t0 + (arc.t1 - arc.t0) * i as f64 / samples_per_arc as f64;
                let z = arc.eval(t);
                let h = dynamics::hamiltonian_at(self.chart, &self.engine, self.lambda, arc.branch, &z);
                drift = drift.max((h - h0).abs());
            }
        }
        drift
    }

    /// Uniformly sampled (t, z) pairs across the whole span.
    pub fn sample(&self, n: usize) -> Vec<(f64, [f64; 14])> {
        (0..=n)
            .map(|i| {
                let t = self.t0 + (self.t_f - self.t0) * i as f64 / n as f64;
                (t, self.eval(t))
            })
            .collect()
    }
}

fn state_guard(
    chart: Chart,
    engine: &EngineSpec,
    opts: &IntegratorOpts,
    t: f64,
    z: &[f64; 14],
) -> Result<(), FlowError> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFiniteState { t });
    }
    if z[6] < engine.m_c {
        return Err(FlowError::FuelExhausted { t });
    }
    let r = match chart {
        Chart::Cartesian => (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt(),
        Chart::Meoe => {
            let w = 1.0 + z[1] * z[5].cos() + z[2] * z[5].sin();
            if w <= 0.0 || z[0] <= 0.0 {
                return Err(FlowError::RadiusBelowFloor {
                    t,
                    r: 0.0,
                    floor: opts.radius_floor,
                });
            }
            z[0] / w
        }
    };
    if r < opts.radius_floor {
        return Err(FlowError::RadiusBelowFloor {
            t,
            r,
            floor: opts.radius_floor,
        });
    }
    Ok(())
}

/// Safeguarded secant/bisection root refinement of H1 on a dense step.
fn refine_event(
    chart: Chart,
    engine: &EngineSpec,
    step: &DenseStep<14>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> f64 {
    let g = |t: f64| h1_at(chart, engine, &step.eval(t));
    let mut ga = g(a);
    let mut gb = g(b);
    debug_assert!(ga * gb <= 0.0);
    for _ in 0..120 {
        if (b - a).abs() <= tol {
            break;
        }
        // Secant candidate, safeguarded into the bracket interior.
        let mut m = if (gb - ga).abs() > 0.0 {
            b - gb * (b - a) / (gb - ga)
        } else {
            0.5 * (a + b)
        };
        let lo = a + 0.1 * (b - a);
        let hi = b - 0.1 * (b - a);
        if !(m > lo && m < hi) {
            m = 0.5 * (a + b);
        }
        let gm = g(m);
        if ga * gm <= 0.0 {
            b = m;
            gb = gm;
        } else {
            a = m;
            ga = gm;
        }
    }
    // Return the endpoint with the smaller |H1|.
    if ga.abs() <= gb.abs() {
        a
    } else {
        b
    }
}

/// Propagate the extremal flow from `z0` over `[t0, t_end]`.
///
/// At lambda = 1 the control branch alternates at the located zeros of H1;
/// for lambda < 1 the smoothed flow is a single arc.
pub fn propagate(
    chart: Chart,
    engine: &EngineSpec,
    lambda: f64,
    z0: [f64; 14],
    t0: f64,
    t_end: f64,
    opts: &IntegratorOpts,
) -> Result<ExtremalTrajectory, FlowError> {
    assert!(t_end > t0, "propagation span must be positive");
    state_guard(chart, engine, opts, t0, &z0)?;

    let bang = lambda >= 1.0;
    let mut branch = if !bang {
        ThrustBranch::Smoothed
    } else if h1_at(chart, engine, &z0) >= 0.0 {
        ThrustBranch::Burn
    } else {
        ThrustBranch::Coast
    };

    let mut arcs: Vec<Arc> = Vec::new();
    let mut events: Vec<SwitchingEvent> = Vec::new();
    let mut t = t0;
    let mut z = z0;
    let mut h_carry: Option<f64> = None;
    let mut steps_used = 0usize;

    const EVENT_SAMPLES: usize = 8;

    'arcs: loop {
        let mut arc = Arc {
            branch,
            t0: t,
            t1: t,
            steps: Vec::new(),
        };
        let mut rhs = |y: &[f64; 14]| canonical_rhs(chart, engine, lambda, branch, y);
        let mut local_opts = *opts;
        local_opts.max_steps = opts.max_steps.saturating_sub(steps_used);
        let mut stepper = Stepper::new(&mut rhs, t, z, &local_opts, h_carry);

        loop {
            let step = match stepper.advance(t_end) {
                Ok(s) => s,
                Err(f) => return Err(f.into_flow()),
            };
            state_guard(chart, engine, opts, stepper.t, &stepper.y)?;

            if bang {
                // Scan the step for a sign change of H1.
                let mut t_prev = step.t0;
                let mut g_prev = h1_at(chart, engine, &step.eval(t_prev));
                let mut bracket = None;
                let mut max_abs_h1: f64 = g_prev.abs();
                for i in 1..=EVENT_SAMPLES {
                    let ts = step.t0 + step.h * i as f64 / EVENT_SAMPLES as f64;
                    let gs = h1_at(chart, engine, &step.eval(ts));
                    max_abs_h1 = max_abs_h1.max(gs.abs());
                    if g_prev * gs < 0.0 && bracket.is_none() {
                        bracket = Some((t_prev, ts));
                    }
                    t_prev = ts;
                    g_prev = gs;
                }

                if max_abs_h1 < opts.singular_h1_band
                    && step.h > 1000.0 * opts.min_arc_length
                {
                    return Err(FlowError::SingularArc { t: step.t0 });
                }

                if let Some((a, b)) = bracket {
                    let t_ev = refine_event(chart, engine, &step, a, b, opts.event_tol);
                    if t_ev > arc.t0 + opts.min_arc_length {
                        let z_ev = step.eval(t_ev);
                        let h1_dot = h1_dot_at(chart, engine, &z_ev);
                        if h1_dot.abs() < opts.h1_dot_floor {
                            return Err(FlowError::IrregularSwitching {
                                t: t_ev,
                                h1_dot_abs: h1_dot.abs(),
                                floor: opts.h1_dot_floor,
                            });
                        }
                        let flipped = match branch {
                            ThrustBranch::Burn => ThrustBranch::Coast,
                            ThrustBranch::Coast => ThrustBranch::Burn,
                            ThrustBranch::Smoothed => unreachable!(),
                        };
                        let delta_rho = match flipped {
                            ThrustBranch::Burn => 1.0,
                            _ => -1.0,
                        };
                        events.push(SwitchingEvent {
                            t: t_ev,
                            z: z_ev,
                            delta_rho,
                            h1_dot,
                        });
                        arc.steps.push(step);
                        arc.t1 = t_ev;
                        steps_used += stepper.steps_taken;
                        h_carry = Some(stepper.h);
                        arcs.push(arc);
                        t = t_ev;
                        z = z_ev;
                        branch = flipped;
                        continue 'arcs;
                    }
                }
            }

            arc.steps.push(step);
            if stepper.t >= t_end {
                arc.t1 = t_end;
                let z_f = stepper.y;
                arcs.push(arc);
                return Ok(ExtremalTrajectory {
                    chart,
                    engine: *engine,
                    lambda,
                    t0,
                    t_f: t_end,
                    arcs,
                    events,
                    z0,
                    z_f,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::pack;

    fn engine() -> EngineSpec {
        EngineSpec {
            u_max: 0.03,
            beta: 0.15,
            m_c: 0.2,
        }
    }

    /// Pure coast from a circular orbit must close after one period 2*pi.
    #[test]
    fn kepler_closure_on_circular_orbit() {
        let x0 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        // Costate with H0 = 0 and H1 < 0 throughout: p_r = p_v = 0 is
        // degenerate, so use p_r = (0,c,0), p_v = (c,0,0) which gives
        // H0 = c*1 - c*1 = 0.
        let c = 0.1;
        let p0 = [0.0, c, 0.0, c, 0.0, 0.0, 0.0];
        let z0 = pack(&x0, &p0);
        let opts = IntegratorOpts::default();
        let tau = std::f64::consts::TAU;
        let traj = propagate(Chart::Cartesian, &engine(), 1.0, z0, 0.0, tau, &opts).unwrap();
        assert_eq!(traj.switching_count(), 0);
        assert_eq!(traj.burn_arc_count(), 0);
        for i in 0..6 {
            assert!(
                (traj.z_f[i] - z0[i]).abs() < 1e-8,
                "state component {i} did not close: {} vs {}",
                traj.z_f[i],
                z0[i]
            );
        }
    }

    /// Energy and angular momentum are first integrals on coast arcs.
    #[test]
    fn coast_conserves_energy_and_momentum() {
        let x0 = [1.2, 0.0, 0.1, 0.0, 0.9, 0.05, 1.0];
        let p0 = [0.0, 0.02, 0.0, 0.02, 0.0, 0.0, 0.0];
        let z0 = pack(&x0, &p0);
        let opts = IntegratorOpts::default();
        let traj = propagate(Chart::Cartesian, &engine(), 1.0, z0, 0.0, 10.0, &opts).unwrap();
        let energy = |z: &[f64; 14]| {
            let r = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
            let v2 = z[3] * z[3] + z[4] * z[4] + z[5] * z[5];
            0.5 * v2 - 1.0 / r
        };
        let e0 = energy(&z0);
        for (_, z) in traj.sample(200) {
            assert!((energy(&z) - e0).abs() < 1e-11);
        }
    }

    /// The mass equation is mdot = -beta*u_max*rho: constant mass on coast.
    #[test]
    fn mass_constant_on_coast() {
        let x0 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let p0 = [0.0, 0.01, 0.0, 0.01, 0.0, 0.0, 0.0];
        let z0 = pack(&x0, &p0);
        let traj = propagate(
            Chart::Cartesian,
            &engine(),
            1.0,
            z0,
            0.0,
            3.0,
            &IntegratorOpts::default(),
        )
        .unwrap();
        assert_eq!(traj.z_f[6], 1.0);
    }

    #[test]
    fn fuel_exhaustion_is_an_error() {
        let x0 = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        // Strong primer so the engine burns from the start.
        let p0 = [0.0, 0.0, 0.0, 100.0, 0.0, 0.0, 0.0];
        let z0 = pack(&x0, &p0);
        let mut eng = engine();
        eng.m_c = 0.999; // nearly no fuel on board
        let res = propagate(
            Chart::Cartesian,
            &eng,
            1.0,
            z0,
            0.0,
            50.0,
            &IntegratorOpts::default(),
        );
        assert!(matches!(res, Err(FlowError::FuelExhausted { .. })));
    }
}
