// Scratch driver for solver experiments. Not part of the deliverable.

use suffkit_core::dynamics::{Chart, EngineSpec};
use suffkit_core::manifold::TargetManifold;
use suffkit_core::shooting::{
    coast_time_estimate, continue_homotopy, search_initial_guess, solve, ContinuationOpts,
    GuessSearchOpts, ShootingOpts, TransferProblem,
};

fn mini_problem() -> TransferProblem {
    let engine = EngineSpec {
        u_max: 0.08,
        beta: 0.157,
        m_c: 0.2,
    };
    let x0 = [0.9, 0.2, 0.0, 0.05, 0.0, 0.0, 1.0];
    let l_f = 4.0 * std::f64::consts::PI;
    TransferProblem {
        chart: Chart::Meoe,
        engine,
        x0,
        manifold: TargetManifold::meoe_target(1.05, 0.0, 0.0, 0.0, 0.0, l_f),
    }
}

fn main() {
    env_logger::init();

    let args: Vec<String> = std::env::args().collect();
    let cmd = args.get(1).map(String::as_str).unwrap_or("mini");

    match cmd {
        "mini" => run_mini(),
        "degen" => run_degeneracy_check(),
        "fdcheck" => run_fd_check(),
        "rand_delta" => run_random_delta(),
        "rich" => run_rich(),
        "quotient" => run_quotient(),
        "ghostc3" => run_ghost_c3(),
        "casea" => run_case(10.0, 9.0, "case_a"),
        "caseb" => run_case(5.0, 19.0, "case_b"),
        other => eprintln!("unknown command {other}"),
    }
}

/// A transfer with strong coupling in every element: large plane change,
/// eccentricity change, three revolutions.
fn rich_problem() -> TransferProblem {
    let engine = EngineSpec {
        u_max: 0.06,
        beta: 0.157,
        m_c: 0.2,
    };
    let x0 = [0.75, 0.3, -0.1, 0.25, 0.1, 0.0, 1.0];
    let l_f = 6.0 * std::f64::consts::PI + 1.0;
    TransferProblem {
        chart: Chart::Meoe,
        engine,
        x0,
        manifold: TargetManifold::meoe_target(1.0, 0.05, 0.02, 0.0, 0.0, l_f),
    }
}

fn run_rich() {
    use nalgebra::SMatrix;
    use suffkit_core::dynamics::pack;
    use suffkit_core::sufficiency::{build_family_basis, variational_scan, SufficiencyOpts};

    let problem = rich_problem();
    let t_est = coast_time_estimate(0.75, 0.316, 1.0, 0.054, 0.0, 6.0 * std::f64::consts::PI + 1.0);
    println!("t_f estimate: {t_est:.3}");
    let sopts = ShootingOpts::default();
    let gopts = GuessSearchOpts {
        trials: 120,
        costate_scale: 2.0,
        ..Default::default()
    };
    let guess = search_initial_guess(&problem, 0.0, t_est, &sopts, &gopts).unwrap();
    let schedule = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 1.0];
    let sol = match continue_homotopy(&guess, &schedule, &problem, &ContinuationOpts::default(), None)
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("rich continuation failed: {e}");
            return;
        }
    };
    println!(
        "rich extremal: t_f = {:.5}, burns = {}, switchings = {}, fuel = {:.4}",
        sol.unknowns.t_f,
        sol.trajectory.burn_arc_count(),
        sol.trajectory.switching_count(),
        1.0 - sol.trajectory.z_f[6]
    );
    println!("p0 = {:?}", sol.unknowns.p0);
    let z0 = pack(&problem.x0, &sol.unknowns.p0);
    let basis = build_family_basis(problem.chart, &problem.engine, 1.0, &z0, 1e-10).unwrap();
    let scan = variational_scan(
        problem.chart,
        &problem.engine,
        &z0,
        sol.unknowns.t_f,
        sol.unknowns.t_f,
        &basis,
        &SufficiencyOpts::default(),
    )
    .unwrap();
    for a in &scan.arcs {
        println!(
            "  {:?} [{:.3}, {:.3}] max|delta| = {:.3e}",
            a.branch, a.t0, a.t1, a.max_abs_delta
        );
    }
    let mut gx = SMatrix::<f64, 7, 7>::zeros();
    for i in 0..7 {
        gx[(i, 0)] = scan.xdot_at_tf[i];
        for j in 0..6 {
            gx[(i, j + 1)] = scan.v_at_tf.dx_dq[(i, j)];
        }
    }
    let svd = gx.svd(true, true);
    let sv = svd.singular_values;
    println!("singular values of [xdot | X](t_f): {:?}", sv.as_slice());
    println!("sv7/sv1 = {:.3e}", sv[6] / sv[0]);
    // Cross-check the smallest singular value through the Gram matrix and
    // the LU determinant.
    let gram = gx.transpose() * gx;
    let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    println!(
        "sqrt(eig(A^T A)) smallest: {:.3e}, LU det = {:.3e}, sv-product(first 6) = {:.3e}",
        ev[0].abs().sqrt(),
        gx.determinant(),
        sv.iter().take(6).product::<f64>()
    );
    // Mass costate at the switching times (kernel mechanism involves p_m).
    print!("p_m at switchings:");
    for e in &scan.events {
        print!(" {:.4}", e.z[13]);
    }
    println!();

    // Identify the kernel direction.
    let vt = svd.v_t.unwrap();
    let kernel = vt.row(6).clone_owned();
    println!("kernel (time, q1..q6): {:?}", kernel.as_slice());
    let c_time = kernel[0];
    let cq = nalgebra::SVector::<f64, 6>::from_fn(|i, _| kernel[i + 1]);

    // Candidate 1: initial costate rate pdot(0) pulled back through E.
    let rhs0 = suffkit_core::dynamics::canonical_rhs(
        problem.chart,
        &problem.engine,
        1.0,
        suffkit_core::dynamics::ThrustBranch::Burn,
        &z0,
    );
    let pdot0 = nalgebra::SVector::<f64, 7>::from_fn(|i, _| rhs0[7 + i]);
    let c_pdot = basis.0.transpose() * pdot0;
    // Candidate 2: the reference costate itself pulled back through E.
    let p0v = nalgebra::SVector::<f64, 7>::from_fn(|i, _| sol.unknowns.p0[i]);
    let c_p0 = basis.0.transpose() * p0v;

    let angle = |a: &nalgebra::SVector<f64, 6>, b: &nalgebra::SVector<f64, 6>| {
        (a.dot(b) / (a.norm() * b.norm())).abs()
    };
    println!(
        "kernel time part {c_time:.3e}; |cos| with E^T pdot(0): {:.6}, with E^T p0: {:.6}",
        angle(&cq, &c_pdot.normalize()),
        angle(&cq, &c_p0.normalize())
    );
    // Verify it is a common kernel along the whole trajectory.
    let mut worst = 0.0f64;
    for a in &scan.arcs {
        for s in &a.samples {
            let xc = s.v.dx_dq * cq;
            let rel = xc.norm() / s.v.dx_dq.norm().max(1e-300);
            worst = worst.max(rel);
        }
    }
    println!("max over samples of |X c| / |X| = {worst:.3e}");

    // Kernel structure of the unrestricted dx/dp0 at t_f.
    let (_, v_full) = suffkit_core::sufficiency::full_sensitivity_determinants(
        problem.chart,
        &problem.engine,
        &z0,
        sol.unknowns.t_f,
        40,
        &SufficiencyOpts::default().integrator,
    )
    .unwrap();
    let svd_full = v_full.dx_dq.svd(true, true);
    println!(
        "singular values of dx/dp0(t_f): {:?}",
        svd_full.singular_values.as_slice()
    );
    let vt_full = svd_full.v_t.unwrap();
    let w = vt_full.row(6).clone_owned().transpose();
    let f0vec = nalgebra::SVector::<f64, 7>::from_fn(|i, _| rhs0[i]);
    println!(
        "dx/dp0 kernel w: {:?}\n  |cos(w, f)| = {:.6}, |w| component inside span(E) = {:.6}",
        w.as_slice(),
        (w.dot(&f0vec) / (w.norm() * f0vec.norm())).abs(),
        (basis.0.transpose() * w).norm() / w.norm()
    );
}

/// Literal final-manifold scalar with the ghost-contaminated 7x7 family
/// gradient, at two integrator tolerances. If the two values differ wildly
/// the literal construction is numerically meaningless on this problem
/// class.
fn run_ghost_c3() {
    use nalgebra::SMatrix;
    use suffkit_core::dynamics::pack;
    use suffkit_core::sufficiency::{build_family_basis, variational_scan, SufficiencyOpts};

    let problem = rich_problem();
    let t_est = coast_time_estimate(0.75, 0.316, 1.0, 0.054, 0.0, 6.0 * std::f64::consts::PI + 1.0);
    let sopts = ShootingOpts::default();
    let gopts = GuessSearchOpts {
        trials: 120,
        costate_scale: 2.0,
        ..Default::default()
    };
    let guess = search_initial_guess(&problem, 0.0, t_est, &sopts, &gopts).unwrap();
    let schedule = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 1.0];
    let sol = continue_homotopy(&guess, &schedule, &problem, &ContinuationOpts::default(), None)
        .unwrap();
    let z0 = pack(&problem.x0, &sol.unknowns.p0);
    let basis = build_family_basis(problem.chart, &problem.engine, 1.0, &z0, 1e-10).unwrap();

    for tol in [1e-12, 1e-10, 1e-8] {
        let mut opts = SufficiencyOpts::default();
        opts.integrator.rel_tol = tol;
        opts.integrator.abs_tol = tol;
        let scan = variational_scan(
            problem.chart,
            &problem.engine,
            &z0,
            sol.unknowns.t_f,
            sol.unknowns.t_f,
            &basis,
            &opts,
        )
        .unwrap();
        let mut gx = SMatrix::<f64, 7, 7>::zeros();
        let mut gp = SMatrix::<f64, 7, 7>::zeros();
        for i in 0..7 {
            gx[(i, 0)] = scan.xdot_at_tf[i];
            gp[(i, 0)] = scan.pdot_at_tf[i];
            for j in 0..6 {
                gx[(i, j + 1)] = scan.v_at_tf.dx_dq[(i, j)];
                gp[(i, j + 1)] = scan.v_at_tf.dp_dq[(i, j)];
            }
        }
        match gx.try_inverse() {
            Some(inv) => {
                let core = gp * inv;
                println!(
                    "tol {tol:.0e}: literal C3 scalar (mass-mass of dp^T dx^{{-1}}) = {:+.6e}, delta(t_f) = {:+.3e}",
                    core[(6, 6)],
                    scan.delta_at_tf
                );
            }
            None => println!("tol {tol:.0e}: family gradient not invertible"),
        }
    }
}

/// Family basis with the multiplier-cone direction isolated: columns 1..5
/// span the complement of {f, w} (w = p0 + e_m/(beta u_max)), column 6 is
/// the normalized cone direction itself.
fn cone_split_basis(
    f: &nalgebra::SVector<f64, 7>,
    p0: &[f64; 7],
    beta_umax: f64,
) -> nalgebra::SMatrix<f64, 7, 6> {
    use nalgebra::{DMatrix, SMatrix};
    let mut w = nalgebra::SVector::<f64, 7>::from_row_slice(p0);
    w[6] += 1.0 / beta_umax;
    let mut a = DMatrix::<f64>::zeros(7, 2);
    for i in 0..7 {
        a[(i, 0)] = f[i];
        a[(i, 1)] = w[i];
    }
    let comp = suffkit_core::linalg::orthonormal_complement(&a, 1e-12).unwrap();
    let mut e = SMatrix::<f64, 7, 6>::zeros();
    for i in 0..7 {
        for j in 0..5 {
            e[(i, j)] = comp[(i, j)];
        }
        e[(i, 5)] = w[i] / w.norm();
    }
    e
}

fn run_quotient() {
    use nalgebra::SMatrix;
    use suffkit_core::dynamics::pack;
    use suffkit_core::sufficiency::{variational_scan, FamilyBasis, SufficiencyOpts};

    let (problem, sol) = {
        let problem = rich_problem();
        let t_est =
            coast_time_estimate(0.75, 0.316, 1.0, 0.054, 0.0, 6.0 * std::f64::consts::PI + 1.0);
        let sopts = ShootingOpts::default();
        let gopts = GuessSearchOpts {
            trials: 120,
            costate_scale: 2.0,
            ..Default::default()
        };
        let guess = search_initial_guess(&problem, 0.0, t_est, &sopts, &gopts).unwrap();
        let schedule = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 1.0];
        let sol =
            continue_homotopy(&guess, &schedule, &problem, &ContinuationOpts::default(), None)
                .unwrap();
        (problem, sol)
    };
    let z0 = pack(&problem.x0, &sol.unknowns.p0);
    let rhs0 = suffkit_core::dynamics::canonical_rhs(
        problem.chart,
        &problem.engine,
        1.0,
        suffkit_core::dynamics::ThrustBranch::Burn,
        &z0,
    );
    let f = nalgebra::SVector::<f64, 7>::from_fn(|i, _| rhs0[i]);
    let beta_umax = problem.engine.beta * problem.engine.u_max;
    let e = cone_split_basis(&f, &sol.unknowns.p0, beta_umax);
    let scan = variational_scan(
        problem.chart,
        &problem.engine,
        &z0,
        sol.unknowns.t_f,
        sol.unknowns.t_f,
        &FamilyBasis::from_matrix(e),
        &SufficiencyOpts::default(),
    )
    .unwrap();

    // Per arc: paper determinant (all 6 columns), quotient 6x6 determinant
    // with the mass row and the cone column deleted, and the ghost column
    // magnitude.
    for (ai, a) in scan.arcs.iter().enumerate() {
        let probe = |s: &suffkit_core::sufficiency::SamplePoint| {
            let rhs = suffkit_core::dynamics::canonical_rhs(
                problem.chart,
                &problem.engine,
                1.0,
                a.branch,
                &s.z,
            );
            // 6x6: rows = first six states, cols = [xdot, X cols 0..5).
            let mut m6 = SMatrix::<f64, 6, 6>::zeros();
            for i in 0..6 {
                m6[(i, 0)] = rhs[i];
                for j in 0..5 {
                    m6[(i, j + 1)] = s.v.dx_dq[(i, j)];
                }
            }
            let ghost = s.v.dx_dq.column(5).norm();
            let live = s.v.dx_dq.columns(0, 5).norm();
            (m6.determinant(), ghost / live.max(1e-300))
        };
        let mid = &a.samples[a.samples.len() / 2];
        let (d_mid, ghost_mid) = probe(mid);
        let first = probe(&a.samples[1.min(a.samples.len() - 1)]).0;
        let last = probe(a.samples.last().unwrap()).0;
        println!(
            "arc {ai} {:?} [{:.3},{:.3}]: det6 first/mid/last = {:+.3e} {:+.3e} {:+.3e}, ghost/live = {:.1e}",
            a.branch, a.t0, a.t1, first, d_mid, last, ghost_mid
        );
    }
}
fn case_problem(u_max_newton: f64, revs: f64) -> (TransferProblem, suffkit_core::scale::ScaleSet) {
    let scale = suffkit_core::scale::ScaleSet::geo(1500.0);
    let engine = EngineSpec::from_si(&scale, u_max_newton, 2000.0, 9.8, 500.0);
    let x0 = [
        11625.0 / 42165.0,
        0.75,
        0.0,
        6.12e-2,
        0.0,
        std::f64::consts::PI,
        1.0,
    ];
    let l_f = revs * std::f64::consts::TAU;
    (
        TransferProblem {
            chart: Chart::Meoe,
            engine,
            x0,
            manifold: TargetManifold::meoe_target(1.0, 0.0, 0.0, 0.0, 0.0, l_f),
        },
        scale,
    )
}

fn run_case(u_max_newton: f64, revs: f64, tag: &str) {
    let (problem, scale) = case_problem(u_max_newton, revs);
    let l_f = revs * std::f64::consts::TAU;
    let t_est = coast_time_estimate(
        11625.0 / 42165.0,
        0.75,
        1.0,
        0.0,
        std::f64::consts::PI,
        l_f,
    );
    println!(
        "{tag}: u_max = {u_max_newton} N, l_f = {revs} rev, t_f estimate = {t_est:.2} TU = {:.2} h",
        scale.time_to_hours(t_est)
    );
    let mut sopts = ShootingOpts::default();
    sopts.max_iters = 80;
    let gopts = GuessSearchOpts {
        trials: 400,
        keep: 10,
        polish_iters: 20,
        costate_scale: 2.0,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let guess = match search_initial_guess(&problem, 0.0, t_est, &sopts, &gopts) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("guess search failed: {e}");
            return;
        }
    };
    println!("guess ({:.1?}): t_f = {:.3}, p0 = {:?}", t0.elapsed(), guess.t_f, guess.p0);

    let schedule = [
        0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95, 0.98, 0.99, 1.0,
    ];
    let copts = ContinuationOpts::default();
    let mut trace = Vec::new();
    let t0 = std::time::Instant::now();
    match continue_homotopy(&guess, &schedule, &problem, &copts, Some(&mut trace)) {
        Ok(sol) => {
            println!(
                "{tag} converged ({:.1?}): t_f = {:.6} TU = {:.3} h",
                t0.elapsed(),
                sol.unknowns.t_f,
                scale.time_to_hours(sol.unknowns.t_f)
            );
            println!(
                "burns = {}, switchings = {}, fuel = {:.2} kg, |r| = {:.2e}, drift = {:.2e}",
                sol.trajectory.burn_arc_count(),
                sol.trajectory.switching_count(),
                (1.0 - sol.trajectory.z_f[6]) * 1500.0,
                sol.residual_norm,
                sol.trajectory.hamiltonian_drift(50)
            );
            println!("p0 = {:?}", sol.unknowns.p0);
        }
        Err(e) => {
            eprintln!("{tag} continuation failed after {:.1?}: {e}", t0.elapsed());
            for r in &trace {
                println!(
                    "  lambda {:.3}: t_f {:.4}, p0 = {:?}",
                    r.lambda, r.unknowns.t_f, r.unknowns.p0
                );
            }
        }
    }
}

/// delta trace along a generic (non-converged) bang-bang extremal: H != 0,
/// no boundary conditions. The family Jacobian should be generically
/// nonsingular; exact singularity here would indicate a structural bug.
fn run_random_delta() {
    use suffkit_core::dynamics::pack;
    use suffkit_core::sufficiency::{build_family_basis, variational_scan, SufficiencyOpts};
    use nalgebra::SMatrix;

    let problem = mini_problem();
    // Generic costate with all components active; primer large enough to burn.
    let p0 = [0.9, -11.0, 3.5, 7.0, -4.5, 1.3, -0.8];
    let z0 = pack(&problem.x0, &p0);
    let t_end = 9.0;
    let opts = SufficiencyOpts::default();
    let basis = build_family_basis(problem.chart, &problem.engine, 1.0, &z0, 1e-10).unwrap();
    let scan = variational_scan(
        problem.chart,
        &problem.engine,
        &z0,
        t_end,
        t_end,
        &basis,
        &opts,
    )
    .unwrap();
    println!(
        "generic extremal: {} arcs, {} switchings, H(0) = {:.4}",
        scan.arcs.len(),
        scan.events.len(),
        suffkit_core::dynamics::hamiltonian_at(
            problem.chart,
            &problem.engine,
            1.0,
            suffkit_core::dynamics::ThrustBranch::Smoothed,
            &z0
        )
    );
    for a in &scan.arcs {
        println!(
            "  {:?} [{:.3}, {:.3}] max|delta| = {:.3e}",
            a.branch, a.t0, a.t1, a.max_abs_delta
        );
    }
    let mut grad_x = SMatrix::<f64, 7, 7>::zeros();
    for i in 0..7 {
        grad_x[(i, 0)] = scan.xdot_at_tf[i];
        for j in 0..6 {
            grad_x[(i, j + 1)] = scan.v_at_tf.dx_dq[(i, j)];
        }
    }
    let sv = grad_x.svd(false, false).singular_values;
    println!("singular values of [xdot | X](t_end): {:?}", sv.as_slice());
}

/// Compare variational columns against central finite differences of the
/// nonlinear flow over the family p0(q) = p0 + q E^T.
fn run_fd_check() {
    use suffkit_core::dynamics::pack;
    use suffkit_core::flow::propagate;
    use suffkit_core::sufficiency::{build_family_basis, variational_scan, SufficiencyOpts};

    let (problem, sol) = converged_mini();
    let z0 = pack(&problem.x0, &sol.unknowns.p0);
    let opts = SufficiencyOpts::default();
    let basis = build_family_basis(problem.chart, &problem.engine, 1.0, &z0, 1e-10).unwrap();
    let scan = variational_scan(
        problem.chart,
        &problem.engine,
        &z0,
        sol.unknowns.t_f,
        sol.unknowns.t_f,
        &basis,
        &opts,
    )
    .unwrap();

    println!("arcs:");
    for a in &scan.arcs {
        println!(
            "  {:?} [{:.4}, {:.4}] max|delta| = {:.3e}",
            a.branch, a.t0, a.t1, a.max_abs_delta
        );
    }

    // Check times: mid first arc, mid arc after two switchings, t_f.
    let checks = [
        0.5 * (scan.arcs[0].t0 + scan.arcs[0].t1),
        if scan.arcs.len() > 2 {
            0.5 * (scan.arcs[2].t0 + scan.arcs[2].t1)
        } else {
            scan.t_f * 0.9
        },
        scan.t_f,
    ];
    let eps = 1e-6;
    for &t_check in &checks {
        // Locate the stored sample nearest to t_check.
        let arc = &scan.arcs[scan
            .arcs
            .partition_point(|a| a.t1 < t_check)
            .min(scan.arcs.len() - 1)];
        let s = arc
            .samples
            .iter()
            .min_by(|a, b| {
                (a.t - t_check).abs().total_cmp(&(b.t - t_check).abs())
            })
            .unwrap();
        let t = s.t;
        println!("t = {t:.4}:");
        for j in 0..6 {
            let mut col_err_x: f64 = 0.0;
            let mut col_scale_x: f64 = 0.0;
            let mut col_err_p: f64 = 0.0;
            let mut col_scale_p: f64 = 0.0;
            let mut zp = z0;
            let mut zm = z0;
            for i in 0..7 {
                zp[7 + i] += eps * basis.0[(i, j)];
                zm[7 + i] -= eps * basis.0[(i, j)];
            }
            let tp = propagate(problem.chart, &problem.engine, 1.0, zp, 0.0, t, &opts.integrator)
                .unwrap();
            let tm = propagate(problem.chart, &problem.engine, 1.0, zm, 0.0, t, &opts.integrator)
                .unwrap();
            for i in 0..7 {
                let fd_x = (tp.z_f[i] - tm.z_f[i]) / (2.0 * eps);
                let fd_p = (tp.z_f[7 + i] - tm.z_f[7 + i]) / (2.0 * eps);
                col_err_x += (fd_x - s.v.dx_dq[(i, j)]).powi(2);
                col_scale_x += fd_x * fd_x;
                col_err_p += (fd_p - s.v.dp_dq[(i, j)]).powi(2);
                col_scale_p += fd_p * fd_p;
            }
            println!(
                "  col {j}: |X_fd| = {:.3e} relerr {:.2e}; |P_fd| = {:.3e} relerr {:.2e}",
                col_scale_x.sqrt(),
                col_err_x.sqrt() / col_scale_x.sqrt().max(1e-300),
                col_scale_p.sqrt(),
                col_err_p.sqrt() / col_scale_p.sqrt().max(1e-300),
            );
        }
    }
}

fn converged_mini() -> (TransferProblem, suffkit_core::shooting::ExtremalSolution) {
    let problem = mini_problem();
    let t_est = coast_time_estimate(0.9, 0.2, 1.05, 0.0, 0.0, 4.0 * std::f64::consts::PI);
    let sopts = ShootingOpts::default();
    let gopts = GuessSearchOpts {
        trials: 60,
        costate_scale: 2.0,
        ..Default::default()
    };
    let guess = search_initial_guess(&problem, 0.0, t_est, &sopts, &gopts).unwrap();
    let schedule = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 1.0];
    let sol = continue_homotopy(&guess, &schedule, &problem, &ContinuationOpts::default(), None)
        .unwrap();
    (problem, sol)
}

fn run_degeneracy_check() {
    use suffkit_core::dynamics::pack;
    use suffkit_core::sufficiency::{
        build_family_basis, full_sensitivity_determinants, variational_scan, SufficiencyOpts,
    };
    let (problem, sol) = converged_mini();
    println!(
        "mini extremal: t_f = {:.5}, burns = {}, switchings = {}",
        sol.unknowns.t_f,
        sol.trajectory.burn_arc_count(),
        sol.trajectory.switching_count()
    );
    let z0 = pack(&problem.x0, &sol.unknowns.p0);
    let opts = SufficiencyOpts::default();

    let t0 = std::time::Instant::now();
    let (dets, _) = full_sensitivity_determinants(
        problem.chart,
        &problem.engine,
        &z0,
        sol.unknowns.t_f,
        60,
        &opts.integrator,
    )
    .unwrap();
    let max_full = dets.iter().fold(0.0f64, |m, (_, d)| m.max(d.abs()));
    println!("full dx/dp0 determinant: max |det| = {max_full:.3e} ({:.1?})", t0.elapsed());

    let t0 = std::time::Instant::now();
    let basis = build_family_basis(problem.chart, &problem.engine, 1.0, &z0, 1e-10).unwrap();
    let scan = variational_scan(
        problem.chart,
        &problem.engine,
        &z0,
        sol.unknowns.t_f,
        sol.unknowns.t_f,
        &basis,
        &opts,
    )
    .unwrap();
    let max_delta = scan
        .arcs
        .iter()
        .fold(0.0f64, |m, a| m.max(a.max_abs_delta));
    println!(
        "family delta: max |delta| = {max_delta:.3e}, delta(t_f) = {:.3e} ({:.1?})",
        scan.delta_at_tf,
        t0.elapsed()
    );
    println!(
        "ratio max|det dx/dp0| / max|delta| = {:.3e}",
        max_full / max_delta
    );
    for pair in &scan.switch_pairs {
        println!(
            "  switch t = {:.4}: left {:.3e}, right {:.3e}, product sign {}",
            pair.t,
            pair.left,
            pair.right,
            if pair.left * pair.right > 0.0 { "+" } else { "-" }
        );
    }

    // Singular values of the family gradient at t_f: how close to exact
    // rank deficiency is [xdot | X]?
    use nalgebra::SMatrix;
    let mut grad_x = SMatrix::<f64, 7, 7>::zeros();
    for i in 0..7 {
        grad_x[(i, 0)] = scan.xdot_at_tf[i];
        for j in 0..6 {
            grad_x[(i, j + 1)] = scan.v_at_tf.dx_dq[(i, j)];
        }
    }
    let svd = grad_x.svd(true, true);
    println!(
        "singular values of [xdot | X](t_f): {:?}",
        svd.singular_values.as_slice()
    );
    let vt = svd.v_t.unwrap();
    println!("kernel direction (time, q1..q6): {:?}", vt.row(6).clone_owned().as_slice());

    // Re-anchored test: restart the same extremal from the middle of its
    // first burn arc. If the exact degeneracy disappears, it is tied to the
    // frozen-costate initial coast arc.
    let burn_arc = sol
        .trajectory
        .arcs
        .iter()
        .find(|a| matches!(a.branch, suffkit_core::dynamics::ThrustBranch::Burn))
        .unwrap();
    let t_mid = 0.5 * (burn_arc.t0 + burn_arc.t1);
    let z_mid = sol.trajectory.eval(t_mid);
    let basis2 = build_family_basis(problem.chart, &problem.engine, 1.0, &z_mid, 1e-10).unwrap();
    let span = sol.unknowns.t_f - t_mid;
    let scan2 = variational_scan(
        problem.chart,
        &problem.engine,
        &z_mid,
        span,
        span,
        &basis2,
        &SufficiencyOpts::default(),
    )
    .unwrap();
    println!("re-anchored at mid-burn t = {t_mid:.4}:");
    for a in &scan2.arcs {
        println!(
            "  {:?} [{:.3}, {:.3}] max|delta| = {:.3e}",
            a.branch, a.t0, a.t1, a.max_abs_delta
        );
    }
    let mut gx2 = SMatrix::<f64, 7, 7>::zeros();
    for i in 0..7 {
        gx2[(i, 0)] = scan2.xdot_at_tf[i];
        for j in 0..6 {
            gx2[(i, j + 1)] = scan2.v_at_tf.dx_dq[(i, j)];
        }
    }
    let sv2 = gx2.svd(false, false).singular_values;
    println!("re-anchored singular values at end: {:?}", sv2.as_slice());
}

fn run_mini() {
    let problem = mini_problem();
    let t_est = coast_time_estimate(0.9, 0.2, 1.05, 0.0, 0.0, 4.0 * std::f64::consts::PI);
    println!("t_f estimate: {t_est:.3}");

    let sopts = ShootingOpts::default();
    let gopts = GuessSearchOpts {
        trials: 60,
        costate_scale: 2.0,
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let guess = match search_initial_guess(&problem, 0.0, t_est, &sopts, &gopts) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("guess search failed: {e}");
            return;
        }
    };
    println!(
        "guess after search: p0 = {:?}, t_f = {:.3}  ({:.1?})",
        guess.p0,
        guess.t_f,
        t0.elapsed()
    );

    let t0 = std::time::Instant::now();
    match solve(&guess, 0.0, &problem, &sopts) {
        Ok(sol) => {
            println!(
                "lambda 0 converged: iters {}, residual {:.2e}, t_f {:.4} ({:.1?})",
                sol.iterations,
                sol.residual_norm,
                sol.unknowns.t_f,
                t0.elapsed()
            );
            let copts = ContinuationOpts::default();
            let schedule = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95, 0.99, 1.0];
            let mut trace = Vec::new();
            let t0 = std::time::Instant::now();
            match continue_homotopy(&sol.unknowns, &schedule, &problem, &copts, Some(&mut trace)) {
                Ok(final_sol) => {
                    println!(
                        "lambda 1 converged ({:.1?}): t_f = {:.5}, burns = {}, switchings = {}",
                        t0.elapsed(),
                        final_sol.unknowns.t_f,
                        final_sol.trajectory.burn_arc_count(),
                        final_sol.trajectory.switching_count()
                    );
                    println!("p0 = {:?}", final_sol.unknowns.p0);
                    println!(
                        "fuel used: {:.4}, drift: {:.2e}",
                        1.0 - final_sol.trajectory.z_f[6],
                        final_sol.trajectory.hamiltonian_drift(50)
                    );
                    for r in &trace {
                        println!(
                            "  lambda {:.3}: t_f {:.4} iters {}",
                            r.lambda, r.unknowns.t_f, r.iterations
                        );
                    }
                }
                Err(e) => eprintln!("continuation failed: {e}"),
            }
        }
        Err(e) => eprintln!("lambda-0 solve failed: {e}"),
    }
}
