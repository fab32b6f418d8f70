//! The two charts must describe the same flow: an extremal propagated in
//! equinoctial elements, with its costate transformed covariantly, must match
//! the Cartesian propagation point by point. This cross-validates the Gauss
//! thrust matrix and the equinoctial drift against the plain inverse-square
//! dynamics.

use suffkit_core::dynamics::{
    self, cartesian_to_meoe, cartesian_to_meoe_jacobian, h1_at, hamiltonian_at,
    meoe_to_cartesian, pack, Chart, EngineSpec, Meoe, StateVector, ThrustBranch,
};
use suffkit_core::flow::{propagate, IntegratorOpts};

fn engine() -> EngineSpec {
    EngineSpec {
        u_max: 0.03,
        beta: 0.157,
        m_c: 0.2,
    }
}

fn gto_state(l: f64) -> Meoe {
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

/// Transform a MEOE costate row to the Cartesian chart: p_x = p_y * dT/dx
/// where T is the Cartesian-to-MEOE map.
fn costate_to_cartesian(p_meoe: &[f64; 7], x: &StateVector, l_hint: f64) -> [f64; 7] {
    let j = cartesian_to_meoe_jacobian(x, l_hint, 1.0);
    let mut p_cart = [0.0; 7];
    for col in 0..7 {
        for row in 0..7 {
            p_cart[col] += p_meoe[row] * j[(row, col)];
        }
    }
    p_cart
}

fn setup(p_meoe: [f64; 7]) -> ([f64; 14], [f64; 14], f64) {
    let y0 = gto_state(std::f64::consts::PI);
    let x0 = meoe_to_cartesian(&y0, 1.0).unwrap();
    let p_cart = costate_to_cartesian(&p_meoe, &x0, y0.l);
    let z_meoe = pack(&y0.to_array(), &p_meoe);
    let z_cart = pack(&x0.to_array(), &p_cart);
    (z_meoe, z_cart, y0.l)
}

/// Hamiltonian, switching function, and throttle are chart invariants.
#[test]
fn pointwise_invariants_match_across_charts() {
    let (z_meoe, z_cart, _) = setup([0.2, -0.4, 0.1, 0.05, -0.3, 0.6, 0.1]);
    let eng = engine();
    let h1_m = h1_at(Chart::Meoe, &eng, &z_meoe);
    let h1_c = h1_at(Chart::Cartesian, &eng, &z_cart);
    assert!(
        (h1_m - h1_c).abs() < 1e-10,
        "H1 differs across charts: {h1_m} vs {h1_c}"
    );
    for branch in [ThrustBranch::Coast, ThrustBranch::Burn] {
        let hm = hamiltonian_at(Chart::Meoe, &eng, 1.0, branch, &z_meoe);
        let hc = hamiltonian_at(Chart::Cartesian, &eng, 1.0, branch, &z_cart);
        assert!(
            (hm - hc).abs() < 1e-10,
            "H ({branch:?}) differs across charts: {hm} vs {hc}"
        );
    }
}

fn compare_flows(p_meoe: [f64; 7], t_end: f64, expect_burn: bool) {
    let (z_meoe, z_cart, _) = setup(p_meoe);
    let eng = engine();
    let opts = IntegratorOpts::default();

    let h1_0 = h1_at(Chart::Meoe, &eng, &z_meoe);
    assert_eq!(h1_0 > 0.0, expect_burn, "test setup: H1(0) = {h1_0}");

    let tm = propagate(Chart::Meoe, &eng, 1.0, z_meoe, 0.0, t_end, &opts).unwrap();
    let tc = propagate(Chart::Cartesian, &eng, 1.0, z_cart, 0.0, t_end, &opts).unwrap();

    // Switching structure must agree.
    assert_eq!(tm.switching_count(), tc.switching_count());
    for (em, ec) in tm.events.iter().zip(tc.events.iter()) {
        assert!(
            (em.t - ec.t).abs() < 1e-7,
            "switching times differ: {} vs {}",
            em.t,
            ec.t
        );
    }

    // States must agree pointwise through the conversion map.
    for i in 1..=8 {
        let t = t_end * i as f64 / 8.0;
        let zm = tm.eval(t);
        let zc = tc.eval(t);
        let xm = Meoe::from_array(&zm[..7].try_into().unwrap());
        let xc = StateVector::from_array(&zc[..7].try_into().unwrap());
        let xc_as_meoe = cartesian_to_meoe(&xc, xm.l, 1.0).unwrap();
        let a = xm.to_array();
        let b = xc_as_meoe.to_array();
        for k in 0..7 {
            let scale = a[k].abs().max(1.0);
            assert!(
                (a[k] - b[k]).abs() / scale < 1e-8,
                "t = {t}, component {k}: meoe {} vs cartesian-converted {}",
                a[k],
                b[k]
            );
        }
        // The switching function history must also agree.
        let h1_m = h1_at(Chart::Meoe, &eng, &zm);
        let h1_c = h1_at(Chart::Cartesian, &eng, &zc);
        assert!((h1_m - h1_c).abs() < 1e-8);
    }
}

/// Pure coast: validates the equinoctial drift (l_dot) against Kepler motion.
#[test]
fn coast_flow_matches_across_charts() {
    // Tiny costate keeps H1 < 0 everywhere.
    compare_flows([0.02, -0.04, 0.01, 0.005, -0.03, 0.06, 0.01], 6.0, false);
}

/// Burning flow: validates the full Gauss thrust matrix, including the
/// switching structure it induces.
#[test]
fn burning_flow_matches_across_charts() {
    // Strong primer: starts on a burn arc.
    compare_flows([15.0, -140.0, 20.0, 4.0, -15.0, 40.0, 3.0], 4.0, true);
}
