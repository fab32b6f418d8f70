//! Canonical unit system.
//!
//! All propagation and shooting happens in canonical units in which the
//! gravitational parameter is exactly 1. The scale set records the SI-to-
//! canonical factors so that configuration input (km, s, kg, N) and report
//! output can round-trip losslessly.

use serde::{Deserialize, Serialize};

/// Earth gravitational parameter, km^3/s^2.
pub const MU_EARTH_KM3_S2: f64 = 398600.47;

/// Conversion factors between SI-like input units and canonical units.
///
/// The time unit is derived from the length unit so that `mu = 1` in
/// canonical units: `TU = sqrt(LU^3 / mu)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScaleSet {
    /// km per canonical length unit.
    pub length_km: f64,
    /// s per canonical time unit.
    pub time_s: f64,
    /// kg per canonical mass unit.
    pub mass_kg: f64,
    /// Gravitational parameter the scale was built from, km^3/s^2.
    pub mu_km3_s2: f64,
}

impl ScaleSet {
    /// Build a scale set from a length unit and mass unit.
    ///
    /// Panics if any unit is nonpositive.
    pub fn new(length_km: f64, mass_kg: f64, mu_km3_s2: f64) -> Self {
        assert!(
            length_km > 0.0 && mass_kg > 0.0 && mu_km3_s2 > 0.0,
            "scale units must be strictly positive"
        );
        let time_s = (length_km.powi(3) / mu_km3_s2).sqrt();
        Self {
            length_km,
            time_s,
            mass_kg,
            mu_km3_s2,
        }
    }

    /// Default scale for geostationary transfer problems: the GEO radius as
    /// length unit, the initial spacecraft mass as mass unit.
    pub fn geo(mass_kg: f64) -> Self {
        Self::new(42165.0, mass_kg, MU_EARTH_KM3_S2)
    }

    /// km/s per canonical velocity unit.
    pub fn velocity_km_s(&self) -> f64 {
        self.length_km / self.time_s
    }

    /// N per canonical force unit.
    pub fn force_newton(&self) -> f64 {
        // kg * m/s^2
        self.mass_kg * self.length_km * 1.0e3 / (self.time_s * self.time_s)
    }

    pub fn length_to_canonical(&self, km: f64) -> f64 {
        km / self.length_km
    }

    pub fn length_to_km(&self, canonical: f64) -> f64 {
        canonical * self.length_km
    }

    pub fn time_to_canonical(&self, seconds: f64) -> f64 {
        seconds / self.time_s
    }

    pub fn time_to_seconds(&self, canonical: f64) -> f64 {
        canonical * self.time_s
    }

    pub fn hours_to_canonical(&self, hours: f64) -> f64 {
        self.time_to_canonical(hours * 3600.0)
    }

    pub fn time_to_hours(&self, canonical: f64) -> f64 {
        self.time_to_seconds(canonical) / 3600.0
    }

    pub fn mass_to_canonical(&self, kg: f64) -> f64 {
        kg / self.mass_kg
    }

    pub fn mass_to_kg(&self, canonical: f64) -> f64 {
        canonical * self.mass_kg
    }

    pub fn thrust_to_canonical(&self, newton: f64) -> f64 {
        newton / self.force_newton()
    }

    /// Mass-flow coefficient beta = 1/(Isp*g0), s/m, to canonical time/length.
    pub fn beta_to_canonical(&self, s_per_m: f64) -> f64 {
        s_per_m * self.velocity_km_s() * 1.0e3
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geo_scale_units() {
        let s = ScaleSet::geo(1500.0);
        assert!((s.time_s - 13713.8).abs() < 0.5);
        assert!((s.velocity_km_s() - 3.0747).abs() < 1e-3);
        // Canonical mu is 1 by construction: LU^3/TU^2 = mu.
        let mu = s.length_km.powi(3) / (s.time_s * s.time_s);
        assert!((mu / MU_EARTH_KM3_S2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn engine_conversion_matches_hand_values() {
        // 10 N on a 1500 kg spacecraft with Isp = 2000 s, g0 = 9.8 m/s^2.
        let s = ScaleSet::geo(1500.0);
        let u = s.thrust_to_canonical(10.0);
        let beta = s.beta_to_canonical(1.0 / (2000.0 * 9.8));
        // Mass flow at full throttle, back in SI.
        let mdot_kg_s = beta * u * s.mass_kg / s.time_s;
        assert!((mdot_kg_s - 5.102e-4).abs() < 1e-6);
    }
}
