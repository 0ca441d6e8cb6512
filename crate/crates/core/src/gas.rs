//! Gas properties and the isothermal equation of state.
//!
//! Production runs close the system with the CNGA compressibility
//! correlation, `Z = 1 / (1 + b(G,T) * p_gauge)` with `b` in 1/psig and the
//! gauge pressure converted to psig. The relation `p = Z(p) R T rho` is a
//! quadratic in absolute pressure and is inverted in closed form. An
//! ideal-gas mode (`Z = 1`) is provided for analytic verification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{ATM_PA, M_AIR_KG_PER_MOL, PSI_PA, RANKINE_PER_KELVIN, R_UNIVERSAL};

/// Equation-of-state closure selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EosMode {
    #[default]
    Cnga,
    Ideal,
}

/// Immutable gas constants shared by every module.
///
/// `r_specific` is derived from the gas gravity: R = R_u / (G * M_air).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GasProperties {
    pub temperature_k: f64,
    pub gravity: f64,
    pub r_specific: f64,
    /// Lower heating value used for MMBTU/MW <-> kg conversions [MJ/kg].
    pub energy_density_mj_per_kg: f64,
    pub eos: EosMode,
}

impl GasProperties {
    pub fn new(
        gravity: f64,
        temperature_k: f64,
        energy_density_mj_per_kg: f64,
        eos: EosMode,
    ) -> Result<Self> {
        if !(gravity > 0.0) || !gravity.is_finite() {
            return Err(Error::domain(format!("gas gravity must be > 0, got {gravity}")));
        }
        if !(temperature_k > 0.0) || !temperature_k.is_finite() {
            return Err(Error::domain(format!(
                "temperature must be > 0 K, got {temperature_k}"
            )));
        }
        if !(energy_density_mj_per_kg > 0.0) {
            return Err(Error::domain(format!(
                "energy density must be > 0 MJ/kg, got {energy_density_mj_per_kg}"
            )));
        }
        Ok(GasProperties {
            temperature_k,
            gravity,
            r_specific: R_UNIVERSAL / (gravity * M_AIR_KG_PER_MOL),
            energy_density_mj_per_kg,
            eos,
        })
    }

    /// Pipeline-quality defaults: G = 0.6, T = 15 C, 52 MJ/kg, CNGA closure.
    pub fn default_cnga() -> Self {
        Self::new(0.6, 288.15, 52.0, EosMode::Cnga).expect("defaults are valid")
    }

    pub fn default_ideal() -> Self {
        Self::new(0.6, 288.15, 52.0, EosMode::Ideal).expect("defaults are valid")
    }

    pub fn with_eos(mut self, eos: EosMode) -> Self {
        self.eos = eos;
        self
    }

    /// CNGA `b` coefficient converted to 1/Pa of gauge pressure.
    pub fn cnga_b_per_pa(&self) -> f64 {
        let t_rankine = self.temperature_k * RANKINE_PER_KELVIN;
        let b_per_psig = 344400.0 * 10f64.powf(1.785 * self.gravity) / t_rankine.powf(3.825);
        b_per_psig / PSI_PA
    }
}

/// Precomputed evaluation kernel for the hot solver loops: one sqrt per
/// pressure evaluation in CNGA mode, no branching on validity.
#[derive(Debug, Clone, Copy)]
pub struct EosKernel {
    mode: EosMode,
    rt: f64,
    b: f64,
    /// 1 - b * p_atm (always positive for sane properties).
    c1: f64,
    inv_2b: f64,
}

impl EosKernel {
    pub fn new(props: &GasProperties) -> Self {
        let rt = props.r_specific * props.temperature_k;
        let b = props.cnga_b_per_pa();
        EosKernel {
            mode: props.eos,
            rt,
            b,
            c1: 1.0 - b * ATM_PA,
            inv_2b: 0.5 / b,
        }
    }

    #[inline]
    pub fn mode(&self) -> EosMode {
        self.mode
    }

    #[inline]
    pub fn rt(&self) -> f64 {
        self.rt
    }

    /// Absolute pressure from density; positive root of the CNGA quadratic.
    #[inline]
    pub fn pressure(&self, rho: f64) -> f64 {
        match self.mode {
            EosMode::Ideal => rho * self.rt,
            EosMode::Cnga => {
                ((self.c1 * self.c1 + 4.0 * self.b * self.rt * rho).sqrt() - self.c1) * self.inv_2b
            }
        }
    }

    /// Density from absolute pressure, rho = p / (Z(p) R T).
    #[inline]
    pub fn density(&self, p: f64) -> f64 {
        match self.mode {
            EosMode::Ideal => p / self.rt,
            EosMode::Cnga => p * (1.0 + self.b * (p - ATM_PA)) / self.rt,
        }
    }

    /// Isothermal wave speed sqrt(p(rho)/rho) used for the CFL bound.
    #[inline]
    pub fn sound_speed(&self, rho: f64) -> f64 {
        match self.mode {
            EosMode::Ideal => self.rt.sqrt(),
            EosMode::Cnga => (self.pressure(rho) / rho).sqrt(),
        }
    }

    /// Antiderivative G(p) = integral of rho(p) dp, used by the steady
    /// network solve: G(p_in) - G(p_out) = (lambda L / 2D) phi |phi|.
    pub fn pressure_potential(&self, p: f64) -> f64 {
        match self.mode {
            EosMode::Ideal => 0.5 * p * p / self.rt,
            EosMode::Cnga => {
                (0.5 * p * p + self.b * (p * p * p / 3.0 - 0.5 * ATM_PA * p * p)) / self.rt
            }
        }
    }

    /// Inverse of `pressure_potential` by Newton iteration (the potential is
    /// strictly increasing for p >= 0).
    pub fn pressure_from_potential(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if matches!(self.mode, EosMode::Ideal) {
            return (2.0 * self.rt * u).sqrt();
        }
        let mut p = (2.0 * self.rt * u).sqrt();
        for _ in 0..60 {
            let f = self.pressure_potential(p) - u;
            let d = self.density(p).max(1e-300);
            let step = f / d;
            p -= step;
            if p < 0.0 {
                p = 0.0;
            }
            if step.abs() <= 1e-13 * p.max(1.0) {
                break;
            }
        }
        p
    }
}

/// CNGA compressibility factor at absolute pressure `p_pa`.
///
/// Gauge pressure below zero (sub-atmospheric) continues the correlation
/// with Z > 1; Z is in (0, 1] for p >= 1 atm.
pub fn cnga_z(p_pa: f64, props: &GasProperties) -> Result<f64> {
    if !(p_pa >= 0.0) {
        return Err(Error::domain(format!("pressure must be >= 0 Pa, got {p_pa}")));
    }
    let b = props.cnga_b_per_pa();
    Ok(1.0 / (1.0 + b * (p_pa - ATM_PA)))
}

/// The unique p >= 0 solving p = Z(p, T) R T rho (absolute pressure).
pub fn pressure_from_density(rho: f64, props: &GasProperties) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!("density must be >= 0, got {rho}")));
    }
    let p = EosKernel::new(props).pressure(rho);
    if !p.is_finite() || p < 0.0 {
        return Err(Error::Internal(format!(
            "no non-negative pressure root for rho = {rho}"
        )));
    }
    Ok(p)
}

/// Density rho = p / (Z(p) R T); inverse of [`pressure_from_density`].
pub fn density_from_pressure(p_pa: f64, props: &GasProperties) -> Result<f64> {
    if !(p_pa >= 0.0) || !p_pa.is_finite() {
        return Err(Error::domain(format!(
            "pressure must be >= 0 Pa (vacuum reference), got {p_pa}"
        )));
    }
    Ok(EosKernel::new(props).density(p_pa))
}

/// Isothermal wave speed sqrt(p(rho)/rho) consistent with the configured
/// equation of state; this is what the CFL bound uses.
pub fn sound_speed(rho: f64, props: &GasProperties) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::domain(format!("density must be > 0, got {rho}")));
    }
    Ok(EosKernel::new(props).sound_speed(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn props_with_r(r_target: f64, eos: EosMode) -> GasProperties {
        let gravity = R_UNIVERSAL / (r_target * M_AIR_KG_PER_MOL);
        GasProperties::new(gravity, 288.15, 52.0, eos).unwrap()
    }

    #[test]
    fn r_derives_from_gravity() {
        let props = GasProperties::default_cnga();
        assert_relative_eq!(
            props.r_specific,
            8.31446 / (0.6 * 0.0289647),
            max_relative = 1e-10
        );
    }

    #[test]
    fn z_is_one_at_zero_gauge() {
        for gravity in [0.55, 0.6, 0.7] {
            let props = GasProperties::new(gravity, 288.15, 52.0, EosMode::Cnga).unwrap();
            assert_relative_eq!(cnga_z(ATM_PA, &props).unwrap(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn z_frozen_regression_at_70_bar() {
        // Direct mpmath evaluation of the correlation, frozen.
        let props = GasProperties::default_cnga();
        assert_relative_eq!(
            cnga_z(70e5, &props).unwrap(),
            0.856577315843645,
            max_relative = 1e-12
        );
    }

    #[test]
    fn z_decreases_with_pressure() {
        let props = GasProperties::default_cnga();
        assert!(cnga_z(80e5, &props).unwrap() < cnga_z(60e5, &props).unwrap());
    }

    #[test]
    fn z_rejects_negative_pressure() {
        let props = GasProperties::default_cnga();
        assert!(matches!(cnga_z(-1.0, &props), Err(Error::Domain(_))));
    }

    #[test]
    fn vacuum_density_gives_zero_pressure() {
        // The absolute formulation p = Z(p) R T rho has p(0) = 0.
        for props in [GasProperties::default_cnga(), GasProperties::default_ideal()] {
            assert_eq!(pressure_from_density(0.0, &props).unwrap(), 0.0);
        }
    }

    #[test]
    fn ideal_mode_closed_form() {
        let props = props_with_r(478.0, EosMode::Ideal);
        let p = pressure_from_density(50.0, &props).unwrap();
        assert_relative_eq!(p, 50.0 * 478.0 * 288.15, max_relative = 1e-12);
        assert_relative_eq!(p, 6.886785e6, max_relative = 1e-9);
        assert_relative_eq!(
            density_from_pressure(5e6, &props).unwrap(),
            5e6 / (478.0 * 288.15),
            max_relative = 1e-12
        );
    }

    #[test]
    fn cnga_fixed_point_residual() {
        let props = GasProperties::default_cnga();
        let rho = 60.0;
        let p = pressure_from_density(rho, &props).unwrap();
        let z = cnga_z(p, &props).unwrap();
        let residual = (p - z * props.r_specific * props.temperature_k * rho).abs() / p;
        assert!(residual < 1e-10, "residual {residual}");
        // Frozen from the mpmath bisection oracle.
        assert_relative_eq!(p, 7074248.888122800, max_relative = 1e-12);
    }

    #[test]
    fn cnga_closed_form_matches_bisection_oracle() {
        // Independent route: bisect the fixed-point residual using only
        // cnga_z, then compare against the closed-form inversion.
        let props = GasProperties::default_cnga();
        for rho in [5.0, 20.0, 60.0, 95.0] {
            let f = |p: f64| {
                p - cnga_z(p, &props).unwrap() * props.r_specific * props.temperature_k * rho
            };
            let (mut lo, mut hi) = (0.0f64, 1e9f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let p_bisect = 0.5 * (lo + hi);
            let p_closed = pressure_from_density(rho, &props).unwrap();
            assert_relative_eq!(p_closed, p_bisect, max_relative = 1e-10);
        }
    }

    #[test]
    fn density_round_trip() {
        for props in [GasProperties::default_cnga(), GasProperties::default_ideal()] {
            for rho in [1.0, 10.0, 80.0] {
                let p = pressure_from_density(rho, &props).unwrap();
                let back = density_from_pressure(p, &props).unwrap();
                assert_relative_eq!(back, rho, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn density_from_pressure_frozen_at_70_bar() {
        let props = GasProperties::default_cnga();
        assert_relative_eq!(
            density_from_pressure(70e5, &props).unwrap(),
            59.27875635887820,
            max_relative = 1e-12
        );
    }

    #[test]
    fn density_rejects_negative_pressure() {
        let props = GasProperties::default_cnga();
        assert!(matches!(density_from_pressure(-5.0, &props), Err(Error::Domain(_))));
    }

    #[test]
    fn sound_speed_ideal_is_sqrt_rt() {
        let props = props_with_r(478.0, EosMode::Ideal);
        for rho in [1.0, 20.0, 80.0] {
            let a = sound_speed(rho, &props).unwrap();
            assert_eq!(a, (478.0f64 * 288.15).sqrt());
        }
        assert_relative_eq!(
            sound_speed(1.0, &props).unwrap(),
            371.1276,
            max_relative = 1e-6
        );
    }

    #[test]
    fn sound_speed_cnga_chord_oracle() {
        // Chord of p(rho) anchored at the atmospheric state; agrees with
        // sqrt(p/rho) to well within 5% at 70 bar.
        let props = GasProperties::default_cnga();
        let rho = density_from_pressure(70e5, &props).unwrap();
        let rho_atm = density_from_pressure(ATM_PA, &props).unwrap();
        let chord = ((70e5 - ATM_PA) / (rho - rho_atm)).sqrt();
        let a = sound_speed(rho, &props).unwrap();
        assert!((a - chord).abs() / a < 0.05, "a = {a}, chord = {chord}");
        assert_relative_eq!(a, 343.6366512124476, max_relative = 1e-12);
    }

    #[test]
    fn sound_speed_rejects_nonpositive_density() {
        let props = GasProperties::default_cnga();
        assert!(sound_speed(0.0, &props).is_err());
        assert!(sound_speed(-1.0, &props).is_err());
    }

    #[test]
    fn potential_inverts() {
        for props in [GasProperties::default_cnga(), GasProperties::default_ideal()] {
            let kernel = EosKernel::new(&props);
            for p in [2e5, 10e5, 50e5, 70e5, 90e5] {
                let u = kernel.pressure_potential(p);
                assert_relative_eq!(kernel.pressure_from_potential(u), p, max_relative = 1e-11);
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_tight(rho in 0.1f64..100.0) {
                let props = GasProperties::default_cnga();
                let p = pressure_from_density(rho, &props).unwrap();
                let back = density_from_pressure(p, &props).unwrap();
                prop_assert!((back - rho).abs() / rho < 1e-9);
            }

            #[test]
            fn z_in_unit_interval(p_bar in 1.01325f64..100.0, gravity in 0.55f64..0.7) {
                let props = GasProperties::new(gravity, 288.15, 52.0, EosMode::Cnga).unwrap();
                let z = cnga_z(p_bar * 1e5, &props).unwrap();
                prop_assert!(z > 0.0 && z <= 1.0 + 1e-12);
            }

            #[test]
            fn pressure_strictly_increasing(rho in 0.1f64..99.0, bump in 0.01f64..1.0) {
                let props = GasProperties::default_cnga();
                let p1 = pressure_from_density(rho, &props).unwrap();
                let p2 = pressure_from_density(rho + bump, &props).unwrap();
                prop_assert!(p2 > p1);
            }
        }
    }
}
