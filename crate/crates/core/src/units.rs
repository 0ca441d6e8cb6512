//! Unit constants and conversions. All internal quantities are SI
//! (Pa, m, kg, s); file formats may declare km/mm/bar and are converted
//! on load.

/// Standard atmosphere [Pa].
pub const ATM_PA: f64 = 101_325.0;

/// One bar [Pa].
pub const BAR_PA: f64 = 1.0e5;

/// One psi [Pa].
pub const PSI_PA: f64 = 6_894.757_293_168;

/// Universal gas constant [J/(mol K)].
pub const R_UNIVERSAL: f64 = 8.31446;

/// Molar mass of dry air [kg/mol]; gas gravity is relative to this.
pub const M_AIR_KG_PER_MOL: f64 = 0.0289647;

/// Rankine per Kelvin.
pub const RANKINE_PER_KELVIN: f64 = 1.8;

/// Energy content of one MMBTU [MJ].
pub const MJ_PER_MMBTU: f64 = 1055.06;

pub const HOUR_S: f64 = 3600.0;
pub const DAY_S: f64 = 86_400.0;

pub fn bar_to_pa(bar: f64) -> f64 {
    bar * BAR_PA
}

pub fn pa_to_bar(pa: f64) -> f64 {
    pa / BAR_PA
}

pub fn hours_to_s(h: f64) -> f64 {
    h * HOUR_S
}

pub fn s_to_hours(s: f64) -> f64 {
    s / HOUR_S
}
