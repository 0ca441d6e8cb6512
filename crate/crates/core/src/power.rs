//! Power-to-gas conversion: electricity production series are turned into
//! gas withdrawal profiles through a turbine efficiency curve,
//! gas [kg/s] = P [MW] / (eta(load) * energy_density [MJ/kg]).

use std::path::Path;

use crate::boundary::{Interp, Profile};
use crate::error::{Error, Result};
use crate::gas::GasProperties;

/// Monotone-load table of (load fraction, efficiency), linearly
/// interpolated; loads outside the table range clamp to the nearest entry.
#[derive(Debug, Clone)]
pub struct EfficiencyCurve {
    loads: Vec<f64>,
    etas: Vec<f64>,
}

impl EfficiencyCurve {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::validation(
                "efficiency curve needs at least two points",
            ));
        }
        let loads: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let etas: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if loads.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(
                "efficiency curve load fractions must be strictly increasing",
            ));
        }
        if etas.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::validation(
                "efficiencies must lie in (0, 1]",
            ));
        }
        Ok(EfficiencyCurve { loads, etas })
    }

    /// CSV with header `load_fraction,efficiency`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::Parse(format!("efficiency curve {}: {e}", path.display())))?;
        let mut pairs = Vec::new();
        for record in reader.records() {
            let record = record
                .map_err(|e| Error::Parse(format!("efficiency curve {}: {e}", path.display())))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("efficiency curve {}: {e}", path.display())))
            };
            pairs.push((parse(&record[0])?, parse(&record[1])?));
        }
        EfficiencyCurve::new(pairs)
    }

    /// Interpolated efficiency; the flag reports clamping outside the table.
    pub fn efficiency(&self, load: f64) -> (f64, bool) {
        if load <= self.loads[0] {
            return (self.etas[0], load < self.loads[0]);
        }
        if load >= *self.loads.last().unwrap() {
            return (*self.etas.last().unwrap(), load > *self.loads.last().unwrap());
        }
        let k = self.loads.partition_point(|&x| x <= load) - 1;
        let w = (load - self.loads[k]) / (self.loads[k + 1] - self.loads[k]);
        (self.etas[k] + w * (self.etas[k + 1] - self.etas[k]), false)
    }
}

/// Electricity production of one unit.
#[derive(Debug, Clone)]
pub struct PowerSeries {
    pub unit: String,
    pub times_s: Vec<f64>,
    pub power_mw: Vec<f64>,
}

/// Parse a power CSV with columns `timestamp,unit_id,power_MW`.
/// Timestamps may be RFC 3339, `YYYY-MM-DD HH:MM[:SS]`, or plain seconds;
/// they are rebased so the earliest sample is t = 0.
pub fn load_power_csv(path: impl AsRef<Path>) -> Result<Vec<PowerSeries>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Parse(format!("power csv {}: {e}", path.display())))?;
    let mut rows: Vec<(f64, String, f64)> = Vec::new();
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::Parse(format!("power csv {}: {e}", path.display())))?;
        if record.len() < 3 {
            return Err(Error::Parse(format!(
                "power csv {}: expected timestamp,unit_id,power_MW",
                path.display()
            )));
        }
        let t = parse_timestamp(record[0].trim())
            .ok_or_else(|| Error::Parse(format!("power csv {}: bad timestamp {:?}", path.display(), &record[0])))?;
        let mw = record[2]
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("power csv {}: {e}", path.display())))?;
        rows.push((t, record[1].trim().to_string(), mw));
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("power csv {}: no rows", path.display())));
    }
    let t0 = rows
        .iter()
        .map(|r| r.0)
        .fold(f64::INFINITY, f64::min);
    let mut units: Vec<PowerSeries> = Vec::new();
    for (t, unit, mw) in rows {
        let series = match units.iter_mut().find(|s| s.unit == unit) {
            Some(s) => s,
            None => {
                units.push(PowerSeries {
                    unit,
                    times_s: Vec::new(),
                    power_mw: Vec::new(),
                });
                units.last_mut().unwrap()
            }
        };
        series.times_s.push(t - t0);
        series.power_mw.push(mw);
    }
    Ok(units)
}

fn parse_timestamp(s: &str) -> Option<f64> {
    if let Ok(plain) = s.parse::<f64>() {
        return Some(plain);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64);
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp() as f64);
        }
    }
    None
}

#[derive(Debug, Clone, Default)]
pub struct PowerToGasMeta {
    /// Samples whose load fraction fell outside the curve table.
    pub clamped_samples: usize,
}

/// Convert an electricity series into a gas withdrawal profile for `node`.
/// The output keeps the input cadence; 1 MW = 1 MJ/s.
pub fn power_to_gas(
    power: &PowerSeries,
    curve: &EfficiencyCurve,
    rated_mw: f64,
    props: &GasProperties,
    node: u32,
) -> Result<(Profile, PowerToGasMeta)> {
    if !(rated_mw > 0.0) {
        return Err(Error::domain(format!(
            "rated capacity must be > 0 MW, got {rated_mw}"
        )));
    }
    let mut meta = PowerToGasMeta::default();
    let mut values = Vec::with_capacity(power.power_mw.len());
    for &mw in &power.power_mw {
        if !(mw >= 0.0) {
            return Err(Error::domain(format!("negative power sample {mw} MW")));
        }
        if mw == 0.0 {
            values.push(0.0);
            continue;
        }
        let (eta, clamped) = curve.efficiency(mw / rated_mw);
        if clamped {
            meta.clamped_samples += 1;
        }
        values.push(mw / (eta * props.energy_density_mj_per_kg));
    }
    Ok((
        Profile::new(node, power.times_s.clone(), values, Interp::Step)?,
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn flat_curve(eta: f64) -> EfficiencyCurve {
        EfficiencyCurve::new(vec![(0.0, eta), (1.0, eta)]).unwrap()
    }

    #[test]
    fn zero_power_is_zero_gas() {
        let props = GasProperties::default_cnga();
        let series = PowerSeries {
            unit: "u1".into(),
            times_s: vec![0.0, 1800.0],
            power_mw: vec![0.0, 0.0],
        };
        let (profile, _) = power_to_gas(&series, &flat_curve(0.4), 400.0, &props, 5).unwrap();
        assert_eq!(profile.values(), &[0.0, 0.0]);
    }

    #[test]
    fn unit_arithmetic_oracle() {
        // 100 MW at eta 0.40 and 52 MJ/kg -> 100 / (0.40 * 52) kg/s.
        let props = GasProperties::default_cnga();
        let series = PowerSeries {
            unit: "u1".into(),
            times_s: vec![0.0],
            power_mw: vec![100.0],
        };
        let (profile, meta) = power_to_gas(&series, &flat_curve(0.4), 400.0, &props, 5).unwrap();
        assert_relative_eq!(profile.values()[0], 4.807692307692308, max_relative = 1e-12);
        assert_eq!(meta.clamped_samples, 0);
    }

    #[test]
    fn halving_efficiency_doubles_gas() {
        let props = GasProperties::default_cnga();
        let series = PowerSeries {
            unit: "u1".into(),
            times_s: vec![0.0],
            power_mw: vec![100.0],
        };
        let (hi, _) = power_to_gas(&series, &flat_curve(0.4), 400.0, &props, 5).unwrap();
        let (lo, _) = power_to_gas(&series, &flat_curve(0.2), 400.0, &props, 5).unwrap();
        assert_relative_eq!(lo.values()[0], 2.0 * hi.values()[0], max_relative = 1e-12);
    }

    #[test]
    fn energy_accounting_holds_per_sample() {
        // gas * energy_density * eta == electric power, to 1e-12 relative.
        let props = GasProperties::default_cnga();
        let curve = EfficiencyCurve::new(vec![
            (0.2, 0.25),
            (0.5, 0.34),
            (0.8, 0.38),
            (1.0, 0.385),
        ])
        .unwrap();
        let series = PowerSeries {
            unit: "u1".into(),
            times_s: (0..48).map(|k| k as f64 * 1800.0).collect(),
            power_mw: (0..48).map(|k| 150.0 + 5.0 * k as f64).collect(),
        };
        let (profile, _) = power_to_gas(&series, &curve, 400.0, &props, 5).unwrap();
        for (gas, mw) in profile.values().iter().zip(&series.power_mw) {
            let (eta, _) = curve.efficiency(mw / 400.0);
            let back = gas * props.energy_density_mj_per_kg * eta;
            assert_relative_eq!(back, *mw, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_curves_rejected() {
        assert!(EfficiencyCurve::new(vec![(0.0, 0.0), (1.0, 0.4)]).is_err());
        assert!(EfficiencyCurve::new(vec![(0.5, 0.3), (0.5, 0.4)]).is_err());
        assert!(EfficiencyCurve::new(vec![(0.0, 0.3)]).is_err());
    }

    #[test]
    fn out_of_range_load_clamps_and_flags() {
        let props = GasProperties::default_cnga();
        let curve = EfficiencyCurve::new(vec![(0.3, 0.3), (1.0, 0.385)]).unwrap();
        let series = PowerSeries {
            unit: "u1".into(),
            times_s: vec![0.0],
            power_mw: vec![40.0], // load 0.1, below the table
        };
        let (profile, meta) = power_to_gas(&series, &curve, 400.0, &props, 5).unwrap();
        assert_eq!(meta.clamped_samples, 1);
        assert_relative_eq!(
            profile.values()[0],
            40.0 / (0.3 * 52.0),
            max_relative = 1e-12
        );
    }
}
