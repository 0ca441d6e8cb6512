//! Time-series profiles and the per-node boundary set consumed by the
//! solver.
//!
//! Sign conventions: profiles carry flows in the node's natural sign
//! (supplies inject, demands withdraw, both positive). The composed
//! [`BoundarySet`] stores withdrawals d_n(t) in kg/s, negative for
//! injection, which is what the junction mass balance uses directly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interp {
    /// Piecewise constant, holding the value of the latest sample at or
    /// before t; defined on [t0, +inf).
    #[default]
    Step,
    /// Piecewise linear; defined on [t0, t_last] only.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub node: u32,
    times_s: Vec<f64>,
    values: Vec<f64>,
    pub interp: Interp,
}

impl Profile {
    pub fn new(node: u32, times_s: Vec<f64>, values: Vec<f64>, interp: Interp) -> Result<Self> {
        if times_s.is_empty() || times_s.len() != values.len() {
            return Err(Error::validation(format!(
                "profile for node {node}: need equal, non-zero sample counts (got {} times, {} values)",
                times_s.len(),
                values.len()
            )));
        }
        if times_s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::validation(format!(
                "profile for node {node}: time stamps must be strictly increasing"
            )));
        }
        if times_s.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "profile for node {node}: non-finite sample"
            )));
        }
        Ok(Profile {
            node,
            times_s,
            values,
            interp,
        })
    }

    pub fn constant(node: u32, value: f64) -> Self {
        Profile::new(node, vec![0.0], vec![value], Interp::Step).expect("constant profile")
    }

    pub fn times(&self) -> &[f64] {
        &self.times_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start_time(&self) -> f64 {
        self.times_s[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times_s.last().unwrap()
    }

    /// True when the profile is defined on all of [0, horizon].
    pub fn covers(&self, horizon_s: f64) -> bool {
        match self.interp {
            Interp::Step => self.start_time() <= 0.0,
            Interp::Linear => self.start_time() <= 0.0 && self.end_time() >= horizon_s,
        }
    }

    /// Evaluate at time t; errors outside the profile's domain.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if t < self.times_s[0] {
            return Err(Error::domain(format!(
                "profile for node {} undefined at t = {t} s (starts at {} s)",
                self.node, self.times_s[0]
            )));
        }
        // Index of the latest sample with time <= t.
        let k = match self.times_s.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        match self.interp {
            Interp::Step => Ok(self.values[k]),
            Interp::Linear => {
                if k + 1 == self.times_s.len() {
                    if t <= self.end_time() {
                        Ok(self.values[k])
                    } else {
                        Err(Error::domain(format!(
                            "profile for node {} undefined at t = {t} s (ends at {} s)",
                            self.node,
                            self.end_time()
                        )))
                    }
                } else {
                    let (t0, t1) = (self.times_s[k], self.times_s[k + 1]);
                    let w = (t - t0) / (t1 - t0);
                    Ok(self.values[k] + w * (self.values[k + 1] - self.values[k]))
                }
            }
        }
    }

    /// Time average over [0, horizon] using the profile's own interpolation
    /// (exact for both step and linear pieces).
    pub fn mean(&self, horizon_s: f64) -> Result<f64> {
        if horizon_s <= 0.0 {
            return self.eval(0.0);
        }
        let mut knots: Vec<f64> = vec![0.0];
        knots.extend(
            self.times_s
                .iter()
                .copied()
                .filter(|&t| t > 0.0 && t < horizon_s),
        );
        knots.push(horizon_s);
        let mut acc = 0.0;
        for w in knots.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let v = match self.interp {
                Interp::Step => self.eval(w[0])?,
                Interp::Linear => self.eval(mid)?,
            };
            acc += v * (w[1] - w[0]);
        }
        Ok(acc / horizon_s)
    }

    /// Resample onto an explicit time grid, preserving nothing but values
    /// (used to put noise stages on a common grid).
    pub fn resample_step(&self, grid: &[f64]) -> Result<Profile> {
        let values = grid.iter().map(|&t| self.eval(t)).collect::<Result<Vec<_>>>()?;
        Profile::new(self.node, grid.to_vec(), values, Interp::Step)
    }

    /// Read a two-column CSV (`time_s,flow_kg_s`, header required).
    pub fn from_csv(path: impl AsRef<Path>, node: u32, interp: Interp) -> Result<Profile> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| {
            Error::Parse(format!("profile csv {}: {e}", path.display()))
        })?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record =
                record.map_err(|e| Error::Parse(format!("profile csv {}: {e}", path.display())))?;
            if record.len() < 2 {
                return Err(Error::Parse(format!(
                    "profile csv {}: expected two columns time_s,flow_kg_s",
                    path.display()
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("profile csv {}: {e}", path.display())))
            };
            times.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
        }
        Profile::new(node, times, values, interp)
    }
}

/// Per-node withdrawal functions d_n(t) [kg/s]; negative values inject.
/// Nodes without an entry (junctions) withdraw nothing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundarySet {
    withdrawals: BTreeMap<u32, Profile>,
    /// Supply nodes whose step control hit the configured max flow-rate.
    pub clipped_nodes: BTreeSet<u32>,
}

impl BoundarySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_withdrawal(&mut self, profile: Profile) {
        self.withdrawals.insert(profile.node, profile);
    }

    pub fn profiles(&self) -> impl Iterator<Item = &Profile> {
        self.withdrawals.values()
    }

    pub fn profile(&self, node: u32) -> Option<&Profile> {
        self.withdrawals.get(&node)
    }

    /// Withdrawal at node/time; zero for nodes without a profile.
    pub fn withdrawal(&self, node: u32, t: f64) -> Result<f64> {
        match self.withdrawals.get(&node) {
            Some(p) => p.eval(t),
            None => Ok(0.0),
        }
    }

    /// Net injection rate (negative of the withdrawal sum) at time t.
    pub fn net_injection(&self, t: f64) -> Result<f64> {
        let mut total = 0.0;
        for p in self.withdrawals.values() {
            total += p.eval(t)?;
        }
        Ok(-total)
    }

    pub fn covers(&self, horizon_s: f64) -> bool {
        self.withdrawals.values().all(|p| p.covers(horizon_s))
    }

    /// Boundary set frozen at the values it takes at time t (used for
    /// steady initialization and relaxation).
    pub fn frozen_at(&self, t: f64) -> Result<BoundarySet> {
        let mut out = BoundarySet::new();
        for p in self.withdrawals.values() {
            out.insert_withdrawal(Profile::constant(p.node, p.eval(t)?));
        }
        out.clipped_nodes = self.clipped_nodes.clone();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_holds_last_value() {
        let p = Profile::new(1, vec![0.0, 10.0], vec![5.0, 7.0], Interp::Step).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 5.0);
        assert_eq!(p.eval(9.999).unwrap(), 5.0);
        assert_eq!(p.eval(10.0).unwrap(), 7.0);
        assert_eq!(p.eval(1e9).unwrap(), 7.0);
        assert!(p.eval(-0.1).is_err());
    }

    #[test]
    fn linear_interpolates_and_bounds_domain() {
        let p = Profile::new(1, vec![0.0, 10.0], vec![0.0, 20.0], Interp::Linear).unwrap();
        assert_eq!(p.eval(5.0).unwrap(), 10.0);
        assert_eq!(p.eval(10.0).unwrap(), 20.0);
        assert!(p.eval(10.1).is_err());
    }

    #[test]
    fn rejects_unsorted_times() {
        assert!(Profile::new(1, vec![0.0, 0.0], vec![1.0, 2.0], Interp::Step).is_err());
        assert!(Profile::new(1, vec![1.0, 0.0], vec![1.0, 2.0], Interp::Step).is_err());
    }

    #[test]
    fn mean_is_exact_for_piecewise_shapes() {
        let step = Profile::new(1, vec![0.0, 50.0], vec![2.0, 4.0], Interp::Step).unwrap();
        assert!((step.mean(100.0).unwrap() - 3.0).abs() < 1e-12);
        let lin = Profile::new(1, vec![0.0, 100.0], vec![0.0, 10.0], Interp::Linear).unwrap();
        assert!((lin.mean(100.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_set_signs() {
        let mut bc = BoundarySet::new();
        bc.insert_withdrawal(Profile::constant(2, 10.0));
        bc.insert_withdrawal(Profile::constant(1, -10.0));
        assert_eq!(bc.withdrawal(2, 5.0).unwrap(), 10.0);
        assert_eq!(bc.withdrawal(3, 5.0).unwrap(), 0.0);
        assert_eq!(bc.net_injection(5.0).unwrap(), 0.0);
    }
}
