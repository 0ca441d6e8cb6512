//! Scenario composition: nominal profiles, stochastic perturbations,
//! insults, prescribed controls and demand curtailment.
//!
//! The composition order is fixed: base -> noise -> insults -> controls,
//! after which profiles are converted to the solver's withdrawal sign
//! convention. Noise applies to demand nodes; insults and supply steps act
//! on the profile in its natural sign (an insult `s -> s + Theta(t-T)
//! Gamma(t)` zeroes a supply with `Gamma = -s`).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::boundary::{BoundarySet, Interp, Profile};
use crate::error::{Error, Result};
use crate::network::{Network, NodeKind};
use crate::units::{DAY_S, HOUR_S};

// ---------------------------------------------------------------------------
// Specification types

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    Ou,
    Uniform,
}

/// Stochastic perturbation of demand profiles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// OU mean-reversion rate [1/s]; default one-hour correlation time.
    pub alpha_per_s: f64,
    /// Stationary variance target as a fraction of the squared mean
    /// withdrawal; gamma is calibrated per node unless given explicitly.
    pub variance_ratio: f64,
    /// Explicit OU noise intensity [kg/s per sqrt(s)], overriding the
    /// variance-ratio calibration when set.
    pub gamma_kg_s: Option<f64>,
    /// Uniform noise width as a fraction of the nominal value.
    pub width_fraction: f64,
    /// Base seed folded into the per-replica seed.
    pub seed: u64,
    /// Realization grid spacing [s].
    pub grid_dt_s: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            alpha_per_s: 1.0 / HOUR_S,
            variance_ratio: 0.01,
            gamma_kg_s: None,
            width_fraction: 0.05,
            seed: 0,
            grid_dt_s: 300.0,
        }
    }
}

/// Heaviside-gated perturbation of one node's profile at `start_s`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Insult {
    pub node: u32,
    pub start_s: f64,
    pub kind: InsultKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsultKind {
    /// s -> factor * s from T onward (factor 0 = full loss).
    Scale { factor: f64 },
    /// Linear ramp from 1 to `factor` over [T, T + duration].
    RampScale { factor: f64, duration_s: f64 },
    /// s -> s + delta from T onward.
    Offset { delta_kg_s: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    /// Add delta to a supply from the activation time onward, clipped at the
    /// node's configured max flow-rate.
    SupplyStep {
        node: u32,
        time_s: f64,
        delta_kg_s: f64,
    },
    /// Multiply withdrawals at the listed demand nodes by `factor` from the
    /// activation time onward.
    DemandCurtail {
        nodes: Vec<u32>,
        time_s: f64,
        factor: f64,
    },
}

impl ControlAction {
    pub fn time_s(&self) -> f64 {
        match self {
            ControlAction::SupplyStep { time_s, .. } => *time_s,
            ControlAction::DemandCurtail { time_s, .. } => *time_s,
        }
    }
}

/// Nominal profile source for one node, in the node's natural sign.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Constant {
        value_kg_s: f64,
    },
    Inline {
        times_s: Vec<f64>,
        values_kg_s: Vec<f64>,
        #[serde(default)]
        interp: Interp,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        interp: Interp,
    },
    /// Diurnal harmonics with an optional weekend modulation, sampled
    /// half-hourly with linear interpolation:
    /// mean * (1 + swing sin(theta) - sharpness cos(2 theta)) * w(t).
    /// `sharpness` > 0 deepens and narrows the daily peak while flattening
    /// the overnight valley (a duck-curve-like load shape); the phase is
    /// chosen so the value crosses the mean going up at `upcross_hour`.
    SyntheticWeek {
        mean_kg_s: f64,
        swing: f64,
        /// Hour of day at which the value crosses the mean going up.
        upcross_hour: f64,
        /// Second-harmonic amplitude (default 0: pure sinusoid).
        #[serde(default)]
        sharpness: f64,
        /// Multiplier applied on days 6 and 7.
        #[serde(default = "default_weekend_factor")]
        weekend_factor: f64,
        #[serde(default = "default_sample_dt")]
        sample_dt_s: f64,
    },
}

fn default_weekend_factor() -> f64 {
    1.0
}

fn default_sample_dt() -> f64 {
    1800.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaseProfile {
    pub node: u32,
    #[serde(flatten)]
    pub source: ProfileSource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub horizon_s: f64,
    pub base_profiles: Vec<BaseProfile>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub insults: Vec<Insult>,
    #[serde(default)]
    pub controls: Vec<ControlAction>,
}

impl Scenario {
    /// Earliest insult start, if any (the survival-time origin).
    pub fn first_insult_s(&self) -> Option<f64> {
        self.insults
            .iter()
            .map(|i| i.start_s)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// Copy with the stochastic stage removed; used to build the shared
    /// deterministic initial state of an ensemble.
    pub fn without_noise(&self) -> Scenario {
        let mut s = self.clone();
        s.noise.kind = NoiseKind::None;
        s
    }
}

// ---------------------------------------------------------------------------
// Operations

/// gamma such that the stationary variance gamma^2 / (2 alpha) equals
/// variance_ratio * mu^2.
pub fn calibrate_ou(mu: f64, variance_ratio: f64, alpha: f64) -> f64 {
    mu * (2.0 * alpha * variance_ratio).sqrt()
}

/// Exact-discretization Ornstein-Uhlenbeck sample path around the nominal
/// profile `d`, realized on a uniform grid of spacing `dt` over
/// [0, horizon].
///
/// The deviation Y = X - d(t) follows dY = -alpha Y dt + gamma dW, so the
/// ensemble mean equals d(t) at every sample and the stationary variance is
/// gamma^2 / (2 alpha). X(0) = d(0).
pub fn ou_sample_path(
    d: &Profile,
    alpha: f64,
    gamma: f64,
    dt: f64,
    seed: u64,
    horizon_s: f64,
) -> Result<Profile> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("OU alpha must be > 0, got {alpha}")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::domain(format!("OU gamma must be >= 0, got {gamma}")));
    }
    if !(dt > 0.0) {
        return Err(Error::domain(format!("OU grid dt must be > 0, got {dt}")));
    }
    let n = (horizon_s / dt).ceil() as usize + 1;
    let decay = (-alpha * dt).exp();
    let sigma_step = gamma * ((1.0 - decay * decay) / (2.0 * alpha)).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(d.node));

    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut deviation = 0.0;
    for k in 0..n {
        let t = (k as f64 * dt).min(horizon_s);
        if k > 0 {
            let xi: f64 = rng.sample(StandardNormal);
            deviation = deviation * decay + sigma_step * xi;
        }
        times.push(t);
        values.push(d.eval(t)? + deviation);
    }
    Profile::new(d.node, times, values, Interp::Step)
}

/// Perturb every sample of `d` by an independent uniform draw on
/// [-w/2, +w/2] of the nominal value.
pub fn uniform_noise(d: &Profile, width_fraction: f64, seed: u64) -> Result<Profile> {
    if !(width_fraction >= 0.0) {
        return Err(Error::domain(format!(
            "uniform noise width must be >= 0, got {width_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(d.node));
    let half = 0.5 * width_fraction;
    let values = d
        .values()
        .iter()
        .map(|&v| v * (1.0 + rng.gen_range(-half..=half)))
        .collect();
    Profile::new(d.node, d.times().to_vec(), values, d.interp)
}

/// Multiplier/offset view of an insult at time t.
fn insult_gain_offset(kind: &InsultKind, start: f64, t: f64) -> (f64, f64) {
    if t < start {
        return (1.0, 0.0);
    }
    match kind {
        InsultKind::Scale { factor } => (*factor, 0.0),
        InsultKind::RampScale { factor, duration_s } => {
            if *duration_s <= 0.0 || t >= start + duration_s {
                (*factor, 0.0)
            } else {
                let w = (t - start) / duration_s;
                (1.0 + w * (factor - 1.0), 0.0)
            }
        }
        InsultKind::Offset { delta_kg_s } => (1.0, *delta_kg_s),
    }
}

/// Breakpoints an insult introduces (for exact sample placement).
fn insult_breakpoints(insult: &Insult) -> Vec<f64> {
    match insult.kind {
        InsultKind::RampScale { duration_s, .. } if duration_s > 0.0 => {
            // Resolve the ramp at one-minute granularity.
            let mut pts = Vec::new();
            let n = ((duration_s / 60.0).ceil() as usize).max(1);
            for k in 0..=n {
                pts.push(insult.start_s + duration_s * k as f64 / n as f64);
            }
            pts
        }
        _ => vec![insult.start_s],
    }
}

fn with_breakpoints(p: &Profile, breakpoints: &[f64]) -> Result<Profile> {
    let mut times: Vec<f64> = p.times().to_vec();
    for &b in breakpoints {
        if b > p.start_time() && times.binary_search_by(|x| x.partial_cmp(&b).unwrap()).is_err() {
            let pos = times.partition_point(|&x| x < b);
            if matches!(p.interp, Interp::Linear) && b > p.end_time() {
                continue;
            }
            times.insert(pos, b);
        }
    }
    let values = times.iter().map(|&t| p.eval(t)).collect::<Result<Vec<_>>>()?;
    Profile::new(p.node, times, values, p.interp)
}

/// Apply `s -> s + Theta(t - T) Gamma(t)`; the output equals the input for
/// t < T exactly (a breakpoint is inserted at T).
pub fn apply_insult(p: &Profile, insult: &Insult) -> Result<Profile> {
    if insult.node != p.node {
        return Err(Error::validation(format!(
            "insult targets node {}, profile belongs to node {}",
            insult.node, p.node
        )));
    }
    let base = with_breakpoints(p, &insult_breakpoints(insult))?;
    let values = base
        .times()
        .iter()
        .zip(base.values())
        .map(|(&t, &v)| {
            let (gain, offset) = insult_gain_offset(&insult.kind, insult.start_s, t);
            v * gain + offset
        })
        .collect();
    Profile::new(base.node, base.times().to_vec(), values, base.interp)
}

/// Apply a control action to one profile. Returns the transformed profile
/// and whether a supply step was clipped at the max flow-rate.
pub fn apply_control(
    p: &Profile,
    action: &ControlAction,
    max_flow_kg_s: Option<f64>,
) -> Result<(Profile, bool)> {
    match action {
        ControlAction::SupplyStep {
            node,
            time_s,
            delta_kg_s,
        } => {
            if *node != p.node {
                return Err(Error::validation(format!(
                    "supply step targets node {node}, profile belongs to node {}",
                    p.node
                )));
            }
            let base = with_breakpoints(p, &[*time_s])?;
            let mut clipped = false;
            let values = base
                .times()
                .iter()
                .zip(base.values())
                .map(|(&t, &v)| {
                    if t < *time_s {
                        v
                    } else {
                        let stepped = v + delta_kg_s;
                        match max_flow_kg_s {
                            Some(cap) if stepped > cap => {
                                clipped = true;
                                cap
                            }
                            _ => stepped,
                        }
                    }
                })
                .collect();
            Ok((
                Profile::new(base.node, base.times().to_vec(), values, base.interp)?,
                clipped,
            ))
        }
        ControlAction::DemandCurtail { time_s, factor, .. } => {
            if !(0.0..=1.0).contains(factor) {
                return Err(Error::validation(format!(
                    "curtailment factor must be in [0, 1], got {factor}"
                )));
            }
            let base = with_breakpoints(p, &[*time_s])?;
            let values = base
                .times()
                .iter()
                .zip(base.values())
                .map(|(&t, &v)| if t < *time_s { v } else { v * factor })
                .collect();
            Ok((
                Profile::new(base.node, base.times().to_vec(), values, base.interp)?,
                false,
            ))
        }
    }
}

/// Generate the synthetic nominal week for one node.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_week(
    node: u32,
    mean_kg_s: f64,
    swing: f64,
    upcross_hour: f64,
    sharpness: f64,
    weekend_factor: f64,
    sample_dt_s: f64,
    horizon_s: f64,
) -> Result<Profile> {
    if !(mean_kg_s >= 0.0) || !(swing >= 0.0) || swing + sharpness >= 1.0 || sharpness < 0.0 {
        return Err(Error::validation(format!(
            "synthetic week for node {node}: need mean >= 0, swing >= 0, sharpness >= 0, \
             swing + sharpness < 1"
        )));
    }
    // Phase such that the mean upcross lands at `upcross_hour`:
    // swing sin(th) = sharpness (1 - 2 sin(th)^2) at the rising root.
    let theta_up = if sharpness > 0.0 {
        let s = (-swing + (swing * swing + 8.0 * sharpness * sharpness).sqrt()) / (4.0 * sharpness);
        s.asin()
    } else {
        0.0
    };
    let omega = 2.0 * std::f64::consts::PI / 24.0;
    let t_ref = upcross_hour - theta_up / omega;
    let n = (horizon_s / sample_dt_s).ceil() as usize + 1;
    let mut times = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        let t = (k as f64 * sample_dt_s).min(horizon_s);
        let theta = omega * (t / HOUR_S - t_ref);
        let diurnal = 1.0 + swing * theta.sin() - sharpness * (2.0 * theta).cos();
        let day = (t / DAY_S).floor() as u64 % 7;
        let weekly = if day >= 5 { weekend_factor } else { 1.0 };
        times.push(t);
        values.push(mean_kg_s * diurnal * weekly);
    }
    Profile::new(node, times, values, Interp::Linear)
}

// ---------------------------------------------------------------------------
// Composition

fn realize_base(network: &Network, base: &BaseProfile, horizon_s: f64) -> Result<Profile> {
    let node = network.require_node(base.node)?;
    if node.kind == NodeKind::Junction {
        return Err(Error::validation(format!(
            "node {} is a junction and cannot carry a base profile",
            node.id
        )));
    }
    let profile = match &base.source {
        ProfileSource::Constant { value_kg_s } => Profile::constant(base.node, *value_kg_s),
        ProfileSource::Inline {
            times_s,
            values_kg_s,
            interp,
        } => Profile::new(base.node, times_s.clone(), values_kg_s.clone(), *interp)?,
        ProfileSource::Csv { path, interp } => Profile::from_csv(path, base.node, *interp)?,
        ProfileSource::SyntheticWeek {
            mean_kg_s,
            swing,
            upcross_hour,
            sharpness,
            weekend_factor,
            sample_dt_s,
        } => synthetic_week(
            base.node,
            *mean_kg_s,
            *swing,
            *upcross_hour,
            *sharpness,
            *weekend_factor,
            *sample_dt_s,
            horizon_s,
        )?,
    };
    if !profile.covers(horizon_s) {
        return Err(Error::validation(format!(
            "base profile for node {} does not cover the horizon ({} s)",
            base.node, horizon_s
        )));
    }
    Ok(profile)
}

fn validate_scenario(network: &Network, scenario: &Scenario) -> Result<()> {
    if !(scenario.horizon_s >= 0.0) {
        return Err(Error::validation("scenario horizon must be >= 0"));
    }
    let mut seen = BTreeSet::new();
    for base in &scenario.base_profiles {
        if !seen.insert(base.node) {
            return Err(Error::validation(format!(
                "node {} has more than one base profile",
                base.node
            )));
        }
    }
    for insult in &scenario.insults {
        network.require_node(insult.node)?;
        if !(0.0..=scenario.horizon_s).contains(&insult.start_s) {
            return Err(Error::validation(format!(
                "insult at node {} starts outside the horizon",
                insult.node
            )));
        }
        if !seen.contains(&insult.node) {
            return Err(Error::validation(format!(
                "insult at node {} without a base profile",
                insult.node
            )));
        }
    }
    let first_insult = scenario.first_insult_s();
    for control in &scenario.controls {
        let nodes: Vec<u32> = match control {
            ControlAction::SupplyStep { node, .. } => vec![*node],
            ControlAction::DemandCurtail { nodes, .. } => nodes.clone(),
        };
        for id in nodes {
            let node = network.require_node(id)?;
            match (control, node.kind) {
                (ControlAction::SupplyStep { .. }, NodeKind::Supply) => {}
                (ControlAction::DemandCurtail { .. }, NodeKind::Demand) => {}
                _ => {
                    return Err(Error::validation(format!(
                        "control kind does not match node {} kind {:?}",
                        id, node.kind
                    )))
                }
            }
        }
        if !(0.0..=scenario.horizon_s).contains(&control.time_s()) {
            return Err(Error::validation(
                "control activation outside the horizon".to_string(),
            ));
        }
        if let Some(t0) = first_insult {
            if control.time_s() < t0 {
                return Err(Error::validation(format!(
                    "control at t = {} s activates before the earliest insult at {} s",
                    control.time_s(),
                    t0
                )));
            }
        }
    }
    Ok(())
}

/// Metadata produced alongside the boundary set.
#[derive(Debug, Clone, Default)]
pub struct ComposeMeta {
    pub clipped_nodes: Vec<u32>,
}

/// Deterministic pipeline base -> noise -> insults -> controls, evaluated
/// into withdrawal profiles. `seed` is the replica seed; per-node streams
/// are independent substreams of one seeded generator.
pub fn compose(network: &Network, scenario: &Scenario, seed: u64) -> Result<(BoundarySet, ComposeMeta)> {
    validate_scenario(network, scenario).map_err(|e| stage_error("validation", e))?;

    // Base stage.
    let mut profiles: Vec<Profile> = scenario
        .base_profiles
        .iter()
        .map(|b| realize_base(network, b, scenario.horizon_s))
        .collect::<Result<_>>()
        .map_err(|e| stage_error("base", e))?;

    // Noise stage (demand nodes only).
    let noise_seed = seed ^ scenario.noise.seed;
    for profile in profiles.iter_mut() {
        let node = network.require_node(profile.node)?;
        if node.kind != NodeKind::Demand {
            continue;
        }
        match scenario.noise.kind {
            NoiseKind::None => {}
            NoiseKind::Ou => {
                let gamma = match scenario.noise.gamma_kg_s {
                    Some(g) => g,
                    None => calibrate_ou(
                        profile.mean(scenario.horizon_s).map_err(|e| stage_error("noise", e))?,
                        scenario.noise.variance_ratio,
                        scenario.noise.alpha_per_s,
                    ),
                };
                *profile = ou_sample_path(
                    profile,
                    scenario.noise.alpha_per_s,
                    gamma,
                    scenario.noise.grid_dt_s,
                    noise_seed,
                    scenario.horizon_s,
                )
                .map_err(|e| stage_error("noise", e))?;
            }
            NoiseKind::Uniform => {
                let grid: Vec<f64> = {
                    let n = (scenario.horizon_s / scenario.noise.grid_dt_s).ceil() as usize + 1;
                    (0..n)
                        .map(|k| (k as f64 * scenario.noise.grid_dt_s).min(scenario.horizon_s))
                        .collect()
                };
                let on_grid = profile
                    .resample_step(&grid)
                    .map_err(|e| stage_error("noise", e))?;
                *profile = uniform_noise(&on_grid, scenario.noise.width_fraction, noise_seed)
                    .map_err(|e| stage_error("noise", e))?;
            }
        }
    }

    // Insult stage.
    for insult in &scenario.insults {
        let profile = profiles
            .iter_mut()
            .find(|p| p.node == insult.node)
            .expect("validated above");
        *profile = apply_insult(profile, insult).map_err(|e| stage_error("insult", e))?;
    }

    // Control stage.
    let mut clipped = BTreeSet::new();
    for control in &scenario.controls {
        match control {
            ControlAction::SupplyStep { node, .. } => {
                let max_flow = network.require_node(*node)?.max_flow_kg_s;
                let profile = profiles
                    .iter_mut()
                    .find(|p| p.node == *node)
                    .ok_or_else(|| {
                        stage_error(
                            "control",
                            Error::validation(format!("supply step at node {node} without a base profile")),
                        )
                    })?;
                let (updated, was_clipped) =
                    apply_control(profile, control, max_flow).map_err(|e| stage_error("control", e))?;
                *profile = updated;
                if was_clipped {
                    clipped.insert(*node);
                }
            }
            ControlAction::DemandCurtail { nodes, .. } => {
                for id in nodes {
                    let profile = profiles.iter_mut().find(|p| p.node == *id).ok_or_else(|| {
                        stage_error(
                            "control",
                            Error::validation(format!("curtailment at node {id} without a base profile")),
                        )
                    })?;
                    let (updated, _) =
                        apply_control(profile, control, None).map_err(|e| stage_error("control", e))?;
                    *profile = updated;
                }
            }
        }
    }

    // Sign conversion: withdrawals positive, supplies inject.
    let mut bc = BoundarySet::new();
    for profile in profiles {
        let node = network.require_node(profile.node)?;
        let withdrawal = match node.kind {
            NodeKind::Demand => profile,
            NodeKind::Supply => Profile::new(
                profile.node,
                profile.times().to_vec(),
                profile.values().iter().map(|v| -v).collect(),
                profile.interp,
            )?,
            NodeKind::Junction => unreachable!("validated above"),
        };
        bc.insert_withdrawal(withdrawal);
    }
    bc.clipped_nodes = clipped.clone();
    Ok((
        bc,
        ComposeMeta {
            clipped_nodes: clipped.into_iter().collect(),
        },
    ))
}

fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::Validation(msg) => Error::Validation(format!("[{stage}] {msg}")),
        Error::Domain(msg) => Error::Domain(format!("[{stage}] {msg}")),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Scenario file format (times in hours)

#[derive(Debug, Deserialize)]
struct NoiseDecl {
    #[serde(default)]
    kind: NoiseKind,
    #[serde(default)]
    alpha_per_s: Option<f64>,
    #[serde(default)]
    variance_ratio: Option<f64>,
    #[serde(default)]
    gamma_kg_s: Option<f64>,
    #[serde(default)]
    width_fraction: Option<f64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    grid_dt_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum InsultKindDecl {
    Scale { factor: f64 },
    RampScale { factor: f64, duration_h: f64 },
    Offset { delta_kg_s: f64 },
}

#[derive(Debug, Deserialize)]
struct InsultDecl {
    node: u32,
    start_h: f64,
    #[serde(flatten)]
    kind: InsultKindDecl,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ControlDecl {
    SupplyStep {
        node: u32,
        time_h: f64,
        delta_kg_s: f64,
    },
    DemandCurtail {
        nodes: Vec<u32>,
        time_h: f64,
        factor: f64,
    },
}

#[derive(Debug, Deserialize)]
struct ScenarioFile {
    name: String,
    horizon_h: f64,
    base_profiles: Vec<BaseProfile>,
    #[serde(default)]
    noise: Option<NoiseDecl>,
    #[serde(default)]
    insults: Vec<InsultDecl>,
    #[serde(default)]
    controls: Vec<ControlDecl>,
}

/// Load a scenario from JSON; relative CSV references resolve against the
/// scenario file's directory.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let file: ScenarioFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut base_profiles = file.base_profiles;
    for base in base_profiles.iter_mut() {
        if let ProfileSource::Csv { path: csv_path, .. } = &mut base.source {
            if csv_path.is_relative() {
                *csv_path = dir.join(&*csv_path);
            }
        }
    }

    let noise = match file.noise {
        None => NoiseSpec::default(),
        Some(decl) => {
            let defaults = NoiseSpec::default();
            NoiseSpec {
                kind: decl.kind,
                alpha_per_s: decl.alpha_per_s.unwrap_or(defaults.alpha_per_s),
                variance_ratio: decl.variance_ratio.unwrap_or(defaults.variance_ratio),
                gamma_kg_s: decl.gamma_kg_s,
                width_fraction: decl.width_fraction.unwrap_or(defaults.width_fraction),
                seed: decl.seed.unwrap_or(defaults.seed),
                grid_dt_s: decl.grid_dt_s.unwrap_or(defaults.grid_dt_s),
            }
        }
    };
    let scenario = Scenario {
        name: file.name,
        horizon_s: file.horizon_h * HOUR_S,
        base_profiles,
        noise,
        insults: file
            .insults
            .into_iter()
            .map(|i| Insult {
                node: i.node,
                start_s: i.start_h * HOUR_S,
                kind: match i.kind {
                    InsultKindDecl::Scale { factor } => InsultKind::Scale { factor },
                    InsultKindDecl::RampScale { factor, duration_h } => InsultKind::RampScale {
                        factor,
                        duration_s: duration_h * HOUR_S,
                    },
                    InsultKindDecl::Offset { delta_kg_s } => InsultKind::Offset { delta_kg_s },
                },
            })
            .collect(),
        controls: file
            .controls
            .into_iter()
            .map(|c| match c {
                ControlDecl::SupplyStep {
                    node,
                    time_h,
                    delta_kg_s,
                } => ControlAction::SupplyStep {
                    node,
                    time_s: time_h * HOUR_S,
                    delta_kg_s,
                },
                ControlDecl::DemandCurtail {
                    nodes,
                    time_h,
                    factor,
                } => ControlAction::DemandCurtail {
                    nodes,
                    time_s: time_h * HOUR_S,
                    factor,
                },
            })
            .collect(),
    };
    if !(scenario.noise.alpha_per_s > 0.0)
        || !(scenario.noise.variance_ratio >= 0.0)
        || !(scenario.noise.width_fraction >= 0.0)
    {
        return Err(Error::validation(format!(
            "{}: noise parameters out of range",
            path.display()
        )));
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Network, Node, Pipe};
    use crate::testutil::node;
    use approx::assert_relative_eq;

    fn three_node_network() -> Network {
        Network::new(
            vec![
                node(1, NodeKind::Supply),
                node(2, NodeKind::Junction),
                node(3, NodeKind::Demand),
            ],
            vec![
                Pipe {
                    id: 1,
                    from: 1,
                    to: 2,
                    length_m: 20_000.0,
                    diameter_m: 0.6,
                    friction: 0.01,
                },
                Pipe {
                    id: 2,
                    from: 2,
                    to: 3,
                    length_m: 20_000.0,
                    diameter_m: 0.6,
                    friction: 0.01,
                },
            ],
            None,
        )
        .unwrap()
    }

    fn supply_capped(max_flow: f64) -> Network {
        let mut supply = node(1, NodeKind::Supply);
        supply.max_flow_kg_s = Some(max_flow);
        Network::new(
            vec![
                supply,
                node(2, NodeKind::Junction),
                node(3, NodeKind::Demand),
            ],
            vec![
                Pipe {
                    id: 1,
                    from: 1,
                    to: 2,
                    length_m: 20_000.0,
                    diameter_m: 0.6,
                    friction: 0.01,
                },
                Pipe {
                    id: 2,
                    from: 2,
                    to: 3,
                    length_m: 20_000.0,
                    diameter_m: 0.6,
                    friction: 0.01,
                },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn calibrate_ou_examples() {
        assert_relative_eq!(
            calibrate_ou(10.0, 0.01, 1.0 / 3600.0),
            0.023570226039551584,
            max_relative = 1e-12
        );
        assert_eq!(calibrate_ou(10.0, 0.0, 1.0 / 3600.0), 0.0);
        let g1 = calibrate_ou(10.0, 0.01, 1.0 / 3600.0);
        let g2 = calibrate_ou(10.0, 0.02, 1.0 / 3600.0);
        assert_relative_eq!(g2, g1 * 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn ou_zero_gamma_reproduces_nominal() {
        let d = Profile::new(3, vec![0.0, 1800.0], vec![10.0, 12.0], Interp::Linear).unwrap();
        let path = ou_sample_path(&d, 1.0 / 3600.0, 0.0, 300.0, 42, 1800.0).unwrap();
        for (&t, &v) in path.times().iter().zip(path.values()) {
            assert_eq!(v, d.eval(t).unwrap());
        }
    }

    #[test]
    fn ou_stationary_variance_and_mean() {
        // 10^4 paths at t >> 1/alpha: variance within 10% of gamma^2/(2 alpha),
        // mean within 2 standard errors.
        let alpha = 1.0 / 600.0;
        let mu = 10.0;
        let gamma = calibrate_ou(mu, 0.01, alpha);
        let d = Profile::constant(3, mu);
        let horizon = 6.0 * 600.0;
        let dt = 60.0;
        let n_paths = 10_000;
        let mut finals = Vec::with_capacity(n_paths);
        for seed in 0..n_paths as u64 {
            let p = ou_sample_path(&d, alpha, gamma, dt, seed, horizon).unwrap();
            finals.push(*p.values().last().unwrap());
        }
        let mean = finals.iter().sum::<f64>() / n_paths as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n_paths - 1) as f64;
        let target = gamma * gamma / (2.0 * alpha);
        assert!(
            (var - target).abs() / target < 0.10,
            "var {var:.6e} vs target {target:.6e}"
        );
        let se = (target / n_paths as f64).sqrt();
        assert!((mean - mu).abs() < 2.0 * se, "mean {mean} vs {mu} (se {se})");
    }

    #[test]
    fn uniform_noise_properties() {
        let d = Profile::new(
            3,
            (0..100).map(|k| k as f64 * 60.0).collect(),
            vec![20.0; 100],
            Interp::Step,
        )
        .unwrap();
        let identity = uniform_noise(&d, 0.0, 7).unwrap();
        assert_eq!(identity.values(), d.values());
        let noised = uniform_noise(&d, 0.05, 7).unwrap();
        for v in noised.values() {
            assert!((v - 20.0).abs() <= 20.0 * 0.025 + 1e-12);
        }
        let again = uniform_noise(&d, 0.05, 7).unwrap();
        assert_eq!(noised.values(), again.values());
        let other = uniform_noise(&d, 0.05, 8).unwrap();
        assert_ne!(noised.values(), other.values());
    }

    #[test]
    fn insult_full_loss_and_identity() {
        let s = Profile::constant(1, 10.0);
        let full = apply_insult(
            &s,
            &Insult {
                node: 1,
                start_s: 100.0,
                kind: InsultKind::Scale { factor: 0.0 },
            },
        )
        .unwrap();
        assert_eq!(full.eval(99.9).unwrap(), 10.0);
        assert_eq!(full.eval(100.0).unwrap(), 0.0);
        assert_eq!(full.eval(500.0).unwrap(), 0.0);

        let identity = apply_insult(
            &s,
            &Insult {
                node: 1,
                start_s: 100.0,
                kind: InsultKind::Offset { delta_kg_s: 0.0 },
            },
        )
        .unwrap();
        for t in [0.0, 99.0, 100.0, 1000.0] {
            assert_eq!(identity.eval(t).unwrap(), 10.0);
        }

        let half = apply_insult(
            &s,
            &Insult {
                node: 1,
                start_s: 36.0 * HOUR_S,
                kind: InsultKind::Scale { factor: 0.5 },
            },
        )
        .unwrap();
        assert_eq!(half.eval(36.0 * HOUR_S - 1.0).unwrap(), 10.0);
        assert_eq!(half.eval(36.0 * HOUR_S).unwrap(), 5.0);
    }

    #[test]
    fn ramp_insult_is_linear_in_between() {
        let s = Profile::constant(1, 10.0);
        let ramp = apply_insult(
            &s,
            &Insult {
                node: 1,
                start_s: 0.0,
                kind: InsultKind::RampScale {
                    factor: 0.0,
                    duration_s: 3600.0,
                },
            },
        )
        .unwrap();
        assert_relative_eq!(ramp.eval(1800.0).unwrap(), 5.0, max_relative = 1e-9);
        assert_eq!(ramp.eval(3600.0).unwrap(), 0.0);
    }

    #[test]
    fn control_step_clips_and_flags() {
        let s = Profile::constant(1, 200.0);
        let action = ControlAction::SupplyStep {
            node: 1,
            time_s: 1800.0,
            delta_kg_s: 300.0,
        };
        let (stepped, clipped) = apply_control(&s, &action, Some(300.0)).unwrap();
        assert!(clipped);
        assert_eq!(stepped.eval(0.0).unwrap(), 200.0);
        assert_eq!(stepped.eval(1800.0).unwrap(), 300.0);

        let (identity, clipped) = apply_control(
            &s,
            &ControlAction::SupplyStep {
                node: 1,
                time_s: 1800.0,
                delta_kg_s: 0.0,
            },
            Some(1e9),
        )
        .unwrap();
        assert!(!clipped);
        assert_eq!(identity.eval(5000.0).unwrap(), 200.0);
    }

    #[test]
    fn curtail_identity_at_factor_one() {
        let d = Profile::constant(3, 50.0);
        let (out, _) = apply_control(
            &d,
            &ControlAction::DemandCurtail {
                nodes: vec![3],
                time_s: 100.0,
                factor: 1.0,
            },
            None,
        )
        .unwrap();
        for t in [0.0, 99.0, 100.0, 300.0] {
            assert_eq!(out.eval(t).unwrap(), 50.0);
        }
    }

    #[test]
    fn compose_without_stages_matches_base() {
        let network = three_node_network();
        let scenario = Scenario {
            name: "plain".into(),
            horizon_s: 3600.0,
            base_profiles: vec![
                BaseProfile {
                    node: 1,
                    source: ProfileSource::Constant { value_kg_s: 30.0 },
                },
                BaseProfile {
                    node: 3,
                    source: ProfileSource::Constant { value_kg_s: 30.0 },
                },
            ],
            noise: NoiseSpec::default(),
            insults: vec![],
            controls: vec![],
        };
        let (bc, meta) = compose(&network, &scenario, 0).unwrap();
        assert!(meta.clipped_nodes.is_empty());
        assert_eq!(bc.withdrawal(1, 1000.0).unwrap(), -30.0);
        assert_eq!(bc.withdrawal(3, 1000.0).unwrap(), 30.0);
        assert_eq!(bc.withdrawal(2, 1000.0).unwrap(), 0.0);
    }

    #[test]
    fn compose_is_deterministic_per_seed() {
        let network = three_node_network();
        let scenario = Scenario {
            name: "noisy".into(),
            horizon_s: 7200.0,
            base_profiles: vec![
                BaseProfile {
                    node: 1,
                    source: ProfileSource::Constant { value_kg_s: 30.0 },
                },
                BaseProfile {
                    node: 3,
                    source: ProfileSource::Constant { value_kg_s: 30.0 },
                },
            ],
            noise: NoiseSpec {
                kind: NoiseKind::Ou,
                ..NoiseSpec::default()
            },
            insults: vec![Insult {
                node: 1,
                start_s: 3600.0,
                kind: InsultKind::Scale { factor: 0.0 },
            }],
            controls: vec![],
        };
        let (a, _) = compose(&network, &scenario, 11).unwrap();
        let (b, _) = compose(&network, &scenario, 11).unwrap();
        assert_eq!(a, b);
        let (c, _) = compose(&network, &scenario, 12).unwrap();
        assert_ne!(a, c);
        // Insult took effect on the supply side.
        assert_eq!(a.withdrawal(1, 3599.0).unwrap(), -30.0);
        assert_eq!(a.withdrawal(1, 3600.0).unwrap(), 0.0);
    }

    #[test]
    fn offsetting_control_reproduces_uninsulted_values() {
        let network = supply_capped(1e9);
        let base = vec![
            BaseProfile {
                node: 1,
                source: ProfileSource::Constant { value_kg_s: 30.0 },
            },
            BaseProfile {
                node: 3,
                source: ProfileSource::Constant { value_kg_s: 30.0 },
            },
        ];
        let plain = Scenario {
            name: "plain".into(),
            horizon_s: 7200.0,
            base_profiles: base.clone(),
            noise: NoiseSpec::default(),
            insults: vec![],
            controls: vec![],
        };
        let offset = Scenario {
            name: "offset".into(),
            horizon_s: 7200.0,
            base_profiles: base,
            noise: NoiseSpec::default(),
            insults: vec![Insult {
                node: 1,
                start_s: 3600.0,
                kind: InsultKind::Scale { factor: 0.0 },
            }],
            controls: vec![ControlAction::SupplyStep {
                node: 1,
                time_s: 3600.0,
                delta_kg_s: 30.0,
            }],
        };
        let (bc_plain, _) = compose(&network, &plain, 5).unwrap();
        let (bc_offset, _) = compose(&network, &offset, 5).unwrap();
        let mut t = 0.0;
        while t <= 7200.0 {
            let a = bc_plain.withdrawal(1, t).unwrap();
            let b = bc_offset.withdrawal(1, t).unwrap();
            assert!(a == b, "t = {t}: {a} vs {b}");
            t += 60.0;
        }
    }

    #[test]
    fn control_before_insult_rejected() {
        let network = three_node_network();
        let scenario = Scenario {
            name: "bad".into(),
            horizon_s: 7200.0,
            base_profiles: vec![
                BaseProfile {
                    node: 1,
                    source: ProfileSource::Constant { value_kg_s: 30.0 },
                },
                BaseProfile {
                    node: 3,
                    source: ProfileSource::Constant { value_kg_s: 30.0 },
                },
            ],
            noise: NoiseSpec::default(),
            insults: vec![Insult {
                node: 1,
                start_s: 3600.0,
                kind: InsultKind::Scale { factor: 0.0 },
            }],
            controls: vec![ControlAction::SupplyStep {
                node: 1,
                time_s: 1800.0,
                delta_kg_s: 10.0,
            }],
        };
        assert!(compose(&network, &scenario, 0).is_err());
    }

    #[test]
    fn synthetic_week_crosses_mean_at_upcross_hour() {
        let p = synthetic_week(3, 100.0, 0.3, 12.0, 0.0, 1.0, 1800.0, 7.0 * DAY_S).unwrap();
        // t = 36 h is 12:00 of day two: exactly the mean.
        assert_relative_eq!(p.eval(36.0 * HOUR_S).unwrap(), 100.0, max_relative = 1e-12);
        // Peak six hours later.
        assert_relative_eq!(
            p.eval(42.0 * HOUR_S).unwrap(),
            130.0,
            max_relative = 1e-9
        );
        // Exactly 24 h periodic.
        for k in [10, 60, 120] {
            let t = k as f64 * 1800.0;
            assert_relative_eq!(
                p.eval(t).unwrap(),
                p.eval(t + DAY_S).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn synthetic_week_sharpness_keeps_mean_and_upcross() {
        let p = synthetic_week(3, 100.0, 0.24, 12.0, 0.16, 1.0, 1800.0, 7.0 * DAY_S).unwrap();
        // Zero-mean harmonics: the daily average stays at the mean.
        assert_relative_eq!(p.mean(DAY_S).unwrap(), 100.0, max_relative = 1e-9);
        // Mean upcross at 12:00 (t = 36 h is 12:00 of day two).
        assert_relative_eq!(p.eval(36.0 * HOUR_S).unwrap(), 100.0, max_relative = 1e-9);
        assert!(p.eval(36.5 * HOUR_S).unwrap() > 100.0);
        assert!(p.eval(35.5 * HOUR_S).unwrap() < 100.0);
    }
}
