//! Built-in verification battery: equation-of-state round trip, the
//! steady-pipe closed-form oracle, a refinement-order study, discrete mass
//! conservation, and empirical monotonicity pairs. The CLI `verify`
//! subcommand prints one line per check; the acceptance suite reuses the
//! same routines.

use crate::boundary::{BoundarySet, Profile};
use crate::error::Result;
use crate::gas::{density_from_pressure, pressure_from_density, EosKernel, GasProperties};
use crate::grid::discretize;
use crate::metrics::{check_monotonicity, DEFAULT_THRESHOLD_PA};
use crate::network::{Network, Node, NodeKind, Pipe};
use crate::scenario::{compose, Insult, InsultKind, Scenario};
use crate::sim::{init_state, simulate, simulate_from, DtPolicy, SolverConfig};
use crate::solver::Solver;
use crate::state::SystemState;
use crate::units::HOUR_S;

/// Monotonicity tolerance: 1e-6 bar.
pub const MONOTONICITY_TOL_PA: f64 = 1e-6 * 1e5;
/// Mass-conservation bookkeeping tolerance (relative).
pub const CONSERVATION_TOL: f64 = 1e-9;
/// Minimum acceptable observed convergence order.
pub const MIN_OBSERVED_ORDER: f64 = 1.8;
/// Steady-pipe oracle tolerance (relative).
pub const STEADY_PIPE_TOL: f64 = 5e-3;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub requirement: String,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:<28} measured {:>12.4e}  ({}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.requirement,
            self.detail
        )
    }
}

/// Round-trip the equation of state over a density grid.
pub fn eos_round_trip() -> CheckResult {
    let props = GasProperties::default_cnga();
    let mut worst: f64 = 0.0;
    let mut rho = 0.1;
    while rho <= 100.0 {
        let p = pressure_from_density(rho, &props).unwrap();
        let back = density_from_pressure(p, &props).unwrap();
        worst = worst.max(((back - rho) / rho).abs());
        rho += 0.1;
    }
    CheckResult {
        name: "eos round trip".into(),
        passed: worst < 1e-9,
        measured: worst,
        requirement: "< 1e-9 relative".into(),
        detail: "rho in [0.1, 100] kg/m3, CNGA".into(),
    }
}

fn steady_pipe_network(length_m: f64, diameter_m: f64) -> Network {
    let node = |id: u32, kind| Node {
        id,
        name: format!("n{id}"),
        kind,
        p_min_pa: 1e5,
        p_max_pa: 200e5,
        elevation_m: 0.0,
        max_flow_kg_s: None,
    };
    Network::new(
        vec![node(1, NodeKind::Supply), node(2, NodeKind::Demand)],
        vec![Pipe {
            id: 1,
            from: 1,
            to: 2,
            length_m,
            diameter_m,
            friction: 0.01,
        }],
        None,
    )
    .unwrap()
}

/// Time-march a single ideal-gas pipe from uniform rest to steady state and
/// compare against p_in^2 - p_out^2 = (lambda L / D) R T phi |phi|.
///
/// The march starts from a uniform state, not from the algebraic steady
/// solve, so the oracle is independent of the initialization path.
pub fn steady_pipe_oracle() -> Vec<CheckResult> {
    let cases = [
        (50_000.0, 0.6, 40.0),
        (80_000.0, 0.9, 150.0),
        (20_000.0, 0.45, 25.0),
    ];
    let props = GasProperties::default_ideal();
    let rt = props.r_specific * props.temperature_k;
    cases
        .iter()
        .map(|&(length, diameter, m_dot)| {
            let network = steady_pipe_network(length, diameter);
            let grids = discretize(&network, 500.0).unwrap();
            let mut solver = Solver::new(&network, &grids, props).unwrap();
            let mut bc = BoundarySet::new();
            bc.insert_withdrawal(Profile::constant(1, -m_dot));
            bc.insert_withdrawal(Profile::constant(2, m_dot));
            let mut state = SystemState::uniform(&network, &grids, 55.0);
            // March 24 simulated hours; transients on a pipe this size decay
            // within a couple of acoustic crossing times under friction.
            let horizon = 24.0 * HOUR_S;
            while state.time_s < horizon {
                let dt = solver.cfl_dt(&state, 0.8).unwrap().min(horizon - state.time_s);
                solver.advance(&mut state, &bc, dt).unwrap();
            }
            let eos = EosKernel::new(&props);
            let p = state.node_pressures(&eos);
            let pipe = &network.pipes[0];
            let phi = m_dot / pipe.area_m2();
            let expected = pipe.friction * pipe.length_m / pipe.diameter_m * rt * phi * phi.abs();
            let measured = p[0] * p[0] - p[1] * p[1];
            let rel = ((measured - expected) / expected).abs();
            CheckResult {
                name: format!("steady pipe L={:.0}km D={:.0}mm", length / 1000.0, diameter * 1000.0),
                passed: rel < STEADY_PIPE_TOL,
                measured: rel,
                requirement: format!("< {STEADY_PIPE_TOL:.1e} relative"),
                detail: format!("m = {m_dot} kg/s, p drop {:.2} bar", (p[0] - p[1]) / 1e5),
            }
        })
        .collect()
}

/// Self-convergence refinement study on a smooth single-pipe problem:
/// steady base flow plus a Gaussian density bump, ideal gas, fixed dt
/// proportional to dx. Returns the observed order from the finest grid pair.
///
/// The friction factor is lowered for this study so the acoustic
/// perturbation survives long enough to accumulate truncation error well
/// above round-off (the damping rate is 2 beta phi0 / rho0).
pub fn refinement_order() -> CheckResult {
    let length = 40_000.0;
    let mut network = steady_pipe_network(length, 0.6);
    network.pipes[0].friction = 0.002;
    let network = Network::new(network.nodes.clone(), network.pipes.clone(), None).unwrap();
    let props = GasProperties::default_ideal();
    let rt = props.r_specific * props.temperature_k;
    let m_dot = 40.0;
    let area = network.pipes[0].area_m2();
    let phi0 = m_dot / area;
    let lambda_over_d = network.pipes[0].friction / network.pipes[0].diameter_m;
    let p_in: f64 = 70e5;
    // Continuum steady profile p(x)^2 = p_in^2 - (lambda/D) R T phi^2 x
    // (an exact discrete steady state of this scheme in ideal-gas mode),
    // plus a smooth bump that keeps phi positive throughout.
    let rho_exact = |x: f64| {
        let p2 = p_in * p_in - lambda_over_d * rt * phi0 * phi0 * x;
        let base = p2.sqrt() / rt;
        let center = 0.5 * length;
        let width = length / 8.0;
        base + 0.2 * (-((x - center) / width).powi(2)).exp()
    };

    let t_final = 240.0;
    let dxs = [2000.0, 1000.0, 500.0, 250.0];
    let mut solutions: Vec<Vec<f64>> = Vec::new();
    for &dx in &dxs {
        let grids = discretize(&network, dx).unwrap();
        let grid = &grids[0];
        let mut solver = Solver::new(&network, &grids, props).unwrap();
        let mut state = SystemState::uniform(&network, &grids, 1.0);
        // Sample the analytic initial condition.
        state.node_rho[0] = rho_exact(0.0);
        state.node_rho[1] = rho_exact(length);
        for (j, x) in grid.cell_centers().iter().enumerate() {
            state.fields[0].rho[j] = rho_exact(*x);
        }
        for k in 0..grid.n_flux() {
            state.fields[0].phi[k] = phi0;
        }
        let mut bc = BoundarySet::new();
        bc.insert_withdrawal(Profile::constant(1, -m_dot));
        bc.insert_withdrawal(Profile::constant(2, m_dot));

        let dt_bound = solver.conservative_dt(0.8).unwrap();
        let n_steps = (t_final / dt_bound).ceil() as usize;
        let dt = t_final / n_steps as f64;
        for _ in 0..n_steps {
            solver.advance(&mut state, &bc, dt).unwrap();
        }
        solutions.push(state.fields[0].rho.clone());
    }

    // L2 differences on the shared coarse points (refinement factor 2).
    let mut errors = Vec::new();
    for lvl in 0..solutions.len() - 1 {
        let coarse = &solutions[lvl];
        let fine = &solutions[lvl + 1];
        let dx = dxs[lvl];
        let mut acc = 0.0;
        for (i, c) in coarse.iter().enumerate() {
            let f = fine[2 * (i + 1) - 1]; // interior index of the same x
            acc += (c - f) * (c - f) * dx;
        }
        errors.push((acc / length).sqrt());
    }
    let orders: Vec<f64> = errors
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    let observed = *orders.last().unwrap();
    CheckResult {
        name: "refinement order".into(),
        passed: observed >= MIN_OBSERVED_ORDER,
        measured: observed,
        requirement: format!(">= {MIN_OBSERVED_ORDER}"),
        detail: format!(
            "errors {:?}, orders {:?}",
            errors
                .iter()
                .map(|e| format!("{e:.3e}"))
                .collect::<Vec<_>>(),
            orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>()
        ),
    }
}

/// Mass-conservation bookkeeping on a scenario: the linepack change between
/// any two samples must equal the integrated net injection.
pub fn mass_conservation(
    network: &Network,
    scenario: &Scenario,
    cfg: &SolverConfig,
) -> Result<CheckResult> {
    let traj = simulate(network, scenario, cfg)?;
    let mut worst: f64 = 0.0;
    let m0 = traj.linepack_total_kg[0];
    let i0 = traj.injected_kg[0];
    for k in 1..traj.n_samples() {
        let dm = traj.linepack_total_kg[k] - m0;
        let di = traj.injected_kg[k] - i0;
        worst = worst.max(((dm - di) / traj.linepack_total_kg[k]).abs());
    }
    Ok(CheckResult {
        name: format!("mass conservation {}", scenario.name),
        passed: worst < CONSERVATION_TOL,
        measured: worst,
        requirement: format!("< {CONSERVATION_TOL:.0e} relative"),
        detail: format!(
            "{} samples over {:.0} h, kirchhoff residual {:.2e} kg/s",
            traj.n_samples(),
            scenario.horizon_s / HOUR_S,
            traj.meta.max_kirchhoff_residual_kg_s
        ),
    })
}

/// Ordered-severity pair specification for the monotonicity battery.
struct SeverityPair {
    name: &'static str,
    mild: Option<InsultKind>,
    severe: InsultKind,
}

/// Run three ordered insult-severity pairs derived from a noise-free
/// scenario and verify the pointwise pressure ordering and survival-time
/// ordering. Pairs run with the fixed-dt policy so both members share one
/// step grid.
pub fn monotonicity_battery(
    network: &Network,
    scenario: &Scenario,
    cfg: &SolverConfig,
) -> Result<Vec<CheckResult>> {
    let insult = scenario
        .insults
        .first()
        .ok_or_else(|| crate::error::Error::validation("monotonicity battery needs a scenario with an insult"))?;
    let node = insult.node;
    let t0 = insult.start_s;

    let mut base = scenario.without_noise();
    base.insults.clear();
    base.controls.clear();
    base.horizon_s = scenario.horizon_s.min(t0 + 18.0 * HOUR_S);

    let cfg = SolverConfig {
        dt_policy: DtPolicy::FixedConservative,
        ..*cfg
    };

    let pairs = [
        SeverityPair {
            name: "full vs half supply loss",
            mild: Some(InsultKind::Scale { factor: 0.5 }),
            severe: InsultKind::Scale { factor: 0.0 },
        },
        SeverityPair {
            name: "instant vs 1h ramp shutoff",
            mild: Some(InsultKind::RampScale {
                factor: 0.0,
                duration_s: HOUR_S,
            }),
            severe: InsultKind::Scale { factor: 0.0 },
        },
        SeverityPair {
            name: "insult vs no insult",
            mild: None,
            severe: InsultKind::Scale { factor: 0.0 },
        },
    ];

    let mut results = Vec::new();
    for pair in pairs {
        let mut scenario_mild = base.clone();
        if let Some(kind) = pair.mild.clone() {
            scenario_mild.insults = vec![Insult {
                node,
                start_s: t0,
                kind,
            }];
        }
        let mut scenario_severe = base.clone();
        scenario_severe.insults = vec![Insult {
            node,
            start_s: t0,
            kind: pair.severe.clone(),
        }];

        let grids = discretize(network, cfg.target_dx_m)?;
        let (bc_mild, _) = compose(network, &scenario_mild, cfg.seed)?;
        let (bc_severe, _) = compose(network, &scenario_severe, cfg.seed)?;
        let (initial, _) = init_state(network, &grids, &cfg, &compose(network, &base, cfg.seed)?.0)?;
        let mild = simulate_from(
            network,
            &cfg,
            &bc_mild,
            base.horizon_s,
            initial.clone(),
            &format!("{} (mild)", pair.name),
        )?;
        let severe = simulate_from(
            network,
            &cfg,
            &bc_severe,
            base.horizon_s,
            initial,
            &format!("{} (severe)", pair.name),
        )?;
        let report = check_monotonicity(
            &mild,
            &bc_mild,
            &severe,
            &bc_severe,
            t0,
            DEFAULT_THRESHOLD_PA,
            MONOTONICITY_TOL_PA,
        )?;
        let fmt_tau = |t: Option<f64>| match t {
            Some(t) => format!("{:.2} h", t / HOUR_S),
            None => "none".to_string(),
        };
        results.push(CheckResult {
            name: format!("monotonicity: {}", pair.name),
            passed: report.violations == 0 && report.tau_ordered,
            measured: report.max_violation_pa,
            requirement: format!("0 violations above {MONOTONICITY_TOL_PA:.1e} Pa, tau ordered"),
            detail: format!(
                "tau severe {}, tau mild {}",
                fmt_tau(report.tau_severe_s),
                fmt_tau(report.tau_mild_s)
            ),
        });
    }
    Ok(results)
}

/// Full battery used by `verify`: independent numerics first, then the
/// shipped-dataset checks.
pub fn run_battery(
    network: &Network,
    conservation_scenario: &Scenario,
    monotonicity_scenario: &Scenario,
    cfg: &SolverConfig,
) -> Result<Vec<CheckResult>> {
    let mut results = vec![eos_round_trip()];
    results.extend(steady_pipe_oracle());
    results.push(refinement_order());
    results.push(mass_conservation(network, conservation_scenario, cfg)?);
    results.extend(monotonicity_battery(network, monotonicity_scenario, cfg)?);
    Ok(results)
}
