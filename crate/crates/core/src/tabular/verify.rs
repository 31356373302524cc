//! Property suite over seeded random instances: backward/forward support
//! agreement, equation residuals, the policy round trip and TD convergence.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mdp::{TabularMdp, TabularPolicy};
use super::occupancy::{
    backward_residual, bfs_support_check, build_chain, forward_residual, policy_from_occupancy, solve_backward_occupancy,
    solve_forward_occupancy, solve_forward_with_reward, OccupancyVector, StateActionChain, RESIDUAL_TOL,
};
use super::random::{random_deterministic_policy, random_mdp};
use super::td::{run_td_to_convergence, RewardMode, StepSchedule, TdRunConfig};
use super::ergodicity::ergodicity_report;
use crate::error::{ensure, Result};
use crate::rng;

pub const ROUND_TRIP_TOL: f64 = 1e-8;
pub const TD_TOL: f64 = 1e-2;

/// Deliberate solver bugs for checking that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Forward solve with the sign of the discount flipped.
    SignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub n_instances: usize,
    pub seed: u64,
    pub gammas: Vec<f64>,
    pub max_states: usize,
    pub max_actions: usize,
    pub td: bool,
    pub td_steps: usize,
    pub td_gamma: f64,
    pub fault: Option<Fault>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_instances: 100,
            seed: 0,
            gammas: vec![0.0, 0.5, 0.9, 0.99],
            max_states: 6,
            max_actions: 4,
            td: true,
            td_steps: 200_000,
            td_gamma: 0.5,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaCheck {
    pub gamma: f64,
    pub backward_residual: f64,
    pub forward_residual: f64,
    pub backward_support_ok: bool,
    pub forward_support_ok: bool,
    pub supports_equal: bool,
    pub round_trip_error: f64,
    pub error: Option<String>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceReport {
    pub index: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub policy: Vec<usize>,
    pub checks: Vec<GammaCheck>,
    pub pass: bool,
    /// The instance as MDP JSON, kept for failures only.
    pub mdp: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TdCheck {
    pub gamma: f64,
    pub steps: usize,
    pub final_error: f64,
    pub pass: bool,
    pub mdp: serde_json::Value,
    pub policy: Vec<usize>,
    /// Final TD table, indexed `s * n_actions + a`.
    pub estimate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub config: VerifyConfig,
    pub entries: Vec<InstanceReport>,
    pub td: Option<TdCheck>,
    pub max_residual: f64,
    pub max_round_trip_error: f64,
    pub failures: usize,
    pub pass: bool,
}

/// Random instance with a strictly positive p0 whose chain under the
/// returned deterministic policy is irreducible.
pub fn sample_instance(max_states: usize, max_actions: usize, rng: &mut rng::Rng) -> Result<(TabularMdp, TabularPolicy)> {
    ensure(max_states >= 1 && max_actions >= 1, || "instance bounds must be positive".into())?;
    loop {
        let ns = rng.random_range(1..=max_states);
        let na = rng.random_range(1..=max_actions);
        let mdp = random_mdp(ns, na, 0.9, rng)?;
        let policy = random_deterministic_policy(ns, na, rng);
        if ergodicity_report(&build_chain(&mdp, &policy)?).irreducible {
            return Ok((mdp, policy));
        }
    }
}

fn forward(chain: &StateActionChain, gamma: f64, fault: Option<Fault>) -> Result<OccupancyVector> {
    match fault {
        None => solve_forward_occupancy(chain, gamma),
        Some(Fault::SignFlip) => solve_forward_with_reward(chain, -gamma, (&chain.d0 * (1.0 - gamma)).as_slice()),
    }
}

fn check_gamma(mdp: &TabularMdp, policy: &TabularPolicy, gamma: f64, fault: Option<Fault>) -> GammaCheck {
    let mut out = GammaCheck {
        gamma,
        backward_residual: f64::NAN,
        forward_residual: f64::NAN,
        backward_support_ok: false,
        forward_support_ok: false,
        supports_equal: false,
        round_trip_error: f64::NAN,
        error: None,
        pass: false,
    };
    let run = |out: &mut GammaCheck| -> Result<()> {
        let chain = build_chain(&mdp.with_gamma(gamma)?, policy)?;
        let d = solve_backward_occupancy(&chain, gamma)?;
        let f = forward(&chain, gamma, fault)?;
        out.backward_residual = backward_residual(&chain, gamma, &d.values);
        out.forward_residual = forward_residual(&chain, gamma, &f.values);
        out.backward_support_ok = bfs_support_check(&d, policy)?;
        out.forward_support_ok = bfs_support_check(&f, policy)?;
        out.supports_equal = d.support() == f.support();
        let recovered = policy_from_occupancy(&d)?;
        out.round_trip_error = recovered.probs().iter().zip(policy.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(())
    };
    if let Err(e) = run(&mut out) {
        out.error = Some(e.to_string());
    }
    out.pass = out.error.is_none()
        && out.backward_residual <= RESIDUAL_TOL
        && out.forward_residual <= RESIDUAL_TOL
        && out.backward_support_ok
        && out.forward_support_ok
        && out.supports_equal
        && out.round_trip_error <= ROUND_TRIP_TOL;
    out
}

/// TD on a seeded 3-state, 2-action instance with exact rewards and the
/// harmonic per-pair schedule, compared with the exact forward solve.
pub fn td_check(seed: u64, gamma: f64, steps: usize) -> Result<TdCheck> {
    let mut rng = rng::substream(seed, "verify/td");
    let (mdp, policy) = loop {
        let mdp = random_mdp(3, 2, gamma, &mut rng)?;
        let policy = random_deterministic_policy(3, 2, &mut rng);
        if ergodicity_report(&build_chain(&mdp, &policy)?).irreducible {
            break (mdp, policy);
        }
    };
    let cfg = TdRunConfig {
        schedule: StepSchedule::Harmonic,
        reward_mode: RewardMode::Exact,
        max_steps: steps,
        trace_every: steps.max(1),
        ..TdRunConfig::default()
    };
    let run = run_td_to_convergence(&mdp, &policy, &cfg, &mut rng)?;
    let final_error = run.final_error();
    Ok(TdCheck {
        gamma,
        steps: run.steps,
        final_error,
        pass: final_error < TD_TOL,
        mdp: serde_json::from_str(&mdp.to_json()?)?,
        policy: policy.actions().unwrap_or_default(),
        estimate: run.estimate.values.clone(),
    })
}

pub fn verify_suite(cfg: &VerifyConfig) -> Result<SuiteReport> {
    ensure(cfg.gammas.iter().all(|g| (0.0..1.0).contains(g)), || "gammas must lie in [0, 1)".into())?;
    let mut rng = rng::substream(cfg.seed, "verify/instances");
    let mut entries = Vec::with_capacity(cfg.n_instances);
    for index in 0..cfg.n_instances {
        let (mdp, policy) = sample_instance(cfg.max_states, cfg.max_actions, &mut rng)?;
        let checks: Vec<GammaCheck> = cfg.gammas.iter().map(|&g| check_gamma(&mdp, &policy, g, cfg.fault)).collect();
        let pass = checks.iter().all(|c| c.pass);
        entries.push(InstanceReport {
            index,
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            policy: policy.actions().unwrap_or_default(),
            checks,
            pass,
            mdp: if pass { None } else { Some(serde_json::from_str(&mdp.to_json()?)?) },
        });
    }
    let td = if cfg.td && cfg.n_instances > 0 { Some(td_check(cfg.seed, cfg.td_gamma, cfg.td_steps)?) } else { None };
    let all = entries.iter().flat_map(|e| &e.checks);
    let max_residual = all.clone().map(|c| c.backward_residual.max(c.forward_residual)).fold(0.0, f64::max);
    let max_round_trip_error = all.map(|c| c.round_trip_error).fold(0.0, f64::max);
    let failures = entries.iter().filter(|e| !e.pass).count() + td.as_ref().map_or(0, |t| !t.pass as usize);
    Ok(SuiteReport {
        config: cfg.clone(),
        entries,
        td,
        max_residual,
        max_round_trip_error,
        failures,
        pass: failures == 0,
    })
}
