//! CVaR-constrained MPPI planning on precomputed CVaR map stacks, plus a
//! closed-loop navigation episode runner against the ground-truth dynamics.
//!
//! Rollouts step the same traction-scaled bicycle as the simulator, reading
//! worst-case (CVaR) tractions from the stack; attitude limits enter as
//! penalties so every rollout keeps a finite cost for softmin weighting.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::predictor::CvarMapStack;
use crate::sim::{
    ground_truth_traversability, step_bicycle, ControlInput, GroundTruthConfig, RobotParams,
    RobotState, TerrainMap,
};
use crate::{Error, Result, TraversabilitySample};

#[derive(Debug, Clone, Copy)]
pub struct PlannerConfig {
    /// Horizon length in steps.
    pub horizon: usize,
    pub n_rollouts: usize,
    /// Softmin temperature on rollout costs.
    pub temperature: f64,
    /// Gaussian control noise, m/s and radians.
    pub noise_speed: f64,
    pub noise_steer: f64,
    /// Risk tolerance matching the stack's alpha.
    pub alpha: f64,
    /// Attitude constraint bounds, radians.
    pub roll_limit: f64,
    pub pitch_limit: f64,
    /// Weight of attitude-excess penalties per step.
    pub penalty_weight: f64,
    /// Flat penalty for leaving the valid map region.
    pub oob_penalty: f64,
    pub goal_radius: f64,
    /// Additive cost per step spent on OOD-flagged cells (0 disables
    /// avoidance).
    pub ood_cost: f64,
    /// Optimization rounds per plan call.
    pub mppi_iters: usize,
    /// Steps between replans in the closed loop.
    pub replan_every: usize,
    /// Closed-loop step budget per trial.
    pub max_steps: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            horizon: 50,
            n_rollouts: 1024,
            temperature: 2.0,
            noise_speed: 0.4,
            noise_steer: (12.0f64).to_radians(),
            alpha: 0.6,
            roll_limit: (30.0f64).to_radians(),
            pitch_limit: (30.0f64).to_radians(),
            penalty_weight: 100.0,
            oob_penalty: 1e3,
            goal_radius: 1.0,
            ood_cost: 0.0,
            mppi_iters: 1,
            replan_every: 1,
            max_steps: 400,
        }
    }
}

/// The outcome of one planning call.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub controls: Vec<ControlInput>,
    pub states: Vec<RobotState>,
    pub cost: f64,
    /// True when the predicted trajectory exceeds an attitude limit.
    pub violation: bool,
}

/// Simulates a control sequence against the CVaR dynamics and scores it:
/// steps-to-goal (or horizon plus a terminal-distance surrogate), attitude
/// penalties, OOD costs, and an out-of-bounds penalty.
pub fn rollout_cost(
    controls: &[ControlInput],
    start: &RobotState,
    maps: &CvarMapStack,
    goal: (f64, f64),
    params: &RobotParams,
    cfg: &PlannerConfig,
) -> Result<(f64, Vec<RobotState>)> {
    if maps.lookup(start.x, start.y, start.yaw).is_none() {
        return Err(Error::domain(format!(
            "start ({:.2}, {:.2}) is off the map",
            start.x, start.y
        )));
    }
    let mut states = Vec::with_capacity(controls.len() + 1);
    let mut state = *start;
    states.push(state);

    let dist = |s: &RobotState| -> f64 { (s.x - goal.0).hypot(s.y - goal.1) };
    let step_dist = params.max_speed * params.dt;
    let mut penalty = 0.0;
    let mut reached_at: Option<usize> = None;
    let mut out_of_bounds = false;

    for (t, u) in controls.iter().enumerate() {
        let cvar = match maps.lookup(state.x, state.y, state.yaw) {
            Some(v) => v,
            None => {
                out_of_bounds = true;
                break;
            }
        };
        penalty += cfg.penalty_weight
            * ((cvar[2] - cfg.roll_limit).max(0.0) + (cvar[3] - cfg.pitch_limit).max(0.0));
        if cfg.ood_cost > 0.0 && maps.lookup_ood(state.x, state.y, state.yaw) {
            penalty += cfg.ood_cost;
        }
        let psi = TraversabilitySample {
            lin_traction: cvar[0],
            ang_traction: cvar[1],
            roll: cvar[2],
            pitch: cvar[3],
        };
        state = step_bicycle(&state, u, &psi, params);
        states.push(state);
        if reached_at.is_none() && dist(&state) <= cfg.goal_radius {
            reached_at = Some(t + 1);
            break;
        }
    }

    let time_cost = match reached_at {
        Some(t) => t as f64,
        None => controls.len() as f64 + dist(states.last().expect("nonempty")) / step_dist,
    };
    let oob = if out_of_bounds { cfg.oob_penalty } else { 0.0 };
    Ok((time_cost + penalty + oob, states))
}

fn softmin_weights(costs: &[f64], temperature: f64) -> Vec<f64> {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> =
        costs.iter().map(|c| (-(c - min) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    weights
}

/// Gaussian-perturbed MPPI update: samples rollouts around the nominal
/// sequence, weights them by softmin cost, and returns the weighted-average
/// sequence with its own rollout. Noise is drawn up front so rollout
/// evaluation can run in parallel deterministically.
pub fn mppi_plan(
    start: &RobotState,
    goal: (f64, f64),
    maps: &CvarMapStack,
    nominal: &[ControlInput],
    params: &RobotParams,
    cfg: &PlannerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PlanResult> {
    let mut nominal: Vec<ControlInput> = if nominal.is_empty() {
        vec![
            ControlInput {
                speed: params.max_speed,
                steer: 0.0
            };
            cfg.horizon
        ]
    } else {
        nominal.to_vec()
    };
    let t_len = nominal.len();

    let speed_noise = Normal::new(0.0, cfg.noise_speed.max(1e-12)).expect("valid normal");
    let steer_noise = Normal::new(0.0, cfg.noise_steer.max(1e-12)).expect("valid normal");

    for _ in 0..cfg.mppi_iters.max(1) {
        // sequential noise draw, parallel evaluation
        let candidates: Vec<Vec<ControlInput>> = (0..cfg.n_rollouts)
            .map(|_| {
                nominal
                    .iter()
                    .map(|u| {
                        let dv = if cfg.noise_speed > 0.0 { speed_noise.sample(rng) } else { 0.0 };
                        let dd = if cfg.noise_steer > 0.0 { steer_noise.sample(rng) } else { 0.0 };
                        ControlInput::clamped(u.speed + dv, u.steer + dd, params)
                    })
                    .collect()
            })
            .collect();

        let costs: Result<Vec<f64>> = candidates
            .par_iter()
            .map(|u_seq| rollout_cost(u_seq, start, maps, goal, params, cfg).map(|(c, _)| c))
            .collect();
        let costs = costs?;
        let weights = softmin_weights(&costs, cfg.temperature);

        let mut updated = vec![ControlInput { speed: 0.0, steer: 0.0 }; t_len];
        for (w, u_seq) in weights.iter().zip(&candidates) {
            for (acc, u) in updated.iter_mut().zip(u_seq) {
                acc.speed += w * u.speed;
                acc.steer += w * u.steer;
            }
        }
        nominal = updated
            .into_iter()
            .map(|u| ControlInput::clamped(u.speed, u.steer, params))
            .collect();
    }

    let (cost, states) = rollout_cost(&nominal, start, maps, goal, params, cfg)?;
    let violation = states.iter().any(|s| {
        maps.lookup(s.x, s.y, s.yaw)
            .map(|v| v[2] > cfg.roll_limit || v[3] > cfg.pitch_limit)
            .unwrap_or(false)
    });
    Ok(PlanResult {
        controls: nominal,
        states,
        cost,
        violation,
    })
}

/// Why a navigation trial ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    RollPitchViolation,
    Immobilized,
    OutOfBounds,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::RollPitchViolation => "roll_pitch",
            Outcome::Immobilized => "immobilized",
            Outcome::OutOfBounds => "out_of_bounds",
            Outcome::Timeout => "timeout",
        }
    }
}

/// One closed-loop navigation trial record.
#[derive(Debug, Clone)]
pub struct EpisodeLog {
    pub seed: u64,
    pub outcome: Outcome,
    pub steps: usize,
    pub path_length: f64,
    /// Seconds to goal for successful trials.
    pub time_to_goal: Option<f64>,
}

/// Runs one closed-loop trial: replan at the configured rate over the CVaR
/// stack, execute the first control against the ground-truth dynamics, and
/// stop on goal, true attitude violation, immobilization, bound exit, or
/// timeout.
#[allow(clippy::too_many_arguments)]
pub fn run_navigation(
    map: &TerrainMap,
    stack: &CvarMapStack,
    start: &RobotState,
    goal: (f64, f64),
    params: &RobotParams,
    gt_cfg: &GroundTruthConfig,
    cfg: &PlannerConfig,
    true_roll_limit: f64,
    true_pitch_limit: f64,
    seed: u64,
) -> Result<EpisodeLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = *start;
    let mut nominal: Vec<ControlInput> = Vec::new();
    let mut stuck = 0usize;
    let mut path_length = 0.0;
    let immobilized_after = 10usize;

    let finish = |outcome: Outcome, steps: usize, path_length: f64| EpisodeLog {
        seed,
        outcome,
        steps,
        path_length,
        time_to_goal: (outcome == Outcome::Success).then(|| steps as f64 * params.dt),
    };

    for step in 0..cfg.max_steps {
        if (state.x - goal.0).hypot(state.y - goal.1) <= cfg.goal_radius {
            return Ok(finish(Outcome::Success, step, path_length));
        }
        if step % cfg.replan_every.max(1) == 0 || nominal.is_empty() {
            let plan = mppi_plan(&state, goal, stack, &nominal, params, cfg, &mut rng)?;
            nominal = plan.controls;
        }
        let control = nominal.remove(0);
        nominal.push(ControlInput {
            speed: params.max_speed,
            steer: 0.0,
        });

        let psi = match ground_truth_traversability(map, &state, params, gt_cfg, &mut rng) {
            Ok(p) => p,
            Err(_) => return Ok(finish(Outcome::OutOfBounds, step, path_length)),
        };
        if psi.roll > true_roll_limit || psi.pitch > true_pitch_limit {
            return Ok(finish(Outcome::RollPitchViolation, step, path_length));
        }
        if psi.lin_traction < 0.05 {
            stuck += 1;
            if stuck >= immobilized_after {
                return Ok(finish(Outcome::Immobilized, step, path_length));
            }
        } else {
            stuck = 0;
        }

        let next = step_bicycle(&state, &control, &psi, params);
        path_length += (next.x - state.x).hypot(next.y - state.y);
        state = next;
        if stack.lookup(state.x, state.y, state.yaw).is_none() {
            return Ok(finish(Outcome::OutOfBounds, step + 1, path_length));
        }
    }
    Ok(finish(Outcome::Timeout, cfg.max_steps, path_length))
}
