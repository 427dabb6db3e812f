//! Kinematic bicycle stepping with traction-scaled velocities.

use crate::TraversabilitySample;

/// Robot geometry and command limits. Wheels are ordered front-left,
/// back-left, back-right, front-right to match the physics prior pairs.
#[derive(Debug, Clone, Copy)]
pub struct RobotParams {
    /// Wheelbase, meters.
    pub wheelbase: f64,
    /// Track width, meters.
    pub track: f64,
    /// Step interval, seconds.
    pub dt: f64,
    pub max_speed: f64,
    pub max_steer: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            wheelbase: 1.0,
            track: 0.6,
            dt: 0.1,
            max_speed: 2.0,
            max_steer: (30.0f64).to_radians(),
        }
    }
}

impl RobotParams {
    /// Wheel positions in the body frame (x forward, y left).
    pub fn wheel_offsets(&self) -> [(f64, f64); 4] {
        let hx = self.wheelbase / 2.0;
        let hy = self.track / 2.0;
        [(hx, hy), (-hx, hy), (-hx, -hy), (hx, -hy)]
    }
}

/// Planar pose: position in meters, yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Commanded speed (m/s) and steering angle (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub speed: f64,
    pub steer: f64,
}

impl ControlInput {
    /// Clamps a raw command into the robot's limits (forward-only speed).
    pub fn clamped(speed: f64, steer: f64, params: &RobotParams) -> Self {
        ControlInput {
            speed: speed.clamp(0.0, params.max_speed),
            steer: steer.clamp(-params.max_steer, params.max_steer),
        }
    }
}

/// One traction-scaled bicycle step:
///
/// ```text
/// x   += dt * psi1 * v * cos(yaw)
/// y   += dt * psi1 * v * sin(yaw)
/// yaw += dt * psi2 * v * tan(steer) / wheelbase
/// ```
///
/// The steering angle is clamped just below 90 degrees so the tangent stays
/// finite.
pub fn step_bicycle(
    state: &RobotState,
    control: &ControlInput,
    psi: &TraversabilitySample,
    params: &RobotParams,
) -> RobotState {
    let steer = control.steer.clamp(-1.55, 1.55);
    let dx = psi.lin_traction * control.speed * state.yaw.cos();
    let dy = psi.lin_traction * control.speed * state.yaw.sin();
    let dyaw = psi.ang_traction * control.speed * steer.tan() / params.wheelbase;
    RobotState {
        x: state.x + params.dt * dx,
        y: state.y + params.dt * dy,
        yaw: state.yaw + params.dt * dyaw,
    }
}
