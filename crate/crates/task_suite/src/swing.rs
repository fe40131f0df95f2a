//! Pendulum swing-up with dense rewards. The pole starts hanging near the
//! bottom and the torque limit is well below the holding torque at the
//! horizontal, so the expert has to pump energy before balancing.
//!
//! Internals run in f64 with a velocity-Verlet integrator; with zero torque
//! the mechanical energy 0.5*w^2 + G*cos(theta) drifts by less than 1e-6
//! per control step, which the tests audit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::{Environment, StepResult, TaskError, TaskSpec};

pub const GRAVITY: f64 = 10.0;
pub const MAX_TORQUE: f64 = 2.0;
pub const CONTROL_DT: f64 = 0.05;
const SUBSTEPS: usize = 100;
const SUB_DT: f64 = CONTROL_DT / SUBSTEPS as f64;

pub struct SwingEnv {
    spec: TaskSpec,
    theta: f64, // angle from upright, radians
    omega: f64,
    steps: usize,
    done: bool,
}

fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = (theta + std::f64::consts::PI).rem_euclid(two_pi);
    if t < 0.0 {
        t += two_pi;
    }
    t - std::f64::consts::PI
}

impl SwingEnv {
    pub fn new(spec: TaskSpec) -> SwingEnv {
        SwingEnv { spec, theta: std::f64::consts::PI, omega: 0.0, steps: 0, done: true }
    }

    /// (theta, omega) for white-box tests.
    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.omega)
    }

    pub fn set_state(&mut self, theta: f64, omega: f64) {
        self.theta = theta;
        self.omega = omega;
        self.steps = 0;
        self.done = false;
    }

    /// 0.5*w^2 + G*cos(theta); conserved under zero torque.
    pub fn energy(&self) -> f64 {
        0.5 * self.omega * self.omega + GRAVITY * self.theta.cos()
    }

    fn observation(&self) -> Vec<f32> {
        vec![self.theta.cos() as f32, self.theta.sin() as f32, self.omega as f32]
    }

    fn integrate(&mut self, torque: f64) {
        // velocity Verlet on theta'' = G*sin(theta) + torque
        let accel = |theta: f64| GRAVITY * theta.sin() + torque;
        for _ in 0..SUBSTEPS {
            let half = self.omega + 0.5 * SUB_DT * accel(self.theta);
            self.theta += SUB_DT * half;
            self.omega = half + 0.5 * SUB_DT * accel(self.theta);
        }
        self.theta = wrap_angle(self.theta);
    }
}

impl Environment for SwingEnv {
    fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5157_494e_475f_5631);
        self.theta = wrap_angle(std::f64::consts::PI + rng.gen_range(-1.0..1.0));
        self.omega = rng.gen_range(-0.5..0.5);
        self.steps = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &[f32]) -> Result<StepResult, TaskError> {
        if self.done {
            return Err(TaskError::EpisodeOver);
        }
        let a = (action.first().copied().unwrap_or(0.0) as f64).clamp(-1.0, 1.0);
        let torque = a * MAX_TORQUE;
        self.integrate(torque);
        self.steps += 1;

        let angle_err = wrap_angle(self.theta);
        let cost = angle_err * angle_err + 0.1 * self.omega * self.omega + 0.001 * torque * torque;
        let timeout = self.steps >= self.spec.horizon;
        self.done = timeout;
        Ok(StepResult { obs: self.observation(), reward: -cost as f32, terminal: false, timeout })
    }

    fn expert_action(&mut self) -> Vec<f32> {
        vec![swing_expert(self.theta, self.omega)]
    }
}

/// Energy-pumping swing-up with a PD balance takeover near the top.
pub fn swing_expert(theta: f64, omega: f64) -> f32 {
    let energy = 0.5 * omega * omega + GRAVITY * theta.cos();
    let target = GRAVITY;
    let near_top = theta.cos() > 0.9 && omega.abs() < 3.0;
    let torque = if near_top {
        -24.0 * wrap_angle(theta) - 5.0 * omega
    } else if omega.abs() < 1e-4 {
        MAX_TORQUE
    } else {
        // dE/dt = omega * torque: push along omega to raise energy
        let gap = target - energy;
        8.0 * gap * omega.signum()
    };
    (torque / MAX_TORQUE).clamp(-1.0, 1.0) as f32
}
