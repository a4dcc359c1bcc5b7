//! Discrete PID controller with clamped output and integral anti-windup.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PidController {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub out_min: f64,
    pub out_max: f64,
    pub setpoint: f64,
    integral: f64,
    prev_error: Option<f64>,
}

impl PidController {
    pub fn new(kp: f64, ki: f64, kd: f64, out_min: f64, out_max: f64, setpoint: f64) -> Self {
        assert!(out_min <= out_max);
        PidController {
            kp,
            ki,
            kd,
            out_min,
            out_max,
            setpoint,
            integral: 0.0,
            prev_error: None,
        }
    }

    /// Seed the integral term so the controller starts at a known output for
    /// zero error (fixed-point initialization).
    pub fn preload_output(&mut self, output: f64) {
        self.integral = output.clamp(self.out_min, self.out_max);
        self.prev_error = None;
    }

    /// Advance one control interval given the measured value.
    ///
    /// Output is always clamped to the declared limits; the integrator only
    /// accumulates while it would not push the output further into a limit.
    pub fn step(&mut self, measured: f64, dt: f64) -> f64 {
        let error = self.setpoint - measured;
        let derivative = match self.prev_error {
            Some(prev) if dt > 0.0 => (error - prev) / dt,
            _ => 0.0,
        };
        self.prev_error = Some(error);

        let increment = self.ki * error * dt;
        let candidate_integral = self.integral + increment;
        let raw = self.kp * error + candidate_integral + self.kd * derivative;
        let clamped = raw.clamp(self.out_min, self.out_max);
        // Conditional integration, valid for reverse-acting (negative-gain)
        // loops too: freeze only while the increment pushes further into a
        // saturated limit.
        let freeze = (raw > self.out_max && increment > 0.0)
            || (raw < self.out_min && increment < 0.0);
        if !freeze {
            self.integral = candidate_integral;
        }
        clamped
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }
}
