//! Pulsed-ODMR timing arithmetic.

use serde::{Deserialize, Serialize};

use super::SynthError;

/// Inputs to [`build_schedule`]; defaults are a 2.65-2.88 GHz sweep at 1 MHz, 30 averages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    /// Laser init/readout pulse, s.
    pub t_laser: f64,
    /// π-pulse length, s.
    pub t_mw: f64,
    /// Camera exposure, s.
    pub t_exposure: f64,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_step: f64,
    /// Number of sweep repetitions averaged.
    pub n_avg: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            t_laser: 50e-6,
            t_mw: 110e-9,
            t_exposure: 20e-3,
            sweep_start: 2.65e9,
            sweep_stop: 2.88e9,
            sweep_step: 1e6,
            n_avg: 30,
        }
    }
}

/// Derived acquisition schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub t_laser: f64,
    pub t_mw: f64,
    pub t_exposure: f64,
    /// Laser + MW sequences per exposure.
    pub n_r: usize,
    pub sweep_start: f64,
    pub sweep_stop: f64,
    pub sweep_step: f64,
    pub n_points: usize,
    pub n_avg: usize,
    /// Signal and reference exposures for every point, `n_avg` times, s.
    pub total_time: f64,
}

impl Default for PulseSchedule {
    fn default() -> Self {
        build_schedule(&ScheduleParams::default()).expect("default schedule is valid")
    }
}

impl PulseSchedule {
    /// Microwave frequencies of the sweep, Hz.
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|i| self.sweep_start + i as f64 * self.sweep_step)
            .collect()
    }

    pub fn total_time_minutes(&self) -> f64 {
        self.total_time / 60.0
    }

    /// Printable summary with explicit units.
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({
            "t_laser_s": self.t_laser,
            "t_mw_s": self.t_mw,
            "t_exposure_s": self.t_exposure,
            "n_r": self.n_r,
            "sweep_start_hz": self.sweep_start,
            "sweep_stop_hz": self.sweep_stop,
            "sweep_step_hz": self.sweep_step,
            "n_points": self.n_points,
            "n_avg": self.n_avg,
            "total_time_s": round_to(self.total_time, 9),
            "total_time_min": round_to(self.total_time_minutes(), 9),
            "total_time_display": format!("{:.2} min", self.total_time_minutes()),
        })
    }
}

fn round_to(x: f64, digits: i32) -> f64 {
    let k = 10f64.powi(digits);
    (x * k).round() / k
}

/// Fill in `n_r`, `n_points` and `total_time` from the raw timings.
pub fn build_schedule(p: &ScheduleParams) -> Result<PulseSchedule, SynthError> {
    if !(p.sweep_step > 0.0) || !(p.sweep_stop >= p.sweep_start) || !(p.sweep_start > 0.0) {
        return Err(SynthError::BadSweep);
    }
    if !(p.t_laser > 0.0 && p.t_mw > 0.0 && p.t_exposure > 0.0) || p.n_avg == 0 {
        return Err(SynthError::BadTiming);
    }
    let span = (p.sweep_stop - p.sweep_start) / p.sweep_step;
    let n_points = (span * (1.0 + 1e-12)).floor() as usize + 1;
    let n_r = (p.t_exposure / (p.t_laser + p.t_mw) * (1.0 + 1e-12)).floor() as usize;
    if n_r == 0 {
        return Err(SynthError::BadTiming);
    }
    let total_time = (n_points * 2 * p.n_avg) as f64 * p.t_exposure;
    Ok(PulseSchedule {
        t_laser: p.t_laser,
        t_mw: p.t_mw,
        t_exposure: p.t_exposure,
        n_r,
        sweep_start: p.sweep_start,
        sweep_stop: p.sweep_stop,
        sweep_step: p.sweep_step,
        n_points,
        n_avg: p.n_avg,
        total_time,
    })
}
