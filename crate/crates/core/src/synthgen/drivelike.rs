use super::{BenchmarkConfig, RegimeSpec};

pub const DRIVELIKE5: &str = "drivelike-5";

const CHANNELS: [&str; 9] = [
    "brake_pressure_fl",
    "brake_pressure_fr",
    "motor_torque",
    "accelerator_pedal",
    "steering_angle",
    "velocity",
    "longitudinal_acceleration",
    "lateral_acceleration",
    "yaw_rate",
];

/// Innovation standard deviation per channel.
const NOISE_SD: [f64; 9] = [1.5, 1.5, 15.0, 4.0, 8.0, 0.15, 0.3, 0.3, 2.0];
/// AR(1) coefficient per channel.
const AR: [f64; 9] = [0.8, 0.8, 0.7, 0.8, 0.85, 0.97, 0.7, 0.7, 0.7];
/// Innovation correlations between channel pairs.
const CORRELATED: [(usize, usize, f64); 6] = [(0, 1, 0.9), (2, 3, 0.7), (4, 7, 0.6), (4, 8, 0.6), (7, 8, 0.6), (2, 6, 0.5)];

fn diag(v: &[f64; 9]) -> Vec<f64> {
    let mut m = vec![0.0; 81];
    for (i, x) in v.iter().enumerate() {
        m[i * 9 + i] = *x;
    }
    m
}

fn noise_cov(scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; 81];
    for i in 0..9 {
        m[i * 9 + i] = (NOISE_SD[i] * scale).powi(2);
    }
    for &(a, b, r) in &CORRELATED {
        let c = r * NOISE_SD[a] * NOISE_SD[b] * scale * scale;
        m[a * 9 + b] = c;
        m[b * 9 + a] = c;
    }
    m
}

struct Scale {
    noise: f64,
    jitter: f64,
}

fn regime(s: &Scale, label: i64, name: &str, mean: [f64; 9], trend: [f64; 9], jitter: [f64; 9], noise: f64) -> RegimeSpec {
    RegimeSpec {
        label,
        name: name.into(),
        mean: mean.to_vec(),
        trend: trend.to_vec(),
        level_jitter: jitter.iter().map(|j| j * s.jitter).collect(),
        ar: diag(&AR),
        noise_cov: noise_cov(noise * s.noise),
        duration_s: [4.0, 6.0],
    }
}

/// Five driving-like regimes over nine CAN-style channels at 10 Hz.
///
/// Channel roles: two brake pressures, motor torque, accelerator pedal,
/// steering angle, velocity, longitudinal and lateral acceleration, yaw rate.
/// Visits last 4 to 6 s and never repeat the previous regime.
pub fn drivelike5() -> BenchmarkConfig {
    drivelike5_scaled(1.0, 0.0)
}

/// [`drivelike5`] with innovation noise scaled by `noise` and per-visit
/// level offsets (zero in the default benchmark) scaled by `jitter`.
pub fn drivelike5_scaled(noise: f64, jitter: f64) -> BenchmarkConfig {
    let s = &Scale { noise, jitter };
    let zero = [0.0; 9];
    let regimes = vec![
        regime(s, 0, "standstill", [8.0, 8.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], zero, [2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.5),
        regime(
            s,
            1,
            "accelerate",
            [0.0, 0.0, 120.0, 35.0, 0.0, 10.0, 1.8, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.8, 0.0, 0.0, 0.0],
            [0.0, 0.0, 25.0, 8.0, 0.0, 3.0, 0.4, 0.0, 0.0],
            1.0,
        ),
        regime(
            s,
            2,
            "decelerate",
            [14.0, 14.0, -40.0, 0.0, 0.0, 10.0, -2.2, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, -2.2, 0.0, 0.0, 0.0],
            [4.0, 4.0, 10.0, 0.0, 0.0, 3.0, 0.5, 0.0, 0.0],
            1.0,
        ),
        regime(
            s,
            3,
            "turn_left",
            [0.0, 0.0, 40.0, 15.0, 60.0, 7.0, 0.0, 3.0, 12.0],
            zero,
            [0.0, 0.0, 15.0, 5.0, 15.0, 2.0, 0.0, 0.8, 3.0],
            1.0,
        ),
        regime(
            s,
            4,
            "turn_right",
            [0.0, 0.0, 40.0, 15.0, -60.0, 7.0, 0.0, -3.0, -12.0],
            zero,
            [0.0, 0.0, 15.0, 5.0, 15.0, 2.0, 0.0, 0.8, 3.0],
            1.0,
        ),
    ];
    let transitions = vec![
        vec![0.0, 1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.3, 0.35, 0.35],
        vec![0.4, 0.2, 0.0, 0.2, 0.2],
        vec![0.0, 0.4, 0.3, 0.0, 0.3],
        vec![0.0, 0.4, 0.3, 0.3, 0.0],
    ];
    BenchmarkConfig {
        name: DRIVELIKE5.into(),
        channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
        sample_rate_hz: 10.0,
        regimes,
        transitions,
    }
}
