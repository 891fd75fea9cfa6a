//! Two-state (position, velocity) Kalman filter along one axis.
#![allow(dead_code)]

#[derive(Debug, Clone, Copy)]
pub struct Kalman {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl Kalman {
    /// `x' = F x + q`, `F = [[1, dt], [0, 1]]`, `Q = diag(sp^2, sv^2)`.
    pub fn predict(&mut self, dt: f64, sigma_p: f64, sigma_v: f64) {
        let [p, v] = self.mean;
        self.mean = [p + dt * v, v];
        let [[a, b], [_, d]] = self.cov;
        let pp = a + 2.0 * dt * b + dt * dt * d + sigma_p * sigma_p;
        let pv = b + dt * d;
        let vv = d + sigma_v * sigma_v;
        self.cov = [[pp, pv], [pv, vv]];
    }

    /// Scalar observation of the position with variance `sigma^2`.
    pub fn update(&mut self, y: f64, sigma: f64) {
        let [[a, b], [_, d]] = self.cov;
        let s = a + sigma * sigma;
        let (kp, kv) = (a / s, b / s);
        let innovation = y - self.mean[0];
        self.mean = [self.mean[0] + kp * innovation, self.mean[1] + kv * innovation];
        let pp = (1.0 - kp) * a;
        let pv = (1.0 - kp) * b;
        let vv = d - kv * b;
        self.cov = [[pp, pv], [pv, vv]];
    }
}

use crowdfilter_core::filter::{pf_step, ObservationModel, ParticleSet};
use crowdfilter_core::motion::{AgentState, ContextAgent, CrowdContext, MotionModel, NoiseSpec};
use crowdfilter_core::rvo::RvoParams;
use crowdfilter_core::{AgentId, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Gaussian likelihood on the x coordinate only.
pub struct XPosition {
    pub sigma: f64,
}

impl ObservationModel for XPosition {
    type Observation = f64;

    fn log_likelihood(&self, obs: &f64, state: &AgentState) -> f64 {
        let d = state.position.x - obs;
        -0.5 * d * d / (self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KalmanComparison {
    /// Root mean square over steps of `(mean_pf - mean_kf) / sd_kf`.
    pub rms_mean: f64,
    /// Root mean square over steps of `var_pf / var_kf - 1`.
    pub rms_variance: f64,
    pub worst_mean: f64,
    pub worst_variance: f64,
}

/// Runs the bootstrap filter with the constant-velocity model against the
/// exact Kalman posterior on the observed axis.
pub fn compare_with_kalman(particles: usize, steps: usize, seed: u64) -> KalmanComparison {
    let dt = 0.4;
    let noise = NoiseSpec {
        sigma_position: 0.05,
        sigma_velocity: 0.05,
        sigma_desired: 0.0,
    };
    let obs_model = XPosition { sigma: 0.1 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let states: Vec<AgentState> = (0..particles)
        .map(|_| {
            let p = Vec2::new(0.2 * normal(&mut rng), 0.0);
            let v = Vec2::new(0.5 + 0.1 * normal(&mut rng), 0.0);
            AgentState::new(p, v, v)
        })
        .collect();
    let mut set = ParticleSet::uniform(states, 0);

    let moments = |set: &ParticleSet| {
        let (mut mp, mut mv) = (0.0, 0.0);
        for p in set.particles() {
            mp += p.weight * p.state.position.x;
            mv += p.weight * p.state.velocity.x;
        }
        let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
        for p in set.particles() {
            let (dp, dv) = (p.state.position.x - mp, p.state.velocity.x - mv);
            a += p.weight * dp * dp;
            b += p.weight * dp * dv;
            d += p.weight * dv * dv;
        }
        ([mp, mv], [[a, b], [b, d]])
    };
    let (mean, cov) = moments(&set);
    let mut kf = Kalman { mean, cov };

    let agent = AgentId(0);
    let ctx = CrowdContext::solo(
        ContextAgent {
            id: agent,
            state: AgentState::default(),
            radius: 0.3,
            max_speed: 2.0,
        },
        RvoParams::default(),
    );

    let mut truth = (0.0, 0.5);
    let mut out = KalmanComparison {
        rms_mean: 0.0,
        rms_variance: 0.0,
        worst_mean: 0.0,
        worst_variance: 0.0,
    };
    for _ in 0..steps {
        truth.0 += truth.1 * dt + noise.sigma_position * normal(&mut rng);
        truth.1 += noise.sigma_velocity * normal(&mut rng);
        let y = truth.0 + obs_model.sigma * normal(&mut rng);

        set = pf_step(&set, agent, &ctx, &y, &obs_model, MotionModel::Lin, &noise, dt, &mut rng)
            .expect("step")
            .set;
        kf.predict(dt, noise.sigma_position, noise.sigma_velocity);
        kf.update(y, obs_model.sigma);

        let (m, c) = moments(&set);
        let sd = kf.cov[0][0].sqrt();
        let dm = (m[0] - kf.mean[0]) / sd;
        let dv = c[0][0] / kf.cov[0][0] - 1.0;
        out.rms_mean += dm * dm;
        out.rms_variance += dv * dv;
        out.worst_mean = out.worst_mean.max(dm.abs());
        out.worst_variance = out.worst_variance.max(dv.abs());
    }
    out.rms_mean = (out.rms_mean / steps as f64).sqrt();
    out.rms_variance = (out.rms_variance / steps as f64).sqrt();
    out
}
