use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};

use super::SimNetwork;

/// Standard normal quantile at 0.876.
const Z_0876: f64 = 1.1552;

/// Alternating on/off process: log-normal session lengths and exponential
/// offline gaps, all in hours.
///
/// The default puts the 87.6th percentile of session length at 8 h:
/// `mu = ln 8 - z(0.876) * sigma` with `sigma = 1.5`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChurnModel {
    pub session_mu: f64,
    pub session_sigma: f64,
    pub mean_gap_hours: f64,
}

impl Default for ChurnModel {
    fn default() -> Self {
        let sigma = 1.5;
        ChurnModel {
            session_mu: 8f64.ln() - Z_0876 * sigma,
            session_sigma: sigma,
            mean_gap_hours: 6.0,
        }
    }
}

impl ChurnModel {
    fn session_dist(&self) -> LogNormal<f64> {
        LogNormal::new(self.session_mu, self.session_sigma).expect("sigma is finite and non-negative")
    }

    pub fn sample_session<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.session_dist().sample(rng)
    }

    pub fn sample_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Exp::new(1.0 / self.mean_gap_hours).expect("positive rate").sample(rng)
    }

    /// Long-run fraction of time a node is online.
    pub fn online_share(&self) -> f64 {
        let mean_session = (self.session_mu + self.session_sigma.powi(2) / 2.0).exp();
        mean_session / (mean_session + self.mean_gap_hours)
    }
}

/// Samples online intervals over `[0, duration_hours)` for every node.
/// `None` leaves every node online for the whole duration. Pure in the
/// network's seed.
pub fn apply_churn(net: &SimNetwork, duration_hours: f64, model: Option<ChurnModel>) -> SimNetwork {
    assert!(duration_hours > 0.0, "duration must be positive");
    let mut out = net.clone();
    out.duration_hours = Some(duration_hours);
    out.churn = model;
    let mut rng = ChaCha20Rng::seed_from_u64(net.seed ^ 0x6368_7572_6e00_0000);
    for node in &mut out.nodes {
        node.online_intervals = Some(match model {
            None => vec![(0.0, duration_hours)],
            Some(m) => sample_intervals(&m, duration_hours, &mut rng),
        });
    }
    out
}

fn sample_intervals(model: &ChurnModel, duration: f64, rng: &mut ChaCha20Rng) -> Vec<(f64, f64)> {
    let mut intervals = Vec::new();
    let mut online = rng.random_bool(model.online_share());
    let mut t = 0.0;
    while t < duration {
        if online {
            let end = (t + model.sample_session(rng)).min(duration);
            intervals.push((t, end));
            t = end;
        } else {
            t += model.sample_gap(rng);
        }
        online = !online;
    }
    intervals
}
