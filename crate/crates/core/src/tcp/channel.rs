use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::TcpError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelLevel {
    /// Per-packet delivery probability while in this level.
    pub p: f64,
    /// Probability of drawing this level.
    pub weight: f64,
}

/// Delivery levels and how long the channel holds each draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    pub levels: Vec<ChannelLevel>,
    /// Hold time range in ms, drawn uniformly.
    pub hold_ms: [f64; 2],
}

impl ChannelProfile {
    pub fn new(levels: Vec<ChannelLevel>, hold_ms: [f64; 2]) -> Result<Self, TcpError> {
        let p = Self { levels, hold_ms };
        p.validate()?;
        Ok(p)
    }

    /// Two levels: `p_min` w.p. `w_min`, `p_max` otherwise.
    pub fn bimodal(p_min: f64, p_max: f64, w_min: f64, hold_ms: [f64; 2]) -> Result<Self, TcpError> {
        Self::new(
            vec![ChannelLevel { p: p_min, weight: w_min }, ChannelLevel { p: p_max, weight: 1.0 - w_min }],
            hold_ms,
        )
    }

    pub fn validate(&self) -> Result<(), TcpError> {
        let bad = |s: String| Err(TcpError::Profile(s));
        if self.levels.is_empty() {
            return bad("no levels".into());
        }
        let mut prev = 0.0;
        for (k, l) in self.levels.iter().enumerate() {
            if !(l.p > prev && l.p <= 1.0) {
                return bad(format!("level {k}: p must increase strictly within (0, 1]"));
            }
            if !(l.weight >= 0.0 && l.weight <= 1.0) {
                return bad(format!("level {k}: weight outside [0, 1]"));
            }
            prev = l.p;
        }
        let s: f64 = self.levels.iter().map(|l| l.weight).sum();
        if (s - 1.0).abs() > 1e-9 {
            return bad(format!("weights sum to {s}"));
        }
        let [lo, hi] = self.hold_ms;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("hold time needs 0 < lo <= hi".into());
        }
        Ok(())
    }

    /// E[P].
    pub fn mean(&self) -> f64 {
        self.levels.iter().map(|l| l.p * l.weight).sum()
    }

    pub fn p_min(&self) -> f64 {
        self.levels[0].p
    }

    fn draw_level(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, l) in self.levels.iter().enumerate() {
            acc += l.weight;
            if u < acc {
                return k;
            }
        }
        self.levels.iter().rposition(|l| l.weight > 0.0).unwrap_or(0)
    }

    fn draw_hold(&self, rng: &mut ChaCha8Rng) -> f64 {
        let [lo, hi] = self.hold_ms;
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    }
}

/// One path's channel: current level and the time left before a redraw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelState {
    pub level: usize,
    pub p: f64,
    pub remaining_ms: f64,
}

impl ChannelState {
    pub fn new(profile: &ChannelProfile, rng: &mut ChaCha8Rng) -> Self {
        let level = profile.draw_level(rng);
        Self { level, p: profile.levels[level].p, remaining_ms: profile.draw_hold(rng) }
    }
}

/// Packets out of `n` that survive, Binomial(n, p).
pub fn channel_transmit(state: &ChannelState, n: u32, rng: &mut ChaCha8Rng) -> u32 {
    if n == 0 || state.p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, state.p).map(|b| b.sample(rng) as u32).unwrap_or(0)
}

/// Advance the clock; each expired hold redraws the level and a fresh hold time.
pub fn channel_evolve(state: &mut ChannelState, profile: &ChannelProfile, rng: &mut ChaCha8Rng, elapsed_ms: f64) {
    state.remaining_ms -= elapsed_ms.max(0.0);
    while state.remaining_ms <= 0.0 {
        state.level = profile.draw_level(rng);
        state.p = profile.levels[state.level].p;
        state.remaining_ms += profile.draw_hold(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{stream_id, stream_rng, StreamKind};

    fn rng(i: u32) -> ChaCha8Rng {
        stream_rng(5, stream_id(StreamKind::Channel, i))
    }

    #[test]
    fn transmit_counts() {
        let mut r = rng(0);
        let full = ChannelState { level: 0, p: 1.0, remaining_ms: 1.0 };
        assert_eq!(channel_transmit(&full, 17, &mut r), 17);
        let low = ChannelState { level: 0, p: 0.05, remaining_ms: 1.0 };
        assert_eq!(channel_transmit(&low, 0, &mut r), 0);
        let got = channel_transmit(&low, 1_000_000, &mut r) as f64 / 1e6;
        assert!((got - 0.05).abs() < 0.001, "{got}");
    }

    #[test]
    fn single_level_is_constant() {
        let prof = ChannelProfile::new(vec![ChannelLevel { p: 0.7, weight: 1.0 }], [100.0, 200.0]).unwrap();
        let mut r = rng(1);
        let mut s = ChannelState::new(&prof, &mut r);
        for _ in 0..1000 {
            channel_evolve(&mut s, &prof, &mut r, 37.0);
            assert_eq!(s.p, 0.7);
        }
    }

    #[test]
    fn bimodal_time_fraction() {
        let prof = ChannelProfile::bimodal(0.1, 1.0, 0.1, [100.0, 200.0]).unwrap();
        let mut r = rng(2);
        let mut s = ChannelState::new(&prof, &mut r);
        let steps = 10_000_000u32;
        let mut low = 0u32;
        for _ in 0..steps {
            if s.level == 0 {
                low += 1;
            }
            channel_evolve(&mut s, &prof, &mut r, 1.0);
        }
        let frac = low as f64 / steps as f64;
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
    }

    #[test]
    fn mean_over_bimodal_profiles() {
        for (i, expect) in [0.91, 0.92, 0.93, 0.94, 0.95].into_iter().enumerate() {
            let p1 = 0.1 * (i + 1) as f64;
            let prof = ChannelProfile::bimodal(p1, 1.0, 0.1, [100.0, 200.0]).unwrap();
            assert!((prof.mean() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(ChannelProfile::bimodal(0.0, 1.0, 0.1, [100.0, 200.0]).is_err());
        assert!(ChannelProfile::bimodal(0.5, 0.4, 0.1, [100.0, 200.0]).is_err());
        assert!(ChannelProfile::new(vec![ChannelLevel { p: 0.5, weight: 0.9 }], [1.0, 2.0]).is_err());
        assert!(ChannelProfile::bimodal(0.1, 1.0, 0.1, [200.0, 100.0]).is_err());
    }
}
