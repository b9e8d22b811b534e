/// What happened to a window's packets in one RTT slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Drop,
}

/// AIMD: W+1 on success, ⌈W/2⌉ on a drop or mark.
pub fn window_step(w: u32, outcome: Outcome) -> u32 {
    debug_assert!(w >= 1);
    match outcome {
        Outcome::Success => w.saturating_add(1),
        Outcome::Drop => w.div_ceil(2).max(1),
    }
}

/// Same arithmetic for a path window. Success means w_l packets of the
/// current block, of either priority, reached the destination on that path.
pub fn path_window_step(w: u32, outcome: Outcome) -> u32 {
    window_step(w, outcome)
}

/// Halving probability from AQM marks and channel losses acting independently.
pub fn f_eff(f_aqm: f64, f_chan: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&f_aqm) && (0.0..=1.0).contains(&f_chan));
    (f_aqm + f_chan - f_aqm * f_chan).clamp(0.0, 1.0)
}

/// Retransmission timeout as a multiple of the smoothed RTT.
pub const RTO_FACTOR: f64 = 3.0;

/// IIR filter 0.9·old + 0.1·sample.
pub fn rtt_estimator(measured: f64, sample: f64) -> f64 {
    0.9 * measured + 0.1 * sample
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RttEstimator {
    pub smoothed: f64,
}

impl RttEstimator {
    pub fn new(first_sample: f64) -> Self {
        Self { smoothed: first_sample }
    }

    pub fn observe(&mut self, sample: f64) -> f64 {
        self.smoothed = rtt_estimator(self.smoothed, sample);
        self.smoothed
    }

    pub fn rto(&self) -> f64 {
        RTO_FACTOR * self.smoothed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aimd_arithmetic() {
        assert_eq!(window_step(1, Outcome::Drop), 1);
        assert_eq!(window_step(10, Outcome::Success), 11);
        assert_eq!(window_step(10, Outcome::Drop), 5);
        assert_eq!(window_step(11, Outcome::Drop), 6);
        assert_eq!(path_window_step(1, Outcome::Drop), 1);
        assert_eq!(path_window_step(7, Outcome::Success), 8);
    }

    #[test]
    fn combined_marking() {
        assert_eq!(f_eff(0.0, 0.0), 0.0);
        assert_eq!(f_eff(1.0, 0.3), 1.0);
        assert!((f_eff(0.1, 0.2) - 0.28).abs() < 1e-12);
    }

    #[test]
    fn rtt_filter() {
        assert_eq!(rtt_estimator(150.0, 150.0), 150.0);
        assert!((rtt_estimator(100.0, 200.0) - 110.0).abs() < 1e-12);
        let mut e = RttEstimator::new(500.0);
        for _ in 0..400 {
            e.observe(120.0);
        }
        assert!((e.smoothed - 120.0).abs() < 1e-9);
        assert!((e.rto() - 360.0).abs() < 1e-6);
    }
}
