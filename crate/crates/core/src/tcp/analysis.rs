use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{window_step, ChannelProfile, Outcome, TcpError};

/// Stand-in for +∞ when the rate function is outside the support of 1 − P.
pub const LPRIME_CAP: f64 = 1e12;

fn log_mgf(theta: f64, xs: &[(f64, f64)]) -> f64 {
    let m = xs.iter().map(|&(x, _)| theta * x).fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|&(x, w)| w * (theta * x - m).exp()).sum::<f64>().ln()
}

fn tilted_mean(theta: f64, xs: &[(f64, f64)]) -> f64 {
    let m = xs.iter().map(|&(x, _)| theta * x).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for &(x, w) in xs {
        let e = w * (theta * x - m).exp();
        num += x * e;
        den += e;
    }
    num / den
}

/// l′(a) = sup_Θ {Θa − log E[e^{Θ(1−P)}]}, the Cramér rate of the mean loss fraction.
pub fn rate_function_lprime(a: f64, profile: &ChannelProfile) -> f64 {
    let xs: Vec<(f64, f64)> =
        profile.levels.iter().filter(|l| l.weight > 0.0).map(|l| (1.0 - l.p, l.weight)).collect();
    let lo = xs.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
    let hi = xs.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-12;
    if a < lo - tol || a > hi + tol {
        return LPRIME_CAP;
    }
    let edge = |v: f64| -xs.iter().filter(|x| (x.0 - v).abs() <= tol).map(|x| x.1).sum::<f64>().ln();
    if hi - lo <= tol {
        return 0.0;
    }
    if (a - lo).abs() <= tol {
        return edge(lo);
    }
    if (a - hi).abs() <= tol {
        return edge(hi);
    }
    // the tilted mean increases in Θ; bracket and bisect for mean = a
    let (mut t_lo, mut t_hi) = (-1.0, 1.0);
    while tilted_mean(t_lo, &xs) > a {
        t_lo *= 2.0;
    }
    while tilted_mean(t_hi, &xs) < a {
        t_hi *= 2.0;
    }
    for _ in 0..300 {
        let mid = 0.5 * (t_lo + t_hi);
        if mid <= t_lo || mid >= t_hi {
            break;
        }
        if tilted_mean(mid, &xs) < a {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
    }
    let theta = 0.5 * (t_lo + t_hi);
    (theta * a - log_mgf(theta, &xs)).max(0.0)
}

/// Which case of the path-diversity bound applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSolution {
    /// 1/β = exp(−M l′(1 − ρβ/(MC))) has a root in [p_1MC/ρ², E[P]MC/ρ²].
    Root(f64),
    /// Too few paths: the equation fails at the lower end.
    NoDiversity,
    /// Enough paths for all the diversity: fails at the upper end.
    FullDiversity,
}

/// Solve for β by bisection on M·l′(1 − ρβ/(MC)) − ln β, which decreases in β.
/// `capacity` is per path.
pub fn solve_beta(paths: u32, capacity: f64, rho: f64, profile: &ChannelProfile) -> Result<BetaSolution, TcpError> {
    if !(rho > 1.0) || paths < 1 || !(capacity >= 1.0) {
        return Err(TcpError::Domain("need rho > 1, M >= 1 and C >= 1".into()));
    }
    let m = paths as f64;
    let mc = m * capacity;
    let h = |beta: f64| m * rate_function_lprime(1.0 - rho * beta / mc, profile) - beta.ln();
    let mut lo = profile.p_min() * mc / (rho * rho);
    let mut hi = profile.mean() * mc / (rho * rho);
    if h(hi) > 0.0 {
        return Ok(BetaSolution::FullDiversity);
    }
    if h(lo) < 0.0 {
        return Ok(BetaSolution::NoDiversity);
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = if h(lo).abs() < h(hi).abs() { lo } else { hi };
    // a sign change across the jump of l′ at the edge of its support is not a root
    if h(beta).abs() > 1e-9 {
        return Ok(BetaSolution::NoDiversity);
    }
    Ok(BetaSolution::Root(beta))
}

/// Lower bound on the mean window under the best marking policy:
/// max{0.75p_1MC/ρ² − 1, min{E[P]MC/ρ²(1 − 3δ₁ − 2(e⁻¹ + δ₂)), β(1 − 3/⌊β⌋ − 2(e⁻¹ + δ₂))}}.
pub fn throughput_lower_bound(
    paths: u32,
    capacity: f64,
    rho: f64,
    profile: &ChannelProfile,
    delta1: f64,
    delta2: f64,
) -> Result<f64, TcpError> {
    let mc = paths as f64 * capacity;
    let r2 = rho * rho;
    let floor_case = 0.75 * profile.p_min() * mc / r2 - 1.0;
    let full = profile.mean() * mc / r2;
    let e1 = (-1.0f64).exp();
    let tail = |b: f64| {
        let fb = b.floor();
        if fb < 1.0 {
            f64::NEG_INFINITY
        } else {
            b * (1.0 - 3.0 / fb - 2.0 * (e1 + delta2))
        }
    };
    Ok(match solve_beta(paths, capacity, rho, profile)? {
        BetaSolution::NoDiversity => floor_case,
        BetaSolution::FullDiversity => floor_case.max(tail(full)),
        BetaSolution::Root(beta) => {
            floor_case.max((full * (1.0 - 3.0 * delta1 - 2.0 * (e1 + delta2))).min(tail(beta)))
        }
    })
}

/// Stationary law of the window chain on 1..=W_max.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// `pi[w - 1]` is the probability of window w.
    pub pi: Vec<f64>,
    pub mean: f64,
    pub iterations: usize,
}

/// W → W+1 w.p. 1 − f(W) (held at W_max), W → ⌈W/2⌉ w.p. f(W). Power
/// iteration from W = 1 until successive iterates differ by < 1e-12 in L1.
pub fn steady_state_oracle(f: impl Fn(u32) -> f64, w_max: u32) -> Result<SteadyState, TcpError> {
    if w_max < 2 {
        return Err(TcpError::Domain("W_max must be at least 2".into()));
    }
    let n = w_max as usize;
    let fs: Vec<f64> = (1..=w_max).map(&f).collect();
    if let Some(w) = fs.iter().position(|x| !(0.0..=1.0).contains(x)) {
        return Err(TcpError::Domain(format!("f_eff({}) outside [0, 1]", w + 1)));
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    let mut next = vec![0.0; n];
    let cap = 20_000_000usize / n.max(1) + 100_000;
    for it in 1..=cap {
        next.iter_mut().for_each(|x| *x = 0.0);
        for w in 1..=n {
            let m = pi[w - 1];
            if m == 0.0 {
                continue;
            }
            let up = if w == n { n } else { w + 1 };
            next[up - 1] += m * (1.0 - fs[w - 1]);
            next[w.div_ceil(2) - 1] += m * fs[w - 1];
        }
        let diff: f64 = pi.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-12 {
            let mean = pi.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum();
            return Ok(SteadyState { pi, mean, iterations: it });
        }
    }
    Err(TcpError::Domain("power iteration did not converge".into()))
}

/// Time-average window of the same chain driven by Bernoulli marks.
pub fn simulate_window_chain(f: impl Fn(u32) -> f64, w_max: u32, steps: u64, rng: &mut ChaCha8Rng) -> f64 {
    let mut w = 1u32;
    let mut sum = 0u64;
    for _ in 0..steps {
        sum += w as u64;
        let outcome = if rng.random::<f64>() < f(w) { Outcome::Drop } else { Outcome::Success };
        w = window_step(w, outcome).min(w_max);
    }
    sum as f64 / steps as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{stream_id, stream_rng, StreamKind};
    use crate::tcp::ChannelLevel;

    fn bimodal(p1: f64) -> ChannelProfile {
        ChannelProfile::bimodal(p1, 1.0, 0.1, [100.0, 200.0]).unwrap()
    }

    #[test]
    fn lprime_vanishes_at_mean() {
        for p1 in [0.1, 0.3, 0.5] {
            let prof = bimodal(p1);
            assert!(rate_function_lprime(1.0 - prof.mean(), &prof) < 1e-9);
        }
    }

    #[test]
    fn lprime_point_mass() {
        let prof = ChannelProfile::new(vec![ChannelLevel { p: 0.7, weight: 1.0 }], [1.0, 1.0]).unwrap();
        assert_eq!(rate_function_lprime(0.3, &prof), 0.0);
        assert_eq!(rate_function_lprime(0.5, &prof), LPRIME_CAP);
    }

    #[test]
    fn lprime_matches_grid_search() {
        let prof = ChannelProfile::bimodal(0.05, 0.95, 0.5, [1.0, 1.0]).unwrap();
        let a = 0.6;
        let xs = [(0.95, 0.5), (0.05, 0.5)];
        let grid = (0..=10_000)
            .map(|k| -20.0 + 40.0 * k as f64 / 10_000.0)
            .map(|t| t * a - log_mgf(t, &xs))
            .fold(f64::NEG_INFINITY, f64::max);
        let got = rate_function_lprime(a, &prof);
        assert!((got - grid).abs() < 1e-6, "{got} vs {grid}");
        assert!(got >= grid - 1e-15);
    }

    #[test]
    fn beta_regimes() {
        let prof = bimodal(0.1);
        // a single path cannot gain any diversity
        assert_eq!(solve_beta(1, 400.0, 1.1, &prof).unwrap(), BetaSolution::NoDiversity);
        let mut roots = 0;
        for m in [2, 4, 8, 16, 32] {
            match solve_beta(m, 400.0 / m as f64, 1.1, &prof).unwrap() {
                BetaSolution::Root(b) => {
                    roots += 1;
                    let l = rate_function_lprime(1.0 - 1.1 * b / 400.0, &prof);
                    let rel = ((1.0 / b) - (-(m as f64) * l).exp()).abs() * b;
                    assert!(rel < 1e-8, "M={m}: {rel}");
                }
                BetaSolution::FullDiversity | BetaSolution::NoDiversity => {}
            }
        }
        assert!(roots > 0);
        assert!(solve_beta(2, 10.0, 1.0, &prof).is_err());
    }

    #[test]
    fn bound_cases() {
        let prof = bimodal(0.1);
        let b = throughput_lower_bound(1, 400.0, 1.1, &prof, 0.0, 0.0).unwrap();
        assert!((b - (0.75 * 0.1 * 400.0 / 1.21 - 1.0)).abs() < 1e-9);
        let mut prev = f64::NEG_INFINITY;
        for m in [1, 2, 4, 8, 16] {
            let b = throughput_lower_bound(m, 400.0 / m as f64, 1.1, &prof, 0.0, 0.0).unwrap();
            assert!(b <= prof.mean() * 400.0 / 1.21 + 1e-9);
            assert!(b >= prev - 1e-9, "M={m}: {b} < {prev}");
            prev = b;
        }
    }

    #[test]
    fn full_diversity_plug_in() {
        // a tight profile makes every path count
        let prof = ChannelProfile::bimodal(0.8, 1.0, 0.1, [1.0, 1.0]).unwrap();
        let (m, c, rho) = (64, 100.0, 1.05);
        if let BetaSolution::FullDiversity = solve_beta(m, c, rho, &prof).unwrap() {
            let beta = prof.mean() * m as f64 * c / (rho * rho);
            let expect = beta * (1.0 - 3.0 / beta.floor() - 2.0 * (-1.0f64).exp());
            let got = throughput_lower_bound(m, c, rho, &prof, 0.0, 0.0).unwrap();
            assert!((got - expect.max(0.75 * 0.8 * m as f64 * c / (rho * rho) - 1.0)).abs() < 1e-9);
        } else {
            panic!("expected full diversity");
        }
    }

    #[test]
    fn oracle_edge_chains() {
        let s = steady_state_oracle(|_| 1.0, 50).unwrap();
        assert!((s.pi[0] - 1.0).abs() < 1e-12);
        let s = steady_state_oracle(|_| 0.0, 50).unwrap();
        assert!((s.pi[49] - 1.0).abs() < 1e-12);
        assert!(steady_state_oracle(|_| 0.5, 1).is_err());
        assert!(steady_state_oracle(|_| 1.5, 10).is_err());
    }

    #[test]
    fn oracle_matches_simulation() {
        let s = steady_state_oracle(|_| 0.01, 400).unwrap();
        let mut rng = stream_rng(1, stream_id(StreamKind::Misc, 0));
        let sim = simulate_window_chain(|_| 0.01, 400, 2_000_000, &mut rng);
        assert!((sim - s.mean).abs() < 0.05 * s.mean, "{sim} vs {}", s.mean);
    }
}
