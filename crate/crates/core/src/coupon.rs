//! How many shots does it take to see every determinant at least once?
//!
//! With probabilities p₁…p_m the waiting time T until all categories have
//! appeared satisfies
//!
//! E[T] = Σ_{∅≠K⊆S} (−1)^{|K|+1} / P(K)
//!      = ∫₀^∞ (1 − Π_i (1 − e^{−p_i t})) dt.
//!
//! The subset sum is exact but exponential and cancels badly; the integral
//! is the production path.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use crate::rng::stream_rng;
use crate::{Error, Result, StateVector};

/// Largest m accepted by [`expected_shots_exact`].
pub const EXACT_MAX_M: usize = 20;
/// Relative tolerance of [`expected_shots_integral`].
pub const INTEGRAL_REL_TOL: f64 = 1e-8;
/// Largest m for which the rational skew bound is checked against the
/// integral in the test suite.
pub const LOWER_BOUND_VALIDATED_M: usize = 200;
/// Trials simulated per random stream.
pub const TRIALS_PER_STREAM: usize = 4096;
/// Quantiles reported by [`simulate_discovery`].
pub const DEFAULT_QUANTILES: [f64; 3] = [0.5, 0.9, 0.99];

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeDistribution {
    p: Vec<f64>,
}

impl AmplitudeDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if let Some(x) = p.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "probability {x} is not positive"
            )));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {s}"
            )));
        }
        Ok(Self { p })
    }

    /// Drops non-positive weights and normalizes the rest.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let kept: Vec<f64> = w.iter().copied().filter(|x| *x > 0.0).collect();
        let s: f64 = kept.iter().sum();
        if kept.is_empty() || !s.is_finite() {
            return Err(Error::Empty("positive weights"));
        }
        Self::new(kept.into_iter().map(|x| x / s).collect())
    }

    /// Born probabilities of `s` above `threshold`.
    pub fn from_state(s: &StateVector, threshold: f64) -> Result<Self> {
        let p: Vec<f64> = s
            .probabilities()
            .into_iter()
            .filter(|x| *x > threshold)
            .collect();
        Self::from_weights(&p)
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Empty("probability vector"));
        }
        Self::new(vec![1.0 / m as f64; m])
    }

    /// One category with `p_max`, the rest sharing 1 − p_max equally.
    pub fn skewed(m: usize, p_max: f64) -> Result<Self> {
        if m < 2 || !(p_max > 0.0 && p_max < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need m ≥ 2 and 0 < p_max < 1, got m = {m}, p_max = {p_max}"
            )));
        }
        let rest = (1.0 - p_max) / (m - 1) as f64;
        let mut p = vec![rest; m];
        p[0] = p_max;
        Self::new(p)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn p_max(&self) -> f64 {
        self.p.iter().cloned().fold(0.0, f64::max)
    }
}

/// Unevaluated sum hi + lo with |lo| ≤ ulp(hi)/2.
#[derive(Debug, Clone, Copy, Default)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        let lo = self.lo + err;
        let hi = s + lo;
        self.lo = lo - (hi - s);
        self.hi = hi;
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Inclusion–exclusion over all 2^m − 1 subsets, accumulated in
/// double-double precision.
pub fn expected_shots_exact(p: &AmplitudeDistribution) -> Result<f64> {
    let m = p.len();
    if m > EXACT_MAX_M {
        return Err(Error::TooLarge {
            dim: m,
            limit: EXACT_MAX_M,
        });
    }
    let mut mass = vec![0.0f64; 1 << m];
    let mut acc = DoubleDouble::default();
    for k in 1usize..1 << m {
        let low = k.trailing_zeros() as usize;
        mass[k] = mass[k & (k - 1)] + p.p[low];
        let term = 1.0 / mass[k];
        acc.add(if k.count_ones() % 2 == 1 { term } else { -term });
    }
    Ok(acc.value())
}

/// m·H_m.
pub fn expected_shots_uniform(m: usize) -> f64 {
    m as f64 * (1..=m).map(|k| 1.0 / k as f64).sum::<f64>()
}

// 15-point Kronrod nodes and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss–Kronrod over the given breakpoints.
fn integrate(f: impl Fn(f64) -> f64, breaks: &[f64], rel_tol: f64) -> Result<f64> {
    let mut parts: Vec<(f64, f64, f64, f64)> = breaks
        .windows(2)
        .map(|w| {
            let (v, e) = gauss_kronrod(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    for _ in 0..20_000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() {
            return Ok(total);
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .3.total_cmp(&b.1 .3))
            .expect("nonempty");
        let (a, b, _, _) = parts.swap_remove(k);
        let c = 0.5 * (a + b);
        let (v1, e1) = gauss_kronrod(&f, a, c);
        let (v2, e2) = gauss_kronrod(&f, c, b);
        parts.push((a, c, v1, e1));
        parts.push((c, b, v2, e2));
    }
    let total: f64 = parts.iter().map(|p| p.2).sum();
    let err: f64 = parts.iter().map(|p| p.3).sum();
    Err(Error::Quadrature(err / total.abs()))
}

/// ∫₀^∞ (1 − Π_i (1 − e^{−p_i t})) dt, with the integrand evaluated as
/// −expm1(Σ_i ln(−expm1(−p_i t))).
pub fn expected_shots_integral(p: &AmplitudeDistribution) -> Result<f64> {
    let probs = &p.p;
    let m = probs.len() as f64;
    let p_min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
    let p_max = p.p_max();
    // m·e^{−p_min T}/p_min bounds the neglected tail; E[T] ≥ 1/p_min.
    let t_end = (m.ln() + 40.0) / p_min;
    let mut breaks = vec![0.0];
    let mut t = 0.5 / p_max;
    while t < t_end {
        breaks.push(t);
        t *= 2.0;
    }
    breaks.push(t_end);
    let f = |t: f64| -> f64 {
        let log_prod: f64 = probs.iter().map(|&q| (-(-q * t).exp_m1()).ln()).sum();
        -log_prod.exp_m1()
    };
    integrate(f, &breaks, INTEGRAL_REL_TOL * 0.01)
}

/// Waiting time for q = (p_max, q̃, …, q̃), q̃ = (1 − p_max)/(m − 1), from the
/// two-term alternating sum
///
/// Σ_{r=0}^{m−1} (−1)^{m−1−r} [C(m−1, r−1)/((m−r) q̃) + C(m−1, r)/(1 − r q̃)],
///
/// evaluated in exact rational arithmetic from the binary value of p_max, so
/// it is free of cancellation error for every m.
pub fn expected_shots_lower_bound(p: &AmplitudeDistribution) -> Result<f64> {
    let m = p.len();
    if m < 2 {
        return Err(Error::InvalidArgument("lower bound needs m ≥ 2".into()));
    }
    let p_max = BigRational::from_float(p.p_max()).expect("finite");
    let q = (BigRational::one() - p_max) / BigInt::from(m - 1);
    if q.is_zero() {
        return Err(Error::InvalidArgument("p_max = 1 leaves nothing to discover".into()));
    }
    // With q̃ = a/b the terms are C·b/((m−r)·a) and C·b/(b − r·a). The sum is
    // kept as an unreduced fraction num/den; the common factor b is applied
    // once at the end and the fraction is never reduced.
    let (a, b) = (q.numer().clone(), q.denom().clone());
    let (mut num, mut den) = (BigInt::zero(), BigInt::one());
    let mut add = |c: &BigInt, e: BigInt, positive: bool| {
        let t = c * &den;
        num = &num * &e + if positive { t } else { -t };
        den *= e;
    };
    // C(m−1, r−1) and C(m−1, r), updated in place.
    let (mut c_prev, mut c_cur) = (BigInt::zero(), BigInt::one());
    for r in 0..m {
        let positive = (m - 1 - r).is_multiple_of(2);
        if r >= 1 {
            add(&c_prev, &a * BigInt::from(m - r), positive);
        }
        add(&c_cur, &b - &a * BigInt::from(r), positive);
        c_prev = c_cur.clone();
        c_cur = c_cur * BigInt::from(m - 1 - r) / BigInt::from(r + 1);
    }
    BigRational::new_raw(num * b, den)
        .to_f64()
        .ok_or_else(|| Error::InvalidArgument("bound not representable".into()))
}

/// The same bound through the stable integral.
pub fn expected_shots_lower_bound_integral(p: &AmplitudeDistribution) -> Result<f64> {
    let q = AmplitudeDistribution::skewed(p.len(), p.p_max())?;
    expected_shots_integral(&q)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscoveryStats {
    pub mean: f64,
    pub stderr: f64,
    /// (quantile, draws)
    pub quantiles: Vec<(f64, u64)>,
}

/// Simulates one collection. Instead of drawing every shot it jumps straight
/// to the next new category: with unseen mass r the wait is Geometric(r) and
/// the new category is picked ∝ p among the unseen ones. Calls `found(t)` at
/// each discovery time and stops once `t` would exceed `horizon`.
fn collect<R: Rng>(p: &[f64], horizon: u64, rng: &mut R, mut found: impl FnMut(u64)) {
    let mut unseen: Vec<f64> = p.to_vec();
    let mut t: u64 = 0;
    for _ in 0..p.len() {
        let r: f64 = unseen.iter().sum();
        if !(r > 0.0) {
            return;
        }
        let wait = if r >= 1.0 {
            1
        } else {
            match Geometric::new(r) {
                Ok(g) => g.sample(rng).saturating_add(1),
                Err(_) => return,
            }
        };
        t = t.saturating_add(wait);
        if t > horizon {
            return;
        }
        let mut u = rng.random::<f64>() * r;
        let mut pick = unseen.iter().rposition(|&x| x > 0.0).expect("positive mass");
        for (i, &x) in unseen.iter().enumerate() {
            if x > 0.0 && u < x {
                pick = i;
                break;
            }
            u -= x;
        }
        unseen[pick] = 0.0;
        found(t);
    }
}

fn nearest_rank(sorted: &[u64], q: f64) -> u64 {
    let n = sorted.len();
    let k = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Monte-Carlo draws-until-complete over `n_trials` independent collections.
pub fn simulate_discovery(p: &AmplitudeDistribution, n_trials: usize, seed: u64) -> Result<DiscoveryStats> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let n_streams = n_trials.div_ceil(TRIALS_PER_STREAM);
    let chunks: Vec<Vec<u64>> = (0..n_streams)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let len = TRIALS_PER_STREAM.min(n_trials - k * TRIALS_PER_STREAM);
            (0..len)
                .map(|_| {
                    let mut last = 0;
                    collect(&p.p, u64::MAX, &mut rng, |t| last = t);
                    last
                })
                .collect()
        })
        .collect();
    let mut draws = chunks.concat();
    let n = draws.len() as f64;
    let mean = draws.iter().map(|&d| d as f64).sum::<f64>() / n;
    let var = if draws.len() > 1 {
        draws.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    draws.sort_unstable();
    Ok(DiscoveryStats {
        mean,
        stderr: (var / n).sqrt(),
        quantiles: DEFAULT_QUANTILES
            .iter()
            .map(|&q| (q, nearest_rank(&draws, q)))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub shots: u64,
    pub mean_unique: f64,
    pub stderr: f64,
}

/// Mean number of distinct categories seen after each budget of an
/// ascending `grid`.
pub fn discovery_curve(
    p: &AmplitudeDistribution,
    grid: &[u64],
    n_trials: usize,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if grid.is_empty() {
        return Err(Error::Empty("shot grid"));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("shot grid must be ascending".into()));
    }
    if n_trials == 0 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let horizon = *grid.last().expect("nonempty");
    let n_streams = n_trials.div_ceil(TRIALS_PER_STREAM);
    let per_trial: Vec<Vec<u32>> = (0..n_streams)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let len = TRIALS_PER_STREAM.min(n_trials - k * TRIALS_PER_STREAM);
            (0..len)
                .map(|_| {
                    let mut counts = vec![0u32; grid.len()];
                    collect(&p.p, horizon, &mut rng, |t| {
                        let first = grid.partition_point(|&g| g < t);
                        for c in &mut counts[first..] {
                            *c += 1;
                        }
                    });
                    counts
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let n = per_trial.len() as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(j, &shots)| {
            let mean = per_trial.iter().map(|c| c[j] as f64).sum::<f64>() / n;
            let var = if per_trial.len() > 1 {
                per_trial
                    .iter()
                    .map(|c| (c[j] as f64 - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0)
            } else {
                0.0
            };
            CurvePoint {
                shots,
                mean_unique: mean,
                stderr: (var / n).sqrt(),
            }
        })
        .collect())
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("shots,mean_unique,stderr\n");
    for p in points {
        out.push_str(&format!("{},{},{}\n", p.shots, p.mean_unique, p.stderr));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn dist(p: &[f64]) -> AmplitudeDistribution {
        AmplitudeDistribution::new(p.to_vec()).unwrap()
    }

    /// Random distribution with a dominant weight, like a ground state.
    fn skewed_random(m: usize, seed: u64) -> AmplitudeDistribution {
        let mut rng = stream_rng(seed, 17);
        let mut w: Vec<f64> = (0..m).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
        w[0] = rng.random_range(1.0..(m as f64 * 10.0));
        AmplitudeDistribution::from_weights(&w).unwrap()
    }

    #[test]
    fn validation() {
        assert!(AmplitudeDistribution::new(vec![]).is_err());
        assert!(AmplitudeDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(AmplitudeDistribution::new(vec![1.0, 0.0]).is_err());
        assert_eq!(AmplitudeDistribution::from_weights(&[2.0, 0.0, 2.0]).unwrap().len(), 2);
    }

    #[test]
    fn single_category() {
        let p = dist(&[1.0]);
        assert_eq!(expected_shots_exact(&p).unwrap(), 1.0);
        assert_relative_eq!(expected_shots_integral(&p).unwrap(), 1.0, max_relative = 1e-8);
        assert_eq!(expected_shots_uniform(1), 1.0);
        let s = simulate_discovery(&p, 100, 0).unwrap();
        assert_eq!((s.mean, s.stderr), (1.0, 0.0));
        assert!(expected_shots_lower_bound(&p).is_err());
    }

    #[test]
    fn uniform_values() {
        assert_eq!(expected_shots_uniform(2), 3.0);
        assert_relative_eq!(expected_shots_uniform(3), 5.5, max_relative = 1e-15);
        let p3 = AmplitudeDistribution::uniform(3).unwrap();
        assert_relative_eq!(expected_shots_exact(&p3).unwrap(), 5.5, max_relative = 1e-14);
        let p50 = AmplitudeDistribution::uniform(50).unwrap();
        assert_relative_eq!(
            expected_shots_integral(&p50).unwrap(),
            expected_shots_uniform(50),
            max_relative = 1e-8
        );
        assert_relative_eq!(expected_shots_uniform(50), 224.96, max_relative = 1e-4);
        for m in [2, 5, 17, 60, 150] {
            let p = AmplitudeDistribution::uniform(m).unwrap();
            assert_relative_eq!(
                expected_shots_lower_bound(&p).unwrap(),
                expected_shots_uniform(m),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn three_category_example() {
        // 1 − Σ 1/(1−a) + Σ 1/(1−a−b) written out for (a, b, c)
        let (a, b, c) = (0.5, 0.3, 0.2);
        let direct = 1.0 - 1.0 / (1.0 - a) - 1.0 / (1.0 - b) - 1.0 / (1.0 - c)
            + 1.0 / (1.0 - a - b)
            + 1.0 / (1.0 - a - c)
            + 1.0 / (1.0 - b - c);
        let p = dist(&[a, b, c]);
        assert_relative_eq!(expected_shots_exact(&p).unwrap(), direct, max_relative = 1e-14);
        assert_relative_eq!(direct, 6.654_761_904_761_905, max_relative = 1e-12);
        // written-out bound for q = (a, q̃, q̃)
        let q = (1.0 - a) / 2.0;
        let bound = 1.0 - 1.0 / (2.0 * q) - 2.0 / (1.0 - q) + 2.0 / q + 1.0 / (1.0 - 2.0 * q);
        assert_relative_eq!(expected_shots_lower_bound(&p).unwrap(), bound, max_relative = 1e-14);
    }

    #[test]
    fn exact_rejects_large_m() {
        let p = AmplitudeDistribution::uniform(21).unwrap();
        assert!(matches!(expected_shots_exact(&p), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn monte_carlo_matches_exact() {
        let p = dist(&[0.9, 0.05, 0.05]);
        let exact = expected_shots_exact(&p).unwrap();
        let s = simulate_discovery(&p, 200_000, 3).unwrap();
        assert!((s.mean - exact).abs() < 3.0 * s.stderr, "{} vs {exact}", s.mean);
        assert_eq!(s.quantiles.len(), 3);
        assert!(s.quantiles[0].1 <= s.quantiles[1].1 && s.quantiles[1].1 <= s.quantiles[2].1);
        assert_eq!(
            simulate_discovery(&p, 5000, 9).unwrap(),
            simulate_discovery(&p, 5000, 9).unwrap()
        );
    }

    #[test]
    fn curve_examples() {
        let det = dist(&[1.0]);
        let c = discovery_curve(&det, &[1, 10, 100], 50, 0).unwrap();
        assert!(c.iter().all(|p| p.mean_unique == 1.0));
        let u = AmplitudeDistribution::uniform(10).unwrap();
        let c = discovery_curve(&u, &[10_000], 200, 0).unwrap();
        assert_eq!(c[0].mean_unique, 10.0);
        assert!(discovery_curve(&u, &[], 10, 0).is_err());
        assert!(discovery_curve(&u, &[10, 5], 10, 0).is_err());
        let csv = curve_to_csv(&c);
        assert_eq!(csv.lines().next(), Some("shots,mean_unique,stderr"));
        assert_eq!(csv.lines().nth(1), Some("10000,10,0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn integral_matches_exact(m in 1usize..=14, seed in 0u64..10_000) {
            let p = skewed_random(m, seed);
            let exact = expected_shots_exact(&p).unwrap();
            let integral = expected_shots_integral(&p).unwrap();
            prop_assert!((exact - integral).abs() <= 1e-6 * exact, "{exact} vs {integral}");
            prop_assert!(exact >= m as f64 - 1e-9);
        }

        #[test]
        fn bound_below_exact(m in 2usize..=15, seed in 0u64..10_000) {
            let p = skewed_random(m, seed);
            let bound = expected_shots_lower_bound(&p).unwrap();
            prop_assert!(bound <= expected_shots_exact(&p).unwrap() + 1e-6);
            let via_integral = expected_shots_lower_bound_integral(&p).unwrap();
            prop_assert!((bound - via_integral).abs() <= 1e-7 * bound);
        }

        #[test]
        fn curve_monotone_and_bounded(m in 1usize..30, seed in 0u64..1000) {
            let p = skewed_random(m, seed);
            let c = discovery_curve(&p, &[1, 3, 10, 30, 100, 300, 1000], 64, seed).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[0].mean_unique <= w[1].mean_unique);
            }
            prop_assert!(c.iter().all(|x| x.mean_unique <= m as f64));
        }
    }
}
