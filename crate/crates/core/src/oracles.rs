//! Brute-force ground truth for the closed forms.
//!
//! Nothing in here evaluates a vertex-sum formula or a Laurent coefficient
//! formula; each oracle works straight from the component definitions.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contsum::ContinuousSum;
use crate::discsum::DiscreteSum;
use crate::error::{Error, Result};
use crate::numeric::{factorial, to_f64, Rational};

/// Upper bound on `Π (2m_j+1)` accepted by [`discrete_conv_oracle`].
pub const LATTICE_CAP: u128 = 10_000_000;

/// Truncated even power series `Σ_{r ≤ K} coeff_r x^{2r}` over the rationals.
///
/// Arithmetic drops every term above `x^{2K}`; the kept coefficients are exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesPoly {
    coefficients: Vec<Rational>,
}

impl SeriesPoly {
    /// Series with the given coefficients of `x^0, x^2, …`; truncation order is `len − 1`.
    pub fn new(coefficients: Vec<Rational>) -> Self {
        assert!(
            !coefficients.is_empty(),
            "series needs at least one coefficient"
        );
        Self { coefficients }
    }

    pub fn one(order: usize) -> Self {
        let mut c = vec![Rational::zero(); order + 1];
        c[0] = Rational::one();
        Self::new(c)
    }

    /// `sin(x)/x = Σ (−1)^r x^{2r} / (2r+1)!`.
    pub fn sinc(order: usize) -> Self {
        let coefficients = (0..=order)
            .map(|r| {
                let v = Rational::new(BigInt::one(), factorial(2 * r as u32 + 1));
                if r % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect();
        Self::new(coefficients)
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[Rational] {
        &self.coefficients
    }

    pub fn mul(&self, other: &SeriesPoly) -> SeriesPoly {
        let order = self.order().min(other.order());
        let coefficients = (0..=order)
            .map(|r| {
                (0..=r)
                    .map(|i| &self.coefficients[i] * &other.coefficients[r - i])
                    .sum()
            })
            .collect();
        SeriesPoly::new(coefficients)
    }

    /// Solves `self · inv = 1` coefficient by coefficient. Needs a nonzero constant term.
    pub fn reciprocal(&self) -> SeriesPoly {
        let lead = &self.coefficients[0];
        assert!(
            !lead.is_zero(),
            "series reciprocal needs a nonzero constant term"
        );
        let mut inv: Vec<Rational> = Vec::with_capacity(self.coefficients.len());
        inv.push(lead.recip());
        for r in 1..=self.order() {
            let s: Rational = (1..=r).map(|i| &self.coefficients[i] * &inv[r - i]).sum();
            inv.push(-s / lead);
        }
        SeriesPoly::new(inv)
    }

    pub fn pow(&self, exponent: u32) -> SeriesPoly {
        (0..exponent).fold(SeriesPoly::one(self.order()), |acc, _| acc.mul(self))
    }
}

/// `b_0^{(n)}, …, b_{2K}^{(n)}` from `csc^n x = x^{−n} (sin(x)/x)^{−n}`.
pub fn csc_series_oracle(n: u32, order: usize) -> Vec<Rational> {
    assert!(n >= 1, "csc^n needs n >= 1");
    SeriesPoly::sinc(order)
        .reciprocal()
        .pow(n)
        .coefficients()
        .to_vec()
}

/// Exact PMF by iterated direct convolution of the component mass functions.
pub fn discrete_conv_oracle(dsum: &DiscreteSum) -> Result<BTreeMap<i64, Rational>> {
    let points: u128 = dsum
        .components()
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(u128::from(c.width())))
        .unwrap_or(u128::MAX);
    if points > LATTICE_CAP {
        return Err(Error::OracleCapacity {
            points,
            cap: LATTICE_CAP,
        });
    }

    // Counts of lattice tuples per sum value; index 0 is the lowest value.
    let mut counts: Vec<u64> = vec![1];
    let mut lowest: i64 = 0;
    for c in dsum.components() {
        let width = c.width() as usize;
        let mut next = vec![0u64; counts.len() + width - 1];
        for (i, &v) in counts.iter().enumerate() {
            for slot in &mut next[i..i + width] {
                *slot += v;
            }
        }
        counts = next;
        lowest -= i64::from(c.m);
    }

    let total = BigInt::from(points);
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            (
                lowest + i as i64,
                Rational::new(BigInt::from(v), total.clone()),
            )
        })
        .collect())
}

/// Density sampled at `x_i = i · step` for consecutive `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub first_index: i64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn x(&self, offset: usize) -> f64 {
        (self.first_index + offset as i64) as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (self.x(i), v))
    }

    /// Value at the grid node nearest to `x`; zero off the grid.
    pub fn at(&self, x: f64) -> f64 {
        let i = (x / self.step).round() as i64 - self.first_index;
        usize::try_from(i)
            .ok()
            .and_then(|i| self.values.get(i))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Numerical density by iterated trapezoid integration on the grid `x_i = i·h`.
///
/// Convolving a density `f` with `U[c − a, c + a]` gives
/// `(F(x − c + a) − F(x − c − a)) / 2a`, where `F` is the running integral of
/// `f`. The first component's `F` is known in closed form; after that `F` is
/// the cumulative trapezoid integral of the grid values, evaluated between
/// nodes by integrating the linear interpolant exactly. The error is `O(h²)`
/// and concentrates within a cell or so of the kinks of the true density.
/// A single component is returned as the box sampled at the nodes, with the
/// midpoint value at any node that falls exactly on an edge.
pub fn continuous_conv_oracle(sum: &ContinuousSum, grid_step: f64) -> Result<GridDensity> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    let h = grid_step;
    let boxes: Vec<(f64, f64)> = sum
        .components()
        .iter()
        .map(|c| (to_f64(c.center()), to_f64(c.half_width())))
        .collect();
    let nodes = |lo: f64, hi: f64| ((lo / h).floor() as i64, (hi / h).ceil() as i64);

    let (c0, a0) = boxes[0];
    let (mut lo, mut hi) = (c0 - a0, c0 + a0);
    if boxes.len() == 1 {
        let (first, last) = nodes(lo, hi);
        let values = (first..=last)
            .map(|i| {
                let x = i as f64 * h;
                if x > lo && x < hi {
                    1.0 / (2.0 * a0)
                } else if x == lo || x == hi {
                    0.25 / a0
                } else {
                    0.0
                }
            })
            .collect();
        return Ok(GridDensity {
            first_index: first,
            step: h,
            values,
        });
    }

    let mut running = RunningIntegral::Box { lo, hi };
    let mut grid = GridDensity {
        first_index: 0,
        step: h,
        values: Vec::new(),
    };
    for &(c, a) in &boxes[1..] {
        lo += c - a;
        hi += c + a;
        let (first, last) = nodes(lo, hi);
        let values = (first..=last)
            .map(|i| {
                let x = i as f64 * h - c;
                (running.at(x + a) - running.at(x - a)) / (2.0 * a)
            })
            .collect();
        grid = GridDensity {
            first_index: first,
            step: h,
            values,
        };
        running = RunningIntegral::from_grid(&grid);
    }
    Ok(grid)
}

/// `∫_{−∞}^x f` for the density of a partial sum.
enum RunningIntegral {
    Box {
        lo: f64,
        hi: f64,
    },
    Grid {
        first_index: i64,
        step: f64,
        values: Vec<f64>,
        cumulative: Vec<f64>,
    },
}

impl RunningIntegral {
    fn from_grid(grid: &GridDensity) -> Self {
        let h = grid.step;
        let mut cumulative = Vec::with_capacity(grid.values.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &v in &grid.values {
            acc += 0.5 * h * (prev + v);
            cumulative.push(acc);
            prev = v;
        }
        RunningIntegral::Grid {
            first_index: grid.first_index,
            step: h,
            values: grid.values.clone(),
            cumulative,
        }
    }

    fn at(&self, x: f64) -> f64 {
        match self {
            RunningIntegral::Box { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            RunningIntegral::Grid {
                first_index,
                step,
                values,
                cumulative,
            } => {
                let pos = x / step - *first_index as f64;
                if pos < 0.0 {
                    return 0.0;
                }
                let j = pos.floor() as usize;
                if j + 1 >= values.len() {
                    // the last node carries zero density
                    return *cumulative.last().unwrap_or(&0.0);
                }
                let t = pos - j as f64;
                let (f0, f1) = (values[j], values[j + 1]);
                cumulative[j] + step * (f0 * t + 0.5 * (f1 - f0) * t * t)
            }
        }
    }
}

/// Every point `Σ c_j + Σ ε_j a_j` where some vertex term of the density
/// changes polynomial piece. Sorted and deduplicated.
pub fn breakpoints(sum: &ContinuousSum) -> Vec<f64> {
    let comps = sum.components();
    let center: f64 = comps.iter().map(|c| to_f64(c.center())).sum();
    let mut points: Vec<f64> = (0u64..1 << comps.len())
        .map(|bits| {
            center
                + comps
                    .iter()
                    .enumerate()
                    .map(|(j, c)| {
                        let a = to_f64(c.half_width());
                        if bits >> j & 1 == 1 {
                            a
                        } else {
                            -a
                        }
                    })
                    .sum::<f64>()
        })
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    points
}

/// `count` draws of `Σ U_j`, `U_j ~ U[c_j − a_j, c_j + a_j]`, reproducible from `seed`.
pub fn sample_sum(sum: &ContinuousSum, count: usize, seed: u64) -> impl Iterator<Item = f64> {
    let bounds: Vec<(f64, f64)> = sum
        .components()
        .iter()
        .map(|c| {
            let a = to_f64(c.half_width());
            (to_f64(c.center()) - a, 2.0 * a)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(move |_| {
        bounds
            .iter()
            .map(|&(lo, width)| lo + width * rng.gen::<f64>())
            .sum()
    })
}

/// Kolmogorov–Smirnov distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
pub fn ks_critical_value_1pct(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contsum::{ContinuousComponent, EvalMode};
    use crate::numeric::{int, rat};

    fn identical(n: usize, a: i64) -> ContinuousSum {
        ContinuousSum::identical(n, int(0), int(a)).unwrap()
    }

    #[test]
    fn csc_series_examples() {
        assert_eq!(
            csc_series_oracle(1, 2),
            vec![int(1), rat(1, 6), rat(7, 360)]
        );
        assert_eq!(csc_series_oracle(2, 2), vec![int(1), rat(1, 3), rat(1, 15)]);
        for n in 1..=6 {
            assert_eq!(csc_series_oracle(n, 0), vec![int(1)]);
        }
    }

    #[test]
    fn csc_squared_matches_cot_derivative() {
        // cot x = 1/x − Σ_{r≥1} 2^{2r} |B_{2r}| x^{2r−1}/(2r)!, so
        // csc² x = −cot' x = 1/x² + 1/3 + x²/15 + 2x⁴/189 + …
        assert_eq!(
            csc_series_oracle(2, 3),
            vec![int(1), rat(1, 3), rat(1, 15), rat(2, 189)]
        );
    }

    #[test]
    fn series_reciprocal_roundtrip() {
        let s = SeriesPoly::sinc(6);
        assert_eq!(s.mul(&s.reciprocal()), SeriesPoly::one(6));
        assert_eq!(s.pow(0), SeriesPoly::one(6));
    }

    #[test]
    fn discrete_oracle_examples() {
        let one = discrete_conv_oracle(&DiscreteSum::from_half_ranges(&[1]).unwrap()).unwrap();
        assert_eq!(
            one.values().cloned().collect::<Vec<_>>(),
            vec![rat(1, 3); 3]
        );
        let two = discrete_conv_oracle(&DiscreteSum::from_half_ranges(&[1, 1]).unwrap()).unwrap();
        assert_eq!(two[&-2], rat(1, 9));
        assert_eq!(two[&0], rat(3, 9));
        assert_eq!(two[&2], rat(1, 9));
        let three =
            discrete_conv_oracle(&DiscreteSum::from_half_ranges(&[1, 1, 1]).unwrap()).unwrap();
        assert_eq!(three[&0], rat(7, 27));
        assert_eq!(three.values().sum::<Rational>(), int(1));
    }

    #[test]
    fn discrete_oracle_cap() {
        let big = DiscreteSum::from_half_ranges(&[100, 100, 100, 100]).unwrap();
        assert!(matches!(
            discrete_conv_oracle(&big),
            Err(Error::OracleCapacity { .. })
        ));
    }

    #[test]
    fn grid_oracle_triangle_and_irwin_hall() {
        let g = continuous_conv_oracle(&identical(2, 1), 1e-3).unwrap();
        assert!((g.at(0.0) - 0.5).abs() < 1e-4);
        let g = continuous_conv_oracle(&identical(3, 1), 1e-3).unwrap();
        assert!((g.at(0.0) - 0.375).abs() < 1e-4);
        let total: f64 = g.values.iter().sum::<f64>() * g.step;
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_oracle_single_box() {
        let s = ContinuousSum::new(vec![ContinuousComponent::new(rat(1, 3), rat(1, 2)).unwrap()])
            .unwrap();
        let g = continuous_conv_oracle(&s, 1e-2).unwrap();
        for (x, v) in g.points() {
            let inside = x > -1.0 / 6.0 + 0.01 && x < 5.0 / 6.0 - 0.01;
            let outside = !(-1.0 / 6.0 - 0.01..=5.0 / 6.0 + 0.01).contains(&x);
            if inside {
                assert!((v - 1.0).abs() < 1e-12);
            } else if outside {
                assert_eq!(v, 0.0);
            }
        }
        assert!(continuous_conv_oracle(&s, 0.0).is_err());
        assert!(continuous_conv_oracle(&s, f64::NAN).is_err());
    }

    #[test]
    fn breakpoints_of_two_boxes() {
        let s = ContinuousSum::new(vec![
            ContinuousComponent::new(int(0), int(1)).unwrap(),
            ContinuousComponent::new(int(0), int(2)).unwrap(),
        ])
        .unwrap();
        assert_eq!(breakpoints(&s), vec![-3.0, -1.0, 1.0, 3.0]);
    }

    #[test]
    fn sampler_is_reproducible_and_centered() {
        let s = identical(4, 1);
        let a: Vec<f64> = sample_sum(&s, 1000, 7).collect();
        let b: Vec<f64> = sample_sum(&s, 1000, 7).collect();
        assert_eq!(a, b);
        assert_ne!(a, sample_sum(&s, 1000, 8).collect::<Vec<_>>());
        assert!(a.iter().all(|x| x.abs() <= 4.0));
    }

    #[test]
    fn sampler_moments_at_scale() {
        let s = identical(4, 1);
        let n = 1_000_000;
        let draws: Vec<f64> = sample_sum(&s, n, 2024).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((var - 4.0 / 3.0).abs() < 0.02 * 4.0 / 3.0, "var {var}");
    }

    #[test]
    fn ks_statistic_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(samples, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
        assert!(ks_critical_value_1pct(10_000) - 0.0163 < 1e-12);
    }

    #[test]
    fn ks_rejection_rate_across_seeds() {
        let sum = ContinuousSum::new(vec![
            ContinuousComponent::from_f64(0.0, 1.0).unwrap(),
            ContinuousComponent::from_f64(1.0, 0.5).unwrap(),
        ])
        .unwrap();
        let count = 10_000;
        let critical = ks_critical_value_1pct(count);
        let rejected = (0..400u64)
            .filter(|&seed| {
                let draws = sample_sum(&sum, count, seed).collect();
                ks_statistic(draws, |x| {
                    sum.cdf(x, EvalMode::Float).unwrap().value.to_f64()
                }) >= critical
            })
            .count();
        assert!(rejected <= 20, "{rejected} of 400 seeds rejected");
    }
}
