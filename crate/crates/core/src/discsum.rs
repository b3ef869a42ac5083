//! Probability mass function of a sum of discrete uniforms on `[−m_j, m_j]`.
//!
//! ```text
//! g_n(p) = M / 2^{n−1} · Σ_{k=0}^{⌊(n−1)/2⌋} (−1)^k b_{2k}^{(n)} / (n−2k−1)!
//!                       · Σ_ε ρ_ε (2p + Σ_j (2m_j+1) ε_j)_+^{n−2k−1}
//! ```
//!
//! with `M = Π (2m_j+1)^{−1}` and `b_{2k}^{(n)}` the Laurent coefficients of
//! `csc^n x = Σ_k b_{2k}^{(n)} x^{2k−n}`. The coefficients themselves come out
//! of the explicit triple sum with their own `(−1)^k`, which makes every
//! `b_{2k}^{(n)}` positive; the outer `(−1)^k` above is applied on top of that.
//! Everything here is exact.

use std::collections::{BTreeMap, HashMap};
use std::sync::{OnceLock, RwLock};

use num_bigint::{BigInt, Sign};
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::numeric::{common_denominator, factorial, Rational};
use crate::{for_each_vertex, N_MAX};

/// Integer uniform on the `2m + 1` points `−m..=m`. `m = 0` is a point mass at 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiscreteComponent {
    pub m: u32,
}

impl DiscreteComponent {
    pub fn new(m: u32) -> Self {
        Self { m }
    }

    pub fn width(&self) -> u64 {
        2 * u64::from(self.m) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteSum {
    components: Vec<DiscreteComponent>,
    mass_norm: Rational,
    /// `M (−1)^k b_{2k}^{(n)} / ((n−2k−1)! 2^n)` for each order `k`,
    /// as numerators over the shared denominator `weight_den`.
    order_weights: Vec<BigInt>,
    weight_den: BigInt,
}

impl DiscreteSum {
    pub fn new(components: Vec<DiscreteComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty);
        }
        if components.len() > N_MAX {
            return Err(Error::Capacity {
                n: components.len(),
            });
        }
        let lattice: BigInt = components.iter().map(|c| BigInt::from(c.width())).product();
        let mass_norm = Rational::new(BigInt::one(), lattice);
        let n = components.len() as u32;
        let weights: Vec<Rational> = (0..=(n - 1) / 2)
            .map(|k| {
                let w = csc_coefficient(n, k) * &mass_norm
                    / Rational::from_integer(factorial(n - 2 * k - 1) << n as usize);
                if k % 2 == 0 {
                    w
                } else {
                    -w
                }
            })
            .collect();
        let weight_den = common_denominator(&weights);
        let order_weights = weights
            .iter()
            .map(|w| (w * &weight_den).to_integer())
            .collect();
        Ok(Self {
            components,
            mass_norm,
            order_weights,
            weight_den,
        })
    }

    pub fn from_half_ranges(ms: &[u32]) -> Result<Self> {
        Self::new(ms.iter().copied().map(DiscreteComponent::new).collect())
    }

    pub fn components(&self) -> &[DiscreteComponent] {
        &self.components
    }

    pub fn half_ranges(&self) -> Vec<u32> {
        self.components.iter().map(|c| c.m).collect()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `M = Π (2m_j+1)^{−1}`.
    pub fn mass_norm(&self) -> &Rational {
        &self.mass_norm
    }

    /// The support is `−bound..=bound` with `bound = Σ m_j`.
    pub fn support_bound(&self) -> i64 {
        self.components.iter().map(|c| i64::from(c.m)).sum()
    }

    pub fn pmf_tau(&self, p: i64) -> Rational {
        // τ sums are doubled, which turns M / 2^{n−1} into M / 2^n
        self.combine(&self.vertex_sums(p, Weight::Tau))
    }

    pub fn pmf_sign(&self, p: i64) -> Rational {
        // doubled sums over M / 2^n
        self.combine(&self.vertex_sums(p, Weight::Sign)) / Rational::from_integer(BigInt::from(2))
    }

    /// `g_n(p)` for every `p` in the support, in increasing order.
    pub fn pmf_full(&self) -> BTreeMap<i64, Rational> {
        let bound = self.support_bound();
        (-bound..=bound).map(|p| (p, self.pmf_tau(p))).collect()
    }

    /// `Σ_k order_weights[k] · S_k`.
    fn combine(&self, sums: &[BigInt]) -> Rational {
        let num: BigInt = self
            .order_weights
            .iter()
            .zip(sums)
            .map(|(w, s)| w * s)
            .sum();
        Rational::new(num, self.weight_den.clone())
    }

    /// For each `k ≤ ⌊(n−1)/2⌋`, the doubled vertex sum
    /// `2 Σ_ε ρ_ε Y_ε^{n−2k−1} w(Y_ε)` with `Y_ε = 2p + Σ(2m_j+1)ε_j`.
    fn vertex_sums(&self, p: i64, weight: Weight) -> Vec<BigInt> {
        match self.vertex_sums_i128(p, weight) {
            Some(sums) => sums.into_iter().map(BigInt::from).collect(),
            None => self.vertex_sums_big(p, weight),
        }
    }

    /// [`Self::vertex_sums`] in checked machine integers; `None` on overflow.
    fn vertex_sums_i128(&self, p: i64, weight: Weight) -> Option<Vec<i128>> {
        let n = self.components.len();
        let orders = (n - 1) / 2 + 1;
        let widths: Vec<i128> = self.components.iter().map(|c| c.width() as i128).collect();
        let mut y: i128 = 2 * i128::from(p) - widths.iter().sum::<i128>();
        let mut parity: i128 = if n.is_multiple_of(2) { 1 } else { -1 };
        let mut sums = vec![0i128; orders];
        let mut overflow = false;

        for_each_vertex(n, |flip| {
            if let Some((j, s)) = flip {
                y += 2 * i128::from(s) * widths[j];
                parity = -parity;
            }
            if overflow {
                return;
            }
            for (k, acc) in sums.iter_mut().enumerate() {
                let exp = (n - 2 * k - 1) as u32;
                let w = match (weight, y.signum()) {
                    (Weight::Tau, -1) | (Weight::Sign, 0) => continue,
                    (Weight::Tau, 0) if exp == 0 => 1,
                    (Weight::Tau, 0) => continue,
                    (Weight::Sign, -1) => -2,
                    _ => 2,
                };
                let next = if w == 1 {
                    Some(1)
                } else {
                    y.checked_pow(exp).and_then(|v| v.checked_mul(w))
                }
                .and_then(|term| term.checked_mul(parity))
                .and_then(|term| acc.checked_add(term));
                match next {
                    Some(v) => *acc = v,
                    None => overflow = true,
                }
            }
        });
        (!overflow).then_some(sums)
    }

    fn vertex_sums_big(&self, p: i64, weight: Weight) -> Vec<BigInt> {
        let n = self.components.len();
        let orders = (n - 1) / 2 + 1;
        let widths: Vec<i128> = self.components.iter().map(|c| c.width() as i128).collect();
        let mut y: i128 = 2 * i128::from(p) - widths.iter().sum::<i128>();
        let mut parity: i8 = if n.is_multiple_of(2) { 1 } else { -1 };
        let mut sums = vec![BigInt::zero(); orders];

        for_each_vertex(n, |flip| {
            if let Some((j, s)) = flip {
                y += 2 * i128::from(s) * widths[j];
                parity = -parity;
            }
            let sign = match y.signum() {
                1 => Sign::Plus,
                0 => Sign::NoSign,
                _ => Sign::Minus,
            };
            let base = BigInt::from(y);
            for (k, acc) in sums.iter_mut().enumerate() {
                let exp = (n - 2 * k - 1) as u32;
                let term = match (weight, sign) {
                    (Weight::Tau, Sign::Minus) | (Weight::Sign, Sign::NoSign) => continue,
                    (Weight::Tau, Sign::NoSign) if exp == 0 => BigInt::one(),
                    (Weight::Tau, Sign::NoSign) => continue,
                    (Weight::Sign, Sign::Minus) => -(base.pow(exp) << 1usize),
                    _ => base.pow(exp) << 1usize,
                };
                if parity > 0 {
                    *acc += term;
                } else {
                    *acc -= term;
                }
            }
        });
        sums
    }

    /// Appends a component, e.g. a point mass (`m = 0`).
    pub fn with_component(&self, component: DiscreteComponent) -> Result<Self> {
        let mut components = self.components.clone();
        components.push(component);
        Self::new(components)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Weight {
    Tau,
    Sign,
}

/// `g_2(p) = (M/2)(|p+m₁+m₂+1| − |p+m₁−m₂| − |p−m₁+m₂| + |p−m₁−m₂−1|)`.
pub fn pmf_n2_closed(m1: u32, m2: u32, p: i64) -> Rational {
    let (m1, m2) = (i64::from(m1), i64::from(m2));
    let twice = (p + m1 + m2 + 1).abs() - (p + m1 - m2).abs() - (p - m1 + m2).abs()
        + (p - m1 - m2 - 1).abs();
    Rational::new(
        BigInt::from(twice),
        BigInt::from(2 * (2 * m1 + 1) * (2 * m2 + 1)),
    )
}

/// Thread-safe memo of `b_{2k}^{(n)}` keyed by `(n, k)`.
#[derive(Debug, Default)]
pub struct CscCoefficientTable {
    entries: RwLock<HashMap<(u32, u32), Rational>>,
}

impl CscCoefficientTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Process-wide table used by [`csc_coefficient`].
    pub fn global() -> &'static CscCoefficientTable {
        static TABLE: OnceLock<CscCoefficientTable> = OnceLock::new();
        TABLE.get_or_init(CscCoefficientTable::new)
    }

    pub fn get(&self, n: u32, k: u32) -> Rational {
        if let Some(v) = self
            .entries
            .read()
            .expect("coefficient table poisoned")
            .get(&(n, k))
        {
            return v.clone();
        }
        let value = laurent_coefficient(n, k);
        self.entries
            .write()
            .expect("coefficient table poisoned")
            .entry((n, k))
            .or_insert(value)
            .clone()
    }

    pub fn len(&self) -> usize {
        self.entries
            .read()
            .expect("coefficient table poisoned")
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `b_{2k}^{(n)}`, the coefficient of `x^{2k−n}` in `csc^n x`. Memoized.
pub fn csc_coefficient(n: u32, k: u32) -> Rational {
    CscCoefficientTable::global().get(n, k)
}

/// Explicit triple sum:
/// `(−1)^k C(n+2k, n) Σ_{m=0}^{2k} n/(n+m) C(2k,m) / (2^m (2k+m)!) Σ_{r=0}^{m} (−1)^r C(m,r) (2r−m)^{2k+m}`.
pub fn laurent_coefficient(n: u32, k: u32) -> Rational {
    assert!(n >= 1, "csc^n needs n >= 1");
    let two_k = 2 * k;
    let mut outer = Rational::zero();
    for m in 0..=two_k {
        let mut inner = BigInt::zero();
        for r in 0..=m {
            let term =
                binomial(m, r) * BigInt::from(2 * i64::from(r) - i64::from(m)).pow(two_k + m);
            if r % 2 == 0 {
                inner += term;
            } else {
                inner -= term;
            }
        }
        let weight = Rational::new(
            BigInt::from(n) * binomial(two_k, m),
            BigInt::from(n + m) * (BigInt::one() << m as usize) * factorial(two_k + m),
        );
        outer += weight * Rational::from_integer(inner);
    }
    let value = outer * Rational::from_integer(binomial(n + two_k, n));
    if k.is_multiple_of(2) {
        value
    } else {
        -value
    }
}

fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    (0..k).fold(BigInt::one(), |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{int, rat};

    fn dsum(ms: &[u32]) -> DiscreteSum {
        DiscreteSum::from_half_ranges(ms).unwrap()
    }

    #[test]
    fn coefficient_examples() {
        for n in 1..=12 {
            assert_eq!(csc_coefficient(n, 0), int(1));
        }
        assert_eq!(csc_coefficient(1, 1), rat(1, 6));
        assert_eq!(csc_coefficient(2, 1), rat(1, 3));
        assert_eq!(csc_coefficient(1, 2), rat(7, 360));
        assert_eq!(csc_coefficient(2, 2), rat(1, 15));
        assert_eq!(csc_coefficient(1, 3), rat(31, 15120));
    }

    #[test]
    fn memo_table_is_consistent_across_threads() {
        let table = CscCoefficientTable::new();
        std::thread::scope(|scope| {
            for _ in 0..8 {
                scope.spawn(|| {
                    for n in 1..=5 {
                        for k in 0..=3 {
                            assert_eq!(table.get(n, k), laurent_coefficient(n, k));
                        }
                    }
                });
            }
        });
        assert_eq!(table.len(), 20);
    }

    #[test]
    fn pmf_tau_examples() {
        assert_eq!(dsum(&[2]).pmf_tau(0), rat(1, 5));
        assert_eq!(dsum(&[1, 1]).pmf_tau(0), rat(1, 3));
        assert_eq!(dsum(&[1, 1]).pmf_tau(2), rat(1, 9));
        assert_eq!(dsum(&[1, 2, 3]).pmf_tau(7), int(0));
        assert_eq!(dsum(&[1, 2, 3]).pmf_tau(-7), int(0));
    }

    #[test]
    fn pmf_sign_examples() {
        assert_eq!(dsum(&[2]).pmf_sign(2), rat(1, 5));
        assert_eq!(dsum(&[2]).pmf_sign(-2), rat(1, 5));
        assert_eq!(dsum(&[2]).pmf_sign(3), int(0));
        assert_eq!(dsum(&[1, 2]).pmf_sign(0), rat(1, 5));
        assert_eq!(dsum(&[1, 2]).pmf_sign(3), rat(1, 15));
    }

    #[test]
    fn pmf_full_examples() {
        let full = dsum(&[1]).pmf_full();
        assert_eq!(
            full.into_iter().collect::<Vec<_>>(),
            vec![(-1, rat(1, 3)), (0, rat(1, 3)), (1, rat(1, 3))]
        );
        let full = dsum(&[1, 1]).pmf_full();
        let expected = [rat(1, 9), rat(2, 9), rat(3, 9), rat(2, 9), rat(1, 9)];
        assert_eq!(full.values().cloned().collect::<Vec<_>>(), expected);
        let full = dsum(&[1, 2]).pmf_full();
        let expected = [1, 2, 3, 3, 3, 2, 1].map(|c| rat(c, 15));
        assert_eq!(full.values().cloned().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn closed_two_component_form() {
        assert_eq!(pmf_n2_closed(1, 1, 0), rat(1, 3));
        assert_eq!(pmf_n2_closed(1, 1, 3), int(0));
        assert_eq!(pmf_n2_closed(2, 3, -5), rat(1, 35));
        for m1 in 0..5 {
            for m2 in 0..5 {
                let s = dsum(&[m1, m2]);
                for p in -12..=12 {
                    assert_eq!(pmf_n2_closed(m1, m2, p), s.pmf_tau(p), "{m1} {m2} {p}");
                }
            }
        }
    }

    #[test]
    fn point_mass_components() {
        assert_eq!(
            dsum(&[0]).pmf_full().into_iter().collect::<Vec<_>>(),
            vec![(0, int(1))]
        );
        let base = dsum(&[2, 1]);
        let padded = base.with_component(DiscreteComponent::new(0)).unwrap();
        assert_eq!(base.pmf_full(), padded.pmf_full());
    }

    #[test]
    fn mass_norm_and_errors() {
        assert_eq!(dsum(&[1, 2, 0]).mass_norm(), &rat(1, 15));
        assert_eq!(DiscreteSum::new(vec![]).unwrap_err(), Error::Empty);
        assert!(matches!(
            DiscreteSum::from_half_ranges(&[1; N_MAX + 1]),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn symmetric_and_normalized() {
        let s = dsum(&[3, 1, 4, 1]);
        let full = s.pmf_full();
        let total: Rational = full.values().sum();
        assert_eq!(total, int(1));
        for (&p, v) in &full {
            assert_eq!(v, &full[&-p]);
            assert!(v >= &int(0));
        }
    }

    #[test]
    fn machine_integer_path_matches_bigint() {
        for ms in [&[3u32, 1, 4][..], &[0, 2, 2, 5], &[9; 7]] {
            let dsum = DiscreteSum::from_half_ranges(ms).unwrap();
            let bound = dsum.support_bound();
            for p in -bound - 1..=bound + 1 {
                for weight in [Weight::Tau, Weight::Sign] {
                    let small = dsum.vertex_sums_i128(p, weight).unwrap();
                    let small: Vec<BigInt> = small.into_iter().map(BigInt::from).collect();
                    assert_eq!(small, dsum.vertex_sums_big(p, weight));
                }
            }
        }
        let wide = DiscreteSum::from_half_ranges(&[50_000; 16]).unwrap();
        assert!(wide.vertex_sums_i128(3, Weight::Tau).is_none());
        assert_eq!(wide.pmf_tau(7), wide.pmf_tau(-7));
        assert_eq!(wide.pmf_tau(7), wide.pmf_sign(7));
        assert!(wide.pmf_tau(7) > Rational::zero());
    }
}
