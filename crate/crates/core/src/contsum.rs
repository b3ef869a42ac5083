//! Density, CDF, quantiles and moments of a sum of continuous uniforms.
//!
//! With `X_j ~ U[c_j − a_j, c_j + a_j]` the density of `S = ΣX_j` is
//!
//! ```text
//! f_n(x) = Σ_ε ρ_ε · (x + Σ_j (ε_j a_j − c_j))_+^{n−1}  /  ((n−1)! · 2^n · Π a_j)
//! ```
//!
//! where `ε` runs over the `2^n` sign vectors, `ρ_ε = Π ε_j` and
//! `y_+^k = y^k · τ(y)` with `τ(0) = 1/2`. The sign-function form
//! (`density_sign`) replaces `τ` by `sign` and doubles the denominator.
//!
//! The vertex sum alternates over `2^n` terms of similar magnitude, so
//! [`EvalMode::Float`] always reports `Σ|terms| / |result|` next to the value.
//! A float result is trustworthy only when that estimate times machine
//! epsilon is well below the relative error you need; otherwise use
//! [`EvalMode::Exact`].

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::numeric::{
    common_denominator, factorial, rational_from_f64, to_f64, NeumaierSum, Rational,
};
use crate::{for_each_vertex, N_MAX};

/// One uniform summand on `[center − half_width, center + half_width]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContinuousComponent {
    center: Rational,
    half_width: Rational,
}

impl ContinuousComponent {
    pub fn new(center: Rational, half_width: Rational) -> Result<Self> {
        if !half_width.is_positive() {
            return Err(Error::NonPositiveHalfWidth(half_width.to_string()));
        }
        Ok(Self { center, half_width })
    }

    /// Exact rational value of the given doubles.
    pub fn from_f64(center: f64, half_width: f64) -> Result<Self> {
        Self::new(rational_from_f64(center)?, rational_from_f64(half_width)?)
    }

    /// Uniform on `[lo, hi]`.
    pub fn on_interval(lo: Rational, hi: Rational) -> Result<Self> {
        let two = Rational::from_integer(BigInt::from(2));
        Self::new((&lo + &hi) / &two, (hi - lo) / two)
    }

    pub fn center(&self) -> &Rational {
        &self.center
    }

    pub fn half_width(&self) -> &Rational {
        &self.half_width
    }

    pub fn shifted(&self, delta: &Rational) -> Self {
        Self {
            center: &self.center + delta,
            half_width: self.half_width.clone(),
        }
    }
}

/// A sign vector `ε ∈ {−1, +1}^n`, one vertex of the hyperbox `Π [−a_j, a_j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignVector {
    entries: Vec<i8>,
}

impl SignVector {
    /// Bit `j` of `bits` set means `ε_j = +1`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        let entries = (0..n)
            .map(|j| if bits >> j & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { entries }
    }

    /// All `2^n` sign vectors in Gray-code order.
    pub fn all(n: usize) -> impl Iterator<Item = SignVector> {
        (0u64..1 << n).map(move |i| Self::from_bits(n, i ^ (i >> 1)))
    }

    pub fn entries(&self) -> &[i8] {
        &self.entries
    }

    /// `ρ_ε = Π ε_j`.
    pub fn parity(&self) -> i8 {
        self.entries.iter().product()
    }

    pub fn dot(&self, values: &[Rational]) -> Rational {
        self.entries
            .iter()
            .zip(values)
            .map(|(&e, v)| if e > 0 { v.clone() } else { -v })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalMode {
    /// Arbitrary-precision rationals; the reference result.
    #[default]
    Exact,
    /// Doubles with compensated summation and a condition estimate.
    Float,
}

/// An evaluation point, either an exact rational or a double.
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Exact(Rational),
    Float(f64),
}

impl From<f64> for Point {
    fn from(value: f64) -> Self {
        Point::Float(value)
    }
}

impl From<i64> for Point {
    fn from(value: i64) -> Self {
        Point::Exact(Rational::from_integer(BigInt::from(value)))
    }
}

impl From<Rational> for Point {
    fn from(value: Rational) -> Self {
        Point::Exact(value)
    }
}

impl From<&Rational> for Point {
    fn from(value: &Rational) -> Self {
        Point::Exact(value.clone())
    }
}

impl Point {
    fn exact(&self) -> Result<Rational> {
        match self {
            Point::Exact(r) => Ok(r.clone()),
            Point::Float(f) => rational_from_f64(*f),
        }
    }

    fn float(&self) -> f64 {
        match self {
            Point::Exact(r) => to_f64(r),
            Point::Float(f) => *f,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Exact(Rational),
    Float(f64),
}

impl Value {
    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(r) => to_f64(r),
            Value::Float(f) => *f,
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Value::Exact(r) => Some(r),
            Value::Float(_) => None,
        }
    }

    pub fn into_exact(self) -> Option<Rational> {
        match self {
            Value::Exact(r) => Some(r),
            Value::Float(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Exact(r) => write!(f, "{r}"),
            Value::Float(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub value: Value,
    /// `Σ|terms| / |value|`, Float mode only. Infinite when the terms cancel to zero.
    pub condition_estimate: Option<f64>,
}

impl EvalResult {
    fn exact(value: Rational) -> Self {
        Self {
            value: Value::Exact(value),
            condition_estimate: None,
        }
    }

    fn float(value: f64, condition: f64) -> Self {
        Self {
            value: Value::Float(value),
            condition_estimate: Some(condition),
        }
    }
}

/// How a vertex term is weighted by the sign of its argument `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Weight {
    /// `τ(y)`: 1, 1/2, 0 for positive, zero, negative.
    Tau,
    /// `sign(y)`.
    Sign,
    /// Unweighted: the polynomial whose vanishing makes the two forms agree.
    Plain,
}

/// Condition estimates at or below this make a float CDF value usable for bisection.
const TRUSTED_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContinuousSum {
    components: Vec<ContinuousComponent>,
    float: FloatView,
}

/// Double-precision copies of the parameters, derived once at construction.
#[derive(Debug, Clone)]
struct FloatView {
    twice_a: Vec<f64>,
    offsets: Vec<f64>,
    lo: f64,
    hi: f64,
    half_width_product: f64,
}

impl FloatView {
    fn new(components: &[ContinuousComponent]) -> Self {
        let center: Rational = components.iter().map(|c| &c.center).sum();
        let spread: Rational = components.iter().map(|c| &c.half_width).sum();
        Self {
            twice_a: components
                .iter()
                .map(|c| 2.0 * to_f64(&c.half_width))
                .collect(),
            offsets: components
                .iter()
                .flat_map(|c| [-to_f64(&c.center), -to_f64(&c.half_width)])
                .collect(),
            lo: to_f64(&(&center - &spread)),
            hi: to_f64(&(center + spread)),
            half_width_product: components.iter().map(|c| to_f64(&c.half_width)).product(),
        }
    }
}

// derived from `components`, so it takes no part in equality
impl PartialEq for FloatView {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for FloatView {}

impl std::hash::Hash for FloatView {
    fn hash<H: std::hash::Hasher>(&self, _: &mut H) {}
}

impl ContinuousSum {
    pub fn new(components: Vec<ContinuousComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty);
        }
        if components.len() > N_MAX {
            return Err(Error::Capacity {
                n: components.len(),
            });
        }
        let float = FloatView::new(&components);
        Ok(Self { components, float })
    }

    /// `n` copies of `U[center − half_width, center + half_width]`.
    pub fn identical(n: usize, center: Rational, half_width: Rational) -> Result<Self> {
        let c = ContinuousComponent::new(center, half_width)?;
        Self::new(vec![c; n])
    }

    pub fn components(&self) -> &[ContinuousComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// `[Σ(c_j − a_j), Σ(c_j + a_j)]`.
    pub fn support(&self) -> (Rational, Rational) {
        let center: Rational = self.components.iter().map(|c| &c.center).sum();
        let spread: Rational = self.components.iter().map(|c| &c.half_width).sum();
        (&center - &spread, center + spread)
    }

    /// Mean `Σ c_j` and variance `Σ a_j² / 3`.
    pub fn moments(&self) -> (Rational, Rational) {
        let mean = self.components.iter().map(|c| &c.center).sum();
        let three = Rational::from_integer(BigInt::from(3));
        let var = self
            .components
            .iter()
            .map(|c| &c.half_width * &c.half_width / &three)
            .sum();
        (mean, var)
    }

    fn half_width_product(&self) -> Rational {
        self.components.iter().map(|c| &c.half_width).product()
    }

    pub fn density_tau(&self, x: impl Into<Point>, mode: EvalMode) -> Result<EvalResult> {
        self.evaluate(x.into(), mode, Weight::Tau, self.order() - 1)
    }

    pub fn density_sign(&self, x: impl Into<Point>, mode: EvalMode) -> Result<EvalResult> {
        self.evaluate(x.into(), mode, Weight::Sign, self.order() - 1)
    }

    /// Termwise antiderivative of the τ-form density: every term is zero
    /// left of the support, so no integration constant appears.
    pub fn cdf(&self, x: impl Into<Point>, mode: EvalMode) -> Result<EvalResult> {
        self.evaluate(x.into(), mode, Weight::Tau, self.order())
    }

    /// Unweighted vertex sum `Σ_ε ρ_ε (x + Σ(ε_j a_j − c_j))^{n−1}`; identically zero.
    pub fn cool_identity_residual(&self, x: &Rational) -> Rational {
        let (sum, scale) = self.vertex_sum_exact(x, self.order() - 1, Weight::Plain);
        Rational::new(sum, scale)
    }

    /// Smallest `x` in the support with `cdf(x) ≥ q`, to within
    /// `2^-40 · (hi − lo)`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain(q));
        }
        let (lo, hi) = self.support();
        let (mut lo, mut hi) = (to_f64(&lo), to_f64(&hi));
        if q == 0.0 {
            return Ok(lo);
        }
        if q == 1.0 {
            return Ok(hi);
        }
        let tol = (hi - lo) * 2f64.powi(-40);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf_reliable(mid)? < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Float CDF, falling back to exact evaluation when cancellation is severe.
    fn cdf_reliable(&self, x: f64) -> Result<f64> {
        let r = self.cdf(x, EvalMode::Float)?;
        match r.condition_estimate {
            Some(cond) if cond <= TRUSTED_CONDITION => Ok(r.value.to_f64()),
            _ => Ok(self.cdf(x, EvalMode::Exact)?.value.to_f64()),
        }
    }

    fn order(&self) -> u32 {
        self.components.len() as u32
    }

    fn evaluate(&self, x: Point, mode: EvalMode, weight: Weight, power: u32) -> Result<EvalResult> {
        let n = self.order();
        let is_cdf = power == n;
        // (power)! · 2^n · Π a_j, doubled for the sign form.
        match mode {
            EvalMode::Exact => {
                let mut norm_int = factorial(power) << n as usize;
                if weight == Weight::Sign {
                    norm_int <<= 1;
                }
                let x = x.exact()?;
                let (sum, scale) = self.vertex_sum_exact(&x, power, weight);
                let value = Rational::new(sum, scale * norm_int) / self.half_width_product();
                Ok(EvalResult::exact(value))
            }
            EvalMode::Float => {
                let xf = x.float();
                if xf.is_nan() {
                    return Err(Error::NotRational(xf));
                }
                // the f64 bounds are correctly rounded, so only a tie needs the exact check
                let (mut below, mut above) = (xf < self.float.lo, xf > self.float.hi);
                if xf.is_finite() && (xf == self.float.lo || xf == self.float.hi) {
                    let (lo, hi) = self.support();
                    let exact_x = x.exact()?;
                    below = exact_x < lo;
                    above = exact_x > hi;
                }
                if below || above {
                    let v = if is_cdf && above { 1.0 } else { 0.0 };
                    return Ok(EvalResult::float(v, 1.0));
                }
                let (sum, abs_sum) = self.vertex_sum_float(xf, power, weight);
                let norm = (1..=power).map(f64::from).product::<f64>()
                    * 2f64.powi(n as i32 + i32::from(weight == Weight::Sign))
                    * self.float.half_width_product;
                let condition = if abs_sum == 0.0 {
                    1.0
                } else {
                    abs_sum / sum.abs()
                };
                Ok(EvalResult::float(sum / norm, condition))
            }
        }
    }

    /// Exact vertex sum, returned as `(numerator, denominator)` of
    /// `Σ_ε ρ_ε · y_ε^power · w(y_ε)`.
    ///
    /// All inputs are scaled to integers by their common denominator `D`, so
    /// the running argument `Y = D·y` is a `BigInt` updated by one addition per
    /// Gray-code step. Weights are doubled to keep `τ(0) = 1/2` integral.
    fn vertex_sum_exact(&self, x: &Rational, power: u32, weight: Weight) -> (BigInt, BigInt) {
        let d = common_denominator(
            std::iter::once(x).chain(
                self.components
                    .iter()
                    .flat_map(|c| [&c.center, &c.half_width]),
            ),
        );
        let scale = |r: &Rational| r.numer() * (&d / r.denom());
        let twice_a: Vec<BigInt> = self
            .components
            .iter()
            .map(|c| scale(&c.half_width) * 2)
            .collect();

        let mut y = scale(x);
        for c in &self.components {
            y -= scale(&c.center) + scale(&c.half_width);
        }
        let mut parity: i8 = if self.components.len().is_multiple_of(2) {
            1
        } else {
            -1
        };
        let mut acc = BigInt::zero();

        for_each_vertex(self.components.len(), |flip| {
            if let Some((j, s)) = flip {
                if s > 0 {
                    y += &twice_a[j];
                } else {
                    y -= &twice_a[j];
                }
                parity = -parity;
            }
            let term = match (weight, y.sign()) {
                (Weight::Tau, num_bigint::Sign::Minus) => return,
                (Weight::Sign, num_bigint::Sign::NoSign) => return,
                (Weight::Tau, num_bigint::Sign::NoSign) => {
                    // 0^0 · τ(0), doubled
                    if power == 0 {
                        BigInt::one()
                    } else {
                        return;
                    }
                }
                (Weight::Sign, num_bigint::Sign::Minus) => -(y.pow(power) << 1usize),
                _ => y.pow(power) << 1usize,
            };
            if parity > 0 {
                acc += term;
            } else {
                acc -= term;
            }
        });

        (acc, num_traits::pow(d, power as usize) * 2)
    }

    /// Float vertex sum and the sum of absolute terms.
    fn vertex_sum_float(&self, x: f64, power: u32, weight: Weight) -> (f64, f64) {
        let twice_a = &self.float.twice_a;
        let mut y = NeumaierSum::new(x);
        for &offset in &self.float.offsets {
            y += offset;
        }
        let mut parity = if self.components.len().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        let mut acc = NeumaierSum::default();
        let mut abs_sum = 0.0;
        let exp = power as i32;

        for_each_vertex(self.components.len(), |flip| {
            if let Some((j, s)) = flip {
                y += f64::from(s) * twice_a[j];
                parity = -parity;
            }
            let arg = y.value();
            let w = match weight {
                Weight::Tau if arg > 0.0 => 1.0,
                Weight::Tau if arg == 0.0 => 0.5,
                Weight::Tau => 0.0,
                Weight::Sign => arg.signum() * f64::from(u8::from(arg != 0.0)),
                Weight::Plain => 1.0,
            };
            if w == 0.0 {
                return;
            }
            let term = w * arg.powi(exp);
            acc += parity * term;
            abs_sum += term.abs();
        });

        (acc.value(), abs_sum)
    }
}

/// Density of the sum of `n` identical `U[−a, a]`, in `O(n)` terms:
/// `Σ_k (−1)^k C(n,k) (x + (n − 2k)a)_+^{n−1} / ((n−1)! (2a)^n)`.
pub fn density_feller(n: u32, a: &Rational, x: &Rational) -> Result<Rational> {
    if n == 0 {
        return Err(Error::Empty);
    }
    if !a.is_positive() {
        return Err(Error::NonPositiveHalfWidth(a.to_string()));
    }
    let mut acc = Rational::zero();
    let mut binom = BigInt::one();
    for k in 0..=n {
        let shift = Rational::from_integer(BigInt::from(i64::from(n) - 2 * i64::from(k)));
        let y = x + shift * a;
        let term = positive_part_power(&y, n - 1) * Rational::from_integer(binom.clone());
        if k % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
        binom = binom * (n - k) / (k + 1);
    }
    let two_a = a * Rational::from_integer(BigInt::from(2));
    Ok(acc / (Rational::from_integer(factorial(n - 1)) * num_traits::pow(two_a, n as usize)))
}

/// Density of the sum of `U[0, a_j]` by inclusion–exclusion over subsets:
/// `Σ_S (−1)^{|S|} (x − Σ_{j∈S} a_j)_+^{n−1} / ((n−1)! Π a_j)`.
///
/// Uses the midpoint convention at the ends of each interval, so for `n = 1`
/// the value at `0` and `a_1` is `1/(2 a_1)`.
pub fn density_olds(a: &[Rational], x: &Rational) -> Result<Rational> {
    if a.is_empty() {
        return Err(Error::Empty);
    }
    if a.len() > N_MAX {
        return Err(Error::Capacity { n: a.len() });
    }
    if let Some(bad) = a.iter().find(|v| !v.is_positive()) {
        return Err(Error::NonPositiveHalfWidth(bad.to_string()));
    }
    let n = a.len();
    let power = n as u32 - 1;
    let mut acc = Rational::zero();
    for subset in 0u64..1 << n {
        let shift: Rational = (0..n).filter(|j| subset >> j & 1 == 1).map(|j| &a[j]).sum();
        let term = positive_part_power(&(x - shift), power);
        if subset.count_ones() % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    let prod: Rational = a.iter().product();
    Ok(acc / (Rational::from_integer(factorial(power)) * prod))
}

/// `y^k · τ(y)`.
fn positive_part_power(y: &Rational, k: u32) -> Rational {
    if y.is_positive() {
        num_traits::pow(y.clone(), k as usize)
    } else if y.is_zero() && k == 0 {
        Rational::new(BigInt::one(), BigInt::from(2))
    } else {
        Rational::zero()
    }
}
