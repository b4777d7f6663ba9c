//! Chebyshev interpolants of univariate functions on a closed interval.
//!
//! A [`ChebProxy`] stores the coefficients `c_0..c_m` of
//! `p(x) = Σ c_j T_j(s)`, `s = (2x - (a + b)) / (b - a)`, in the convention
//! where the first and last interpolation coefficients are already halved, so
//! `p` passes exactly through the Chebyshev–Lobatto nodes it was built from.
//! Evaluation always goes through the Clenshaw recurrence.

use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest degree [`adaptive_interpolate`] will try by default.
pub const DEFAULT_DEGREE_CAP: usize = 1 << 16;

/// Relative slack allowed when a query point falls just outside the interval.
const DOMAIN_SLACK: f64 = 1e-12;

/// A closed interval `[lo, hi]` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo < hi {
            Ok(Interval { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Affine map from the interval onto `[-1, 1]`.
    pub fn to_unit(&self, x: f64) -> f64 {
        (2.0 * x - (self.lo + self.hi)) / (self.hi - self.lo)
    }

    /// Inverse of [`Interval::to_unit`].
    pub fn from_unit(&self, s: f64) -> f64 {
        0.5 * (self.hi - self.lo) * s + 0.5 * (self.lo + self.hi)
    }

    fn slack(&self) -> f64 {
        DOMAIN_SLACK * self.lo.abs().max(self.hi.abs()).max(1.0)
    }

    /// Clamps `x` into the interval if it is within round-off distance.
    pub fn clamp_checked(&self, x: f64) -> Result<f64> {
        let tol = self.slack();
        if x >= self.lo - tol && x <= self.hi + tol {
            Ok(x.clamp(self.lo, self.hi))
        } else {
            Err(Error::Domain { x, lo: self.lo, hi: self.hi })
        }
    }

    /// `n` equally spaced points from `lo` to `hi` inclusive.
    pub fn grid(&self, n: usize) -> impl Iterator<Item = f64> + '_ {
        let step = self.width() / (n.max(2) - 1) as f64;
        (0..n).map(move |k| if k + 1 == n { self.hi } else { self.lo + step * k as f64 })
    }
}

impl TryFrom<(f64, f64)> for Interval {
    type Error = Error;
    fn try_from((lo, hi): (f64, f64)) -> Result<Self> {
        Interval::new(lo, hi)
    }
}

impl From<Interval> for (f64, f64) {
    fn from(i: Interval) -> Self {
        (i.lo, i.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A Chebyshev series on an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChebProxy {
    interval: Interval,
    coeffs: Vec<f64>,
}

impl ChebProxy {
    pub fn new(interval: Interval, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidDegree("a proxy needs at least one coefficient".into()));
        }
        Ok(ChebProxy { interval, coeffs })
    }

    pub fn interval(&self) -> Interval {
        self.interval
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Number of stored coefficients minus one.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Evaluates the proxy at `x`, rejecting points outside the interval.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let x = self.interval.clamp_checked(x)?;
        Ok(clenshaw(&self.coeffs, self.interval.to_unit(x)))
    }

    /// Evaluates at a point the caller guarantees is inside the interval.
    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        clenshaw(&self.coeffs, self.interval.to_unit(x.clamp(self.interval.lo, self.interval.hi)))
    }

    /// Sum of absolute coefficient values; bounds `max |p|` on the interval.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }
}

/// Evaluates `Σ c_j T_j(s)` by the backward recurrence.
pub fn clenshaw(coeffs: &[f64], s: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * s * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    s * b1 - b2 + coeffs[0]
}

/// Free-function form of [`ChebProxy::eval`].
pub fn cheb_eval(proxy: &ChebProxy, x: f64) -> Result<f64> {
    proxy.eval(x)
}

/// The `m + 1` Chebyshev–Lobatto nodes on `interval`, in index order
/// (decreasing `x`).
pub fn cheb_nodes(m: usize, interval: Interval) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(Error::InvalidDegree(format!("node set needs m >= 1, got {m}")));
    }
    Ok((0..=m).map(|k| interval.from_unit(unit_node(k, m))).collect())
}

fn unit_node(k: usize, m: usize) -> f64 {
    cos_pi_ratio(k, m)
}

/// `cos(r π / m)`, exact at multiples of `π / 2`.
fn cos_pi_ratio(r: usize, m: usize) -> f64 {
    let r = r % (2 * m);
    if r == 0 {
        1.0
    } else if r == m {
        -1.0
    } else if 2 * r == m || 2 * r == 3 * m {
        0.0
    } else {
        (r as f64 * PI / m as f64).cos()
    }
}

/// Chebyshev coefficients from values at [`cheb_nodes`], with `c_0` and
/// `c_m` halved.
pub fn cheb_coeffs(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InvalidDegree(format!(
            "need at least 2 node values, got {}",
            values.len()
        )));
    }
    let m = values.len() - 1;
    let mf = m as f64;
    let mut coeffs = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut c = (values[0] + values[m] * sign) / mf;
        let inner: f64 = (1..m)
            .map(|k| values[k] * cos_pi_ratio(j * k, m))
            .sum();
        c += 2.0 * inner / mf;
        coeffs.push(c);
    }
    coeffs[0] *= 0.5;
    coeffs[m] *= 0.5;
    Ok(coeffs)
}

/// A real function on an interval that counts its own evaluations.
pub struct ObjectiveFn {
    func: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    domain: Interval,
    evaluations: AtomicUsize,
}

impl ObjectiveFn {
    pub fn new(domain: Interval, func: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ObjectiveFn { func: Box::new(func), domain, evaluations: AtomicUsize::new(0) }
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        (self.func)(x)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn reset_evaluations(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
    }
}

impl fmt::Debug for ObjectiveFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectiveFn")
            .field("domain", &self.domain)
            .field("evaluations", &self.evaluations())
            .finish_non_exhaustive()
    }
}

/// Builds a proxy by doubling the degree from 2 until the interpolant
/// matches `f` to within `eps1` on the nodes that the next doubling would
/// add. Values at already-visited nodes are reused, so a result of degree
/// `m` costs exactly `2m + 1` evaluations of `f`.
pub fn adaptive_interpolate(f: &ObjectiveFn, interval: Interval, eps1: f64) -> Result<ChebProxy> {
    adaptive_interpolate_capped(f, interval, eps1, DEFAULT_DEGREE_CAP)
}

pub fn adaptive_interpolate_capped(
    f: &ObjectiveFn,
    interval: Interval,
    eps1: f64,
    cap: usize,
) -> Result<ChebProxy> {
    if !(eps1 > 0.0) {
        return Err(Error::InvalidParameter(format!("eps1 must be positive, got {eps1}")));
    }
    if cap < 2 {
        return Err(Error::InvalidParameter(format!("degree cap must be >= 2, got {cap}")));
    }
    let mut m = 2;
    let mut values: Vec<f64> = (0..=m).map(|k| f.eval(interval.from_unit(unit_node(k, m)))).collect();
    let mut residual = f64::INFINITY;
    while 2 * m <= cap {
        let coeffs = cheb_coeffs(&values)?;
        // S_{2m} interleaves the old nodes (even indices) with fresh ones.
        let mut refined = Vec::with_capacity(2 * m + 1);
        residual = 0.0_f64;
        for k in 0..=2 * m {
            if k % 2 == 0 {
                refined.push(values[k / 2]);
            } else {
                let s = unit_node(k, 2 * m);
                let fx = f.eval(interval.from_unit(s));
                residual = residual.max((fx - clenshaw(&coeffs, s)).abs());
                refined.push(fx);
            }
        }
        if residual <= eps1 {
            return ChebProxy::new(interval, coeffs);
        }
        values = refined;
        m *= 2;
    }
    Err(Error::DegreeCap { cap, residual })
}

/// Coefficient-wise mean of proxies sharing one interval, zero-padding
/// shorter coefficient vectors.
pub fn proxy_average(proxies: &[ChebProxy]) -> Result<ChebProxy> {
    let first = proxies
        .first()
        .ok_or_else(|| Error::InvalidParameter("cannot average zero proxies".into()))?;
    if proxies.iter().any(|p| p.interval != first.interval) {
        return Err(Error::IntervalMismatch);
    }
    let len = proxies.iter().map(|p| p.coeffs.len()).max().unwrap_or(1);
    let mut mean = vec![0.0; len];
    for p in proxies {
        for (acc, c) in mean.iter_mut().zip(&p.coeffs) {
            *acc += c;
        }
    }
    let n = proxies.len() as f64;
    mean.iter_mut().for_each(|c| *c /= n);
    ChebProxy::new(first.interval, mean)
}

/// Least-squares slope of `ln |c_j|` against `j` over coefficients above
/// `floor` in magnitude. Negative for geometrically decaying series.
pub fn coefficient_decay_slope(coeffs: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > floor)
        .map(|(j, c)| (j as f64, c.abs().ln()))
        .collect();
    crate::stats::linear_fit(&pts).map(|fit| fit.slope)
}
