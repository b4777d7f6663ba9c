//! Global minimization of a Chebyshev proxy on its interval.
//!
//! Candidates are the interval endpoints and the real roots of the
//! derivative, found as eigenvalues of the colleague matrix and polished by
//! Newton steps. The best candidate is then certified by branch and bound:
//! cells are split until a second-order lower bound on every cell is within
//! `ε3` of the incumbent.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cheb::{clenshaw, ChebProxy};
use crate::error::{Error, Result};

/// Trailing coefficients below this fraction of `max |c_j|` are dropped
/// before root finding.
const TRIM_REL: f64 = 1e-13;
/// Eigenvalues with real part beyond `1 + IN_INTERVAL_TOL` are discarded.
const IN_INTERVAL_TOL: f64 = 1e-8;
/// Eigenvalues with larger imaginary part are not real roots.
const IMAG_TOL: f64 = 1e-8;
/// Looser imaginary cut used for optimization candidates; near-double roots
/// of `p'` split into pairs with imaginary parts of order `sqrt(eps)`.
const CANDIDATE_IMAG_TOL: f64 = 1e-4;
const DEDUP_TOL: f64 = 1e-10;
const NEWTON_STEPS: usize = 30;
const INITIAL_CELLS: usize = 64;
const MAX_CELL_VISITS: usize = 1 << 22;

/// Derivative of `proxy` with respect to `x`, one degree lower.
pub fn cheb_derivative(proxy: &ChebProxy) -> ChebProxy {
    let c = proxy.coeffs();
    let n = c.len() - 1;
    if n == 0 {
        return ChebProxy::new(proxy.interval(), vec![0.0]).expect("nonempty");
    }
    // d_{j-1} = d_{j+1} + 2 j c_j, then halve d_0
    let mut d = vec![0.0; n + 1];
    for j in (1..=n).rev() {
        let next = if j < n { d[j + 1] } else { 0.0 };
        d[j - 1] = next + 2.0 * j as f64 * c[j];
    }
    d[0] *= 0.5;
    d.truncate(n);
    let scale = 2.0 / proxy.interval().width();
    d.iter_mut().for_each(|v| *v *= scale);
    ChebProxy::new(proxy.interval(), d).expect("nonempty")
}

/// Real roots of the proxy inside its interval, sorted ascending.
///
/// Returns [`Error::ZeroPolynomial`] for the zero polynomial; a nonzero
/// constant has no roots.
pub fn cheb_roots(proxy: &ChebProxy) -> Result<Vec<f64>> {
    let unit = unit_roots(proxy.coeffs(), IMAG_TOL)?;
    Ok(dedup(unit.into_iter().map(|s| proxy.interval().from_unit(s)).collect()))
}

fn trimmed(coeffs: &[f64]) -> Result<&[f64]> {
    let max = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if max == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let keep = coeffs.iter().rposition(|c| c.abs() > TRIM_REL * max).unwrap_or(0);
    Ok(&coeffs[..=keep])
}

/// Roots in `[-1, 1]` of `Σ c_j T_j(s)`.
fn unit_roots(coeffs: &[f64], imag_tol: f64) -> Result<Vec<f64>> {
    let c = trimmed(coeffs)?;
    let n = c.len() - 1;
    let raw: Vec<(f64, f64)> = match n {
        0 => Vec::new(),
        1 => vec![(-c[0] / c[1], 0.0)],
        _ => {
            let mut a = DMatrix::<f64>::zeros(n, n);
            a[(0, 1)] = 1.0;
            for r in 1..n - 1 {
                a[(r, r - 1)] = 0.5;
                a[(r, r + 1)] = 0.5;
            }
            for k in 0..n {
                a[(n - 1, k)] = -0.5 * c[k] / c[n];
            }
            a[(n - 1, n - 2)] += 0.5;
            let schur = Schur::try_new(a, f64::EPSILON, 10_000)
                .ok_or_else(|| Error::InvalidParameter("colleague matrix eigen-solve did not converge".into()))?;
            schur.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
        }
    };
    let mut roots: Vec<f64> = raw
        .into_iter()
        .filter(|(re, im)| im.abs() <= imag_tol && re.abs() <= 1.0 + IN_INTERVAL_TOL)
        .map(|(re, _)| re.clamp(-1.0, 1.0))
        .collect();
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

fn dedup(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|b, a| (*b - *a).abs() <= DEDUP_TOL);
    xs
}

/// Outcome of [`minimize_proxy`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    /// Proxy value at `x_p_star`; never below the proxy's true minimum.
    pub f_e_star: f64,
    pub x_p_star: f64,
    /// Upper bound on `f_e_star − min p` established by branch and bound.
    pub certified_gap: f64,
    /// Set when root finding failed and only the cell search was used.
    pub fallback: bool,
}

/// Minimizes `proxy` over its interval to a certified value gap `eps3`.
pub fn minimize_proxy(proxy: &ChebProxy, eps3: f64) -> Result<OptResult> {
    if !(eps3 > 0.0) {
        return Err(Error::InvalidParameter(format!("eps3 must be positive, got {eps3}")));
    }
    let iv = proxy.interval();
    let d1 = cheb_derivative(proxy);
    if trimmed(d1.coeffs()).is_err() || proxy.degree() == 0 {
        return Ok(OptResult {
            f_e_star: proxy.coeffs()[0],
            x_p_star: iv.midpoint(),
            certified_gap: 0.0,
            fallback: false,
        });
    }
    let d2 = cheb_derivative(&d1);

    let mut candidates = vec![iv.lo(), iv.hi()];
    let mut fallback = false;
    match unit_roots(d1.coeffs(), CANDIDATE_IMAG_TOL) {
        Ok(rs) => candidates.extend(rs.into_iter().map(|s| polish(&d1, &d2, iv.from_unit(s)))),
        Err(_) => fallback = true,
    }
    candidates.sort_by(f64::total_cmp);

    let mut best = Incumbent { x: f64::NAN, value: f64::INFINITY };
    for &x in &candidates {
        best.offer(x, proxy.eval_unchecked(x));
    }

    let curvature = d2.l1_norm();
    let width = iv.width() / INITIAL_CELLS as f64;
    let mut cells: Vec<(f64, f64)> =
        (0..INITIAL_CELLS).map(|k| (iv.lo() + width * k as f64, if k + 1 == INITIAL_CELLS { iv.hi() } else { iv.lo() + width * (k + 1) as f64 })).collect();
    let mut pruned_floor = f64::INFINITY;
    let mut visits = 0;
    while let Some((u, v)) = cells.pop() {
        visits += 1;
        let c = 0.5 * (u + v);
        let h = 0.5 * (v - u);
        let pc = proxy.eval_unchecked(c);
        best.offer(c, pc);
        let slope = clenshaw(d1.coeffs(), iv.to_unit(c)).abs();
        let lower = pc - slope * h - 0.5 * curvature * h * h;
        if lower >= best.value - eps3 || visits >= MAX_CELL_VISITS || h <= f64::EPSILON * c.abs().max(1.0) {
            pruned_floor = pruned_floor.min(lower);
        } else {
            cells.push((u, c));
            cells.push((c, v));
        }
    }
    Ok(OptResult {
        f_e_star: best.value,
        x_p_star: best.x,
        certified_gap: (best.value - pruned_floor).max(0.0),
        fallback,
    })
}

struct Incumbent {
    x: f64,
    value: f64,
}

impl Incumbent {
    fn offer(&mut self, x: f64, value: f64) {
        if value < self.value || (value == self.value && x < self.x) {
            self.x = x;
            self.value = value;
        }
    }
}

/// Newton iterations on `p' = 0`, kept inside the interval.
fn polish(d1: &ChebProxy, d2: &ChebProxy, mut x: f64) -> f64 {
    let iv = d1.interval();
    for _ in 0..NEWTON_STEPS {
        let g = d1.eval_unchecked(x);
        let h = d2.eval_unchecked(x);
        if h == 0.0 || !g.is_finite() {
            break;
        }
        let next = (x - g / h).clamp(iv.lo(), iv.hi());
        if d1.eval_unchecked(next).abs() >= g.abs() {
            break;
        }
        let done = (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0);
        x = next;
        if done {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cheb::Interval;
    use approx::assert_abs_diff_eq;

    fn unit() -> Interval {
        Interval::new(-1.0, 1.0).unwrap()
    }

    #[test]
    fn derivative_fixtures() {
        let sq = ChebProxy::new(unit(), vec![0.5, 0.0, 0.5]).unwrap();
        let d = cheb_derivative(&sq);
        assert_eq!(d.coeffs(), &[0.0, 2.0]);
        let c = ChebProxy::new(unit(), vec![3.0]).unwrap();
        assert_eq!(cheb_derivative(&c).coeffs(), &[0.0]);
        let id = ChebProxy::new(Interval::new(0.0, 2.0).unwrap(), vec![1.0, 1.0]).unwrap();
        let d = cheb_derivative(&id);
        assert_eq!(d.coeffs(), &[1.0]);
    }

    #[test]
    fn root_fixtures() {
        let t2 = ChebProxy::new(unit(), vec![0.0, 0.0, 1.0]).unwrap();
        let r = cheb_roots(&t2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(r.len(), 2);
        assert_abs_diff_eq!(r[0], -h, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], h, epsilon = 1e-12);
        let id = ChebProxy::new(unit(), vec![0.0, 1.0]).unwrap();
        assert_eq!(cheb_roots(&id).unwrap(), vec![0.0]);
        let zero = ChebProxy::new(unit(), vec![0.0, 0.0]).unwrap();
        assert_eq!(cheb_roots(&zero), Err(Error::ZeroPolynomial));
        let c = ChebProxy::new(unit(), vec![2.0, 1e-20]).unwrap();
        assert!(cheb_roots(&c).unwrap().is_empty());
    }

    #[test]
    fn roots_of_t5_on_shifted_interval() {
        let iv = Interval::new(2.0, 6.0).unwrap();
        let t5 = ChebProxy::new(iv, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let r = cheb_roots(&t5).unwrap();
        assert_eq!(r.len(), 5);
        for (k, x) in r.iter().rev().enumerate() {
            let want = iv.from_unit(((2 * k + 1) as f64 * std::f64::consts::PI / 10.0).cos());
            assert_abs_diff_eq!(*x, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn minimize_fixtures() {
        let sq = ChebProxy::new(unit(), vec![0.5, 0.0, 0.5]).unwrap();
        let r = minimize_proxy(&sq, 1e-10).unwrap();
        assert_abs_diff_eq!(r.f_e_star, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.x_p_star, 0.0, epsilon = 1e-12);
        assert!(r.certified_gap <= 1e-10);

        let id = ChebProxy::new(unit(), vec![0.0, 1.0]).unwrap();
        let r = minimize_proxy(&id, 1e-10).unwrap();
        assert_eq!((r.f_e_star, r.x_p_star), (-1.0, -1.0));

        let c = ChebProxy::new(unit(), vec![4.0, 0.0]).unwrap();
        let r = minimize_proxy(&c, 1e-10).unwrap();
        assert_eq!((r.f_e_star, r.x_p_star, r.certified_gap), (4.0, 0.0, 0.0));

        assert!(minimize_proxy(&sq, 0.0).is_err());
    }

    #[test]
    fn ties_prefer_smallest_x() {
        // -T_2 peaks at 0 and bottoms out at both endpoints with value -1
        let p = ChebProxy::new(unit(), vec![0.0, 0.0, -1.0]).unwrap();
        let r = minimize_proxy(&p, 1e-10).unwrap();
        assert_eq!(r.x_p_star, -1.0);
        assert_eq!(r.f_e_star, -1.0);
    }
}
