//! Integrated Legendre shape functions and Gauss-Legendre quadrature.
//!
//! The 1D set of order `p` holds `p + 1` functions on the reference
//! interval `[-1, 1]`:
//!
//! ```text
//! N_0(ξ) = (1 - ξ) / 2
//! N_1(ξ) = (1 + ξ) / 2
//! N_j(ξ) = sqrt((2j - 1) / 2) ∫_{-1}^{ξ} P_{j-1}(t) dt
//!        = (P_j(ξ) - P_{j-2}(ξ)) / sqrt(2 (2j - 1)),      j = 2..=p
//! ```
//!
//! The higher modes vanish at both interval ends, so in a tensor product the
//! number of bubble directions decides which topological entity (vertex,
//! edge, face, interior) a function belongs to.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest supported ansatz order.
pub const MAX_ORDER: usize = 10;

/// Legendre polynomials `P_0..=P_n` at `x`.
pub fn legendre(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(x);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
        out.push(next);
    }
    out
}

fn check_reference(xi: f64) -> Result<()> {
    if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&xi) || xi.is_nan() {
        return Err(Error::OutsideReference(xi));
    }
    Ok(())
}

/// Values and first derivatives of the 1D integrated Legendre set, written
/// into the provided slices (length `p + 1`). No range check.
pub(crate) fn eval_1d_into(p: usize, xi: f64, values: &mut [f64], derivs: &mut [f64]) {
    values[0] = 0.5 * (1.0 - xi);
    values[1] = 0.5 * (1.0 + xi);
    derivs[0] = -0.5;
    derivs[1] = 0.5;
    if p < 2 {
        return;
    }
    let mut leg = [0.0; MAX_ORDER + 1];
    leg[0] = 1.0;
    leg[1] = xi;
    for k in 2..=p {
        let kf = k as f64;
        leg[k] = ((2.0 * kf - 1.0) * xi * leg[k - 1] - (kf - 1.0) * leg[k - 2]) / kf;
    }
    for j in 2..=p {
        let jf = j as f64;
        values[j] = (leg[j] - leg[j - 2]) / (2.0 * (2.0 * jf - 1.0)).sqrt();
        derivs[j] = ((2.0 * jf - 1.0) / 2.0).sqrt() * leg[j - 1];
    }
}

/// Values of the 1D basis of order `p` at `xi`.
pub fn eval_1d(p: usize, xi: f64) -> Result<Vec<f64>> {
    Ok(eval_1d_with_derivatives(p, xi)?.0)
}

/// Values and derivatives of the 1D basis of order `p` at `xi`.
pub fn eval_1d_with_derivatives(p: usize, xi: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_order(p)?;
    check_reference(xi)?;
    let mut v = vec![0.0; p + 1];
    let mut d = vec![0.0; p + 1];
    eval_1d_into(p, xi, &mut v, &mut d);
    Ok((v, d))
}

fn check_order(p: usize) -> Result<()> {
    if p == 0 || p > MAX_ORDER {
        return Err(Error::InvalidArgument(format!(
            "ansatz order {p} outside 1..={MAX_ORDER}"
        )));
    }
    Ok(())
}

/// Topological kind of a tensor-product mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeKind {
    Nodal,
    Edge,
    Face,
    Internal,
}

impl ModeKind {
    pub fn from_bubble_count(bubbles: usize, dim: usize) -> Self {
        match bubbles {
            0 => ModeKind::Nodal,
            b if b == dim => ModeKind::Internal,
            1 => ModeKind::Edge,
            _ => ModeKind::Face,
        }
    }
}

/// Tensor-product basis of order `p` in `dim` dimensions.
///
/// Modes are numbered with axis 0 running fastest; the 1D index per axis is
/// `0` (left vertex function), `1` (right vertex function) or `2..=p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeSet {
    pub order: usize,
    pub dim: usize,
}

impl ShapeSet {
    pub fn new(order: usize, dim: usize) -> Result<Self> {
        check_order(order)?;
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension {dim} not in 1..=3")));
        }
        Ok(Self { order, dim })
    }

    pub fn len(&self) -> usize {
        (self.order + 1).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1D mode index per axis of tensor mode `m`.
    pub fn mode_indices(&self, m: usize) -> [usize; 3] {
        let n = self.order + 1;
        let mut idx = [0; 3];
        let mut rest = m;
        for slot in idx.iter_mut().take(self.dim) {
            *slot = rest % n;
            rest /= n;
        }
        idx
    }

    pub fn kind(&self, m: usize) -> ModeKind {
        let idx = self.mode_indices(m);
        let bubbles = idx[..self.dim].iter().filter(|&&i| i >= 2).count();
        ModeKind::from_bubble_count(bubbles, self.dim)
    }

    /// Values and reference gradients at `xi`, with range check.
    pub fn eval(&self, xi: &[f64]) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
        if xi.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, expected {}",
                xi.len(),
                self.dim
            )));
        }
        for &x in xi {
            check_reference(x)?;
        }
        let mut point = [0.0; 3];
        point[..self.dim].copy_from_slice(xi);
        let mut values = vec![0.0; self.len()];
        let mut grads = vec![[0.0; 3]; self.len()];
        self.eval_into(&point, &mut values, &mut grads);
        Ok((values, grads))
    }

    /// Unchecked evaluation into caller-provided buffers of length `len()`.
    pub fn eval_into(&self, xi: &[f64; 3], values: &mut [f64], grads: &mut [[f64; 3]]) {
        let n = self.order + 1;
        let mut v1 = [[0.0; MAX_ORDER + 1]; 3];
        let mut d1 = [[0.0; MAX_ORDER + 1]; 3];
        for a in 0..self.dim {
            eval_1d_into(self.order, xi[a], &mut v1[a][..n], &mut d1[a][..n]);
        }
        match self.dim {
            1 => {
                for i in 0..n {
                    values[i] = v1[0][i];
                    grads[i] = [d1[0][i], 0.0, 0.0];
                }
            }
            2 => {
                let mut m = 0;
                for j in 0..n {
                    for i in 0..n {
                        values[m] = v1[0][i] * v1[1][j];
                        grads[m] = [d1[0][i] * v1[1][j], v1[0][i] * d1[1][j], 0.0];
                        m += 1;
                    }
                }
            }
            _ => {
                let mut m = 0;
                for k in 0..n {
                    for j in 0..n {
                        let vjk = v1[1][j] * v1[2][k];
                        for i in 0..n {
                            values[m] = v1[0][i] * vjk;
                            grads[m] = [
                                d1[0][i] * vjk,
                                v1[0][i] * d1[1][j] * v1[2][k],
                                v1[0][i] * v1[1][j] * d1[2][k],
                            ];
                            m += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Gauss-Legendre rule with `n` points on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

const CACHED_RULES: usize = 24;

/// Gauss-Legendre abscissae and weights; rules up to 24 points are cached.
pub fn gauss_rule(n: usize) -> GaussRule {
    static CACHE: OnceLock<Vec<GaussRule>> = OnceLock::new();
    if n == 0 {
        return gauss_rule(1);
    }
    if n <= CACHED_RULES {
        let cache = CACHE.get_or_init(|| (1..=CACHED_RULES).map(compute_gauss_rule).collect());
        return cache[n - 1].clone();
    }
    compute_gauss_rule(n)
}

fn compute_gauss_rule(n: usize) -> GaussRule {
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        points[i] = -x;
        points[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    GaussRule { points, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor Gauss rule on `[-1, 1]^dim` with `n` points per direction.
/// Points are returned as 3-vectors with unused components zero.
pub fn tensor_gauss_rule(n: usize, dim: usize) -> Vec<([f64; 3], f64)> {
    let rule = gauss_rule(n);
    let mut out = Vec::with_capacity(n.pow(dim as u32));
    let count = n.pow(dim as u32);
    for m in 0..count {
        let mut x = [0.0; 3];
        let mut w = 1.0;
        let mut rest = m;
        for xa in x.iter_mut().take(dim) {
            let i = rest % n;
            rest /= n;
            *xa = rule.points[i];
            w *= rule.weights[i];
        }
        out.push((x, w));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Composite Gauss oracle for ∫_{-1}^{x} P_{j-1}(t) dt, independent of the
    /// closed-form difference formula.
    fn integrated_legendre_oracle(j: usize, x: f64) -> f64 {
        let rule = compute_gauss_rule(12);
        let panels = 64;
        let h = (x + 1.0) / panels as f64;
        let mut sum = 0.0;
        for k in 0..panels {
            let a = -1.0 + k as f64 * h;
            for (t, w) in rule.points.iter().zip(&rule.weights) {
                let s = a + 0.5 * h * (t + 1.0);
                sum += 0.5 * h * w * legendre(j - 1, s)[j - 1];
            }
        }
        ((2.0 * j as f64 - 1.0) / 2.0).sqrt() * sum
    }

    #[test]
    fn linear_endpoints() {
        assert_eq!(eval_1d(1, -1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(eval_1d(1, 1.0).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn bubbles_vanish_at_ends() {
        for p in 2..=6 {
            for xi in [-1.0, 1.0] {
                let v = eval_1d(p, xi).unwrap();
                for &b in &v[2..] {
                    assert_abs_diff_eq!(b, 0.0, epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn order_four_matches_quadrature_oracle() {
        for &xi in &[-0.9, -0.31, 0.0, 0.27, 0.66, 1.0] {
            let v = eval_1d(4, xi).unwrap();
            for j in 2..=4 {
                assert_abs_diff_eq!(v[j], integrated_legendre_oracle(j, xi), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_outside_reference() {
        assert!(matches!(eval_1d(2, 1.5), Err(Error::OutsideReference(_))));
        assert!(eval_1d(2, f64::NAN).is_err());
    }

    #[test]
    fn trilinear_center() {
        let set = ShapeSet::new(1, 3).unwrap();
        let (v, _) = set.eval(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.len(), 8);
        for x in v {
            assert_abs_diff_eq!(x, 0.125, epsilon = 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in 1..=3 {
            let set = ShapeSet::new(3, dim).unwrap();
            for _ in 0..20 {
                let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.99..0.99)).collect();
                let (_, g) = set.eval(&xi).unwrap();
                let step = 1e-6;
                for a in 0..dim {
                    let mut xp = xi.clone();
                    let mut xm = xi.clone();
                    xp[a] += step;
                    xm[a] -= step;
                    let (vp, _) = set.eval(&xp).unwrap();
                    let (vm, _) = set.eval(&xm).unwrap();
                    for m in 0..set.len() {
                        let fd = (vp[m] - vm[m]) / (2.0 * step);
                        assert!((fd - g[m][a]).abs() < 1e-7, "dim {dim} mode {m} axis {a}");
                    }
                }
            }
        }
    }

    #[test]
    fn nodal_partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = ShapeSet::new(4, 3).unwrap();
        for _ in 0..50 {
            let xi: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (v, _) = set.eval(&xi).unwrap();
            let sum: f64 = (0..set.len())
                .filter(|&m| set.kind(m) == ModeKind::Nodal)
                .map(|m| v[m])
                .sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn mode_kinds_3d() {
        let set = ShapeSet::new(2, 3).unwrap();
        let mut counts = std::collections::HashMap::new();
        for m in 0..set.len() {
            *counts.entry(set.kind(m)).or_insert(0) += 1;
        }
        assert_eq!(counts[&ModeKind::Nodal], 8);
        assert_eq!(counts[&ModeKind::Edge], 12);
        assert_eq!(counts[&ModeKind::Face], 6);
        assert_eq!(counts[&ModeKind::Internal], 1);
    }

    #[test]
    fn small_gauss_rules() {
        let r1 = gauss_rule(1);
        assert_eq!(r1.points, vec![0.0]);
        assert_abs_diff_eq!(r1.weights[0], 2.0, epsilon = 1e-15);
        let r2 = gauss_rule(2);
        let a = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(r2.points[0], -a, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.points[1], a, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn five_and_six_point_moments() {
        let moment = |n: usize, k: i32| -> f64 {
            let r = gauss_rule(n);
            r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k)).sum()
        };
        assert_abs_diff_eq!(moment(5, 9), 0.0, epsilon = 1e-14);
        // degree 10 is beyond the five-point rule, six points are needed
        assert!((moment(5, 10) - 2.0 / 11.0).abs() > 1e-3);
        assert_abs_diff_eq!(moment(6, 10), 2.0 / 11.0, epsilon = 1e-14);
    }

    #[test]
    fn exact_to_degree_2n_minus_1() {
        for n in 1..=20 {
            let r = gauss_rule(n);
            let wsum: f64 = r.weights.iter().sum();
            assert_abs_diff_eq!(wsum, 2.0, epsilon = 1e-13);
            for deg in 0..2 * n {
                let q: f64 = r.points.iter().zip(&r.weights).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n {n} degree {deg}: {q} vs {exact}");
            }
        }
    }
}
