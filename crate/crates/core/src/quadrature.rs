//! Gaussian-measure velocity quadrature.
//!
//! Nodes are standardized (units of σ_v). With a nonzero `shift` β the
//! integration contour is moved to Im x = −β: x_i → x_i − iβ with weights
//! w_i·exp(iβx_i + β²/2). This is exact for entire integrands and lets
//! the rule resolve Lorentzians much narrower than the node spacing,
//! provided no pole lies between the real axis and the shifted contour.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct VelocityQuadrature {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
    pub order: usize,
    pub shift: f64,
}

impl VelocityQuadrature {
    /// Standard Gauss–Hermite rule for the unit normal measure.
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        Self::shifted(order, 0.0)
    }

    /// Gauss–Hermite rule on the contour Im x = −shift.
    pub fn shifted(order: usize, shift: f64) -> Result<Self> {
        if order < 2 {
            return Err(Error::InvalidInput("quadrature order must be >= 2".into()));
        }
        let (x, w) = hermite_rule(order)?;
        let b2 = 0.5 * shift * shift;
        let nodes = x.iter().map(|&xi| C64::new(xi, -shift)).collect();
        let weights = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * C64::new(b2, shift * xi).exp())
            .collect();
        Ok(Self { nodes, weights, order, shift })
    }

    /// The same rule reflected to Im x = +shift.
    pub fn mirrored(&self) -> Self {
        Self {
            nodes: self.nodes.iter().map(|z| z.conj()).collect(),
            weights: self.weights.iter().map(|z| z.conj()).collect(),
            order: self.order,
            shift: -self.shift,
        }
    }

    pub fn weight_sum(&self) -> C64 {
        self.weights.iter().sum()
    }
}

/// Nodes and weights of the probabilists' Hermite rule, normalized so the
/// weights sum to one (∫ f(x) φ(x) dx with φ the unit normal density).
///
/// Roots of the physicists' polynomial come from the eigenvalues of the
/// Jacobi matrix (Golub–Welsch) and are then polished by Newton steps on the
/// orthonormal recurrence, which also yields the weights.
fn hermite_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let mut roots = symmetric_tridiagonal_eigenvalues(n, &off)?;
    roots.sort_by(|a, b| a.total_cmp(b));
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let nf = n as f64;
    let mut t = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for &r in &roots {
        let mut z = r;
        let mut pp = 0.0;
        for _ in 0..8 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if !(pp.is_finite() && pp != 0.0) {
            return Err(Error::Numerical(format!("Hermite rule of order {n} failed near x = {r}")));
        }
        t.push(z);
        w.push(2.0 / (pp * pp));
    }
    // enforce exact symmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (t[j] - t[i]);
        let wv = 0.5 * (w[i] + w[j]);
        t[i] = -x;
        t[j] = x;
        w[i] = wv;
        w[j] = wv;
    }
    if n % 2 == 1 {
        t[n / 2] = 0.0;
    }
    if t.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Numerical(format!("Hermite rule of order {n} has repeated roots")));
    }
    let total: f64 = w.iter().sum();
    let x = t.iter().map(|ti| ti * std::f64::consts::SQRT_2).collect();
    let wn = w.iter().map(|wi| wi / total).collect();
    Ok((x, wn))
}

/// Eigenvalues of the symmetric tridiagonal matrix with zero diagonal and
/// the given off-diagonal (implicit QL with Wilkinson shifts).
fn symmetric_tridiagonal_eigenvalues(n: usize, off: &[f64]) -> Result<Vec<f64>> {
    let mut d = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];
    e[..n - 1].copy_from_slice(off);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numerical("tridiagonal eigenvalue iteration did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for &(n, b) in &[(7, 0.0), (8, 0.0), (64, 1.0), (128, 1.5), (256, 1.5), (512, 1.5)] {
            let q = VelocityQuadrature::shifted(n, b).unwrap();
            let s = q.weight_sum();
            assert!((s - 1.0).norm() < 1e-12, "n={n} b={b} sum={s}");
        }
    }

    #[test]
    fn nodes_symmetric_about_contour() {
        let q = VelocityQuadrature::shifted(128, 1.5).unwrap();
        for i in 0..q.order {
            let a = q.nodes[i];
            let b = q.nodes[q.order - 1 - i];
            assert!((a.re + b.re).abs() < 1e-12);
            assert_eq!(a.im, -1.5);
        }
    }

    #[test]
    fn gaussian_moments_exact() {
        // E[x^2] = 1, E[x^4] = 3, E[x^6] = 15 under the unit normal.
        for &b in &[0.0, 1.0, 1.5] {
            let q = VelocityQuadrature::shifted(32, b).unwrap();
            let m = |k: i32| -> C64 { q.nodes.iter().zip(&q.weights).map(|(x, w)| w * x.powi(k)).sum() };
            assert!((m(2) - 1.0).norm() < 1e-10);
            assert!((m(4) - 3.0).norm() < 1e-9);
            assert!((m(6) - 15.0).norm() < 1e-8);
            assert!(m(3).norm() < 1e-9);
        }
    }

    #[test]
    fn shifted_rule_resolves_narrow_lorentzian() {
        // ∫ φ(x)/(x − a − iε) dx with a pole in the upper half plane,
        // checked against a dense trapezoid on the real axis.
        let (a, eps) = (0.3, 0.01);
        let f = |x: C64| 1.0 / (x - C64::new(a, eps));
        let h = 1e-4;
        let mut trap = C64::new(0.0, 0.0);
        let mut x: f64 = -12.0;
        while x <= 12.0 {
            let phi = (-0.5f64 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            trap += f(C64::new(x, 0.0)) * phi * h;
            x += h;
        }
        let q = VelocityQuadrature::shifted(128, 1.5).unwrap();
        let v: C64 = q.nodes.iter().zip(&q.weights).map(|(&x, w)| w * f(x)).sum();
        assert!((v - trap).norm() / trap.norm() < 1e-6, "{v} vs {trap}");
        let plain = VelocityQuadrature::gauss_hermite(128).unwrap();
        let p: C64 = plain.nodes.iter().zip(&plain.weights).map(|(&x, w)| w * f(x)).sum();
        assert!((p - trap).norm() / trap.norm() > 1e-3);
    }
}
