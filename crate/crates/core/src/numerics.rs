//! Small numerical kernels shared by the rest of the crate.
//!
//! Nothing here knows about radial problems: Gauss–Legendre rules,
//! finite-difference weights on arbitrary nodes, banded linear solvers,
//! and a couple of 1-D scalar searches.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]` with `k` points.
pub fn gauss_legendre(k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1);
    let mut x = vec![0.0; k];
    let mut w = vec![0.0; k];
    for i in 0..k {
        // Chebyshev-like initial guess, then Newton on P_k.
        let mut z = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(k, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(k, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_with_derivative(k: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * z * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let dp = k as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Finite-difference weights (Fornberg's recursion) for the derivatives of
/// order `0..=order` at `z` using the node set `xs`.
///
/// Returns `c[d][j]`, the weight of node `j` in the order-`d` derivative.
pub fn fornberg_weights(z: f64, xs: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - z;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Lagrange basis values at `z` for nodes `xs`.
pub fn lagrange_basis(z: f64, xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .enumerate()
        .map(|(j, &xj)| {
            xs.iter()
                .enumerate()
                .filter(|&(i, _)| i != j)
                .map(|(_, &xi)| (z - xi) / (xj - xi))
                .product()
        })
        .collect()
}

/// Symmetric banded matrix stored by lower diagonals: `diag[d][i]` is the
/// entry `(i + d, i)`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    diag: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let diag = (0..=bw).map(|d| vec![0.0; n.saturating_sub(d)]).collect();
        Self { n, bw, diag }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        assert!(d <= self.bw, "entry outside band");
        self.diag[d][lo] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d > self.bw {
            0.0
        } else {
            self.diag[d][lo]
        }
    }

    pub fn add_diagonal(&mut self, v: &[f64]) {
        for (a, b) in self.diag[0].iter_mut().zip(v) {
            *a += b;
        }
    }

    /// `a * self + b * other` for matrices of the same shape.
    pub fn combine(&self, a: f64, other: &SymBanded, b: f64) -> SymBanded {
        assert_eq!(self.n, other.n);
        let bw = self.bw.max(other.bw);
        let mut out = SymBanded::zeros(self.n, bw);
        for d in 0..=bw {
            for i in 0..self.n.saturating_sub(d) {
                out.diag[d][i] = a * self.get(i + d, i) + b * other.get(i + d, i);
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.diag[0][i] * x[i];
        }
        for d in 1..=self.bw {
            for i in 0..self.n.saturating_sub(d) {
                let a = self.diag[d][i];
                y[i + d] += a * x[i];
                y[i] += a * x[i + d];
            }
        }
        y
    }

    /// Leading principal submatrix of size `m`.
    pub fn truncated(&self, m: usize) -> SymBanded {
        let mut out = SymBanded::zeros(m, self.bw);
        for d in 0..=self.bw {
            for i in 0..m.saturating_sub(d) {
                out.diag[d][i] = self.diag[d][i];
            }
        }
        out
    }

    /// Banded Cholesky factorization. Fails when the matrix is not
    /// numerically positive definite.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let n = self.n;
        let bw = self.bw;
        // l[d][i] = L(i + d, i)
        let mut l: Vec<Vec<f64>> = self.diag.clone();
        for j in 0..n {
            let mut s = l[0][j];
            for k in 1..=bw.min(j) {
                let v = l[k][j - k];
                s -= v * v;
            }
            if !(s > 0.0) || !s.is_finite() {
                return None;
            }
            let ljj = s.sqrt();
            l[0][j] = ljj;
            for d in 1..=bw {
                let i = j + d;
                if i >= n {
                    break;
                }
                let mut s = l[d][j];
                // sum_k L(i, k) L(j, k) for k < j within band of both
                for k in (j.saturating_sub(bw))..j {
                    if i - k > bw {
                        continue;
                    }
                    s -= l[i - k][k] * l[j - k][k];
                }
                l[d][j] = s / ljj;
            }
        }
        Some(BandedCholesky { n, bw, l })
    }

    /// Dense-free general solve through banded LU with partial pivoting;
    /// suitable for symmetric indefinite systems.
    pub fn to_general(&self) -> Banded {
        let mut g = Banded::zeros(self.n, self.bw, self.bw);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let hi = (i + self.bw).min(self.n - 1);
            for j in lo..=hi {
                g.set(i, j, self.get(i, j));
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<Vec<f64>>,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let bw = self.bw;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i - k][k] * y[k];
            }
            y[i] = s / self.l[0][i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for d in 1..=bw {
                let k = i + d;
                if k >= n {
                    break;
                }
                s -= self.l[d][i] * y[k];
            }
            y[i] = s / self.l[0][i];
        }
        y
    }
}

/// General banded matrix with `kl` sub- and `ku` super-diagonals, stored
/// row-wise with room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i - kl ..= i + ku + kl
    rows: Vec<Vec<f64>>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            rows: vec![vec![0.0; width]; n],
        }
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.rows[0].len() {
            None
        } else {
            Some(off as usize)
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.rows[i][s] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.rows[i][s])
    }

    /// Solves `A x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` on an exactly singular pivot.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku; // max column offset after pivoting
        // Work on a dense-window copy indexed by absolute column.
        let mut a = self.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            // pivot search in column k, rows k..=k+kl
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = a.get(k, k).abs();
            for i in k + 1..=last {
                let v = a.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return None;
            }
            let cmax = (k + reach).min(n - 1);
            if p != k {
                for j in k..=cmax {
                    let t = a.get(k, j);
                    let u = a.get(p, j);
                    a.set(k, j, u);
                    a.set(p, j, t);
                }
                x.swap(k, p);
            }
            let piv = a.get(k, k);
            for i in k + 1..=last {
                let f = a.get(i, k) / piv;
                if f == 0.0 {
                    continue;
                }
                a.set(i, k, 0.0);
                for j in k + 1..=cmax {
                    let v = a.get(i, j) - f * a.get(k, j);
                    a.set(i, j, v);
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + reach).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=cmax {
                s -= a.get(k, j) * x[j];
            }
            x[k] = s / a.get(k, k);
        }
        Some(x)
    }
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + a.abs().max(b.abs())) {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Bracketed root of `f` on `[a, b]` (Illinois regula falsi, falling back
/// to bisection). Requires a sign change.
pub fn bracketed_root<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    let mut side = 0i8;
    for _ in 0..max_iter {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < tol * (1.0 + c.abs()) {
            return Some(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        // force progress when regula falsi stalls on one side
        if (b - a).abs() > 0.0 && side != 0 {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
                fb = fm;
            }
        }
    }
    Some(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for k in 1..10 {
            let (x, w) = gauss_legendre(k);
            for deg in 0..(2 * k) {
                let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-13, "k={k} deg={deg}");
            }
        }
    }

    #[test]
    fn fornberg_matches_central_stencil() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let c = fornberg_weights(0.0, &xs, 1);
        let expect = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in c[1].iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn cholesky_and_lu_agree() {
        let n = 40;
        let mut a = SymBanded::zeros(n, 3);
        for i in 0..n {
            a.add(i, i, 6.0 + i as f64 * 0.01);
            if i + 1 < n {
                a.add(i + 1, i, -1.3);
            }
            if i + 3 < n {
                a.add(i + 3, i, 0.4);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x1 = a.cholesky().unwrap().solve(&b);
        let x2 = a.to_general().solve(&b).unwrap();
        let r = a.matvec(&x1);
        for i in 0..n {
            assert!((x1[i] - x2[i]).abs() < 1e-12);
            assert!((r[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lu_handles_indefinite() {
        let n = 30;
        let mut a = SymBanded::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, if i == 7 { -3.0 } else { 2.5 });
            if i + 2 < n {
                a.add(i + 2, i, 1.0);
            }
        }
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let x = a.to_general().solve(&b).unwrap();
        let r = a.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn root_and_max() {
        let r = bracketed_root(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let (x, fx) = golden_max(|t| t - t * t, 0.0, 1.0, 1e-12);
        assert!((x - 0.5).abs() < 1e-6);
        assert!((fx - 0.25).abs() < 1e-12);
    }
}
