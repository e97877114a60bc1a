//! Radial grid, sine transform, kinetic and Green's operators.
//!
//! Wave functions are stored as reduced samples u_j = r_j ψ(r_j) on the
//! nodes r_j = j·dr, j = 1..N, with the wall value u_N pinned to zero.
//! Fields are stored as reduced momentum samples v_m = k_m φ̂(k_m) on
//! k_m = mπ/R, m = 0..N−1. The k = 0 node carries a half trapezoid weight;
//! it matters because σ̂ ∼ |k|⁻¹ makes v finite and nonzero there.

use crate::error::{Error, Result};
use crate::linalg::ToeplitzSpd;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul};
use std::sync::Arc;

pub const MAX_CHANNEL: usize = 2;

#[derive(Clone)]
pub struct RadialGrid {
    n_points: usize,
    box_radius: f64,
    dr: f64,
    dk: f64,
    r: Vec<f64>,
    k: Vec<f64>,
    weight_r: Vec<f64>,
    weight_k: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    mass: ToeplitzSpd,
}

impl fmt::Debug for RadialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialGrid")
            .field("n_points", &self.n_points)
            .field("box_radius", &self.box_radius)
            .field("dr", &self.dr)
            .finish()
    }
}

/// Serializable grid descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub box_radius: f64,
}

impl RadialGrid {
    pub fn n_points(&self) -> usize {
        self.n_points
    }
    /// Number of free (interior) nodes, N − 1.
    pub fn interior(&self) -> usize {
        self.n_points - 1
    }
    pub fn box_radius(&self) -> f64 {
        self.box_radius
    }
    pub fn dr(&self) -> f64 {
        self.dr
    }
    pub fn dk(&self) -> f64 {
        self.dk
    }
    /// r_1..r_N, with r_N = R.
    pub fn r(&self) -> &[f64] {
        &self.r
    }
    /// k_0..k_{N−1}, with k_0 = 0.
    pub fn k(&self) -> &[f64] {
        &self.k
    }
    /// Weights for ∫ 4π r² dr applied to r²-weighted samples (4π dr).
    pub fn weight_r(&self) -> &[f64] {
        &self.weight_r
    }
    /// Weights for ∫ 4π k² dk applied to reduced momentum samples.
    pub fn weight_k(&self) -> &[f64] {
        &self.weight_k
    }
    pub fn spec(&self) -> GridSpec {
        GridSpec { n_points: self.n_points, box_radius: self.box_radius }
    }
    pub(crate) fn mass(&self) -> &ToeplitzSpd {
        &self.mass
    }

    /// ∫ 4π r² f(r) dr by the trapezoid rule on the nodes.
    pub fn integrate_radial(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.r.iter().zip(&self.weight_r).map(|(&r, &w)| w * r * r * f(r)).sum()
    }

    /// y_m = Σ_{j=1}^{N−1} x_j sin(π j m / N), m = 1..N−1 (DST-I).
    pub fn dst1(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n_points;
        assert_eq!(x.len(), n - 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        for j in 1..n {
            buf[j] = x[j - 1];
            buf[2 * n - j] = -x[j - 1];
        }
        self.fft.process(&mut buf);
        let half_i = Complex64::new(0.0, 0.5);
        (1..n).map(|m| half_i * buf[m]).collect()
    }

    /// c_j = Σ_{m=1}^{N−1} x_m cos(π j m / N), j = 0..N.
    pub fn dct_sum(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_points;
        assert_eq!(x.len(), n - 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * n];
        for m in 1..n {
            buf[m] = Complex64::new(x[m - 1], 0.0);
        }
        self.fft.process(&mut buf);
        buf[..=n].iter().map(|c| c.re).collect()
    }

    /// DST-I of a real sequence.
    pub fn dst1_real(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<Complex64> = x.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        self.dst1(&z).into_iter().map(|c| c.re).collect()
    }

    /// Two real DST-I transforms packed into one complex FFT.
    pub fn dst1_real_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        let y = self.dst1(&z);
        (y.iter().map(|c| c.re).collect(), y.iter().map(|c| c.im).collect())
    }
}

/// Build the uniform radial grid with its dual momentum grid.
pub fn make_grid(n_points: usize, box_radius: f64) -> Result<RadialGrid> {
    if n_points < 16 {
        return Err(Error::validation("n_points", format!("must be >= 16, got {n_points}")));
    }
    if !(box_radius > 0.0) || !box_radius.is_finite() {
        return Err(Error::validation("box_radius", format!("must be positive, got {box_radius}")));
    }
    let dr = box_radius / n_points as f64;
    let dk = PI / box_radius;
    let r: Vec<f64> = (1..=n_points).map(|j| j as f64 * dr).collect();
    let k: Vec<f64> = (0..n_points).map(|m| m as f64 * dk).collect();
    let mut weight_r = vec![4.0 * PI * dr; n_points];
    weight_r[n_points - 1] *= 0.5;
    let mut weight_k = vec![4.0 * PI * dk; n_points];
    weight_k[0] *= 0.5;
    let fft = FftPlanner::new().plan_fft_forward(2 * n_points);
    let mass = ToeplitzSpd::new(n_points - 1, 10.0 / 12.0, 1.0 / 12.0);
    Ok(RadialGrid { n_points, box_radius, dr, dk, r, k, weight_r, weight_k, fft, mass })
}

/// Reduced radial wave function u = rψ in angular channel `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub l: usize,
    pub u: Vec<Complex64>,
}

impl WaveFunction {
    pub fn zeros(grid: &RadialGrid, l: usize) -> Self {
        Self { l, u: vec![Complex64::new(0.0, 0.0); grid.n_points()] }
    }

    /// From interior samples u_1..u_{N−1}; the wall value is set to zero.
    pub fn from_interior(l: usize, interior: &[Complex64]) -> Self {
        let mut u = interior.to_vec();
        u.push(Complex64::new(0.0, 0.0));
        Self { l, u }
    }

    pub fn from_real_interior(l: usize, interior: &[f64]) -> Self {
        let mut u: Vec<Complex64> = interior.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        u.push(Complex64::new(0.0, 0.0));
        Self { l, u }
    }

    /// Sample a (non-reduced) radial function ψ(r).
    pub fn from_fn(grid: &RadialGrid, l: usize, psi: impl Fn(f64) -> Complex64) -> Self {
        let n = grid.interior();
        let interior: Vec<Complex64> = grid.r()[..n].iter().map(|&r| psi(r) * r).collect();
        Self::from_interior(l, &interior)
    }

    pub fn interior(&self) -> &[Complex64] {
        &self.u[..self.u.len() - 1]
    }

    pub fn interior_mut(&mut self) -> &mut [Complex64] {
        let n = self.u.len() - 1;
        &mut self.u[..n]
    }

    pub fn real_interior(&self) -> Vec<f64> {
        self.interior().iter().map(|c| c.re).collect()
    }

    pub fn norm_sq(&self, grid: &RadialGrid) -> f64 {
        inner(grid, &self.u, &self.u).re
    }

    pub fn norm(&self, grid: &RadialGrid) -> f64 {
        self.norm_sq(grid).sqrt()
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self { l: self.l, u: self.u.iter().map(|&x| x * s).collect() }
    }

    pub fn normalized(&self, grid: &RadialGrid) -> Self {
        self.scaled(Complex64::new(1.0 / self.norm(grid), 0.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { l: self.l, u: self.u.iter().zip(&other.u).map(|(a, b)| a - b).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { l: self.l, u: self.u.iter().zip(&other.u).map(|(a, b)| a + b).collect() }
    }

    /// |u_N| relative to max |u|.
    pub fn wall_ratio(&self) -> f64 {
        let max = self.u.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            0.0
        } else {
            self.u[self.u.len() - 1].norm() / max
        }
    }
}

/// ⟨a, b⟩ = 4π dr Σ conj(a_j) b_j over reduced samples.
pub fn inner(grid: &RadialGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let s: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    s * (4.0 * PI * grid.dr())
}

pub fn inner_real(grid: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    4.0 * PI * grid.dr() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
}

/// Reduced momentum samples of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub v: Vec<Complex64>,
}

impl FieldState {
    pub fn zeros(grid: &RadialGrid) -> Self {
        Self { v: vec![Complex64::new(0.0, 0.0); grid.n_points()] }
    }

    pub fn from_real(v: &[f64]) -> Self {
        Self { v: v.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    pub fn norm_sq(&self, grid: &RadialGrid) -> f64 {
        field_inner(grid, &self.v, &self.v).re
    }

    pub fn norm(&self, grid: &RadialGrid) -> f64 {
        self.norm_sq(grid).sqrt()
    }

    pub fn re(&self) -> Self {
        Self { v: self.v.iter().map(|c| Complex64::new(c.re, 0.0)).collect() }
    }

    /// Imaginary part as a real-space imaginary field i·Im φ.
    pub fn im_part(&self) -> Self {
        Self { v: self.v.iter().map(|c| Complex64::new(0.0, c.im)).collect() }
    }

    /// Im φ as a real field (the field whose values are Im v).
    pub fn im_as_real(&self) -> Self {
        Self { v: self.v.iter().map(|c| Complex64::new(c.im, 0.0)).collect() }
    }

    /// ‖Im φ‖₂².
    pub fn im_norm_sq(&self, grid: &RadialGrid) -> f64 {
        grid.weight_k().iter().zip(&self.v).map(|(w, c)| w * c.im * c.im).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { v: self.v.iter().map(|&x| x * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { v: self.v.iter().zip(&other.v).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { v: self.v.iter().zip(&other.v).map(|(a, b)| a - b).collect() }
    }
}

/// ⟨a, b⟩ = ∫ conj(φ̂_a) φ̂_b d³k with trapezoid weights on the k-grid.
pub fn field_inner(grid: &RadialGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).zip(grid.weight_k()).map(|((x, y), w)| x.conj() * y * *w).sum()
}

/// Reduced radial samples → reduced momentum samples (v_0 = 0).
pub fn sine_transform(grid: &RadialGrid, f: &WaveFunction) -> Result<Vec<Complex64>> {
    if f.u.len() != grid.n_points() {
        return Err(Error::Grid(format!("length {} does not match grid {}", f.u.len(), grid.n_points())));
    }
    let scale = (2.0 / PI).sqrt() * grid.dr();
    let y = grid.dst1(f.interior());
    let mut v = Vec::with_capacity(grid.n_points());
    v.push(Complex64::new(0.0, 0.0));
    v.extend(y.into_iter().map(|c| c * scale));
    Ok(v)
}

/// Reduced momentum samples → reduced radial samples. Inverse of
/// [`sine_transform`]; the k = 0 entry carries no weight for wave functions.
pub fn inverse_sine_transform(grid: &RadialGrid, l: usize, v: &[Complex64]) -> Result<WaveFunction> {
    if v.len() != grid.n_points() {
        return Err(Error::Grid(format!("length {} does not match grid {}", v.len(), grid.n_points())));
    }
    let scale = (2.0 / PI).sqrt() * grid.dk();
    let y = grid.dst1(&v[1..]);
    let interior: Vec<Complex64> = y.into_iter().map(|c| c * scale).collect();
    Ok(WaveFunction::from_interior(l, &interior))
}

/// Numerov closure at r = 0. For l = 1 the reduced function behaves like
/// c r², so (l(l+1)u/r²)(0) = 2c ≈ 2u₁/h² is not zero; its B-weighted
/// contribution lands on the first row.
pub fn numerov_corner(grid: &RadialGrid, l: usize) -> f64 {
    if l == 1 {
        1.0 / (6.0 * grid.dr() * grid.dr())
    } else {
        0.0
    }
}

/// B⁻¹(−A u/h² + corner·u₁e₁): the second-difference part of K, without
/// the centrifugal term.
pub(crate) fn numerov_second_difference<U>(grid: &RadialGrid, l: usize, u: &[U]) -> Vec<U>
where
    U: Copy + Add<Output = U> + std::ops::Sub<Output = U> + Mul<f64, Output = U>,
{
    let n = grid.interior();
    assert_eq!(u.len(), n);
    let h2 = grid.dr() * grid.dr();
    let mut y: Vec<U> = Vec::with_capacity(n);
    for j in 0..n {
        let mut s = u[j] * 2.0;
        if j > 0 {
            s = s - u[j - 1];
        }
        if j + 1 < n {
            s = s - u[j + 1];
        }
        y.push(s * (1.0 / h2));
    }
    let corner = numerov_corner(grid, l);
    if corner != 0.0 {
        y[0] = y[0] + u[0] * corner;
    }
    grid.mass().solve_in_place(&mut y);
    y
}

/// Numerov kinetic operator plus centrifugal term on interior samples:
/// K u = B⁻¹(−A u / h² + corner) + l(l+1)u/r².
pub fn kinetic_interior<U>(grid: &RadialGrid, l: usize, u: &[U]) -> Vec<U>
where
    U: Copy + Add<Output = U> + std::ops::Sub<Output = U> + Mul<f64, Output = U>,
{
    let n = grid.interior();
    let mut y = numerov_second_difference(grid, l, u);
    if l > 0 {
        let ll = (l * (l + 1)) as f64;
        for j in 0..n {
            let r = grid.r()[j];
            y[j] = y[j] + u[j] * (ll / (r * r));
        }
    }
    y
}

/// Kinetic operator −u″ + l(l+1)u/r² with Dirichlet ends (Numerov discretization).
pub fn apply_kinetic(grid: &RadialGrid, f: &WaveFunction) -> WaveFunction {
    let y = kinetic_interior(grid, f.l, f.interior());
    WaveFunction::from_interior(f.l, &y)
}

/// Symbol of the l = 0 Numerov kinetic operator on the m-th sine mode.
pub fn kinetic_symbol(grid: &RadialGrid, m: usize) -> f64 {
    let s = (PI * m as f64 / (2.0 * grid.n_points() as f64)).sin();
    let s2 = s * s;
    4.0 / (grid.dr() * grid.dr()) * s2 / (1.0 - s2 / 3.0)
}

pub(crate) fn check_channel(l: usize) -> Result<()> {
    if l > MAX_CHANNEL {
        Err(Error::UnsupportedChannel(l))
    } else {
        Ok(())
    }
}

/// Free-space (−Δ)⁻¹ in channel `l` on interior samples, O(N):
/// w_i = h Σ_j r_i r_j r_<^l / r_>^{l+1} / (2l+1) f_j − (h²/12) f_i.
/// The diagonal term is the Euler–Maclaurin correction for the kernel kink.
pub fn greens_interior<U>(grid: &RadialGrid, l: usize, f: &[U]) -> Vec<U>
where
    U: Copy + Add<Output = U> + Mul<f64, Output = U>,
{
    let n = grid.interior();
    assert_eq!(f.len(), n);
    let h = grid.dr();
    let r = &grid.r()[..n];
    let lp = l as i32;
    let pref = h / (2 * l + 1) as f64;
    // inner[i] = Σ_{j ≤ i} r_j^{l+1} f_j
    let mut inner_sum: Vec<U> = Vec::with_capacity(n);
    let mut acc = f[0] * 0.0;
    for j in 0..n {
        acc = acc + f[j] * r[j].powi(lp + 1);
        inner_sum.push(acc);
    }
    // outer[i] = Σ_{j > i} r_j^{−l} f_j
    let mut out = vec![f[0] * 0.0; n];
    let mut outer = f[0] * 0.0;
    for i in (0..n).rev() {
        let w = inner_sum[i] * r[i].powi(-lp) + outer * r[i].powi(lp + 1);
        out[i] = w * pref + f[i] * (-h * h / 12.0);
        outer = outer + f[i] * r[i].powi(-lp);
    }
    out
}

/// (−Δ)⁻¹ in channel `l` (free space, not Dirichlet).
pub fn greens_apply(grid: &RadialGrid, f: &WaveFunction, l: usize) -> Result<WaveFunction> {
    check_channel(l)?;
    let y = greens_interior(grid, l, f.interior());
    Ok(WaveFunction::from_interior(l, &y))
}

/// Dense Green's kernel on interior nodes.
pub fn greens_matrix(grid: &RadialGrid, l: usize) -> Result<DMatrix<f64>> {
    check_channel(l)?;
    let n = grid.interior();
    let h = grid.dr();
    let r = &grid.r()[..n];
    let lp = l as i32;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let (rl, rg) = if r[i] < r[j] { (r[i], r[j]) } else { (r[j], r[i]) };
        let mut g = h * r[i] * r[j] * rl.powi(lp) / rg.powi(lp + 1) / (2 * l + 1) as f64;
        if i == j {
            g -= h * h / 12.0;
        }
        g
    }))
}

/// Dense kinetic matrix in channel `l` (oracle use only). Symmetric except
/// for the l = 1 corner column.
pub fn kinetic_matrix(grid: &RadialGrid, l: usize) -> DMatrix<f64> {
    let n = grid.interior();
    let mut m = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = kinetic_interior(grid, l, &e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn small_grid_arithmetic() {
        let g = make_grid(16, 8.0).unwrap();
        assert_eq!(g.dr(), 0.5);
        assert!((g.k()[1] - PI / 8.0).abs() < 1e-15);
        assert_eq!(g.r()[0], 0.5);
        assert_eq!(g.r()[15], 8.0);
        assert!((g.dr() * g.dk() * 16.0 - PI).abs() < 1e-14);
    }

    #[test]
    fn production_grid_spacing() {
        let g = make_grid(2048, 40.0).unwrap();
        assert!((g.dr() - 0.01953125).abs() < 1e-15);
        assert!(g.r().windows(2).all(|w| w[1] > w[0]));
        assert!(g.k().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_grid(15, 1.0).is_err());
        assert!(make_grid(64, 0.0).is_err());
        assert!(make_grid(64, -2.0).is_err());
    }

    #[test]
    fn gaussian_integral() {
        let g = make_grid(2048, 40.0).unwrap();
        let v = g.integrate_radial(|r| (-r * r).exp());
        assert!((v - PI.powf(1.5)).abs() < 1e-8, "{v}");
    }

    #[test]
    fn transform_zero_and_roundtrip() {
        let g = make_grid(64, 5.0).unwrap();
        let z = WaveFunction::zeros(&g, 0);
        assert!(sine_transform(&g, &z).unwrap().iter().all(|c| c.norm() == 0.0));
        let f = WaveFunction::from_fn(&g, 0, |r| Complex64::new((r * 1.3).cos(), (r * 0.4).sin()) * (-r).exp());
        let v = sine_transform(&g, &f).unwrap();
        let back = inverse_sine_transform(&g, 0, &v).unwrap();
        let err = f.u.iter().zip(&back.u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn transform_length_mismatch() {
        let g = make_grid(64, 5.0).unwrap();
        let f = WaveFunction { l: 0, u: vec![c(1.0); 10] };
        assert!(sine_transform(&g, &f).is_err());
    }

    #[test]
    fn gaussian_fourier_pair() {
        let g = make_grid(2048, 40.0).unwrap();
        let f = WaveFunction::from_fn(&g, 0, |r| c(PI.powf(-0.75) * (-r * r / 2.0).exp()));
        let v = sine_transform(&g, &f).unwrap();
        let mut err: f64 = 0.0;
        for (m, &k) in g.k().iter().enumerate().skip(1) {
            let want = k * PI.powf(-0.75) * (-k * k / 2.0).exp();
            err = err.max((v[m].re - want).abs());
        }
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn kinetic_box_mode() {
        let g = make_grid(256, 8.0).unwrap();
        let f = WaveFunction::from_real_interior(0, &g.r()[..g.interior()].iter().map(|r| (PI * r / 8.0).sin()).collect::<Vec<_>>());
        let kf = apply_kinetic(&g, &f);
        let lam = kinetic_symbol(&g, 1);
        assert!((lam / (PI / 8.0).powi(2) - 1.0).abs() < 1e-8);
        for (a, b) in kf.u.iter().zip(&f.u) {
            assert!((a - b * lam).norm() < 1e-12);
        }
    }

    #[test]
    fn gaussian_kinetic_energy() {
        let g = make_grid(2048, 40.0).unwrap();
        let f = WaveFunction::from_fn(&g, 0, |r| c(PI.powf(-0.75) * (-r * r / 2.0).exp()));
        let t = inner(&g, &f.u, &apply_kinetic(&g, &f).u).re;
        assert!((t - 1.5).abs() < 1e-6, "{t}");
    }

    #[test]
    fn kinetic_refinement_order() {
        // fixed smooth state, T at three resolutions
        let t = |n: usize| {
            let g = make_grid(n, 12.0).unwrap();
            let f = WaveFunction::from_fn(&g, 0, |r| c((-r * r * 2.0).exp() * (1.0 + r)));
            inner(&g, &f.u, &apply_kinetic(&g, &f).u).re / f.norm_sq(&g)
        };
        let (a, b, cc) = (t(128), t(256), t(512));
        let order = ((a - b) / (b - cc)).abs().log2();
        assert!(order >= 1.8, "order {order}");
    }

    #[test]
    fn newton_potential_of_gaussian() {
        let g = make_grid(2048, 40.0).unwrap();
        let rho = WaveFunction::from_fn(&g, 0, |r| c(PI.powf(-1.5) * (-r * r).exp()));
        let w = greens_apply(&g, &rho, 0).unwrap();
        let mut err: f64 = 0.0;
        for (j, &r) in g.r()[..g.interior()].iter().enumerate() {
            let want = erf(r) / (4.0 * PI);
            err = err.max((w.u[j].re - want).abs());
        }
        assert!(err < 1e-6 / (4.0 * PI), "{err}");
    }

    #[test]
    fn greens_roundtrip_zero_moment() {
        let rel = |nn: usize, l: usize| {
            let g = make_grid(nn, 40.0).unwrap();
            // source with vanishing l-multipole moment
            let base = |r: f64| (-r * r).exp() * r.powi(l as i32);
            let a = g.integrate_radial(|r| base(r) * r.powi(l as i32));
            let b = g.integrate_radial(|r| base(r) * r * r * r.powi(l as i32));
            let f = WaveFunction::from_fn(&g, l, |r| c(base(r) * (1.0 - a / b * r * r)));
            let w = greens_apply(&g, &f, l).unwrap();
            apply_kinetic(&g, &w).sub(&f).norm(&g) / f.norm(&g)
        };
        assert!(rel(2048, 0) < 1e-11);
        for l in 1..=2 {
            let (coarse, fine) = (rel(1024, l), rel(2048, l));
            assert!(fine < 2e-5, "l={l} rel={fine}");
            assert!((coarse / fine).log2() > 2.0, "l={l}");
        }
    }

    #[test]
    fn greens_dense_matches_fast() {
        let g = make_grid(128, 6.0).unwrap();
        for l in 0..=2 {
            let m = greens_matrix(&g, l).unwrap();
            let f: Vec<f64> = (0..g.interior()).map(|j| ((j * 37 % 11) as f64 - 5.0) / 5.0).collect();
            let fast = greens_interior(&g, l, &f);
            let dense = &m * nalgebra::DVector::from_vec(f.clone());
            for j in 0..f.len() {
                assert!((fast[j] - dense[j]).abs() < 1e-12 * (1.0 + dense[j].abs()));
            }
        }
    }

    #[test]
    fn dct_sum_matches_direct_sum() {
        let g = make_grid(32, 3.0).unwrap();
        let x: Vec<f64> = (1..32).map(|m| (m as f64 * 0.37).sin() + 0.1 * m as f64).collect();
        let c = g.dct_sum(&x);
        assert_eq!(c.len(), 33);
        for (j, cj) in c.iter().enumerate() {
            let direct: f64 = (1..32).map(|m| x[m - 1] * (std::f64::consts::PI * (j * m) as f64 / 32.0).cos()).sum();
            assert!((cj - direct).abs() < 1e-12, "j={j}");
        }
    }

    #[test]
    fn unsupported_channel() {
        let g = make_grid(64, 5.0).unwrap();
        let f = WaveFunction::zeros(&g, 3);
        assert!(matches!(greens_apply(&g, &f, 3), Err(Error::UnsupportedChannel(3))));
    }

    /// Series erf for the Newton-potential oracle.
    fn erf(x: f64) -> f64 {
        // Taylor series converges well for x ≤ 3; erfc asymptotics beyond
        if x < 3.0 {
            let mut term = x;
            let mut sum = x;
            let mut n = 0.0;
            loop {
                n += 1.0;
                term *= -x * x / n;
                let add = term / (2.0 * n + 1.0);
                sum += add;
                if add.abs() < 1e-17 * sum.abs() {
                    break;
                }
            }
            2.0 / PI.sqrt() * sum
        } else {
            let mut s = 1.0;
            let mut t = 1.0;
            for k in 1..12 {
                t *= -((2 * k - 1) as f64) / (2.0 * x * x);
                s += t;
            }
            1.0 - (-x * x).exp() / (x * PI.sqrt()) * s
        }
    }
}
