//! Second variation of ℰ at the Pekar minimizer and sampled checks of the
//! quadratic lower bounds for ℰ and ℱ.
//!
//! L₋ = h_{φ_P} − e(φ_P), L₊ = L₋ − 4X with X = (2π)³ ψ_P (−Δ)⁻¹ ψ_P.
//! Matrix-free operators act on the full grid. Spectra of L₊ come from dense
//! eigenproblems on the box r ≤ `DENSE_BOX_RADIUS` (same step, Dirichlet
//! there); ψ_P and every eigenvector below the continuum are negligible
//! beyond it, and the box is checked against the full-grid L₋ spectrum.

use crate::error::{Error, Result};
use crate::par::Exec;
use crate::pekar::{coupling, energy_e, energy_g, sigma_of_psi, PekarSolution};
use crate::radial::{
    check_channel, greens_interior, greens_matrix, inner, inner_real, kinetic_interior, kinetic_matrix, make_grid,
    FieldState, RadialGrid, WaveFunction,
};
use crate::spectral::{bisect_eigenvalue, effective_potential, energy_f_from, gap, ground_state};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const DENSE_BOX_RADIUS: f64 = 5.0;
/// Box used for the lower-order bound C̃.
pub const LOWER_ORDER_BOX_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    Minus,
    Plus,
}

/// ⟨a, b⟩ + ⟨a, −Δ b⟩ for ℓ = 0 reduced samples.
pub fn h1_inner(grid: &RadialGrid, a: &WaveFunction, b: &WaveFunction) -> Complex64 {
    let kb = kinetic_interior(grid, 0, b.interior());
    inner(grid, a.interior(), b.interior()) + inner(grid, a.interior(), &kb)
}

pub fn h1_norm_sq(grid: &RadialGrid, a: &WaveFunction) -> f64 {
    h1_inner(grid, a, a).re
}

/// Derivative of reduced samples through the sine series:
/// u′(r_j) = √(2/π) dk Σ_m v_m k_m cos(k_m r_j).
fn spectral_derivative(grid: &RadialGrid, u: &[f64]) -> Vec<f64> {
    let n = grid.interior();
    let v = grid.dst1_real(u);
    let pref = (2.0 / std::f64::consts::PI).sqrt() * grid.dr();
    let a: Vec<f64> = (0..n).map(|m| pref * v[m] * grid.k()[m + 1]).collect();
    let c = grid.dct_sum(&a);
    let pref2 = (2.0 / std::f64::consts::PI).sqrt() * grid.dk();
    (1..=n).map(|j| pref2 * c[j]).collect()
}

#[derive(Debug, Clone)]
pub struct HessianContext<'a> {
    pub grid: &'a RadialGrid,
    pub pekar: &'a PekarSolution,
    /// e(φ_P).
    pub e_ground: f64,
    pub potential: Vec<f64>,
    pub psi_p: Vec<f64>,
    /// ℓ = 1 reduced profile r ψ_P′ of ∂_iψ_P.
    pub dpsi_p: Vec<f64>,
    /// ‖L₋ ψ_P‖₂.
    pub lm_residual: f64,
    box_grid: RadialGrid,
}

impl<'a> HessianContext<'a> {
    pub fn new(grid: &'a RadialGrid, pekar: &'a PekarSolution) -> Result<Self> {
        if pekar.grid != grid.spec() {
            return Err(Error::Grid("Pekar solution belongs to a different grid".into()));
        }
        let psi_p = pekar.psi_real();
        let r = &grid.r()[..grid.interior()];
        // ψ_P′ r = u′ − u/r
        let du = spectral_derivative(grid, &psi_p);
        let dpsi_p: Vec<f64> = du.iter().zip(&psi_p).zip(r).map(|((d, u), r)| d - u / r).collect();
        let n_box = ((DENSE_BOX_RADIUS.min(grid.box_radius()) / grid.dr()).round() as usize).max(8).min(grid.n_points());
        let box_grid = make_grid(n_box, n_box as f64 * grid.dr())?;
        let mut ctx = Self {
            grid,
            pekar,
            e_ground: pekar.e_ground,
            potential: pekar.potential.clone(),
            psi_p,
            dpsi_p,
            lm_residual: 0.0,
            box_grid,
        };
        let lm = ctx.l_real(0, Which::Minus, &ctx.psi_p);
        ctx.lm_residual = inner_real(grid, &lm, &lm).sqrt();
        Ok(ctx)
    }

    fn x_real(&self, l: usize, f: &[f64]) -> Vec<f64> {
        let c = coupling().powi(2);
        let r = self.grid.r();
        let a: Vec<f64> = f.iter().enumerate().map(|(j, x)| x * self.psi_p[j] / r[j]).collect();
        let g = greens_interior(self.grid, l, &a);
        g.iter().enumerate().map(|(j, x)| c * x * self.psi_p[j] / r[j]).collect()
    }

    fn l_real(&self, l: usize, which: Which, f: &[f64]) -> Vec<f64> {
        let mut y = kinetic_interior(self.grid, l, f);
        for j in 0..f.len() {
            y[j] += (self.potential[j] - self.e_ground) * f[j];
        }
        if which == Which::Plus {
            let x = self.x_real(l, f);
            for j in 0..f.len() {
                y[j] -= 4.0 * x[j];
            }
        }
        y
    }

    fn split<T>(&self, f: &WaveFunction, op: T) -> Result<WaveFunction>
    where
        T: Fn(&[f64]) -> Vec<f64>,
    {
        check_channel(f.l)?;
        if f.u.len() != self.grid.n_points() {
            return Err(Error::Grid("wave function does not match the grid".into()));
        }
        let re: Vec<f64> = f.interior().iter().map(|c| c.re).collect();
        let im: Vec<f64> = f.interior().iter().map(|c| c.im).collect();
        let (a, b) = (op(&re), op(&im));
        let out: Vec<Complex64> = a.iter().zip(&b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        Ok(WaveFunction::from_interior(f.l, &out))
    }

    /// X f = (2π)³ ψ_P (−Δ)⁻¹ (ψ_P f) in the channel of `f`.
    pub fn apply_x(&self, f: &WaveFunction) -> Result<WaveFunction> {
        self.split(f, |x| self.x_real(f.l, x))
    }

    pub fn apply_l(&self, f: &WaveFunction, which: Which) -> Result<WaveFunction> {
        self.split(f, |x| self.l_real(f.l, which, x))
    }

    /// ⟨Im δ, L₋ Im δ⟩ + ⟨Re δ, L₊ Re δ⟩ for an ℓ = 0 perturbation.
    pub fn hess(&self, delta: &WaveFunction) -> f64 {
        let re: Vec<f64> = delta.interior().iter().map(|c| c.re).collect();
        let im: Vec<f64> = delta.interior().iter().map(|c| c.im).collect();
        inner_real(self.grid, &im, &self.l_real(0, Which::Minus, &im)) + inner_real(self.grid, &re, &self.l_real(0, Which::Plus, &re))
    }

    /// Exact remainder ℰ(ψ_P + δ) − e_P − Hess(δ) for normalized ψ_P + δ:
    /// −4c⟨ψ_P Re δ, G|δ|²⟩ − c⟨|δ|², G|δ|²⟩ on reduced densities.
    pub fn cubic_remainder(&self, delta: &WaveFunction) -> f64 {
        let c = coupling().powi(2);
        let r = self.grid.r();
        let n = self.grid.interior();
        let d2: Vec<f64> = (0..n).map(|j| delta.u[j].norm_sqr() / r[j]).collect();
        let mix: Vec<f64> = (0..n).map(|j| self.psi_p[j] * delta.u[j].re / r[j]).collect();
        let g = greens_interior(self.grid, 0, &d2);
        let w = 4.0 * std::f64::consts::PI * self.grid.dr();
        let s1: f64 = (0..n).map(|j| mix[j] * g[j]).sum::<f64>() * w;
        let s2: f64 = (0..n).map(|j| d2[j] * g[j]).sum::<f64>() * w;
        -4.0 * c * s1 - c * s2
    }

    fn box_n(&self) -> usize {
        self.box_grid.interior()
    }

    /// Dense L on the box r ≤ `DENSE_BOX_RADIUS` (ℓ = 1 is mildly non-symmetric).
    pub fn dense_l(&self, l: usize, which: Which) -> Result<DMatrix<f64>> {
        check_channel(l)?;
        let n = self.box_n();
        let mut m = kinetic_matrix(&self.box_grid, l);
        for j in 0..n {
            m[(j, j)] += self.potential[j] - self.e_ground;
        }
        if which == Which::Plus {
            let g = greens_matrix(&self.box_grid, l)?;
            let r = self.box_grid.r();
            let c = coupling().powi(2);
            let d: Vec<f64> = (0..n).map(|j| self.psi_p[j] / r[j]).collect();
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] -= 4.0 * c * d[i] * g[(i, j)] * d[j];
                }
            }
        }
        Ok(m)
    }

    /// Sorted eigenvalues of a dense channel operator, optionally compressed
    /// to the orthogonal complement of `constraint` (interior samples).
    pub fn channel_spectrum(&self, l: usize, which: Which, constraint: Option<&[f64]>) -> Result<Vec<f64>> {
        let mut m = self.dense_l(l, which)?;
        if let Some(c) = constraint {
            let n = self.box_n();
            let mut v = DVector::from_iterator(n, c[..n].iter().cloned());
            let nrm = v.norm();
            if nrm == 0.0 {
                return Err(Error::validation("constraint", "zero vector"));
            }
            v /= nrm;
            // Householder reflector H with H e₁ = ±v; columns 2.. span v⊥
            let mut w = v.clone();
            w[0] = v[0] + if v[0] >= 0.0 { 1.0 } else { -1.0 };
            let wn = w.norm_squared();
            let h = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / wn);
            let full = h.transpose() * &m * &h;
            m = full.view((1, 1), (n - 1, n - 1)).into_owned();
        }
        let mut ev: Vec<f64> = if l == 1 {
            let z = m.complex_eigenvalues();
            let mut out = Vec::with_capacity(z.len());
            for c in z.iter() {
                if c.im.abs() > 1e-6 * (1.0 + c.re.abs()) {
                    return Err(Error::Numerical(format!("complex eigenvalue {c} in channel 1")));
                }
                out.push(c.re);
            }
            out
        } else {
            let sym = (&m + m.transpose()) * 0.5;
            sym.symmetric_eigenvalues().iter().cloned().collect()
        };
        ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalue"));
        Ok(ev)
    }

    /// Lowest excitation of L₋ per channel on the full grid (ℓ = 0: second eigenvalue).
    pub fn l_minus_excitations(&self) -> Result<[f64; 3]> {
        let v = &self.potential;
        let g = self.grid;
        Ok([
            bisect_eigenvalue(g, 0, v, 1)? - self.e_ground,
            bisect_eigenvalue(g, 1, &effective_potential(g, v, 1), 0)? - self.e_ground,
            bisect_eigenvalue(g, 2, &effective_potential(g, v, 2), 0)? - self.e_ground,
        ])
    }

    pub fn hessian_kappas(&self) -> Result<Kappas> {
        let zero_tol = 1e-4 * self.pekar.e_p.abs();
        let exc = self.l_minus_excitations()?;
        let kappa1 = exc.iter().cloned().fold(f64::INFINITY, f64::min);

        let box_l0 = self.channel_spectrum(0, Which::Minus, None)?;
        let full_second = exc[0];
        let truncation_defect = ((box_l0[1] - full_second) / full_second).abs().max((box_l0[0]).abs() / self.pekar.e_p.abs());

        let l0 = self.channel_spectrum(0, Which::Plus, Some(&self.psi_p))?;
        let l1_full = self.channel_spectrum(1, Which::Plus, None)?;
        let l1 = self.channel_spectrum(1, Which::Plus, Some(&self.dpsi_p))?;
        let l2 = self.channel_spectrum(2, Which::Plus, None)?;
        let zero_modes: Vec<f64> = l1_full.iter().cloned().filter(|x| x.abs() <= zero_tol).collect();
        let l1_rest_min = l1_full.iter().cloned().filter(|x| x.abs() > zero_tol).fold(f64::INFINITY, f64::min);
        let per_channel = [l0[0], l1[0], l2[0]];
        let kappa2 = per_channel.iter().cloned().fold(f64::INFINITY, f64::min);
        if kappa2 < -zero_tol {
            return Err(Error::invariant("kappa2 > 0", None, format!("constrained L+ has eigenvalue {kappa2:.6e}")));
        }
        let c_tilde = self.lower_order_bound()?;
        let kappa_prime = kappa1.min(kappa2);
        let kappa_hat = kappa_prime / (kappa_prime + 2.0 * c_tilde);
        let dnorm = inner_real(self.grid, &self.dpsi_p, &self.dpsi_p).sqrt();
        let lp = self.l_real(1, Which::Plus, &self.dpsi_p);
        Ok(Kappas {
            kappa1,
            kappa2,
            kappa_hat,
            c_tilde,
            l_minus_by_channel: exc,
            l_plus_by_channel: per_channel,
            l1_zero_modes: zero_modes,
            l1_lowest_nonzero: l1_rest_min,
            l1_lowest_four: l1_full.iter().take(4).cloned().collect(),
            translation_residual: inner_real(self.grid, &lp, &lp).sqrt() / dnorm,
            lm_residual: self.lm_residual,
            truncation_defect,
            box_radius: self.box_grid.box_radius(),
        })
    }

    /// C̃ = λ_max(1 + e − V + 4X) on the box r ≤ `LOWER_ORDER_BOX_RADIUS`.
    pub fn lower_order_bound(&self) -> Result<f64> {
        let n = ((LOWER_ORDER_BOX_RADIUS.min(self.box_grid.box_radius()) / self.grid.dr()).round() as usize).min(self.box_n()).max(2);
        let g = greens_matrix(&self.box_grid, 0)?;
        let r = self.box_grid.r();
        let c = coupling().powi(2);
        let m = DMatrix::from_fn(n, n, |i, j| {
            let mut x = 4.0 * c * self.psi_p[i] / r[i] * g[(i, j)] * self.psi_p[j] / r[j];
            if i == j {
                x += 1.0 + self.e_ground - self.potential[i];
            }
            x
        });
        let sym = (&m + m.transpose()) * 0.5;
        Ok(sym.symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Kappas {
    pub kappa1: f64,
    pub kappa2: f64,
    /// κ′/(κ′ + 2C̃) with κ′ = min(κ₁, κ₂).
    pub kappa_hat: f64,
    pub c_tilde: f64,
    pub l_minus_by_channel: [f64; 3],
    /// Lowest constrained L₊ eigenvalue for ℓ = 0 (⟂ ψ_P), 1 (⟂ ∂ψ_P), 2.
    pub l_plus_by_channel: [f64; 3],
    pub l1_zero_modes: Vec<f64>,
    pub l1_lowest_nonzero: f64,
    pub l1_lowest_four: Vec<f64>,
    /// ‖L₊ ∂ψ_P‖ / ‖∂ψ_P‖.
    pub translation_residual: f64,
    pub lm_residual: f64,
    /// Relative disagreement of the dense box with the full-grid L₋ spectrum.
    pub truncation_defect: f64,
    pub box_radius: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Distances {
    pub dist_h1_sq: f64,
    pub dist_l2_sq: f64,
    /// Optimal phase arg⟨ψ_P, ψ⟩_{H¹}.
    pub theta: f64,
    /// Same distance from a golden-section search over θ.
    pub dist_h1_sq_golden: f64,
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-12 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// min_θ ‖ψ − e^{iθ}ψ_ref‖²_{H¹} in closed form, with a golden-section cross-check.
pub fn phase_distance_h1(grid: &RadialGrid, psi: &WaveFunction, reference: &WaveFunction) -> (f64, f64, f64) {
    let z = h1_inner(grid, reference, psi);
    let a = h1_norm_sq(grid, psi) + h1_norm_sq(grid, reference);
    let closed = (a - 2.0 * z.norm()).max(0.0);
    let f = |t: f64| a - 2.0 * (Complex64::from_polar(1.0, -t) * z).re;
    // coarse scan to bracket, then golden section
    let m = 64;
    let step = 2.0 * std::f64::consts::PI / m as f64;
    let best = (0..m).map(|i| i as f64 * step).fold((0.0, f64::INFINITY), |acc, t| if f(t) < acc.1 { (t, f(t)) } else { acc });
    let (_, golden) = golden_min(f, best.0 - step, best.0 + step);
    (closed, z.arg(), golden.max(0.0))
}

/// (dist²_{H¹}(ψ, Θ), dist²_{L²}(φ, Ω)) with the translation fixed at y = 0.
pub fn dist_to_minimizers(grid: &RadialGrid, psi: &WaveFunction, phi: &FieldState, pekar: &PekarSolution) -> Result<Distances> {
    let n2 = psi.norm_sq(grid);
    if (n2 - 1.0).abs() > 1e-8 {
        return Err(Error::validation("psi", format!("must be normalized, ‖ψ‖² = {n2}")));
    }
    let (dist_h1_sq, theta, golden) = phase_distance_h1(grid, psi, &pekar.psi_p);
    Ok(Distances { dist_h1_sq, dist_l2_sq: phi.sub(&pekar.phi_p).norm_sq(grid), theta, dist_h1_sq_golden: golden })
}

/// Random smooth radial bump Σ c_j (r/s)^j e^{−(r/s)²}, as reduced samples.
pub fn random_bump(grid: &RadialGrid, rng: &mut ChaCha8Rng, imaginary: bool) -> WaveFunction {
    let s: f64 = rng.random_range(0.08..0.5);
    let coef: Vec<Complex64> = (0..4)
        .map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            if imaginary {
                Complex64::new(0.0, a)
            } else {
                Complex64::new(a, b)
            }
        })
        .collect();
    WaveFunction::from_fn(grid, 0, |r| {
        let x = r / s;
        let poly = coef.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c);
        poly * (-x * x).exp()
    })
}

/// Random real-space-smooth field bump v(k) = Σ c_j (k/κ)^j e^{−(k/κ)²}.
pub fn random_field_bump(grid: &RadialGrid, rng: &mut ChaCha8Rng) -> FieldState {
    let kappa: f64 = rng.random_range(3.0..15.0);
    let coef: Vec<Complex64> = (1..=4)
        .map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            Complex64::new(a, 0.3 * b)
        })
        .collect();
    FieldState {
        v: grid
            .k()
            .iter()
            .map(|&k| {
                let x = k / kappa;
                let poly = coef.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| (acc + c) * x);
                poly * (-x * x).exp()
            })
            .collect(),
    }
}

/// Independent ChaCha8 stream for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Exact CSV columns of the audit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub radius: f64,
    #[serde(rename = "dist_H1_sq")]
    pub dist_h1_sq: f64,
    #[serde(rename = "dE")]
    pub d_e: f64,
    pub ratio: f64,
    #[serde(rename = "dist_L2_sq")]
    pub dist_l2_sq: f64,
    #[serde(rename = "dF")]
    pub d_f: f64,
    #[serde(rename = "ratioF")]
    pub ratio_f: f64,
    pub lemma28_lhs1: f64,
    pub lemma28_lhs2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditSample {
    pub index: usize,
    pub imaginary: bool,
    pub row: AuditRow,
    /// Hess(δ)/dist²_{H¹} for the H¹-gauged δ.
    pub hess_ratio: f64,
    /// |⟨ψ_P, δ⟩ + ‖δ‖²/2| in the L² gauge.
    pub orthogonality_defect: f64,
    /// Hess(Im δ part)/‖Im δ‖² for imaginary samples.
    pub imaginary_rayleigh: Option<f64>,
    /// 𝒢(ψ, φ) − e_P.
    pub pair_excess: f64,
    pub golden_defect: f64,
}

#[derive(Debug, Clone)]
pub struct AuditOptions {
    pub sample_count: usize,
    pub radii: Vec<f64>,
    pub seed: u64,
    pub imaginary_every: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { sample_count: 100, radii: vec![0.01, 0.02, 0.05, 0.1, 0.2], seed: 20240607, imaginary_every: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusSummary {
    pub radius: f64,
    pub count: usize,
    pub min_ratio: f64,
    pub mean_ratio: f64,
    pub min_ratio_f: f64,
    /// max |ratio / Hess-ratio − 1|.
    pub max_hess_defect: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub sample_count: usize,
    pub radii: Vec<f64>,
    pub seed: u64,
    pub kappas: Kappas,
    /// min (ℰ − e_P)/dist²_{H¹}: empirical κ.
    pub kappa_empirical: f64,
    /// min (ℱ − e_P)/dist²_{L²}: empirical τ.
    pub tau_empirical: f64,
    /// Intercept of the per-radius mean ratio extrapolated to radius 0.
    pub ratio_intercept: f64,
    pub per_radius: Vec<RadiusSummary>,
    /// Common constant for the two pair-excess bounds, fitted on even-indexed samples.
    pub c_lemma28: f64,
    /// Odd-indexed samples exceeding 2·C·ε.
    pub lemma28_violations: usize,
    pub negative_ratios: usize,
    pub violations: usize,
    pub max_orthogonality_defect: f64,
    pub max_golden_defect: f64,
    pub min_imaginary_rayleigh: f64,
    pub gap_floor: f64,
}

fn evaluate_sample(ctx: &HessianContext, opts: &AuditOptions, index: usize) -> Result<AuditSample> {
    let grid = ctx.grid;
    let pekar = ctx.pekar;
    let radius = opts.radii[index % opts.radii.len()];
    let imaginary = opts.imaginary_every > 0 && index % opts.imaginary_every == opts.imaginary_every - 1;
    let mut rng = sample_rng(opts.seed, index);
    let mut b = random_bump(grid, &mut rng, imaginary);
    let c = inner(grid, &pekar.psi_p.u, &b.u);
    b = b.sub(&pekar.psi_p.scaled(c));
    b = b.scaled(Complex64::new(radius / h1_norm_sq(grid, &b).sqrt(), 0.0));
    let mut psi = pekar.psi_p.add(&b).normalized(grid);
    let ov = inner(grid, &pekar.psi_p.u, &psi.u);
    psi = psi.scaled(Complex64::from_polar(1.0, -ov.arg()));
    let delta = psi.sub(&pekar.psi_p);
    let orthogonality_defect = (inner(grid, &pekar.psi_p.u, &delta.u) + 0.5 * delta.norm_sq(grid)).norm();

    let mut phi_bump = random_field_bump(grid, &mut rng);
    phi_bump = phi_bump.scaled(radius / phi_bump.norm(grid));
    let phi = pekar.phi_p.add(&phi_bump);

    let d = dist_to_minimizers(grid, &psi, &phi, pekar)?;
    let d_e = energy_e(grid, &psi)? - pekar.e_p;
    let gs = ground_state(grid, &phi)?;
    let d_f = energy_f_from(grid, &phi, gs.e) - pekar.e_p;

    let delta_h = psi.scaled(Complex64::from_polar(1.0, -d.theta)).sub(&pekar.psi_p);
    let hess_ratio = ctx.hess(&delta_h) / d.dist_h1_sq;
    let imaginary_rayleigh = if imaginary {
        let im: Vec<f64> = delta.interior().iter().map(|c| c.im).collect();
        Some(inner_real(grid, &im, &ctx.l_real(0, Which::Minus, &im)) / inner_real(grid, &im, &im))
    } else {
        None
    };

    let psi_phi = gs.wave_function();
    let (lhs1, _, _) = phase_distance_h1(grid, &psi, &psi_phi);
    let lhs2 = phi.add(&sigma_of_psi(grid, &psi_phi)?).norm_sq(grid);
    let pair_excess = energy_g(grid, &psi, &phi)? - pekar.e_p;
    Ok(AuditSample {
        index,
        imaginary,
        row: AuditRow {
            radius,
            dist_h1_sq: d.dist_h1_sq,
            d_e,
            ratio: d_e / d.dist_h1_sq,
            dist_l2_sq: d.dist_l2_sq,
            d_f,
            ratio_f: d_f / d.dist_l2_sq,
            lemma28_lhs1: lhs1,
            lemma28_lhs2: lhs2,
        },
        hess_ratio,
        orthogonality_defect,
        imaginary_rayleigh,
        pair_excess,
        golden_defect: (d.dist_h1_sq_golden - d.dist_h1_sq).abs(),
    })
}

/// Sampled quadratic lower bounds for ℰ and ℱ plus the low-energy closeness checks.
pub fn quad_bound_audit(ctx: &HessianContext, opts: &AuditOptions, exec: Exec) -> Result<(AuditReport, Vec<AuditSample>)> {
    if opts.sample_count == 0 || opts.radii.is_empty() {
        return Err(Error::validation("sample_count", "need at least one sample and one radius"));
    }
    if opts.radii.iter().any(|&r| !(r > 0.0 && r <= 0.2)) {
        return Err(Error::validation("radii", "radii must lie in (0, 0.2]"));
    }
    let kappas = ctx.hessian_kappas()?;
    let idx: Vec<usize> = (0..opts.sample_count).collect();
    let samples: Vec<AuditSample> = exec.map(&idx, |&i| evaluate_sample(ctx, opts, i)).into_iter().collect::<Result<_>>()?;

    let negative_ratios = samples.iter().filter(|s| !(s.row.ratio > 0.0) || !(s.row.ratio_f > 0.0)).count();
    let ratio_of = |s: &AuditSample| s.row.lemma28_lhs1.max(s.row.lemma28_lhs2) / s.pair_excess;
    let c_lemma28 = samples.iter().filter(|s| s.index % 2 == 0).map(ratio_of).fold(0.0f64, f64::max);
    let lemma28_violations = samples
        .iter()
        .filter(|s| s.index % 2 == 1)
        .filter(|s| !(s.pair_excess > 0.0) || ratio_of(s) > 2.0 * c_lemma28)
        .count();

    let mut radii = opts.radii.clone();
    radii.sort_by(|a, b| a.partial_cmp(b).expect("finite radius"));
    radii.dedup();
    let per_radius: Vec<RadiusSummary> = radii
        .iter()
        .map(|&r| {
            let set: Vec<&AuditSample> = samples.iter().filter(|s| s.row.radius == r).collect();
            let count = set.len();
            RadiusSummary {
                radius: r,
                count,
                min_ratio: set.iter().map(|s| s.row.ratio).fold(f64::INFINITY, f64::min),
                mean_ratio: set.iter().map(|s| s.row.ratio).sum::<f64>() / count.max(1) as f64,
                min_ratio_f: set.iter().map(|s| s.row.ratio_f).fold(f64::INFINITY, f64::min),
                max_hess_defect: set.iter().map(|s| (s.row.ratio / s.hess_ratio - 1.0).abs()).fold(0.0, f64::max),
            }
        })
        .collect();
    let ratio_intercept = if per_radius.len() >= 2 {
        let x: Vec<f64> = per_radius.iter().map(|p| p.radius).collect();
        let y: Vec<f64> = per_radius.iter().map(|p| p.mean_ratio).collect();
        crate::adiabatic::linear_fit(&x, &y)?.intercept
    } else {
        per_radius[0].mean_ratio
    };
    let report = AuditReport {
        sample_count: samples.len(),
        radii,
        seed: opts.seed,
        kappa_empirical: samples.iter().map(|s| s.row.ratio).fold(f64::INFINITY, f64::min),
        tau_empirical: samples.iter().map(|s| s.row.ratio_f).fold(f64::INFINITY, f64::min),
        ratio_intercept,
        per_radius,
        c_lemma28,
        lemma28_violations,
        negative_ratios,
        violations: negative_ratios + lemma28_violations,
        max_orthogonality_defect: samples.iter().map(|s| s.orthogonality_defect).fold(0.0, f64::max),
        max_golden_defect: samples.iter().map(|s| s.golden_defect).fold(0.0, f64::max),
        min_imaginary_rayleigh: samples.iter().filter_map(|s| s.imaginary_rayleigh).fold(f64::INFINITY, f64::min),
        gap_floor: kappas.kappa1,
        kappas,
    };
    Ok((report, samples))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapSample {
    pub radius: f64,
    pub gap: Option<f64>,
    /// ‖ψ_φ − ψ_P‖_{H¹}.
    pub ground_shift_h1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapAudit {
    pub lambda_p: f64,
    /// max (Λ_P − Λ(φ))₊ / ‖φ − φ_P‖.
    pub c_gap: f64,
    /// max ‖ψ_φ − ψ_P‖_{H¹} / ‖φ − φ_P‖.
    pub c_ground: f64,
    /// Largest sampled radius at which every sample kept Λ ≥ Λ_P/2.
    pub delta_lambda: f64,
    pub samples: Vec<GapSample>,
}

/// Field perturbations φ_P + η at the given L² radii: Lipschitz constants of
/// the gap and of the ground state.
pub fn gap_lipschitz_audit(grid: &RadialGrid, pekar: &PekarSolution, radii: &[f64], per_radius: usize, seed: u64, exec: Exec) -> Result<GapAudit> {
    if radii.is_empty() || per_radius == 0 || radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::validation("radii", "need positive radii and samples"));
    }
    let lambda_p = gap(grid, &pekar.phi_p)?.gap;
    let jobs: Vec<(usize, f64)> = radii.iter().flat_map(|&r| (0..per_radius).map(move |i| (i, r))).enumerate().map(|(k, (_, r))| (k, r)).collect();
    let samples: Vec<GapSample> = exec.map(&jobs, |&(k, r)| {
        let mut rng = sample_rng(seed ^ 0x9e37_79b9, k);
        let eta = random_field_bump(grid, &mut rng);
        let phi = pekar.phi_p.add(&eta.scaled(r / eta.norm(grid)));
        match gap(grid, &phi) {
            Ok(s) => {
                let d = s.psi_wave_function().sub(&pekar.psi_p);
                GapSample { radius: r, gap: Some(s.gap), ground_shift_h1: Some(h1_norm_sq(grid, &d).sqrt()) }
            }
            Err(_) => GapSample { radius: r, gap: None, ground_shift_h1: None },
        }
    });
    let c_gap = samples.iter().filter_map(|s| s.gap.map(|g| ((lambda_p - g) / s.radius).max(0.0))).fold(0.0, f64::max);
    let c_ground = samples.iter().filter_map(|s| s.ground_shift_h1.map(|d| d / s.radius)).fold(0.0, f64::max);
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite radius"));
    let mut delta_lambda = 0.0;
    for r in sorted {
        let ok = samples.iter().filter(|s| s.radius <= r).all(|s| s.gap.is_some_and(|g| g >= 0.5 * lambda_p));
        if ok {
            delta_lambda = r;
        } else {
            break;
        }
    }
    Ok(GapAudit { lambda_p, c_gap, c_ground, delta_lambda, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pekar::{solve_pekar, PekarOptions};

    fn setup() -> (RadialGrid, PekarSolution) {
        let g = make_grid(512, 12.0).unwrap();
        let p = solve_pekar(&g, &PekarOptions::default()).unwrap();
        (g, p)
    }

    #[test]
    fn spectral_derivative_of_smooth_profile() {
        let g = make_grid(1024, 20.0).unwrap();
        let r = &g.r()[..g.interior()];
        let u: Vec<f64> = r.iter().map(|&r| r * (-r * r).exp()).collect();
        let du = spectral_derivative(&g, &u);
        let err = r.iter().zip(&du).map(|(&r, d)| (d - (1.0 - 2.0 * r * r) * (-r * r).exp()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "{err:e}");
    }

    #[test]
    fn x_is_symmetric_and_positive() {
        let (g, p) = setup();
        let ctx = HessianContext::new(&g, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in 0..=2 {
            let a = WaveFunction::from_fn(&g, l, |r| Complex64::new((-r * r * 3.0).exp() * r.powi(l as i32), 0.0));
            let b = random_bump(&g, &mut rng, false);
            let b = WaveFunction { l, u: b.u };
            let xa = ctx.apply_x(&a).unwrap();
            let xb = ctx.apply_x(&b).unwrap();
            let lhs = inner(&g, &a.u, &xb.u);
            let rhs = inner(&g, &xa.u, &b.u);
            assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
            assert!(inner(&g, &a.u, &xa.u).re > 0.0);
        }
        assert!(ctx.apply_x(&WaveFunction::zeros(&g, 0)).unwrap().u.iter().all(|c| c.norm() == 0.0));
        assert!(ctx.apply_x(&WaveFunction::zeros(&g, 3)).is_err());
    }

    #[test]
    fn l_minus_annihilates_minimizer() {
        let (g, p) = setup();
        let ctx = HessianContext::new(&g, &p).unwrap();
        assert!(ctx.lm_residual <= 1e-8, "{}", ctx.lm_residual);
    }

    #[test]
    fn hessian_plus_cubic_is_exact_excess() {
        let (g, p) = setup();
        let ctx = HessianContext::new(&g, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = random_bump(&g, &mut rng, false).scaled(Complex64::new(0.05, 0.0));
        let psi = p.psi_p.add(&b).normalized(&g);
        let delta = psi.sub(&p.psi_p);
        let excess = energy_e(&g, &psi).unwrap() - p.e_p;
        let model = ctx.hess(&delta) + ctx.cubic_remainder(&delta);
        assert!((excess - model).abs() < 1e-4 * excess.abs(), "{excess} vs {model}");
    }

    #[test]
    fn distances_vanish_on_orbit() {
        let (g, p) = setup();
        for th in [0.0, 1.0, -2.5] {
            let psi = p.psi_p.scaled(Complex64::from_polar(1.0, th));
            let d = dist_to_minimizers(&g, &psi, &p.phi_p, &p).unwrap();
            assert!(d.dist_h1_sq < 1e-10 && d.dist_l2_sq == 0.0);
        }
    }

    #[test]
    fn golden_section_agrees() {
        let (g, p) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = random_bump(&g, &mut rng, false).scaled(Complex64::new(0.1, 0.0));
        let psi = p.psi_p.add(&b).normalized(&g).scaled(Complex64::from_polar(1.0, 2.0));
        let d = dist_to_minimizers(&g, &psi, &p.phi_p, &p).unwrap();
        assert!((d.dist_h1_sq - d.dist_h1_sq_golden).abs() < 1e-10 * d.dist_h1_sq.max(1.0));
    }
}
