//! Coupling maps σ_ψ and V_φ, the energies 𝒢, ℰ, and the Pekar minimizer.
//!
//! The two maps are exact discrete adjoints: ⟨ψ, V_φ ψ⟩ = 2 Re⟨σ_ψ, φ⟩.

use crate::error::{Error, Result};
use crate::radial::{apply_kinetic, field_inner, inner, FieldState, GridSpec, RadialGrid, WaveFunction};
use crate::spectral::{ground_state, EDGE_THRESHOLD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// (2π)^{3/2}.
pub fn coupling() -> f64 {
    (2.0 * PI).powf(1.5)
}

/// σ̂_ψ(k) = (2π)^{3/2} |k|⁻¹ ρ̂(k), ρ = |ψ|², as reduced samples k·σ̂.
pub fn sigma_of_psi(grid: &RadialGrid, psi: &WaveFunction) -> Result<FieldState> {
    if psi.l != 0 {
        return Err(Error::UnsupportedChannel(psi.l));
    }
    Ok(FieldState::from_real(&sigma_real(grid, psi.interior())))
}

/// σ map on interior reduced samples.
pub(crate) fn sigma_real(grid: &RadialGrid, u: &[Complex64]) -> Vec<f64> {
    let n = grid.interior();
    let r = &grid.r()[..n];
    let a: Vec<f64> = u.iter().zip(r).map(|(c, &rj)| c.norm_sqr() / rj).collect();
    let pref = coupling() * (2.0 / PI).sqrt() * grid.dr();
    let y = grid.dst1_real(&a);
    let mut s = Vec::with_capacity(n + 1);
    s.push(pref * a.iter().zip(r).map(|(x, rj)| x * rj).sum::<f64>());
    for (m, ym) in y.iter().enumerate() {
        s.push(pref * ym / grid.k()[m + 1]);
    }
    s
}

/// V_φ(r) = 2(2π)^{3/2} Re[(−Δ)^{−1/2} φ](r) on interior nodes.
pub fn potential_of_field(grid: &RadialGrid, phi: &FieldState) -> Vec<f64> {
    let n = grid.interior();
    let k = grid.k();
    let dk = grid.dk();
    let x: Vec<f64> = (1..=n).map(|m| phi.v[m].re / k[m]).collect();
    let y = grid.dst1_real(&x);
    let pref = 2.0 * coupling() * (2.0 / PI).sqrt();
    let v0 = phi.v[0].re;
    (0..n)
        .map(|j| {
            let r = grid.r()[j];
            pref * (dk * y[j] + 0.5 * dk * r * v0) / r
        })
        .collect()
}

/// ⟨ψ, −Δψ⟩.
pub fn kinetic_energy(grid: &RadialGrid, psi: &WaveFunction) -> f64 {
    inner(grid, &psi.u, &apply_kinetic(grid, psi).u).re
}

/// ⟨ψ, V ψ⟩ for a potential on interior nodes.
pub fn potential_energy(grid: &RadialGrid, psi: &WaveFunction, v: &[f64]) -> f64 {
    4.0 * PI * grid.dr() * psi.interior().iter().zip(v).map(|(c, &x)| x * c.norm_sqr()).sum::<f64>()
}

fn check_normalized(grid: &RadialGrid, psi: &WaveFunction) -> Result<()> {
    let n = psi.norm_sq(grid);
    if (n - 1.0).abs() > 1e-8 {
        return Err(Error::validation("psi", format!("expected normalized wave function, ‖ψ‖² = {n:.12}")));
    }
    Ok(())
}

/// 𝒢(ψ, φ) = ⟨ψ, h_φ ψ⟩ + ‖φ‖².
pub fn energy_g(grid: &RadialGrid, psi: &WaveFunction, phi: &FieldState) -> Result<f64> {
    check_normalized(grid, psi)?;
    let v = potential_of_field(grid, phi);
    Ok(kinetic_energy(grid, psi) + potential_energy(grid, psi, &v) + phi.norm_sq(grid))
}

/// (ℰ(ψ), ‖φ + σ_ψ‖²), whose sum is 𝒢(ψ, φ).
pub fn energy_g_decomposed(grid: &RadialGrid, psi: &WaveFunction, phi: &FieldState) -> Result<(f64, f64)> {
    let e = energy_e(grid, psi)?;
    let s = sigma_of_psi(grid, psi)?;
    Ok((e, phi.add(&s).norm_sq(grid)))
}

/// ℰ(ψ) = ⟨ψ, −Δψ⟩ − ‖σ_ψ‖².
pub fn energy_e(grid: &RadialGrid, psi: &WaveFunction) -> Result<f64> {
    check_normalized(grid, psi)?;
    let s = sigma_of_psi(grid, psi)?;
    Ok(kinetic_energy(grid, psi) - s.norm_sq(grid))
}

/// 2 Re⟨σ_ψ, φ⟩, which equals ⟨ψ, V_φ ψ⟩.
pub fn coupling_energy(grid: &RadialGrid, sigma: &FieldState, phi: &FieldState) -> f64 {
    2.0 * field_inner(grid, &sigma.v, &phi.v).re
}

/// Unit Gaussian π^{−3/4} e^{−r²/2} in reduced form.
pub fn unit_gaussian(grid: &RadialGrid) -> WaveFunction {
    WaveFunction::from_fn(grid, 0, |r| Complex64::new(PI.powf(-0.75) * (-r * r / 2.0).exp(), 0.0)).normalized(grid)
}

#[derive(Debug, Clone)]
pub struct PekarOptions {
    pub mixing: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub initial: Option<WaveFunction>,
}

impl Default for PekarOptions {
    fn default() -> Self {
        Self { mixing: 0.5, tol: 1e-10, max_iter: 1000, initial: None }
    }
}

#[derive(Debug, Clone)]
pub struct PekarSolution {
    pub grid: GridSpec,
    pub psi_p: WaveFunction,
    pub phi_p: FieldState,
    /// V_{φ_P} on interior nodes.
    pub potential: Vec<f64>,
    pub e_p: f64,
    pub kinetic: f64,
    pub field_energy: f64,
    pub e_ground: f64,
    pub scf_residual: f64,
    pub iterations: usize,
}

/// JSON summary of a Pekar solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PekarSummary {
    #[serde(rename = "e_P")]
    pub e_p: f64,
    #[serde(rename = "T")]
    pub kinetic: f64,
    #[serde(rename = "W")]
    pub field_energy: f64,
    pub e_ground: f64,
    pub residual: f64,
    pub iterations: usize,
    pub virial_defect: f64,
    pub ground_ratio: f64,
    pub grid: GridSpec,
}

impl PekarSolution {
    /// |2T − W| / W.
    pub fn virial_defect(&self) -> f64 {
        (2.0 * self.kinetic - self.field_energy).abs() / self.field_energy
    }

    /// e(φ_P) / e_P, which should be 3.
    pub fn ground_ratio(&self) -> f64 {
        self.e_ground / self.e_p
    }

    pub fn summary(&self) -> PekarSummary {
        PekarSummary {
            e_p: self.e_p,
            kinetic: self.kinetic,
            field_energy: self.field_energy,
            e_ground: self.e_ground,
            residual: self.scf_residual,
            iterations: self.iterations,
            virial_defect: self.virial_defect(),
            ground_ratio: self.ground_ratio(),
            grid: self.grid,
        }
    }

    pub fn psi_real(&self) -> Vec<f64> {
        self.psi_p.real_interior()
    }
}

/// ‖(h_{−σ_ψ} − ⟨h⟩)ψ‖ together with ℰ(ψ) and T.
fn self_consistency(grid: &RadialGrid, psi: &WaveFunction) -> Result<(f64, f64, f64, FieldState)> {
    let s = sigma_of_psi(grid, psi)?;
    let phi = s.scaled(-1.0);
    let v = potential_of_field(grid, &phi);
    let kpsi = apply_kinetic(grid, psi);
    let hpsi: Vec<Complex64> = kpsi.interior().iter().zip(psi.interior()).zip(&v).map(|((k, p), &x)| k + p * x).collect();
    let e = inner(grid, psi.interior(), &hpsi).re;
    let res: Vec<Complex64> = hpsi.iter().zip(psi.interior()).map(|(h, p)| h - p * e).collect();
    let t = inner(grid, &psi.u, &kpsi.u).re;
    let w = s.norm_sq(grid);
    Ok((inner(grid, &res, &res).re.sqrt(), t - w, t, phi))
}

/// Self-consistent field iteration for the Pekar minimizer.
pub fn solve_pekar(grid: &RadialGrid, opts: &PekarOptions) -> Result<PekarSolution> {
    if !(opts.mixing > 0.0 && opts.mixing <= 1.0) {
        return Err(Error::validation("mixing", "must lie in (0, 1]"));
    }
    let mut psi = match &opts.initial {
        Some(p) => p.normalized(grid),
        None => unit_gaussian(grid),
    };
    let mut phi = sigma_of_psi(grid, &psi)?.scaled(-1.0);
    let mut e_old = f64::INFINITY;
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let gs = match ground_state(grid, &phi) {
            Ok(gs) => gs,
            Err(Error::NoBoundState { e_ground }) => {
                return Err(Error::Numerical(format!("SCF collapsed to zero (e = {e_ground:.3e}); grid too small?")))
            }
            Err(e) => return Err(e),
        };
        psi = gs.wave_function();
        let (res, e_new, _, phi_new) = self_consistency(grid, &psi)?;
        residual = res;
        if residual <= opts.tol && (e_new - e_old).abs() <= opts.tol {
            return finish(grid, psi, residual, it);
        }
        e_old = e_new;
        phi = phi.scaled(1.0 - opts.mixing).add(&phi_new.scaled(opts.mixing));
    }
    Err(Error::NoConvergence { what: "Pekar SCF".into(), iterations: opts.max_iter, residual })
}

fn finish(grid: &RadialGrid, psi: WaveFunction, residual: f64, iterations: usize) -> Result<PekarSolution> {
    let s = sigma_of_psi(grid, &psi)?;
    let phi_p = s.scaled(-1.0);
    let kinetic = kinetic_energy(grid, &psi);
    let field_energy = s.norm_sq(grid);
    let e_p = kinetic - field_energy;
    let gs = ground_state(grid, &phi_p)?;
    if !(e_p < 0.0) || gs.e >= EDGE_THRESHOLD {
        return Err(Error::invariant("e_P < 0", None, format!("e_P = {e_p}")));
    }
    if gs.psi.iter().any(|&x| x <= 0.0) {
        return Err(Error::invariant("psi_P positive", None, "non-positive interior sample"));
    }
    Ok(PekarSolution {
        grid: grid.spec(),
        psi_p: psi,
        potential: gs.potential,
        phi_p,
        e_p,
        kinetic,
        field_energy,
        e_ground: gs.e,
        scf_residual: residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::make_grid;

    #[test]
    fn sigma_of_zero_is_zero() {
        let g = make_grid(64, 5.0).unwrap();
        let s = sigma_of_psi(&g, &WaveFunction::zeros(&g, 0)).unwrap();
        assert!(s.v.iter().all(|c| c.norm() == 0.0));
        assert!(potential_of_field(&g, &FieldState::zeros(&g)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sigma_rejects_channel() {
        let g = make_grid(64, 5.0).unwrap();
        assert!(sigma_of_psi(&g, &WaveFunction::zeros(&g, 1)).is_err());
    }

    #[test]
    fn imaginary_field_has_no_potential() {
        let g = make_grid(256, 10.0).unwrap();
        let phi = FieldState { v: g.k().iter().map(|k| Complex64::new(0.0, (-k * k).exp())).collect() };
        assert!(potential_of_field(&g, &phi).iter().all(|x| x.abs() <= 1e-12));
    }

    #[test]
    fn gaussian_field_energy_constant() {
        // independent Coulomb self-energy of the unit Gaussian density,
        // D = ∫ 4π r² ρ(r) erf(r)/r dr, at two trapezoid resolutions
        let d = |n: usize| {
            let h = 12.0 / n as f64;
            (1..n).map(|j| {
                let r = j as f64 * h;
                4.0 * PI * r * r * PI.powf(-1.5) * (-r * r).exp() * erf(r) / r * h
            }).sum::<f64>()
        };
        let (d1, d2) = (d(4000), d(8000));
        assert!((d1 - d2).abs() < 1e-12);
        let oracle = 2.0 * PI * PI * d2;
        assert!((oracle - 2.0 * PI * PI * (2.0 / PI).sqrt()).abs() < 1e-10);
        let g = make_grid(2048, 40.0).unwrap();
        let s = sigma_of_psi(&g, &unit_gaussian(&g)).unwrap();
        assert!((s.norm_sq(&g) - oracle).abs() < 1e-8, "{} vs {}", s.norm_sq(&g), oracle);
    }

    #[test]
    fn gaussian_well_depth() {
        let g = make_grid(2048, 40.0).unwrap();
        let s = sigma_of_psi(&g, &unit_gaussian(&g)).unwrap();
        let v = potential_of_field(&g, &s.scaled(-1.0));
        let c3 = (2.0 * PI).powi(3);
        let mut err: f64 = 0.0;
        for (j, &r) in g.r()[..g.interior()].iter().enumerate() {
            let want = -2.0 * c3 * erf(r) / (4.0 * PI * r);
            err = err.max((v[j] - want).abs());
        }
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn adjoint_maps() {
        let g = make_grid(512, 20.0).unwrap();
        let psi = WaveFunction::from_fn(&g, 0, |r| Complex64::new((-r).exp(), 0.3 * (-r * r).exp())).normalized(&g);
        let phi = FieldState { v: g.k().iter().map(|k| Complex64::new((-k * k / 3.0).exp(), 0.2 * k * (-k).exp())).collect() };
        let s = sigma_of_psi(&g, &psi).unwrap();
        let lhs = potential_energy(&g, &psi, &potential_of_field(&g, &phi));
        let rhs = coupling_energy(&g, &s, &phi);
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn gaussian_energies() {
        let g = make_grid(2048, 40.0).unwrap();
        let psi = unit_gaussian(&g);
        let gval = energy_g(&g, &psi, &FieldState::zeros(&g)).unwrap();
        assert!((gval - 1.5).abs() < 1e-6);
        let e = energy_e(&g, &psi).unwrap();
        let want = 1.5 - 2.0 * PI * PI * (2.0 / PI).sqrt();
        assert!((e - want).abs() < 1e-6, "{e} vs {want}");
        let s = sigma_of_psi(&g, &psi).unwrap();
        let at_min = energy_g(&g, &psi, &s.scaled(-1.0)).unwrap();
        assert!((at_min - e).abs() < 1e-12 * e.abs());
    }

    #[test]
    fn unnormalized_rejected() {
        let g = make_grid(256, 10.0).unwrap();
        let psi = unit_gaussian(&g).scaled(Complex64::new(1.1, 0.0));
        assert!(energy_e(&g, &psi).is_err());
    }

    #[test]
    fn scaling_family_is_stationary_at_minimizer() {
        let g = make_grid(1024, 20.0).unwrap();
        let sol = solve_pekar(&g, &PekarOptions::default()).unwrap();
        // ℰ(ψ_λ) = λ²T − λW has zero slope at λ = 1 iff 2T = W
        assert!(sol.virial_defect() < 1e-3);
    }

    fn erf(x: f64) -> f64 {
        if x < 3.0 {
            let (mut term, mut sum, mut n) = (x, x, 0.0);
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
            let (mut s, mut t) = (1.0, 1.0);
            for k in 1..12 {
                t *= -((2 * k - 1) as f64) / (2.0 * x * x);
                s += t;
            }
            1.0 - (-x * x).exp() / (x * PI.sqrt()) * s
        }
    }
}
