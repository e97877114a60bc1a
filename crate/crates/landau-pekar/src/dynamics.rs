//! Time integration of the radial Landau–Pekar system
//!   i ∂_t ψ = h_φ ψ,   i α² ∂_t φ = φ + σ_ψ.
//!
//! One step is a symmetric composition: exact field half-step with σ frozen,
//! a Crank–Nicolson (Cayley) ψ step with V at the midpoint field, and a second
//! exact field half-step with σ refreshed from the new ψ.

use crate::error::{Error, Result};
use crate::linalg::{tri_mul, TriLu};
use crate::pekar::{energy_e, energy_g, potential_of_field, sigma_real, PekarSolution};
use crate::radial::{inner, kinetic_interior, FieldState, RadialGrid, WaveFunction};
use crate::spectral::{energy_f_from, gap, ground_state, SpectralData};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DT_MAX: f64 = 0.02;

/// Largest admissible step for coupling α: min(0.02, 0.02 α²).
pub fn dt_cap(alpha: f64) -> f64 {
    DT_MAX.min(0.02 * alpha * alpha)
}

pub fn validate_dt(dt: f64, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::validation("alpha", format!("must be positive, got {alpha}")));
    }
    if !(dt.abs() > 0.0) || !dt.is_finite() {
        return Err(Error::validation("dt", "must be nonzero and finite"));
    }
    if dt.abs() > dt_cap(alpha) * (1.0 + 1e-12) {
        return Err(Error::validation("dt", format!("|dt| = {dt} exceeds cap min(0.02, 0.02·α²) = {}", dt_cap(alpha))));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LPState {
    pub psi: WaveFunction,
    pub phi: FieldState,
    pub t: f64,
    pub alpha: f64,
    pub cached_sigma: FieldState,
}

impl LPState {
    pub fn new(grid: &RadialGrid, psi: WaveFunction, phi: FieldState, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::validation("alpha", format!("must be positive, got {alpha}")));
        }
        if psi.l != 0 {
            return Err(Error::UnsupportedChannel(psi.l));
        }
        let cached_sigma = FieldState::from_real(&sigma_real(grid, psi.interior()));
        Ok(Self { psi, phi, t: 0.0, alpha, cached_sigma })
    }

    pub fn norm(&self, grid: &RadialGrid) -> f64 {
        self.psi.norm(grid)
    }

    pub fn energy(&self, grid: &RadialGrid) -> Result<f64> {
        energy_g(grid, &self.psi, &self.phi)
    }
}

/// Exact flow of i α² ∂_t φ = φ + σ with σ frozen: φ(dt) = e^{−i dt/α²}(φ + σ) − σ.
pub fn field_step(phi: &FieldState, sigma: &FieldState, dt: f64, alpha: f64) -> Result<FieldState> {
    if !(alpha > 0.0) {
        return Err(Error::validation("alpha", "must be positive"));
    }
    Ok(FieldState { v: field_flow(&phi.v, &sigma.v, dt, alpha) })
}

fn field_flow(v: &[Complex64], s: &[Complex64], dt: f64, alpha: f64) -> Vec<Complex64> {
    let rot = Complex64::from_polar(1.0, -dt / (alpha * alpha));
    v.iter().zip(s).map(|(&a, &b)| rot * (a + b) - b).collect()
}

/// Energy reference for the Cayley step; the factor e^{−i e_ref dt} is
/// applied exactly, so the Cayley phase error only acts on h − e_ref.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyShift {
    /// e_ref = ⟨ψ, h ψ⟩ of the incoming state.
    Rayleigh,
    Fixed(f64),
}

/// ⟨ψ, (K + V)ψ⟩ / ‖ψ‖² for interior samples.
pub fn rayleigh_quotient(grid: &RadialGrid, u: &[Complex64], v: &[f64]) -> f64 {
    let mut hu = kinetic_interior(grid, 0, u);
    for j in 0..u.len() {
        hu[j] += u[j] * v[j];
    }
    inner(grid, u, &hu).re / inner(grid, u, u).re
}

/// Unitary ψ step for frozen V (interior potential): Crank–Nicolson on the
/// Numerov pencil, (B + i dt/2 M) x = (B − i dt/2 M) ψ with M = −A/h² + B(V − e_ref).
pub fn psi_step(grid: &RadialGrid, psi: &WaveFunction, v: &[f64], dt: f64, shift: EnergyShift) -> WaveFunction {
    let u = psi.interior();
    let e_ref = match shift {
        EnergyShift::Rayleigh => {
            if inner(grid, u, u).re == 0.0 {
                0.0
            } else {
                rayleigh_quotient(grid, u, v)
            }
        }
        EnergyShift::Fixed(e) => e,
    };
    let out = cayley(grid, u, v, dt, e_ref);
    WaveFunction::from_interior(0, &out)
}

fn cayley(grid: &RadialGrid, u: &[Complex64], v: &[f64], dt: f64, e_ref: f64) -> Vec<Complex64> {
    let n = u.len();
    let ih2 = 1.0 / (grid.dr() * grid.dr());
    let tau = Complex64::new(0.0, 0.5 * dt);
    let w: Vec<f64> = v.iter().map(|x| x - e_ref).collect();
    let md: Vec<f64> = w.iter().map(|&x| 2.0 * ih2 + 10.0 / 12.0 * x).collect();
    let mdu: Vec<f64> = (0..n - 1).map(|j| -ih2 + w[j + 1] / 12.0).collect();
    let mdl: Vec<f64> = (0..n - 1).map(|j| -ih2 + w[j] / 12.0).collect();
    let b_d = Complex64::new(10.0 / 12.0, 0.0);
    let b_o = Complex64::new(1.0 / 12.0, 0.0);
    let ld: Vec<Complex64> = md.iter().map(|&m| b_d + tau * m).collect();
    let lu: Vec<Complex64> = mdu.iter().map(|&m| b_o + tau * m).collect();
    let ll: Vec<Complex64> = mdl.iter().map(|&m| b_o + tau * m).collect();
    let rd: Vec<Complex64> = md.iter().map(|&m| b_d - tau * m).collect();
    let ru: Vec<Complex64> = mdu.iter().map(|&m| b_o - tau * m).collect();
    let rl: Vec<Complex64> = mdl.iter().map(|&m| b_o - tau * m).collect();
    let mut x = tri_mul(&rl, &rd, &ru, u);
    let f = TriLu::new(ll, ld, lu).expect("Cayley operator is invertible");
    f.solve_in_place(&mut x);
    let phase = Complex64::from_polar(1.0, -e_ref * dt);
    x.iter_mut().for_each(|c| *c *= phase);
    x
}

/// One step of the symmetric composition; refreshes `cached_sigma`.
pub fn lp_step(grid: &RadialGrid, state: &mut LPState, dt: f64) {
    let half = 0.5 * dt;
    let v_mid = field_flow(&state.phi.v, &state.cached_sigma.v, half, state.alpha);
    let pot = potential_of_field(grid, &FieldState { v: v_mid.clone() });
    let u = state.psi.interior();
    let e_ref = rayleigh_quotient(grid, u, &pot);
    let new_u = cayley(grid, u, &pot, dt, e_ref);
    let s_new = sigma_real(grid, &new_u);
    let s_c: Vec<Complex64> = s_new.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    state.phi.v = field_flow(&v_mid, &s_c, half, state.alpha);
    state.psi = WaveFunction::from_interior(0, &new_u);
    state.cached_sigma = FieldState { v: s_c };
    state.t += dt;
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between samples.
    pub sample_every: usize,
    pub norm_budget: f64,
    /// Relative budget on |𝒢(t) − 𝒢(0)| / |𝒢(0)|.
    pub energy_budget: f64,
}

impl EvolveOptions {
    pub fn new(dt: f64, t_end: f64, sample_every: usize) -> Self {
        Self { dt, t_end, sample_every: sample_every.max(1), norm_budget: 1e-8, energy_budget: 1e-6 }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).abs().round() as usize
    }
}

/// Cheap per-sample record kept by [`evolve`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasicSample {
    pub step: usize,
    pub t: f64,
    pub norm: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub samples: Vec<BasicSample>,
    pub dt: f64,
    pub scheme: String,
    pub steps: usize,
    pub max_norm_drift: f64,
    pub max_energy_drift: f64,
}

pub const SCHEME: &str = "strang(field-exact, crank-nicolson-numerov)";

/// Integrate from `state` for `opts.steps()` steps, calling `hook` at every
/// sample (including the initial and final states). Conservation budgets
/// are checked at samples; violations abort with the step index.
pub fn evolve<F>(grid: &RadialGrid, state: &mut LPState, opts: &EvolveOptions, mut hook: F) -> Result<TrajectoryRecord>
where
    F: FnMut(&LPState, usize) -> Result<()>,
{
    validate_dt(opts.dt, state.alpha)?;
    let steps = opts.steps();
    let n0 = state.norm(grid);
    let g0 = energy_g(grid, &state.psi.normalized(grid), &state.phi)?;
    let mut rec = TrajectoryRecord {
        samples: Vec::new(),
        dt: opts.dt,
        scheme: SCHEME.to_string(),
        steps,
        max_norm_drift: 0.0,
        max_energy_drift: 0.0,
    };
    for step in 0..=steps {
        if step > 0 {
            lp_step(grid, state, opts.dt);
        }
        if step % opts.sample_every == 0 || step == steps {
            if state.psi.u.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) || state.phi.v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(Error::invariant("finite state", Some(step), "NaN or infinity encountered"));
            }
            let norm = state.norm(grid);
            let nd = (norm - n0).abs();
            if nd > opts.norm_budget {
                return Err(Error::invariant("norm conservation", Some(step), format!("drift {nd:.3e} > {:.1e}", opts.norm_budget)));
            }
            let g = energy_g(grid, &state.psi, &state.phi)?;
            let gd = (g - g0).abs() / g0.abs().max(f64::MIN_POSITIVE);
            if gd > opts.energy_budget {
                return Err(Error::invariant("energy conservation", Some(step), format!("relative drift {gd:.3e} > {:.1e}", opts.energy_budget)));
            }
            rec.max_norm_drift = rec.max_norm_drift.max(nd);
            rec.max_energy_drift = rec.max_energy_drift.max(gd);
            rec.samples.push(BasicSample { step, t: state.t, norm, energy: g });
            hook(state, step)?;
        }
    }
    Ok(rec)
}

/// One row of the trajectory CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub norm: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "E_psi")]
    pub e_psi: f64,
    #[serde(rename = "F_phi")]
    pub f_phi: f64,
    pub im_phi_sq: f64,
    pub re_dist_sq: f64,
    pub gap: f64,
    pub channel: String,
}

/// Per-sample diagnostics; `spec` must belong to `state.phi`.
pub fn diagnostics(grid: &RadialGrid, state: &LPState, pekar: &PekarSolution, spec: &SpectralData) -> Result<DiagnosticRow> {
    let g = energy_g(grid, &state.psi, &state.phi)?;
    let e_psi = energy_e(grid, &state.psi)?;
    let re_dist_sq = state.phi.re().sub(&pekar.phi_p).norm_sq(grid);
    Ok(DiagnosticRow {
        t: state.t,
        norm: state.norm(grid),
        g,
        e_psi,
        f_phi: energy_f_from(grid, &state.phi, spec.e_ground),
        im_phi_sq: state.phi.im_norm_sq(grid),
        re_dist_sq,
        gap: spec.gap,
        channel: spec.channel_label(),
    })
}

/// Reduced-momentum bump η with v(k) = k e^{−(k/6)²}; smooth, real, v(0) = 0.
pub fn perturbation_bump(grid: &RadialGrid) -> FieldState {
    FieldState::from_real(&grid.k().iter().map(|&k| k * (-(k / 6.0).powi(2)).exp()).collect::<Vec<_>>())
}

#[derive(Debug, Clone)]
pub struct InitialData {
    pub psi0: WaveFunction,
    pub phi0: FieldState,
    /// Scale of the bump: φ₀ = φ_P + λ η.
    pub lambda: f64,
    /// 𝒢(ψ₀, φ₀) − e_P achieved.
    pub excess: f64,
}

/// (ψ_{φ₀}, φ₀) with φ₀ = φ_P + λη and λ chosen by bisection so that
/// 𝒢(ψ₀, φ₀) − e_P = ε.
pub fn initial_data(grid: &RadialGrid, pekar: &PekarSolution, eps: f64) -> Result<InitialData> {
    if !(eps >= 0.0) {
        return Err(Error::validation("eps", "must be non-negative"));
    }
    let eta = perturbation_bump(grid);
    let make = |lam: f64| -> Result<(f64, WaveFunction, FieldState)> {
        let phi = pekar.phi_p.add(&eta.scaled(lam));
        let gs = ground_state(grid, &phi)?;
        let f = energy_f_from(grid, &phi, gs.e);
        Ok((f - pekar.e_p, gs.wave_function(), phi))
    };
    if eps == 0.0 {
        let (ex, psi0, phi0) = make(0.0)?;
        return Ok(InitialData { psi0, phi0, lambda: 0.0, excess: ex });
    }
    let mut hi = 0.01;
    while make(hi)?.0 < eps {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Numerical("cannot reach requested energy excess".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if make(mid)?.0 < eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let (excess, psi0, phi0) = make(lambda)?;
    Ok(InitialData { psi0, phi0, lambda, excess })
}

/// Spectral data for the current field (convenience for hooks).
pub fn spectral_snapshot(grid: &RadialGrid, state: &LPState) -> Result<SpectralData> {
    gap(grid, &state.phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial::{kinetic_symbol, make_grid};
    use std::f64::consts::PI;

    #[test]
    fn free_field_rotates() {
        let g = make_grid(64, 5.0).unwrap();
        let phi = FieldState { v: g.k().iter().map(|k| Complex64::new((-k).exp(), 0.3)).collect() };
        let out = field_step(&phi, &FieldState::zeros(&g), 0.37, 1.5).unwrap();
        assert!((out.norm(&g) - phi.norm(&g)).abs() < 1e-15 * phi.norm(&g) * 10.0);
    }

    #[test]
    fn field_equilibrium_and_period() {
        let g = make_grid(64, 5.0).unwrap();
        let s = FieldState::from_real(&g.k().iter().map(|k| (-k * k).exp()).collect::<Vec<_>>());
        let phi0 = s.scaled(-1.0);
        assert_eq!(field_step(&phi0, &s, 0.3, 2.0).unwrap(), phi0);
        let phi = FieldState { v: g.k().iter().map(|k| Complex64::new(k.sin(), 0.1)).collect() };
        let alpha: f64 = 1.7;
        let back = field_step(&phi, &s, 2.0 * PI * alpha * alpha, alpha).unwrap();
        assert!(back.sub(&phi).norm(&g) < 1e-12);
        assert!(field_step(&phi, &s, 0.1, 0.0).is_err());
    }

    #[test]
    fn box_mode_phase() {
        let g = make_grid(256, 8.0).unwrap();
        let n = g.interior();
        let u: Vec<f64> = g.r()[..n].iter().map(|r| (PI * r / 8.0).sin()).collect();
        let psi = WaveFunction::from_real_interior(0, &u).normalized(&g);
        let dt = 0.01;
        let out = psi_step(&g, &psi, &vec![0.0; n], dt, EnergyShift::Rayleigh);
        let lam = kinetic_symbol(&g, 1);
        let want = psi.scaled(Complex64::from_polar(1.0, -lam * dt));
        assert!(out.sub(&want).norm(&g) < 1e-13);
        assert!((out.norm(&g) - 1.0).abs() < 1e-13);
        let same = psi_step(&g, &psi, &vec![0.0; n], 0.0, EnergyShift::Fixed(0.0));
        assert!(same.sub(&psi).norm(&g) < 1e-15);
    }

    #[test]
    fn dt_cap_enforced() {
        assert!(validate_dt(0.01, 2.0).is_ok());
        assert!(validate_dt(0.03, 2.0).is_err());
        assert!(validate_dt(0.015, 0.5).is_err());
        assert!(validate_dt(-0.01, 2.0).is_ok());
    }
}
