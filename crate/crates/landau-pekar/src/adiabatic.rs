//! Corrected adiabatic approximation: the phase ν, the gauged wave function
//! ψ̃_t = e^{i∫(e + ν)} ψ_t, its distance to the instantaneous ground state,
//! the classical phase ω and the α-scaling sweep.

use crate::dynamics::{evolve, initial_data, lp_step, EvolveOptions, LPState, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::pekar::{energy_g, potential_of_field, PekarSolution};
use crate::radial::{field_inner, inner, FieldState, RadialGrid, WaveFunction};
use crate::spectral::{gap, resolvent_apply, SpectralData};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// V_{Im φ} on interior nodes.
pub fn imaginary_potential(grid: &RadialGrid, phi: &FieldState) -> Vec<f64> {
    potential_of_field(grid, &phi.im_as_real())
}

fn multiply(v: &[f64], psi: &WaveFunction) -> WaveFunction {
    let w: Vec<Complex64> = psi.interior().iter().zip(v).map(|(c, &x)| c * x).collect();
    WaveFunction::from_interior(0, &w)
}

/// ν = −α⁻⁴ ⟨w, R³ w⟩ with w = V_{Im φ} ψ_φ; `spec` must belong to `state.phi`.
pub fn nu_phase(grid: &RadialGrid, state: &LPState, spec: &SpectralData) -> Result<f64> {
    let vim = imaginary_potential(grid, &state.phi);
    nu_from(grid, &vim, spec, state.alpha)
}

fn nu_from(grid: &RadialGrid, vim: &[f64], spec: &SpectralData, alpha: f64) -> Result<f64> {
    if vim.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let w = multiply(vim, &spec.psi_wave_function());
    let r3 = resolvent_apply(grid, spec, &w, 3)?;
    let q = inner(grid, &w.u, &r3.u);
    if q.im.abs() > 1e-12 * (1.0 + q.re.abs()) {
        return Err(Error::invariant("nu is real", None, format!("imaginary residue {:.3e}", q.im)));
    }
    Ok(-q.re / alpha.powi(4))
}

/// ω = −Re⟨φ, σ_ψ⟩, the closed form of α² Im⟨φ, ∂_tφ⟩ + ‖φ‖².
pub fn omega_phase(grid: &RadialGrid, state: &LPState) -> f64 {
    -field_inner(grid, &state.phi.v, &state.cached_sigma.v).re
}

/// The defining expression α² Im⟨φ, ∂_tφ⟩ + ‖φ‖² for a supplied derivative.
pub fn omega_definition(grid: &RadialGrid, phi: &FieldState, dphi_dt: &FieldState, alpha: f64) -> f64 {
    alpha * alpha * field_inner(grid, &phi.v, &dphi_dt.v).im + phi.norm_sq(grid)
}

/// Central-difference checks of α²∂_t V_{φ_t} = V_{Im φ_t} and of ω at one
/// state, using one integrator step forward and one backward of size `h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityProbe {
    pub t: f64,
    pub h: f64,
    /// sup |(V(φ₊) − V(φ₋))/(2h) − α⁻²V_{Im φ}| / sup |α⁻²V_{Im φ}|.
    pub potential_rate_error: f64,
    pub omega_closed: f64,
    pub omega_fd: f64,
    pub omega_error: f64,
}

pub fn identity_probe(grid: &RadialGrid, state: &LPState, h: f64) -> IdentityProbe {
    let mut fwd = state.clone();
    lp_step(grid, &mut fwd, h);
    let mut bwd = state.clone();
    lp_step(grid, &mut bwd, -h);
    let dphi = fwd.phi.sub(&bwd.phi).scaled(0.5 / h);
    let a2 = state.alpha * state.alpha;
    let rate = potential_of_field(grid, &dphi);
    let target: Vec<f64> = imaginary_potential(grid, &state.phi).iter().map(|x| x / a2).collect();
    let scale = target.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = rate.iter().zip(&target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let omega_closed = omega_phase(grid, state);
    let omega_fd = omega_definition(grid, &state.phi, &dphi, state.alpha);
    IdentityProbe {
        t: state.t,
        h,
        potential_rate_error: if scale > 0.0 { err / scale } else { err },
        omega_closed,
        omega_fd,
        omega_error: (omega_fd - omega_closed).abs(),
    }
}

/// One tracker sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdiabaticSample {
    pub t: f64,
    pub e_ground: f64,
    pub nu: f64,
    pub gap: f64,
    pub channel: String,
    pub deviation_sq: f64,
    pub theta_deviation_sq: f64,
    /// Deviation with ν ≡ 0 (uncorrected gauge).
    pub deviation_sq_no_nu: f64,
    pub omega: f64,
    pub norm: f64,
    pub energy: f64,
    pub im_phi_sq: f64,
}

#[derive(Debug, Clone, Copy)]
struct PhaseNode {
    t: f64,
    e: f64,
    nu: f64,
    e_dot: f64,
}

/// Follows ψ_{φ_t} along a trajectory and accumulates ∫(e + ν) with the
/// endpoint-corrected trapezoid rule (e′ = α⁻²⟨ψ_φ, V_{Im φ} ψ_φ⟩ is known
/// exactly at each node).
#[derive(Debug, Clone)]
pub struct AdiabaticTracker {
    pub alpha: f64,
    /// Abort when Λ(φ_t) drops below this.
    pub gap_floor: f64,
    pub accumulated_phase: f64,
    pub accumulated_phase_no_nu: f64,
    pub psi_phi: Option<WaveFunction>,
    pub deviation_sq: f64,
    pub theta_best_deviation_sq: f64,
    pub deviation_sq_no_nu: f64,
    pub omega: f64,
    pub samples: Vec<AdiabaticSample>,
    prev: Option<PhaseNode>,
}

impl AdiabaticTracker {
    pub fn new(alpha: f64, gap_floor: f64) -> Self {
        Self {
            alpha,
            gap_floor,
            accumulated_phase: 0.0,
            accumulated_phase_no_nu: 0.0,
            psi_phi: None,
            deviation_sq: 0.0,
            theta_best_deviation_sq: 0.0,
            deviation_sq_no_nu: 0.0,
            omega: 0.0,
            samples: Vec::new(),
            prev: None,
        }
    }

    pub fn observe(&mut self, grid: &RadialGrid, state: &LPState, step: Option<usize>) -> Result<&AdiabaticSample> {
        let spec = gap(grid, &state.phi)?;
        if !(spec.gap >= self.gap_floor) {
            return Err(Error::invariant(
                "gap floor",
                step,
                format!("Λ(φ_t) = {:.6} < {:.6} at t = {:.4}", spec.gap, self.gap_floor, state.t),
            ));
        }
        let psi_phi = spec.psi_wave_function();
        let vim = imaginary_potential(grid, &state.phi);
        let e_dot = inner(grid, &psi_phi.u, &multiply(&vim, &psi_phi).u).re / (self.alpha * self.alpha);
        let nu = nu_from(grid, &vim, &spec, self.alpha)?;
        let node = PhaseNode { t: state.t, e: spec.e_ground, nu, e_dot };
        if let Some(p) = self.prev {
            let dt = node.t - p.t;
            let corr = dt * dt / 12.0 * (p.e_dot - node.e_dot);
            self.accumulated_phase += 0.5 * dt * (p.e + p.nu + node.e + node.nu) + corr;
            self.accumulated_phase_no_nu += 0.5 * dt * (p.e + node.e) + corr;
        }
        self.prev = Some(node);

        let gauged = |phase: f64| state.psi.scaled(Complex64::from_polar(1.0, phase)).sub(&psi_phi).norm_sq(grid);
        self.deviation_sq = gauged(self.accumulated_phase);
        self.deviation_sq_no_nu = gauged(self.accumulated_phase_no_nu);
        let overlap = inner(grid, &psi_phi.u, &state.psi.u).norm();
        self.theta_best_deviation_sq = (state.psi.norm_sq(grid) + psi_phi.norm_sq(grid) - 2.0 * overlap).max(0.0);
        self.omega = omega_phase(grid, state);
        self.psi_phi = Some(psi_phi);
        self.samples.push(AdiabaticSample {
            t: state.t,
            e_ground: spec.e_ground,
            nu,
            gap: spec.gap,
            channel: spec.channel_label(),
            deviation_sq: self.deviation_sq,
            theta_deviation_sq: self.theta_best_deviation_sq,
            deviation_sq_no_nu: self.deviation_sq_no_nu,
            omega: self.omega,
            norm: state.norm(grid),
            energy: energy_g(grid, &state.psi, &state.phi)?,
            im_phi_sq: state.phi.im_norm_sq(grid),
        });
        Ok(self.samples.last().expect("just pushed"))
    }
}

#[derive(Debug, Clone)]
pub struct TrackOptions {
    pub dt: f64,
    /// Horizon in units of α².
    pub horizon_mult: f64,
    /// Sampling interval in units of α²; rounded to whole steps.
    pub sample_interval: f64,
    /// Fixed number of steps between samples, overriding `sample_interval`.
    pub fixed_sample_every: Option<usize>,
    /// Gap floor as a fraction of Λ(φ_P).
    pub gap_floor_frac: f64,
    pub energy_budget: f64,
    pub norm_budget: f64,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self { dt: 0.01, horizon_mult: 1.0, sample_interval: 1.0 / 200.0, fixed_sample_every: None, gap_floor_frac: 0.25, energy_budget: 1e-6, norm_budget: 1e-8 }
    }
}

impl TrackOptions {
    pub fn sample_every(&self, alpha: f64) -> usize {
        if let Some(n) = self.fixed_sample_every {
            return n.max(1);
        }
        ((self.sample_interval * alpha * alpha / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct DeviationSeries {
    pub alpha: f64,
    pub eps: f64,
    pub dt: f64,
    pub horizon: f64,
    pub lambda: f64,
    pub samples: Vec<AdiabaticSample>,
    pub sup_dev_sq: f64,
    pub sup_theta_dev_sq: f64,
    pub sup_dev_sq_no_nu: f64,
    pub min_gap: f64,
    pub sup_abs_nu: f64,
    pub trajectory: TrajectoryRecord,
}

/// Evolve the ε-perturbed initial data of the factory and track the
/// adiabatic deviation at every sample up to `horizon_mult · α²`.
pub fn track_deviation(grid: &RadialGrid, pekar: &PekarSolution, alpha: f64, eps: f64, opts: &TrackOptions) -> Result<DeviationSeries> {
    let init = initial_data(grid, pekar, eps)?;
    let mut state = LPState::new(grid, init.psi0, init.phi0, alpha)?;
    let horizon = opts.horizon_mult * alpha * alpha;
    let mut ev = EvolveOptions::new(opts.dt, horizon, opts.sample_every(alpha));
    ev.energy_budget = opts.energy_budget;
    ev.norm_budget = opts.norm_budget;
    let lambda_p = gap(grid, &pekar.phi_p)?.gap;
    let mut tracker = AdiabaticTracker::new(alpha, opts.gap_floor_frac * lambda_p);
    let trajectory = evolve(grid, &mut state, &ev, |s, step| tracker.observe(grid, s, Some(step)).map(|_| ()))?;
    let sup = |f: fn(&AdiabaticSample) -> f64| tracker.samples.iter().map(f).fold(0.0f64, f64::max);
    Ok(DeviationSeries {
        alpha,
        eps,
        dt: opts.dt,
        horizon,
        lambda: init.lambda,
        sup_dev_sq: sup(|s| s.deviation_sq),
        sup_theta_dev_sq: sup(|s| s.theta_deviation_sq),
        sup_dev_sq_no_nu: sup(|s| s.deviation_sq_no_nu),
        sup_abs_nu: sup(|s| s.nu.abs()),
        min_gap: tracker.samples.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min),
        samples: tracker.samples,
        trajectory,
    })
}

/// Row of the sweep CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub eps: f64,
    pub sup_dev_sq: f64,
    pub sup_theta_dev_sq: f64,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares y = slope·x + intercept.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::validation("fit", "needs at least two matching points"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("fit", "abscissae are all equal"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_stderr = if n > 2 { (ss / (nf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LinearFit { slope, intercept, residual: (ss / nf).sqrt(), slope_stderr })
}

/// Two-sided 95% Student-t quantile.
fn t95(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    match dof {
        0 => f64::NAN,
        d if d <= 10 => TABLE[d - 1],
        _ => 1.96,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub alpha: f64,
    pub sup_dev_sq: f64,
    pub sup_dev_sq_no_nu: f64,
    pub sup_theta_dev_sq: f64,
    pub sup_abs_nu: f64,
    pub min_gap: f64,
    pub steps: usize,
    pub max_energy_drift: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub eps: f64,
    pub slope: f64,
    /// Half-width of the 95% interval on the slope.
    pub ci: f64,
    pub intercept: f64,
    pub residual: f64,
    /// max_α sup θ-deviation² / ε.
    pub c_theta: f64,
    pub rows: Vec<SweepRow>,
    pub per_alpha: Vec<AlphaEntry>,
    pub complete: bool,
    pub failures: Vec<String>,
}

/// The α list must have at least three entries forming a geometric progression in some order.
pub fn check_alpha_list(alphas: &[f64]) -> Result<()> {
    if alphas.len() < 3 {
        return Err(Error::validation("alphas", "a scaling fit needs at least three values"));
    }
    if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::validation("alphas", "values must be positive"));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let q = sorted[1] / sorted[0];
    if (q - 1.0).abs() < 1e-12 || sorted.windows(2).any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-6) {
        return Err(Error::validation("alphas", "values must form a geometric progression"));
    }
    Ok(())
}

/// Track every α (distributed by `exec`), then fit log sup deviation² against log α.
pub fn alpha_sweep(grid: &RadialGrid, pekar: &PekarSolution, eps: f64, alphas: &[f64], opts: &TrackOptions, exec: Exec) -> Result<(ScalingReport, Vec<DeviationSeries>)> {
    check_alpha_list(alphas)?;
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let runs = exec.map(&sorted, |&a| track_deviation(grid, pekar, a, eps, opts));
    let mut series = Vec::new();
    let mut failures = Vec::new();
    for (a, r) in sorted.iter().zip(runs) {
        match r {
            Ok(s) => series.push(s),
            Err(e) => failures.push(format!("alpha = {a}: {e}")),
        }
    }
    let rows: Vec<SweepRow> = series
        .iter()
        .map(|s| SweepRow { alpha: s.alpha, eps: s.eps, sup_dev_sq: s.sup_dev_sq, sup_theta_dev_sq: s.sup_theta_dev_sq, horizon: s.horizon, dt: s.dt })
        .collect();
    let per_alpha = series
        .iter()
        .map(|s| AlphaEntry {
            alpha: s.alpha,
            sup_dev_sq: s.sup_dev_sq,
            sup_dev_sq_no_nu: s.sup_dev_sq_no_nu,
            sup_theta_dev_sq: s.sup_theta_dev_sq,
            sup_abs_nu: s.sup_abs_nu,
            min_gap: s.min_gap,
            steps: s.trajectory.steps,
            max_energy_drift: s.trajectory.max_energy_drift,
        })
        .collect();
    let complete = failures.is_empty();
    let (mut slope, mut ci, mut intercept, mut residual) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    if complete {
        let x: Vec<f64> = rows.iter().map(|r| r.alpha.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.sup_dev_sq.max(f64::MIN_POSITIVE).ln()).collect();
        let fit = linear_fit(&x, &y)?;
        slope = fit.slope;
        intercept = fit.intercept;
        residual = fit.residual;
        ci = t95(rows.len() - 2) * fit.slope_stderr;
    }
    let c_theta = rows.iter().map(|r| r.sup_theta_dev_sq / eps).fold(0.0f64, f64::max);
    Ok((ScalingReport { eps, slope, ci, intercept, residual, c_theta, rows, per_alpha, complete, failures }, series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pekar::{solve_pekar, PekarOptions};
    use crate::radial::make_grid;

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|a| -4.0 * a + 1.5).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 4.0).abs() < 1e-14 && (f.intercept - 1.5).abs() < 1e-14);
        assert!(f.residual < 1e-14);
    }

    #[test]
    fn alpha_list_validation() {
        assert!(check_alpha_list(&[3.0, 4.5, 6.75]).is_ok());
        assert!(check_alpha_list(&[3.0]).is_err());
        assert!(check_alpha_list(&[3.0, 4.5, 7.0]).is_err());
        assert!(check_alpha_list(&[3.0, -4.5, 6.75]).is_err());
    }

    #[test]
    fn omega_closed_form_cases() {
        let g = make_grid(128, 10.0).unwrap();
        let p = solve_pekar(&g, &PekarOptions::default()).unwrap();
        let st = LPState::new(&g, p.psi_p.clone(), p.phi_p.clone(), 2.0).unwrap();
        let s2 = st.cached_sigma.norm_sq(&g);
        assert!((omega_phase(&g, &st) - s2).abs() < 1e-9 * s2);
        // a field orthogonal to σ: imaginary multiple of σ
        let mut st2 = st.clone();
        st2.phi = FieldState { v: st.cached_sigma.v.iter().map(|c| c * Complex64::i()).collect() };
        assert!(omega_phase(&g, &st2).abs() < 1e-12 * s2);
    }

    #[test]
    fn nu_vanishes_on_real_field() {
        let g = make_grid(256, 12.0).unwrap();
        let p = solve_pekar(&g, &PekarOptions::default()).unwrap();
        let st = LPState::new(&g, p.psi_p.clone(), p.phi_p.clone(), 3.0).unwrap();
        let spec = gap(&g, &st.phi).unwrap();
        assert_eq!(nu_phase(&g, &st, &spec).unwrap(), 0.0);
        let mut st2 = st.clone();
        let bump: Vec<Complex64> = g.k().iter().map(|&k| Complex64::new(0.0, k * (-(k / 4.0).powi(2)).exp())).collect();
        st2.phi = st.phi.add(&FieldState { v: bump }.scaled(0.05));
        let spec2 = gap(&g, &st2.phi).unwrap();
        assert!(nu_phase(&g, &st2, &spec2).unwrap() < 0.0);
    }
}
