//! Spectral analysis of h_φ = −Δ + V_φ per angular channel.
//!
//! Eigenproblems use the Numerov pencil M(λ) = −A/h² + c_l e₁e₁ᵀ + B·diag(V_eff − λ)
//! = B (K + V_eff − λ), with c_l the l = 1 closure at the origin. Negative
//! pivots of M(λ) count eigenvalues below λ.

use crate::error::{Error, Result};
use crate::linalg::{negative_pivots, TriLu};
use crate::pekar::potential_of_field;
use crate::radial::{check_channel, inner, inner_real, numerov_corner, numerov_second_difference, RadialGrid, WaveFunction};
use crate::radial::FieldState;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Eigenvalues above this are treated as the essential-spectrum edge.
pub const EDGE_THRESHOLD: f64 = -1e-3;

/// V + l(l+1)/r² on interior nodes.
pub fn effective_potential(grid: &RadialGrid, v: &[f64], l: usize) -> Vec<f64> {
    let ll = (l * (l + 1)) as f64;
    v.iter().zip(grid.r()).map(|(&x, &r)| x + ll / (r * r)).collect()
}

/// Bands (sub, diag, super) of M(λ) for the effective potential `veff`.
pub(crate) fn pencil_bands(grid: &RadialGrid, l: usize, veff: &[f64], lambda: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = veff.len();
    let ih2 = 1.0 / (grid.dr() * grid.dr());
    let mut d: Vec<f64> = veff.iter().map(|&w| 2.0 * ih2 + 10.0 / 12.0 * (w - lambda)).collect();
    d[0] += numerov_corner(grid, l);
    let dl: Vec<f64> = (0..n - 1).map(|j| -ih2 + (veff[j] - lambda) / 12.0).collect();
    let du: Vec<f64> = (0..n - 1).map(|j| -ih2 + (veff[j + 1] - lambda) / 12.0).collect();
    (dl, d, du)
}

/// Apply the Numerov mass matrix B = tridiag(1, 10, 1)/12.
pub(crate) fn mass_mul<U>(x: &[U]) -> Vec<U>
where
    U: Copy + std::ops::Add<Output = U> + std::ops::Mul<f64, Output = U>,
{
    let n = x.len();
    (0..n)
        .map(|j| {
            let mut s = x[j] * (10.0 / 12.0);
            if j > 0 {
                s = s + x[j - 1] * (1.0 / 12.0);
            }
            if j + 1 < n {
                s = s + x[j + 1] * (1.0 / 12.0);
            }
            s
        })
        .collect()
}

/// Solve (K + V_eff − λ) x = b through the pencil: M(λ) x = B b.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    lu: TriLu<f64>,
}

impl ShiftedSolver {
    pub fn new(grid: &RadialGrid, l: usize, veff: &[f64], lambda: f64) -> Result<Self> {
        let (dl, d, du) = pencil_bands(grid, l, veff, lambda);
        let lu = TriLu::new(dl, d, du).ok_or_else(|| Error::Numerical(format!("singular shifted operator at {lambda}")))?;
        Ok(Self { lu })
    }

    pub fn solve<U>(&self, b: &[U]) -> Vec<U>
    where
        U: Copy
            + std::ops::Add<Output = U>
            + std::ops::Sub<Output = U>
            + std::ops::Mul<f64, Output = U>
            + std::ops::Div<f64, Output = U>,
    {
        let mut x = mass_mul(b);
        self.lu.solve_in_place(&mut x);
        x
    }
}

/// Range of validity of the pivot count: V_eff − λ < 12/h² everywhere.
fn check_pencil(grid: &RadialGrid, veff: &[f64], lambda_min: f64) -> Result<()> {
    let vmax = veff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let limit = 12.0 / (grid.dr() * grid.dr());
    if vmax - lambda_min >= limit {
        return Err(Error::Grid(format!(
            "potential range {:.3e} exceeds Numerov limit 12/h^2 = {:.3e}; refine the grid",
            vmax - lambda_min,
            limit
        )));
    }
    Ok(())
}

/// Number of eigenvalues of K + V_eff strictly below λ.
pub fn count_below(grid: &RadialGrid, l: usize, veff: &[f64], lambda: f64) -> usize {
    let (dl, d, du) = pencil_bands(grid, l, veff, lambda);
    negative_pivots(&dl, &d, &du)
}

fn spectrum_bounds(grid: &RadialGrid, veff: &[f64]) -> (f64, f64) {
    let vmin = veff.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmax = veff.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (vmin - 1.0, vmax + 6.0 / (grid.dr() * grid.dr()) + 1.0)
}

/// k-th eigenvalue (0-based) of K + V_eff by bisection on the pivot count.
pub fn bisect_eigenvalue(grid: &RadialGrid, l: usize, veff: &[f64], index: usize) -> Result<f64> {
    let (mut lo, mut hi) = spectrum_bounds(grid, veff);
    check_pencil(grid, veff, lo)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(grid, l, veff, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One eigenpair; `vector` holds interior samples normalized in ⟨·,·⟩.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Apply K + V_eff to real interior samples (`veff` includes the centrifugal term).
pub fn apply_h(grid: &RadialGrid, l: usize, veff: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = numerov_second_difference(grid, l, x);
    for j in 0..x.len() {
        y[j] += veff[j] * x[j];
    }
    y
}

fn normalize(grid: &RadialGrid, x: &mut [f64]) {
    let nrm = inner_real(grid, x, x).sqrt();
    for v in x.iter_mut() {
        *v /= nrm;
    }
}

/// Inverse iteration at a (bisected) eigenvalue estimate, then a Rayleigh
/// quotient. The sign is fixed so that the entry of largest modulus is positive.
pub fn eigenvector_at(grid: &RadialGrid, l: usize, veff: &[f64], lambda: f64) -> Result<Eigenpair> {
    let n = veff.len();
    let mut shift = lambda;
    let solver = loop {
        match ShiftedSolver::new(grid, l, veff, shift) {
            Ok(s) => break s,
            Err(_) => shift -= 1e-12 * lambda.abs().max(1.0),
        }
    };
    let mut x: Vec<f64> = (0..n).map(|j| 1.0 + 0.1 * ((j % 7) as f64)).collect();
    normalize(grid, &mut x);
    for _ in 0..4 {
        x = solver.solve(&x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("inverse iteration overflow".into()));
        }
        normalize(grid, &mut x);
    }
    let (imax, _) = x.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    if x[imax] < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let hx = apply_h(grid, l, veff, &x);
    let value = inner_real(grid, &x, &hx);
    let res: Vec<f64> = hx.iter().zip(&x).map(|(a, b)| a - value * b).collect();
    let residual = inner_real(grid, &res, &res).sqrt();
    Ok(Eigenpair { value, vector: x, residual })
}

/// Lowest `count` eigenpairs of the channel operator −u″ + l(l+1)u/r² + V u.
/// `v` holds the potential on interior nodes.
pub fn eigens_channel(grid: &RadialGrid, v: &[f64], l: usize, count: usize) -> Result<Vec<Eigenpair>> {
    check_channel(l)?;
    if count == 0 || count > 4 {
        return Err(Error::validation("count", "must be in 1..=4"));
    }
    if v.len() != grid.interior() {
        return Err(Error::Grid(format!("potential length {} != {}", v.len(), grid.interior())));
    }
    let veff = effective_potential(grid, v, l);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let lam = bisect_eigenvalue(grid, l, &veff, k)?;
        let pair = eigenvector_at(grid, l, &veff, lam)?;
        if pair.residual > 1e-9 * (1.0 + lam.abs()) {
            return Err(Error::NoConvergence { what: format!("eigenpair {k} (l = {l})"), iterations: 4, residual: pair.residual });
        }
        out.push(pair);
    }
    Ok(out)
}

/// Ground state of h_φ in the radial channel.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub e: f64,
    /// Positive, normalized reduced samples (interior).
    pub psi: Vec<f64>,
    /// V_φ on interior nodes.
    pub potential: Vec<f64>,
    pub residual: f64,
}

impl GroundState {
    pub fn wave_function(&self) -> WaveFunction {
        WaveFunction::from_real_interior(0, &self.psi)
    }
}

/// Ground state of the potential `v` (interior), without the bound-state guard.
pub fn ground_state_of_potential(grid: &RadialGrid, v: Vec<f64>) -> Result<GroundState> {
    let lam = bisect_eigenvalue(grid, 0, &v, 0)?;
    let pair = eigenvector_at(grid, 0, &v, lam)?;
    let mut psi = pair.vector;
    if psi.iter().sum::<f64>() < 0.0 {
        psi.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(GroundState { e: pair.value, psi, potential: v, residual: pair.residual })
}

/// Positive normalized ground state of h_φ; refuses shallow wells.
pub fn ground_state(grid: &RadialGrid, phi: &FieldState) -> Result<GroundState> {
    let v = potential_of_field(grid, phi);
    let gs = ground_state_of_potential(grid, v)?;
    if gs.e >= EDGE_THRESHOLD {
        return Err(Error::NoBoundState { e_ground: gs.e });
    }
    Ok(gs)
}

/// Ground state plus the first excitation across channels 0, 1, 2.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub e_ground: f64,
    pub psi_ground: Vec<f64>,
    pub potential: Vec<f64>,
    /// Second l = 0 eigenvalue, lowest l = 1 and lowest l = 2 eigenvalues.
    pub e_excited_by_channel: [f64; 3],
    /// min over channels, capped at 0 (the essential edge).
    pub e1: f64,
    pub gap: f64,
    /// Channel attaining e1, `None` when the cap is active.
    pub attaining_channel: Option<usize>,
    pub essential_edge: f64,
    pub ground_residual: f64,
}

impl SpectralData {
    pub fn psi_wave_function(&self) -> WaveFunction {
        WaveFunction::from_real_interior(0, &self.psi_ground)
    }

    pub fn channel_label(&self) -> String {
        match self.attaining_channel {
            Some(l) => l.to_string(),
            None => "edge".to_string(),
        }
    }

    pub fn report(&self, t: f64) -> GapRow {
        GapRow { t, e_ground: self.e_ground, e1: self.e1, gap: self.gap, attaining_channel: self.channel_label() }
    }
}

/// Row of the gap-track CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRow {
    pub t: f64,
    pub e_ground: f64,
    pub e1: f64,
    pub gap: f64,
    pub attaining_channel: String,
}

/// Spectral data from an already computed ground state.
pub fn gap_from_ground(grid: &RadialGrid, gs: GroundState) -> Result<SpectralData> {
    let v = &gs.potential;
    let e0_second = bisect_eigenvalue(grid, 0, v, 1)?;
    let e_l1 = bisect_eigenvalue(grid, 1, &effective_potential(grid, v, 1), 0)?;
    let e_l2 = bisect_eigenvalue(grid, 2, &effective_potential(grid, v, 2), 0)?;
    let excited = [e0_second, e_l1, e_l2];
    let (mut chan, mut e1) = (0, excited[0]);
    for (l, &e) in excited.iter().enumerate() {
        if e < e1 {
            e1 = e;
            chan = l;
        }
    }
    let (e1, attaining) = if e1 >= EDGE_THRESHOLD { (0.0, None) } else { (e1, Some(chan)) };
    Ok(SpectralData {
        e_ground: gs.e,
        gap: e1 - gs.e,
        psi_ground: gs.psi,
        potential: gs.potential,
        e_excited_by_channel: excited,
        e1,
        attaining_channel: attaining,
        essential_edge: 0.0,
        ground_residual: gs.residual,
    })
}

/// Full spectral data of h_φ: e(φ), ψ_φ, e₁(φ) and Λ(φ).
pub fn gap(grid: &RadialGrid, phi: &FieldState) -> Result<SpectralData> {
    gap_from_ground(grid, ground_state(grid, phi)?)
}

/// ℱ(φ) = inf spec h_φ + ‖φ‖², with inf spec capped at 0.
pub fn energy_f(grid: &RadialGrid, phi: &FieldState) -> Result<f64> {
    let v = potential_of_field(grid, phi);
    let e0 = bisect_eigenvalue(grid, 0, &v, 0)?;
    Ok(e0.min(0.0) + phi.norm_sq(grid))
}

/// ℱ(φ) when the ground state is already known.
pub fn energy_f_from(grid: &RadialGrid, phi: &FieldState, e_ground: f64) -> f64 {
    e_ground.min(0.0) + phi.norm_sq(grid)
}

fn project_out(grid: &RadialGrid, psi: &[f64], x: &mut [Complex64]) {
    let psi_c: Vec<Complex64> = psi.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let c = inner(grid, &psi_c, x);
    for (xi, &p) in x.iter_mut().zip(psi) {
        *xi -= c * p;
    }
}

/// R_φ^p v with R_φ = q (h_φ − e(φ))⁻¹ q on the complement of ψ_φ.
///
/// Uses the deflated shifted iteration x ← q (h − e + τ)⁻¹ (q v + τ x), which
/// contracts by τ/(Λ + τ) per sweep.
pub fn resolvent_apply(grid: &RadialGrid, spec: &SpectralData, v: &WaveFunction, power: usize) -> Result<WaveFunction> {
    if !(1..=3).contains(&power) {
        return Err(Error::validation("power", "must be 1, 2 or 3"));
    }
    if v.l != 0 {
        return Err(Error::UnsupportedChannel(v.l));
    }
    if !(spec.gap > 0.0) {
        return Err(Error::Numerical("resolvent requires a positive gap".into()));
    }
    let tau = 1e-3 * spec.gap;
    let solver = ShiftedSolver::new(grid, 0, &spec.potential, spec.e_ground - tau)?;
    let mut cur: Vec<Complex64> = v.interior().to_vec();
    for _ in 0..power {
        project_out(grid, &spec.psi_ground, &mut cur);
        let rhs = cur.clone();
        let scale = inner(grid, &rhs, &rhs).re.sqrt();
        let mut x = vec![Complex64::new(0.0, 0.0); rhs.len()];
        let mut converged = scale == 0.0;
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            if converged {
                break;
            }
            let b: Vec<Complex64> = rhs.iter().zip(&x).map(|(r, xi)| r + xi * tau).collect();
            let mut nx = solver.solve(&b);
            project_out(grid, &spec.psi_ground, &mut nx);
            let diff: Vec<Complex64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
            let dn = inner(grid, &diff, &diff).re.sqrt();
            let xn = inner(grid, &nx, &nx).re.sqrt();
            x = nx;
            if dn <= 1e-15 * xn || (dn >= last && dn <= 1e-12 * xn) {
                converged = true;
            }
            last = dn;
        }
        if !converged {
            return Err(Error::NoConvergence { what: "deflated resolvent".into(), iterations: 60, residual: last });
        }
        cur = x;
    }
    Ok(WaveFunction::from_interior(0, &cur))
}
