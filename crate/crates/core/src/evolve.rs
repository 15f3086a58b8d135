//! Free flows, Duhamel integrals, the Picard solver for (γ, ζ), an independent
//! RK4 integrator and the truncated hierarchy iteration.

use ndarray::ArrayD;
use rayon::prelude::*;

use crate::collision::{CollisionOperator, HierarchyInput};
use crate::error::{Error, Result};
use crate::fft::{unitary_dft, Direction};
use crate::grid::{unflatten, DensityMatrix, GridSpec, LazyTensorState, PhaseField};
use crate::norms::{h_norm, time_weighted_norms, NormParams};
use crate::C64;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub t_final: f64,
    pub n_t: usize,
    pub picard_max: usize,
    pub tol: f64,
    pub closure_k: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { t_final: 0.1, n_t: 21, picard_max: 20, tol: 1e-8, closure_k: 2 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_final > 0.0 && self.n_t >= 2 && self.tol > 0.0 && self.closure_k >= 1) {
            return Err(Error::InvalidArgument(format!("bad solver config {self:?}")));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.t_final / (self.n_t - 1) as f64;
        (0..self.n_t).map(|j| j as f64 * dt).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub gamma: Vec<DensityMatrix>,
    pub zeta: Vec<DensityMatrix>,
}

impl Trajectory {
    pub fn last(&self) -> &DensityMatrix {
        self.gamma.last().expect("non-empty trajectory")
    }
}

/// f(x − vt, v), spectrally in x.
pub fn free_transport(f: &PhaseField, t: f64) -> PhaseField {
    let g = f.grid;
    let d = g.d;
    let xaxes: Vec<usize> = (0..d).collect();
    let mut a = f.data.as_standard_layout().to_owned();
    unitary_dft(&mut a, &xaxes, Direction::Forward);
    let mut ix = vec![0usize; 2 * d];
    for (flat, z) in a.iter_mut().enumerate() {
        unflatten(flat, g.n, &mut ix);
        let ph: f64 = (0..d).map(|j| g.xi(ix[j]) * g.v(ix[d + j])).sum();
        *z *= C64::from_polar(1.0, -t * ph);
    }
    unitary_dft(&mut a, &xaxes, Direction::Inverse);
    let mut out = PhaseField { grid: g, data: a, real: f.real };
    if f.real {
        out.data.mapv_inplace(|z| C64::new(z.re, 0.0));
    }
    out
}

/// True when some node with |f| above `rel` · max|f| moves farther than
/// the box half-width within time t (periodic wrap-around).
pub fn transport_wraps(f: &PhaseField, t: f64, rel: f64) -> bool {
    let g = f.grid;
    let d = g.d;
    let top = crate::grid::max_abs(&f.data);
    let mut ix = vec![0usize; 2 * d];
    f.data.as_standard_layout().iter().enumerate().any(|(flat, z)| {
        if z.norm() <= rel * top {
            return false;
        }
        unflatten(flat, g.n, &mut ix);
        (0..d).any(|j| (g.v(ix[d + j]) * t).abs() > g.lx)
    })
}

fn propagate_data(data: &ArrayD<C64>, grid: &GridSpec, k: usize, t: f64) -> ArrayD<C64> {
    let kd = k * grid.d;
    let axes: Vec<usize> = (0..2 * kd).collect();
    let mut a = data.as_standard_layout().to_owned();
    unitary_dft(&mut a, &axes, Direction::Forward);
    let xi2: Vec<f64> = (0..grid.n).map(|i| grid.xi(i).powi(2)).collect();
    let n = grid.n;
    let total = a.len();
    let chunk = total / n.pow(2 * kd as u32 - 1).max(1);
    let s = a.as_slice_mut().unwrap();
    s.par_chunks_mut(chunk.max(1)).enumerate().for_each(|(c, block)| {
        let mut ix = vec![0usize; 2 * kd];
        for (o, z) in block.iter_mut().enumerate() {
            unflatten(c * chunk + o, n, &mut ix);
            let e: f64 = (0..kd).map(|j| xi2[ix[j]] - xi2[ix[kd + j]]).sum();
            *z *= C64::from_polar(1.0, -0.5 * t * e);
        }
    });
    unitary_dft(&mut a, &axes, Direction::Inverse);
    a
}

/// e^{½itΔ±}γ for any particle count.
pub fn free_schrodinger(g: &DensityMatrix, t: f64) -> DensityMatrix {
    DensityMatrix { data: propagate_data(&g.data, &g.grid, g.k, t), ..g.clone() }
}

/// −i ∫₀^{t_j} U(t_j − s) S(s) ds at every node, trapezoid in s.
fn duhamel_integrals(source: &[DensityMatrix], times: &[f64]) -> Vec<DensityMatrix> {
    let pulled: Vec<DensityMatrix> = source.iter().zip(times).map(|(s, &t)| free_schrodinger(s, -t)).collect();
    let mut acc = DensityMatrix { data: pulled[0].data.mapv(|_| C64::new(0.0, 0.0)), ..pulled[0].clone() };
    let mut out = Vec::with_capacity(times.len());
    out.push(acc.clone());
    for j in 1..times.len() {
        let h = 0.5 * (times[j] - times[j - 1]);
        acc.data.zip_mut_with(&pulled[j - 1].data, |a, b| *a += b * h);
        acc.data.zip_mut_with(&pulled[j].data, |a, b| *a += b * h);
        out.push(acc.clone());
    }
    out.into_iter()
        .zip(times)
        .map(|(c, &t)| free_schrodinger(&c, t).scale(C64::new(0.0, -1.0)))
        .collect()
}

fn node_index(times: &[f64], t: f64) -> Result<usize> {
    times
        .iter()
        .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
        .ok_or_else(|| Error::InvalidArgument(format!("t = {t} is not a node of the time lattice")))
}

/// U(t)γ0 − i ∫₀ᵗ U(t−s) S(s) ds, source given on `times`.
pub fn duhamel_step(g0: &DensityMatrix, source: &[DensityMatrix], times: &[f64], t: f64) -> Result<DensityMatrix> {
    if source.len() != times.len() {
        return Err(Error::InvalidArgument("source and time lattice lengths differ".into()));
    }
    let j = node_index(times, t)?;
    let integ = duhamel_integrals(&source[..=j], &times[..=j]);
    let mut out = free_schrodinger(g0, t);
    out.data += &integ[j].data;
    out.hermitian = false;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct PicardReport {
    pub residuals: Vec<f64>,
    /// Ratios of consecutive residuals.
    pub ratios: Vec<f64>,
    pub contraction_ratio: f64,
    pub converged: bool,
    /// Composite norm of the solution over ‖γ0‖.
    pub solution_ratio: f64,
    /// C in ‖solution‖ ≤ C T^{(1−r)/2} ‖γ0‖.
    pub estimate_constant: f64,
    pub r: f64,
}

/// T^{(1−r)/2} sup_t ‖γ(t)‖ + ∫ ‖ζ(t)‖ dt with κ − λt.
pub fn composite_norm(traj: &Trajectory, p: &NormParams, r: f64) -> Result<f64> {
    let t = *traj.times.last().unwrap();
    let (sup, l1) = time_weighted_norms(&traj.times, &traj.gamma, &traj.zeta, p, t)?;
    Ok(t.powf(0.5 * (1.0 - r)) * sup + l1)
}

fn difference(a: &Trajectory, b: &Trajectory) -> Trajectory {
    let sub = |x: &[DensityMatrix], y: &[DensityMatrix]| -> Vec<DensityMatrix> {
        x.iter().zip(y).map(|(u, v)| u.axpy(C64::new(-1.0, 0.0), v)).collect()
    };
    Trajectory { times: a.times.clone(), gamma: sub(&a.gamma, &b.gamma), zeta: sub(&a.zeta, &b.zeta) }
}

fn zeta_of(op: &CollisionOperator, gamma: &[DensityMatrix]) -> Result<Vec<DensityMatrix>> {
    gamma.iter().map(|g| op.b_full(g, g)).collect()
}

/// One application of Φ: γ ← U γ0 − i∫U ζ, ζ ← B(γ, γ).
pub fn picard_map(g0: &DensityMatrix, traj: &Trajectory, op: &CollisionOperator) -> Result<Trajectory> {
    let integ = duhamel_integrals(&traj.zeta, &traj.times);
    let gamma: Vec<DensityMatrix> = integ
        .into_iter()
        .zip(&traj.times)
        .map(|(mut i, &t)| {
            i.data += &free_schrodinger(g0, t).data;
            i.hermitian = false;
            i
        })
        .collect();
    let zeta = zeta_of(op, &gamma)?;
    Ok(Trajectory { times: traj.times.clone(), gamma, zeta })
}

/// Free flow and B of the free flow.
pub fn free_trajectory(g0: &DensityMatrix, times: &[f64], op: Option<&CollisionOperator>) -> Result<Trajectory> {
    let gamma: Vec<DensityMatrix> = times.iter().map(|&t| free_schrodinger(g0, t)).collect();
    let zeta = match op {
        Some(op) => zeta_of(op, &gamma)?,
        None => gamma.iter().map(|g| DensityMatrix::zeros(g.grid, g.k)).collect(),
    };
    Ok(Trajectory { times: times.to_vec(), gamma, zeta })
}

fn relative(diff: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / scale
    }
}

/// Picard iteration of the (γ, ζ) system on the time lattice of `cfg`.
pub fn picard_solve(
    g0: &DensityMatrix,
    op: &CollisionOperator,
    p: &NormParams,
    cfg: &SolverConfig,
) -> Result<(Trajectory, PicardReport)> {
    cfg.validate()?;
    p.validate()?;
    if p.lambda > 0.0 && p.lambda * cfg.t_final >= p.kappa {
        return Err(Error::InvalidArgument("lambda T must stay below kappa".into()));
    }
    let norm0 = h_norm(g0, p)?;
    let r = p.default_r(op.model.a);
    let times = cfg.times();
    let mut cur = free_trajectory(g0, &times, Some(op))?;
    let mut residuals = Vec::new();
    let mut ratios = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    for _ in 0..cfg.picard_max {
        let next = picard_map(g0, &cur, op)?;
        let res = relative(composite_norm(&difference(&next, &cur), p, r)?, composite_norm(&next, p, r)?);
        if let Some(&prev) = residuals.last() {
            let q: f64 = res / prev;
            ratios.push(q);
            streak = if q >= 1.0 { streak + 1 } else { 0 };
            if streak >= 3 {
                return Err(Error::NonContraction { ratio: q, streak });
            }
        }
        residuals.push(res);
        cur = next;
        if res <= cfg.tol {
            converged = true;
            break;
        }
    }
    let total = composite_norm(&cur, p, r)?;
    let solution_ratio = relative(total, norm0);
    let estimate_constant = relative(total, cfg.t_final.powf(0.5 * (1.0 - r)) * norm0);
    let contraction_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let report = PicardReport { residuals, ratios, contraction_ratio, converged, solution_ratio, estimate_constant, r };
    Ok((cur, report))
}

/// Classical RK4 in the interaction picture ψ = U(−t)γ; `substeps` steps per
/// time-lattice interval. `op = None` gives the free flow.
pub fn reference_integrate(
    g0: &DensityMatrix,
    op: Option<&CollisionOperator>,
    cfg: &SolverConfig,
    substeps: usize,
) -> Result<Trajectory> {
    cfg.validate()?;
    let times = cfg.times();
    let scale0 = g0.norm_l2().max(f64::MIN_POSITIVE);
    let rhs = |psi: &DensityMatrix, t: f64| -> Result<DensityMatrix> {
        let Some(op) = op else {
            return Ok(DensityMatrix::zeros(psi.grid, psi.k));
        };
        let g = free_schrodinger(psi, t);
        Ok(free_schrodinger(&op.b_full(&g, &g)?, -t).scale(C64::new(0.0, -1.0)))
    };
    let mut psi = g0.clone();
    let mut out_g = vec![g0.clone()];
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / substeps.max(1) as f64;
        for s in 0..substeps.max(1) {
            let t = w[0] + s as f64 * h;
            let k1 = rhs(&psi, t)?;
            let k2 = rhs(&psi.axpy(C64::new(0.5 * h, 0.0), &k1), t + 0.5 * h)?;
            let k3 = rhs(&psi.axpy(C64::new(0.5 * h, 0.0), &k2), t + 0.5 * h)?;
            let k4 = rhs(&psi.axpy(C64::new(h, 0.0), &k3), t + h)?;
            psi.data.zip_mut_with(&k1.data, |a, b| *a += b * (h / 6.0));
            psi.data.zip_mut_with(&k2.data, |a, b| *a += b * (h / 3.0));
            psi.data.zip_mut_with(&k3.data, |a, b| *a += b * (h / 3.0));
            psi.data.zip_mut_with(&k4.data, |a, b| *a += b * (h / 6.0));
            let nrm = psi.norm_l2();
            if !nrm.is_finite() || nrm > 1e6 * scale0 {
                return Err(Error::BlowUp { t: t + h });
            }
        }
        out_g.push(free_schrodinger(&psi, w[1]));
    }
    let zeta = match op {
        Some(op) => zeta_of(op, &out_g)?,
        None => out_g.iter().map(|g| DensityMatrix::zeros(g.grid, g.k)).collect(),
    };
    Ok(Trajectory { times, gamma: out_g, zeta })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Closure {
    /// γ^{(K+1)} = (γ^{(1)})^{⊗(K+1)}, recomputed every iteration.
    Factorized,
    Zero,
}

#[derive(Clone, Debug)]
pub struct HierarchyRun {
    /// Level k trajectory at index k − 1; ζ holds Σ_i B_{i,k+1}γ^{(k+1)}.
    pub levels: Vec<Trajectory>,
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Picard iteration of the hierarchy truncated at level `cfg.closure_k`.
pub fn hierarchy_solve(
    levels0: &[DensityMatrix],
    op: &CollisionOperator,
    p: &NormParams,
    cfg: &SolverConfig,
    closure: Closure,
) -> Result<HierarchyRun> {
    cfg.validate()?;
    let kk = cfg.closure_k;
    if levels0.len() != kk {
        return Err(Error::InvalidArgument(format!("{} initial levels for closure K = {kk}", levels0.len())));
    }
    for (i, g) in levels0.iter().enumerate() {
        if g.k != i + 1 {
            return Err(Error::InvalidArgument(format!("level {} holds a k = {} state", i + 1, g.k)));
        }
    }
    let m = op.grid.points();
    let biggest = m.checked_pow(2 * kk as u32).unwrap_or(usize::MAX);
    if biggest > crate::grid::MATERIALIZE_LIMIT {
        return Err(Error::MemoryGuard(format!("level {kk} needs {biggest} entries")));
    }
    let r = p.default_r(op.model.a);
    let times = cfg.times();
    let sources = |gam: &[Vec<DensityMatrix>]| -> Result<Vec<Vec<DensityMatrix>>> {
        let mut out = Vec::with_capacity(kk);
        for k in 1..=kk {
            let mut lvl = Vec::with_capacity(times.len());
            for j in 0..times.len() {
                let z = if k < kk {
                    op.b_hierarchy_sum(HierarchyInput::Full(&gam[k][j]))?
                } else {
                    match closure {
                        Closure::Zero => DensityMatrix::zeros(op.grid, k),
                        Closure::Factorized => {
                            let lazy = LazyTensorState::factorized(vec![gam[0][j].clone(); k + 1])?;
                            op.b_hierarchy_sum(HierarchyInput::Lazy(&lazy))?
                        }
                    }
                };
                lvl.push(z);
            }
            out.push(lvl);
        }
        Ok(out)
    };
    let mut gam: Vec<Vec<DensityMatrix>> =
        levels0.iter().map(|g0| times.iter().map(|&t| free_schrodinger(g0, t)).collect()).collect();
    let mut xi = sources(&gam)?;
    let weighted = |gam: &[Vec<DensityMatrix>], xi: &[Vec<DensityMatrix>]| -> Result<f64> {
        let mut acc = 0.0;
        for k in 0..kk {
            let tr = Trajectory { times: times.clone(), gamma: gam[k].clone(), zeta: xi[k].clone() };
            acc += p.xi_w.powi(k as i32 + 1) * composite_norm(&tr, p, r)?;
        }
        Ok(acc)
    };
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut streak = 0;
    for _ in 0..cfg.picard_max {
        let new_gam: Vec<Vec<DensityMatrix>> = (0..kk)
            .map(|k| {
                duhamel_integrals(&xi[k], &times)
                    .into_iter()
                    .zip(&times)
                    .map(|(mut i, &t)| {
                        i.data += &free_schrodinger(&levels0[k], t).data;
                        i
                    })
                    .collect()
            })
            .collect();
        let new_xi = sources(&new_gam)?;
        let dg: Vec<Vec<DensityMatrix>> = new_gam
            .iter()
            .zip(&gam)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u.axpy(C64::new(-1.0, 0.0), v)).collect())
            .collect();
        let dx: Vec<Vec<DensityMatrix>> = new_xi
            .iter()
            .zip(&xi)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u.axpy(C64::new(-1.0, 0.0), v)).collect())
            .collect();
        let res = relative(weighted(&dg, &dx)?, weighted(&new_gam, &new_xi)?);
        if let Some(&prev) = residuals.last() {
            let q: f64 = res / prev;
            streak = if q >= 1.0 { streak + 1 } else { 0 };
            if streak >= 3 {
                return Err(Error::NonContraction { ratio: q, streak });
            }
        }
        residuals.push(res);
        gam = new_gam;
        xi = new_xi;
        if res <= cfg.tol {
            converged = true;
            break;
        }
    }
    let levels = gam
        .into_iter()
        .zip(xi)
        .map(|(gamma, zeta)| Trajectory { times: times.clone(), gamma, zeta })
        .collect();
    Ok(HierarchyRun { levels, residuals, converged })
}
