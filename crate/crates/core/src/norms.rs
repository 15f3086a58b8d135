//! Exponentially weighted Sobolev norms on density matrices and phase fields.

use ndarray::ArrayD;

use crate::error::{Error, Result};
use crate::fft::{unitary_dft, Direction};
use crate::grid::{unflatten, DensityMatrix, GridSpec, PhaseField};
use crate::C64;

/// Exponents above this are reported instead of overflowing.
pub const EXP_LIMIT: f64 = 700.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormParams {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub xi_w: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        NormParams { alpha: 1.0, beta: 2.5, sigma: 1.0, kappa: 0.1, lambda: 0.0, xi_w: 1.0 }
    }
}

impl NormParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.beta >= 0.0
            && self.sigma > 0.0
            && self.kappa >= 0.0
            && self.lambda >= 0.0
            && self.xi_w > 0.0;
        if ok && [self.alpha, self.beta, self.sigma, self.kappa, self.lambda, self.xi_w].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("bad norm parameters {self:?}")))
        }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        NormParams { kappa, ..*self }
    }

    /// Violated conditions of the local well-posedness regime (empty when admissible).
    /// Only reported, never enforced.
    pub fn regime_flags(&self, d: usize, a: f64) -> Vec<String> {
        let mut out = Vec::new();
        let d = d as f64;
        if self.alpha <= (d - 1.0) / 2.0 {
            out.push(format!("alpha = {} <= (d-1)/2", self.alpha));
        }
        if self.beta <= d {
            out.push(format!("beta = {} <= d", self.beta));
        }
        let s = 1.0 / self.sigma;
        let lo = (2.0 * a - 1.0).max(0.0);
        if !(s > lo && s <= 2.0) {
            out.push(format!("1/sigma = {s} outside ({lo}, 2]"));
        }
        if self.kappa <= 0.0 {
            out.push("kappa <= 0".into());
        }
        out
    }

    /// Smallest admissible time exponent r for cutoff exponent `a`.
    pub fn default_r(&self, a: f64) -> f64 {
        if a < 0.5 {
            0.0
        } else {
            self.sigma * (2.0 * a - 1.0 + 0.01).max(0.0)
        }
    }
}

#[inline]
pub fn bracket(x2: f64) -> f64 {
    (1.0 + x2).sqrt()
}

/// log of ⟨s⟩^β e^{κ⟨s⟩^{1/σ}} given |s|², with the exponential term checked.
fn log_weight(s2: f64, beta: f64, p: &NormParams) -> Result<f64> {
    let b = bracket(s2);
    let e = p.kappa * b.powf(1.0 / p.sigma);
    if e > EXP_LIMIT {
        return Err(Error::Overflow { exponent: e, limit: EXP_LIMIT });
    }
    Ok(beta * b.ln() + e)
}

/// Per-particle weight ⟨ξ+ξ′⟩^α⟨ξ−ξ′⟩^β e^{κ⟨ξ−ξ′⟩^{1/σ}} evaluated on all dual nodes.
fn weighted_sum(data: &ArrayD<C64>, grid: &GridSpec, k: usize, p: &NormParams) -> Result<f64> {
    let d = grid.d;
    let kd = k * d;
    let mut spec = data.as_standard_layout().to_owned();
    let axes: Vec<usize> = (0..2 * kd).collect();
    unitary_dft(&mut spec, &axes, Direction::Forward);
    let mut ix = vec![0usize; 2 * kd];
    let mut acc = 0.0;
    for (flat, z) in spec.iter().enumerate() {
        let a2 = z.norm_sqr();
        if a2 == 0.0 {
            continue;
        }
        unflatten(flat, grid.n, &mut ix);
        let mut lw = 0.0;
        for part in 0..k {
            let (mut sp, mut sm) = (0.0, 0.0);
            for a in 0..d {
                let xi = grid.xi(ix[part * d + a]);
                let xip = grid.xi(ix[kd + part * d + a]);
                sp += (xi + xip) * (xi + xip);
                sm += (xi - xip) * (xi - xip);
            }
            lw += p.alpha * bracket(sp).ln() + log_weight(sm, p.beta, p)?;
        }
        acc += a2 * (2.0 * lw).exp();
    }
    Ok(acc)
}

/// ‖γ‖ in the weighted space; continuous normalization so that the
/// unweighted value is the L²(dx dx′) norm. Product weights for k > 1.
pub fn h_norm(g: &DensityMatrix, p: &NormParams) -> Result<f64> {
    p.validate()?;
    let s = weighted_sum(&g.data, &g.grid, g.k, p)?;
    Ok(s.sqrt() * g.grid.dx_d().powi(g.k as i32))
}

/// ‖⟨2v⟩^β e^{κ⟨2v⟩^{1/σ}} (1−Δ_x)^{α/2} f‖ in L²(dx dv).
pub fn classical_norm(f: &PhaseField, p: &NormParams) -> Result<f64> {
    p.validate()?;
    let grid = &f.grid;
    let d = grid.d;
    let mut a = f.data.as_standard_layout().to_owned();
    let xaxes: Vec<usize> = (0..d).collect();
    let mut ix = vec![0usize; 2 * d];
    if p.alpha != 0.0 {
        unitary_dft(&mut a, &xaxes, Direction::Forward);
        for (flat, z) in a.iter_mut().enumerate() {
            unflatten(flat, grid.n, &mut ix);
            let k2: f64 = (0..d).map(|j| grid.xi(ix[j]).powi(2)).sum();
            *z *= bracket(k2).powf(p.alpha);
        }
        unitary_dft(&mut a, &xaxes, Direction::Inverse);
    }
    let mut acc = 0.0;
    for (flat, z) in a.iter().enumerate() {
        let a2 = z.norm_sqr();
        if a2 == 0.0 {
            continue;
        }
        unflatten(flat, grid.n, &mut ix);
        let v2: f64 = (0..d).map(|j| (2.0 * grid.v(ix[d + j])).powi(2)).sum();
        acc += a2 * (2.0 * log_weight(v2, p.beta, p)?).exp();
    }
    Ok((acc * grid.dx_d() * grid.dv_d()).sqrt())
}

/// Σ_k ξ_w^k ‖γ^{(k)}‖, levels listed from k = 1.
pub fn hierarchy_norm(levels: &[DensityMatrix], p: &NormParams) -> Result<f64> {
    if levels.is_empty() {
        return Err(Error::InvalidArgument("empty hierarchy".into()));
    }
    let mut acc = 0.0;
    for (i, g) in levels.iter().enumerate() {
        if g.k != i + 1 {
            return Err(Error::InvalidArgument(format!("level {} holds a k = {} state", i + 1, g.k)));
        }
        acc += p.xi_w.powi(g.k as i32) * h_norm(g, p)?;
    }
    Ok(acc)
}

/// (sup_t ‖γ(t)‖ with κ−λt, ∫₀ᵀ ‖ζ(t)‖ dt with κ−λt by trapezoid).
pub fn time_weighted_norms(
    times: &[f64],
    gamma: &[DensityMatrix],
    zeta: &[DensityMatrix],
    p: &NormParams,
    t_final: f64,
) -> Result<(f64, f64)> {
    if times.len() != gamma.len() || times.len() != zeta.len() || times.is_empty() {
        return Err(Error::InvalidArgument("trajectory lengths differ".into()));
    }
    if p.kappa - p.lambda * t_final < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "kappa - lambda T = {} < 0",
            p.kappa - p.lambda * t_final
        )));
    }
    let mut sup: f64 = 0.0;
    let mut zs = Vec::with_capacity(times.len());
    for ((t, g), z) in times.iter().zip(gamma).zip(zeta) {
        let q = p.with_kappa(p.kappa - p.lambda * t);
        sup = sup.max(h_norm(g, &q)?);
        zs.push(h_norm(z, &q)?);
    }
    Ok((sup, trapezoid(times, &zs)))
}

pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2).zip(y.windows(2)).map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1])).sum()
}
