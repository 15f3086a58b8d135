//! Collision operators: the classical velocity-space Q(f, f), the density-matrix
//! side B±(γ₁, γ₂), and the hierarchy contractions B±_{i,k+1}.
//!
//! B is evaluated in midpoint/relative coordinates `G(m, y) = γ(m + y/2, m − y/2)`
//! on the doubled midpoint lattice. For tabulated kernels
//!
//! ```text
//! B⁻(m, y) = c Σ_η K⁻(η)    G₁(m, y − η) G₂(m, η),   K⁻(η)    = Σ_ω Δω b̂^ω(η)
//! B⁺(m, y) = c Σ_η K⁺(y, η) G₁(m, y − η) G₂(m, η),   K⁺(y, η) = Σ_ω Δω b̂^ω(R_ω η + P_ω y)
//! ```
//!
//! with `c = i hᵈ / (2ᵈ πᵈ)`. Maxwell kernels collapse the η-sum:
//! `B⁻ = i |S| G₁(m, y) G₂(m, 0)` and `B⁺ = i Σ_ω Δω G₁(m, (I − P_ω) y) G₂(m, P_ω y)`.

use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{check_grids, flatten, max_abs, unflatten, DensityMatrix, GridSpec, LazyTensorState, PhaseField, REAL_TOL};
use crate::kernel::{b_hat_lattice, b_lattice, p_omega, r_omega, KernelModel, SphereQuadrature};
use crate::trig::TrigEval;
use crate::wigner::{hermitian_check, mid_rel_to_pair, mid_velocity_form, velocity_to_relative};

/// Multiplicative correction of the B prefactor, fixed against the classical oracle.
pub const PREFACTOR_CORRECTION: f64 = 1.0;
/// Constant of the collapsed Maxwell loss term, `B⁻ = i c_d |S^{d−1}| γ(x, x′) γ(m, m)`.
pub const MAXWELL_LOSS_CONSTANT: f64 = 1.0;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn signed_center(i: usize, n: usize) -> f64 {
    i as f64 - (n / 2) as f64
}

/// Centered index of `r − η` (periodic).
fn diff_table(grid: &GridSpec) -> Vec<u32> {
    let (n, d, m) = (grid.n, grid.d, grid.points());
    let mut ri = vec![0usize; d];
    let mut ei = vec![0usize; d];
    let mut out = vec![0usize; d];
    let mut t = Vec::with_capacity(m * m);
    for r in 0..m {
        unflatten(r, n, &mut ri);
        for e in 0..m {
            unflatten(e, n, &mut ei);
            for a in 0..d {
                out[a] = (ri[a] + n - ei[a] + n / 2) % n;
            }
            t.push(flatten(&out, n) as u32);
        }
    }
    t
}

fn lattice_point(grid: &GridSpec, flat: usize, step: f64, ix: &mut [usize], out: &mut [f64]) {
    unflatten(flat, grid.n, ix);
    for a in 0..grid.d {
        out[a] = signed_center(ix[a], grid.n) * step;
    }
}

/// Σ_ω Δω b̂^ω(ξ(ω, a, b)) for all lattice pairs `(a, b)` of relative nodes.
///
/// `ξ` must depend on ω only through `P_ω` (even in ω), so antipodal nodes are
/// merged into one evaluation of the weight-averaged kernel.
fn pair_table<F>(grid: &GridSpec, model: &KernelModel, quad: &SphereQuadrature, xi: F) -> Vec<C64>
where
    F: Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Sync,
{
    let m = grid.points();
    let (n, d, h, dv) = (grid.n, grid.d, grid.h(), grid.dv());
    let mut nodes = Vec::new();
    let mut blats: Vec<Vec<C64>> = Vec::new();
    for (i, j) in quad.antipodal_pairs() {
        let wi = quad.weights[i];
        let bi = b_lattice(model, &quad.nodes[i], grid);
        let (wt, b) = match j {
            Some(j) => {
                let wj = quad.weights[j];
                let bj = b_lattice(model, &quad.nodes[j], grid);
                (wi + wj, bi.iter().zip(bj.iter()).map(|(x, y)| (wi * x + wj * y) / (wi + wj)).collect::<Vec<_>>())
            }
            None => (wi, bi.iter().copied().collect()),
        };
        nodes.push((quad.nodes[i].clone(), wt));
        blats.push(b.into_iter().map(|x| C64::new(x, 0.0)).collect());
    }
    let scale = grid.dv_d();
    (0..m)
        .into_par_iter()
        .flat_map_iter(|a| {
            let mut ix = vec![0usize; d];
            let mut ya = vec![0.0; d];
            let mut yb = vec![0.0; d];
            lattice_point(grid, a, h, &mut ix, &mut ya);
            let mut te = TrigEval::new(n, d, dv, -1.0);
            let mut row = vec![ZERO; m];
            for (b, slot) in row.iter_mut().enumerate() {
                lattice_point(grid, b, h, &mut ix, &mut yb);
                let mut acc = ZERO;
                for ((w, wt), bl) in nodes.iter().zip(&blats) {
                    let z = xi(w, &ya, &yb);
                    acc += te.eval(bl, &z) * *wt;
                }
                *slot = acc * scale;
            }
            row.into_iter()
        })
        .collect()
}

/// Σ_ω Δω b̂^ω on the relative lattice.
fn loss_table(grid: &GridSpec, model: &KernelModel, quad: &SphereQuadrature) -> Result<Vec<C64>> {
    let mut acc = vec![ZERO; grid.points()];
    for (w, wt) in quad.nodes.iter().zip(&quad.weights) {
        let t = b_hat_lattice(model, w, grid)?;
        for (a, b) in acc.iter_mut().zip(t.as_standard_layout().iter()) {
            *a += b * *wt;
        }
    }
    Ok(acc)
}

fn check_truncation(model: &KernelModel, grid: &GridSpec) -> Result<()> {
    if model.u_max > grid.lv * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "kernel truncation u_max = {} exceeds L_v = {}",
            model.u_max, grid.lv
        )));
    }
    Ok(())
}

struct Tables {
    loss: Vec<C64>,
    /// `[r][η]`
    gain: Vec<C64>,
}

fn is_hermitian(g: &DensityMatrix) -> bool {
    g.hermitian || hermitian_check(g) <= REAL_TOL * max_abs(&g.data).max(f64::MIN_POSITIVE)
}

/// γ† with all particles swapped at once.
fn adjoint(g: &DensityMatrix) -> DensityMatrix {
    let kd = g.k * g.grid.d;
    let axes: Vec<usize> = (kd..2 * kd).chain(0..kd).collect();
    let data = g.data.view().permuted_axes(IxDyn(&axes)).mapv(|z| z.conj());
    DensityMatrix { grid: g.grid, k: g.k, data, hermitian: g.hermitian, symmetric: g.symmetric }
}

/// A pair half a box apart along some axis has two periodic midpoints and the
/// lattice evaluation sees only one of them, so B(γ₁, γ₂)† = −B(γ₁†, γ₂†) fails
/// on exactly those entries.  Averaging with the adjoint evaluation (`partner`
/// = the raw operator applied to the adjoint inputs) restores it; elsewhere the
/// identity already holds to rounding.
fn symmetrize_half_box(out: &mut DensityMatrix, partner: &DensityMatrix, particle: usize) {
    let (n, d, k) = (out.grid.n, out.grid.d, out.k);
    let kd = k * d;
    let mut ix = vec![0usize; 2 * kd];
    let mut sw = vec![0usize; 2 * kd];
    let total = out.data.len();
    let data = out.data.as_slice_mut().expect("standard layout");
    let pd = partner.data.as_standard_layout();
    let pd = pd.as_slice().unwrap();
    for flat in 0..total {
        unflatten(flat, n, &mut ix);
        let edge = (0..d).any(|a| (ix[particle * d + a] + n - ix[kd + particle * d + a]) % n == n / 2);
        if !edge {
            continue;
        }
        sw[..kd].copy_from_slice(&ix[kd..]);
        sw[kd..].copy_from_slice(&ix[..kd]);
        data[flat] = 0.5 * (data[flat] - pd[flatten(&sw, n)].conj());
    }
}

/// Precomputed B operator for one grid, kernel and sphere rule.
pub struct CollisionOperator {
    pub grid: GridSpec,
    pub model: KernelModel,
    pub quad: SphereQuadrature,
    folded: SphereQuadrature,
    tables: Option<Tables>,
    diff: Vec<u32>,
}

/// Output of one bilinear evaluation.
pub struct GainLoss {
    pub gain: DensityMatrix,
    pub loss: DensityMatrix,
}

impl GainLoss {
    pub fn full(&self) -> DensityMatrix {
        self.gain.axpy(C64::new(-1.0, 0.0), &self.loss)
    }
}

/// Midpoint forms of a one-particle state: velocity form for off-lattice
/// evaluation and relative form on the lattice.
pub(crate) struct MidForms {
    pub vel: Vec<C64>,
    pub rel: Vec<C64>,
}

pub(crate) fn mid_forms(g: &DensityMatrix) -> Result<MidForms> {
    let d = g.grid.d;
    let fv = mid_velocity_form(g)?;
    let axes: Vec<usize> = (d..2 * d).collect();
    let rel = velocity_to_relative(&fv, &g.grid, &axes);
    Ok(MidForms {
        vel: fv.as_standard_layout().iter().copied().collect(),
        rel: rel.as_standard_layout().iter().copied().collect(),
    })
}

impl CollisionOperator {
    pub fn new(grid: GridSpec, model: KernelModel, quad: SphereQuadrature) -> Result<Self> {
        if quad.d != grid.d {
            return Err(Error::InvalidArgument("sphere rule dimension differs from grid".into()));
        }
        check_truncation(&model, &grid)?;
        let tables = if model.is_maxwell() {
            None
        } else {
            let loss = loss_table(&grid, &model, &quad)?;
            let gain = pair_table(&grid, &model, &quad, |w, yr, ye| {
                let r = r_omega(w, ye);
                let p = p_omega(w, yr);
                r.iter().zip(&p).map(|(a, b)| a + b).collect()
            });
            Some(Tables { loss, gain })
        };
        let folded = quad.folded();
        Ok(CollisionOperator { grid, model, quad, folded, tables, diff: diff_table(&grid) })
    }

    pub fn prefactor(&self) -> C64 {
        C64::new(0.0, PREFACTOR_CORRECTION * self.grid.dx_d() / (2.0 * PI).powi(self.grid.d as i32))
    }

    fn check(&self, g: &DensityMatrix) -> Result<()> {
        check_grids(&self.grid, &g.grid)?;
        if g.k != 1 {
            return Err(Error::InvalidArgument("B acts on one-particle density matrices".into()));
        }
        Ok(())
    }

    /// Gain and loss at one midpoint index `s` and relative index `r`.
    pub(crate) fn point(
        &self,
        s: usize,
        r: usize,
        a: &MidForms,
        b: &MidForms,
        te: &mut (TrigEval, TrigEval),
    ) -> (C64, C64) {
        let m = self.grid.points();
        let (ra, rb) = (&a.rel[s * m..(s + 1) * m], &b.rel[s * m..(s + 1) * m]);
        match &self.tables {
            Some(t) => {
                let dr = &self.diff[r * m..(r + 1) * m];
                let kg = &t.gain[r * m..(r + 1) * m];
                let mut gain = ZERO;
                let mut loss = ZERO;
                for e in 0..m {
                    let prod = ra[dr[e] as usize] * rb[e];
                    gain += kg[e] * prod;
                    loss += t.loss[e] * prod;
                }
                let c = self.prefactor();
                (gain * c, loss * c)
            }
            None => {
                let d = self.grid.d;
                let n = self.grid.n;
                let center = flatten(&vec![n / 2; d], n);
                let loss = C64::new(0.0, MAXWELL_LOSS_CONSTANT * self.quad.total_weight()) * ra[r] * rb[center];
                let (va, vb) = (&a.vel[s * m..(s + 1) * m], &b.vel[s * m..(s + 1) * m]);
                let mut ix = vec![0usize; d];
                let mut y = vec![0.0; d];
                lattice_point(&self.grid, r, self.grid.h(), &mut ix, &mut y);
                let mut gain = ZERO;
                for (w, wt) in self.folded.nodes.iter().zip(&self.folded.weights) {
                    let py = p_omega(w, &y);
                    let qy: Vec<f64> = y.iter().zip(&py).map(|(a, b)| a - b).collect();
                    gain += te.0.eval(va, &qy) * te.1.eval(vb, &py) * *wt;
                }
                let s2 = self.grid.dv_d() * self.grid.dv_d();
                (gain * C64::new(0.0, s2), loss)
            }
        }
    }

    fn trig_pair(&self) -> (TrigEval, TrigEval) {
        let g = &self.grid;
        (TrigEval::new(g.n, g.d, g.dv(), 1.0), TrigEval::new(g.n, g.d, g.dv(), 1.0))
    }

    /// B⁺ and B⁻ together.
    pub fn apply(&self, g1: &DensityMatrix, g2: &DensityMatrix) -> Result<GainLoss> {
        let mut out = self.apply_raw(g1, g2)?;
        if !(is_hermitian(g1) && is_hermitian(g2)) {
            let adj = self.apply_raw(&adjoint(g1), &adjoint(g2))?;
            symmetrize_half_box(&mut out.gain, &adj.gain, 0);
            symmetrize_half_box(&mut out.loss, &adj.loss, 0);
        } else {
            let (g, l) = (out.gain.clone(), out.loss.clone());
            symmetrize_half_box(&mut out.gain, &g, 0);
            symmetrize_half_box(&mut out.loss, &l, 0);
        }
        Ok(out)
    }

    fn apply_raw(&self, g1: &DensityMatrix, g2: &DensityMatrix) -> Result<GainLoss> {
        self.check(g1)?;
        self.check(g2)?;
        let a = mid_forms(g1)?;
        let b = mid_forms(g2)?;
        let grid = self.grid;
        let (n, d, m) = (grid.n, grid.d, grid.points());
        let mids = (2 * n).pow(d as u32);
        let rows: Vec<Vec<(usize, C64, C64)>> = (0..mids)
            .into_par_iter()
            .map(|s| {
                let mut sx = vec![0usize; d];
                unflatten(s, 2 * n, &mut sx);
                let mut te = self.trig_pair();
                let mut out = Vec::with_capacity(m / (1 << d));
                let mut rx = vec![0usize; d];
                let mut j = vec![0usize; d];
                let mut jp = vec![0usize; d];
                for r in 0..m {
                    unflatten(r, n, &mut rx);
                    if (0..d).any(|ax| rx[ax] % 2 != sx[ax] % 2) {
                        continue;
                    }
                    for ax in 0..d {
                        let (x, xp) = mid_rel_to_pair(sx[ax], rx[ax], n);
                        j[ax] = x;
                        jp[ax] = xp;
                    }
                    let (gn, ls) = self.point(s, r, &a, &b, &mut te);
                    out.push((flatten(&j, n) * m + flatten(&jp, n), gn, ls));
                }
                out
            })
            .collect();
        let mut gain = vec![ZERO; m * m];
        let mut loss = vec![ZERO; m * m];
        for row in rows {
            for (idx, gn, ls) in row {
                gain[idx] = gn;
                loss[idx] = ls;
            }
        }
        let shape = DensityMatrix::shape_for(&grid, 1);
        let mk = |v: Vec<C64>| DensityMatrix {
            grid,
            k: 1,
            data: ArrayD::from_shape_vec(IxDyn(&shape), v).unwrap(),
            hermitian: false,
            symmetric: true,
        };
        Ok(GainLoss { gain: mk(gain), loss: mk(loss) })
    }

    pub fn b_gain(&self, g1: &DensityMatrix, g2: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(self.apply(g1, g2)?.gain)
    }

    pub fn b_loss(&self, g1: &DensityMatrix, g2: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(self.apply(g1, g2)?.loss)
    }

    /// B = B⁺ − B⁻.
    pub fn b_full(&self, g1: &DensityMatrix, g2: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(self.apply(g1, g2)?.full())
    }
}

/// Velocity-space collision operator on the lattice (the oracle for B).
///
/// Off-lattice post-collisional velocities are evaluated through the
/// trigonometric interpolant of f; in Fourier variables this turns the
/// `(v₂, ω)` sum into `Q⁺(v) = Σ_{k,l} c_k c_l e^{i(y_k + y_l)·v} W(k, l)`
/// with `W(k, l) = Σ_ω Δω b̂^ω(P_ω y_k + (I − P_ω) y_l)`.
pub struct ClassicalCollision {
    pub grid: GridSpec,
    pub model: KernelModel,
    wgain: Vec<C64>,
    wloss: Vec<C64>,
    sum_idx: Vec<u32>,
    to_coef: Vec<C64>,
    from_coef: Vec<C64>,
}

pub struct ClassicalGainLoss {
    pub gain: PhaseField,
    pub loss: PhaseField,
}

impl ClassicalGainLoss {
    pub fn full(&self) -> PhaseField {
        let mut q = self.gain.clone();
        q.data.zip_mut_with(&self.loss.data, |a, b| *a -= *b);
        q
    }
}

impl ClassicalCollision {
    pub fn new(grid: GridSpec, model: KernelModel, quad: &SphereQuadrature) -> Result<Self> {
        check_truncation(&model, &grid)?;
        let (n, d, m) = (grid.n, grid.d, grid.points());
        let wgain = pair_table(&grid, &model, quad, |w, yk, yl| {
            let pk = p_omega(w, yk);
            let pl = p_omega(w, yl);
            (0..yk.len()).map(|a| pk[a] + yl[a] - pl[a]).collect()
        });
        let wloss = loss_table(&grid, &model, quad)?;
        let mut sum_idx = Vec::with_capacity(m * m);
        let (mut ki, mut li, mut si) = (vec![0usize; d], vec![0usize; d], vec![0usize; d]);
        for k in 0..m {
            unflatten(k, n, &mut ki);
            for l in 0..m {
                unflatten(l, n, &mut li);
                for a in 0..d {
                    si[a] = (ki[a] + li[a] + n / 2) % n;
                }
                sum_idx.push(flatten(&si, n) as u32);
            }
        }
        // e^{i y_k · v_q} = e^{2πi k·q / n} with centered k, q
        let mut from_coef = Vec::with_capacity(m * m);
        let mut qi = vec![0usize; d];
        for q in 0..m {
            unflatten(q, n, &mut qi);
            for k in 0..m {
                unflatten(k, n, &mut ki);
                let ph: f64 = (0..d)
                    .map(|a| signed_center(ki[a], n) * signed_center(qi[a], n))
                    .sum::<f64>()
                    * 2.0
                    * PI
                    / n as f64;
                from_coef.push(C64::from_polar(1.0, ph));
            }
        }
        let to_coef: Vec<C64> = {
            let mut t = vec![ZERO; m * m];
            for q in 0..m {
                for k in 0..m {
                    t[k * m + q] = from_coef[q * m + k].conj() / m as f64;
                }
            }
            t
        };
        Ok(ClassicalCollision { grid, model, wgain, wloss, sum_idx, to_coef, from_coef })
    }

    pub fn apply(&self, f: &PhaseField) -> Result<ClassicalGainLoss> {
        check_grids(&self.grid, &f.grid)?;
        let m = self.grid.points();
        let data = f.data.as_standard_layout();
        let flat = data.as_slice().unwrap();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
            .into_par_iter()
            .map(|x| {
                let fr = &flat[x * m..(x + 1) * m];
                let c: Vec<C64> = (0..m)
                    .map(|k| self.to_coef[k * m..(k + 1) * m].iter().zip(fr).map(|(a, b)| a * b).sum())
                    .collect();
                let mut acc = vec![ZERO; m];
                for k in 0..m {
                    let ck = c[k];
                    let w = &self.wgain[k * m..(k + 1) * m];
                    let si = &self.sum_idx[k * m..(k + 1) * m];
                    for l in 0..m {
                        acc[si[l] as usize] += ck * c[l] * w[l];
                    }
                }
                let cl: Vec<C64> = c.iter().zip(&self.wloss).map(|(a, b)| a * b).collect();
                let mut gain = vec![0.0; m];
                let mut loss = vec![0.0; m];
                for q in 0..m {
                    let e = &self.from_coef[q * m..(q + 1) * m];
                    let gq: C64 = e.iter().zip(&acc).map(|(a, b)| a * b).sum();
                    let lq: C64 = e.iter().zip(&cl).map(|(a, b)| a * b).sum();
                    gain[q] = gq.re;
                    loss[q] = (fr[q] * lq).re;
                }
                (gain, loss)
            })
            .collect();
        let shape = vec![self.grid.n; 2 * self.grid.d];
        let mut gd = Vec::with_capacity(m * m);
        let mut ld = Vec::with_capacity(m * m);
        for (g, l) in rows {
            gd.extend(g.into_iter().map(|x| C64::new(x, 0.0)));
            ld.extend(l.into_iter().map(|x| C64::new(x, 0.0)));
        }
        let mk = |v: Vec<C64>| PhaseField {
            grid: self.grid,
            data: ArrayD::from_shape_vec(IxDyn(&shape), v).unwrap(),
            real: true,
        };
        Ok(ClassicalGainLoss { gain: mk(gd), loss: mk(ld) })
    }
}

/// Q(f, f) on the lattice.
pub fn q_classical(f: &PhaseField, model: &KernelModel, quad: &SphereQuadrature) -> Result<PhaseField> {
    if !f.real {
        return Err(Error::InvalidArgument("q_classical needs a real field".into()));
    }
    Ok(ClassicalCollision::new(f.grid, *model, quad)?.apply(f)?.full())
}

/// State handed to a hierarchy operator.
#[derive(Clone, Copy, Debug)]
pub enum HierarchyInput<'a> {
    Full(&'a DensityMatrix),
    Lazy(&'a LazyTensorState),
}

impl HierarchyInput<'_> {
    fn k(&self) -> usize {
        match self {
            HierarchyInput::Full(g) => g.k,
            HierarchyInput::Lazy(l) => l.k(),
        }
    }
}

impl CollisionOperator {
    /// B_{i,k+1} = B⁺_{i,k+1} − B⁻_{i,k+1} acting on a (k+1)-particle state, `1 ≤ i ≤ k`.
    ///
    /// Particle `k+1` is contracted against particle `i` with the same argument
    /// pattern as the one-particle B; all other particles are spectators.
    pub fn b_hierarchy(&self, i: usize, state: HierarchyInput<'_>) -> Result<DensityMatrix> {
        match state {
            HierarchyInput::Full(g) => self.hierarchy_full(i, g),
            HierarchyInput::Lazy(l) => self.b_hierarchy_lazy(i, l)?.materialize(),
        }
    }

    /// Lazy variant: the result is evaluated pointwise on demand.
    pub fn b_hierarchy_lazy(&self, i: usize, state: &LazyTensorState) -> Result<LazyTensorState> {
        let kp1 = state.k();
        check_grids(&self.grid, &state.grid())?;
        if kp1 < 2 || i == 0 || i >= kp1 {
            return Err(Error::InvalidArgument(format!("hierarchy index i = {i} out of range for k + 1 = {kp1}")));
        }
        let k = kp1 - 1;
        let d = self.grid.d;
        match state {
            LazyTensorState::Factorized(fs) => {
                let contracted = self.b_full(&fs[i - 1], &fs[k])?;
                let spectators: Vec<DensityMatrix> = fs[..k].to_vec();
                let f = move |xs: &[usize], xps: &[usize]| -> C64 {
                    let mut v = contracted.get(&xs[(i - 1) * d..i * d], &xps[(i - 1) * d..i * d]);
                    for (p, g) in spectators.iter().enumerate() {
                        if p != i - 1 {
                            v *= g.get(&xs[p * d..(p + 1) * d], &xps[p * d..(p + 1) * d]);
                        }
                    }
                    v
                };
                Ok(LazyTensorState::Kernel { grid: self.grid, k, f: std::sync::Arc::new(f) })
            }
            LazyTensorState::Kernel { .. } => {
                let full = self.hierarchy_full(i, &state.materialize()?)?;
                let f = move |xs: &[usize], xps: &[usize]| full.get(xs, xps);
                Ok(LazyTensorState::Kernel { grid: self.grid, k, f: std::sync::Arc::new(f) })
            }
        }
    }

    /// Σ_{i=1}^{k} B_{i,k+1}.
    pub fn b_hierarchy_sum(&self, state: HierarchyInput<'_>) -> Result<DensityMatrix> {
        let k = state.k() - 1;
        let mut acc = self.b_hierarchy(1, state)?;
        for i in 2..=k {
            let t = self.b_hierarchy(i, state)?;
            acc.data += &t.data;
        }
        acc.symmetric = false;
        Ok(acc)
    }

    fn hierarchy_full(&self, i: usize, g: &DensityMatrix) -> Result<DensityMatrix> {
        let mut out = self.hierarchy_raw(i, g)?;
        let partner = if is_hermitian(g) { out.clone() } else { self.hierarchy_raw(i, &adjoint(g))? };
        symmetrize_half_box(&mut out, &partner, i - 1);
        Ok(out)
    }

    fn hierarchy_raw(&self, i: usize, g: &DensityMatrix) -> Result<DensityMatrix> {
        check_grids(&self.grid, &g.grid)?;
        let kp = g.k;
        if kp < 2 || i == 0 || i >= kp {
            return Err(Error::InvalidArgument(format!("hierarchy index i = {i} out of range for k + 1 = {kp}")));
        }
        let k = kp - 1;
        let grid = self.grid;
        let (n, d, m) = (grid.n, grid.d, grid.points());
        let work = (2 * n).pow(2 * d as u32) * m.pow(2 * (kp as u32 - 2) + 2);
        if work > crate::grid::MATERIALIZE_LIMIT {
            return Err(Error::MemoryGuard(format!("hierarchy midpoint form needs {work} entries")));
        }
        let ip = i - 1;
        let last = k;
        let pm = crate::wigner::PairMap::new(&grid);
        let xa = |p: usize, a: usize| p * d + a;
        let xpa = |p: usize, a: usize| kp * d + p * d + a;
        let mut hv = g.data.clone();
        for &p in &[ip, last] {
            for a in 0..d {
                hv = crate::fft::map_pair(&hv, xa(p, a), xpa(p, a), 2 * n, n, |s, o| pm.forward_refine(s, o));
            }
        }
        let vaxes: Vec<usize> = (0..d).map(|a| xpa(ip, a)).chain((0..d).map(|a| xpa(last, a))).collect();
        let hr = velocity_to_relative(&hv, &grid, &vaxes);
        let hv = hv.as_standard_layout().to_owned();
        let hr = hr.as_standard_layout().to_owned();
        let strides: Vec<usize> = hr.strides().iter().map(|&s| s as usize).collect();
        let (hv, hr) = (hv.as_slice().unwrap(), hr.as_slice().unwrap());

        let kd = k * d;
        let total = m.pow(2 * k as u32);
        let center = flatten(&vec![n / 2; d], n);
        let c = self.prefactor();
        let s2 = grid.dv_d() * grid.dv_d();
        let out: Vec<C64> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut ix = vec![0usize; 2 * kd];
                unflatten(flat, n, &mut ix);
                // base offset from spectators and the shared midpoint
                let mut base = 0usize;
                for p in 0..k {
                    if p == ip {
                        continue;
                    }
                    for a in 0..d {
                        base += ix[p * d + a] * strides[xa(p, a)] + ix[kd + p * d + a] * strides[xpa(p, a)];
                    }
                }
                let mut rx = vec![0usize; d];
                for a in 0..d {
                    let (s, r) = crate::wigner::pair_to_mid_rel(ix[ip * d + a], ix[kd + ip * d + a], n);
                    base += s * (strides[xa(ip, a)] + strides[xa(last, a)]);
                    rx[a] = r;
                }
                let r = flatten(&rx, n);
                let mut ex = vec![0usize; d];
                let rel_off = |rel1: &[usize], rel2: &[usize]| -> usize {
                    (0..d).map(|a| rel1[a] * strides[xpa(ip, a)] + rel2[a] * strides[xpa(last, a)]).sum()
                };
                match &self.tables {
                    Some(t) => {
                        let dr = &self.diff[r * m..(r + 1) * m];
                        let kg = &t.gain[r * m..(r + 1) * m];
                        let mut acc = ZERO;
                        let mut dx = vec![0usize; d];
                        for e in 0..m {
                            unflatten(e, n, &mut ex);
                            unflatten(dr[e] as usize, n, &mut dx);
                            let val = hr[base + rel_off(&dx, &ex)];
                            acc += (kg[e] - t.loss[e]) * val;
                        }
                        acc * c
                    }
                    None => {
                        let mut cx = vec![0usize; d];
                        unflatten(center, n, &mut cx);
                        let loss = C64::new(0.0, MAXWELL_LOSS_CONSTANT * self.quad.total_weight())
                            * hr[base + rel_off(&rx, &cx)];
                        // gather the (q_i, q_{k+1}) velocity block
                        let mut block = Vec::with_capacity(m * m);
                        let mut q1 = vec![0usize; d];
                        let mut q2 = vec![0usize; d];
                        for a1 in 0..m {
                            unflatten(a1, n, &mut q1);
                            for a2 in 0..m {
                                unflatten(a2, n, &mut q2);
                                block.push(hv[base + rel_off(&q1, &q2)]);
                            }
                        }
                        let mut te = TrigEval::new(n, 2 * d, grid.dv(), 1.0);
                        let mut y = vec![0.0; d];
                        let mut tmp = vec![0usize; d];
                        lattice_point(&grid, r, grid.h(), &mut tmp, &mut y);
                        let mut gain = ZERO;
                        for (w, wt) in self.folded.nodes.iter().zip(&self.folded.weights) {
                            let py = p_omega(w, &y);
                            let z: Vec<f64> = y.iter().zip(&py).map(|(a, b)| a - b).chain(py.iter().copied()).collect();
                            gain += te.eval(&block, &z) * *wt;
                        }
                        gain * C64::new(0.0, s2) - loss
                    }
                }
            })
            .collect();
        let data = ArrayD::from_shape_vec(IxDyn(&DensityMatrix::shape_for(&grid, k)), out).unwrap();
        Ok(DensityMatrix { grid, k, data, hermitian: false, symmetric: false })
    }
}
