//! Collision kernels, their directional Fourier tables and the collision geometry.

use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fft::{fft_axis, Direction};
use crate::grid::{unflatten, GridSpec};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind {
    Maxwell,
    /// `b = |u|^A` with `0 < A < 1`.
    VariableHardSphere(f64),
    HardSphere,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelModel {
    pub kind: KernelKind,
    pub a: f64,
    /// Truncation radius used for Fourier tabulation.
    pub u_max: f64,
}

impl KernelModel {
    pub fn maxwell(u_max: f64) -> Self {
        KernelModel { kind: KernelKind::Maxwell, a: 0.0, u_max }
    }

    pub fn hard_sphere(u_max: f64) -> Self {
        KernelModel { kind: KernelKind::HardSphere, a: 1.0, u_max }
    }

    pub fn variable_hard_sphere(a: f64, u_max: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::InvalidArgument(format!("variable hard sphere needs 0 < A < 1, got {a}")));
        }
        Ok(KernelModel { kind: KernelKind::VariableHardSphere(a), a, u_max })
    }

    /// Truncation defaults to the velocity box half-width.
    pub fn for_grid(kind: KernelKind, grid: &GridSpec) -> Result<Self> {
        match kind {
            KernelKind::Maxwell => Ok(Self::maxwell(grid.lv)),
            KernelKind::HardSphere => Ok(Self::hard_sphere(grid.lv)),
            KernelKind::VariableHardSphere(a) => Self::variable_hard_sphere(a, grid.lv),
        }
    }

    pub fn is_maxwell(&self) -> bool {
        matches!(self.kind, KernelKind::Maxwell)
    }
}

/// b(|u|, ω·u/|u|).
pub fn b_eval(model: &KernelModel, u: &[f64], omega: &[f64]) -> f64 {
    match model.kind {
        KernelKind::Maxwell => 1.0,
        KernelKind::HardSphere => dot(omega, u).max(0.0),
        KernelKind::VariableHardSphere(a) => norm(u).powf(a),
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// P_ω x = (ω·x) ω.
pub fn p_omega(omega: &[f64], x: &[f64]) -> Vec<f64> {
    let s = dot(omega, x);
    omega.iter().map(|w| s * w).collect()
}

/// R_ω x = x − 2 (ω·x) ω.
pub fn r_omega(omega: &[f64], x: &[f64]) -> Vec<f64> {
    let s = dot(omega, x);
    x.iter().zip(omega).map(|(xi, w)| xi - 2.0 * s * w).collect()
}

/// Post-collisional pair: `v* = v + P_ω(v2 − v)`, `v2* = v2 − P_ω(v2 − v)`.
pub fn collide(v: &[f64], v2: &[f64], omega: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let du: Vec<f64> = v2.iter().zip(v).map(|(a, b)| a - b).collect();
    let p = p_omega(omega, &du);
    (
        v.iter().zip(&p).map(|(a, b)| a + b).collect(),
        v2.iter().zip(&p).map(|(a, b)| a - b).collect(),
    )
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if d == 1 {
        return vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }];
    }
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = norm(&v);
        if r > 1e-3 && r <= 1.0 {
            return v.iter().map(|x| x / r).collect();
        }
    }
}

/// Sampled sup of `b / (1 + |u|^A)` over `|u| ≤ u_max` and ω on the sphere.
///
/// `frame` rotates the sampled vectors (identity when `None`); the result is
/// frame independent up to sampling error.
pub fn linf_a_norm(model: &KernelModel, d: usize, sample_count: usize, seed: u64, frame: Option<&[Vec<f64>]>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rot = |x: Vec<f64>| -> Vec<f64> {
        match frame {
            None => x,
            Some(m) => m.iter().map(|row| dot(row, &x)).collect(),
        }
    };
    let mut sup: f64 = 0.0;
    for _ in 0..sample_count {
        let dir = random_unit(d, &mut rng);
        let rad = model.u_max * rng.gen::<f64>().powf(1.0 / d as f64);
        let u = rot(dir.iter().map(|x| x * rad).collect());
        let w = rot(random_unit(d, &mut rng));
        let val = b_eval(model, &u, &w) / (1.0 + norm(&u).powf(model.a));
        sup = sup.max(val);
    }
    sup
}

/// Quadrature rule on S^{d−1}.
#[derive(Clone, Debug)]
pub struct SphereQuadrature {
    pub d: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    /// d = 1: {±1}; d = 2: `n_omega` equispaced angles; d = 3: Gauss–Legendre in
    /// cos θ (`n_omega / 2` nodes) times `n_omega` uniform azimuths.
    pub fn new(d: usize, n_omega: usize) -> Result<Self> {
        match d {
            1 => Ok(SphereQuadrature { d, nodes: vec![vec![1.0], vec![-1.0]], weights: vec![1.0, 1.0] }),
            2 => {
                if n_omega < 2 || n_omega % 2 != 0 {
                    return Err(Error::InvalidArgument(format!("n_omega = {n_omega} must be even and >= 2")));
                }
                let w = 2.0 * PI / n_omega as f64;
                let nodes = (0..n_omega)
                    .map(|j| {
                        let t = 2.0 * PI * j as f64 / n_omega as f64;
                        vec![t.cos(), t.sin()]
                    })
                    .collect();
                Ok(SphereQuadrature { d, nodes, weights: vec![w; n_omega] })
            }
            3 => {
                if n_omega < 2 || n_omega % 2 != 0 {
                    return Err(Error::InvalidArgument(format!("n_omega = {n_omega} must be even and >= 2")));
                }
                let (ct, wt) = gauss_legendre(n_omega / 2);
                let mut nodes = Vec::new();
                let mut weights = Vec::new();
                for (c, w) in ct.iter().zip(&wt) {
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    for j in 0..n_omega {
                        let p = 2.0 * PI * j as f64 / n_omega as f64;
                        nodes.push(vec![s * p.cos(), s * p.sin(), *c]);
                        weights.push(w * 2.0 * PI / n_omega as f64);
                    }
                }
                Ok(SphereQuadrature { d, nodes, weights })
            }
            _ => Err(Error::InvalidArgument(format!("no sphere rule for d = {d}"))),
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Antipodal pairing: `(i, Some(j))` with `ω_j = −ω_i`, or `(i, None)`.
    pub fn antipodal_pairs(&self) -> Vec<(usize, Option<usize>)> {
        let mut used = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for i in 0..self.nodes.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let neg: Vec<f64> = self.nodes[i].iter().map(|x| -x).collect();
            let j = (0..self.nodes.len())
                .find(|&j| !used[j] && self.nodes[j].iter().zip(&neg).all(|(a, b)| (a - b).abs() < 1e-12));
            if let Some(j) = j {
                used[j] = true;
            }
            out.push((i, j));
        }
        out
    }

    /// Folds antipodal node pairs (for integrands even in ω).
    pub fn folded(&self) -> SphereQuadrature {
        let mut used = vec![false; self.nodes.len()];
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for i in 0..self.nodes.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            let mut w = self.weights[i];
            let neg: Vec<f64> = self.nodes[i].iter().map(|x| -x).collect();
            if let Some(j) = (0..self.nodes.len()).find(|&j| {
                !used[j] && self.nodes[j].iter().zip(&neg).all(|(a, b)| (a - b).abs() < 1e-12)
            }) {
                used[j] = true;
                w += self.weights[j];
            }
            nodes.push(self.nodes[i].clone());
            weights.push(w);
        }
        SphereQuadrature { d: self.d, nodes, weights }
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if m == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Truncated kernel sampled on the velocity lattice (`|u| < u_max`), centered index order.
pub fn b_lattice(model: &KernelModel, omega: &[f64], grid: &GridSpec) -> ArrayD<f64> {
    let d = grid.d;
    let mut ix = vec![0usize; d];
    let mut u = vec![0.0; d];
    let cut = model.u_max * (1.0 - 1e-12);
    let vals: Vec<f64> = (0..grid.points())
        .map(|flat| {
            unflatten(flat, grid.n, &mut ix);
            for a in 0..d {
                u[a] = grid.v(ix[a]);
            }
            if norm(&u) < cut {
                b_eval(model, &u, omega)
            } else {
                0.0
            }
        })
        .collect();
    ArrayD::from_shape_vec(IxDyn(&vec![grid.n; d]), vals).unwrap()
}

/// Directional Fourier transform of the kernel.
#[derive(Clone, Debug)]
pub enum BHat {
    /// `b̂ = weight · δ(ξ)` (Maxwell); the δ is collapsed analytically by callers.
    Delta { weight: f64 },
    /// Values at `ξ = y_r` (centered index `r`), axes `(r_1..r_d)`.
    Table(ArrayD<C64>),
}

/// DFT table of the truncated lattice kernel: `Σ_u b(u, ω) e^{−iu·y_r} Δv^d`.
pub fn b_hat_lattice(model: &KernelModel, omega: &[f64], grid: &GridSpec) -> Result<ArrayD<C64>> {
    if model.u_max > grid.lv * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "u_max = {} exceeds the velocity box L_v = {}",
            model.u_max, grid.lv
        )));
    }
    let b = b_lattice(model, omega, grid);
    let mut t = b.mapv(|x| C64::new(x, 0.0));
    for ax in 0..grid.d {
        alternate(&mut t, ax);
        fft_axis(&mut t, ax, Direction::Forward);
        alternate(&mut t, ax);
    }
    let s = grid.dv_d();
    t.mapv_inplace(|z| z * s);
    Ok(t)
}

/// Inverse of [`b_hat_lattice`].
pub fn b_from_table(table: &ArrayD<C64>, grid: &GridSpec) -> ArrayD<C64> {
    let mut t = table.clone();
    for ax in 0..grid.d {
        alternate(&mut t, ax);
        fft_axis(&mut t, ax, Direction::Inverse);
        alternate(&mut t, ax);
    }
    let s = 1.0 / (grid.points() as f64 * grid.dv_d());
    t.mapv_inplace(|z| z * s);
    t
}

pub fn b_hat_omega(model: &KernelModel, omega: &[f64], grid: &GridSpec) -> Result<BHat> {
    if model.is_maxwell() {
        if model.u_max > grid.lv * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument("u_max exceeds the velocity box".into()));
        }
        return Ok(BHat::Delta { weight: (2.0 * PI).powi(grid.d as i32) });
    }
    Ok(BHat::Table(b_hat_lattice(model, omega, grid)?))
}

fn alternate(a: &mut ArrayD<C64>, axis: usize) {
    for (ix, z) in a.indexed_iter_mut() {
        if ix[axis] % 2 == 1 {
            *z = -*z;
        }
    }
}
