//! Periodic phase-space lattice, field containers and the unitary DFT.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fft::{self, Direction};

pub const REAL_TOL: f64 = 1e-12;

/// Lattice description shared by every field.
///
/// Positions: `x_j = -L_x + j h`, `h = 2 L_x / n`, `j = 0..n`.
/// Velocities: `v_q = q Δv`, `Δv = π / L_x`, `q = -n/2..n/2`, stored at index `q + n/2`.
/// The velocity lattice is the Fourier dual of the relative coordinate
/// `y_r = r h`, so `L_x L_v = n π / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub lx: f64,
    pub lv: f64,
}

pub fn make_grid(d: usize, n: usize, lx: f64, lv: Option<f64>) -> Result<GridSpec> {
    if d == 0 {
        return Err(Error::InvalidGrid("d must be >= 1".into()));
    }
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::InvalidGrid(format!("n = {n} must be a power of two >= 4")));
    }
    if !(lx > 0.0) || !lx.is_finite() {
        return Err(Error::InvalidGrid(format!("L_x = {lx} must be positive")));
    }
    let matched = n as f64 * PI / (2.0 * lx);
    let lv = match lv {
        None => matched,
        Some(lv) => {
            if !(lv > 0.0) {
                return Err(Error::InvalidGrid(format!("L_v = {lv} must be positive")));
            }
            if ((lv - matched) / matched).abs() > 1e-10 {
                return Err(Error::InvalidGrid(format!(
                    "L_v = {lv} is not the dual of L_x = {lx} (expected {matched})"
                )));
            }
            matched
        }
    };
    Ok(GridSpec { d, n, lx, lv })
}

impl GridSpec {
    pub fn new(d: usize, n: usize, lx: f64) -> Result<Self> {
        make_grid(d, n, lx, None)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.lx / self.n as f64
    }

    pub fn dv(&self) -> f64 {
        PI / self.lx
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.lx + j as f64 * self.h()
    }

    pub fn v(&self, qi: usize) -> f64 {
        (qi as f64 - (self.n / 2) as f64) * self.dv()
    }

    /// Relative coordinate at centered index `ri`.
    pub fn y(&self, ri: usize) -> f64 {
        (ri as f64 - (self.n / 2) as f64) * self.h()
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    pub fn v_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|q| self.v(q)).collect()
    }

    /// Angular frequency of FFT-ordered index `k` on the position axis.
    pub fn xi(&self, k: usize) -> f64 {
        signed(k, self.n) as f64 * PI / self.lx
    }

    /// Per-particle node count `n^d`.
    pub fn points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn dx_d(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn dv_d(&self) -> f64 {
        self.dv().powi(self.d as i32)
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Signed representative of an FFT-ordered index (`n/2` maps to `-n/2`).
pub fn signed(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

pub fn check_grids(a: &GridSpec, b: &GridSpec) -> Result<()> {
    a.check_same(b)
}

/// Row-major flat index → multi-index with all extents `n`.
pub fn unflatten(mut idx: usize, n: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = idx % n;
        idx /= n;
    }
}

pub fn flatten(ix: &[usize], n: usize) -> usize {
    ix.iter().fold(0, |acc, &i| acc * n + i)
}

pub fn l2(a: &ArrayD<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(a: &ArrayD<C64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

/// f(x, v) with axes `(x_1..x_d, v_1..v_d)`.
#[derive(Clone, Debug)]
pub struct PhaseField {
    pub grid: GridSpec,
    pub data: ArrayD<C64>,
    pub real: bool,
}

impl PhaseField {
    pub fn zeros(grid: GridSpec) -> Self {
        PhaseField { grid, data: ArrayD::zeros(IxDyn(&vec![grid.n; 2 * grid.d])), real: true }
    }

    pub fn from_data(grid: GridSpec, data: ArrayD<C64>) -> Result<Self> {
        if data.shape() != vec![grid.n; 2 * grid.d].as_slice() {
            return Err(Error::Shape(format!("phase field shape {:?}", data.shape())));
        }
        let real = is_real(&data);
        Ok(PhaseField { grid, data, real })
    }

    /// Samples `f(x, v)` at every node.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64], &[f64]) -> f64) -> Self {
        let d = grid.d;
        let mut ix = vec![0usize; 2 * d];
        let mut xs = vec![0.0; d];
        let mut vs = vec![0.0; d];
        let total = grid.points() * grid.points();
        let mut data = Vec::with_capacity(total);
        for flat in 0..total {
            unflatten(flat, grid.n, &mut ix);
            for a in 0..d {
                xs[a] = grid.x(ix[a]);
                vs[a] = grid.v(ix[d + a]);
            }
            data.push(C64::new(f(&xs, &vs), 0.0));
        }
        PhaseField { grid, data: ArrayD::from_shape_vec(IxDyn(&vec![grid.n; 2 * d]), data).unwrap(), real: true }
    }

    pub fn norm_l2(&self) -> f64 {
        l2(&self.data)
    }

    pub fn scaled(&self, s: f64) -> Self {
        PhaseField { grid: self.grid, data: self.data.mapv(|z| z * s), real: self.real }
    }
}

pub fn is_real(a: &ArrayD<C64>) -> bool {
    let m = max_abs(a);
    a.iter().all(|z| z.im.abs() <= REAL_TOL * m.max(f64::MIN_POSITIVE))
}

/// γ^{(k)}(X_k, X_k′) with axes `(x_1.., x_k, x′_1.., x′_k)`, each particle owning `d` axes.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub grid: GridSpec,
    pub k: usize,
    pub data: ArrayD<C64>,
    pub hermitian: bool,
    pub symmetric: bool,
}

impl DensityMatrix {
    pub fn shape_for(grid: &GridSpec, k: usize) -> Vec<usize> {
        vec![grid.n; 2 * k * grid.d]
    }

    pub fn zeros(grid: GridSpec, k: usize) -> Self {
        DensityMatrix {
            grid,
            k,
            data: ArrayD::zeros(IxDyn(&Self::shape_for(&grid, k))),
            hermitian: true,
            symmetric: true,
        }
    }

    pub fn from_data(grid: GridSpec, k: usize, data: ArrayD<C64>) -> Result<Self> {
        if data.shape() != Self::shape_for(&grid, k).as_slice() {
            return Err(Error::Shape(format!("density matrix shape {:?} for k = {k}", data.shape())));
        }
        let mut g = DensityMatrix { grid, k, data, hermitian: false, symmetric: false };
        g.hermitian = crate::wigner::hermitian_check(&g) <= REAL_TOL * max_abs(&g.data).max(f64::MIN_POSITIVE);
        g.symmetric = k == 1;
        Ok(g)
    }

    /// Samples a k = 1 kernel γ(x, x′).
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64], &[f64]) -> C64) -> Self {
        let d = grid.d;
        let mut ix = vec![0usize; 2 * d];
        let mut xs = vec![0.0; d];
        let mut xps = vec![0.0; d];
        let total = grid.points() * grid.points();
        let mut data = Vec::with_capacity(total);
        for flat in 0..total {
            unflatten(flat, grid.n, &mut ix);
            for a in 0..d {
                xs[a] = grid.x(ix[a]);
                xps[a] = grid.x(ix[d + a]);
            }
            data.push(f(&xs, &xps));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&vec![grid.n; 2 * d]), data).unwrap();
        DensityMatrix::from_data(grid, 1, arr).unwrap()
    }

    /// Pure state φ ⊗ φ̄ from a wavefunction with `d` axes.
    pub fn pure(grid: GridSpec, phi: &ArrayD<C64>) -> Result<Self> {
        if phi.shape() != vec![grid.n; grid.d].as_slice() {
            return Err(Error::Shape("wavefunction shape".into()));
        }
        let m = grid.points();
        let p: Vec<C64> = phi.iter().copied().collect();
        let mut data = Vec::with_capacity(m * m);
        for a in &p {
            for b in &p {
                data.push(a * b.conj());
            }
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&Self::shape_for(&grid, 1)), data).unwrap();
        Ok(DensityMatrix { grid, k: 1, data: arr, hermitian: true, symmetric: true })
    }

    /// `self ⊗ other`, particles of `self` first.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<Self> {
        check_grids(&self.grid, &other.grid)?;
        let (ka, kb) = (self.k, other.k);
        let m = self.grid.points();
        let (ma, mb) = (m.pow(ka as u32), m.pow(kb as u32));
        let a = self.data.as_standard_layout();
        let b = other.data.as_standard_layout();
        let (a, b) = (a.as_slice().unwrap(), b.as_slice().unwrap());
        let mut out = vec![C64::new(0.0, 0.0); ma * ma * mb * mb];
        // index layout: (Xa, Xb, Xa', Xb')
        for xa in 0..ma {
            for xb in 0..mb {
                for xa2 in 0..ma {
                    let av = a[xa * ma + xa2];
                    let base = ((xa * mb + xb) * ma + xa2) * mb;
                    let brow = &b[xb * mb..(xb + 1) * mb];
                    for (o, bv) in out[base..base + mb].iter_mut().zip(brow) {
                        *o = av * bv;
                    }
                }
            }
        }
        let k = ka + kb;
        let data = ArrayD::from_shape_vec(IxDyn(&Self::shape_for(&self.grid, k)), out).unwrap();
        Ok(DensityMatrix {
            grid: self.grid,
            k,
            data,
            hermitian: self.hermitian && other.hermitian,
            symmetric: false,
        })
    }

    /// γ^{⊗k}.
    pub fn tensor_power(&self, k: usize) -> Result<Self> {
        if k == 0 || self.k != 1 {
            return Err(Error::InvalidArgument("tensor_power needs k >= 1 and a one-particle state".into()));
        }
        let mut out = self.clone();
        for _ in 1..k {
            out = out.tensor(self)?;
        }
        out.symmetric = true;
        Ok(out)
    }

    /// Applies the same permutation to the particle slots of X and X′.
    pub fn permute_particles(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        let d = self.grid.d;
        let mut axes = Vec::with_capacity(2 * self.k * d);
        for side in 0..2 {
            for &p in perm {
                for a in 0..d {
                    axes.push(side * self.k * d + p * d + a);
                }
            }
        }
        let data = self.data.view().permuted_axes(IxDyn(&axes)).as_standard_layout().to_owned();
        Ok(DensityMatrix { data, ..self.clone() })
    }

    pub fn norm_l2(&self) -> f64 {
        l2(&self.data)
    }

    pub fn get(&self, xs: &[usize], xps: &[usize]) -> C64 {
        let mut ix = Vec::with_capacity(xs.len() + xps.len());
        ix.extend_from_slice(xs);
        ix.extend_from_slice(xps);
        self.data[IxDyn(&ix)]
    }

    pub fn axpy(&self, a: C64, other: &DensityMatrix) -> DensityMatrix {
        let mut out = self.clone();
        out.data.zip_mut_with(&other.data, |x, y| *x += a * y);
        out.hermitian = self.hermitian && other.hermitian && a.im == 0.0;
        out
    }

    pub fn scale(&self, a: C64) -> DensityMatrix {
        let mut out = self.clone();
        out.data.mapv_inplace(|x| x * a);
        out.hermitian = self.hermitian && a.im == 0.0;
        out
    }
}

/// γ̂ on the dual lattice, FFT index order on every axis.
#[derive(Clone, Debug)]
pub struct SpectralField {
    pub grid: GridSpec,
    pub k: usize,
    pub data: ArrayD<C64>,
}

/// Unitary DFT of an arbitrary field array along `axes`.
pub fn dft(data: &ArrayD<C64>, axes: &[usize], dir: Direction) -> Result<ArrayD<C64>> {
    for &ax in axes {
        if ax >= data.ndim() {
            return Err(Error::AxisOutOfRange { axis: ax, ndim: data.ndim() });
        }
    }
    let mut out = data.to_owned();
    fft::unitary_dft(&mut out, axes, dir);
    Ok(out)
}

pub fn to_spectral(g: &DensityMatrix) -> SpectralField {
    let axes: Vec<usize> = (0..g.data.ndim()).collect();
    let data = dft(&g.data, &axes, Direction::Forward).unwrap();
    SpectralField { grid: g.grid, k: g.k, data }
}

pub fn from_spectral(s: &SpectralField) -> DensityMatrix {
    let axes: Vec<usize> = (0..s.data.ndim()).collect();
    let data = dft(&s.data, &axes, Direction::Inverse).unwrap();
    DensityMatrix { grid: s.grid, k: s.k, data, hermitian: false, symmetric: false }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
    /// Largest |imaginary part| encountered (non-zero only for complex input).
    pub imag_residual: f64,
}

/// Trapezoidal (periodic) quadrature of mass, momentum and `∫|v|² f`.
pub fn moments(f: &PhaseField) -> Moments {
    let g = &f.grid;
    let d = g.d;
    let w = g.dx_d() * g.dv_d();
    let mut ix = vec![0usize; 2 * d];
    let mut mass = 0.0;
    let mut mom = vec![0.0; d];
    let mut energy = 0.0;
    let mut imag: f64 = 0.0;
    for (flat, z) in f.data.as_standard_layout().iter().enumerate() {
        unflatten(flat, g.n, &mut ix);
        imag = imag.max(z.im.abs());
        let val = z.re * w;
        mass += val;
        let mut v2 = 0.0;
        for a in 0..d {
            let va = g.v(ix[d + a]);
            mom[a] += va * val;
            v2 += va * va;
        }
        energy += v2 * val;
    }
    Moments { mass, momentum: mom, energy, imag_residual: imag }
}

/// Lazily evaluated k-particle state.
#[derive(Clone)]
pub enum LazyTensorState {
    Factorized(Vec<DensityMatrix>),
    Kernel {
        grid: GridSpec,
        k: usize,
        f: Arc<dyn Fn(&[usize], &[usize]) -> C64 + Send + Sync>,
    },
}

impl std::fmt::Debug for LazyTensorState {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LazyTensorState::Factorized(v) => write!(fm, "Factorized(k = {})", v.len()),
            LazyTensorState::Kernel { k, .. } => write!(fm, "Kernel(k = {k})"),
        }
    }
}

/// Entries above this count are never materialized.
pub const MATERIALIZE_LIMIT: usize = 1 << 26;

impl LazyTensorState {
    pub fn factorized(factors: Vec<DensityMatrix>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("no factors".into()));
        }
        for f in &factors {
            check_grids(&f.grid, &factors[0].grid)?;
            if f.k != 1 {
                return Err(Error::InvalidArgument("factors must be one-particle".into()));
            }
        }
        Ok(LazyTensorState::Factorized(factors))
    }

    pub fn k(&self) -> usize {
        match self {
            LazyTensorState::Factorized(v) => v.len(),
            LazyTensorState::Kernel { k, .. } => *k,
        }
    }

    pub fn grid(&self) -> GridSpec {
        match self {
            LazyTensorState::Factorized(v) => v[0].grid,
            LazyTensorState::Kernel { grid, .. } => *grid,
        }
    }

    /// Value at lattice nodes; `xs`, `xps` hold `k` particle blocks of `d` indices.
    pub fn eval(&self, xs: &[usize], xps: &[usize]) -> C64 {
        match self {
            LazyTensorState::Factorized(fs) => {
                let d = fs[0].grid.d;
                fs.iter()
                    .enumerate()
                    .map(|(p, g)| g.get(&xs[p * d..(p + 1) * d], &xps[p * d..(p + 1) * d]))
                    .product()
            }
            LazyTensorState::Kernel { f, .. } => f(xs, xps),
        }
    }

    pub fn materialize(&self) -> Result<DensityMatrix> {
        let grid = self.grid();
        let k = self.k();
        let total = grid.points().checked_pow(2 * k as u32).unwrap_or(usize::MAX);
        if total > MATERIALIZE_LIMIT {
            return Err(Error::MemoryGuard(format!("{total} entries for k = {k}")));
        }
        if let LazyTensorState::Factorized(fs) = self {
            let mut out = fs[0].clone();
            for f in &fs[1..] {
                out = out.tensor(f)?;
            }
            return Ok(out);
        }
        let kd = k * grid.d;
        let mut ix = vec![0usize; 2 * kd];
        let mut data = Vec::with_capacity(total);
        for flat in 0..total {
            unflatten(flat, grid.n, &mut ix);
            data.push(self.eval(&ix[..kd], &ix[kd..]));
        }
        let arr = ArrayD::from_shape_vec(IxDyn(&DensityMatrix::shape_for(&grid, k)), data).unwrap();
        Ok(DensityMatrix { grid, k, data: arr, hermitian: false, symmetric: false })
    }
}
