//! Exactly invertible lattice Wigner transform.
//!
//! Each axis pair `(x_a, v_a) <-> (x_a, x'_a)` is handled by the same 1D map:
//! interpolate f spectrally to the pair midpoint, then sum over v against
//! `e^{i v y}` with `y = r h` (minimum image). The midpoint phase is
//! unimodular on every `(p, r)` cell, which makes the map invertible; the
//! Nyquist row/column use a conjugation-symmetric phase so that real f
//! gives an exactly Hermitian γ.

use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fft::{map_pair, Direction, Line};
use crate::grid::{signed, DensityMatrix, GridSpec, PhaseField};

/// Midpoint phase Φ(p, r) for FFT-ordered `k` and centered index `ri`.
fn midpoint_phase(n: usize) -> Vec<C64> {
    let half = (n / 2) as i64;
    let mut out = Vec::with_capacity(n * n);
    for k in 0..n {
        let p = signed(k, n);
        for ri in 0..n {
            let r = ri as i64 - half;
            let ph = if p.abs() == half || r.abs() == half {
                -PI * (p.abs() * r.abs()) as f64 / n as f64
            } else {
                PI * (p * r) as f64 / n as f64
            };
            out.push(C64::from_polar(1.0, ph));
        }
    }
    out
}

fn alt(i: usize) -> f64 {
    if i % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-axis transform kernels for one grid size.
pub(crate) struct PairMap {
    n: usize,
    dv: f64,
    line: Line,
    line2: Line,
    phase: Vec<C64>,
}

impl PairMap {
    pub(crate) fn new(grid: &GridSpec) -> Self {
        PairMap {
            n: grid.n,
            dv: grid.dv(),
            line: Line::new(grid.n),
            line2: Line::new(2 * grid.n),
            phase: midpoint_phase(grid.n),
        }
    }

    /// f̃[k, qi] = (1/n) Σ_j f[j, qi] e^{-2πi k j / n}, row-major in (k, qi).
    fn x_spectrum(&self, f: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut ft = vec![C64::new(0.0, 0.0); n * n];
        let mut col = vec![C64::new(0.0, 0.0); n];
        for q in 0..n {
            for j in 0..n {
                col[j] = f[j * n + q];
            }
            self.line.run(&mut col, Direction::Forward);
            for k in 0..n {
                ft[k * n + q] = col[k] / n as f64;
            }
        }
        ft
    }

    /// (x, v) slab -> (x, x') slab.
    pub(crate) fn inverse(&self, f: &[C64], out: &mut [C64]) {
        let n = self.n;
        let ft = self.x_spectrum(f);
        // G[k, ri] = Φ(k, ri) Δv Σ_q f̃[k, q] e^{2πi q r / n}
        let mut g = vec![C64::new(0.0, 0.0); n * n];
        let mut row = vec![C64::new(0.0, 0.0); n];
        for k in 0..n {
            for q in 0..n {
                row[q] = ft[k * n + q] * alt(q);
            }
            self.line.run(&mut row, Direction::Inverse);
            for ri in 0..n {
                g[k * n + ri] = row[ri] * (alt(ri) * self.dv) * self.phase[k * n + ri];
            }
        }
        // g_r(j') = Σ_k G[k, r] e^{2πi k j'/n}; γ[(j'+r) mod n, j'] = g_r(j')
        let half = n / 2;
        let mut colv = vec![C64::new(0.0, 0.0); n];
        for ri in 0..n {
            for k in 0..n {
                colv[k] = g[k * n + ri];
            }
            self.line.run(&mut colv, Direction::Inverse);
            for jp in 0..n {
                let j = (jp + n + ri - half) % n;
                out[j * n + jp] = colv[jp];
            }
        }
    }

    /// (x, x') slab -> (x, v) slab; exact inverse of [`inverse`].
    pub(crate) fn forward(&self, gam: &[C64], out: &mut [C64]) {
        let n = self.n;
        let half = n / 2;
        let mut s = vec![C64::new(0.0, 0.0); n * n]; // (k, ri)
        let mut col = vec![C64::new(0.0, 0.0); n];
        for ri in 0..n {
            for jp in 0..n {
                let j = (jp + n + ri - half) % n;
                col[jp] = gam[j * n + jp];
            }
            self.line.run(&mut col, Direction::Forward);
            for k in 0..n {
                s[k * n + ri] = col[k] / n as f64 * self.phase[k * n + ri].conj();
            }
        }
        let mut ft = vec![C64::new(0.0, 0.0); n * n]; // (k, qi)
        let mut row = vec![C64::new(0.0, 0.0); n];
        let scale = 1.0 / (n as f64 * self.dv);
        for k in 0..n {
            for ri in 0..n {
                row[ri] = s[k * n + ri] * alt(ri);
            }
            self.line.run(&mut row, Direction::Forward);
            for q in 0..n {
                ft[k * n + q] = row[q] * (alt(q) * scale);
            }
        }
        for q in 0..n {
            for k in 0..n {
                col[k] = ft[k * n + q];
            }
            self.line.run(&mut col, Direction::Inverse);
            for j in 0..n {
                out[j * n + q] = col[j];
            }
        }
    }

    /// (x, v) slab -> (s, v) slab on the doubled midpoint lattice `m_s = -L_x + s h / 2`.
    pub(crate) fn refine(&self, f: &[C64], out: &mut [C64]) {
        let n = self.n;
        let ft = self.x_spectrum(f);
        let mut buf = vec![C64::new(0.0, 0.0); 2 * n];
        for q in 0..n {
            buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            for k in 0..n {
                let p = signed(k, n);
                let c = ft[k * n + q];
                if p == -((n / 2) as i64) {
                    buf[n / 2] += c * 0.5;
                    buf[3 * n / 2] += c * 0.5;
                } else {
                    buf[p.rem_euclid(2 * n as i64) as usize] += c;
                }
            }
            self.line2.run(&mut buf, Direction::Inverse);
            for s in 0..2 * n {
                out[s * n + q] = buf[s];
            }
        }
    }
}

impl PairMap {
    /// (x, x') slab -> (s, v) slab.
    pub(crate) fn forward_refine(&self, gam: &[C64], out: &mut [C64]) {
        let mut f = vec![C64::new(0.0, 0.0); self.n * self.n];
        self.forward(gam, &mut f);
        self.refine(&f, out);
    }
}

fn check_phase(f: &PhaseField) -> Result<()> {
    let g = &f.grid;
    if f.data.shape() != vec![g.n; 2 * g.d].as_slice() {
        return Err(Error::GridMismatch("phase field shape does not match its grid".into()));
    }
    Ok(())
}

/// γ(x, x′) = Σ_v f((x+x′)/2, v) e^{iv·(x−x′)} Δv^d.
pub fn inverse_wigner(f: &PhaseField) -> Result<DensityMatrix> {
    check_phase(f)?;
    let g = f.grid;
    let pm = PairMap::new(&g);
    let mut data = f.data.clone();
    for a in 0..g.d {
        data = map_pair(&data, a, g.d + a, g.n, g.n, |i, o| pm.inverse(i, o));
    }
    Ok(DensityMatrix { grid: g, k: 1, data, hermitian: f.real, symmetric: true })
}

/// f(x, v) = (2π)^{-d} Σ_y γ(x+y/2, x−y/2) e^{−iv·y} Δy^d.
pub fn wigner(gamma: &DensityMatrix) -> Result<PhaseField> {
    if gamma.k != 1 {
        return Err(Error::InvalidArgument(format!("wigner needs k = 1, got k = {}", gamma.k)));
    }
    let g = gamma.grid;
    let pm = PairMap::new(&g);
    let mut data = gamma.data.clone();
    for a in 0..g.d {
        data = map_pair(&data, a, g.d + a, g.n, g.n, |i, o| pm.forward(i, o));
    }
    Ok(PhaseField { grid: g, data, real: gamma.hermitian })
}

/// max |γ(X, X′) − conj γ(X′, X)|.
pub fn hermitian_check(gamma: &DensityMatrix) -> f64 {
    let kd = gamma.k * gamma.grid.d;
    let axes: Vec<usize> = (kd..2 * kd).chain(0..kd).collect();
    let t = gamma.data.view().permuted_axes(IxDyn(&axes));
    let mut m: f64 = 0.0;
    ndarray::Zip::from(&gamma.data).and(&t).for_each(|a, b| {
        m = m.max((a - b.conj()).norm());
    });
    m
}

/// Midpoint/velocity form of a k = 1 state on the doubled midpoint lattice:
/// axes `(s_1..s_d, v_1..v_d)` with `s` of length `2n`.
pub(crate) fn mid_velocity_form(gamma: &DensityMatrix) -> Result<ArrayD<C64>> {
    let f = wigner(gamma)?;
    Ok(refine_phase(&f.data, &f.grid, 0))
}

/// Refines the position axes of a phase-space block starting at `axis0`.
pub(crate) fn refine_phase(data: &ArrayD<C64>, grid: &GridSpec, axis0: usize) -> ArrayD<C64> {
    let pm = PairMap::new(grid);
    let d = grid.d;
    let mut out = data.clone();
    for a in 0..d {
        out = map_pair(&out, axis0 + a, axis0 + d + a, 2 * grid.n, grid.n, |i, o| pm.refine(i, o));
    }
    out
}

/// Σ_q F[.., q] e^{i v_q y_r} Δv along the listed velocity axes (r centered).
pub(crate) fn velocity_to_relative(data: &ArrayD<C64>, grid: &GridSpec, axes: &[usize]) -> ArrayD<C64> {
    let mut out = data.clone();
    for &ax in axes {
        alternate(&mut out, ax);
        crate::fft::fft_axis(&mut out, ax, Direction::Inverse);
        alternate(&mut out, ax);
    }
    let s = grid.dv().powi(axes.len() as i32);
    out.mapv_inplace(|z| z * s);
    out
}

fn alternate(a: &mut ArrayD<C64>, axis: usize) {
    for (ix, z) in a.indexed_iter_mut() {
        if ix[axis] % 2 == 1 {
            *z = -*z;
        }
    }
}

/// Lattice pair (j, j′) → (s, r) with `r = (j − j′)` wrapped to `[−n/2, n/2)` (stored as `r + n/2`)
/// and `s = (2j′ + r) mod 2n`.
#[inline]
pub(crate) fn pair_to_mid_rel(j: usize, jp: usize, n: usize) -> (usize, usize) {
    let half = n / 2;
    let ri = (j + n + half - jp) % n;
    let r = ri as i64 - half as i64;
    let s = (2 * jp as i64 + r).rem_euclid(2 * n as i64) as usize;
    (s, ri)
}

/// Inverse of [`pair_to_mid_rel`]; only defined when `s ≡ r (mod 2)`.
#[inline]
pub(crate) fn mid_rel_to_pair(s: usize, ri: usize, n: usize) -> (usize, usize) {
    let half = n / 2;
    let r = ri as i64 - half as i64;
    let jp2 = (s as i64 - r).rem_euclid(2 * n as i64);
    debug_assert!(jp2 % 2 == 0);
    let jp = (jp2 / 2) as usize % n;
    let j = (jp as i64 + r).rem_euclid(n as i64) as usize;
    (j, jp)
}
