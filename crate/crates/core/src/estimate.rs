//! Quadratures behind the bilinear spacetime estimates: hyperplane integrals,
//! the singular loss/gain integrals, the exponential-factor inequality and
//! the measured bilinear constant.
//!
//! All integrals are two-dimensional (d = 2). Unbounded domains are truncated
//! and every value is reported together with its truncation and refinement
//! increments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::collision::CollisionOperator;
use crate::error::{Error, Result};
use crate::evolve::free_schrodinger;
use crate::grid::DensityMatrix;
use crate::kernel::gauss_legendre;
use crate::norms::{bracket, h_norm, NormParams};

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateConfig {
    pub params: NormParams,
    /// Cutoff exponent A of the kernel.
    pub a: f64,
    pub w_sweep: Vec<[f64; 2]>,
    pub plane_radius: f64,
    /// Gauss nodes per panel.
    pub quad_n: usize,
    pub delta: f64,
    /// κ₀ − κ.
    pub kappa_gap: f64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            params: NormParams { alpha: 0.6, beta: 2.5, sigma: 1.0, kappa: 0.1, lambda: 0.0, xi_w: 1.0 },
            a: 1.0,
            w_sweep: default_sweep(),
            plane_radius: 2000.0,
            quad_n: 4,
            delta: 0.1,
            kappa_gap: 0.1,
        }
    }
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.plane_radius > 0.0) || self.quad_n < 2 || !(self.delta > 0.0) || !(self.kappa_gap > 0.0) {
            return Err(Error::InvalidArgument(format!("bad estimate config {self:?}")));
        }
        Ok(())
    }

    /// r = σ·max(0, 2A − 1 + δ), 0 for A < ½.
    pub fn r(&self) -> f64 {
        if self.a < 0.5 {
            0.0
        } else {
            self.params.sigma * (2.0 * self.a - 1.0 + self.delta).max(0.0)
        }
    }

    fn doubled(&self) -> Self {
        EstimateConfig { quad_n: 2 * self.quad_n, ..self.clone() }
    }

    fn wider(&self) -> Self {
        EstimateConfig { plane_radius: 2.0 * self.plane_radius, ..self.clone() }
    }
}

/// |W| ∈ {0, 1, 10, 10², 10³} × 8 directions.
pub fn default_sweep() -> Vec<[f64; 2]> {
    let mut out = vec![[0.0, 0.0]];
    for m in [1.0, 10.0, 100.0, 1000.0] {
        for k in 0..8 {
            let th = (k as f64 + 0.3) * std::f64::consts::PI / 4.0;
            out.push([m * th.cos(), m * th.sin()]);
        }
    }
    out
}

/// A quadrature value with its refinement and truncation increments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// |I(2·quad_n) − I(quad_n)| / |I|.
    pub refine: f64,
    /// |I(2R) − I(R)| / |I|.
    pub tail: f64,
}

impl Estimate {
    pub fn stable(&self, tol: f64) -> bool {
        self.value.is_finite() && self.refine <= tol && self.tail <= tol
    }
}

fn with_checks(cfg: &EstimateConfig, f: impl Fn(&EstimateConfig) -> f64) -> Estimate {
    let v = f(cfg);
    let vr = f(&cfg.doubled());
    let vt = f(&cfg.wider());
    let s = v.abs().max(f64::MIN_POSITIVE);
    Estimate { value: v, refine: (vr - v).abs() / s, tail: (vt - v).abs() / s }
}

// ---- panel rules ----

/// Composite Gauss rule on [lo, hi] whose panels grow geometrically (ratio 2)
/// away from both ends and from every breakpoint `(x, first panel width)`.
fn graded_rule(lo: f64, hi: f64, breaks: &[(f64, f64)], p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = vec![(lo, 0.25), (hi, 0.25)];
    pts.extend(breaks.iter().copied().filter(|(x, _)| *x >= lo && *x <= hi));
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pts.dedup_by(|a, b| {
        let same = (a.0 - b.0).abs() <= 1e-12 * (1.0 + b.0.abs());
        if same {
            b.1 = b.1.min(a.1);
        }
        same
    });
    let mut edges = vec![lo];
    for w in pts.windows(2) {
        let ((a, ha), (b, hb)) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let mut h = ha;
        let mut x = a;
        while x + h < mid {
            x += h;
            edges.push(x);
            h *= 2.0;
        }
        edges.push(mid);
        let mut right = Vec::new();
        let mut h = hb;
        let mut x = b;
        while x - h > mid {
            x -= h;
            right.push(x);
            h *= 2.0;
        }
        edges.extend(right.into_iter().rev());
        edges.push(b);
    }
    gauss_on_edges(&edges, p)
}

fn gauss_on_edges(edges: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(p);
    let mut x = Vec::with_capacity(edges.len() * p);
    let mut w = Vec::with_capacity(edges.len() * p);
    for e in edges.windows(2) {
        let (c, r) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
        for (t, wt) in gx.iter().zip(&gw) {
            x.push(c + r * t);
            w.push(r * wt);
        }
    }
    (x, w)
}

/// ∫ g(z)/|z − c| dz over the box |z|_∞ ≤ half. The square |z − c|_∞ < 1 is
/// integrated in polar coordinates about c (which cancels the singularity);
/// the rest uses a tensor graded rule whose panels align with that square.
fn singular_box(g: &(dyn Fn(f64, f64) -> f64 + Sync), c: [f64; 2], extra: [&[f64]; 2], half: f64, p: usize) -> f64 {
    let inner = polar_square(g, c, p);
    let axis = |k: usize| {
        let mut br: Vec<(f64, f64)> = vec![(c[k] - 1.0, 0.25), (c[k] + 1.0, 0.25)];
        br.extend(extra[k].iter().map(|&x| (x, 0.25)));
        graded_rule(-half, half, &br, p)
    };
    let (x0, w0) = axis(0);
    let (x1, w1) = axis(1);
    // collect before summing: the reduction order must not depend on the thread count
    let rows: Vec<f64> = x0
        .par_iter()
        .zip(&w0)
        .map(|(&a, &wa)| {
            let mut s = 0.0;
            let in_a = (a - c[0]).abs() < 1.0;
            for (&b, &wb) in x1.iter().zip(&w1) {
                if in_a && (b - c[1]).abs() < 1.0 {
                    continue;
                }
                let r = ((a - c[0]).powi(2) + (b - c[1]).powi(2)).sqrt();
                s += wb * g(a, b) / r;
            }
            s * wa
        })
        .collect();
    inner + rows.iter().sum::<f64>()
}

/// ∫_{|z−c|_∞<1} g(z)/|z−c| dz = ∫dθ ∫₀^{ρ(θ)} g(c + ρθ̂) dρ.
fn polar_square(g: &(dyn Fn(f64, f64) -> f64 + Sync), c: [f64; 2], p: usize) -> f64 {
    let (gx, gw) = gauss_legendre(2 * p);
    let q = std::f64::consts::FRAC_PI_4;
    let mut s = 0.0;
    // eight panels between the corner directions
    for k in 0..8 {
        let (t0, t1) = (k as f64 * q - q, k as f64 * q);
        let (tc, tr) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
        for (tt, tw) in gx.iter().zip(&gw) {
            let th = tc + tr * tt;
            let (cs, sn) = (th.cos(), th.sin());
            let rmax = 1.0 / cs.abs().max(sn.abs());
            let mut inner = 0.0;
            for (rt, rw) in gx.iter().zip(&gw) {
                let rho = 0.5 * rmax * (1.0 + rt);
                inner += rw * g(c[0] + rho * cs, c[1] + rho * sn);
            }
            s += tw * tr * inner * 0.5 * rmax;
        }
    }
    s
}

// ---- I₁ ----

/// ∫_P ⟨W⟩^{2α} / (⟨W−w⟩^{2α}⟨w⟩^{2α}) dS(w) over the line P = {w : w·ν = c}
/// truncated to |t| ≤ R along the line.
fn i1_raw(w: [f64; 2], normal: [f64; 2], offset: f64, alpha: f64, radius: f64, p: usize) -> f64 {
    // w(t) = offset·ν + t·τ; the origin projects to t = 0, W to t = W·τ
    let tang = [-normal[1], normal[0]];
    let base = [offset * normal[0], offset * normal[1]];
    let tw = w[0] * tang[0] + w[1] * tang[1];
    let half = radius + tw.abs();
    let (x, wt) = graded_rule(-half, half, &[(0.0, 0.25), (tw, 0.25)], p);
    let ww = bracket(w[0] * w[0] + w[1] * w[1]).powf(2.0 * alpha);
    x.iter()
        .zip(&wt)
        .map(|(&t, &q)| {
            let pt = [base[0] + t * tang[0], base[1] + t * tang[1]];
            let d2 = (w[0] - pt[0]).powi(2) + (w[1] - pt[1]).powi(2);
            let n2 = pt[0] * pt[0] + pt[1] * pt[1];
            q * ww / (bracket(d2) * bracket(n2)).powf(2.0 * alpha)
        })
        .sum()
}

/// I₁ over one hyperplane (a line in d = 2) given by a point on it and its unit normal.
pub fn integral_i1(w: [f64; 2], point: [f64; 2], normal: [f64; 2], cfg: &EstimateConfig) -> Result<Estimate> {
    cfg.validate()?;
    let nn = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
    if (nn - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("plane normal has length {nn}")));
    }
    let offset = point[0] * normal[0] + point[1] * normal[1];
    Ok(with_checks(cfg, |c| i1_raw(w, normal, offset, c.params.alpha, c.plane_radius, c.quad_n)))
}

/// Largest I₁ over `orientations` normal directions and the planes through
/// the origin, through W and halfway between.
pub fn i1_sup(w: [f64; 2], orientations: usize, cfg: &EstimateConfig) -> Result<Estimate> {
    let mut best: Option<Estimate> = None;
    for k in 0..orientations {
        let th = (k as f64 + 0.5) * std::f64::consts::PI / orientations as f64;
        let nrm = [th.cos(), th.sin()];
        for s in [0.0, 0.5, 1.0] {
            let e = integral_i1(w, [s * w[0], s * w[1]], nrm, cfg)?;
            if best.map_or(true, |b| e.value > b.value) {
                best = Some(e);
            }
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no plane orientations".into()))
}

// ---- loss I₂, I₃ ----

fn loss_raw(w: [f64; 2], cfg: &EstimateConfig, third: bool) -> f64 {
    let p = &cfg.params;
    let half = cfg.plane_radius + w[0].abs().max(w[1].abs());
    let e2 = if third { 2.0 * p.beta } else { 2.0 * p.beta - 2.0 * cfg.a };
    let pref = if third {
        let bw = bracket(w[0] * w[0] + w[1] * w[1]);
        bw.powf(2.0 * cfg.a) * (-2.0 * cfg.kappa_gap * bw.powf(1.0 / p.sigma)).exp()
    } else {
        1.0
    };
    let g = move |a: f64, b: f64| bracket(a * a + b * b).powf(-e2);
    pref * singular_box(&g, w, [&[0.0], &[0.0]], half, cfg.quad_n)
}

/// (I₂, I₃) of the loss term at W.
pub fn integral_i2_i3_loss(w: [f64; 2], cfg: &EstimateConfig) -> Result<(Estimate, Estimate)> {
    cfg.validate()?;
    if cfg.params.beta <= cfg.a {
        return Err(Error::InvalidArgument(format!("I2 needs beta > A, got {} <= {}", cfg.params.beta, cfg.a)));
    }
    Ok((with_checks(cfg, |c| loss_raw(w, c, false)), with_checks(cfg, |c| loss_raw(w, c, true))))
}

// ---- gain I₂, I₃ ----

#[derive(Clone, Debug, PartialEq)]
pub struct GainIntegrals {
    pub i2: Estimate,
    pub i3: Estimate,
    /// I₂ contributions binned by k with |sin∠(ω, W)| ∈ (2^{−k−1}, 2^{−k}].
    pub bins: Vec<f64>,
}

/// Angular rule on [0, 2π) (or [0, π)) graded towards the directions where
/// ω ∥ W or ω ⊥ W, finest panel ~ 1/|W|.
fn omega_rule(wn: f64, nodes: usize, half_sphere: bool) -> (Vec<f64>, Vec<f64>) {
    let h0 = 0.25 / (1.0 + wn);
    let q = std::f64::consts::FRAC_PI_2;
    let quarters = if half_sphere { 2 } else { 4 };
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for k in 0..quarters {
        let (lo, hi) = (k as f64 * q, (k + 1) as f64 * q);
        let (x, w) = graded_rule(lo, hi, &[(lo, h0), (hi, h0)], nodes);
        xs.extend(x);
        ws.extend(w);
    }
    (xs, ws)
}

/// Inner s-integral for one ω at angle θ relative to W, in the coordinates
/// u = 4s = a ω + b ω⊥ (so |4s| = |u| and ds = du/16).
fn gain_inner(wn: f64, th: f64, cfg: &EstimateConfig, third: bool) -> f64 {
    let p = &cfg.params;
    let wa = wn * th.cos();
    let wb = -wn * th.sin();
    let (e_par, e_perp) = if third {
        (2.0 * p.beta, 2.0 * p.beta - 1.0 + cfg.delta)
    } else {
        (2.0 * p.beta - 1.0 + cfg.delta, 2.0 * p.beta)
    };
    let bw = bracket(wn * wn).powf(2.0 * p.beta);
    let g = move |a: f64, b: f64| {
        let par = 1.0 + (a + wa).powi(2) + wb * wb;
        let perp = 1.0 + wa * wa + (wb - b).powi(2);
        bw * par.powf(-0.5 * e_par) * perp.powf(-0.5 * e_perp)
    };
    let half = cfg.plane_radius + wn;
    singular_box(&g, [0.0, 0.0], [&[-wa], &[wb]], half, cfg.quad_n) / 16.0
}

fn gain_raw(wn: f64, cfg: &EstimateConfig, third: bool, half_sphere: bool) -> (f64, Vec<f64>) {
    let (th, tw) = omega_rule(wn, cfg.quad_n, half_sphere);
    let vals: Vec<f64> = th.par_iter().map(|&t| gain_inner(wn, t, cfg, third)).collect();
    let mult = if half_sphere { 2.0 } else { 1.0 };
    let mut bins = vec![0.0; 16];
    let mut total = 0.0;
    for ((&t, &w), v) in th.iter().zip(&tw).zip(&vals) {
        let c = w * v * mult;
        total += c;
        let s = t.sin().abs();
        let k = if s <= 0.0 { 15 } else { ((-s.log2()).floor() as usize).min(15) };
        bins[k] += c;
    }
    (total, bins)
}

/// Gain-term I₂, I₃ at W. The integrand is invariant under ω → −ω; with
/// `half_sphere` only one half is integrated and doubled.
pub fn integral_gain(w: [f64; 2], cfg: &EstimateConfig, half_sphere: bool) -> Result<GainIntegrals> {
    cfg.validate()?;
    let wn = (w[0] * w[0] + w[1] * w[1]).sqrt();
    let i2 = with_checks(cfg, |c| gain_raw(wn, c, false, half_sphere).0);
    let i3 = with_checks(cfg, |c| gain_raw(wn, c, true, half_sphere).0);
    let bins = gain_raw(wn, cfg, false, half_sphere).1;
    Ok(GainIntegrals { i2, i3, bins })
}

// ---- exponential factor ----

/// max over random (ξ, ω) ∈ ℝ^d × S^{d−1} of ⟨ξ⟩^{1/σ} − ⟨ξ∥⟩^{1/σ} − ⟨ξ⊥⟩^{1/σ}.
/// Magnitudes are log-uniform on [10⁻³, 10³].
pub fn exp_factor_check(sigma: f64, d: usize, samples: usize, seed: u64) -> Result<f64> {
    if !(sigma > 0.0) || d < 2 {
        return Err(Error::InvalidArgument("exp_factor_check needs sigma > 0 and d >= 2".into()));
    }
    let s = 1.0 / sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = crate::kernel::norm(&v);
            if n > 1e-3 && n <= 1.0 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    };
    for _ in 0..samples {
        let mag = 10f64.powf(rng.gen_range(-3.0..3.0));
        let xi: Vec<f64> = unit(&mut rng).into_iter().map(|x| x * mag).collect();
        let om = unit(&mut rng);
        let par = crate::kernel::dot(&xi, &om);
        let x2 = mag * mag;
        let perp2 = (x2 - par * par).max(0.0);
        let v = bracket(x2).powf(s) - bracket(par * par).powf(s) - bracket(perp2).powf(s);
        worst = worst.max(v);
    }
    Ok(worst)
}

// ---- bilinear constant ----

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearMeasurement {
    /// ‖B(Uγ01, Uγ02)‖_{L²_t H^{κ₁}}.
    pub numerator: f64,
    /// (1 + (κ₀−κ₁)^{−r/2}) ‖γ01‖_{H^{κ₀}} ‖γ02‖_{H^{κ₀}}.
    pub envelope: f64,
    pub constant: f64,
    pub r: f64,
}

/// Measured constant of the bilinear spacetime estimate on a time lattice.
pub fn bilinear_constant(
    g1: &DensityMatrix,
    g2: &DensityMatrix,
    op: &CollisionOperator,
    p: &NormParams,
    kappa0: f64,
    kappa1: f64,
    times: &[f64],
) -> Result<BilinearMeasurement> {
    let r = p.default_r(op.model.a);
    if kappa1 < 0.0 || kappa0 < kappa1 || (kappa0 == kappa1 && r > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need kappa0 > kappa1 >= 0 (equality only when r = 0), got {kappa0}, {kappa1}"
        )));
    }
    if times.len() < 2 {
        return Err(Error::InvalidArgument("time lattice needs two nodes".into()));
    }
    let p1 = p.with_kappa(kappa1);
    let p0 = p.with_kappa(kappa0);
    let mut sq = Vec::with_capacity(times.len());
    for &t in times {
        let b = op.b_full(&free_schrodinger(g1, t), &free_schrodinger(g2, t))?;
        sq.push(h_norm(&b, &p1)?.powi(2));
    }
    let numerator = crate::norms::trapezoid(times, &sq).sqrt();
    let gap = if r == 0.0 { 1.0 } else { (kappa0 - kappa1).powf(-0.5 * r) };
    let envelope = (1.0 + gap) * h_norm(g1, &p0)? * h_norm(g2, &p0)?;
    let constant = if envelope == 0.0 { 0.0 } else { numerator / envelope };
    Ok(BilinearMeasurement { numerator, envelope, constant, r })
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson on [0, r] — independent of the Gauss machinery.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn small() -> EstimateConfig {
        EstimateConfig { plane_radius: 50.0, ..EstimateConfig::default() }
    }

    #[test]
    fn rule_integrates_polynomials() {
        let (x, w) = graded_rule(-3.0, 5.0, &[(0.3, 0.01), (2.0, 0.25)], 4);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((s - (125.0 + 27.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn i1_at_origin_matches_radial() {
        let cfg = EstimateConfig { quad_n: 12, ..small() };
        let a = cfg.params.alpha;
        // line through the origin, and one at distance 2
        let e = integral_i1([0.0, 0.0], [0.0, 0.0], [0.6, 0.8], &cfg).unwrap();
        let want = 2.0 * simpson(|t| (1.0 + t * t).powf(-2.0 * a), 0.0, 50.0, 200_000);
        assert!((e.value / want - 1.0).abs() < 1e-8, "{} {}", e.value, want);
        let e = integral_i1([0.0, 0.0], [1.2, 1.6], [0.6, 0.8], &cfg).unwrap();
        let want = 2.0 * simpson(|t| (5.0 + t * t).powf(-a) * (5.0 + t * t).powf(-a), 0.0, 50.0, 200_000);
        assert!((e.value / want - 1.0).abs() < 1e-8);
    }

    #[test]
    fn i1_rotation_covariant() {
        let cfg = small();
        let (w, pt, nr) = ([3.0, -1.0], [0.5, 0.2], [0.8f64, 0.6f64]);
        let base = integral_i1(w, pt, nr, &cfg).unwrap().value;
        let th: f64 = 0.7;
        let rot = |v: [f64; 2]| [th.cos() * v[0] - th.sin() * v[1], th.sin() * v[0] + th.cos() * v[1]];
        let r = integral_i1(rot(w), rot(pt), rot(nr), &cfg).unwrap().value;
        assert!((r / base - 1.0).abs() < 1e-9);
        assert!(integral_i1(w, pt, [1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn loss_at_origin_matches_radial() {
        // large box so the square-vs-disc truncation difference is negligible
        let cfg = EstimateConfig { plane_radius: 1e5, ..EstimateConfig::default() };
        let (i2, i3) = integral_i2_i3_loss([0.0, 0.0], &cfg).unwrap();
        let p = cfg.params;
        let tau = 2.0 * std::f64::consts::PI;
        // ∫ dz /(|z|⟨z⟩^m) = 2π ∫ ⟨ρ⟩^{−m} dρ; substitute ρ = tan φ
        let rad = |m: f64| simpson(|phi: f64| phi.cos().powf(m - 2.0), 0.0, std::f64::consts::FRAC_PI_2, 20_000);
        let want2 = tau * rad(2.0 * p.beta - 2.0 * cfg.a);
        let want3 = tau * rad(2.0 * p.beta) * (-2.0 * cfg.kappa_gap).exp();
        assert!((i2.value / want2 - 1.0).abs() < 1e-6, "{} {}", i2.value, want2);
        assert!((i3.value / want3 - 1.0).abs() < 1e-6, "{} {}", i3.value, want3);
        let bad = EstimateConfig { a: 3.0, ..cfg };
        assert!(integral_i2_i3_loss([0.0, 0.0], &bad).is_err());
    }

    #[test]
    fn gain_half_sphere() {
        let cfg = EstimateConfig { plane_radius: 100.0, ..EstimateConfig::default() };
        let full = integral_gain([3.0, 4.0], &cfg, false).unwrap();
        let half = integral_gain([3.0, 4.0], &cfg, true).unwrap();
        assert!((full.i2.value / half.i2.value - 1.0).abs() < 1e-10);
        assert!(full.i2.stable(0.01));
    }

    #[test]
    fn exp_factor() {
        for s in [0.5, 1.0, 2.0] {
            assert!(exp_factor_check(s, 2, 20_000, 7).unwrap() <= 0.0);
        }
        assert!(exp_factor_check(0.4, 2, 20_000, 7).unwrap() > 0.0);
    }

    #[test]
    fn slope_fit() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
