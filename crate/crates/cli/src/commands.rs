use std::path::Path;

use ndarray::IxDyn;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use phasekin::collision::{q_classical, CollisionOperator};
use phasekin::estimate::{
    exp_factor_check, i1_sup, integral_gain, integral_i1, integral_i2_i3_loss, loglog_slope, Estimate, EstimateConfig,
};
use phasekin::evolve::{free_schrodinger, free_transport, hierarchy_solve, picard_solve, reference_integrate};
use phasekin::grid::{moments, unflatten};
use phasekin::io::{read_field, write_density, write_phase, StoredField};
use phasekin::norms::{classical_norm, h_norm, trapezoid, NormParams};
use phasekin::wigner::{hermitian_check, inverse_wigner, wigner};
use phasekin::{DensityMatrix, GridSpec, PhaseField};

use crate::config::Config;
use crate::run::{num, Failure, Run};
use crate::Cmd;

pub fn dispatch(cmd: Cmd, cfg: &Config, seed: u64, r: &mut Run) -> Result<(), Failure> {
    match cmd {
        Cmd::Transform => transform(cfg, seed, r),
        Cmd::EvolveBoltzmann => evolve_boltzmann(cfg, seed, r),
        Cmd::EvolveHierarchy => evolve_hierarchy(cfg, seed, r),
        Cmd::OracleCompare => oracle_compare(cfg, seed, r),
        Cmd::Norms => norms(cfg, seed, r),
        Cmd::VerifyEstimates => verify_estimates(cfg, seed, r),
    }
}

fn rel_diff(a: &ndarray::ArrayD<C64>, b: &ndarray::ArrayD<C64>) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Initial data as (f, γ) on the grid of the configuration or of the stored file.
fn initial(cfg: &Config, seed: u64, r: &mut Run) -> Result<(PhaseField, DensityMatrix), Failure> {
    if let Some(p) = &cfg.data.input {
        r.record("input", p);
        return Ok(match read_field(Path::new(p))? {
            StoredField::Phase(f) => {
                let g = inverse_wigner(&f)?;
                (f, g)
            }
            StoredField::Density(g) => (wigner(&g)?, g),
        });
    }
    let grid = cfg.grid()?;
    cfg.data_check(grid.d)?;
    let dc = cfg.data.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<f64> = (0..grid.d).map(|_| rng.gen_range(1..=2) as f64 * std::f64::consts::PI / grid.lx).collect();
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let w2 = dc.width * dc.width;
    let f = PhaseField::from_fn(grid, |x, v| {
        let mut e = 0.0;
        let mut kx = phase;
        for a in 0..x.len() {
            e += (x[a] - dc.x0[a]).powi(2) + (v[a] - dc.v0[a]).powi(2);
            kx += modes[a] * x[a];
        }
        dc.amplitude * (-0.5 * e / w2).exp() * (1.0 + dc.perturb * kx.cos())
    });
    let g = inverse_wigner(&f)?;
    Ok((f, g))
}

fn operator(cfg: &Config, grid: &GridSpec) -> Result<CollisionOperator, Failure> {
    let (model, quad) = cfg.kernel(grid)?;
    Ok(CollisionOperator::new(*grid, model, quad)?)
}

fn transform(cfg: &Config, seed: u64, r: &mut Run) -> Result<(), Failure> {
    let (f, g) = initial(cfg, seed, r)?;
    write_phase(&r.path("phase.bin"), &f)?;
    write_density(&r.path("density.bin"), &g)?;
    let back = wigner(&g)?;
    r.record("roundtrip_residual", num(rel_diff(&back.data, &f.data)));
    r.record("hermitian_residual", num(hermitian_check(&g)));
    Ok(())
}

fn trajectory_rows(traj: &phasekin::evolve::Trajectory, p: &NormParams) -> Result<Vec<Vec<String>>, Failure> {
    let mut zn = Vec::new();
    let mut rows = Vec::new();
    for (i, ((t, g), z)) in traj.times.iter().zip(&traj.gamma).zip(&traj.zeta).enumerate() {
        let q = p.with_kappa(p.kappa - p.lambda * t);
        zn.push(h_norm(z, &q)?);
        let acc = trapezoid(&traj.times[..=i], &zn);
        let m = moments(&wigner(g)?);
        let mut row = vec![num(*t), num(h_norm(g, &q)?), num(acc), num(hermitian_check(g)), num(m.mass)];
        row.extend(m.momentum.iter().map(|v| num(*v)));
        row.push(num(m.energy));
        rows.push(row);
    }
    Ok(rows)
}

fn trajectory_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = ["t", "h_norm", "zeta_l1", "hermitian_residual", "mass"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=d).map(|a| format!("momentum_{a}")));
    h.push("energy".into());
    h
}

fn evolve_boltzmann(cfg: &Config, seed: u64, r: &mut Run) -> Result<(), Failure> {
    let (_, g0) = initial(cfg, seed, r)?;
    let op = operator(cfg, &g0.grid)?;
    let p = cfg.norms()?;
    let (scfg, _, substeps) = cfg.solver()?;
    let (traj, rep) = picard_solve(&g0, &op, &p, &scfg)?;
    let rows: Vec<Vec<String>> = rep
        .residuals
        .iter()
        .enumerate()
        .map(|(i, res)| vec![(i + 1).to_string(), num(*res), rep.ratios.get(i.wrapping_sub(1)).map_or(String::new(), |q| num(*q))])
        .collect();
    r.csv("picard.csv", &["iteration", "residual", "ratio"], &rows)?;
    let header = trajectory_header(g0.grid.d);
    let header: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    r.csv("trajectory.csv", &header, &trajectory_rows(&traj, &p)?)?;
    if cfg.solver.write_fields {
        for (i, g) in traj.gamma.iter().enumerate() {
            write_density(&r.path(&format!("gamma_{i:04}.bin")), g)?;
        }
    }
    let last = rep.residuals.last().copied().unwrap_or(0.0);
    r.record("iterations", rep.residuals.len());
    r.record("final_residual", num(last));
    r.record("tol", num(scfg.tol));
    r.record("contraction_ratio", num(rep.contraction_ratio));
    r.record("solution_ratio", num(rep.solution_ratio));
    r.record("estimate_constant", num(rep.estimate_constant));
    r.record("r", num(rep.r));
    r.record("converged", rep.converged);
    if substeps > 0 {
        let reference = reference_integrate(&g0, Some(&op), &scfg, substeps)?;
        let worst = traj
            .gamma
            .iter()
            .zip(&reference.gamma)
            .map(|(a, b)| rel_diff(&a.data, &b.data))
            .fold(0.0, f64::max);
        r.record("reference_substeps", substeps);
        r.record("reference_rel_diff", num(worst));
    }
    if !rep.converged {
        return Err(Failure::Numerical(format!(
            "Picard iteration stopped at residual {:e} after {} iterations (tol {:e})",
            last,
            rep.residuals.len(),
            scfg.tol
        )));
    }
    Ok(())
}

fn evolve_hierarchy(cfg: &Config, seed: u64, r: &mut Run) -> Result<(), Failure> {
    let (_, g0) = initial(cfg, seed, r)?;
    let op = operator(cfg, &g0.grid)?;
    let p = cfg.norms()?;
    let (scfg, closure, _) = cfg.solver()?;
    let levels0: Vec<DensityMatrix> = (1..=scfg.closure_k).map(|k| g0.tensor_power(k)).collect::<Result<_, _>>()?;
    let run = hierarchy_solve(&levels0, &op, &p, &scfg, closure)?;
    let mut rows = Vec::new();
    for (k, lvl) in run.levels.iter().enumerate() {
        for ((t, g), z) in lvl.times.iter().zip(&lvl.gamma).zip(&lvl.zeta) {
            let q = p.with_kappa(p.kappa - p.lambda * t);
            rows.push(vec![(k + 1).to_string(), num(*t), num(h_norm(g, &q)?), num(h_norm(z, &q)?)]);
        }
    }
    r.csv("hierarchy.csv", &["level", "t", "h_norm", "zeta_h_norm"], &rows)?;
    let res: Vec<Vec<String>> = run.residuals.iter().enumerate().map(|(i, v)| vec![(i + 1).to_string(), num(*v)]).collect();
    r.csv("residuals.csv", &["iteration", "residual"], &res)?;
    r.record("closure", &cfg.solver.closure);
    r.record("closure_k", scfg.closure_k);
    r.record("iterations", run.residuals.len());
    r.record("final_residual", num(run.residuals.last().copied().unwrap_or(0.0)));
    r.record("converged", run.converged);
    if !run.converged {
        return Err(Failure::Numerical("hierarchy iteration did not reach tol within picard_max".into()));
    }
    Ok(())
}

fn diagonal_trace(b: &DensityMatrix) -> C64 {
    let (n, d) = (b.grid.n, b.grid.d);
    let mut ix = vec![0usize; 2 * d];
    let mut acc = C64::new(0.0, 0.0);
    for flat in 0..b.grid.points() {
        unflatten(flat, n, &mut ix[..d]);
        let (a, c) = ix.split_at_mut(d);
        c.copy_from_slice(a);
        acc += b.data[IxDyn(&ix)];
    }
    acc * b.grid.dx_d()
}

fn oracle_compare(cfg: &Config, seed: u64, r: &mut Run) -> Result<(), Failure> {
    let (f, g) = initial(cfg, seed, r)?;
    let grid = f.grid;
    let (model, _) = cfg.kernel(&grid)?;
    let nf2 = f.norm_l2().powi(2);
    let mut rows = Vec::new();
    for mult in [1usize, 2] {
        let n_omega = cfg.kernel.n_omega * mult;
        let quad = phasekin::kernel::SphereQuadrature::new(grid.d, n_omega)?;
        let q = q_classical(&f, &model, &quad)?;
        let op = CollisionOperator::new(grid, model, quad)?;
        let b = op.b_full(&g, &g)?;
        let wq = inverse_wigner(&q)?;
        let mut diff = wq.data.clone();
        diff.zip_mut_with(&b.data, |a, bb| *a += C64::new(0.0, 1.0) * bb);
        let res = diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / nf2.max(f64::MIN_POSITIVE);
        let m = moments(&q);
        let mom = m.momentum.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tr = diagonal_trace(&b);
        rows.push(vec![n_omega.to_string(), num(res), num(m.mass), num(mom), num(m.energy), num(tr.norm())]);
        r.record(&format!("residual_n_omega_{n_omega}"), num(res));
    }
    r.csv("oracle.csv", &["n_omega", "residual", "q_mass", "q_momentum", "q_energy", "b_trace"], &rows)?;
    Ok(())
}

fn norms(cfg: &Config, seed: u64, r: &mut Run) -> Result<(), Failure> {
    let (f, g) = initial(cfg, seed, r)?;
    let p = cfg.norms()?;
    let (scfg, _, _) = cfg.solver()?;
    if p.kappa - p.lambda * scfg.t_final < 0.0 {
        return Err(Failure::Validation("field `norms.lambda`: kappa - lambda t_final < 0".into()));
    }
    let mut rows = Vec::new();
    for t in scfg.times() {
        let q = p.with_kappa(p.kappa - p.lambda * t);
        let hn = h_norm(&free_schrodinger(&g, t), &q)?;
        let cn = classical_norm(&free_transport(&f, t), &q)?;
        rows.push(vec![num(t), num(hn), num(cn), num(q.kappa)]);
    }
    r.csv("norms.csv", &["t", "h_norm", "classical_norm", "kappa_eff"], &rows)?;
    let (h0, c0) = (h_norm(&g, &p)?, classical_norm(&f, &p)?);
    r.record("h_norm", num(h0));
    r.record("classical_norm", num(c0));
    r.record("ratio", num(h0 / c0));
    let flags = p.regime_flags(f.grid.d, cfg.kernel(&f.grid)?.0.a);
    r.record("regime", if flags.is_empty() { "admissible".into() } else { flags.join("; ") });
    Ok(())
}

struct Cell {
    w: [f64; 2],
    dir: usize,
    id: &'static str,
    e: Estimate,
}

fn verify_estimates(cfg: &Config, seed: u64, r: &mut Run) -> Result<(), Failure> {
    let ec = cfg.estimates()?;
    let es = &cfg.estimates;
    let dirs = es.directions;
    let indexed: Vec<(usize, [f64; 2])> = {
        let mut out = Vec::new();
        let mut k = 0usize;
        for w in &ec.w_sweep {
            let zero = w[0] == 0.0 && w[1] == 0.0;
            out.push((if zero { 0 } else { k % dirs }, *w));
            if !zero {
                k += 1;
            }
        }
        out
    };
    let cells: Vec<Vec<Cell>> = indexed
        .par_iter()
        .map(|&(dir, w)| -> phasekin::Result<Vec<Cell>> {
            let i1 = i1_sup(w, 8, &ec)?;
            let (l2, l3) = integral_i2_i3_loss(w, &ec)?;
            let g = integral_gain(w, &ec, false)?;
            Ok(vec![
                Cell { w, dir, id: "I1", e: i1 },
                Cell { w, dir, id: "I2_loss", e: l2 },
                Cell { w, dir, id: "I3_loss", e: l3 },
                Cell { w, dir, id: "I2_gain", e: g.i2 },
                Cell { w, dir, id: "I3_gain", e: g.i3 },
            ])
        })
        .collect::<phasekin::Result<_>>()?;
    let cells: Vec<Cell> = cells.into_iter().flatten().collect();
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                num(c.w[0].hypot(c.w[1])),
                c.dir.to_string(),
                c.id.to_string(),
                num(c.e.value),
                num(c.e.tail),
                ec.quad_n.to_string(),
                num(c.e.refine),
            ]
        })
        .collect();
    r.csv("sweeps.csv", &["abs_w", "direction", "integral", "value", "tail", "quad_n", "refine"], &rows)?;

    let mut summary: Vec<(bool, String)> = Vec::new();
    let finite = cells.iter().all(|c| c.e.value.is_finite());
    summary.push((finite, format!("all {} sweep values finite", cells.len())));
    let worst_ref = cells.iter().map(|c| c.e.refine).fold(0.0, f64::max);
    summary.push((worst_ref <= es.refine_tol, format!("refinement increment {worst_ref:.2e} <= {:.2e}", es.refine_tol)));
    let worst_tail = cells.iter().map(|c| c.e.tail).fold(0.0, f64::max);
    summary.push((worst_tail <= es.tail_tol, format!("truncation tail {worst_tail:.2e} <= {:.2e}", es.tail_tol)));

    // rotation covariance of I₁
    let th: f64 = 0.7;
    let rot = |v: [f64; 2]| [th.cos() * v[0] - th.sin() * v[1], th.sin() * v[0] + th.cos() * v[1]];
    let mut worst_rot: f64 = 0.0;
    for &m in es.magnitudes.iter().filter(|m| **m > 0.0) {
        let (w, pt, nr) = ([0.8 * m, -0.6 * m], [0.1 * m, 0.3], [0.6, 0.8]);
        let a = integral_i1(w, pt, nr, &ec)?.value;
        let b = integral_i1(rot(w), rot(pt), rot(nr), &ec)?.value;
        worst_rot = worst_rot.max((a - b).abs() / a.abs());
    }
    summary.push((worst_rot <= 1e-9, format!("I1 rotation covariance {worst_rot:.2e} <= 1e-9")));

    // I₃ growth as the weight gap closes
    let mut slope_rows = Vec::new();
    let mut sups = Vec::new();
    for &gap in &es.kappa_gaps {
        let c = EstimateConfig { kappa_gap: gap, ..ec.clone() };
        let s = ec
            .w_sweep
            .par_iter()
            .map(|w| integral_i2_i3_loss(*w, &c).map(|x| x.1.value))
            .collect::<phasekin::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        slope_rows.push(vec![num(gap), num(s)]);
        sups.push(s);
    }
    r.csv("i3_gap.csv", &["kappa_gap", "i3_loss_sup"], &slope_rows)?;
    let slope = -loglog_slope(&es.kappa_gaps, &sups);
    let predicted = ec.params.default_r(ec.a);
    r.record("i3_slope", num(slope));
    r.record("i3_predicted_exponent", num(predicted));
    r.record("r_with_delta", num(ec.r()));
    summary.push((
        (slope - predicted).abs() <= es.slope_tol,
        format!("I3 gap exponent {slope:.3} vs predicted {predicted:.3} (tol {})", es.slope_tol),
    ));

    // exponential-factor inequality
    let mut exp_rows = Vec::new();
    for (sigma, expect_hold) in [(0.5, true), (1.0, true), (2.0, true), (0.4, false)] {
        let worst = exp_factor_check(sigma, 2, es.exp_samples, seed)?;
        let holds = worst <= 0.0;
        exp_rows.push(vec![num(sigma), num(worst), holds.to_string()]);
        let what = if expect_hold { "holds" } else { "is violated" };
        summary.push((holds == expect_hold, format!("exponential factor {what} for sigma = {sigma} (max excess {worst:.3e})")));
    }
    r.csv("exp_factor.csv", &["sigma", "max_excess", "holds"], &exp_rows)?;

    // outside the admissible regime: α = 0.4 must show a truncation trend in I₁
    let probe = EstimateConfig { params: NormParams { alpha: 0.4, ..ec.params }, ..ec.clone() };
    let wmax = es.magnitudes.iter().copied().fold(0.0, f64::max).max(10.0);
    let e = i1_sup([wmax, 0.0], 8, &probe)?;
    summary.push((
        e.tail > es.tail_tol || e.refine > es.refine_tol,
        format!("alpha = 0.4 probe flagged (tail {:.2e}, refine {:.2e})", e.tail, e.refine),
    ));

    let mut text = String::new();
    for (ok, line) in &summary {
        text.push_str(&format!("{} {line}\n", if *ok { "PASS" } else { "FAIL" }));
    }
    std::fs::write(r.path("summary.txt"), &text)?;
    print!("{text}");
    let fails = summary.iter().filter(|s| !s.0).count();
    r.record("invariants_failed", fails);
    r.record("flags", ec.params.regime_flags(2, ec.a).join("; "));
    Ok(())
}
