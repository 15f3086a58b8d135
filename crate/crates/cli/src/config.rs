//! Run configuration: a TOML file with `[grid]`, `[kernel]`, `[norms]`,
//! `[solver]`, `[estimates]` and `[data]` sections. Every key is optional;
//! unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use phasekin::estimate::EstimateConfig;
use phasekin::evolve::{Closure, SolverConfig};
use phasekin::kernel::{KernelKind, KernelModel, SphereQuadrature};
use phasekin::norms::NormParams;
use phasekin::{make_grid, GridSpec};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub grid: GridCfg,
    pub kernel: KernelCfg,
    pub norms: NormsCfg,
    pub solver: SolverCfg,
    pub estimates: EstimatesCfg,
    pub data: DataCfg,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridCfg {
    pub d: usize,
    pub n: usize,
    pub lx: f64,
    pub lv: Option<f64>,
}

impl Default for GridCfg {
    fn default() -> Self {
        GridCfg { d: 2, n: 16, lx: 5.5, lv: None }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelCfg {
    /// `maxwell`, `hard-sphere` or `vhs`.
    pub kind: String,
    /// Cutoff exponent; only read for `vhs`.
    pub a: Option<f64>,
    pub u_max: Option<f64>,
    pub n_omega: usize,
}

impl Default for KernelCfg {
    fn default() -> Self {
        KernelCfg { kind: "maxwell".into(), a: None, u_max: None, n_omega: 16 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormsCfg {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub xi_w: f64,
}

impl Default for NormsCfg {
    fn default() -> Self {
        let p = NormParams::default();
        NormsCfg { alpha: p.alpha, beta: p.beta, sigma: p.sigma, kappa: p.kappa, lambda: p.lambda, xi_w: p.xi_w }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverCfg {
    pub t_final: f64,
    pub n_t: usize,
    pub picard_max: usize,
    pub tol: f64,
    pub closure_k: usize,
    /// `factorized` or `zero`.
    pub closure: String,
    /// RK4 substeps per interval for the reference comparison; 0 skips it.
    pub reference_substeps: usize,
    pub write_fields: bool,
}

impl Default for SolverCfg {
    fn default() -> Self {
        let s = SolverConfig::default();
        SolverCfg {
            t_final: s.t_final,
            n_t: s.n_t,
            picard_max: s.picard_max,
            tol: s.tol,
            closure_k: s.closure_k,
            closure: "factorized".into(),
            reference_substeps: 0,
            write_fields: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatesCfg {
    pub a: f64,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub magnitudes: Vec<f64>,
    pub directions: usize,
    pub plane_radius: f64,
    pub quad_n: usize,
    pub delta: f64,
    pub kappa_gaps: Vec<f64>,
    pub exp_samples: usize,
    pub refine_tol: f64,
    pub tail_tol: f64,
    pub slope_tol: f64,
}

impl Default for EstimatesCfg {
    fn default() -> Self {
        let e = EstimateConfig::default();
        EstimatesCfg {
            a: e.a,
            alpha: e.params.alpha,
            beta: e.params.beta,
            sigma: e.params.sigma,
            kappa: e.params.kappa,
            magnitudes: vec![0.0, 1.0, 10.0, 100.0, 1000.0],
            directions: 8,
            plane_radius: e.plane_radius,
            quad_n: e.quad_n,
            delta: e.delta,
            kappa_gaps: vec![0.1, 0.05, 0.025],
            exp_samples: 100_000,
            refine_tol: 0.02,
            tail_tol: 0.01,
            slope_tol: 0.1,
        }
    }
}

/// Initial data: a stored field, or `amplitude·exp(−|x−x0|²/2w² − |v−v0|²/2w²)`
/// modulated by `1 + perturb·cos(k·x + φ)` with (k, φ) drawn from the seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataCfg {
    pub input: Option<String>,
    pub amplitude: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub width: f64,
    pub perturb: f64,
}

impl Default for DataCfg {
    fn default() -> Self {
        DataCfg { input: None, amplitude: 0.2, x0: vec![0.3, 0.0], v0: vec![0.4, -0.2], width: 1.0, perturb: 0.0 }
    }
}

/// Validation failure pinned to a configuration field.
#[derive(Debug)]
pub struct FieldError {
    pub field: String,
    pub msg: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.msg)
    }
}

fn bad(field: &str, msg: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), msg: msg.into() }
}

pub fn parse(text: &str) -> Result<Config, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

impl Config {
    /// Hex digest of the canonical form of the run (command, parsed config, seed).
    pub fn hash(&self, command: &str, seed: u64) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.seed = Some(seed);
        let canon = toml::to_string(&c).expect("config serializes");
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(b"\n");
        h.update(canon.as_bytes());
        format!("{:x}", h.finalize())
    }

    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<GridSpec, FieldError> {
        let g = &self.grid;
        make_grid(g.d, g.n, g.lx, g.lv).map_err(|e| {
            let field = if g.d == 0 {
                "grid.d"
            } else if g.n < 4 || !g.n.is_power_of_two() {
                "grid.n"
            } else if !(g.lx > 0.0) {
                "grid.lx"
            } else {
                "grid.lv"
            };
            bad(field, e.to_string())
        })
    }

    pub fn kernel(&self, grid: &GridSpec) -> Result<(KernelModel, SphereQuadrature), FieldError> {
        let k = &self.kernel;
        let kind = match k.kind.as_str() {
            "maxwell" => KernelKind::Maxwell,
            "hard-sphere" => KernelKind::HardSphere,
            "vhs" => KernelKind::VariableHardSphere(k.a.ok_or_else(|| bad("kernel.a", "required for vhs"))?),
            other => return Err(bad("kernel.kind", format!("unknown kernel `{other}` (maxwell | hard-sphere | vhs)"))),
        };
        let mut model = KernelModel::for_grid(kind, grid).map_err(|e| bad("kernel.a", e.to_string()))?;
        if let Some(u) = k.u_max {
            if !(u > 0.0) {
                return Err(bad("kernel.u_max", "must be positive"));
            }
            model.u_max = u;
        }
        let quad = SphereQuadrature::new(grid.d, k.n_omega).map_err(|e| bad("kernel.n_omega", e.to_string()))?;
        Ok((model, quad))
    }

    pub fn norms(&self) -> Result<NormParams, FieldError> {
        let n = &self.norms;
        let p = NormParams { alpha: n.alpha, beta: n.beta, sigma: n.sigma, kappa: n.kappa, lambda: n.lambda, xi_w: n.xi_w };
        p.validate().map_err(|e| bad("norms", e.to_string()))?;
        Ok(p)
    }

    pub fn solver(&self) -> Result<(SolverConfig, Closure, usize), FieldError> {
        let s = &self.solver;
        let cfg = SolverConfig { t_final: s.t_final, n_t: s.n_t, picard_max: s.picard_max, tol: s.tol, closure_k: s.closure_k };
        if !(s.t_final > 0.0) {
            return Err(bad("solver.t_final", "must be positive"));
        }
        if s.n_t < 2 {
            return Err(bad("solver.n_t", "needs at least two time nodes"));
        }
        if !(s.tol > 0.0) {
            return Err(bad("solver.tol", "must be positive"));
        }
        if s.closure_k < 1 {
            return Err(bad("solver.closure_k", "must be >= 1"));
        }
        let closure = match s.closure.as_str() {
            "factorized" => Closure::Factorized,
            "zero" => Closure::Zero,
            other => return Err(bad("solver.closure", format!("unknown closure `{other}` (factorized | zero)"))),
        };
        Ok((cfg, closure, s.reference_substeps))
    }

    pub fn estimates(&self) -> Result<EstimateConfig, FieldError> {
        let e = &self.estimates;
        if e.magnitudes.iter().any(|m| !(*m >= 0.0)) || e.magnitudes.is_empty() {
            return Err(bad("estimates.magnitudes", "need a non-empty list of magnitudes >= 0"));
        }
        if e.directions == 0 {
            return Err(bad("estimates.directions", "must be >= 1"));
        }
        if e.kappa_gaps.len() < 2 || e.kappa_gaps.iter().any(|g| !(*g > 0.0)) {
            return Err(bad("estimates.kappa_gaps", "need at least two positive gaps"));
        }
        let mut sweep = Vec::new();
        for &m in &e.magnitudes {
            if m == 0.0 {
                sweep.push([0.0, 0.0]);
                continue;
            }
            for k in 0..e.directions {
                let th = (k as f64 + 0.3) * std::f64::consts::TAU / e.directions as f64;
                sweep.push([m * th.cos(), m * th.sin()]);
            }
        }
        let cfg = EstimateConfig {
            params: NormParams { alpha: e.alpha, beta: e.beta, sigma: e.sigma, kappa: e.kappa, lambda: 0.0, xi_w: 1.0 },
            a: e.a,
            w_sweep: sweep,
            plane_radius: e.plane_radius,
            quad_n: e.quad_n,
            delta: e.delta,
            kappa_gap: e.kappa_gaps[0],
        };
        cfg.validate().map_err(|err| bad("estimates", err.to_string()))?;
        Ok(cfg)
    }

    pub fn data_check(&self, d: usize) -> Result<(), FieldError> {
        let dc = &self.data;
        if dc.input.is_none() {
            if dc.x0.len() != d {
                return Err(bad("data.x0", format!("needs {d} components")));
            }
            if dc.v0.len() != d {
                return Err(bad("data.v0", format!("needs {d} components")));
            }
            if !(dc.width > 0.0) {
                return Err(bad("data.width", "must be positive"));
            }
        }
        Ok(())
    }
}
