//! Run configuration: a single TOML file describing the model, the basis, the
//! time integration and the initial data.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{build_stream_basis, BasisKind, BasisSet};
use crate::field::Discretization;
use crate::galerkin::{project_field, project_grid_field, solver_quadrature_order, Model, TransportForm};
use crate::helmholtz::{CellCenteredField, GridField};
use crate::integrator::{IntegratorOptions, NewtonOptions};
use crate::quadrature::QuadratureRule;
use crate::spectral::build_spectral_basis;
use crate::{Error, Result};

/// Largest basis size accepted by [`SolverConfig::validate`].
pub const MAX_BASIS: usize = 400;

/// Environment variable that, when set, prefixes relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "PNAVIER_OUTPUT_ROOT";

/// Named initial conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The first basis field (the lowest eigenmode for a spectral basis).
    SingleMode,
    /// `0.8 φ₁ + 0.6 φ₂`.
    TwoMode,
    /// Projection of the clamped bump with stream function `sin²(πx) sin²(πy)/π`.
    Vortex,
    /// Coefficients uniform in `[-1,1]` drawn from `seed`, scaled to unit norm.
    Random,
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Preset::SingleMode => "single_mode",
            Preset::TwoMode => "two_mode",
            Preset::Vortex => "vortex",
            Preset::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Preset { name: Preset },
    /// Coefficients in the configured basis.
    Coefficients { values: Vec<f64> },
    /// Cell-centered velocity CSV (`x,y,u1,u2`), Leray-projected then `L²`-projected.
    GridFile { path: PathBuf },
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Preset { name: Preset::TwoMode }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub p: f64,
    pub nu: f64,
    pub n_basis: usize,
    pub basis_kind: BasisKind,
    /// Raw stream functions per axis of the pool a spectral basis is drawn from.
    pub spectral_pool: Option<usize>,
    pub t_final: f64,
    /// Gauss order per axis; chosen from the basis and `p` when absent.
    pub quad_order: Option<usize>,
    pub transport: TransportForm,
    pub tol_energy: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub dt_init: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_min: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub initial_data: InitialData,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let newton = NewtonOptions::default();
        Self {
            p: 3.0,
            nu: 0.1,
            n_basis: 9,
            basis_kind: BasisKind::Stream,
            spectral_pool: None,
            t_final: 1.0,
            quad_order: None,
            transport: TransportForm::default(),
            tol_energy: 1e-5,
            newton_tol: newton.tol,
            newton_max_iter: newton.max_iter,
            dt_init: None,
            dt_max: None,
            dt_min: 1e-9,
            seed: 0,
            output_dir: PathBuf::from("output"),
            initial_data: InitialData::default(),
        }
    }
}

/// The defaults, as printed by `--print-defaults`.
pub const DEFAULTS_TOML: &str = r#"# exponent of the p-Laplacian, p >= 2
p = 3.0
# viscosity
nu = 0.1
# number of basis fields; a perfect square for the stream basis, at most 400
n_basis = 9
# "stream" (tensor Legendre stream functions) or "spectral" (biharmonic eigenfields)
basis_kind = "stream"
# spectral_pool = 5         # stream functions per axis for the spectral eigenproblem (default sqrt(n_basis) + 2)
t_final = 1.0
# quad_order = 20           # Gauss points per axis (default: exact for even integer p, else 96)
# "skew" (energy-conserving split) or "expanded"
transport = "skew"
# allowed run-integrated energy defect relative to H(0)
tol_energy = 1e-5
newton_tol = 1e-12
newton_max_iter = 25
# dt_init = 0.01            # default min(dt_max, t_final/100)
# dt_max = 0.1              # default t_final/10
dt_min = 1e-9
seed = 0
# relative paths are resolved against $PNAVIER_OUTPUT_ROOT when it is set
output_dir = "output"

[initial_data]
# "preset" (name = single_mode | two_mode | vortex | random),
# "coefficients" (values = [...]) or "grid_file" (path = "field.csv")
kind = "preset"
name = "two_mode"
"#;

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive and finite, got {v}")))
    }
}

/// Discretization, model, initial coefficients and integrator options of a config.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub disc: Discretization,
    pub model: Model,
    pub x0: DVector<f64>,
    pub opts: IntegratorOptions,
}

impl SolverConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1);
            Error::Parse {
                source_name: "config".into(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                source_name: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.is_finite()) {
            return Err(bad("p", format!("p = {} is not allowed, p >= 2 is required", self.p)));
        }
        positive("nu", self.nu)?;
        positive("t_final", self.t_final)?;
        positive("tol_energy", self.tol_energy)?;
        positive("newton_tol", self.newton_tol)?;
        positive("dt_min", self.dt_min)?;
        if let Some(dt) = self.dt_init {
            positive("dt_init", dt)?;
        }
        if let Some(dt) = self.dt_max {
            positive("dt_max", dt)?;
        }
        if self.newton_max_iter == 0 {
            return Err(bad("newton_max_iter", "must be at least 1"));
        }
        if self.n_basis == 0 || self.n_basis > MAX_BASIS {
            return Err(bad("n_basis", format!("must lie in 1..={MAX_BASIS}, got {}", self.n_basis)));
        }
        match self.basis_kind {
            BasisKind::Stream => {
                let r = self.n_basis.isqrt();
                if r * r != self.n_basis {
                    return Err(bad(
                        "n_basis",
                        format!("the stream basis needs a perfect square, got {}", self.n_basis),
                    ));
                }
            }
            BasisKind::Spectral => {
                let pool = self.pool();
                if pool * pool < self.n_basis {
                    return Err(bad(
                        "spectral_pool",
                        format!("a pool of {pool}² stream functions cannot hold {} eigenfields", self.n_basis),
                    ));
                }
            }
        }
        if let Some(q) = self.quad_order {
            if q == 0 {
                return Err(bad("quad_order", "must be at least 1"));
            }
        }
        match &self.initial_data {
            InitialData::Preset { name: Preset::TwoMode } if self.n_basis < 2 => {
                Err(bad("initial_data", "two_mode needs at least two basis fields"))
            }
            InitialData::Coefficients { values } if values.len() != self.n_basis => Err(bad(
                "initial_data",
                format!("{} coefficients given for {} basis fields", values.len(), self.n_basis),
            )),
            InitialData::Coefficients { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(bad("initial_data", "coefficients must be finite"))
            }
            _ => Ok(()),
        }
    }

    fn pool(&self) -> usize {
        self.spectral_pool.unwrap_or(self.n_basis.isqrt() + 2)
    }

    /// Builds the configured basis.
    pub fn basis(&self) -> Result<BasisSet> {
        match self.basis_kind {
            BasisKind::Stream => build_stream_basis(self.n_basis.isqrt(), true),
            BasisKind::Spectral => Ok(build_spectral_basis(self.pool(), self.n_basis)?.basis),
        }
    }

    pub fn model(&self) -> Result<Model> {
        Ok(Model::new(self.p, self.nu)?.with_transport(self.transport))
    }

    pub fn integrator_options(&self) -> IntegratorOptions {
        let mut opts = IntegratorOptions::new(self.t_final);
        opts.tol_energy = self.tol_energy;
        opts.newton.tol = self.newton_tol;
        opts.newton.max_iter = self.newton_max_iter;
        opts.dt_init = self.dt_init;
        opts.dt_max = self.dt_max;
        opts.dt_min = self.dt_min;
        opts
    }

    /// The output directory, under `$PNAVIER_OUTPUT_ROOT` when set and the path is relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        let basis = self.basis()?;
        let order = self.quad_order.unwrap_or_else(|| solver_quadrature_order(&basis, self.p));
        let disc = Discretization::new(basis, QuadratureRule::new(order)?);
        let x0 = initial_coefficients(&disc, &self.initial_data, self.seed)?;
        Ok(Prepared {
            disc,
            model: self.model()?,
            x0,
            opts: self.integrator_options(),
        })
    }
}

/// Velocity of the clamped bump with stream function `sin²(πx) sin²(πy)/π`.
pub fn vortex_velocity(x: f64, y: f64) -> [f64; 2] {
    use std::f64::consts::PI;
    let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
    [sx * sx * (2.0 * PI * y).sin(), -(2.0 * PI * x).sin() * sy * sy]
}

/// Coefficients of the initial data in the basis of `disc`.
pub fn initial_coefficients(disc: &Discretization, data: &InitialData, seed: u64) -> Result<DVector<f64>> {
    let n = disc.dim();
    let x = match data {
        InitialData::Preset { name } => match name {
            Preset::SingleMode => {
                let mut x = DVector::zeros(n);
                x[0] = 1.0;
                x
            }
            Preset::TwoMode => {
                if n < 2 {
                    return Err(bad("initial_data", "two_mode needs at least two basis fields"));
                }
                let mut x = DVector::zeros(n);
                x[0] = 0.8;
                x[1] = 0.6;
                x
            }
            Preset::Vortex => project_field(disc, vortex_velocity)?.coeffs,
            Preset::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
                let norm = x.norm();
                x / norm
            }
        },
        InitialData::Coefficients { values } => {
            if values.len() != n {
                return Err(bad(
                    "initial_data",
                    format!("{} coefficients given for {n} basis fields", values.len()),
                ));
            }
            DVector::from_column_slice(values)
        }
        InitialData::GridFile { path } => {
            let cells = CellCenteredField::load(path)?;
            project_grid_field(disc, &GridField::from_cell_centers(&cells)?)?.coeffs
        }
    };
    if x.iter().all(|&c| c == 0.0) {
        return Err(Error::TrivialInitialData);
    }
    Ok(x)
}
