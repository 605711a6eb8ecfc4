//! Runs, checks and sweeps driven by a [`SolverConfig`], with the files they write.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    check_gady, check_gn, check_korn, check_monotone_g, convergence_sweep, vp_norm_defect, weak_residual,
    weak_test_family, write_reports_csv, write_reports_json, InequalityReport, SweepReport,
};
use crate::config::{Prepared, SolverConfig};
use crate::galerkin::energy_rate;
use crate::integrator::{EnergyTrace, Integrator, Trajectory};
use crate::par::Execution;
use crate::plot::{line_chart, Scale, Series};
use crate::{Error, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ENERGY_PLOT: &str = "energy.svg";

/// Samples drawn by the pointwise inequality checks.
pub const INEQUALITY_SAMPLES: usize = 100_000;
/// Random states drawn by the field-level inequality checks.
pub const STATE_SAMPLES: usize = 100;
/// Relative tolerance of the instantaneous energy identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-7;
/// Tolerance of `∫|v_p|^q = ∫|v|^p` on stored snapshots.
pub const VP_TOLERANCE: f64 = 1e-12;
/// Relative tolerance of the weak-form residual.
pub const WEAK_TOLERANCE: f64 = 1e-4;

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// JSON record of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub basis_id: String,
    pub n_basis: usize,
    pub p: f64,
    pub nu: f64,
    pub transport: String,
    pub quad_order: usize,
    pub t_final: f64,
    pub t_reached: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub newton_failures: usize,
    pub h0: f64,
    pub final_h: f64,
    /// `Σ dt ν ∫|𝒟(v_mid)|^p`.
    pub total_dissipation: f64,
    pub integrated_defect: f64,
    pub max_energy_residual: f64,
    pub wall_time_s: f64,
    pub failure: Option<String>,
}

impl RunSummary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

/// Integrates the configured problem and writes the trace CSV, the snapshot
/// file, the JSON summary and an energy plot to `out_dir`. When integration
/// fails the partial outputs are written and the summary records the failure.
pub fn simulate(cfg: &SolverConfig, out_dir: &Path) -> Result<RunSummary> {
    let Prepared { disc, model, x0, opts } = cfg.prepare()?;
    create_dir(out_dir)?;
    let start = Instant::now();
    let mut it = Integrator::new(&disc, model, x0, opts)?;
    let mut failure = None;
    while it.time() < opts.t_final {
        if let Err(e) = it.advance() {
            failure = Some(e);
            break;
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let t_reached = it.time();
    let run = it.into_run();

    let rows = &run.trace.rows;
    let summary = RunSummary {
        basis_id: disc.basis().id().to_string(),
        n_basis: disc.dim(),
        p: model.p,
        nu: model.nu,
        transport: model.transport.to_string(),
        quad_order: disc.rule().order(),
        t_final: opts.t_final,
        t_reached,
        steps: rows.len().saturating_sub(1),
        rejected_steps: run.rejected_steps,
        newton_failures: run.newton_failures,
        h0: run.trace.h0(),
        final_h: rows.last().map_or(0.0, |r| r.h),
        total_dissipation: rows.iter().skip(1).map(|r| r.dt * r.dissipation_rate).sum(),
        integrated_defect: run.trace.integrated_defect(),
        max_energy_residual: rows.iter().skip(1).map(|r| r.energy_residual.abs()).fold(0.0, f64::max),
        wall_time_s: wall,
        failure: failure.as_ref().map(|e| e.to_string()),
    };

    run.trace.save(&out_dir.join(TRACE_FILE))?;
    run.trajectory
        .save(&out_dir.join(SNAPSHOT_FILE), &model, disc.basis().id())?;
    let path = out_dir.join(SUMMARY_FILE);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, &summary)?;
    let h: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.h)).collect();
    line_chart(
        &out_dir.join(ENERGY_PLOT),
        "energy",
        ("t", Scale::Linear),
        ("H", Scale::Log),
        &[Series {
            name: "H(t)".into(),
            points: h,
        }],
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(summary),
    }
}

/// Groups of checks run by [`check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Inequalities,
    Energy,
    Weakform,
    All,
}

impl std::fmt::Display for Suite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Suite::Inequalities => "inequalities",
            Suite::Energy => "energy",
            Suite::Weakform => "weakform",
            Suite::All => "all",
        })
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inequalities" => Ok(Suite::Inequalities),
            "energy" => Ok(Suite::Energy),
            "weakform" => Ok(Suite::Weakform),
            "all" => Ok(Suite::All),
            other => Err(Error::invalid(format!(
                "unknown suite `{other}` (expected inequalities, energy, weakform or all)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub suite: Suite,
    pub reports: Vec<InequalityReport>,
    pub pass: bool,
}

/// Loads the run stored in `out_dir`, or runs [`simulate`] first when there is none.
pub fn load_or_simulate(cfg: &SolverConfig, out_dir: &Path) -> Result<(Prepared, Trajectory, EnergyTrace)> {
    let snapshots = out_dir.join(SNAPSHOT_FILE);
    if !snapshots.exists() {
        simulate(cfg, out_dir)?;
    }
    let prep = cfg.prepare()?;
    let (header, traj) = Trajectory::load(&snapshots)?;
    if header.n != prep.disc.dim() || header.p != cfg.p || header.nu != cfg.nu || header.basis_id != prep.disc.basis().id() {
        return Err(Error::InvalidConfig {
            field: "output_dir".into(),
            reason: format!(
                "{} holds a run of basis {} with N = {}, p = {}, nu = {}, which does not match the configuration",
                snapshots.display(),
                header.basis_id,
                header.n,
                header.p,
                header.nu
            ),
        });
    }
    let trace = EnergyTrace::load(&out_dir.join(TRACE_FILE))?;
    Ok((prep, traj, trace))
}

fn inequality_reports(cfg: &SolverConfig, prep: &Prepared) -> Result<Vec<InequalityReport>> {
    let (p, seed) = (cfg.p, cfg.seed);
    let mut out = vec![
        check_gady(p, INEQUALITY_SAMPLES, seed)?,
        check_monotone_g(p, INEQUALITY_SAMPLES, seed)?,
        check_korn(&prep.disc, p, STATE_SAMPLES, seed)?,
    ];
    out.extend(check_gn(&prep.disc, p, STATE_SAMPLES / 5, seed)?);
    Ok(out)
}

fn energy_reports(cfg: &SolverConfig, prep: &Prepared, traj: &Trajectory, trace: &EnergyTrace) -> Result<Vec<InequalityReport>> {
    let (p, seed) = (cfg.p, cfg.seed);
    let h0 = trace.h0();
    let n_rows = trace.rows.len();
    let defect = trace.integrated_defect().abs() / h0;
    let bound = trace.rows.iter().map(|r| r.h / h0).fold(0.0, f64::max);
    let positive = trace.rows.iter().map(|r| r.h).fold(f64::INFINITY, f64::min);

    // states far above the underflow range, evenly spread over the run
    let live: Vec<usize> = (0..traj.len())
        .filter(|&k| trace_h(prep, traj, k) > 1e-12 * h0)
        .collect();
    let stride = (live.len() / 10).max(1);
    let mut identity: f64 = 0.0;
    let mut checked = 0;
    for &k in live.iter().step_by(stride) {
        let r = energy_rate(&prep.disc, &traj.coeffs[k], &prep.model, Execution::default())?;
        identity = identity.max((r.model + r.dissipation).abs() / r.dissipation);
        checked += 1;
    }
    let mut positivity = InequalityReport::upper_bound("positivity", n_rows, positive, f64::INFINITY, p, seed);
    positivity.threshold = 0.0;
    positivity.pass = positive > 0.0;
    Ok(vec![
        InequalityReport::upper_bound("energy_balance", n_rows, defect, cfg.tol_energy, p, seed),
        InequalityReport::upper_bound("a_priori_bound", n_rows, bound, 1.0, p, seed),
        positivity,
        InequalityReport::upper_bound("vp_bookkeeping", traj.len(), vp_norm_defect(traj, &prep.disc, p), VP_TOLERANCE, p, seed),
        InequalityReport::upper_bound("instantaneous_identity", checked, identity, IDENTITY_TOLERANCE, p, seed),
    ])
}

fn trace_h(prep: &Prepared, traj: &Trajectory, k: usize) -> f64 {
    crate::field::energy(&prep.disc, &traj.coeffs[k], prep.model.p)
}

fn weak_reports(cfg: &SolverConfig, prep: &Prepared, traj: &Trajectory) -> Result<Vec<InequalityReport>> {
    let tests = weak_test_family(&prep.disc, traj.t_final(), 9)?;
    let r = weak_residual(traj, &tests, &prep.disc, &prep.model)?;
    Ok(vec![InequalityReport::upper_bound(
        "weak_residual",
        tests.len(),
        r.max_relative,
        WEAK_TOLERANCE,
        cfg.p,
        cfg.seed,
    )])
}

/// Runs a suite and writes `check_<suite>.json` and `check_<suite>.csv` to `out_dir`.
pub fn check(suite: Suite, cfg: &SolverConfig, out_dir: &Path) -> Result<CheckOutcome> {
    let mut reports = Vec::new();
    if matches!(suite, Suite::Inequalities | Suite::All) {
        reports.extend(inequality_reports(cfg, &cfg.prepare()?)?);
    }
    if matches!(suite, Suite::Energy | Suite::Weakform | Suite::All) {
        let (prep, traj, trace) = load_or_simulate(cfg, out_dir)?;
        if matches!(suite, Suite::Energy | Suite::All) {
            reports.extend(energy_reports(cfg, &prep, &traj, &trace)?);
        }
        if matches!(suite, Suite::Weakform | Suite::All) {
            reports.extend(weak_reports(cfg, &prep, &traj)?);
        }
    }
    create_dir(out_dir)?;
    write_reports_json(&out_dir.join(format!("check_{suite}.json")), &reports)?;
    write_reports_csv(&out_dir.join(format!("check_{suite}.csv")), &reports)?;
    let pass = reports.iter().all(|r| r.pass);
    Ok(CheckOutcome { suite, reports, pass })
}

/// Runs [`convergence_sweep`] and writes `sweep.csv`, `sweep.json` and `sweep.svg`.
pub fn sweep(cfg: &SolverConfig, n_list: &[usize], out_dir: &Path) -> Result<SweepReport> {
    cfg.validate()?;
    let report = convergence_sweep(cfg, n_list)?;
    create_dir(out_dir)?;
    let path = out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["n_i", "n_j", "distance"])?;
    for d in &report.distances {
        w.write_record([d.n_i.to_string(), d.n_j.to_string(), format!("{:e}", d.distance)])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let path = out_dir.join("sweep.json");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, &report)?;
    let last = *n_list.last().expect("nonempty");
    let pts: Vec<(f64, f64)> = report
        .distances
        .iter()
        .filter(|d| d.n_j == last)
        .map(|d| (d.n_i as f64, d.distance))
        .collect();
    line_chart(
        &out_dir.join("sweep.svg"),
        &format!("distance to N = {last}"),
        ("N", Scale::Linear),
        ("distance", Scale::Log),
        &[Series {
            name: format!("N = {last}"),
            points: pts,
        }],
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialData, Preset};


    fn quick() -> SolverConfig {
        SolverConfig {
            p: 4.0,
            n_basis: 4,
            t_final: 0.5,
            initial_data: InitialData::Preset { name: Preset::TwoMode },
            ..SolverConfig::default()
        }
    }

    #[test]
    fn simulate_then_check_all() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick();
        let s = simulate(&cfg, dir.path()).unwrap();
        assert!(s.final_h < s.h0);
        assert_eq!(RunSummary::load(&dir.path().join(SUMMARY_FILE)).unwrap().steps, s.steps);
        let out = check(Suite::All, &cfg, dir.path()).unwrap();
        assert!(out.pass, "{:#?}", out.reports);
        assert!(dir.path().join("check_all.csv").exists());
    }

    #[test]
    fn mismatched_output_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        simulate(&quick(), dir.path()).unwrap();
        let other = SolverConfig { nu: 0.3, ..quick() };
        let err = check(Suite::Energy, &other, dir.path()).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { .. }));
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!("bogus".parse::<Suite>().is_err());
        assert_eq!("weakform".parse::<Suite>().unwrap(), Suite::Weakform);
    }
}
