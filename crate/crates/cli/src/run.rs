//! Experiment orchestration: resolves a config, runs the experiment, writes
//! its artifacts and a manifest listing them together with the verdicts of
//! the invariants the run asserted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use plaplab::dnmap::{dn_table, BoundaryDictionary};
use plaplab::expr::parse_expression;
use plaplab::forward::{solve_dirichlet, DirichletProblem};
use plaplab::io::{field_to_string, FieldData, FieldFile, Location};
use plaplab::monotonicity::{
    check_ordering, detect_difference_region, jaccard, monotonicity_triple, DetectorOptions, UniquenessReport,
};
use plaplab::perturbation::{
    calibrate_epsilon, gradient_stability_study, PerturbationDirection, DEFAULT_CALIBRATION_LADDER, DEFAULT_LADDER,
};
use plaplab::ucp2d::{
    beltrami_coefficients, beltrami_residual, complex_gradient, dual_stream_function, plateau_scan, BeltramiOptions,
};
use plaplab::{Error, MatrixField, Mesh, Result, Sym2};

use crate::config::{DictionarySpec, DirectionSpec, ExperimentConfig, Kind, MatrixSpec, Resolver};

pub const MANIFEST: &str = "manifest.json";

/// Independent random stream for a named suite: ChaCha8 keyed by
/// `sha256(seed || name)`. Adding a suite never shifts another's draws.
pub fn seed_stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Clone, Debug, Serialize)]
pub struct OutputEntry {
    pub step: String,
    pub path: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    pub entry: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub kind: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputEntry>,
    pub verdicts: BTreeMap<String, bool>,
    pub failures: Vec<Failure>,
    pub summary: Value,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.verdicts.values().all(|v| *v)
    }
}

struct Emitter {
    dir: PathBuf,
    outputs: Vec<OutputEntry>,
    verdicts: BTreeMap<String, bool>,
    failures: Vec<Failure>,
    summary: serde_json::Map<String, Value>,
}

impl Emitter {
    fn write(&mut self, step: &str, name: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.outputs.push(OutputEntry {
            step: step.into(),
            path: name.into(),
        });
        Ok(())
    }

    fn write_json(&mut self, step: &str, name: &str, v: &impl Serialize) -> Result<()> {
        let s = serde_json::to_string_pretty(v)? + "\n";
        self.write(step, name, &s)
    }

    fn verdict(&mut self, name: &str, ok: bool) {
        self.verdicts.insert(name.into(), ok);
    }

    fn summary(&mut self, key: &str, v: impl Serialize) -> Result<()> {
        self.summary.insert(key.into(), serde_json::to_value(v)?);
        Ok(())
    }

    fn fail(&mut self, entry: &str, e: &Error) {
        self.failures.push(Failure {
            entry: entry.into(),
            message: e.to_string(),
        });
    }
}

fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg)?;
    Ok(format!("{:x}", Sha256::digest(canonical.as_bytes())))
}

/// Runs `cfg` (kind already set and validated) writing into `out`.
/// Relative paths in the config resolve against `base`.
pub fn run(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<RunManifest> {
    let kind = cfg.kind.ok_or_else(|| Error::InvalidArgument("experiment kind missing".into()))?;
    cfg.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let mut em = Emitter {
        dir: out.to_path_buf(),
        outputs: Vec::new(),
        verdicts: BTreeMap::new(),
        failures: Vec::new(),
        summary: serde_json::Map::new(),
    };
    let r = Resolver { base };
    let mesh = r.mesh(&cfg.mesh)?;
    em.summary("mesh", json!({"vertices": mesh.num_vertices(), "cells": mesh.num_cells()}))?;

    let outcome = match kind {
        Kind::Solve => run_solve(cfg, &r, &mesh, &mut em),
        Kind::Dn => run_dn(cfg, &r, &mesh, &mut em),
        Kind::Mono => run_mono(cfg, &r, &mesh, &mut em),
        Kind::Detect => run_detect(cfg, &r, &mesh, &mut em),
        Kind::Perturb => run_perturb(cfg, &r, &mesh, &mut em),
        Kind::Ucp => run_ucp(cfg, &r, &mesh, &mut em),
        Kind::CalibrateEps => run_calibrate(cfg, &mesh, &mut em),
    };
    match outcome {
        Ok(()) => {}
        Err(e @ Error::ConvergenceFailure { .. }) => {
            em.fail(kind.name(), &e);
            em.verdict("converged", false);
        }
        Err(e) => return Err(e),
    }

    em.outputs.push(OutputEntry {
        step: "manifest".into(),
        path: MANIFEST.into(),
    });
    let manifest = RunManifest {
        config_hash: config_hash(cfg)?,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        kind: kind.name().into(),
        seed: cfg.seed,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: em.outputs,
        verdicts: em.verdicts,
        failures: em.failures,
        summary: Value::Object(em.summary),
    };
    std::fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn check_tol(cfg: &ExperimentConfig, default: f64) -> f64 {
    cfg.tolerances.check.unwrap_or(default)
}

fn scalar_field_text(loc: Location, v: Vec<f64>) -> String {
    field_to_string(&FieldFile {
        location: loc,
        data: FieldData::Scalar(v),
    })
}

fn run_solve(cfg: &ExperimentConfig, r: &Resolver, mesh: &Mesh, em: &mut Emitter) -> Result<()> {
    let sigma = r.scalar(mesh, &cfg.sigma, "sigma")?;
    let a = r.matrix(mesh, &cfg.a)?;
    let f = r.nodal(mesh, &cfg.f, "f")?;
    let sol = solve_dirichlet(&DirichletProblem::new(mesh, &sigma, &a, cfg.p, &f)?, &cfg.solver_options())?;
    em.write_json("solve", "solution.json", &sol)?;
    em.write("solve", "u.field", &scalar_field_text(Location::Vertex, sol.u.values().to_vec()))?;
    em.summary("energy", sol.energy)?;
    em.summary("residual_norm", sol.residual_norm)?;
    em.verdict("converged", sol.residual_norm <= sol.tolerance);
    if let Some(e) = cfg.expect_energy {
        let tol = check_tol(cfg, 1e-8);
        em.verdict("expected_energy", (sol.energy - e).abs() <= tol * e.abs().max(1.0));
    }
    Ok(())
}

fn dictionary(cfg: &ExperimentConfig, r: &Resolver, mesh: &Mesh, default: DictionarySpec) -> Result<BoundaryDictionary> {
    r.dictionary(mesh, cfg.dictionary.as_ref().unwrap_or(&default))
}

fn run_dn(cfg: &ExperimentConfig, r: &Resolver, mesh: &Mesh, em: &mut Emitter) -> Result<()> {
    let sigma = r.scalar(mesh, &cfg.sigma, "sigma")?;
    let a = r.matrix(mesh, &cfg.a)?;
    let dict = dictionary(cfg, r, mesh, DictionarySpec::Linear)?;
    let table = dn_table(mesh, &sigma, &a, cfg.p, &dict, &cfg.solver_options())?;
    em.write("dn", "dn_table.csv", &table.to_csv())?;
    em.write_json("dn", "dn.json", &table)?;
    for (label, msg) in &table.failures {
        em.failures.push(Failure {
            entry: label.clone(),
            message: msg.clone(),
        });
    }
    let tol = check_tol(cfg, 1e-8);
    let ok = table
        .diagonal()
        .iter()
        .zip(&table.energies)
        .filter(|(d, _)| d.is_finite())
        .all(|(d, e)| (d - e).abs() <= tol * (1.0 + e.abs()));
    em.verdict("pairing_equals_energy", ok);
    em.summary("diagonal", table.diagonal())?;
    Ok(())
}

fn run_mono(cfg: &ExperimentConfig, r: &Resolver, mesh: &Mesh, em: &mut Emitter) -> Result<()> {
    let s1 = r.scalar(mesh, &cfg.sigma, "sigma")?;
    let s2 = r.scalar(mesh, cfg.sigma2.as_ref().expect("validated"), "sigma2")?;
    if cfg.assert_ordering {
        // fails before any solve
        check_ordering(mesh, &s1, &s2)?;
        em.verdict("ordering", true);
    }
    let a = r.matrix(mesh, &cfg.a)?;
    let dict = dictionary(cfg, r, mesh, DictionarySpec::Linear)?;
    let opts = cfg.solver_options();
    let results: Vec<_> = dict
        .entries()
        .par_iter()
        .map(|(label, f)| monotonicity_triple(mesh, &s1, &s2, &a, cfg.p, f, label, &opts))
        .collect();
    let mut triples = Vec::new();
    for ((label, _), res) in dict.entries().iter().zip(results) {
        match res {
            Ok(t) => triples.push(t),
            Err(e @ Error::ConvergenceFailure { .. }) => em.fail(label, &e),
            Err(e) => return Err(e),
        }
    }
    let mut csv = String::from("f_id,lower,middle,upper\n");
    for t in &triples {
        let _ = writeln!(csv, "{},{},{},{}", t.f_id, t.lower, t.middle, t.upper);
    }
    em.write("mono", "mono.csv", &csv)?;
    em.verdict("sandwich", triples.iter().all(|t| t.sandwich_holds()));
    let report = UniquenessReport::from_triples(mesh, &s1, &s2, triples);
    em.write_json("mono", "mono.json", &report)?;
    if let Some(rep) = report {
        em.summary("verdict", rep.verdict)?;
        em.summary("max_middle", rep.max_middle)?;
        em.summary("difference_area", rep.difference_area)?;
    }
    Ok(())
}

fn run_detect(cfg: &ExperimentConfig, r: &Resolver, mesh: &Mesh, em: &mut Emitter) -> Result<()> {
    let s1 = r.scalar(mesh, &cfg.sigma, "sigma")?;
    let s2 = r.scalar(mesh, cfg.sigma2.as_ref().expect("validated"), "sigma2")?;
    let a = r.matrix(mesh, &cfg.a)?;
    let dict = dictionary(cfg, r, mesh, DictionarySpec::Bumps { count: 16, width: 0.25 })?;
    let opts = cfg.solver_options();
    // synthetic measurements of the hidden conductivity
    let oracle = dict
        .entries()
        .par_iter()
        .map(|(_, f)| Ok(solve_dirichlet(&DirichletProblem::new(mesh, &s1, &a, cfg.p, f)?, &opts)?.energy))
        .collect::<Result<Vec<f64>>>()?;
    let mut det = DetectorOptions::default();
    if let Some(q) = cfg.quantile {
        det.quantile = q;
    }
    let est = detect_difference_region(mesh, &oracle, &s2, &a, cfg.p, &dict, &opts, &det)?;
    em.write("detect", "scores.field", &scalar_field_text(Location::Cell, est.cell_scores.clone()))?;
    let flags = est.detected.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
    em.write("detect", "detected.field", &scalar_field_text(Location::Cell, flags))?;
    let detected_area: f64 = est.detected_cells().iter().map(|&t| mesh.cell_areas()[t]).sum();
    let mut info = json!({
        "threshold": est.threshold,
        "normalized_gaps": est.normalized_gaps,
        "detected_cells": est.detected_cells().len(),
        "detected_area": detected_area,
    });
    if s1.max_abs_diff(&s2) == 0.0 {
        em.verdict("control_empty", est.detected_cells().is_empty());
    }
    if let Some(t) = &cfg.truth {
        let e = parse_expression(t).map_err(|e| Error::Parse {
            location: "field 'truth'".into(),
            message: e.to_string(),
        })?;
        let truth: Vec<bool> = e.on_cells(mesh).iter().map(|&v| v != 0.0).collect();
        let j = jaccard(&est.detected, &truth);
        info["jaccard"] = json!(j);
        em.verdict("jaccard", j >= 0.5);
    }
    em.summary("detected_area", detected_area)?;
    em.write_json("detect", "detect.json", &info)?;
    Ok(())
}

fn run_perturb(cfg: &ExperimentConfig, r: &Resolver, mesh: &Mesh, em: &mut Emitter) -> Result<()> {
    let sigma = r.scalar(mesh, &cfg.sigma, "sigma")?;
    let a = r.matrix(mesh, &cfg.a)?;
    let f = r.nodal(mesh, &cfg.f, "f")?;
    let direction = match cfg.direction.as_ref().expect("validated") {
        DirectionSpec::Random { random } => {
            let mut rng = seed_stream(cfg.seed, "perturb.direction");
            let ds = (0..mesh.num_cells()).map(|_| random * rng.random_range(-1.0..=1.0)).collect();
            PerturbationDirection::sigma_only(mesh, ds)?
        }
        DirectionSpec::Exprs { sigma: ds, a: da } => {
            let ds = match ds {
                Some(s) => r.nodal_cells(mesh, s, "direction.sigma")?,
                None => vec![0.0; mesh.num_cells()],
            };
            let da = match da {
                Some(es) => {
                    let m = es
                        .iter()
                        .map(|s| r.nodal_cells(mesh, s, "direction.a"))
                        .collect::<Result<Vec<_>>>()?;
                    (0..mesh.num_cells()).map(|t| Sym2::new(m[0][t], m[1][t], m[2][t])).collect()
                }
                None => vec![Sym2::new(0.0, 0.0, 0.0); mesh.num_cells()],
            };
            PerturbationDirection::new(mesh, ds, da)?
        }
    };
    let ladder = cfg.ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    let st = gradient_stability_study(mesh, &sigma, &a, cfg.p, &f, &direction, &ladder, &cfg.solver_options())?;
    em.write("perturb", "perturb.csv", &st.to_csv())?;
    em.write_json("perturb", "perturb.json", &st)?;
    em.verdict(
        "lp_exponent",
        st.fitted_exponent_lp.is_none_or(|e| e >= st.bound_exponent - 0.1),
    );
    em.verdict("bound_form", st.bound_holds() && st.c_fit < 1e3);
    em.verdict(
        "sup_convergence",
        st.sup_monotone(0.1) && st.fitted_exponent_sup.is_none_or(|e| e > 0.0),
    );
    em.verdict("gradient_ratio", st.gradient_ratio_bounded(2.0));
    if cfg.p >= 2.0 {
        em.verdict("identity", st.identity_holds());
    }
    em.summary("fitted_exponent_lp", st.fitted_exponent_lp)?;
    em.summary("fitted_exponent_sup", st.fitted_exponent_sup)?;
    em.summary("c_fit", st.c_fit)?;
    Ok(())
}

fn run_ucp(cfg: &ExperimentConfig, r: &Resolver, mesh: &Mesh, em: &mut Emitter) -> Result<()> {
    if !matches!(&cfg.a, MatrixSpec::Named(s) if s == "identity") {
        return Err(Error::InvalidArgument("ucp diagnostics need A = identity".into()));
    }
    let sigma = r.scalar(mesh, &cfg.sigma, "sigma")?;
    let sigma_v = r.scalar_at_vertices(mesh, &cfg.sigma, "sigma")?;
    let a = MatrixField::identity(mesh);
    let f = r.nodal(mesh, &cfg.f, "f")?;
    let p = cfg.p;
    let sol = solve_dirichlet(&DirichletProblem::new(mesh, &sigma, &a, p, &f)?, &cfg.solver_options())?;

    let coeffs = beltrami_coefficients(p)?;
    let cg = complex_gradient(mesh, &sol.u, &sigma, 0.5 * (p - 2.0))?;
    let big_f: Vec<[f64; 2]> = cg.powered().iter().map(|z| [z.re, z.im]).collect();
    em.write(
        "ucp",
        "F.field",
        &field_to_string(&FieldFile {
            location: Location::Cell,
            data: FieldData::Vector(big_f),
        }),
    )?;
    let residual = match beltrami_residual(mesh, &sol.u, &sigma_v, p, &BeltramiOptions::default()) {
        Ok(rep) => Some(rep),
        Err(Error::InvalidArgument(m)) if m.contains("too coarse") => None,
        Err(e) => return Err(e),
    };
    let dual = dual_stream_function(mesh, &sol.u, &sigma, p)?;
    em.write("ucp", "v.field", &scalar_field_text(Location::Vertex, dual.v.values().to_vec()))?;
    let plateaus = plateau_scan(mesh, &sol.u, cfg.plateau_threshold)?;

    em.verdict("q_sum_below_one", coeffs.sum() < 1.0);
    if let Some(rep) = &residual {
        em.verdict("h_bound", rep.h_bound_holds);
    }
    em.verdict("no_plateau_red_flag", !plateaus.red_flag);
    let info = json!({
        "solution": sol,
        "coefficients": coeffs,
        "beltrami": residual,
        "dual_residual": dual.dual_residual,
        "round_trip_error": dual.round_trip_error,
        "plateaus": plateaus,
    });
    em.summary("normalized_residual", residual.as_ref().map(|r| r.normalized_residual))?;
    em.write_json("ucp", "ucp.json", &info)?;
    Ok(())
}

fn run_calibrate(cfg: &ExperimentConfig, mesh: &Mesh, em: &mut Emitter) -> Result<()> {
    let ladder = cfg.ladder.clone().unwrap_or_else(|| DEFAULT_CALIBRATION_LADDER.to_vec());
    let c = calibrate_epsilon(mesh, cfg.p, &ladder, &cfg.solver_options())?;
    let mut csv = String::from("eps,case,min_gradient,perturbation_size\n");
    for (k, eps) in c.ladder.iter().enumerate() {
        for (j, case) in c.cases.iter().enumerate() {
            let _ = writeln!(csv, "{eps},{case},{},{}", c.min_gradients[k][j], c.perturbation_sizes[k][j]);
        }
    }
    em.write("calibrate-eps", "calibrate.csv", &csv)?;
    em.write_json("calibrate-eps", "calibrate.json", &c)?;
    let small_ok = c
        .min_gradients
        .iter()
        .flatten()
        .zip(c.perturbation_sizes.iter().flatten())
        .filter(|(_, s)| **s <= 0.01)
        .all(|(g, _)| *g >= 0.5);
    em.verdict("gradient_bound_near_identity", small_ok);
    em.summary("calibrated_eps", c.calibrated_eps)?;
    Ok(())
}

impl Resolver<'_> {
    fn nodal_cells(&self, mesh: &Mesh, expr: &str, name: &str) -> Result<Vec<f64>> {
        let e = parse_expression(expr).map_err(|e| Error::Parse {
            location: format!("field '{name}'"),
            message: e.to_string(),
        })?;
        Ok(e.on_cells(mesh))
    }
}
