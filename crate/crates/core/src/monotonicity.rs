//! Monotonicity inequality between the DN maps of two conductivities, the
//! uniqueness experiment built on it, and a detector for the set where two
//! ordered conductivities differ.
//!
//! For the state `u2` of `sigma2` with data `f`,
//!
//! ```text
//! (p-1) int sigma2/sigma1^(1/(p-1)) (sigma1^(1/(p-1)) - sigma2^(1/(p-1))) |A grad u2 . grad u2|^(p/2)
//!     <= <(L_sigma1 - L_sigma2) f, f>
//!     <= int (sigma1 - sigma2) |A grad u2 . grad u2|^(p/2)
//! ```

use rayon::prelude::*;

use crate::dnmap::{pairing_with_state, BoundaryDictionary};
use crate::error::{check_exponent, invalid, Error, Result};
use crate::fields::{MatrixField, ScalarField};
use crate::forward::{energy_densities, solve_dirichlet, DirichletProblem, Solution, SolverOptions};
use crate::geometry::{Mesh, NodalFunction};

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MonotonicityTriple {
    pub f_id: String,
    pub lower: f64,
    pub middle: f64,
    pub upper: f64,
}

impl MonotonicityTriple {
    /// Scale-aware slack `1e-6 (1 + |upper|)`.
    pub fn tolerance(&self) -> f64 {
        1e-6 * (1.0 + self.upper.abs())
    }

    /// `lower <= middle + tol <= upper + 2 tol`.
    pub fn sandwich_holds(&self) -> bool {
        let tol = self.tolerance();
        self.lower <= self.middle + tol && self.middle + tol <= self.upper + 2.0 * tol
    }

    /// All three terms are `<= tol` (the reversed ordering).
    pub fn all_nonpositive(&self) -> bool {
        let tol = self.tolerance();
        self.lower <= tol && self.middle <= tol && self.upper <= tol
    }
}

/// Cellwise factor `(p-1) sigma2 sigma1^(-1/(p-1)) (sigma1^(1/(p-1)) - sigma2^(1/(p-1)))`
/// multiplying `|A grad u2 . grad u2|^(p/2)` in the lower bound.
pub fn lower_bound_weights(sigma1: &ScalarField, sigma2: &ScalarField, p: f64) -> Vec<f64> {
    let r = 1.0 / (p - 1.0);
    sigma1
        .values()
        .iter()
        .zip(sigma2.values())
        .map(|(&s1, &s2)| (p - 1.0) * s2 / s1.powf(r) * (s1.powf(r) - s2.powf(r)))
        .collect()
}

/// `|A grad u . grad u|^(p/2)` per cell.
fn gradient_powers(mesh: &Mesh, a: &MatrixField, p: f64, u: &NodalFunction) -> Result<Vec<f64>> {
    let ones = ScalarField::constant(mesh, 1.0)?;
    energy_densities(mesh, &ones, a, p, u)
}

/// Lower and upper terms from a computed `sigma2` state.
pub fn bounds_from_state(
    mesh: &Mesh,
    sigma1: &ScalarField,
    sigma2: &ScalarField,
    a: &MatrixField,
    p: f64,
    u2: &NodalFunction,
) -> Result<(f64, f64)> {
    let dens = gradient_powers(mesh, a, p, u2)?;
    let weights = lower_bound_weights(sigma1, sigma2, p);
    let mut lower = 0.0;
    let mut upper = 0.0;
    for t in 0..mesh.num_cells() {
        let area = mesh.cell_areas()[t];
        lower += weights[t] * dens[t] * area;
        upper += (sigma1.values()[t] - sigma2.values()[t]) * dens[t] * area;
    }
    Ok((lower, upper))
}

fn check_pair(mesh: &Mesh, sigma1: &ScalarField, sigma2: &ScalarField) -> Result<()> {
    if sigma1.len() != mesh.num_cells() || sigma2.len() != mesh.num_cells() {
        return invalid("conductivities do not match the mesh");
    }
    Ok(())
}

/// The three terms of the monotonicity inequality for boundary data `f`.
/// The middle term is the difference of two independently solved pairings.
#[allow(clippy::too_many_arguments)]
pub fn monotonicity_triple(
    mesh: &Mesh,
    sigma1: &ScalarField,
    sigma2: &ScalarField,
    a: &MatrixField,
    p: f64,
    f: &NodalFunction,
    f_id: &str,
    opts: &SolverOptions,
) -> Result<MonotonicityTriple> {
    check_exponent(p)?;
    check_pair(mesh, sigma1, sigma2)?;
    let u1 = solve_dirichlet(&DirichletProblem::new(mesh, sigma1, a, p, f)?, opts)?;
    let u2 = solve_dirichlet(&DirichletProblem::new(mesh, sigma2, a, p, f)?, opts)?;
    triple_from_states(mesh, sigma1, sigma2, a, p, f, f_id, &u1, &u2)
}

#[allow(clippy::too_many_arguments)]
fn triple_from_states(
    mesh: &Mesh,
    sigma1: &ScalarField,
    sigma2: &ScalarField,
    a: &MatrixField,
    p: f64,
    f: &NodalFunction,
    f_id: &str,
    u1: &Solution,
    u2: &Solution,
) -> Result<MonotonicityTriple> {
    let d1 = pairing_with_state(mesh, sigma1, a, p, &u1.u, f)?;
    let d2 = pairing_with_state(mesh, sigma2, a, p, &u2.u, f)?;
    let (lower, upper) = bounds_from_state(mesh, sigma1, sigma2, a, p, &u2.u)?;
    Ok(MonotonicityTriple {
        f_id: f_id.to_string(),
        lower,
        middle: d1 - d2,
        upper,
    })
}

/// `beta -> (1 + beta)^p' / beta` on a grid, with its argmin.
#[derive(Clone, Debug, serde::Serialize)]
pub struct BetaTable {
    pub p: f64,
    pub betas: Vec<f64>,
    pub values: Vec<f64>,
    pub argmin: f64,
}

impl BetaTable {
    /// Values strictly decrease up to the argmin and strictly increase after.
    pub fn is_unimodal(&self) -> bool {
        let k = self.betas.iter().position(|&b| b == self.argmin).unwrap_or(0);
        self.values[..=k].windows(2).all(|w| w[1] < w[0])
            && self.values[k..].windows(2).all(|w| w[1] > w[0])
    }
}

/// The Young-inequality constant `(1 + beta)^p' / beta`, `p' = p / (p - 1)`.
pub fn beta_bound_constant(p: f64, beta: f64) -> f64 {
    let pp = p / (p - 1.0);
    (1.0 + beta).powf(pp) / beta
}

pub fn beta_optimality_check(p: f64, beta_grid: &[f64]) -> Result<BetaTable> {
    check_exponent(p)?;
    if beta_grid.is_empty() {
        return invalid("beta grid is empty");
    }
    if let Some(b) = beta_grid.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
        return invalid(format!("beta must be positive, got {b}"));
    }
    let values: Vec<f64> = beta_grid.iter().map(|&b| beta_bound_constant(p, b)).collect();
    let k = values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, _)| k)
        .unwrap();
    Ok(BetaTable {
        p,
        betas: beta_grid.to_vec(),
        values,
        argmin: beta_grid[k],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Distinguishable,
    Indistinguishable,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct UniquenessReport {
    pub triples: Vec<MonotonicityTriple>,
    /// Area of `E = {sigma1 > sigma2}`.
    pub difference_area: f64,
    pub max_middle: f64,
    /// Entry attaining `max_middle`.
    pub best_entry: String,
    /// Lower bound of that entry, i.e. the weighted integral over `E`
    /// of `|A grad u2 . grad u2|^(p/2)`.
    pub certified_lower: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// `PreconditionViolation` naming the first cell where `sigma1 < sigma2`.
pub fn check_ordering(mesh: &Mesh, sigma1: &ScalarField, sigma2: &ScalarField) -> Result<()> {
    check_pair(mesh, sigma1, sigma2)?;
    if let Some(t) = (0..mesh.num_cells()).find(|&t| sigma1.values()[t] < sigma2.values()[t]) {
        return Err(Error::PreconditionViolation(format!(
            "sigma1 < sigma2 at cell {t}; the experiment needs sigma1 >= sigma2"
        )));
    }
    Ok(())
}

impl UniquenessReport {
    /// Summarizes computed triples; `None` when there are none.
    pub fn from_triples(
        mesh: &Mesh,
        sigma1: &ScalarField,
        sigma2: &ScalarField,
        triples: Vec<MonotonicityTriple>,
    ) -> Option<Self> {
        let difference_area: f64 = (0..mesh.num_cells())
            .filter(|&t| sigma1.values()[t] > sigma2.values()[t])
            .map(|t| mesh.cell_areas()[t])
            .sum();
        let best = triples.iter().max_by(|x, y| x.middle.total_cmp(&y.middle))?.clone();
        let tolerance = triples.iter().map(|t| t.tolerance()).fold(0.0, f64::max);
        let verdict = if best.middle > tolerance {
            Verdict::Distinguishable
        } else {
            Verdict::Indistinguishable
        };
        Some(UniquenessReport {
            difference_area,
            max_middle: best.middle,
            best_entry: best.f_id,
            certified_lower: best.lower,
            tolerance,
            verdict,
            triples,
        })
    }
}

/// With `sigma1 >= sigma2`, any strict excess on a set of positive area
/// forces a positive DN gap for data whose `sigma2` state has a nonzero
/// gradient there.
pub fn uniqueness_experiment(
    mesh: &Mesh,
    sigma1: &ScalarField,
    sigma2: &ScalarField,
    a: &MatrixField,
    p: f64,
    dict: &BoundaryDictionary,
    opts: &SolverOptions,
) -> Result<UniquenessReport> {
    check_exponent(p)?;
    check_ordering(mesh, sigma1, sigma2)?;
    let triples = dict
        .entries()
        .par_iter()
        .map(|(label, f)| monotonicity_triple(mesh, sigma1, sigma2, a, p, f, label, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(UniquenessReport::from_triples(mesh, sigma1, sigma2, triples).expect("dictionaries are nonempty"))
}

#[derive(Clone, Debug)]
pub struct DetectorOptions {
    /// Cells scoring above this quantile of all scores are flagged.
    pub quantile: f64,
    /// Normalized gaps at or below this value count as zero.
    pub gap_tolerance: f64,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            quantile: 0.9,
            gap_tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct DifferenceRegionEstimate {
    pub cell_scores: Vec<f64>,
    pub detected: Vec<bool>,
    pub threshold: f64,
    /// `(<L_sigma1 f, f> - <L_sigma2 f, f>) / <L_sigma2 f, f>` per entry.
    pub normalized_gaps: Vec<f64>,
}

impl DifferenceRegionEstimate {
    pub fn detected_cells(&self) -> Vec<usize> {
        (0..self.detected.len()).filter(|&t| self.detected[t]).collect()
    }
}

/// Jaccard index of two cell sets.
pub fn jaccard(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Detector for `E = {sigma1 > sigma2}` from measured pairings of the
/// hidden `sigma1`.
///
/// `oracle[i] = <L_sigma1 f_i, f_i>`. For every entry the reference state
/// `u2` of `sigma2` is solved; its cell energies `e_T` and total `E_2`
/// give the normalized gap `gap = (oracle - E_2) / E_2` and the energy
/// share `s_T = e_T / E_2` of each cell. The score of a cell is
/// `min_f gap(f) / s_T(f)`: a cell can only belong to `E` if every probe
/// that puts energy on it also sees a proportional gap.
pub fn detect_difference_region(
    mesh: &Mesh,
    oracle: &[f64],
    sigma2: &ScalarField,
    a: &MatrixField,
    p: f64,
    dict: &BoundaryDictionary,
    opts: &SolverOptions,
    det: &DetectorOptions,
) -> Result<DifferenceRegionEstimate> {
    check_exponent(p)?;
    if oracle.len() != dict.len() {
        return invalid(format!(
            "oracle has {} pairings for a dictionary of {} entries",
            oracle.len(),
            dict.len()
        ));
    }
    if !(det.quantile >= 0.0 && det.quantile <= 1.0) {
        return invalid(format!("quantile must lie in [0, 1], got {}", det.quantile));
    }
    let states = dict
        .entries()
        .par_iter()
        .map(|(_, f)| {
            let sol = solve_dirichlet(&DirichletProblem::new(mesh, sigma2, a, p, f)?, opts)?;
            let dens = energy_densities(mesh, sigma2, a, p, &sol.u)?;
            let shares: Vec<f64> = dens
                .iter()
                .zip(mesh.cell_areas())
                .map(|(d, ar)| d * ar / sol.energy)
                .collect();
            Ok((sol.energy, shares))
        })
        .collect::<Result<Vec<_>>>()?;

    let normalized_gaps: Vec<f64> = states
        .iter()
        .zip(oracle)
        .map(|((e2, _), o)| {
            let g = (o - e2) / e2;
            if g.abs() <= det.gap_tolerance || !g.is_finite() {
                0.0
            } else {
                g
            }
        })
        .collect();

    // T inside E forces gap(f) >= c e_T(f) / E_2 for every f, so the
    // smallest ratio over the dictionary bounds the admissible contrast on T.
    let cell_scores: Vec<f64> = (0..mesh.num_cells())
        .map(|t| {
            let ratio = states
                .iter()
                .zip(&normalized_gaps)
                .filter(|((_, shares), _)| shares[t] > 0.0)
                .map(|((_, shares), g)| g.max(0.0) / shares[t])
                .fold(f64::INFINITY, f64::min);
            if ratio.is_finite() {
                ratio
            } else {
                0.0
            }
        })
        .collect();

    let threshold = quantile(&cell_scores, det.quantile).max(0.0);
    let detected = cell_scores.iter().map(|&s| s > threshold).collect();
    Ok(DifferenceRegionEstimate {
        cell_scores,
        detected,
        threshold,
        normalized_gaps,
    })
}

/// Linear-interpolated empirical quantile.
fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return 0.0;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}
