//! Stability of the gradient under perturbations of the coefficients, the
//! nonvanishing-gradient property near `sigma = 1, A = I`, and an
//! empirical check of the sup-norm interpolation inequality
//! `|f|_inf <= C M0^(1-theta) M1^theta`.

use rayon::prelude::*;

use crate::error::{check_exponent, invalid, Result};
use crate::fields::{holder_report_nodal, MatrixField, ScalarField, Sym2};
use crate::forward::{solve_dirichlet, DirichletProblem, Solution, SolverOptions};
use crate::geometry::{gradient, Mesh, NodalFunction, Point};

/// Default perturbation sizes; below `1e-3` the solver tolerance starts to
/// pollute the ratios.
pub const DEFAULT_LADDER: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

/// Cellwise direction `(delta sigma, delta A)` of a coefficient perturbation.
#[derive(Clone, Debug)]
pub struct PerturbationDirection {
    pub dsigma: Vec<f64>,
    pub da: Vec<Sym2>,
}

impl PerturbationDirection {
    pub fn new(mesh: &Mesh, dsigma: Vec<f64>, da: Vec<Sym2>) -> Result<Self> {
        if dsigma.len() != mesh.num_cells() || da.len() != mesh.num_cells() {
            return invalid("perturbation direction does not match the mesh");
        }
        Ok(Self { dsigma, da })
    }

    pub fn zero(mesh: &Mesh) -> Self {
        let n = mesh.num_cells();
        Self {
            dsigma: vec![0.0; n],
            da: vec![Sym2::new(0.0, 0.0, 0.0); n],
        }
    }

    pub fn sigma_only(mesh: &Mesh, dsigma: Vec<f64>) -> Result<Self> {
        let n = mesh.num_cells();
        Self::new(mesh, dsigma, vec![Sym2::new(0.0, 0.0, 0.0); n])
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct StabilityStudy {
    pub p: f64,
    pub eps_ladder: Vec<f64>,
    /// `|grad u1 - grad u0|_Lp / |grad u0|_Lp`.
    pub lp_ratios: Vec<f64>,
    /// `|grad u1 - grad u0|_inf`.
    pub sup_norms: Vec<f64>,
    /// `|grad u1|_Lp / |grad u0|_Lp`.
    pub gradient_ratios: Vec<f64>,
    /// For `p >= 2`: `(I, int |grad u1 - grad u0|^p)` with
    /// `I = int (|grad u1| + |grad u0|)^(p-2) |grad u1 - grad u0|^2`.
    pub identity_pairs: Vec<(f64, f64)>,
    /// `min(1/(p-1), 1)`.
    pub bound_exponent: f64,
    /// `max_k lp_ratio_k / eps_k^bound_exponent`.
    pub c_fit: f64,
    pub fitted_exponent_lp: Option<f64>,
    pub fitted_exponent_sup: Option<f64>,
}

impl StabilityStudy {
    /// `lp_ratio <= c_fit eps^bound_exponent` on every entry.
    pub fn bound_holds(&self) -> bool {
        self.eps_ladder
            .iter()
            .zip(&self.lp_ratios)
            .all(|(e, r)| *r <= self.c_fit * e.powf(self.bound_exponent) * (1.0 + 1e-12))
    }

    /// Sup norms shrink along the ladder, allowing a relative slack.
    pub fn sup_monotone(&self, slack: f64) -> bool {
        self.sup_norms.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0])
    }

    pub fn identity_holds(&self) -> bool {
        self.identity_pairs.iter().all(|(i, d)| *i >= *d * (1.0 - 1e-12) - 1e-300)
    }

    /// Gradient-norm ratio bounded by `bound` for all `eps <= 0.1`.
    pub fn gradient_ratio_bounded(&self, bound: f64) -> bool {
        self.eps_ladder
            .iter()
            .zip(&self.gradient_ratios)
            .filter(|(e, _)| **e <= 0.1)
            .all(|(_, r)| *r <= bound)
    }

    /// CSV rows `eps,lp_ratio,sup_norm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,lp_ratio,sup_norm\n");
        for ((e, r), m) in self.eps_ladder.iter().zip(&self.lp_ratios).zip(&self.sup_norms) {
            s.push_str(&format!("{e:.17e},{r:.17e},{m:.17e}\n"));
        }
        s
    }
}

/// Least-squares slope of `log y` against `log x` over the pairs with
/// `y > 0`; `None` with fewer than two such pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

struct GradientComparison {
    diff_lp: f64,
    base_lp: f64,
    pert_lp: f64,
    sup: f64,
    identity: f64,
    diff_p: f64,
}

fn compare_gradients(mesh: &Mesh, p: f64, u0: &NodalFunction, u1: &NodalFunction) -> Result<GradientComparison> {
    let g0 = gradient(mesh, u0)?;
    let g1 = gradient(mesh, u1)?;
    let mut c = GradientComparison {
        diff_lp: 0.0,
        base_lp: 0.0,
        pert_lp: 0.0,
        sup: 0.0,
        identity: 0.0,
        diff_p: 0.0,
    };
    for t in 0..mesh.num_cells() {
        let area = mesh.cell_areas()[t];
        let (a, b) = (g0.vectors()[t], g1.vectors()[t]);
        let d = (b[0] - a[0]).hypot(b[1] - a[1]);
        let (na, nb) = (a[0].hypot(a[1]), b[0].hypot(b[1]));
        c.diff_p += d.powf(p) * area;
        c.base_lp += na.powf(p) * area;
        c.pert_lp += nb.powf(p) * area;
        c.sup = c.sup.max(d);
        if p >= 2.0 && d > 0.0 {
            c.identity += (na + nb).powf(p - 2.0) * d * d * area;
        }
    }
    c.diff_lp = c.diff_p.powf(1.0 / p);
    c.base_lp = c.base_lp.powf(1.0 / p);
    c.pert_lp = c.pert_lp.powf(1.0 / p);
    Ok(c)
}

/// Solves with `(sigma0 + eps dsigma, A0 + eps dA)` for each `eps` of the
/// ladder, all with data `f`, and compares gradients against the
/// unperturbed state.
#[allow(clippy::too_many_arguments)]
pub fn gradient_stability_study(
    mesh: &Mesh,
    sigma0: &ScalarField,
    a0: &MatrixField,
    p: f64,
    f: &NodalFunction,
    direction: &PerturbationDirection,
    eps_ladder: &[f64],
    opts: &SolverOptions,
) -> Result<StabilityStudy> {
    check_exponent(p)?;
    if eps_ladder.is_empty() {
        return invalid("eps ladder is empty");
    }
    if eps_ladder.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps_ladder.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("eps ladder must be positive and strictly decreasing");
    }
    if direction.dsigma.len() != mesh.num_cells() || direction.da.len() != mesh.num_cells() {
        return invalid("perturbation direction does not match the mesh");
    }
    let coeffs = eps_ladder
        .iter()
        .map(|&eps| {
            let s: Vec<f64> = sigma0
                .values()
                .iter()
                .zip(&direction.dsigma)
                .map(|(s, d)| s + eps * d)
                .collect();
            let m: Vec<Sym2> = a0
                .matrices()
                .iter()
                .zip(&direction.da)
                .map(|(a, d)| a.add_scaled(eps, d))
                .collect();
            let sigma = ScalarField::new(mesh, s)
                .map_err(|e| crate::Error::InvalidArgument(format!("eps = {eps}: {e}")))?;
            let a = MatrixField::new(mesh, m)
                .map_err(|e| crate::Error::InvalidArgument(format!("eps = {eps}: {e}")))?;
            Ok((sigma, a))
        })
        .collect::<Result<Vec<_>>>()?;

    let base = solve_dirichlet(&DirichletProblem::new(mesh, sigma0, a0, p, f)?, opts)?;
    let rows = coeffs
        .par_iter()
        .map(|(sigma, a)| {
            // the unperturbed state is a good interior seed
            let sol = solve_dirichlet(&DirichletProblem::new(mesh, sigma, a, p, &base.u)?, opts)?;
            compare_gradients(mesh, p, &base.u, &sol.u)
        })
        .collect::<Result<Vec<_>>>()?;

    let scale = if rows[0].base_lp > 0.0 { rows[0].base_lp } else { 1.0 };
    let lp_ratios: Vec<f64> = rows.iter().map(|r| r.diff_lp / scale).collect();
    let sup_norms: Vec<f64> = rows.iter().map(|r| r.sup).collect();
    let gradient_ratios = rows.iter().map(|r| r.pert_lp / scale).collect();
    let identity_pairs = if p >= 2.0 {
        rows.iter().map(|r| (r.identity, r.diff_p)).collect()
    } else {
        Vec::new()
    };
    let bound_exponent = (1.0 / (p - 1.0)).min(1.0);
    let c_fit = eps_ladder
        .iter()
        .zip(&lp_ratios)
        .map(|(e, r)| r / e.powf(bound_exponent))
        .fold(0.0, f64::max);
    Ok(StabilityStudy {
        p,
        eps_ladder: eps_ladder.to_vec(),
        fitted_exponent_lp: loglog_slope(eps_ladder, &lp_ratios),
        fitted_exponent_sup: loglog_slope(eps_ladder, &sup_norms),
        lp_ratios,
        sup_norms,
        gradient_ratios,
        identity_pairs,
        bound_exponent,
        c_fit,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct NonvanishingReport {
    pub solution: Solution,
    pub min_gradient: f64,
    /// `|sigma - 1|_inf + |A - I|_inf` (entrywise max for `A`).
    pub perturbation_size: f64,
}

impl NonvanishingReport {
    pub fn gradient_bound_holds(&self) -> bool {
        self.min_gradient >= 0.5
    }
}

/// Solves with boundary data `x1` and reports the smallest cell gradient.
pub fn nonvanishing_gradient_solution(
    mesh: &Mesh,
    sigma: &ScalarField,
    a: &MatrixField,
    p: f64,
    opts: &SolverOptions,
) -> Result<NonvanishingReport> {
    let f = NodalFunction::interpolate(mesh, |x| x[0]);
    let solution = solve_dirichlet(&DirichletProblem::new(mesh, sigma, a, p, &f)?, opts)?;
    let min_gradient = gradient(mesh, &solution.u)?.norms().into_iter().fold(f64::INFINITY, f64::min);
    let ds = sigma.values().iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let da = a
        .matrices()
        .iter()
        .map(|m| m.sub(&Sym2::IDENTITY).max_abs())
        .fold(0.0, f64::max);
    Ok(NonvanishingReport {
        solution,
        min_gradient,
        perturbation_size: ds + da,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct EpsCalibration {
    pub p: f64,
    pub ladder: Vec<f64>,
    pub cases: Vec<String>,
    /// `min_gradients[k][c]` for ladder entry `k` and case `c`.
    pub min_gradients: Vec<Vec<f64>>,
    pub perturbation_sizes: Vec<Vec<f64>>,
    /// Largest ladder value at which, together with every smaller ladder
    /// value, all cases keep `min |grad u| >= 1/2`.
    pub calibrated_eps: Option<f64>,
}

pub const DEFAULT_CALIBRATION_LADDER: [f64; 10] = [8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01];

type Case = (&'static str, fn(Point, f64) -> f64, fn(Point, f64) -> Sym2);

fn in_centre(x: Point) -> bool {
    (0.375..0.625).contains(&x[0]) && (0.375..0.625).contains(&x[1])
}

fn calibration_cases() -> [Case; 4] {
    fn unit_a(_: Point, _: f64) -> Sym2 {
        Sym2::IDENTITY
    }
    fn unit_s(_: Point, _: f64) -> f64 {
        1.0
    }
    [
        ("sigma_inclusion", |x, e| 1.0 + if in_centre(x) { e } else { 0.0 }, unit_a),
        (
            "sigma_bump",
            |x, e| 1.0 + e * (-((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)) / 0.04).exp(),
            unit_a,
        ),
        ("a_inclusion", unit_s, |x, e| Sym2::diag(1.0 + if in_centre(x) { e } else { 0.0 }, 1.0)),
        ("sigma_reciprocal", |x, e| 1.0 / (1.0 + if in_centre(x) { e } else { 0.0 }), unit_a),
    ]
}

/// Empirical size of the neighbourhood of `(1, I)` on which the solution
/// with data `x1` keeps `|grad u| >= 1/2`, over a fixed set of inclusion
/// and bump perturbations of the unit square.
pub fn calibrate_epsilon(mesh: &Mesh, p: f64, ladder: &[f64], opts: &SolverOptions) -> Result<EpsCalibration> {
    check_exponent(p)?;
    if ladder.is_empty() || ladder.iter().any(|e| !(*e > 0.0)) || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("calibration ladder must be positive and strictly decreasing");
    }
    let cases = calibration_cases();
    let jobs: Vec<(usize, usize)> = (0..ladder.len()).flat_map(|k| (0..cases.len()).map(move |c| (k, c))).collect();
    let results = jobs
        .par_iter()
        .map(|&(k, c)| {
            let (_, fs, fa) = cases[c];
            let eps = ladder[k];
            let sigma = ScalarField::from_fn(mesh, |x| fs(x, eps))?;
            let a = MatrixField::from_fn(mesh, |x| fa(x, eps))?;
            let r = nonvanishing_gradient_solution(mesh, &sigma, &a, p, opts)?;
            Ok((r.min_gradient, r.perturbation_size))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = cases.len();
    let min_gradients: Vec<Vec<f64>> = results.chunks(m).map(|r| r.iter().map(|x| x.0).collect()).collect();
    let perturbation_sizes = results.chunks(m).map(|r| r.iter().map(|x| x.1).collect()).collect();
    let mut calibrated_eps = None;
    for k in (0..ladder.len()).rev() {
        if min_gradients[k].iter().all(|&g| g >= 0.5) {
            calibrated_eps = Some(ladder[k]);
        } else {
            break;
        }
    }
    Ok(EpsCalibration {
        p,
        ladder: ladder.to_vec(),
        cases: cases.iter().map(|c| c.0.to_string()).collect(),
        min_gradients,
        perturbation_sizes,
        calibrated_eps,
    })
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct InterpolationCheck {
    pub lhs: f64,
    pub m0: f64,
    pub m1: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Discrete `L^p` norm with the vertex-average quadrature
/// `sum_T |T| mean_{v in T} |f(v)|^p`.
pub fn discrete_lp_norm(mesh: &Mesh, f: &NodalFunction, p: f64) -> Result<f64> {
    if f.len() != mesh.num_vertices() {
        return invalid("nodal function does not match the mesh");
    }
    let s: f64 = mesh
        .triangles()
        .iter()
        .zip(mesh.cell_areas())
        .map(|(tri, area)| area * tri.iter().map(|&v| f.values()[v].abs().powf(p)).sum::<f64>() / 3.0)
        .sum();
    Ok(s.powf(1.0 / p))
}

/// `lhs = |f|_inf`, `M0 = |f|_Lp`, `M1 = |f|_{C^beta}`, `rhs = M0^(1-theta) M1^theta`.
/// Admissible `theta` lies in `((2/p)/(beta + 2/p), 1]`.
pub fn interpolation_check(f: &NodalFunction, mesh: &Mesh, p: f64, beta: f64, theta: f64) -> Result<InterpolationCheck> {
    check_exponent(p)?;
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(format!("beta must lie in (0, 1), got {beta}"));
    }
    let lo = (2.0 / p) / (beta + 2.0 / p);
    if !(theta > lo && theta <= 1.0) {
        return invalid(format!("theta must lie in ({lo}, 1], got {theta}"));
    }
    let lhs = f.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let m0 = discrete_lp_norm(mesh, f, p)?;
    let m1 = holder_report_nodal(mesh, f, beta)?.norm();
    let rhs = m0.powf(1.0 - theta) * m1.powf(theta);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(InterpolationCheck { lhs, m0, m1, rhs, ratio })
}
