//! Dirichlet problem for `div(sigma |A grad u . grad u|^((p-2)/2) A grad u) = 0`
//! solved by minimizing the discrete p-Dirichlet energy
//! `E_p(v) = sum_T sigma_T (A_T g_T . g_T)^(p/2) |T|` over nodal functions
//! that agree with the boundary data on boundary vertices.
//!
//! The integrand is regularized as `(eps^2 + A g . g)^(p/2)` and `eps` is
//! driven to its final value by continuation. Each level is minimized by
//! damped Newton with an Armijo backtracking line search.

use crate::error::{check_exponent, invalid, Error, Result};
use crate::fields::{MatrixField, ScalarField, Sym2};
use crate::geometry::{cell_gradient, gradient, Mesh, NodalFunction};
use crate::linalg::Skyline;

fn check_sizes(mesh: &Mesh, sigma: &ScalarField, a: &MatrixField, v: &NodalFunction) -> Result<()> {
    if sigma.len() != mesh.num_cells() || a.len() != mesh.num_cells() {
        return invalid("coefficient fields do not match the mesh");
    }
    if v.len() != mesh.num_vertices() {
        return invalid("nodal function does not match the mesh");
    }
    Ok(())
}

/// Density `sigma (eps^2 + A g . g)^(p/2)` of one cell.
#[inline]
fn density(sigma: f64, a: &Sym2, g: [f64; 2], p: f64, eps: f64) -> f64 {
    let base = eps * eps + a.quad(g);
    sigma * base.powf(0.5 * p)
}

/// Flux `sigma |A g . g|^((p-2)/2) A g`, extended by zero at `g = 0`.
#[inline]
pub(crate) fn cell_flux(sigma: f64, a: &Sym2, g: [f64; 2], p: f64) -> [f64; 2] {
    let s = a.quad(g);
    if s == 0.0 {
        return [0.0, 0.0];
    }
    let w = sigma * s.powf(0.5 * p - 1.0);
    let ag = a.apply(g);
    [w * ag[0], w * ag[1]]
}

/// Discrete p-Dirichlet energy, exact for piecewise-linear `v`.
pub fn p_energy(mesh: &Mesh, sigma: &ScalarField, a: &MatrixField, p: f64, v: &NodalFunction) -> Result<f64> {
    check_exponent(p)?;
    check_sizes(mesh, sigma, a, v)?;
    Ok(energy_eps(mesh, sigma, a, p, v.values(), 0.0))
}

/// Cellwise energy densities `sigma_T |A g . g|^(p/2)` (without the area).
pub fn energy_densities(mesh: &Mesh, sigma: &ScalarField, a: &MatrixField, p: f64, v: &NodalFunction) -> Result<Vec<f64>> {
    check_exponent(p)?;
    check_sizes(mesh, sigma, a, v)?;
    Ok((0..mesh.num_cells())
        .map(|t| {
            let g = cell_gradient(mesh, v.values(), t);
            density(sigma.values()[t], &a.matrices()[t], g, p, 0.0)
        })
        .collect())
}

fn energy_eps(mesh: &Mesh, sigma: &ScalarField, a: &MatrixField, p: f64, v: &[f64], eps: f64) -> f64 {
    let mut e = 0.0;
    for t in 0..mesh.num_cells() {
        let g = cell_gradient(mesh, v, t);
        e += density(sigma.values()[t], &a.matrices()[t], g, p, eps) * mesh.cell_areas()[t];
    }
    e
}

/// Gradient of the regularized energy with respect to the nodal values.
/// Boundary entries are zero.
pub fn energy_gradient(
    mesh: &Mesh,
    sigma: &ScalarField,
    a: &MatrixField,
    p: f64,
    v: &NodalFunction,
    eps: f64,
) -> Result<Vec<f64>> {
    check_exponent(p)?;
    check_sizes(mesh, sigma, a, v)?;
    if !(eps >= 0.0) {
        return invalid(format!("regularization must be nonnegative, got {eps}"));
    }
    let mut r = vec![0.0; mesh.num_vertices()];
    accumulate_gradient(mesh, sigma, a, p, v.values(), eps, |i, val| r[i] += val);
    for (i, ri) in r.iter_mut().enumerate() {
        if mesh.is_boundary(i) {
            *ri = 0.0;
        }
    }
    Ok(r)
}

fn accumulate_gradient(
    mesh: &Mesh,
    sigma: &ScalarField,
    a: &MatrixField,
    p: f64,
    v: &[f64],
    eps: f64,
    mut sink: impl FnMut(usize, f64),
) {
    for t in 0..mesh.num_cells() {
        let g = cell_gradient(mesh, v, t);
        let m = &a.matrices()[t];
        let base = eps * eps + m.quad(g);
        if base == 0.0 {
            continue;
        }
        let w = p * sigma.values()[t] * base.powf(0.5 * p - 1.0) * mesh.cell_areas()[t];
        let ag = m.apply(g);
        let grads = mesh.shape_gradients(t);
        for (k, &vk) in mesh.triangles()[t].iter().enumerate() {
            sink(vk, w * (ag[0] * grads[k][0] + ag[1] * grads[k][1]));
        }
    }
}

/// Dirichlet problem data. Only the boundary values of `f` are binding;
/// its interior values seed the solver.
#[derive(Clone, Copy, Debug)]
pub struct DirichletProblem<'a> {
    pub mesh: &'a Mesh,
    pub sigma: &'a ScalarField,
    pub a: &'a MatrixField,
    pub p: f64,
    pub f: &'a NodalFunction,
}

impl<'a> DirichletProblem<'a> {
    pub fn new(
        mesh: &'a Mesh,
        sigma: &'a ScalarField,
        a: &'a MatrixField,
        p: f64,
        f: &'a NodalFunction,
    ) -> Result<Self> {
        check_exponent(p)?;
        check_sizes(mesh, sigma, a, f)?;
        Ok(Self { mesh, sigma, a, p, f })
    }
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Absolute residual tolerance; `None` means `1e-10 * (E_p(f) + 1)`.
    pub tol: Option<f64>,
    /// Regularization levels; `None` means the default ladder.
    pub eps_schedule: Option<Vec<f64>>,
    /// Newton iterations allowed per regularization level.
    pub max_iterations: usize,
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: None,
            eps_schedule: None,
            max_iterations: 200,
            armijo: 1e-4,
            backtrack: 0.5,
        }
    }
}

/// `1e-1, 1e-2, ..., 1e-8`, followed by `0` when `p >= 2`.
pub fn default_eps_schedule(p: f64) -> Vec<f64> {
    let mut s: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
    if p >= 2.0 {
        s.push(0.0);
    }
    s
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct Solution {
    #[serde(skip)]
    pub u: NodalFunction,
    /// Unregularized energy `E_p(u)`.
    pub energy: f64,
    pub residual_norm: f64,
    pub tolerance: f64,
    pub iterations: usize,
    pub regularization_eps: f64,
    /// Regularized energy at the end of each continuation level.
    pub level_energies: Vec<f64>,
    pub gradient_steps: usize,
}

struct Workspace<'a> {
    problem: DirichletProblem<'a>,
    /// Interior index of each vertex, `usize::MAX` on the boundary.
    dof: Vec<usize>,
    interior: Vec<usize>,
    matrix: Skyline,
}

impl<'a> Workspace<'a> {
    fn new(problem: DirichletProblem<'a>) -> Self {
        let mesh = problem.mesh;
        let interior = mesh.interior_vertices();
        let mut dof = vec![usize::MAX; mesh.num_vertices()];
        for (k, &v) in interior.iter().enumerate() {
            dof[v] = k;
        }
        let mut first: Vec<usize> = (0..interior.len()).collect();
        for tri in mesh.triangles() {
            for &i in tri {
                for &j in tri {
                    let (di, dj) = (dof[i], dof[j]);
                    if di != usize::MAX && dj != usize::MAX && dj < di {
                        first[di] = first[di].min(dj);
                    }
                }
            }
        }
        Self {
            problem,
            dof,
            interior,
            matrix: Skyline::new(first),
        }
    }

    fn energy(&self, u: &[f64], eps: f64) -> f64 {
        let pb = &self.problem;
        energy_eps(pb.mesh, pb.sigma, pb.a, pb.p, u, eps)
    }

    fn residual(&self, u: &[f64], eps: f64) -> Vec<f64> {
        let pb = &self.problem;
        let mut r = vec![0.0; self.interior.len()];
        let dof = &self.dof;
        accumulate_gradient(pb.mesh, pb.sigma, pb.a, pb.p, u, eps, |i, val| {
            if dof[i] != usize::MAX {
                r[dof[i]] += val;
            }
        });
        r
    }

    fn assemble_hessian(&mut self, u: &[f64], eps: f64) {
        let pb = self.problem;
        let mesh = pb.mesh;
        let p = pb.p;
        self.matrix.clear();
        for t in 0..mesh.num_cells() {
            let g = cell_gradient(mesh, u, t);
            let m = &pb.a.matrices()[t];
            let base = eps * eps + m.quad(g);
            let scale = pb.sigma.values()[t] * mesh.cell_areas()[t];
            // H_g = p b^(p/2-1) A + p (p-2) b^(p/2-2) (A g)(A g)^T
            let (c1, c2) = if base == 0.0 {
                if p == 2.0 {
                    (2.0, 0.0)
                } else {
                    (0.0, 0.0)
                }
            } else {
                (
                    p * base.powf(0.5 * p - 1.0),
                    p * (p - 2.0) * base.powf(0.5 * p - 2.0),
                )
            };
            let ag = m.apply(g);
            let grads = mesh.shape_gradients(t);
            let tri = mesh.triangles()[t];
            for ki in 0..3 {
                let di = self.dof[tri[ki]];
                if di == usize::MAX {
                    continue;
                }
                for kj in 0..=ki {
                    let dj = self.dof[tri[kj]];
                    if dj == usize::MAX {
                        continue;
                    }
                    let (gi, gj) = (grads[ki], grads[kj]);
                    let agi = ag[0] * gi[0] + ag[1] * gi[1];
                    let agj = ag[0] * gj[0] + ag[1] * gj[1];
                    // each unordered pair appears once per cell; only the lower triangle is stored
                    self.matrix.add(di, dj, scale * (c1 * m.inner(gi, gj) + c2 * agi * agj));
                }
            }
        }
    }

    fn scatter(&self, u: &mut [f64], base: &[f64], dir: &[f64], alpha: f64) {
        for (k, &v) in self.interior.iter().enumerate() {
            u[v] = base[v] + alpha * dir[k];
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes the regularized energy, returning the discrete solution.
pub fn solve_dirichlet(problem: &DirichletProblem<'_>, opts: &SolverOptions) -> Result<Solution> {
    check_exponent(problem.p)?;
    check_sizes(problem.mesh, problem.sigma, problem.a, problem.f)?;
    let schedule = opts
        .eps_schedule
        .clone()
        .unwrap_or_else(|| default_eps_schedule(problem.p));
    if schedule.is_empty() || schedule.iter().any(|e| !(*e >= 0.0)) {
        return invalid("regularization schedule must be nonempty and nonnegative");
    }
    let scale = p_energy(problem.mesh, problem.sigma, problem.a, problem.p, problem.f)? + 1.0;
    let tol = opts.tol.unwrap_or(1e-10 * scale);
    if !(tol > 0.0) {
        return invalid(format!("tolerance must be positive, got {tol}"));
    }

    let mut ws = Workspace::new(*problem);
    let mut u = problem.f.values().to_vec();
    let mut iterations = 0;
    let mut gradient_steps = 0;
    let mut level_energies = Vec::with_capacity(schedule.len());
    let last = schedule.len() - 1;
    let mut residual_norm = 0.0;

    let finish = |u: Vec<f64>, residual_norm, iterations, eps, level_energies, gradient_steps| {
        let u = NodalFunction::new(problem.mesh, u)?;
        let energy = p_energy(problem.mesh, problem.sigma, problem.a, problem.p, &u)?;
        Ok::<_, Error>(Solution {
            u,
            energy,
            residual_norm,
            tolerance: tol,
            iterations,
            regularization_eps: eps,
            level_energies,
            gradient_steps,
        })
    };

    for (level, &eps) in schedule.iter().enumerate() {
        let level_tol = if level == last { tol } else { tol.max(1e-6 * scale) };
        let mut energy = ws.energy(&u, eps);
        let mut r = ws.residual(&u, eps);
        residual_norm = norm(&r);
        let mut level_iters = 0;
        while residual_norm > level_tol {
            if level_iters >= opts.max_iterations {
                let best = finish(u, residual_norm, iterations, eps, level_energies, gradient_steps)?;
                return Err(Error::ConvergenceFailure {
                    best: Box::new(best),
                    residual: residual_norm,
                    iterations,
                });
            }
            level_iters += 1;
            iterations += 1;

            ws.assemble_hessian(&u, eps);
            let mut dir: Vec<f64> = r.iter().map(|x| -x).collect();
            let mut newton = ws.matrix.dim() > 0 && ws.matrix.factor();
            if newton {
                ws.matrix.solve(&mut dir);
                let slope: f64 = dir.iter().zip(&r).map(|(d, g)| d * g).sum();
                if !(slope < 0.0) {
                    newton = false;
                    dir = r.iter().map(|x| -x).collect();
                }
            }
            if !newton {
                gradient_steps += 1;
            }
            let slope: f64 = dir.iter().zip(&r).map(|(d, g)| d * g).sum();

            let base = u.clone();
            let mut trial = u.clone();
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                ws.scatter(&mut trial, &base, &dir, alpha);
                let e_trial = ws.energy(&trial, eps);
                if e_trial <= energy + opts.armijo * alpha * slope {
                    accepted = true;
                } else if (e_trial - energy).abs() <= 1e-12 * energy.abs() {
                    // energy differences are below roundoff; judge by the residual
                    let r_trial = ws.residual(&trial, eps);
                    accepted = norm(&r_trial) < residual_norm;
                }
                if accepted {
                    energy = e_trial;
                    break;
                }
                alpha *= opts.backtrack;
            }
            if !accepted {
                let best = finish(base, residual_norm, iterations, eps, level_energies, gradient_steps)?;
                return Err(Error::ConvergenceFailure {
                    best: Box::new(best),
                    residual: residual_norm,
                    iterations,
                });
            }
            u = trial;
            r = ws.residual(&u, eps);
            residual_norm = norm(&r);
        }
        level_energies.push(energy);
    }
    finish(u, residual_norm, iterations, *schedule.last().unwrap(), level_energies, gradient_steps)
}

/// Convenience wrapper: default options.
pub fn solve(mesh: &Mesh, sigma: &ScalarField, a: &MatrixField, p: f64, f: &NodalFunction) -> Result<Solution> {
    solve_dirichlet(&DirichletProblem::new(mesh, sigma, a, p, f)?, &SolverOptions::default())
}

/// Area fraction of cells on which `|grad u| < threshold`.
pub fn critical_fraction(mesh: &Mesh, u: &NodalFunction, threshold: f64) -> Result<f64> {
    if !(threshold >= 0.0) {
        return invalid(format!("threshold must be nonnegative, got {threshold}"));
    }
    let g = gradient(mesh, u)?;
    let area: f64 = g
        .norms()
        .iter()
        .zip(mesh.cell_areas())
        .filter(|(n, _)| **n < threshold)
        .map(|(_, a)| a)
        .sum();
    Ok(area / mesh.total_area())
}
