//! Two-dimensional diagnostics for isotropic solutions (`A = I`): the
//! complex gradient `f = sigma u_x - i sigma u_y`, its nonlinear powers
//! `F_a = |f|^a f`, the Beltrami-type equation satisfied by `F = F_a` with
//! `a = (p-2)/2`,
//!
//! ```text
//! dF/dzbar = q1 dF/dz + q2 conj(dF/dz) + H(z, F),
//! ```
//!
//! the stream function of the flux, and scans for plateaus of `|grad u|`.

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::error::{check_exponent, invalid, Result};
use crate::fields::{MatrixField, ScalarField, Sym2};
use crate::forward::{cell_flux, energy_gradient};
use crate::geometry::{cell_gradient, gradient, Mesh, NodalFunction};

#[derive(Clone, Debug)]
pub struct ComplexGradientField {
    /// Cellwise `f = sigma u_x - i sigma u_y`.
    pub f: Vec<Complex64>,
    pub a: f64,
}

impl ComplexGradientField {
    /// `F_a = |f|^a f`, zero where `f = 0`.
    pub fn powered(&self) -> Vec<Complex64> {
        self.f.iter().map(|&z| power(z, self.a)).collect()
    }
}

#[inline]
fn power(z: Complex64, a: f64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        z * r.powf(a)
    }
}

pub fn complex_gradient(mesh: &Mesh, u: &NodalFunction, sigma: &ScalarField, a: f64) -> Result<ComplexGradientField> {
    if !(a > -1.0) || !a.is_finite() {
        return invalid(format!("exponent a must exceed -1, got {a}"));
    }
    if sigma.len() != mesh.num_cells() {
        return invalid("conductivity does not match the mesh");
    }
    let g = gradient(mesh, u)?;
    let f = g
        .vectors()
        .iter()
        .zip(sigma.values())
        .map(|(g, s)| Complex64::new(s * g[0], -s * g[1]))
        .collect();
    Ok(ComplexGradientField { f, a })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct BeltramiCoefficients {
    pub p: f64,
    pub q1_mag: f64,
    pub q2_mag: f64,
}

impl BeltramiCoefficients {
    pub fn sum(&self) -> f64 {
        self.q1_mag + self.q2_mag
    }
}

/// Signed real factors `c1, c2` with `q1 = c1 conj(F)/F`, `q2 = c2 F/conj(F)`.
fn coefficient_factors(p: f64) -> (f64, f64) {
    let r1 = (p - 2.0) / (p + 2.0);
    let r2 = (p - 2.0) / (3.0 * p - 2.0);
    (-0.5 * (r1 + r2), -0.5 * (r2 - r1))
}

pub fn beltrami_coefficients(p: f64) -> Result<BeltramiCoefficients> {
    check_exponent(p)?;
    let (c1, c2) = coefficient_factors(p);
    Ok(BeltramiCoefficients {
        p,
        q1_mag: c1.abs(),
        q2_mag: c2.abs(),
    })
}

/// Vertex values of a cellwise field by area-weighted averaging over the
/// cells sharing each vertex.
pub fn promote_to_vertices(mesh: &Mesh, cell_values: &[f64]) -> Result<NodalFunction> {
    if cell_values.len() != mesh.num_cells() {
        return invalid("cell field does not match the mesh");
    }
    let values = (0..mesh.num_vertices())
        .map(|v| {
            let cells = mesh.vertex_cells(v);
            let w: f64 = cells.iter().map(|&t| mesh.cell_areas()[t]).sum();
            cells.iter().map(|&t| cell_values[t] * mesh.cell_areas()[t]).sum::<f64>() / w
        })
        .collect();
    NodalFunction::new(mesh, values)
}

fn promote_complex(mesh: &Mesh, cell_values: &[Complex64]) -> Vec<Complex64> {
    (0..mesh.num_vertices())
        .map(|v| {
            let cells = mesh.vertex_cells(v);
            let w: f64 = cells.iter().map(|&t| mesh.cell_areas()[t]).sum();
            cells.iter().map(|&t| cell_values[t] * mesh.cell_areas()[t]).sum::<Complex64>() / w
        })
        .collect()
}

/// `(d/dz, d/dzbar)` of the linear interpolant of complex vertex values on a cell.
fn wirtinger(mesh: &Mesh, values: &[Complex64], t: usize) -> (Complex64, Complex64) {
    let grads = mesh.shape_gradients(t);
    let mut fx = Complex64::new(0.0, 0.0);
    let mut fy = Complex64::new(0.0, 0.0);
    for (k, &v) in mesh.triangles()[t].iter().enumerate() {
        fx += values[v] * grads[k][0];
        fy += values[v] * grads[k][1];
    }
    let i = Complex64::i();
    (0.5 * (fx - i * fy), 0.5 * (fx + i * fy))
}

fn real_wirtinger(mesh: &Mesh, values: &[f64], t: usize) -> (Complex64, Complex64, f64) {
    let g = cell_gradient(mesh, values, t);
    let dz = Complex64::new(0.5 * g[0], -0.5 * g[1]);
    (dz, dz.conj(), g[0].hypot(g[1]))
}

#[derive(Clone, Debug)]
pub struct BeltramiOptions {
    /// For `p < 2` only cells with `|F| > min_relative_modulus * max |F|`
    /// enter the residual.
    pub min_relative_modulus: f64,
}

impl Default for BeltramiOptions {
    fn default() -> Self {
        Self {
            min_relative_modulus: 1e-3,
        }
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct BeltramiReport {
    pub p: f64,
    /// `|residual|_L2` over the cells used.
    pub residual: f64,
    /// `residual / (|dF/dz|_L2 + |F|_L2)`.
    pub normalized_residual: f64,
    pub cells_used: usize,
    /// Largest `|H| - q3 |F|` over the cells used; nonpositive when the
    /// structural bound holds.
    pub max_h_excess: f64,
    pub h_bound_holds: bool,
    /// Cells with `|F| < 1e-8 max |F|`.
    pub near_zero_cells: usize,
}

/// Residual of the Beltrami-type equation for a computed state `u`.
///
/// `F` is recovered at vertices by area-weighted averaging of the cell
/// values and differentiated as a piecewise-linear field; `sigma` is given
/// at vertices. Only cells with all three vertices interior are used.
pub fn beltrami_residual(
    mesh: &Mesh,
    u: &NodalFunction,
    sigma_vertex: &NodalFunction,
    p: f64,
    opts: &BeltramiOptions,
) -> Result<BeltramiReport> {
    check_exponent(p)?;
    if sigma_vertex.len() != mesh.num_vertices() || u.len() != mesh.num_vertices() {
        return invalid("nodal functions do not match the mesh");
    }
    if let Some(s) = sigma_vertex.values().iter().find(|s| !(**s > 0.0)) {
        return invalid(format!("vertex conductivity must be positive, got {s}"));
    }
    if mesh.interior_vertices().len() < 9 {
        return invalid("mesh too coarse for derivative recovery (needs at least 9 interior vertices)");
    }
    let sigma_cells = ScalarField::from_vertex_average(mesh, sigma_vertex)?;
    let cg = complex_gradient(mesh, u, &sigma_cells, 0.5 * (p - 2.0))?;
    let f_vertex = promote_complex(mesh, &cg.powered());
    let inv_sigma: Vec<f64> = sigma_vertex.values().iter().map(|s| 1.0 / s).collect();
    let inv_pow: Vec<f64> = sigma_vertex.values().iter().map(|s| s.powf(-(p - 2.0))).collect();

    let (c1, c2) = coefficient_factors(p);
    let k1 = p / (p + 2.0);
    let k2 = p / (3.0 * p - 2.0);

    let cells = mesh.interior_cells();
    let centre: Vec<Complex64> = cells
        .iter()
        .map(|&t| mesh.triangles()[t].iter().map(|&v| f_vertex[v]).sum::<Complex64>() / 3.0)
        .collect();
    let max_mod = centre.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cutoff = if p < 2.0 { opts.min_relative_modulus * max_mod } else { -1.0 };

    let (mut res2, mut dz2, mut f2) = (0.0, 0.0, 0.0);
    let mut used = 0;
    let mut max_h_excess = f64::NEG_INFINITY;
    let mut near_zero_cells = 0;
    for (&t, &fc) in cells.iter().zip(&centre) {
        let m = fc.norm();
        if m < 1e-8 * max_mod {
            near_zero_cells += 1;
        }
        if m <= cutoff {
            continue;
        }
        let area = mesh.cell_areas()[t];
        let s = mesh.triangles()[t].iter().map(|&v| sigma_vertex.values()[v]).sum::<f64>() / 3.0;
        let (dz, dzb) = wirtinger(mesh, &f_vertex, t);
        let (phase1, phase2) = if m > 0.0 {
            (fc.conj() / fc, fc / fc.conj())
        } else {
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
        };
        let (i_z, i_zb, i_grad) = real_wirtinger(mesh, &inv_sigma, t);
        let (j_z, j_zb, j_grad) = real_wirtinger(mesh, &inv_pow, t);
        let h = s * k1 * (fc.conj() * i_z - fc * i_zb) - s.powf(p - 2.0) * k2 * (fc.conj() * j_z + fc * j_zb);
        let q3 = k1 * s * i_grad + k2.abs() * s.powf(p - 2.0) * j_grad;
        max_h_excess = max_h_excess.max(h.norm() - q3 * m);

        let r = dzb - c1 * phase1 * dz - c2 * phase2 * dz.conj() - h;
        res2 += r.norm_sqr() * area;
        dz2 += dz.norm_sqr() * area;
        f2 += m * m * area;
        used += 1;
    }
    let residual = res2.sqrt();
    let denom = dz2.sqrt() + f2.sqrt();
    let normalized_residual = if denom > 0.0 { residual / denom } else { 0.0 };
    let max_h_excess = if used == 0 { 0.0 } else { max_h_excess };
    Ok(BeltramiReport {
        p,
        residual,
        normalized_residual,
        cells_used: used,
        h_bound_holds: max_h_excess <= 1e-12 * (1.0 + max_mod),
        max_h_excess,
        near_zero_cells,
    })
}

#[derive(Clone, Debug)]
pub struct DualStream {
    pub v: NodalFunction,
    /// Norm of the interior energy gradient of `v` under `(sigma^(1-q), q)`.
    pub dual_residual: f64,
    /// `max_T |(v_y, -v_x) - sigma |grad u|^(p-2) grad u|`.
    pub round_trip_error: f64,
}

/// Stream function `v` of the flux `w = sigma |grad u|^(p-2) grad u`,
/// `v_x = -w_y`, `v_y = w_x`, integrated along a breadth-first spanning
/// tree of the vertex graph rooted at vertex 0 with `v(0) = 0`. Each tree
/// edge adds the rotated flux, averaged over the cells sharing the edge,
/// dotted with the edge vector.
pub fn dual_stream_function(mesh: &Mesh, u: &NodalFunction, sigma: &ScalarField, p: f64) -> Result<DualStream> {
    check_exponent(p)?;
    if sigma.len() != mesh.num_cells() || u.len() != mesh.num_vertices() {
        return invalid("inputs do not match the mesh");
    }
    let flux: Vec<[f64; 2]> = (0..mesh.num_cells())
        .map(|t| cell_flux(sigma.values()[t], &Sym2::IDENTITY, cell_gradient(mesh, u.values(), t), p))
        .collect();
    let nbrs = mesh.vertex_neighbors();
    let n = mesh.num_vertices();
    let mut v = vec![f64::NAN; n];
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    v[0] = 0.0;
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &nbrs[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            let cells = mesh.edge_cells(i, j);
            let k = cells.len() as f64;
            let rw = cells.iter().fold([0.0, 0.0], |acc, &t| [acc[0] - flux[t][1] / k, acc[1] + flux[t][0] / k]);
            let (xi, xj) = (mesh.vertices()[i], mesh.vertices()[j]);
            v[j] = v[i] + rw[0] * (xj[0] - xi[0]) + rw[1] * (xj[1] - xi[1]);
            queue.push_back(j);
        }
    }
    if seen.iter().any(|s| !s) {
        return invalid("mesh is disconnected");
    }
    let v = NodalFunction::new(mesh, v)?;

    let q = p / (p - 1.0);
    let dual_sigma = ScalarField::new(mesh, sigma.values().iter().map(|s| s.powf(1.0 - q)).collect())?;
    let ident = MatrixField::identity(mesh);
    let r = energy_gradient(mesh, &dual_sigma, &ident, q, &v, 0.0)?;
    let dual_residual = r.iter().map(|x| x * x).sum::<f64>().sqrt();

    let round_trip_error = (0..mesh.num_cells())
        .map(|t| {
            let g = cell_gradient(mesh, v.values(), t);
            (g[1] - flux[t][0]).abs().max((-g[0] - flux[t][1]).abs())
        })
        .fold(0.0, f64::max);
    Ok(DualStream {
        v,
        dual_residual,
        round_trip_error,
    })
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PlateauComponent {
    pub cells: usize,
    pub area_fraction: f64,
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct PlateauReport {
    pub threshold: f64,
    /// Sorted by decreasing area.
    pub components: Vec<PlateauComponent>,
    pub total_fraction: f64,
    pub nonconstant: bool,
    /// A component above 5% of the area in a non-constant solution.
    pub red_flag: bool,
}

impl PlateauReport {
    pub fn max_fraction(&self) -> f64 {
        self.components.first().map_or(0.0, |c| c.area_fraction)
    }
}

/// Edge-connected components of cells with `|grad u| < threshold`.
/// The default threshold is `1e-6 max |grad u|`; a constant `u` is a
/// single plateau covering the domain.
pub fn plateau_scan(mesh: &Mesh, u: &NodalFunction, threshold: Option<f64>) -> Result<PlateauReport> {
    let norms = gradient(mesh, u)?.norms();
    let max = norms.iter().copied().fold(0.0, f64::max);
    let threshold = match threshold {
        Some(t) if !(t > 0.0) => return invalid(format!("threshold must be positive, got {t}")),
        Some(t) => t,
        None => 1e-6 * max,
    };
    let low: Vec<bool> = norms.iter().map(|&g| g < threshold || max == 0.0).collect();
    let total = mesh.total_area();
    let mut visited = vec![false; mesh.num_cells()];
    let mut components = Vec::new();
    for start in 0..mesh.num_cells() {
        if !low[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        let mut stack = vec![start];
        let (mut count, mut area) = (0, 0.0);
        while let Some(t) = stack.pop() {
            count += 1;
            area += mesh.cell_areas()[t];
            for &s in mesh.cell_neighbors(t) {
                if low[s] && !visited[s] {
                    visited[s] = true;
                    stack.push(s);
                }
            }
        }
        components.push(PlateauComponent {
            cells: count,
            area_fraction: area / total,
        });
    }
    components.sort_by(|a, b| b.area_fraction.total_cmp(&a.area_fraction));
    let total_fraction = components.iter().map(|c| c.area_fraction).sum();
    let nonconstant = max > 0.0;
    let red_flag = nonconstant && components.iter().any(|c| c.area_fraction > 0.05);
    Ok(PlateauReport {
        threshold,
        components,
        total_fraction,
        nonconstant,
        red_flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::solve;
    use crate::geometry::{build_structured_mesh, Rect};

    fn unit(n: usize) -> Mesh {
        build_structured_mesh(Rect::unit_square(), n).unwrap()
    }

    #[test]
    fn complex_gradient_examples() {
        let mesh = unit(3);
        let one = ScalarField::constant(&mesh, 1.0).unwrap();
        let two = ScalarField::constant(&mesh, 2.0).unwrap();
        let x1 = NodalFunction::interpolate(&mesh, |x| x[0]);
        let cg = complex_gradient(&mesh, &x1, &one, 0.0).unwrap();
        assert!(cg.powered().iter().all(|z| (z - Complex64::new(1.0, 0.0)).norm() < 1e-12));
        let x2 = NodalFunction::interpolate(&mesh, |x| x[1]);
        let cg = complex_gradient(&mesh, &x2, &two, 0.0).unwrap();
        assert!(cg.f.iter().all(|z| (z - Complex64::new(0.0, -2.0)).norm() < 1e-12));
        let s = NodalFunction::interpolate(&mesh, |x| x[0] + x[1]);
        let cg = complex_gradient(&mesh, &s, &one, 1.0).unwrap();
        assert!(cg.powered().iter().all(|z| (z.norm() - 2.0).abs() < 1e-12));
        assert!(complex_gradient(&mesh, &s, &one, -1.0).is_err());
    }

    #[test]
    fn coefficient_values() {
        let b = beltrami_coefficients(2.0).unwrap();
        assert_eq!((b.q1_mag, b.q2_mag), (0.0, 0.0));
        let b = beltrami_coefficients(4.0).unwrap();
        assert!((b.q1_mag - 4.0 / 15.0).abs() < 1e-15);
        assert!((b.q2_mag - 1.0 / 15.0).abs() < 1e-15);
        assert!(beltrami_coefficients(1.0).is_err());
    }

    #[test]
    fn affine_state_has_zero_residual() {
        let mesh = unit(6);
        let x1 = NodalFunction::interpolate(&mesh, |x| x[0]);
        let sv = NodalFunction::constant(&mesh, 1.0);
        for p in [1.5, 2.0, 4.0] {
            let r = beltrami_residual(&mesh, &x1, &sv, p, &BeltramiOptions::default()).unwrap();
            assert!(r.residual < 1e-12, "p={p}: {}", r.residual);
            assert!(r.h_bound_holds);
        }
        assert!(beltrami_residual(&unit(3), &NodalFunction::constant(&unit(3), 0.0), &NodalFunction::constant(&unit(3), 1.0), 2.0, &BeltramiOptions::default()).is_err());
    }

    #[test]
    fn quadratic_harmonic_is_nearly_analytic() {
        // F = 2 z for u = x1^2 - x2^2; vertex recovery reproduces linear F
        // exactly at interior vertices
        let mesh = unit(8);
        let u = NodalFunction::interpolate(&mesh, |x| x[0] * x[0] - x[1] * x[1]);
        let sv = NodalFunction::constant(&mesh, 1.0);
        let r = beltrami_residual(&mesh, &u, &sv, 2.0, &BeltramiOptions::default()).unwrap();
        assert!(r.normalized_residual < 1e-10, "{}", r.normalized_residual);
    }

    #[test]
    fn dual_of_affine_state() {
        let mesh = unit(5);
        let x1 = NodalFunction::interpolate(&mesh, |x| x[0]);
        let one = ScalarField::constant(&mesh, 1.0).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let d = dual_stream_function(&mesh, &x1, &one, p).unwrap();
            let c = d.v.values()[0] - mesh.vertices()[0][1];
            for (val, x) in d.v.values().iter().zip(mesh.vertices()) {
                assert!((val - x[1] - c).abs() < 1e-12);
            }
            assert!(d.dual_residual < 1e-10 && d.round_trip_error < 1e-12);
        }
    }

    #[test]
    fn dual_of_layered_state_has_constant_slope() {
        // interface at x1 = 1/2; closed-form flux constant C
        let mesh = unit(8);
        let p = 3.0;
        let sigma = ScalarField::from_fn(&mesh, |x| if x[0] < 0.5 { 1.0 } else { 2.0 }).unwrap();
        let r = 1.0 / (p - 1.0);
        let c = (1.0 / (0.5 * 1f64.powf(-r) + 0.5 * 2f64.powf(-r))).powf(p - 1.0);
        let (kl, kr) = (c.powf(r), (c / 2.0).powf(r));
        let f = NodalFunction::interpolate(&mesh, |x| if x[0] < 0.5 { kl * x[0] } else { 0.5 * kl + kr * (x[0] - 0.5) });
        let sol = solve(&mesh, &sigma, &MatrixField::identity(&mesh), p, &f).unwrap();
        let d = dual_stream_function(&mesh, &sol.u, &sigma, p).unwrap();
        for (val, x) in d.v.values().iter().zip(mesh.vertices()) {
            assert!((val - c * x[1]).abs() < 1e-7, "{val} vs {}", c * x[1]);
        }
    }

    #[test]
    fn disconnected_mesh_is_rejected() {
        let verts = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0]];
        let mesh = Mesh::new(verts, vec![[0, 1, 2], [3, 4, 5]]).unwrap();
        let u = NodalFunction::constant(&mesh, 0.0);
        let s = ScalarField::constant(&mesh, 1.0).unwrap();
        assert!(dual_stream_function(&mesh, &u, &s, 2.0).is_err());
    }

    #[test]
    fn plateau_examples() {
        let mesh = unit(6);
        let x1 = NodalFunction::interpolate(&mesh, |x| x[0]);
        let r = plateau_scan(&mesh, &x1, Some(0.9)).unwrap();
        assert!(r.components.is_empty() && !r.red_flag);
        let c = NodalFunction::constant(&mesh, 3.0);
        let r = plateau_scan(&mesh, &c, None).unwrap();
        assert_eq!(r.components.len(), 1);
        assert!((r.components[0].area_fraction - 1.0).abs() < 1e-12);
        assert!(!r.red_flag);
        // flat quarter of the square next to a ramp
        let u = NodalFunction::interpolate(&mesh, |x| (x[0] - 0.5).max(0.0));
        let r = plateau_scan(&mesh, &u, None).unwrap();
        assert!(r.red_flag);
        assert!((r.max_fraction() - 0.5).abs() < 1e-12);
        assert!(plateau_scan(&mesh, &u, Some(0.0)).is_err());
    }
}
