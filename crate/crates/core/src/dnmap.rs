//! Nonlinear Dirichlet-to-Neumann pairing, evaluated weakly as the volume
//! integral `<L(f), g> = int sigma |A grad u . grad u|^((p-2)/2) A grad u . grad v`
//! where `u` solves the Dirichlet problem with data `f` and `v` is any
//! extension of `g`.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{check_exponent, invalid, Error, Result};
use crate::fields::{MatrixField, ScalarField};
use crate::forward::{cell_flux, solve_dirichlet, DirichletProblem, Solution, SolverOptions};
use crate::geometry::{cell_gradient, Mesh, NodalFunction, Point};

#[derive(Clone, Debug)]
pub struct DNPairing {
    pub value: f64,
    pub f_id: String,
    pub g_id: String,
    pub solution: Solution,
}

/// Volume form of the pairing for an already computed state `u`.
pub fn pairing_with_state(
    mesh: &Mesh,
    sigma: &ScalarField,
    a: &MatrixField,
    p: f64,
    u: &NodalFunction,
    v: &NodalFunction,
) -> Result<f64> {
    check_exponent(p)?;
    if u.len() != mesh.num_vertices() || v.len() != mesh.num_vertices() {
        return invalid("nodal functions do not match the mesh");
    }
    let mut acc = 0.0;
    for t in 0..mesh.num_cells() {
        let gu = cell_gradient(mesh, u.values(), t);
        let gv = cell_gradient(mesh, v.values(), t);
        let flux = cell_flux(sigma.values()[t], &a.matrices()[t], gu, p);
        acc += (flux[0] * gv[0] + flux[1] * gv[1]) * mesh.cell_areas()[t];
    }
    Ok(acc)
}

/// `<L_sigma(f), g>`; solves for `u` with data `f`, pairs against `g`.
pub fn dn_pairing(
    mesh: &Mesh,
    sigma: &ScalarField,
    a: &MatrixField,
    p: f64,
    f: &NodalFunction,
    g: &NodalFunction,
    opts: &SolverOptions,
) -> Result<DNPairing> {
    let problem = DirichletProblem::new(mesh, sigma, a, p, f)?;
    let solution = solve_dirichlet(&problem, opts)?;
    let value = pairing_with_state(mesh, sigma, a, p, &solution.u, g)?;
    Ok(DNPairing {
        value,
        f_id: "f".into(),
        g_id: "g".into(),
        solution,
    })
}

/// Labeled boundary data used to probe the DN map.
#[derive(Clone, Debug)]
pub struct BoundaryDictionary {
    entries: Vec<(String, NodalFunction)>,
}

impl BoundaryDictionary {
    pub fn new(mesh: &Mesh, entries: Vec<(String, NodalFunction)>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("dictionary is empty");
        }
        let mut seen = HashSet::new();
        for (label, f) in &entries {
            if !seen.insert(label.as_str()) {
                return invalid(format!("duplicate dictionary label {label:?}"));
            }
            if f.len() != mesh.num_vertices() {
                return invalid(format!("entry {label:?} does not match the mesh"));
            }
        }
        if entries.iter().all(|(_, f)| f.is_constant_on_boundary(mesh)) {
            return invalid("dictionary needs at least one non-constant entry");
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, NodalFunction)] {
        &self.entries
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Traces of `x1, x2, x1 + x2, x1 - x2`.
    pub fn linear(mesh: &Mesh) -> Self {
        let fns: [(&str, fn(Point) -> f64); 4] = [
            ("x1", |x| x[0]),
            ("x2", |x| x[1]),
            ("x1+x2", |x| x[0] + x[1]),
            ("x1-x2", |x| x[0] - x[1]),
        ];
        let entries = fns
            .iter()
            .map(|(l, f)| (l.to_string(), NodalFunction::interpolate(mesh, f)))
            .collect();
        Self { entries }
    }

    /// Gaussian bumps `exp(-|x - b_k|^2 / w^2)` centred at `count` points
    /// equispaced (by arc length) along the boundary of the mesh's bounding
    /// box, starting at the lower-left corner plus half a spacing.
    pub fn boundary_bumps(mesh: &Mesh, count: usize, width: f64) -> Result<Self> {
        if count == 0 || !(width > 0.0) {
            return invalid("bump dictionary needs count >= 1 and width > 0");
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for v in mesh.vertices() {
            x0 = x0.min(v[0]);
            x1 = x1.max(v[0]);
            y0 = y0.min(v[1]);
            y1 = y1.max(v[1]);
        }
        let (w, h) = (x1 - x0, y1 - y0);
        let perimeter = 2.0 * (w + h);
        let entries = (0..count)
            .map(|k| {
                let s = perimeter * (k as f64 + 0.5) / count as f64;
                let c = if s < w {
                    [x0 + s, y0]
                } else if s < w + h {
                    [x1, y0 + (s - w)]
                } else if s < 2.0 * w + h {
                    [x1 - (s - w - h), y1]
                } else {
                    [x0, y1 - (s - 2.0 * w - h)]
                };
                let f = NodalFunction::interpolate(mesh, |x| {
                    let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                    (-d2 / (width * width)).exp()
                });
                (format!("bump{k:02}"), f)
            })
            .collect();
        Self::new(mesh, entries)
    }

    /// Linear traces followed by `count` boundary bumps.
    pub fn default_for(mesh: &Mesh, count: usize, width: f64) -> Result<Self> {
        let mut entries = Self::linear(mesh).entries;
        entries.extend(Self::boundary_bumps(mesh, count, width)?.entries);
        Self::new(mesh, entries)
    }
}

/// Pairing table `values[i][j] = <L(f_i), f_j>`; rows whose solve failed are NaN.
#[derive(Clone, Debug, serde::Serialize)]
pub struct DnTable {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Solution energies `E_p(u_i)`, NaN for failed rows.
    pub energies: Vec<f64>,
    pub failures: Vec<(String, String)>,
}

impl DnTable {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.labels.len()).map(|i| self.values[i][i]).collect()
    }

    /// CSV with a header row of labels and one labeled row per entry.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("f\\g");
        for l in &self.labels {
            s.push(',');
            s.push_str(l);
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            s.push_str(l);
            for v in row {
                s.push_str(&format!(",{v:.17e}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Row `i` requires one solve with data `f_i`; rows run in parallel.
pub fn dn_table(
    mesh: &Mesh,
    sigma: &ScalarField,
    a: &MatrixField,
    p: f64,
    dict: &BoundaryDictionary,
    opts: &SolverOptions,
) -> Result<DnTable> {
    check_exponent(p)?;
    let rows: Vec<Result<(Vec<f64>, f64)>> = dict
        .entries()
        .par_iter()
        .map(|(_, f)| {
            let problem = DirichletProblem::new(mesh, sigma, a, p, f)?;
            let sol = solve_dirichlet(&problem, opts)?;
            let row = dict
                .entries()
                .iter()
                .map(|(_, g)| pairing_with_state(mesh, sigma, a, p, &sol.u, g))
                .collect::<Result<Vec<_>>>()?;
            Ok((row, sol.energy))
        })
        .collect();

    let m = dict.len();
    let mut values = Vec::with_capacity(m);
    let mut energies = Vec::with_capacity(m);
    let mut failures = Vec::new();
    for ((label, _), row) in dict.entries().iter().zip(rows) {
        match row {
            Ok((r, e)) => {
                values.push(r);
                energies.push(e);
            }
            Err(e @ Error::ConvergenceFailure { .. }) => {
                failures.push((label.clone(), e.to_string()));
                values.push(vec![f64::NAN; m]);
                energies.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(DnTable {
        labels: dict.labels(),
        values,
        energies,
        failures,
    })
}
