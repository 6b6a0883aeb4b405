//! Cellwise coefficient fields: the scalar conductivity and the symmetric
//! positive-definite anisotropy matrix, plus the pointwise factorization
//! `A = B^T B` obtained by Gram-Schmidt in the `A`-inner product.

use crate::error::{invalid, Error, Result};
use crate::geometry::{Mesh, NodalFunction, Point};

/// Symmetric 2x2 matrix stored as `(a11, a12, a22)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        a11: 1.0,
        a12: 0.0,
        a22: 1.0,
    };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    pub fn apply(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.a11 * g[0] + self.a12 * g[1],
            self.a12 * g[0] + self.a22 * g[1],
        ]
    }

    /// `A g . h`
    pub fn inner(&self, g: [f64; 2], h: [f64; 2]) -> f64 {
        let ag = self.apply(g);
        ag[0] * h[0] + ag[1] * h[1]
    }

    pub fn quad(&self, g: [f64; 2]) -> f64 {
        self.inner(g, g)
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.a11 + self.a22);
        let r = (0.5 * (self.a11 - self.a22)).hypot(self.a12);
        (mean - r, mean + r)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().0
    }

    /// Entrywise maximum norm.
    pub fn max_abs(&self) -> f64 {
        self.a11.abs().max(self.a12.abs()).max(self.a22.abs())
    }

    pub fn sub(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.a11 - o.a11, self.a12 - o.a12, self.a22 - o.a22)
    }

    pub fn add_scaled(&self, t: f64, o: &Sym2) -> Sym2 {
        Sym2::new(self.a11 + t * o.a11, self.a12 + t * o.a12, self.a22 + t * o.a22)
    }

    pub fn to_mat2(&self) -> Mat2 {
        Mat2([[self.a11, self.a12], [self.a12, self.a22]])
    }
}

/// General 2x2 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub fn transpose(&self) -> Mat2 {
        let m = self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        let mut c = [[0.0; 2]; 2];
        for (i, row) in c.iter_mut().enumerate() {
            for (j, cij) in row.iter_mut().enumerate() {
                *cij = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(c)
    }

    pub fn det(&self) -> f64 {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let m = self.0;
        Some(Mat2([
            [m[1][1] / d, -m[0][1] / d],
            [-m[1][0] / d, m[0][0] / d],
        ]))
    }

    pub fn apply(&self, g: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - o.0[i][j]).abs());
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Positive scalar coefficient, one value per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
    lower_bound: f64,
}

impl ScalarField {
    /// The lower bound is taken as the smallest value, which must be positive.
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_cells() {
            return invalid(format!(
                "scalar field has {} values, mesh has {} cells",
                values.len(),
                mesh.num_cells()
            ));
        }
        let mut lower = f64::INFINITY;
        for (t, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::PreconditionViolation(format!(
                    "coefficient at cell {t} is {v}; it must be finite and positive"
                )));
            }
            lower = lower.min(v);
        }
        Ok(Self {
            values,
            lower_bound: lower,
        })
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Result<Self> {
        Self::new(mesh, vec![c; mesh.num_cells()])
    }

    /// Samples `f` at cell centroids.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Result<Self> {
        Self::new(mesh, mesh.centroids().into_iter().map(f).collect())
    }

    /// Cell value = mean of the three vertex values.
    pub fn from_vertex_average(mesh: &Mesh, v: &NodalFunction) -> Result<Self> {
        let vals = mesh
            .triangles()
            .iter()
            .map(|tri| tri.iter().map(|&i| v.values()[i]).sum::<f64>() / 3.0)
            .collect();
        Self::new(mesh, vals)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_values(self.values.iter().map(|v| c * v).collect())
    }

    pub(crate) fn from_values(values: Vec<f64>) -> Result<Self> {
        let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(lower > 0.0) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::PreconditionViolation(
                "coefficient must be finite and positive".into(),
            ));
        }
        Ok(Self {
            values,
            lower_bound: lower,
        })
    }

    pub fn max_abs_diff(&self, o: &ScalarField) -> f64 {
        self.values
            .iter()
            .zip(&o.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric positive-definite matrix coefficient, one matrix per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixField {
    matrices: Vec<Sym2>,
    ellipticity: f64,
}

impl MatrixField {
    pub fn new(mesh: &Mesh, matrices: Vec<Sym2>) -> Result<Self> {
        if matrices.len() != mesh.num_cells() {
            return invalid(format!(
                "matrix field has {} entries, mesh has {} cells",
                matrices.len(),
                mesh.num_cells()
            ));
        }
        Self::from_matrices(matrices)
    }

    pub(crate) fn from_matrices(matrices: Vec<Sym2>) -> Result<Self> {
        let mut ell = f64::INFINITY;
        for (t, m) in matrices.iter().enumerate() {
            let lam = m.min_eigenvalue();
            if !(lam > 0.0) || !lam.is_finite() {
                return Err(Error::PreconditionViolation(format!(
                    "matrix at cell {t} is not positive definite (min eigenvalue {lam})"
                )));
            }
            ell = ell.min(lam);
        }
        Ok(Self {
            matrices,
            ellipticity: ell,
        })
    }

    pub fn identity(mesh: &Mesh) -> Self {
        Self {
            matrices: vec![Sym2::IDENTITY; mesh.num_cells()],
            ellipticity: 1.0,
        }
    }

    pub fn constant(mesh: &Mesh, m: Sym2) -> Result<Self> {
        Self::new(mesh, vec![m; mesh.num_cells()])
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> Sym2) -> Result<Self> {
        Self::new(mesh, mesh.centroids().into_iter().map(f).collect())
    }

    pub fn matrices(&self) -> &[Sym2] {
        &self.matrices
    }

    pub fn ellipticity_bound(&self) -> f64 {
        self.ellipticity
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// `max_T |A_T - B_T|_max`.
    pub fn max_abs_diff(&self, o: &MatrixField) -> f64 {
        self.matrices
            .iter()
            .zip(&o.matrices)
            .map(|(a, b)| a.sub(b).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Factor of a single SPD matrix, `B` with `B^T B = A`.
///
/// The standard basis `e1, e2` is orthonormalized in the inner product
/// `<v, w>_A = A v . w`, giving `V = [v1 v2]` with `V^T A V = I`; then
/// `B = V^{-1}`. The procedure is written for general dimension over the
/// fixed basis order, which makes the result deterministic and continuous
/// in `A`.
pub fn gram_schmidt_factor(a: &Sym2) -> Option<Mat2> {
    const N: usize = 2;
    let m = a.to_mat2();
    let inner = |v: &[f64; N], w: &[f64; N]| m.apply(*v)[0] * w[0] + m.apply(*v)[1] * w[1];

    let mut basis: [[f64; N]; N] = [[0.0; N]; N];
    for k in 0..N {
        let mut e = [0.0; N];
        e[k] = 1.0;
        let mut w = e;
        for prev in basis.iter().take(k) {
            let c = inner(&e, prev);
            for i in 0..N {
                w[i] -= c * prev[i];
            }
        }
        let norm2 = inner(&w, &w);
        if !(norm2 > 0.0) {
            return None;
        }
        let norm = norm2.sqrt();
        basis[k] = w.map(|x| x / norm);
    }
    // columns of V are the basis vectors
    let v = Mat2([[basis[0][0], basis[1][0]], [basis[0][1], basis[1][1]]]);
    v.inverse()
}

/// Cellwise factorization `A_T = B_T^T B_T`.
pub fn spd_factorize(a: &MatrixField) -> Result<Vec<Mat2>> {
    a.matrices()
        .iter()
        .enumerate()
        .map(|(t, m)| {
            if !(m.min_eigenvalue() > 0.0) {
                return Err(Error::PreconditionViolation(format!(
                    "matrix at cell {t} is not positive definite"
                )));
            }
            gram_schmidt_factor(m).ok_or_else(|| {
                Error::PreconditionViolation(format!("Gram-Schmidt breakdown at cell {t}"))
            })
        })
        .collect()
}

/// Discrete sup norm and alpha-Hoelder seminorm over sample points.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct HolderReport {
    pub sup_norm: f64,
    pub holder_seminorm: f64,
    pub alpha: f64,
}

impl HolderReport {
    /// `sup + seminorm`, the discrete `C^alpha` norm.
    pub fn norm(&self) -> f64 {
        self.sup_norm + self.holder_seminorm
    }
}

/// Brute-force `O(N^2)` scan over all pairs of sample points.
pub fn holder_report_points(points: &[Point], values: &[f64], alpha: f64) -> Result<HolderReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("Hoelder exponent must lie in (0, 1), got {alpha}"));
    }
    if points.len() != values.len() {
        return invalid("points and values differ in length");
    }
    let sup_norm = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut semi = 0.0_f64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            if d > 0.0 {
                semi = semi.max((values[i] - values[j]).abs() / d.powf(alpha));
            }
        }
    }
    Ok(HolderReport {
        sup_norm,
        holder_seminorm: semi,
        alpha,
    })
}

/// Hoelder report of a nodal function, sampled at the vertices.
pub fn holder_report_nodal(mesh: &Mesh, f: &NodalFunction, alpha: f64) -> Result<HolderReport> {
    holder_report_points(mesh.vertices(), f.values(), alpha)
}

/// Hoelder report of a cellwise field, sampled at the centroids.
pub fn holder_report_cells(mesh: &Mesh, f: &ScalarField, alpha: f64) -> Result<HolderReport> {
    holder_report_points(&mesh.centroids(), f.values(), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_structured_mesh, Rect};

    fn reassemble(b: &Mat2) -> Mat2 {
        b.transpose().mul(b)
    }

    /// Lower Cholesky factor, used only as an independent check.
    fn cholesky(a: &Sym2) -> Mat2 {
        let l11 = a.a11.sqrt();
        let l21 = a.a12 / l11;
        let l22 = (a.a22 - l21 * l21).sqrt();
        Mat2([[l11, 0.0], [l21, l22]])
    }

    #[test]
    fn identity_and_diagonal() {
        let b = gram_schmidt_factor(&Sym2::IDENTITY).unwrap();
        assert_eq!(b, Mat2([[1.0, 0.0], [0.0, 1.0]]));
        let b = gram_schmidt_factor(&Sym2::diag(4.0, 9.0)).unwrap();
        assert!(b.max_abs_diff(&Mat2([[2.0, 0.0], [0.0, 3.0]])) < 1e-15);
    }

    #[test]
    fn hand_executed_gram_schmidt() {
        // A = [[2,1],[1,2]]: v1 = e1/sqrt2, w2 = e2 - (1/2) e1, |w2|_A^2 = 3/2,
        // V = [[1/sqrt2, -1/sqrt6], [0, sqrt(2/3)]], B = V^-1 = [[sqrt2, 1/sqrt2], [0, sqrt(3/2)]]
        let a = Sym2::new(2.0, 1.0, 2.0);
        let b = gram_schmidt_factor(&a).unwrap();
        let s2 = 2f64.sqrt();
        let expect = Mat2([[s2, 1.0 / s2], [0.0, 1.5f64.sqrt()]]);
        assert!(b.max_abs_diff(&expect) < 1e-14);
        assert!(reassemble(&b).max_abs_diff(&a.to_mat2()) < 1e-12);
        // the e1-first order makes B the transpose of the Cholesky factor
        assert!(b.max_abs_diff(&cholesky(&a).transpose()) < 1e-14);
    }

    #[test]
    fn rejects_indefinite_cells() {
        let mesh = build_structured_mesh(Rect::unit_square(), 1).unwrap();
        let bad = vec![Sym2::IDENTITY, Sym2::new(1.0, 2.0, 1.0)];
        match MatrixField::new(&mesh, bad) {
            Err(Error::PreconditionViolation(msg)) => assert!(msg.contains("cell 1")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn factorization_is_deterministic() {
        let a = Sym2::new(3.7, -1.2, 0.9);
        let b1 = gram_schmidt_factor(&a).unwrap();
        let b2 = gram_schmidt_factor(&a).unwrap();
        assert_eq!(b1.0.map(|r| r.map(f64::to_bits)), b2.0.map(|r| r.map(f64::to_bits)));
    }

    #[test]
    fn holder_of_constant_and_linear() {
        let mesh = build_structured_mesh(Rect::unit_square(), 4).unwrap();
        let c = NodalFunction::constant(&mesh, -2.5);
        let r = holder_report_nodal(&mesh, &c, 0.5).unwrap();
        assert_eq!(r.sup_norm, 2.5);
        assert_eq!(r.holder_seminorm, 0.0);

        // |dx1| / |dx|^(1/2) <= |dx1|^(1/2) <= 1 with equality for horizontal unit pairs
        let x1 = NodalFunction::interpolate(&mesh, |x| x[0]);
        let r = holder_report_nodal(&mesh, &x1, 0.5).unwrap();
        assert!((r.holder_seminorm - 1.0).abs() < 1e-14);

        let r3 = holder_report_nodal(&mesh, &x1.scaled(-3.0), 0.5).unwrap();
        assert!((r3.holder_seminorm - 3.0 * r.holder_seminorm).abs() < 1e-13);
    }

    #[test]
    fn holder_alpha_range() {
        let mesh = build_structured_mesh(Rect::unit_square(), 2).unwrap();
        let c = NodalFunction::constant(&mesh, 1.0);
        assert!(holder_report_nodal(&mesh, &c, 0.0).is_err());
        assert!(holder_report_nodal(&mesh, &c, 1.0).is_err());
    }
}
