//! Small dense linear-algebra helpers shared by the kernels and samplers.

use nalgebra::{DMatrix, DVector};

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factors `m`, returning `None` when it is not numerically positive definite.
    pub fn new(m: DMatrix<f64>) -> Option<Self> {
        let n = m.nrows();
        if m.ncols() != n || m.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let view = faer::MatRef::from_column_major_slice(m.as_slice(), n, n);
        let llt = view.llt(faer::Side::Lower).ok()?;
        let lf = llt.L();
        let l = DMatrix::from_fn(n, n, |i, j| if i >= j { lf[(i, j)] } else { 0.0 });
        if l.diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
            Some(Self { l })
        } else {
            None
        }
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// log |A|
    pub fn ln_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// L⁻¹ b
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// L⁻¹ B
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// A⁻¹ b
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.solve_lower(b);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// A⁻¹ B
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = self.solve_lower_mat(b);
        self.l.tr_solve_lower_triangular_mut(&mut x);
        x
    }

    /// L z
    pub fn mul_l(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.l * z
    }
}

/// Inverse of a small symmetric positive definite matrix via Cholesky.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = Cholesky::new(m.clone())?;
    Some(chol.solve_mat(&DMatrix::identity(m.nrows(), m.ncols())))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
