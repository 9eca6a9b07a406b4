//! Small dense linear-algebra kernels: Cholesky factorisation and
//! triangular solves on symmetric positive-definite systems.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Factorises a symmetric positive-definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: ArrayView2<'_, f64>, context: &str) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "cholesky of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        // Row-major working copy; row i of L is built from rows j < i.
        let mut l = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let (li, lj) = (l.row(i), l.row(j));
                let dot: f64 = li.iter().zip(lj.iter()).take(j).map(|(x, y)| x * y).sum();
                let v = a[[i, j]] - dot;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(Error::NotPositiveDefinite {
                            context: context.to_string(),
                            pivot: i,
                            value: v,
                        });
                    }
                    l[[i, i]] = v.sqrt();
                } else {
                    l[[i, j]] = v / l[[j, j]];
                }
            }
        }
        Ok(Cholesky { lower: l })
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length");
        let l = &self.lower;
        let mut z = b.to_owned();
        for i in 0..n {
            let row = l.row(i);
            let mut s = z[i];
            for k in 0..i {
                s -= row[k] * z[k];
            }
            z[i] = s / row[i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        z
    }
}

/// Solves the symmetric positive-definite system `A x = b`.
pub fn solve_spd(
    a: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    context: &str,
) -> Result<Array1<f64>> {
    Ok(Cholesky::new(a, context)?.solve(b))
}

/// `Xᵀ X` for a column-major design.
pub fn gram(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.t().dot(&x)
}

/// `X diag(d) Xᵀ`, the m×m kernel used by the dual ridge form.
pub fn weighted_outer_gram(x: ArrayView2<'_, f64>, d: ArrayView1<'_, f64>) -> Array2<f64> {
    let scaled = &x * &d.map(|v| v.sqrt()).insert_axis(Axis(0));
    scaled.dot(&scaled.t())
}

pub fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.dot(&b)
}

pub fn norm_inf(v: ArrayView1<'_, f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_system() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let x = solve_spd(a.view(), b.view(), "test").unwrap();
        let back = a.dot(&x);
        for (u, v) in back.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        let err = Cholesky::new(a.view(), "indefinite").unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1, .. }));
    }

    #[test]
    fn outer_gram_matches_explicit_product() {
        let x = array![[1.0, 2.0, 0.0], [0.5, -1.0, 3.0]];
        let d = array![1.0, 4.0, 0.25];
        let k = weighted_outer_gram(x.view(), d.view());
        let explicit = x.dot(&Array2::from_diag(&d)).dot(&x.t());
        for (u, v) in k.iter().zip(explicit.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
