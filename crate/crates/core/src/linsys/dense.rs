//! Small dense solver: partial-pivot Gaussian elimination with rank detection.
//!
//! Systems here have at most a few dozen unknowns, so the matrix is kept as a
//! row-major `Vec<f64>`.

/// Row-major square or rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Outcome of [`solve`].
#[derive(Debug, Clone)]
pub struct DenseSolution {
    /// Minimum-norm solution when the system is consistent.
    pub x: Vec<f64>,
    pub rank: usize,
    /// Basis of the null space (empty when the matrix has full column rank).
    pub null_space: Vec<Vec<f64>>,
}

impl DenseSolution {
    pub fn unique(&self) -> bool {
        self.null_space.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DenseError {
    /// Residual of the eliminated rows that have no pivot.
    Inconsistent { residual: f64 },
    DimensionMismatch,
}

/// Pivot threshold relative to the matrix max-norm.
pub const RELATIVE_PIVOT_TOL: f64 = 1e-10;

/// Solve `a x = b`. Columns whose best pivot falls below
/// `RELATIVE_PIVOT_TOL * max|a|` are treated as free; the returned `x` is then
/// the minimum-norm point of the solution set.
pub fn solve(a: &Matrix, b: &[f64]) -> Result<DenseSolution, DenseError> {
    if b.len() != a.rows {
        return Err(DenseError::DimensionMismatch);
    }
    let (m, n) = (a.rows, a.cols);
    let scale = a.max_norm();
    let tol = RELATIVE_PIVOT_TOL * scale.max(f64::MIN_POSITIVE);
    let mut work = a.clone();
    let mut rhs = b.to_vec();
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, best_abs) = (row..m)
            .map(|r| (r, work.get(r, col).abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_abs <= tol {
            continue;
        }
        if best != row {
            for c in 0..n {
                work.data.swap(best * n + c, row * n + c);
            }
            rhs.swap(best, row);
        }
        let p = work.get(row, col);
        for r in row + 1..m {
            let f = work.get(r, col) / p;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                let v = work.get(r, c) - f * work.get(row, c);
                work.set(r, c, v);
            }
            work.set(r, col, 0.0);
            rhs[r] -= f * rhs[row];
        }
        pivots.push((row, col));
        row += 1;
    }
    let rank = pivots.len();
    let rhs_scale = b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let residual = rhs[rank..].iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if residual > 1e-9 * rhs_scale.max(scale) {
        return Err(DenseError::Inconsistent { residual });
    }

    let is_pivot: Vec<bool> = {
        let mut v = vec![false; n];
        for &(_, c) in &pivots {
            v[c] = true;
        }
        v
    };
    let back_substitute = |target: &[f64], free: &[f64]| -> Vec<f64> {
        let mut x = free.to_vec();
        for &(r, c) in pivots.iter().rev() {
            let mut s = target[r];
            for (cc, xc) in x.iter().enumerate().skip(c + 1) {
                s -= work.get(r, cc) * xc;
            }
            x[c] = s / work.get(r, c);
        }
        x
    };

    let particular = back_substitute(&rhs, &vec![0.0; n]);
    let zeros = vec![0.0; m];
    let null_space: Vec<Vec<f64>> = (0..n)
        .filter(|&c| !is_pivot[c])
        .map(|c| {
            let mut free = vec![0.0; n];
            free[c] = 1.0;
            back_substitute(&zeros, &free)
        })
        .collect();

    let x = if null_space.is_empty() {
        particular
    } else {
        project_out(&particular, &null_space)
    };
    Ok(DenseSolution {
        x,
        rank,
        null_space,
    })
}

/// Remove from `x` its component in `span(basis)`.
fn project_out(x: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let k = basis.len();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let mut gram = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gram.set(i, j, dot(&basis[i], &basis[j]));
        }
    }
    let proj: Vec<f64> = basis.iter().map(|v| dot(v, x)).collect();
    // The basis vectors are independent, so the Gram matrix is invertible.
    let coef = solve(&gram, &proj).map(|s| s.x).unwrap_or_else(|_| vec![0.0; k]);
    let mut out = x.to_vec();
    for (c, v) in coef.iter().zip(basis) {
        for (o, vi) in out.iter_mut().zip(v) {
            *o -= c * vi;
        }
    }
    out
}
