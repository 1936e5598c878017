//! Dense linear-algebra kernels shared by all ALS updates: Gram matrices,
//! symmetric positive-definite solves, Hadamard products and a matrix-free
//! conjugate-gradient solver.
//!
//! Everything here operates on small `k x k` (or `k^2 x k^2`) systems, so a
//! plain row-major matrix with an in-place Cholesky factorization is all that
//! is needed. All accumulation happens in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        DenseMatrix { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Sum of all rows, as a length-`cols` vector.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (acc, v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.cols, other.rows, "inner dimensions must agree");
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.data[i * self.cols + l];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[l * other.cols..(l + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// Transposed matrix-vector product `self^T * x`.
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for (i, xi) in x.iter().enumerate() {
            if *xi == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += xi * v;
            }
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds `w * s * s^T` (symmetric rank-one update).
    pub fn add_outer(&mut self, s: &[f64], w: f64) {
        debug_assert_eq!(self.rows, s.len());
        debug_assert_eq!(self.cols, s.len());
        let n = s.len();
        for i in 0..n {
            let wi = w * s[i];
            if wi == 0.0 {
                continue;
            }
            let row = &mut self.data[i * n..(i + 1) * n];
            for (r, sj) in row.iter_mut().zip(s) {
                *r += wi * sj;
            }
        }
    }

    /// Adds `shift` to the diagonal.
    pub fn add_diagonal(&mut self, shift: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += shift;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram matrix `M^T M`, symmetric `cols x cols`.
///
/// Mirrored entries are stored from the same accumulated value, so symmetry
/// holds to exact bit equality.
pub fn gram(m: &DenseMatrix) -> DenseMatrix {
    let k = m.cols;
    let mut g = DenseMatrix::zeros(k, k);
    for r in 0..m.rows {
        let row = m.row(r);
        for a in 0..k {
            let va = row[a];
            if va == 0.0 {
                continue;
            }
            for b in a..k {
                g.data[a * k + b] += va * row[b];
            }
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            g.data[b * k + a] = g.data[a * k + b];
        }
    }
    g
}

/// Elementwise (Hadamard) product.
pub fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}", a.rows, a.cols),
            got: format!("{}x{}", b.rows, b.cols),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(DenseMatrix {
        rows: a.rows,
        cols: a.cols,
        data,
    })
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = DenseMatrix::zeros(rows, cols);
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let av = a.get(i1, j1);
            if av == 0.0 {
                continue;
            }
            for i2 in 0..b.rows {
                for j2 in 0..b.cols {
                    out.set(i1 * b.rows + i2, j1 * b.cols + j2, av * b.get(i2, j2));
                }
            }
        }
    }
    out
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky.
///
/// The factorization is done on a copy; `A` is taken by reference. Callers
/// guarantee positive definiteness by adding `lambda * I` with `lambda > 0`.
pub fn solve_spd(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.rows, a.cols, "solve_spd needs a square matrix");
    assert_eq!(a.rows, b.len());
    let n = a.rows;
    let mut l = a.data.clone();

    // In-place lower Cholesky: A = L L^T.
    for j in 0..n {
        let mut d = l[j * n + j];
        for p in 0..j {
            d -= l[j * n + p] * l[j * n + p];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::NotSpd { row: j, pivot: d });
        }
        let dj = d.sqrt();
        l[j * n + j] = dj;
        for i in (j + 1)..n {
            let mut s = l[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            l[i * n + j] = s / dj;
        }
    }

    // Forward substitution L y = b.
    let mut x = b.to_vec();
    for i in 0..n {
        for p in 0..i {
            x[i] -= l[i * n + p] * x[p];
        }
        x[i] /= l[i * n + i];
    }
    // Back substitution L^T x = y.
    for i in (0..n).rev() {
        for p in (i + 1)..n {
            x[i] -= l[p * n + i] * x[p];
        }
        x[i] /= l[i * n + i];
    }
    Ok(x)
}

/// A symmetric positive semi-definite operator applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// Writes `A x` into `out`.
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl LinearOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.rows {
            out[i] = dot(self.row(i), x);
        }
    }
}

/// Residual threshold below which CG exits before using up its step budget.
pub const CG_RESIDUAL_CUTOFF: f64 = 1e-12;

/// Conjugate gradient iterate after `min(steps, dim)` iterations from `x0`.
///
/// With `steps >= dim` this recovers the exact solution of SPD systems up to
/// rounding. Early exit when the residual norm drops below
/// `CG_RESIDUAL_CUTOFF * max(1, |rhs|)`.
pub fn cg_solve<O: LinearOperator + ?Sized>(
    op: &O,
    rhs: &[f64],
    steps: usize,
    x0: &[f64],
) -> Vec<f64> {
    let n = op.dim();
    assert_eq!(rhs.len(), n);
    assert_eq!(x0.len(), n);

    let mut x = x0.to_vec();
    let steps = steps.min(n);
    if steps == 0 {
        return x;
    }

    let mut ax = vec![0.0; n];
    op.apply(&x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rs_old = dot(&r, &r);
    let cutoff = CG_RESIDUAL_CUTOFF * dot(rhs, rhs).sqrt().max(1.0);

    if rs_old.sqrt() < cutoff {
        return x;
    }

    let mut ap = vec![0.0; n];
    for _ in 0..steps {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Numerically lost positive definiteness; keep the current iterate.
            break;
        }
        let alpha = rs_old / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() < cutoff {
            break;
        }
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs_old = rs_new;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::gauss_jordan_solve;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, rng: &mut StdRng) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for v in &mut m.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut a = gram(&m.transpose());
        a.add_diagonal(0.5);
        a
    }

    #[test]
    fn gram_hand_computed() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let g = gram(&m);
        assert_eq!(g.data, vec![10.0, 14.0, 14.0, 20.0]);
    }

    #[test]
    fn gram_zero_and_identity() {
        let z = DenseMatrix::zeros(3, 2);
        assert_eq!(gram(&z).data, vec![0.0; 4]);
        let i = DenseMatrix::identity(3);
        assert_eq!(gram(&i), DenseMatrix::identity(3));
    }

    #[test]
    fn hadamard_examples() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let ones = DenseMatrix::filled(2, 2, 1.0);
        let zeros = DenseMatrix::zeros(2, 2);
        assert_eq!(hadamard(&a, &ones).unwrap(), a);
        assert_eq!(hadamard(&a, &zeros).unwrap().data, vec![0.0; 4]);
        let b = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 3.0]]);
        assert_eq!(hadamard(&a, &b).unwrap().data, vec![2.0, 0.0, 3.0, 12.0]);
    }

    #[test]
    fn hadamard_shape_mismatch() {
        let a = DenseMatrix::zeros(2, 2);
        let b = DenseMatrix::zeros(2, 3);
        assert!(hadamard(&a, &b).is_err());
    }

    #[test]
    fn solve_spd_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let x = solve_spd(&a, &[2.0, 8.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14);
        assert!((x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn solve_spd_identity() {
        let a = DenseMatrix::identity(4);
        let b = vec![1.5, -2.0, 0.25, 9.0];
        assert_eq!(solve_spd(&a, &b).unwrap(), b);
    }

    #[test]
    fn solve_spd_matches_explicit_inverse() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_spd(8, &mut rng);
            let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = solve_spd(&a, &b).unwrap();
            let oracle = gauss_jordan_solve(&a, &b);
            for (xi, oi) in x.iter().zip(&oracle) {
                assert!((xi - oi).abs() < 1e-8, "{} vs {}", xi, oi);
            }
        }
    }

    #[test]
    fn solve_spd_residual_bound() {
        let mut rng = StdRng::seed_from_u64(3);
        let a = random_spd(12, &mut rng);
        let b: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve_spd(&a, &b).unwrap();
        let ax = a.matvec(&x);
        let res: f64 = ax
            .iter()
            .zip(&b)
            .map(|(l, r)| (l - r) * (l - r))
            .sum::<f64>()
            .sqrt();
        let bnorm = dot(&b, &b).sqrt();
        assert!(res <= 1e-10 * bnorm.max(1.0), "residual {res}");
    }

    #[test]
    fn solve_spd_rejects_indefinite() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        match solve_spd(&a, &[1.0, 1.0]) {
            Err(Error::NotSpd { .. }) => {}
            other => panic!("expected NotSpd, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn cg_identity_single_step() {
        let a = DenseMatrix::identity(5);
        let rhs = vec![1.0, -2.0, 3.0, 0.5, -0.25];
        let x = cg_solve(&a, &rhs, 1, &[0.0; 5]);
        for (xi, bi) in x.iter().zip(&rhs) {
            assert!((xi - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_zero_steps_is_noop() {
        let a = DenseMatrix::identity(3);
        let x0 = vec![4.0, 5.0, 6.0];
        assert_eq!(cg_solve(&a, &[1.0, 1.0, 1.0], 0, &x0), x0);
    }

    #[test]
    fn cg_full_steps_matches_direct_solve() {
        let mut rng = StdRng::seed_from_u64(11);
        let a = random_spd(16, &mut rng);
        let rhs: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let exact = solve_spd(&a, &rhs).unwrap();
        let approx = cg_solve(&a, &rhs, 16, &[0.0; 16]);
        for (xi, ei) in approx.iter().zip(&exact) {
            assert!((xi - ei).abs() < 1e-6, "{} vs {}", xi, ei);
        }
    }

    #[test]
    fn cg_residual_non_increasing() {
        let mut rng = StdRng::seed_from_u64(23);
        let a = random_spd(10, &mut rng);
        let rhs: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut prev = f64::INFINITY;
        for steps in 0..=10 {
            let x = cg_solve(&a, &rhs, steps, &[0.0; 10]);
            let ax = a.matvec(&x);
            let res: f64 = ax
                .iter()
                .zip(&rhs)
                .map(|(l, r)| (l - r) * (l - r))
                .sum::<f64>()
                .sqrt();
            assert!(
                res <= prev + 1e-9,
                "residual increased at step {steps}: {res} > {prev}"
            );
            prev = res;
        }
    }

    #[test]
    fn kron_identity() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let i = DenseMatrix::identity(2);
        let k = kron(&i, &a);
        assert_eq!(k.get(0, 0), 1.0);
        assert_eq!(k.get(0, 1), 2.0);
        assert_eq!(k.get(2, 2), 1.0);
        assert_eq!(k.get(3, 2), 3.0);
        assert_eq!(k.get(0, 2), 0.0);
    }

    proptest! {
        #[test]
        fn gram_symmetric_bitwise(vals in proptest::collection::vec(-10.0f64..10.0, 12)) {
            let m = DenseMatrix { rows: 4, cols: 3, data: vals };
            let g = gram(&m);
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert_eq!(g.get(a, b).to_bits(), g.get(b, a).to_bits());
                }
            }
        }

        #[test]
        fn operator_linearity_probe(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let a = random_spd(6, &mut rng);
            let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut ax = vec![0.0; 6];
            let mut ay = vec![0.0; 6];
            let mut axy = vec![0.0; 6];
            a.apply(&x, &mut ax);
            a.apply(&y, &mut ay);
            let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u + v).collect();
            a.apply(&xy, &mut axy);
            for i in 0..6 {
                prop_assert!((axy[i] - ax[i] - ay[i]).abs() < 1e-9);
            }
        }
    }
}
