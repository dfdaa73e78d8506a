//! Sparse symmetric storage and a skyline LDLᵀ factorization.
//!
//! FEM matrices here are assembled from 12×12 element blocks. The skyline
//! keeps, for every row, the contiguous run of columns from the first
//! coupled DOF up to the diagonal; the beam generator orders nodes so that
//! the run stays short.

use crate::error::{Error, Result};
use crate::mesh::TetMesh;

/// Receiver for assembled matrix entries.
pub trait Assemble {
    fn add(&mut self, i: usize, j: usize, v: f64);

    fn add_block<const N: usize>(&mut self, dofs: &[usize; N], block: &[[f64; N]; N]) {
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                self.add(i, j, block[a][b]);
            }
        }
    }
}

/// DOF indices `3 * node + axis` for the four nodes of a tet.
pub fn tet_dofs(tet: &[usize; 4]) -> [usize; 12] {
    let mut d = [0; 12];
    for (a, &n) in tet.iter().enumerate() {
        for k in 0..3 {
            d[3 * a + k] = 3 * n + k;
        }
    }
    d
}

#[derive(Debug, Clone)]
pub struct SkylineMatrix {
    n: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineMatrix {
    /// Empty matrix whose profile covers every pair of DOFs sharing a tet
    /// or a chamber triangle.
    pub fn for_mesh(mesh: &TetMesh) -> Self {
        let n = mesh.num_dofs();
        let mut first: Vec<usize> = (0..n).collect();
        let groups = mesh.tets.iter().map(|t| &t[..]).chain(
            mesh.chambers
                .iter()
                .flat_map(|c| c.triangles.iter().map(|t| &t[..])),
        );
        for group in groups {
            let lowest = 3 * group.iter().min().copied().unwrap_or(0);
            for &node in group {
                for k in 0..3 {
                    let i = 3 * node + k;
                    first[i] = first[i].min(lowest);
                }
            }
        }
        Self::with_profile(first)
    }

    pub fn with_profile(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut total = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile start beyond diagonal");
            offsets.push(total);
            total += i - f + 1;
        }
        offsets.push(total);
        SkylineMatrix {
            n,
            first,
            offsets,
            data: vec![0.0; total],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stored_entries(&self) -> usize {
        self.data.len()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        (j >= self.first[i]).then(|| self.offsets[i] + j - self.first[i])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.index(i, j).map_or(0.0, |k| self.data[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.data[self.offsets[i + 1] - 1])
            .collect()
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, v) in d.iter().enumerate() {
            let k = self.offsets[i + 1] - 1;
            self.data[k] += v;
        }
    }

    /// `self += s * other` for matrices with an identical profile.
    pub fn add_scaled(&mut self, s: f64, other: &SkylineMatrix) {
        assert_eq!(self.first, other.first, "profile mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    /// Replaces rows and columns of constrained DOFs by the identity.
    pub fn constrain(&mut self, fixed: &[bool]) {
        for i in 0..self.n {
            let start = self.offsets[i];
            for j in self.first[i]..=i {
                if fixed[i] || fixed[j] {
                    self.data[start + j - self.first[i]] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let start = self.offsets[i];
            let f = self.first[i];
            let mut acc = 0.0;
            for j in f..i {
                let a = self.data[start + j - f];
                acc += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += acc + self.data[start + i - f] * x[i];
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// In-place LDLᵀ factorization without pivoting.
    pub fn factor(mut self) -> Result<Ldlt> {
        let n = self.n;
        let scale = self
            .diagonal()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut d = vec![0.0; n];
        let mut negative = 0;
        for i in 0..n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            // g_ij = a_ij - sum_k g_ik l_jk, stored in place of a_ij
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let k0 = fi.max(fj);
                let mut s = self.data[oi + j - fi];
                for k in k0..j {
                    s -= self.data[oi + k - fi] * self.data[oj + k - fj];
                }
                self.data[oi + j - fi] = s;
            }
            let mut di = self.data[oi + i - fi];
            for j in fi..i {
                let g = self.data[oi + j - fi];
                let l = g / d[j];
                di -= l * g;
                self.data[oi + j - fi] = l;
            }
            if !di.is_finite() || di.abs() <= 1e-14 * scale {
                return Err(Error::Singular(format!(
                    "pivot {i} is {di:e} (matrix scale {scale:e})"
                )));
            }
            if di < 0.0 {
                negative += 1;
            }
            d[i] = di;
            self.data[oi + i - fi] = 1.0;
        }
        Ok(Ldlt {
            factors: self,
            d,
            negative_pivots: negative,
        })
    }
}

impl Assemble for SkylineMatrix {
    /// Entries above the diagonal are ignored; the lower triangle is stored.
    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        if j > i {
            return;
        }
        match self.index(i, j) {
            Some(k) => self.data[k] += v,
            None => panic!("entry ({i}, {j}) outside skyline profile"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ldlt {
    factors: SkylineMatrix,
    d: Vec<f64>,
    negative_pivots: usize,
}

impl Ldlt {
    /// Number of negative pivots, equal to the count of negative
    /// eigenvalues of the factored matrix.
    pub fn negative_pivots(&self) -> usize {
        self.negative_pivots
    }

    /// `min |d| / max |d|` over the pivots, a cheap conditioning estimate.
    pub fn pivot_ratio(&self) -> f64 {
        let (lo, hi) = self
            .d
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if hi > 0.0 {
            lo / hi
        } else {
            0.0
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.factors;
        let n = m.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let (fi, oi) = (m.first[i], m.offsets[i]);
            let mut s = x[i];
            for j in fi..i {
                s -= m.data[oi + j - fi] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let (fi, oi) = (m.first[i], m.offsets[i]);
            let xi = x[i];
            for j in fi..i {
                x[j] -= m.data[oi + j - fi] * xi;
            }
        }
        x
    }
}

/// Coordinate-format accumulator that stores both triangles, compressed
/// into CSR on demand.
#[derive(Debug, Clone, Default)]
pub struct TripletMatrix {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(n: usize) -> Self {
        TripletMatrix {
            n,
            entries: Vec::new(),
        }
    }

    pub fn to_csr(mut self) -> CsrMatrix {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::new();
        let mut vals: Vec<f64> = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

impl Assemble for TripletMatrix {
    fn add(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i, j, v));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.vals[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    pub fn has_entry(&self, i: usize, j: usize) -> bool {
        self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
            .binary_search(&j)
            .is_ok()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k]))
        })
    }

    /// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = self
            .iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0f64, f64::max);
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn banded_profile(n: usize, bw: usize) -> Vec<usize> {
        (0..n).map(|i| i.saturating_sub(bw)).collect()
    }

    fn fill(m: &mut SkylineMatrix, dense: &DMatrix<f64>) {
        for i in 0..dense.nrows() {
            for j in 0..=i {
                if m.index(i, j).is_some() {
                    m.add(i, j, dense[(i, j)]);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn ldlt_solves_banded_spd(seed in 0u64..1000, n in 2usize..30, bw in 0usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut a = DMatrix::<f64>::zeros(n, n);
            for i in 0..n {
                for j in i.saturating_sub(bw)..i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
            for i in 0..n {
                a[(i, i)] = 2.0 * bw as f64 + 1.0 + rng.random_range(0.0..1.0);
            }
            let mut m = SkylineMatrix::with_profile(banded_profile(n, bw));
            fill(&mut m, &a);
            let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = m.clone().factor().unwrap().solve(&b);
            let r = &a * DMatrix::from_column_slice(n, 1, &x) - DMatrix::from_column_slice(n, 1, &b);
            prop_assert!(r.amax() < 1e-12);
            let y = m.mul_vec(&x);
            for i in 0..n {
                prop_assert!((y[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inertia_counts_negative_eigenvalues() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, -3.0, 1.0, 0.0, 1.0, 4.0]);
        let mut m = SkylineMatrix::with_profile(vec![0, 0, 1]);
        fill(&mut m, &a);
        let f = m.factor().unwrap();
        let eig = a.clone().symmetric_eigen().eigenvalues;
        let neg = eig.iter().filter(|v| **v < 0.0).count();
        assert_eq!(f.negative_pivots(), neg);
        let x = f.solve(&[1.0, 2.0, 3.0]);
        let r = &a * DMatrix::from_column_slice(3, 1, &x);
        assert!(
            (r[0] - 1.0).abs() < 1e-14 && (r[1] - 2.0).abs() < 1e-14 && (r[2] - 3.0).abs() < 1e-14
        );
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut m = SkylineMatrix::with_profile(vec![0, 0]);
        m.add(0, 0, 1.0);
        m.add(1, 0, 1.0);
        m.add(1, 1, 1.0);
        assert!(matches!(m.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn constrain_makes_identity_rows() {
        let mut m = SkylineMatrix::with_profile(vec![0, 0, 0]);
        for i in 0..3 {
            for j in 0..=i {
                m.add(i, j, 1.0 + (i + j) as f64);
            }
        }
        m.constrain(&[false, true, false]);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(2, 1), 0.0);
        assert_eq!(m.get(2, 0), 3.0);
    }

    #[test]
    fn csr_sums_duplicates() {
        let mut t = TripletMatrix::new(2);
        t.add(0, 1, 1.0);
        t.add(0, 1, 2.0);
        t.add(1, 0, 3.0);
        let c = t.to_csr();
        assert_eq!(c.get(0, 1), 3.0);
        assert_eq!(c.nnz(), 2);
        assert_eq!(c.asymmetry(), 0.0);
        assert_eq!(c.mul_vec(&[1.0, 1.0]), vec![3.0, 3.0]);
    }
}
