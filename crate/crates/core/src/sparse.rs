//! Symmetric sparse matrices and an envelope `LDLᵀ` factorization.
//!
//! Graph discretizations produce matrices whose sparsity follows the graph:
//! tridiagonal along each edge, coupled through vertex rows. A reverse
//! Cuthill–McKee ordering turns that into a narrow envelope, so the
//! factorization costs `O(n·b²)` with `b` of the order of the largest vertex
//! degree. The factorization is unpivoted and works for real symmetric and
//! complex symmetric (non-Hermitian) matrices alike.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + PartialEq
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + 'static
{
    fn modulus(self) -> f64;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// Symmetric matrix stored as its diagonal plus the strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    diag: Vec<T>,
    /// `(i, j, a_ij)` with `i < j`, sorted and without duplicates.
    upper: Vec<(usize, usize, T)>,
}

impl<T: Scalar> SymMatrix<T> {
    /// Accumulates entries; off-diagonal pairs may be given in either order
    /// and repeated pairs are summed.
    pub fn from_entries(
        diag: Vec<T>,
        off: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Self {
        let n = diag.len();
        let mut acc: BTreeMap<(usize, usize), T> = BTreeMap::new();
        for (i, j, v) in off {
            assert!(i < n && j < n && i != j, "off-diagonal entry ({i}, {j}) out of range");
            let key = (i.min(j), i.max(j));
            let slot = acc.entry(key).or_insert_with(|| T::from(0.0));
            *slot = *slot + v;
        }
        Self {
            diag,
            upper: acc.into_iter().map(|((i, j), v)| (i, j, v)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn upper(&self) -> &[(usize, usize, T)] {
        &self.upper
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            return self.diag[i];
        }
        let key = (i.min(j), i.max(j));
        self.upper
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|k| self.upper[k].2)
            .unwrap_or_else(|_| T::from(0.0))
    }

    pub fn matvec<S>(&self, x: &[S]) -> Vec<S>
    where
        S: Copy + Add<Output = S> + Mul<T, Output = S>,
    {
        assert_eq!(x.len(), self.dim());
        let mut y: Vec<S> = x.iter().zip(&self.diag).map(|(&xi, &d)| xi * d).collect();
        for &(i, j, v) in &self.upper {
            y[i] = y[i] + x[j] * v;
            y[j] = y[j] + x[i] * v;
        }
        y
    }

    /// `scale·self + diag(shift)` over a possibly different scalar field.
    pub fn combine<U>(&self, scale: U, shift: &[U]) -> SymMatrix<U>
    where
        U: Scalar + Mul<T, Output = U>,
    {
        assert_eq!(shift.len(), self.dim());
        SymMatrix {
            diag: self
                .diag
                .iter()
                .zip(shift)
                .map(|(&a, &s)| scale * a + s)
                .collect(),
            upper: self.upper.iter().map(|&(i, j, v)| (i, j, scale * v)).collect(),
        }
    }
}

impl SymMatrix<f64> {
    /// `Re(x* A y)` for complex vectors.
    pub fn real_bilinear(&self, x: &[Complex64], y: &[Complex64]) -> f64 {
        let mut s: f64 = x
            .iter()
            .zip(y)
            .zip(&self.diag)
            .map(|((a, b), d)| d * (a.conj() * b).re)
            .sum();
        for &(i, j, v) in &self.upper {
            s += v * ((x[i].conj() * y[j]).re + (x[j].conj() * y[i]).re);
        }
        s
    }
}

/// Ordering and envelope profile shared by every matrix with the same
/// sparsity pattern.
#[derive(Debug, Clone)]
pub struct Envelope {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// `inv[old] = new`.
    inv: Vec<usize>,
    /// First column of the lower envelope of each permuted row.
    first: Vec<usize>,
    row_start: Vec<usize>,
}

impl Envelope {
    /// Reverse Cuthill–McKee ordering of the pattern of `m`.
    pub fn for_pattern<T: Scalar>(m: &SymMatrix<T>) -> Self {
        let n = m.dim();
        let mut adj = vec![Vec::new(); n];
        for &(i, j, _) in m.upper() {
            adj[i].push(j);
            adj[j].push(i);
        }
        let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        for a in &mut adj {
            a.sort_by_key(|&k| (degree[k], k));
        }

        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        while order.len() < n {
            let seed = (0..n)
                .filter(|&k| !placed[k])
                .min_by_key(|&k| (degree[k], k))
                .expect("an unplaced node exists");
            let start = pseudo_peripheral(seed, &adj);
            let mut queue = VecDeque::from([start]);
            placed[start] = true;
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in &adj[v] {
                    if !placed[w] {
                        placed[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        order.reverse();

        let mut inv = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in m.upper() {
            let (a, b) = (inv[i], inv[j]);
            let (lo, hi) = (a.min(b), a.max(b));
            first[hi] = first[hi].min(lo);
        }
        let mut row_start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            row_start.push(acc);
            acc += i - f;
        }
        row_start.push(acc);
        Self {
            perm: order,
            inv,
            first,
            row_start,
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Number of stored strictly-lower entries.
    pub fn profile(&self) -> usize {
        *self.row_start.last().unwrap_or(&0)
    }

    /// Largest row width of the envelope.
    pub fn bandwidth(&self) -> usize {
        self.first
            .iter()
            .enumerate()
            .map(|(i, &f)| i - f)
            .max()
            .unwrap_or(0)
    }
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let ecc = dist[last];
    (dist, ecc)
}

/// George–Liu search for a node of near-maximal eccentricity.
fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>]) -> usize {
    let mut v = seed;
    let (mut dist, mut ecc) = bfs_levels(v, adj);
    loop {
        let candidate = (0..adj.len())
            .filter(|&k| dist[k] == ecc)
            .min_by_key(|&k| adj[k].len())
            .unwrap_or(v);
        let (d2, e2) = bfs_levels(candidate, adj);
        if e2 <= ecc {
            return v;
        }
        v = candidate;
        dist = d2;
        ecc = e2;
    }
}

/// Unpivoted envelope factorization `P K Pᵀ = L D Lᵀ`.
#[derive(Debug, Clone)]
pub struct Ldlt<T> {
    env: Envelope,
    /// Strictly lower part of `L`, row by row within the envelope.
    lower: Vec<T>,
    d: Vec<T>,
}

impl<T: Scalar> Ldlt<T> {
    pub fn factor(m: &SymMatrix<T>, env: &Envelope) -> Result<Self> {
        let n = m.dim();
        if env.dim() != n {
            return Err(Error::Solver(format!(
                "envelope of size {} does not match matrix of size {n}",
                env.dim()
            )));
        }
        let zero = T::from(0.0);
        let mut lower = vec![zero; env.profile()];
        let mut d = vec![zero; n];
        for (old, &v) in m.diag().iter().enumerate() {
            d[env.inv[old]] = v;
        }
        for &(i, j, v) in m.upper() {
            let (a, b) = (env.inv[i], env.inv[j]);
            let (lo, hi) = (a.min(b), a.max(b));
            if lo < env.first[hi] {
                return Err(Error::Solver("entry outside the envelope".into()));
            }
            lower[env.row_start[hi] + lo - env.first[hi]] = v;
        }

        let scale = m.diag().iter().map(|v| v.modulus()).fold(0.0, f64::max).max(1.0);
        for i in 0..n {
            let fi = env.first[i];
            let ri = env.row_start[i];
            // g_ij = a_ij − Σ_k g_ik L_jk, stored in place in row i
            for j in fi..i {
                let fj = env.first[j];
                let rj = env.row_start[j];
                let k0 = fi.max(fj);
                let mut s = lower[ri + j - fi];
                for k in k0..j {
                    s = s - lower[ri + k - fi] * lower[rj + k - fj];
                }
                lower[ri + j - fi] = s;
            }
            let mut di = d[i];
            for j in fi..i {
                let g = lower[ri + j - fi];
                let l = g / d[j];
                lower[ri + j - fi] = l;
                di = di - g * l;
            }
            if !(di.modulus() > 1e-300 * scale) || !di.modulus().is_finite() {
                return Err(Error::Solver(format!(
                    "zero or non-finite pivot at row {i} ({di:?})"
                )));
            }
            d[i] = di;
        }
        Ok(Self {
            env: env.clone(),
            lower,
            d,
        })
    }

    pub fn pivots(&self) -> &[T] {
        &self.d
    }

    /// Solves `K x = b` in place.
    pub fn solve_in_place<S>(&self, b: &mut [S])
    where
        S: Copy + Sub<Output = S> + Mul<T, Output = S> + Div<T, Output = S>,
    {
        let env = &self.env;
        let n = self.d.len();
        assert_eq!(b.len(), n);
        let mut y: Vec<S> = env.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = env.first[i];
            let ri = env.row_start[i];
            let mut s = y[i];
            for k in fi..i {
                s = s - y[k] * self.lower[ri + k - fi];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] = y[i] / self.d[i];
        }
        for i in (0..n).rev() {
            let fi = env.first[i];
            let ri = env.row_start[i];
            let yi = y[i];
            for k in fi..i {
                y[k] = y[k] - yi * self.lower[ri + k - fi];
            }
        }
        for (new, &old) in env.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }
}

impl Ldlt<f64> {
    /// Number of negative pivots, equal to the number of negative
    /// eigenvalues of the factored matrix by Sylvester's law of inertia.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }
}
