//! Sparse symmetric matrices and a simplicial Cholesky factorization with
//! fill-reducing ordering, log-determinants, sampling support and
//! Takahashi selected inversion.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;


use crate::error::{invalid, Error, Result};

const NONE: usize = usize::MAX;

/// Symmetric matrix stored as its lower triangle in compressed-column form.
/// Row indices within a column are strictly increasing and the diagonal,
/// when present, comes first.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Accumulates `(row, col, value)` entries; either triangle may be given and
/// duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        Self {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    /// Adds `value` at `(i, j)`; the mirrored entry is implied.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.n && j < self.n);
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        self.entries.push((r, c, value));
    }

    pub fn build(mut self) -> SparseSymmetric {
        self.entries.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; self.n + 1];
        let mut row_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for j in 0..self.n {
            col_ptr[j + 1] += col_ptr[j];
        }
        SparseSymmetric {
            n: self.n,
            col_ptr,
            row_idx,
            values,
        }
    }
}

impl SparseSymmetric {
    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self {
            n: d.len(),
            col_ptr: (0..=d.len()).collect(),
            row_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    /// Assembles from raw lower-triangular CSC arrays, validating structure.
    pub fn from_csc(n: usize, col_ptr: Vec<usize>, row_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if col_ptr.len() != n + 1 || row_idx.len() != values.len() || col_ptr[n] != row_idx.len() {
            return Err(invalid("inconsistent CSC arrays"));
        }
        for j in 0..n {
            let rows = &row_idx[col_ptr[j]..col_ptr[j + 1]];
            if rows.iter().any(|&r| r < j || r >= n) || rows.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("CSC rows must be sorted, unique and in the lower triangle"));
            }
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored (lower-triangle) entries.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Same structure, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        Self {
            n: self.n,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values,
        }
    }

    /// Position of `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let start = self.col_ptr[c];
        self.row_idx[start..self.col_ptr[c + 1]]
            .binary_search(&r)
            .ok()
            .map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Iterates stored `(row, col, value)` entries with `row >= col`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1]).map(move |p| (self.row_idx[p], j, self.values[p]))
        })
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (i, j, v) in self.iter() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.iter()
            .map(|(i, j, v)| if i == j { v * x[i] * x[i] } else { 2.0 * v * x[i] * x[j] })
            .sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.mul_vec(&vec![1.0; self.n])
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_values(self.values.iter().map(|v| v * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Dense row-major copy (both triangles).
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for (i, j, v) in self.iter() {
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
        d
    }

    /// Adjacency lists of the off-diagonal pattern (both directions, sorted).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, j, _) in self.iter() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        adj
    }
}

/// Sum of `Σ coeff_k · A_k` over a common union pattern.
pub fn linear_combination(terms: &[(f64, &SparseSymmetric)]) -> SparseSymmetric {
    let n = terms.first().map_or(0, |t| t.1.n);
    let cap = terms.iter().map(|t| t.1.nnz()).sum();
    let mut b = TripletBuilder::with_capacity(n, cap);
    for (c, m) in terms {
        assert_eq!(m.n, n);
        for (i, j, v) in m.iter() {
            b.add(i, j, c * v);
        }
    }
    b.build()
}

/// Sparse product `A · diag(d) · A` for symmetric `A` (used for `G C⁻¹ G`).
pub fn sandwich_diag(a: &SparseSymmetric, d: &[f64]) -> SparseSymmetric {
    let n = a.n;
    let adj_full: Vec<Vec<(usize, f64)>> = {
        let mut cols = vec![Vec::new(); n];
        for (i, j, v) in a.iter() {
            cols[j].push((i, v));
            if i != j {
                cols[i].push((j, v));
            }
        }
        cols
    };
    let mut b = TripletBuilder::new(n);
    // (A D A)_{ij} = Σ_k A_ik d_k A_kj
    for (k, col) in adj_full.iter().enumerate() {
        for &(i, aik) in col {
            for &(j, akj) in col {
                if i >= j {
                    b.add(i, j, aik * d[k] * akj);
                }
            }
        }
    }
    b.build()
}

/// Exact minimum-degree ordering on the explicit elimination graph.
/// Ties are broken by the smallest vertex index, so the result is
/// deterministic.
pub fn minimum_degree_order(adj: &[Vec<usize>]) -> Vec<usize> {
    use alloc::collections::BTreeSet;
    let n = adj.len();
    let mut graph: Vec<Vec<usize>> = adj.to_vec();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (graph[v].len(), v)).collect();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some((_, v)) = queue.pop_first() {
        done[v] = true;
        order.push(v);
        let nbrs = core::mem::take(&mut graph[v]);
        for &u in &nbrs {
            let old = graph[u].len();
            // graph[u] := (graph[u] ∪ nbrs) \ {u, v}
            merged.clear();
            let (a, b) = (&graph[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let next = if j == b.len() || (i < a.len() && a[i] < b[j]) {
                    i += 1;
                    a[i - 1]
                } else if i == a.len() || b[j] < a[i] {
                    j += 1;
                    b[j - 1]
                } else {
                    i += 1;
                    j += 1;
                    a[i - 1]
                };
                if next != u && next != v && !done[next] {
                    merged.push(next);
                }
            }
            core::mem::swap(&mut graph[u], &mut merged);
            let new = graph[u].len();
            if new != old {
                queue.remove(&(old, u));
                queue.insert((new, u));
            }
        }
    }
    order
}

/// Geometric nested dissection: recursively bisects the vertex set at the
/// median coordinate of its longer extent and orders the separating band
/// (vertices of one half adjacent to the other) after both halves.
pub fn nested_dissection_order(adj: &[Vec<usize>], coords: &[[f64; 2]]) -> Vec<usize> {
    const LEAF: usize = 48;
    fn split(nodes: Vec<usize>, adj: &[Vec<usize>], coords: &[[f64; 2]], mark: &mut [usize], stamp: &mut usize, order: &mut Vec<usize>) {
        if nodes.len() <= LEAF {
            order.extend(nodes);
            return;
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for &v in &nodes {
            for k in 0..2 {
                lo[k] = lo[k].min(coords[v][k]);
                hi[k] = hi[k].max(coords[v][k]);
            }
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        let mut nodes = nodes;
        nodes.sort_by(|&a, &b| coords[a][axis].total_cmp(&coords[b][axis]).then(a.cmp(&b)));
        let right = nodes.split_off(nodes.len() / 2);
        *stamp += 1;
        for &v in &right {
            mark[v] = *stamp;
        }
        let (sep, left): (Vec<usize>, Vec<usize>) = nodes.into_iter().partition(|&v| adj[v].iter().any(|&u| mark[u] == *stamp));
        split(left, adj, coords, mark, stamp, order);
        split(right, adj, coords, mark, stamp, order);
        order.extend(sep);
    }
    let n = adj.len();
    assert_eq!(coords.len(), n);
    let mut order = Vec::with_capacity(n);
    let mut mark = vec![0usize; n];
    let mut stamp = 0;
    split((0..n).collect(), adj, coords, &mut mark, &mut stamp, &mut order);
    order
}

/// Fill-reducing ordering plus the structure of the Cholesky factor.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    iperm: Vec<usize>,
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    /// For every stored entry of the source matrix, its slot in the permuted
    /// lower-triangular column scatter (`a_col_ptr` / `a_rows`).
    a_col_ptr: Vec<usize>,
    a_rows: Vec<usize>,
    a_src: Vec<usize>,
    source_nnz: usize,
    source_col_ptr: Vec<usize>,
    source_row_idx: Vec<usize>,
    /// Supernodes: consecutive columns sharing one row structure below the
    /// diagonal. `super_ptr[s]..super_ptr[s + 1]` are the columns of `s`.
    super_ptr: Vec<usize>,
    snode_of: Vec<usize>,
}

impl SymbolicCholesky {
    /// Analyzes `a` with a minimum-degree ordering.
    pub fn analyze(a: &SparseSymmetric) -> Self {
        let order = minimum_degree_order(&a.adjacency());
        Self::with_ordering(a, order)
    }

    /// Minimum-degree ordering of the first `a.n() - trailing` indices; the
    /// trailing indices (e.g. dense fixed-effect rows) are eliminated last
    /// in their natural order.
    pub fn analyze_with_trailing(a: &SparseSymmetric, trailing: usize) -> Self {
        let n = a.n();
        let head = n - trailing;
        let adj: Vec<Vec<usize>> = a
            .adjacency()
            .into_iter()
            .take(head)
            .map(|nb| nb.into_iter().filter(|&j| j < head).collect())
            .collect();
        let mut order = minimum_degree_order(&adj);
        order.extend(head..n);
        Self::with_ordering(a, order)
    }

    pub fn with_ordering(a: &SparseSymmetric, perm: Vec<usize>) -> Self {
        let n = a.n;
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        // Permuted lower-triangular pattern with links back to source slots.
        let mut entries: Vec<(usize, usize, usize)> = Vec::with_capacity(a.nnz());
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (pi, pj) = (iperm[a.row_idx[p]], iperm[j]);
                let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
                entries.push((c, r, p));
            }
        }
        entries.sort_unstable();
        let mut a_col_ptr = vec![0usize; n + 1];
        let mut a_rows = Vec::with_capacity(entries.len());
        let mut a_src = Vec::with_capacity(entries.len());
        for &(c, r, p) in &entries {
            a_col_ptr[c + 1] += 1;
            a_rows.push(r);
            a_src.push(p);
        }
        for j in 0..n {
            a_col_ptr[j + 1] += a_col_ptr[j];
        }

        // Elimination tree (Liu) from the row structure of the permuted matrix.
        let mut row_lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(c, r, _) in &entries {
            if r != c {
                row_lists[r].push(c);
            }
        }
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for i in 0..n {
            for &j in &row_lists[i] {
                let mut k = j;
                while k != NONE && k < i {
                    let next = ancestor[k];
                    ancestor[k] = i;
                    if next == NONE {
                        parent[k] = i;
                        break;
                    }
                    k = next;
                }
            }
        }

        // Column structures: own pattern plus children's structures.
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 0..n {
            if parent[j] != NONE {
                children[parent[j]].push(j);
            }
        }
        let mut cols: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut mark = vec![NONE; n];
        for j in 0..n {
            let mut s = Vec::new();
            s.push(j);
            mark[j] = j;
            for &r in &a_rows[a_col_ptr[j]..a_col_ptr[j + 1]] {
                if mark[r] != j {
                    mark[r] = j;
                    s.push(r);
                }
            }
            for &c in &children[j] {
                for &r in &cols[c] {
                    if r > j && mark[r] != j {
                        mark[r] = j;
                        s.push(r);
                    }
                }
            }
            s[1..].sort_unstable();
            cols.push(s);
        }
        let mut super_ptr = vec![0];
        for j in 1..n {
            let prev = &cols[j - 1];
            if !(prev.len() >= 2 && prev[1] == j && prev.len() == cols[j].len() + 1) {
                super_ptr.push(j);
            }
        }
        super_ptr.push(n);
        let mut snode_of = vec![0; n];
        for (k, w) in super_ptr.windows(2).enumerate() {
            snode_of[w[0]..w[1]].fill(k);
        }
        let mut l_col_ptr = Vec::with_capacity(n + 1);
        l_col_ptr.push(0);
        let mut l_row_idx = Vec::with_capacity(cols.iter().map(Vec::len).sum());
        for c in &cols {
            l_row_idx.extend_from_slice(c);
            l_col_ptr.push(l_row_idx.len());
        }

        Self {
            n,
            perm,
            iperm,
            l_col_ptr,
            l_row_idx,
            a_col_ptr,
            a_rows,
            a_src,
            source_nnz: a.nnz(),
            source_col_ptr: a.col_ptr.clone(),
            source_row_idx: a.row_idx.clone(),
            super_ptr,
            snode_of,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l_nnz(&self) -> usize {
        self.l_row_idx.len()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    fn matches(&self, a: &SparseSymmetric) -> bool {
        a.n == self.n && a.nnz() == self.source_nnz && a.col_ptr == self.source_col_ptr && a.row_idx == self.source_row_idx
    }

    /// Numeric factorization of a matrix with the analyzed structure
    /// (left-looking, supernodal).
    ///
    /// Column `j` of a supernode with row list `R` (first column `f`) stores
    /// the rows `R[j - f..]` contiguously, so each supernode is a dense
    /// trapezoid and updates between supernodes are dense products.
    pub fn factor(self: &Arc<Self>, a: &SparseSymmetric) -> Result<Cholesky> {
        if !self.matches(a) {
            return Err(invalid("matrix structure differs from the analyzed structure"));
        }
        let n = self.n;
        let lp = &self.l_col_ptr;
        let li = &self.l_row_idx;
        let sp = &self.super_ptr;
        let ns = sp.len() - 1;
        let mut lx = vec![0.0; li.len()];
        let mut map = vec![0usize; n];
        let mut head = vec![NONE; ns];
        let mut link = vec![NONE; ns];
        let mut pos = vec![0usize; ns];
        let mut buf: Vec<f64> = Vec::new();
        for s in 0..ns {
            let (f, l) = (sp[s], sp[s + 1]);
            let rows = &li[lp[f]..lp[f + 1]];
            let r = rows.len();
            for (k, &row) in rows.iter().enumerate() {
                map[row] = k;
            }
            for j in f..l {
                let base = lp[j] - (j - f);
                for q in self.a_col_ptr[j]..self.a_col_ptr[j + 1] {
                    lx[base + map[self.a_rows[q]]] += a.values[self.a_src[q]];
                }
            }

            // Updates from descendant supernodes with rows in f..l.
            let mut k = head[s];
            while k != NONE {
                let next = link[k];
                let (fk, lk) = (sp[k], sp[k + 1]);
                let rows_k = &li[lp[fk]..lp[fk + 1]];
                let rk = rows_k.len();
                let p = pos[k];
                let mut q = p;
                while q < rk && rows_k[q] < l {
                    q += 1;
                }
                let (nq, len) = (q - p, rk - p);
                buf.clear();
                buf.resize(nq * len, 0.0);
                for ck in 0..lk - fk {
                    let start = lp[fk + ck] + p - ck;
                    let col = &lx[start..start + len];
                    for jj in 0..nq {
                        let v = col[jj];
                        if v != 0.0 {
                            let out = &mut buf[jj * len..(jj + 1) * len];
                            for i in jj..len {
                                out[i] += v * col[i];
                            }
                        }
                    }
                }
                for jj in 0..nq {
                    let c = rows_k[p + jj] - f;
                    let base = lp[f + c] - c;
                    let upd = &buf[jj * len..(jj + 1) * len];
                    for i in jj..len {
                        lx[base + map[rows_k[p + i]]] -= upd[i];
                    }
                }
                pos[k] = q;
                if q < rk {
                    let t = self.snode_of[rows_k[q]];
                    link[k] = head[t];
                    head[t] = k;
                }
                k = next;
            }

            // Dense factorization of the trapezoid.
            for c in 0..l - f {
                let j = f + c;
                let start = lp[j];
                let clen = r - c;
                let (done, col) = lx.split_at_mut(start);
                let col = &mut col[..clen];
                for c2 in 0..c {
                    let off = lp[f + c2] - c2 + c;
                    let prev = &done[off..off + clen];
                    let v = prev[0];
                    if v != 0.0 {
                        for i in 0..clen {
                            col[i] -= v * prev[i];
                        }
                    }
                }
                let d = col[0];
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::NotPositiveDefinite {
                        pivot: self.perm[j],
                        value: d,
                    });
                }
                let ljj = d.sqrt();
                col[0] = ljj;
                for v in &mut col[1..] {
                    *v /= ljj;
                }
            }
            let w = l - f;
            if w < r {
                pos[s] = w;
                let t = self.snode_of[rows[w]];
                link[s] = head[t];
                head[t] = s;
            }
        }
        Ok(Cholesky {
            symbolic: Arc::clone(self),
            values: lx,
        })
    }
}

/// Numeric Cholesky factor `L Lᵀ = P A Pᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
}

impl Cholesky {
    /// One-shot analysis and factorization.
    pub fn factor(a: &SparseSymmetric) -> Result<Self> {
        Arc::new(SymbolicCholesky::analyze(a)).factor(a)
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn log_det(&self) -> f64 {
        let s = &self.symbolic;
        2.0 * (0..s.n).map(|j| self.values[s.l_col_ptr[j]].ln()).sum::<f64>()
    }

    /// Solves `L y = b` in permuted coordinates (in place).
    fn forward(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for j in 0..s.n {
            let start = s.l_col_ptr[j];
            y[j] /= self.values[start];
            let yj = y[j];
            for q in start + 1..s.l_col_ptr[j + 1] {
                y[s.l_row_idx[q]] -= self.values[q] * yj;
            }
        }
    }

    /// Solves `Lᵀ y = b` in permuted coordinates (in place).
    fn backward(&self, y: &mut [f64]) {
        let s = &self.symbolic;
        for j in (0..s.n).rev() {
            let start = s.l_col_ptr[j];
            let mut acc = y[j];
            for q in start + 1..s.l_col_ptr[j + 1] {
                acc -= self.values[q] * y[s.l_row_idx[q]];
            }
            y[j] = acc / self.values[start];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut y: Vec<f64> = s.perm.iter().map(|&p| b[p]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; s.n];
        for (k, &p) in s.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Maps standard-normal `z` to a draw with covariance `A⁻¹`.
    pub fn sample_with(&self, z: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        let mut y = z.to_vec();
        self.backward(&mut y);
        let mut x = vec![0.0; s.n];
        for (k, &p) in s.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }

    /// Entries of `A⁻¹` on the pattern of the factor (Takahashi recursions).
    pub fn selected_inverse(&self) -> SelectedInverse {
        let s = &self.symbolic;
        let lp = &s.l_col_ptr;
        let li = &s.l_row_idx;
        let lx = &self.values;
        let mut sig = vec![0.0; lx.len()];
        let mut acc = vec![0.0; s.n];
        for j in (0..s.n).rev() {
            let start = lp[j];
            let end = lp[j + 1];
            let ljj = lx[start];
            // acc_i = Σ_{k ∈ struct(j), k > j} L_kj Σ_ik   for i ∈ struct(j), i > j.
            for q in start + 1..end {
                acc[li[q]] = 0.0;
            }
            for qk in start + 1..end {
                let k = li[qk];
                let lkj = lx[qk];
                // Walk column k of Σ (rows ≥ k) against struct(j) ∩ [k, n).
                let mut pk = lp[k];
                for qi in qk..end {
                    let i = li[qi];
                    while li[pk] < i {
                        pk += 1;
                    }
                    debug_assert_eq!(li[pk], i);
                    let sik = sig[pk];
                    acc[i] += lkj * sik;
                    if i != k {
                        acc[k] += lx[qi] * sik;
                    }
                }
            }
            let mut diag_acc = 0.0;
            for q in start + 1..end {
                let i = li[q];
                let v = -acc[i] / ljj;
                sig[q] = v;
                diag_acc += lx[q] * v;
            }
            sig[start] = 1.0 / (ljj * ljj) - diag_acc / ljj;
        }
        SelectedInverse {
            symbolic: Arc::clone(&self.symbolic),
            values: sig,
        }
    }
}

/// Entries of an inverse on the (permuted) pattern of its Cholesky factor.
#[derive(Debug, Clone)]
pub struct SelectedInverse {
    symbolic: Arc<SymbolicCholesky>,
    values: Vec<f64>,
}

impl SelectedInverse {
    /// `(A⁻¹)_{ij}` in original indexing, when `(i, j)` lies on the factor pattern.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let s = &self.symbolic;
        let (pi, pj) = (s.iperm[i], s.iperm[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let start = s.l_col_ptr[c];
        s.l_row_idx[start..s.l_col_ptr[c + 1]]
            .binary_search(&r)
            .ok()
            .map(|k| self.values[start + k])
    }

    pub fn diag(&self) -> Vec<f64> {
        let s = &self.symbolic;
        (0..s.n).map(|i| self.values[s.l_col_ptr[s.iperm[i]]]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_2d(k: usize, shift: f64) -> SparseSymmetric {
        let n = k * k;
        let mut b = TripletBuilder::new(n);
        for i in 0..k {
            for j in 0..k {
                let v = i * k + j;
                b.add(v, v, 4.0 + shift);
                if i + 1 < k {
                    b.add(v + k, v, -1.0);
                }
                if j + 1 < k {
                    b.add(v + 1, v, -1.0);
                }
            }
        }
        b.build()
    }

    fn dense_inverse(a: &[f64], n: usize) -> Vec<f64> {
        let m = nalgebra::DMatrix::from_row_slice(n, n, a);
        let inv = m.try_inverse().unwrap();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = inv[(i, j)];
            }
        }
        out
    }

    #[test]
    fn builder_sums_duplicates_and_mirrors() {
        let mut b = TripletBuilder::new(3);
        b.add(0, 1, 1.0);
        b.add(1, 0, 2.0);
        b.add(2, 2, 5.0);
        let m = b.build();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
        assert_eq!(m.get(2, 2), 5.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn solve_logdet_and_inverse_match_dense() {
        let a = laplacian_2d(7, 0.3);
        let n = a.n();
        let chol = Cholesky::factor(&a).unwrap();
        let dense = a.to_dense();
        let dm = nalgebra::DMatrix::from_row_slice(n, n, &dense);
        let want_logdet = dm.clone().cholesky().unwrap().l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
        assert!((chol.log_det() - want_logdet).abs() < 1e-10);

        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let x = chol.solve(&b);
        let r = a.mul_vec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-12);
        }

        let inv = dense_inverse(&dense, n);
        let sel = chol.selected_inverse();
        for (i, j, _) in a.iter() {
            let got = sel.get(i, j).expect("pattern entry");
            assert!((got - inv[i * n + j]).abs() < 1e-12, "({i},{j})");
        }
        for (i, d) in sel.diag().iter().enumerate() {
            assert!((d - inv[i * n + i]).abs() < 1e-12);
        }
    }

    #[test]
    fn trailing_dense_rows_are_eliminated_last() {
        let base = laplacian_2d(5, 1.0);
        let n = base.n() + 2;
        let mut b = TripletBuilder::new(n);
        for (i, j, v) in base.iter() {
            b.add(i, j, v);
        }
        for i in 0..base.n() {
            b.add(n - 2, i, 0.05);
            b.add(n - 1, i, -0.03 * (i % 3) as f64);
        }
        b.add(n - 2, n - 2, 10.0);
        b.add(n - 1, n - 1, 10.0);
        b.add(n - 1, n - 2, 0.5);
        let a = b.build();
        let sym = Arc::new(SymbolicCholesky::analyze_with_trailing(&a, 2));
        assert_eq!(&sym.perm()[n - 2..], &[n - 2, n - 1]);
        let chol = sym.factor(&a).unwrap();
        let inv = dense_inverse(&a.to_dense(), n);
        let sel = chol.selected_inverse();
        for i in 0..n {
            assert!((sel.get(i, n - 1).unwrap() - inv[i * n + n - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn nested_dissection_factor_matches_dense() {
        // Three coupled copies of a grid Laplacian, ordered copy-inner so that
        // wide supernodes appear.
        let k = 12;
        let base = laplacian_2d(k, 0.2);
        let m = base.n();
        let n = 3 * m;
        let mut b = TripletBuilder::new(n);
        for t in 0..3 {
            for (i, j, v) in base.iter() {
                b.add(t * m + i, t * m + j, 2.0 * v);
            }
        }
        for t in 0..2 {
            for (i, j, v) in base.iter() {
                b.add((t + 1) * m + i, t * m + j, -0.5 * v);
                if i != j {
                    b.add((t + 1) * m + j, t * m + i, -0.5 * v);
                }
            }
        }
        let a = b.build();
        let coords: Vec<[f64; 2]> = (0..m).map(|v| [(v / k) as f64, (v % k) as f64]).collect();
        let spatial = nested_dissection_order(&base.adjacency(), &coords);
        let mut sorted = spatial.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..m).collect::<Vec<_>>());
        let order: Vec<usize> = spatial.iter().flat_map(|&v| (0..3).map(move |t| t * m + v)).collect();
        let sym = Arc::new(SymbolicCholesky::with_ordering(&a, order));
        assert!(sym.super_ptr.windows(2).any(|w| w[1] - w[0] >= 6));
        let chol = sym.factor(&a).unwrap();
        let dense = a.to_dense();
        let dm = nalgebra::DMatrix::from_row_slice(n, n, &dense);
        let want = dm.clone().cholesky().unwrap().l().diagonal().iter().map(|v| 2.0 * v.ln()).sum::<f64>();
        assert!((chol.log_det() - want).abs() < 1e-9 * want.abs());
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.61).cos()).collect();
        let r = a.mul_vec(&chol.solve(&rhs));
        assert!(r.iter().zip(&rhs).all(|(x, y)| (x - y).abs() < 1e-11));
        let inv = dense_inverse(&dense, n);
        let sel = chol.selected_inverse();
        for (i, j, _) in a.iter() {
            assert!((sel.get(i, j).unwrap() - inv[i * n + j]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let mut b = TripletBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(1, 1, 1.0);
        b.add(1, 0, 2.0);
        assert!(matches!(Cholesky::factor(&b.build()), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn refactoring_requires_same_structure() {
        let a = laplacian_2d(4, 0.0);
        let sym = Arc::new(SymbolicCholesky::analyze(&a));
        assert!(sym.factor(&a.scaled(2.0)).is_ok());
        assert!(sym.factor(&laplacian_2d(5, 0.0)).is_err());
    }

    #[test]
    fn sandwich_matches_dense_product() {
        let a = laplacian_2d(4, 0.0);
        let n = a.n();
        let d: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let p = sandwich_diag(&a, &d);
        let ad = a.to_dense();
        for i in 0..n {
            for j in 0..n {
                let want: f64 = (0..n).map(|k| ad[i * n + k] * d[k] * ad[k * n + j]).sum();
                assert!((p.get(i, j) - want).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn random_spd_solves(seed in 0u64..1000, n in 2usize..40) {
            // Random sparse diagonally dominant matrix.
            let mut b = TripletBuilder::new(n);
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let mut rowsum = vec![0.0; n];
            for i in 0..n {
                for j in 0..i {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    if (state >> 33) % 5 == 0 {
                        let v = ((state >> 11) % 1000) as f64 / 1000.0 - 0.5;
                        b.add(i, j, v);
                        rowsum[i] += v.abs();
                        rowsum[j] += v.abs();
                    }
                }
            }
            for i in 0..n { b.add(i, i, rowsum[i] + 0.5); }
            let a = b.build();
            let chol = Cholesky::factor(&a).unwrap();
            let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
            let x = chol.solve(&rhs);
            let r = a.mul_vec(&x);
            for i in 0..n { prop_assert!((r[i] - rhs[i]).abs() < 1e-10); }
            let inv = dense_inverse(&a.to_dense(), n);
            let sel = chol.selected_inverse();
            for (i, d) in sel.diag().iter().enumerate() {
                prop_assert!((d - inv[i * n + i]).abs() < 1e-10);
            }
        }
    }
}
