//! Static skeleton graphs, their Laplacians, and polynomial receptive fields.

use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Number of receptive fields (`ψ_0 .. ψ_{n-1}`) precomputed at construction.
pub const CACHED_FIELDS: usize = 8;

/// NTU RGB+D joint connectivity, 0-based (25 joints, 24 bones).
pub const NTU_BONES: [(usize, usize); 24] = [
    (0, 1),
    (1, 20),
    (20, 2),
    (2, 3),
    (20, 4),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 21),
    (7, 22),
    (20, 8),
    (8, 9),
    (9, 10),
    (10, 11),
    (11, 23),
    (11, 24),
    (0, 12),
    (12, 13),
    (13, 14),
    (14, 15),
    (0, 16),
    (16, 17),
    (17, 18),
    (18, 19),
];

/// Undirected weighted graph with cached normalized and scaled Laplacians.
///
/// Immutable after construction; safe to share between threads.
#[derive(Debug, Clone)]
pub struct StaticGraph<T> {
    adjacency: Matrix<T>,
    laplacian_norm: Matrix<T>,
    laplacian_scaled: Matrix<T>,
    fields: Vec<Matrix<T>>,
}

/// `ψ_k(L) = L^k` on the scaled Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptiveField<T> {
    pub order: usize,
    pub matrix: Matrix<T>,
}

impl<T: Scalar> StaticGraph<T> {
    /// Unit-weight graph from a bone list. Duplicate bones collapse.
    pub fn from_bones(n_nodes: usize, bones: &[(usize, usize)]) -> Result<Self> {
        let edges: Vec<_> = bones.iter().map(|&(i, j)| (i, j, T::one())).collect();
        Self::from_edges(n_nodes, &edges)
    }

    /// Weighted graph from an edge list. A repeated pair keeps the last weight.
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize, T)]) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::Graph("graph needs at least one node".into()));
        }
        let mut adj = Matrix::zeros(n_nodes, n_nodes);
        for &(i, j, w) in edges {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::Graph(format!(
                    "edge ({i}, {j}) out of range for {n_nodes} nodes"
                )));
            }
            if i == j {
                return Err(Error::Graph(format!("self-loop at node {i}")));
            }
            if !w.is_finite() || w < T::zero() {
                return Err(Error::NegativeWeight {
                    i,
                    j,
                    value: w.to_f64_lossy(),
                });
            }
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
        Self::from_adjacency(adj)
    }

    pub fn from_adjacency(adjacency: Matrix<T>) -> Result<Self> {
        let laplacian_norm = normalized_laplacian(&adjacency)?;
        let laplacian_scaled = scale_laplacian(&laplacian_norm)?;
        let n = adjacency.rows();
        let mut fields = Vec::with_capacity(CACHED_FIELDS);
        fields.push(Matrix::identity(n));
        for k in 1..CACHED_FIELDS {
            let next = fields[k - 1].matmul(&laplacian_scaled);
            fields.push(next);
        }
        Ok(Self {
            adjacency,
            laplacian_norm,
            laplacian_scaled,
            fields,
        })
    }

    /// Parses the plain-text edge list format: a header line `n m`, then `m`
    /// lines `i j [w]` with 0-based node indices and default weight 1.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| edge_err(1, "missing `n m` header"))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(edge_err(hline, "header must be `n m`"));
        }
        let n: usize = nums[0]
            .parse()
            .map_err(|_| edge_err(hline, "node count is not an integer"))?;
        let m: usize = nums[1]
            .parse()
            .map_err(|_| edge_err(hline, "edge count is not an integer"))?;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| edge_err(hline, "fewer edge lines than declared"))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 2 && parts.len() != 3 {
                return Err(edge_err(ln, "edge line must be `i j [w]`"));
            }
            let i: usize = parts[0].parse().map_err(|_| edge_err(ln, "bad index"))?;
            let j: usize = parts[1].parse().map_err(|_| edge_err(ln, "bad index"))?;
            let w = match parts.get(2) {
                Some(s) => T::of(s.parse::<f64>().map_err(|_| edge_err(ln, "bad weight"))?),
                None => T::one(),
            };
            edges.push((i, j, w));
        }
        if let Some((ln, _)) = lines.next() {
            return Err(edge_err(ln, "more edge lines than declared"));
        }
        Self::from_edges(n, &edges)
    }

    /// Inverse of [`StaticGraph::parse_edge_list`] (upper-triangular edges).
    pub fn to_edge_list(&self) -> String {
        let n = self.n_nodes();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let w = self.adjacency[(i, j)];
                if w != T::zero() {
                    edges.push(format!("{i} {j} {}", w.to_f64_lossy()));
                }
            }
        }
        let mut out = format!("{n} {}\n", edges.len());
        for e in edges {
            out.push_str(&e);
            out.push('\n');
        }
        out
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn adjacency(&self) -> &Matrix<T> {
        &self.adjacency
    }

    pub fn laplacian_norm(&self) -> &Matrix<T> {
        &self.laplacian_norm
    }

    pub fn laplacian_scaled(&self) -> &Matrix<T> {
        &self.laplacian_scaled
    }

    pub fn degrees(&self) -> Vec<T> {
        (0..self.n_nodes())
            .map(|i| self.adjacency.row(i).iter().copied().sum())
            .collect()
    }

    /// `ψ_k(L_scaled) = L_scaled^k`, with `ψ_0 = I`.
    pub fn receptive_field(&self, k: usize) -> ReceptiveField<T> {
        ReceptiveField {
            order: k,
            matrix: self.field(k).into_owned(),
        }
    }

    fn field(&self, k: usize) -> Cow<'_, Matrix<T>> {
        if let Some(m) = self.fields.get(k) {
            return Cow::Borrowed(m);
        }
        let mut m = self.fields.last().cloned().expect("ψ_0 is always cached");
        for _ in self.fields.len()..=k {
            m = m.matmul(&self.laplacian_scaled);
        }
        Cow::Owned(m)
    }

    /// `[ψ_0, …, ψ_{count-1}]`, borrowed from the cache when possible.
    pub fn fields(&self, count: usize) -> Cow<'_, [Matrix<T>]> {
        if count <= self.fields.len() {
            return Cow::Borrowed(&self.fields[..count]);
        }
        let mut all = self.fields.clone();
        while all.len() < count {
            let next = all[all.len() - 1].matmul(&self.laplacian_scaled);
            all.push(next);
        }
        Cow::Owned(all)
    }
}

fn edge_err(line: usize, msg: &str) -> Error {
    Error::Parse {
        offset: 0,
        line: Some(line),
        msg: msg.to_string(),
    }
}

/// `I − D^{-1/2} A D^{-1/2}`; rows and columns of isolated nodes are zero.
pub fn normalized_laplacian<T: Scalar>(adjacency: &Matrix<T>) -> Result<Matrix<T>> {
    if !adjacency.is_square() {
        return Err(Error::Dimension(format!(
            "adjacency must be square, got {:?}",
            adjacency.shape()
        )));
    }
    if !adjacency.is_symmetric(T::zero()) {
        return Err(Error::NotSymmetric);
    }
    let n = adjacency.rows();
    for i in 0..n {
        for j in 0..n {
            let w = adjacency[(i, j)];
            if !w.is_finite() || w < T::zero() {
                return Err(Error::NegativeWeight {
                    i,
                    j,
                    value: w.to_f64_lossy(),
                });
            }
        }
        if adjacency[(i, i)] != T::zero() {
            return Err(Error::Graph(format!("nonzero diagonal at node {i}")));
        }
    }
    let inv_sqrt: Vec<T> = (0..n)
        .map(|i| {
            let d: T = adjacency.row(i).iter().copied().sum();
            if d > T::zero() {
                T::one() / d.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    let mut l = Matrix::from_fn(n, n, |i, j| {
        let off = -(inv_sqrt[i] * adjacency[(i, j)] * inv_sqrt[j]);
        if i == j && inv_sqrt[i] > T::zero() {
            T::one() + off
        } else {
            off
        }
    });
    l.symmetrize();
    Ok(l)
}

/// Divides a normalized Laplacian by its spectral bound `λ_max = 2`.
pub fn scale_laplacian<T: Scalar>(laplacian: &Matrix<T>) -> Result<Matrix<T>> {
    if !laplacian.is_square() {
        return Err(Error::Dimension("Laplacian must be square".into()));
    }
    if !laplacian.is_symmetric(T::zero()) {
        return Err(Error::NotSymmetric);
    }
    Ok(laplacian.scale(T::of(0.5)))
}

/// Deduplicated, order-normalized bone list (`i < j`), sorted.
pub fn canonical_bones(bones: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let set: BTreeMap<(usize, usize), ()> = bones
        .iter()
        .map(|&(i, j)| ((i.min(j), i.max(j)), ()))
        .collect();
    set.into_keys().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    type G = StaticGraph<f64>;

    #[test]
    fn two_path() {
        let g = G::from_bones(2, &[(0, 1)]).unwrap();
        assert_eq!(g.adjacency(), &Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]));
        assert_eq!(
            g.laplacian_norm(),
            &Matrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]])
        );
        assert_eq!(
            g.laplacian_scaled(),
            &Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]])
        );
        let half = Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]]);
        assert_eq!(g.receptive_field(1).matrix, half);
        assert_eq!(g.receptive_field(2).matrix, half);
        assert_eq!(g.receptive_field(0).matrix, Matrix::identity(2));
    }

    #[test]
    fn no_edges_gives_zero_laplacian() {
        let g = G::from_bones(3, &[]).unwrap();
        assert_eq!(g.laplacian_norm(), &Matrix::zeros(3, 3));
        assert_eq!(g.receptive_field(0).matrix, Matrix::identity(3));
        assert_eq!(g.receptive_field(3).matrix, Matrix::zeros(3, 3));
    }

    #[test]
    fn duplicate_bones_collapse() {
        let a = G::from_bones(3, &[(0, 1), (1, 0), (1, 2)]).unwrap();
        let b = G::from_bones(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(a.adjacency(), b.adjacency());
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(G::from_bones(2, &[(0, 2)]), Err(Error::Graph(_))));
        assert!(matches!(G::from_bones(2, &[(1, 1)]), Err(Error::Graph(_))));
        assert!(matches!(
            G::from_edges(2, &[(0, 1, -1.0)]),
            Err(Error::NegativeWeight { .. })
        ));
        let asym = Matrix::from_rows(&[[0.0, 1.0], [0.5, 0.0]]);
        assert!(matches!(normalized_laplacian(&asym), Err(Error::NotSymmetric)));
        let neg = Matrix::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]);
        assert!(matches!(
            normalized_laplacian(&neg),
            Err(Error::NegativeWeight { .. })
        ));
    }

    #[test]
    fn ntu_skeleton_is_connected() {
        let g = G::from_bones(25, &NTU_BONES).unwrap();
        assert_eq!(canonical_bones(&NTU_BONES).len(), 24);
        let mut seen = vec![false; 25];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..25 {
                if g.adjacency()[(i, j)] != 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn fields_beyond_cache() {
        let g = G::from_bones(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let many = g.fields(CACHED_FIELDS + 2);
        assert_eq!(many.len(), CACHED_FIELDS + 2);
        let direct = g.receptive_field(CACHED_FIELDS + 1).matrix;
        assert_eq!(many[CACHED_FIELDS + 1], direct);
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# path with a heavy edge\n4 3\n0 1\n1 2 2.5\n2 3\n";
        let g = G::parse_edge_list(text).unwrap();
        assert_eq!(g.adjacency()[(1, 2)], 2.5);
        assert_eq!(g.adjacency()[(3, 2)], 1.0);
        let again = G::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(again.adjacency(), g.adjacency());
        assert!(G::parse_edge_list("3 2\n0 1\n").is_err());
        assert!(G::parse_edge_list("3 1\n0 x\n").is_err());
    }
}
