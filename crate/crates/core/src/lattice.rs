//! Star plaquettes and open kagome patches.
//!
//! A star plaquette is a ring of `N` corner-sharing triangles. Inner ring
//! sites are `0..N`, apex sites are `N..2N`, and triangle `k` is
//! `(k, (k+1) % N, N + k)` with parity `k % 2`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Triangle {
    pub sites: [usize; 3],
    /// Even/odd position around a star, or up (0) / down (1) in a patch.
    pub parity: usize,
}

impl Triangle {
    pub fn bonds(&self) -> [(usize, usize); 3] {
        let [a, b, c] = self.sites;
        [(a, b), (b, c), (a, c)]
    }
}

/// Anything with sites, bonds and a triangle decomposition.
pub trait Lattice {
    fn n_sites(&self) -> usize;
    fn bonds(&self) -> &[(usize, usize)];
    fn triangles(&self) -> &[Triangle];

    fn n_triangles(&self) -> usize {
        self.triangles().len()
    }

    fn geometry(&self) -> Geometry {
        Geometry {
            sites: self.n_sites(),
            bonds: self.bonds().to_vec(),
            triangles: self.triangles().iter().map(|t| t.sites).collect(),
            parity: self.triangles().iter().map(|t| t.parity).collect(),
        }
    }
}

/// Serializable geometry dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Geometry {
    pub sites: usize,
    pub bonds: Vec<(usize, usize)>,
    pub triangles: Vec<[usize; 3]>,
    pub parity: Vec<usize>,
}

impl Geometry {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("geometry serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StarPlaquette {
    n_triangles: usize,
    bonds: Vec<(usize, usize)>,
    triangles: Vec<Triangle>,
}

impl StarPlaquette {
    pub fn n(&self) -> usize {
        self.n_triangles
    }

    pub fn inner_sites(&self) -> Vec<usize> {
        (0..self.n_triangles).collect()
    }

    pub fn apex_sites(&self) -> Vec<usize> {
        (self.n_triangles..2 * self.n_triangles).collect()
    }

    pub fn inner(&self, k: usize) -> usize {
        k % self.n_triangles
    }

    pub fn apex(&self, k: usize) -> usize {
        self.n_triangles + k % self.n_triangles
    }

    /// Outer bond `(inner_k, apex_k)`.
    pub fn outer_cw(&self, k: usize) -> (usize, usize) {
        (self.inner(k), self.apex(k))
    }

    /// Outer bond `(inner_{k+1}, apex_k)`.
    pub fn outer_ccw(&self, k: usize) -> (usize, usize) {
        (self.inner(k + 1), self.apex(k))
    }

    /// Inner ring bond `(inner_k, inner_{k+1})`.
    pub fn ring(&self, k: usize) -> (usize, usize) {
        (self.inner(k), self.inner(k + 1))
    }

    pub fn has_bond(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
    }
}

impl Lattice for StarPlaquette {
    fn n_sites(&self) -> usize {
        2 * self.n_triangles
    }
    fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }
    fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }
}

pub fn build_star(n_triangles: usize) -> Result<StarPlaquette> {
    if n_triangles < 4 || n_triangles % 2 == 1 {
        return Err(Error::Geometry(format!(
            "a star needs an even number (>= 4) of triangles for an even/odd \
             two-coloring, got {n_triangles}"
        )));
    }
    let n = n_triangles;
    let triangles: Vec<Triangle> = (0..n)
        .map(|k| Triangle {
            sites: [k, (k + 1) % n, n + k],
            parity: k % 2,
        })
        .collect();
    let bonds = triangles.iter().flat_map(|t| t.bonds()).collect();
    Ok(StarPlaquette {
        n_triangles,
        bonds,
        triangles,
    })
}

/// Open-boundary kagome tiling with three sites per unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct KagomePatch {
    pub rows: usize,
    pub cols: usize,
    bonds: Vec<(usize, usize)>,
    triangles: Vec<Triangle>,
}

impl Lattice for KagomePatch {
    fn n_sites(&self) -> usize {
        3 * self.rows * self.cols
    }
    fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }
    fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }
}

pub fn build_patch(rows: usize, cols: usize) -> Result<KagomePatch> {
    if rows == 0 || cols == 0 {
        return Err(Error::Geometry(format!(
            "patch dimensions must be positive, got {rows}x{cols}"
        )));
    }
    // cell (r, c) holds A = 3(r·cols + c), B = A + 1, C = A + 2
    let site = |r: usize, c: usize, s: usize| 3 * (r * cols + c) + s;
    let mut triangles = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            triangles.push(Triangle {
                sites: [site(r, c, 0), site(r, c, 1), site(r, c, 2)],
                parity: 0,
            });
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 1..cols {
            triangles.push(Triangle {
                sites: [site(r, c, 2), site(r + 1, c, 0), site(r + 1, c - 1, 1)],
                parity: 1,
            });
        }
    }
    let bonds = triangles.iter().flat_map(|t| t.bonds()).collect();
    Ok(KagomePatch {
        rows,
        cols,
        bonds,
        triangles,
    })
}
