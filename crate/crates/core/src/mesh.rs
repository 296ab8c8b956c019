//! Fixed-topology triangular meshes and the ASCII OFF format.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

/// Triangular mesh whose vertex indices carry semantic correspondence across
/// a cohort. Coordinates are in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

impl RegisteredMesh {
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::Data(format!("face {f:?} references a vertex beyond count {n}")));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Data("non-finite vertex coordinate".into()));
        }
        Ok(RegisteredMesh { vertices, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Every undirected edge is shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        let mut counts: HashMap<(usize, usize), u32> = HashMap::with_capacity(self.faces.len() * 2);
        for f in &self.faces {
            for e in 0..3 {
                let (a, b) = (f[e], f[(e + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !counts.is_empty() && counts.values().all(|&c| c == 2)
    }

    /// Enclosed volume in mm³ from the signed-tetrahedron sum; positive for
    /// outward-oriented faces.
    pub fn volume(&self) -> Result<f64> {
        if !self.is_closed() {
            return Err(Error::Data("volume undefined: mesh is not closed".into()));
        }
        Ok(signed_volume(&self.vertices, &self.faces))
    }

    pub fn same_topology(&self, other: &RegisteredMesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    pub fn to_off(&self) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 48 + self.faces.len() * 24);
        s.push_str("OFF\n");
        let _ = writeln!(s, "{} {} 0", self.vertices.len(), self.faces.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
        }
        s
    }

    pub fn from_off(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let bad = |msg: &str| Error::Data(format!("OFF: {msg}"));
        if lines.next() != Some("OFF") {
            return Err(bad("missing OFF header"));
        }
        let counts: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing counts line"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad counts line")))
            .collect::<Result<_>>()?;
        if counts.len() < 2 {
            return Err(bad("counts line needs vertex and face counts"));
        }
        let (nv, nf) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("truncated vertex list"))?;
            let c: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad vertex coordinate")))
                .collect::<Result<_>>()?;
            if c.len() != 3 {
                return Err(bad("vertex line must have 3 coordinates"));
            }
            vertices.push([c[0], c[1], c[2]]);
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let l = lines.next().ok_or_else(|| bad("truncated face list"))?;
            let c: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad face index")))
                .collect::<Result<_>>()?;
            if c.len() != 4 || c[0] != 3 {
                return Err(bad("only triangular faces `3 i j k` are supported"));
            }
            faces.push([c[1], c[2], c[3]]);
        }
        RegisteredMesh::new(vertices, faces)
    }

    pub fn write_off(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_off()).map_err(|e| Error::io(path, e))
    }

    pub fn read_off(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_off(&text)
    }
}

pub fn signed_volume(vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> f64 {
    faces
        .iter()
        .map(|f| {
            let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
            // a · (b × c)
            a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
        })
        .sum::<f64>()
        / 6.0
}

/// Perimeter of the closed polygon through `indices` in order.
pub fn polygon_perimeter(vertices: &[[f64; 3]], indices: &[usize]) -> f64 {
    let n = indices.len();
    (0..n)
        .map(|i| {
            let a = vertices[indices[i]];
            let b = vertices[indices[(i + 1) % n]];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .sum()
}
