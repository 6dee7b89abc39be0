//! Face-normal directions of the seven polyhedra that define single-qubit
//! protocols, and the Bloch-sphere map from directions to qubit states.
//!
//! Every solid is built from the golden-ratio icosahedron with vertices at
//! cyclic permutations of `(0, ±1, ±φ)`, except the tetrahedron (even-sign
//! corners of the cube), the axis-aligned cube and the octahedron with face
//! normals `(±1, ±1, ±1)/√3`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    /// Normalizes `(x, y, z)`; panics on the zero vector.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        let n = (x * x + y * y + z * z).sqrt();
        assert!(n > 0.0, "direction from zero vector");
        Self {
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            x: st * cp,
            y: st * sp,
            z: ct,
        }
    }

    /// Polar and azimuthal angles, `theta` in `[0, π]`, `phi` in `(-π, π]`.
    pub fn spherical(&self) -> (f64, f64) {
        (self.z.clamp(-1.0, 1.0).acos(), self.y.atan2(self.x))
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn neg(&self) -> Direction {
        Direction {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolyhedronKind {
    Tetrahedron,
    Cube,
    Octahedron,
    Dodecahedron,
    Icosahedron,
    Fullerene,
    PentakisDodecahedron,
}

impl PolyhedronKind {
    pub const ALL: [PolyhedronKind; 7] = [
        PolyhedronKind::Tetrahedron,
        PolyhedronKind::Cube,
        PolyhedronKind::Octahedron,
        PolyhedronKind::Dodecahedron,
        PolyhedronKind::Icosahedron,
        PolyhedronKind::Fullerene,
        PolyhedronKind::PentakisDodecahedron,
    ];

    pub fn face_count(self) -> usize {
        match self {
            PolyhedronKind::Tetrahedron => 4,
            PolyhedronKind::Cube => 6,
            PolyhedronKind::Octahedron => 8,
            PolyhedronKind::Dodecahedron => 12,
            PolyhedronKind::Icosahedron => 20,
            PolyhedronKind::Fullerene => 32,
            PolyhedronKind::PentakisDodecahedron => 60,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolyhedronKind::Tetrahedron => "tetrahedron",
            PolyhedronKind::Cube => "cube",
            PolyhedronKind::Octahedron => "octahedron",
            PolyhedronKind::Dodecahedron => "dodecahedron",
            PolyhedronKind::Icosahedron => "icosahedron",
            PolyhedronKind::Fullerene => "fullerene",
            PolyhedronKind::PentakisDodecahedron => "pentakis-dodecahedron",
        }
    }
}

impl fmt::Display for PolyhedronKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolyhedronKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        let kind = match key.as_str() {
            "tetrahedron" | "tetra" => PolyhedronKind::Tetrahedron,
            "cube" | "hexahedron" => PolyhedronKind::Cube,
            "octahedron" | "octa" => PolyhedronKind::Octahedron,
            "dodecahedron" | "dodeca" => PolyhedronKind::Dodecahedron,
            "icosahedron" | "icosa" => PolyhedronKind::Icosahedron,
            "fullerene" | "truncated-icosahedron" => PolyhedronKind::Fullerene,
            "pentakis-dodecahedron" | "pentakis" | "fullerene-dual" => {
                PolyhedronKind::PentakisDodecahedron
            }
            _ => return Err(Error::InvalidArgument(format!("unknown polyhedron '{s}'"))),
        };
        Ok(kind)
    }
}

fn golden() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

/// The 12 vertices of the icosahedron, unnormalized (edge length 2).
fn icosahedron_vertices() -> Vec<[f64; 3]> {
    let phi = golden();
    let mut v = Vec::with_capacity(12);
    for &a in &[1.0, -1.0] {
        for &b in &[phi, -phi] {
            v.push([0.0, a, b]);
            v.push([a, b, 0.0]);
            v.push([b, 0.0, a]);
        }
    }
    v
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn icosahedron_edges(v: &[[f64; 3]]) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(30);
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            if (dist2(&v[i], &v[j]) - 4.0).abs() < 1e-9 {
                edges.push((i, j));
            }
        }
    }
    debug_assert_eq!(edges.len(), 30);
    edges
}

/// Centroids of the 20 triangular faces of the icosahedron.
fn icosahedron_face_centers(v: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(20);
    let adjacent = |a: usize, b: usize| (dist2(&v[a], &v[b]) - 4.0).abs() < 1e-9;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            for k in j + 1..v.len() {
                if adjacent(i, j) && adjacent(j, k) && adjacent(i, k) {
                    out.push([
                        (v[i][0] + v[j][0] + v[k][0]) / 3.0,
                        (v[i][1] + v[j][1] + v[k][1]) / 3.0,
                        (v[i][2] + v[j][2] + v[k][2]) / 3.0,
                    ]);
                }
            }
        }
    }
    debug_assert_eq!(out.len(), 20);
    out
}

/// The 60 vertices of the truncated icosahedron: points at one and two
/// thirds along each icosahedron edge.
fn truncated_icosahedron_vertices() -> Vec<[f64; 3]> {
    let v = icosahedron_vertices();
    let mut out = Vec::with_capacity(60);
    for (a, b) in icosahedron_edges(&v) {
        for t in [1.0 / 3.0, 2.0 / 3.0] {
            out.push([
                v[a][0] + t * (v[b][0] - v[a][0]),
                v[a][1] + t * (v[b][1] - v[a][1]),
                v[a][2] + t * (v[b][2] - v[a][2]),
            ]);
        }
    }
    out
}

fn normalized(points: impl IntoIterator<Item = [f64; 3]>) -> Vec<Direction> {
    points
        .into_iter()
        .map(|p| Direction::new(p[0], p[1], p[2]))
        .collect()
}

pub fn face_directions(kind: PolyhedronKind) -> Vec<Direction> {
    match kind {
        PolyhedronKind::Tetrahedron => normalized([
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]),
        PolyhedronKind::Cube => normalized([
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]),
        PolyhedronKind::Octahedron => {
            let mut pts = Vec::with_capacity(8);
            for &x in &[1.0, -1.0] {
                for &y in &[1.0, -1.0] {
                    for &z in &[1.0, -1.0] {
                        pts.push([x, y, z]);
                    }
                }
            }
            normalized(pts)
        }
        PolyhedronKind::Dodecahedron => normalized(icosahedron_vertices()),
        PolyhedronKind::Icosahedron => normalized(icosahedron_face_centers(&icosahedron_vertices())),
        PolyhedronKind::Fullerene => {
            let v = icosahedron_vertices();
            let mut pts = v.clone();
            pts.extend(icosahedron_face_centers(&v));
            normalized(pts)
        }
        PolyhedronKind::PentakisDodecahedron => normalized(truncated_icosahedron_vertices()),
    }
}

/// Bloch-sphere map `u -> (cos θ/2, e^{iφ} sin θ/2)`; the south pole maps
/// to `(0, 1)` exactly.
pub fn direction_to_qubit(u: &Direction) -> [Complex64; 2] {
    let cos_half = ((1.0 + u.z) / 2.0).max(0.0).sqrt();
    let sin_half = ((1.0 - u.z) / 2.0).max(0.0).sqrt();
    let rho = u.x.hypot(u.y);
    if sin_half == 0.0 || rho == 0.0 {
        return if u.z >= 0.0 {
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        } else {
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
        };
    }
    let phase = Complex64::new(u.x / rho, u.y / rho);
    [Complex64::new(cos_half, 0.0), phase * sin_half]
}

/// Bloch vector of a normalized qubit state.
pub fn qubit_to_direction(psi: &[Complex64; 2]) -> Direction {
    let cross = psi[0].conj() * psi[1];
    Direction::new(
        2.0 * cross.re,
        2.0 * cross.im,
        psi[0].norm_sqr() - psi[1].norm_sqr(),
    )
}
