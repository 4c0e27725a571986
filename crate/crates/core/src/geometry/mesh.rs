use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Closed, orientable triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Validates indices, closedness, orientability, and face areas.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if nv == 0 || faces.is_empty() {
            return Err(Error::Topology("mesh has no vertices or no faces".into()));
        }
        for (f, face) in faces.iter().enumerate() {
            if let Some(&bad) = face.iter().find(|&&v| v >= nv) {
                return Err(Error::Topology(format!(
                    "face {f} references vertex {bad} but the mesh has {nv} vertices"
                )));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::Topology(format!("face {f} repeats a vertex")));
            }
        }

        // Each undirected edge must be shared by exactly two faces, traversed
        // in opposite directions.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (f, face) in faces.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (face[e], face[(e + 1) % 3]);
                if directed.insert((a, b), f).is_some() {
                    return Err(Error::Topology(format!(
                        "directed edge ({a}, {b}) appears twice: non-manifold or inconsistently oriented"
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(Error::Topology(format!(
                    "edge ({a}, {b}) belongs to a single face: mesh has a boundary"
                )));
            }
        }

        let mesh = Self { vertices, faces };
        for f in 0..mesh.faces.len() {
            let area = mesh.face_area(f);
            if !(area > 0.0) {
                return Err(Error::DegenerateGeometry(format!(
                    "face {f} has non-positive area {area:e}"
                )));
            }
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        // closed manifold: every edge is shared by two faces
        3 * self.faces.len() / 2
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.faces.len() as i64
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f].map(|v| self.vertices[v]);
        0.5 * norm(cross(sub(b, a), sub(c, a)))
    }

    /// Icosahedron refined `subdivisions` times by edge midpoints, projected
    /// onto the unit sphere. Vertex counts are `10 * 4^s + 2`.
    pub fn icosphere(subdivisions: u32) -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<[f64; 3]> = vec![
            [-1.0, phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [0.0, 1.0, -phi],
            [phi, 0.0, -1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
        ]
        .into_iter()
        .map(normalize)
        .collect();
        let mut faces: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut refined = Vec::with_capacity(faces.len() * 4);
            let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    let m = normalize(scale(add(verts[a], verts[b]), 0.5));
                    verts.push(m);
                    verts.len() - 1
                })
            };
            for [a, b, c] in faces {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                refined.push([a, ab, ca]);
                refined.push([b, bc, ab]);
                refined.push([c, ca, bc]);
                refined.push([ab, bc, ca]);
            }
            faces = refined;
        }
        Self { vertices, faces }
    }

    /// Reads an OFF file: `OFF`, then `NV NF NE`, then vertex and face lines.
    pub fn load_off(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_off(&text).map_err(|(line, reason)| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        })?
    }

    /// Parses OFF text. The outer error carries `(line, reason)` for syntax
    /// problems; the inner result carries topology validation.
    pub fn parse_off(text: &str) -> std::result::Result<Result<Self>, (usize, String)> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        match lines.next() {
            Some((_, "OFF")) => {}
            Some((n, other)) => return Err((n, format!("expected `OFF`, found `{other}`"))),
            None => return Err((0, "empty file".into())),
        }
        let (n, header) = lines.next().ok_or((0, "missing count line".to_string()))?;
        let counts = parse_numbers::<usize>(header).map_err(|e| (n, e))?;
        if counts.len() < 2 {
            return Err((n, "count line needs `NV NF NE`".into()));
        }
        let (nv, nf) = (counts[0], counts[1]);

        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, l) = lines
                .next()
                .ok_or((0, "unexpected end of vertices".to_string()))?;
            let xyz = parse_numbers::<f64>(l).map_err(|e| (n, e))?;
            if xyz.len() < 3 {
                return Err((n, "vertex line needs 3 coordinates".into()));
            }
            vertices.push([xyz[0], xyz[1], xyz[2]]);
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (n, l) = lines
                .next()
                .ok_or((0, "unexpected end of faces".to_string()))?;
            let idx = parse_numbers::<usize>(l).map_err(|e| (n, e))?;
            if idx.first() != Some(&3) || idx.len() < 4 {
                return Err((n, "only triangular faces `3 i j k` are supported".into()));
            }
            faces.push([idx[1], idx[2], idx[3]]);
        }
        Ok(Self::new(vertices, faces))
    }

    pub fn to_off_string(&self) -> String {
        let mut s = format!(
            "OFF\n{} {} {}\n",
            self.vertices.len(),
            self.faces.len(),
            self.num_edges()
        );
        for v in &self.vertices {
            s.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", v[0], v[1], v[2]));
        }
        for f in &self.faces {
            s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
        }
        s
    }
}

fn parse_numbers<T: std::str::FromStr>(line: &str) -> std::result::Result<Vec<T>, String> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<T>()
                .map_err(|_| format!("cannot parse `{tok}` as a number"))
        })
        .collect()
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    scale(a, 1.0 / norm(a))
}
