use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};
use std::io::{BufRead, Write};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EvalError;

/// Indexed triangle mesh in scene coordinates (easting, northing, height).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, EvalError> {
        if let Some(v) = vertices.iter().find(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(EvalError::InvalidMesh(format!("non-finite vertex {v:?}")));
        }
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&k| k >= vertices.len()) {
                return Err(EvalError::InvalidMesh(format!("face {i} indexes past {} vertices", vertices.len())));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(EvalError::InvalidMesh(format!("face {i} repeats a vertex")));
            }
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }
    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vector3<f64>; 3] {
        self.faces[face].map(|k| self.vertices[k])
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriangleMesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(other.faces.iter().map(|f| f.map(|k| k + base)));
    }
}

/// The mesh vertices, as a point sample of the surface.
pub fn vertex_sample(mesh: &TriangleMesh) -> Vec<Vector3<f64>> {
    mesh.vertices.clone()
}

type CellKey = (i64, i64, i64);

/// Multiplicative hash for small integer keys; the default SipHash dominates
/// the sampler's run time otherwise.
#[derive(Default)]
struct CellHasher(u64);

impl Hasher for CellHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u64(u64::from(b));
        }
    }

    fn write_i64(&mut self, v: i64) {
        self.write_u64(v as u64);
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = (self.0.rotate_left(5) ^ v).wrapping_mul(0x517c_c1b7_2722_0a95);
    }
}

struct SpatialHash {
    cell: f64,
    cells: HashMap<CellKey, Vec<usize>, BuildHasherDefault<CellHasher>>,
}

impl SpatialHash {
    fn key(&self, p: &Vector3<f64>) -> CellKey {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64, (p.z / self.cell).floor() as i64)
    }

    fn has_neighbor_within(&self, p: &Vector3<f64>, points: &[Vector3<f64>], radius: f64) -> bool {
        let (i, j, k) = self.key(p);
        let near = |key: CellKey| {
            self.cells.get(&key).is_some_and(|bucket| bucket.iter().any(|&q| (points[q] - p).norm() <= radius))
        };
        if near((i, j, k)) {
            return true;
        }
        for di in -1..=1 {
            for dj in -1..=1 {
                for dk in -1..=1 {
                    if (di, dj, dk) != (0, 0, 0) && near((i + di, j + dj, k + dk)) {
                        return true;
                    }
                }
            }
        }
        false
    }

    fn insert(&mut self, p: &Vector3<f64>, index: usize) {
        let key = self.key(p);
        self.cells.entry(key).or_default().push(index);
    }
}

/// Consecutive rejections after which a region is considered full.
pub const POISSON_PATIENCE: usize = 30;

/// Longest edge of a sampling region, in units of the radius.
const REGION_SIZE: f64 = 4.0;

/// Piece of a face from a regular `n x n` subdivision: lattice cell `(i, j)`,
/// upward or downward triangle.
#[derive(Clone, Copy)]
struct Region {
    face: u32,
    n: u32,
    i: u32,
    j: u32,
    up: bool,
}

impl Region {
    fn corners(&self, mesh: &TriangleMesh) -> [Vector3<f64>; 3] {
        let [a, b, c] = mesh.triangle(self.face as usize);
        let n = f64::from(self.n);
        let at = |i: u32, j: u32| a + (b - a) * (f64::from(i) / n) + (c - a) * (f64::from(j) / n);
        let (i, j) = (self.i, self.j);
        if self.up {
            [at(i, j), at(i + 1, j), at(i, j + 1)]
        } else {
            [at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)]
        }
    }
}

/// Dart-throwing Poisson disk sampling on the mesh surface.
///
/// Faces are subdivided into regions no wider than `4 * radius`. A dart picks
/// an active region with probability proportional to its area, then a uniform
/// point in it, and is accepted when no accepted sample lies within `radius`.
/// A region retires after [`POISSON_PATIENCE`] consecutive rejections;
/// sampling ends when every region has retired.
pub fn poisson_disk_sample(mesh: &TriangleMesh, radius: f64, seed: u64) -> Result<Vec<Vector3<f64>>, EvalError> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(EvalError::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    let mut active = Vec::new();
    let mut area = Vec::new();
    for f in 0..mesh.faces.len() {
        let face_area = mesh.face_area(f);
        if face_area <= 0.0 {
            continue;
        }
        let [a, b, c] = mesh.triangle(f);
        let longest = (b - a).norm().max((c - a).norm()).max((c - b).norm());
        let n = ((longest / (REGION_SIZE * radius)).ceil() as u32).max(1);
        let piece = face_area / f64::from(n * n);
        for i in 0..n {
            for j in 0..n - i {
                active.push(Region { face: f as u32, n, i, j, up: true });
                area.push(piece);
                if i + j + 1 < n {
                    active.push(Region { face: f as u32, n, i, j, up: false });
                    area.push(piece);
                }
            }
        }
    }
    let max_area = area.iter().copied().fold(0.0, f64::max);
    let mut misses = vec![0usize; active.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hash = SpatialHash { cell: radius, cells: HashMap::default() };
    let mut points = Vec::new();
    while !active.is_empty() {
        let k = rng.random_range(0..active.len());
        if rng.random::<f64>() * max_area >= area[k] {
            continue;
        }
        let [a, b, c] = active[k].corners(mesh);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let p = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
        if hash.has_neighbor_within(&p, &points, radius) {
            misses[k] += 1;
            if misses[k] >= POISSON_PATIENCE {
                active.swap_remove(k);
                area.swap_remove(k);
                misses.swap_remove(k);
            }
        } else {
            hash.insert(&p, points.len());
            points.push(p);
            misses[k] = 0;
        }
    }
    Ok(points)
}

fn ply_err(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Ply { line, message: message.into() }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<String>,
}

/// Reads an ASCII PLY file. Vertex `x y z` are required; other vertex
/// properties are ignored. Polygons with more than three corners are
/// triangulated as fans. A file without faces yields a point set.
pub fn read_ply(reader: impl BufRead) -> Result<TriangleMesh, EvalError> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String), EvalError> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((n, Err(e))) => Err(ply_err(n, e.to_string())),
            None => Err(ply_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (n, magic) = next("magic")?;
    if magic.trim() != "ply" {
        return Err(ply_err(n, "missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (n, line) = next("header")?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(ply_err(n, format!("unsupported format {other}; only ascii"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| ply_err(n, "bad element count"))?;
                elements.push(Element { name: (*name).into(), count, props: Vec::new() });
            }
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements.last_mut().ok_or_else(|| ply_err(n, "property before element"))?;
                el.props.push((*name).into());
            }
            ["end_header"] => break,
            _ => return Err(ply_err(n, format!("unrecognized header line {line:?}"))),
        }
    }
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let (n, line) = next(&el.name)?;
            let tok: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let mut xyz = [0.0; 3];
                    for (slot, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
                        let idx = el.props.iter().position(|p| p == axis).ok_or_else(|| ply_err(n, format!("vertex lacks {axis}")))?;
                        let t = tok.get(idx).ok_or_else(|| ply_err(n, "short vertex line"))?;
                        *slot = t.parse().map_err(|_| ply_err(n, format!("bad number {t:?}")))?;
                    }
                    vertices.push(Vector3::from(xyz));
                }
                "face" => {
                    let idx: Vec<usize> = tok
                        .iter()
                        .map(|t| t.parse::<usize>().map_err(|_| ply_err(n, format!("bad index {t:?}"))))
                        .collect::<Result<_, _>>()?;
                    let (&k, rest) = idx.split_first().ok_or_else(|| ply_err(n, "empty face line"))?;
                    if rest.len() < k || k < 3 {
                        return Err(ply_err(n, "face list shorter than its count"));
                    }
                    for t in 1..k - 1 {
                        faces.push([rest[0], rest[t], rest[t + 1]]);
                    }
                }
                _ => {}
            }
        }
    }
    TriangleMesh::new(vertices, faces)
}

fn write_header(mut w: impl Write, vertices: usize, faces: Option<usize>) -> std::io::Result<()> {
    writeln!(w, "ply\nformat ascii 1.0")?;
    writeln!(w, "element vertex {vertices}\nproperty double x\nproperty double y\nproperty double z")?;
    if let Some(f) = faces {
        writeln!(w, "element face {f}\nproperty list uchar int vertex_indices")?;
    }
    writeln!(w, "end_header")
}

/// Writes an ASCII PLY. Coordinates use shortest round-trip formatting.
pub fn write_ply(mut w: impl Write, mesh: &TriangleMesh) -> Result<(), EvalError> {
    write_header(&mut w, mesh.vertices.len(), Some(mesh.faces.len()))?;
    for v in &mesh.vertices {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    Ok(())
}

pub fn write_points_ply(mut w: impl Write, points: &[Vector3<f64>]) -> Result<(), EvalError> {
    write_header(&mut w, points.len(), None)?;
    for v in points {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(size: f64) -> TriangleMesh {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(size, 0.0, 0.0),
            Vector3::new(size, size, 0.0),
            Vector3::new(0.0, size, 0.0),
        ];
        TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap()
    }

    #[test]
    fn mesh_validation() {
        let v = vec![Vector3::zeros(); 3];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert_eq!(vertex_sample(&TriangleMesh::new(v.clone(), vec![]).unwrap()), v);
        assert!(vertex_sample(&TriangleMesh::default()).is_empty());
    }

    #[test]
    fn empty_and_tiny() {
        assert!(poisson_disk_sample(&TriangleMesh::default(), 0.25, 1).unwrap().is_empty());
        let tri = TriangleMesh::new(
            vec![Vector3::zeros(), Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert!((tri.area() - 1.0).abs() < 1e-15);
        assert_eq!(poisson_disk_sample(&tri, 10.0, 3).unwrap().len(), 1);
        assert!(poisson_disk_sample(&tri, 0.0, 3).is_err());
    }

    #[test]
    fn plane_sampling_spacing_and_count() {
        let mesh = square(10.0);
        let pts = poisson_disk_sample(&mesh, 0.25, 7).unwrap();
        assert!((800..=1600).contains(&pts.len()), "{}", pts.len());
        for i in 0..pts.len() {
            assert!(pts[i].z == 0.0 && (0.0..=10.0).contains(&pts[i].x) && (0.0..=10.0).contains(&pts[i].y));
            for j in 0..i {
                assert!((pts[i] - pts[j]).norm() > 0.25);
            }
        }
        assert_eq!(pts, poisson_disk_sample(&mesh, 0.25, 7).unwrap());
        assert_ne!(pts, poisson_disk_sample(&mesh, 0.25, 8).unwrap());
    }

    #[test]
    fn ply_round_trip_and_quads() {
        let mesh = square(3.5);
        let mut buf = Vec::new();
        write_ply(&mut buf, &mesh).unwrap();
        assert_eq!(read_ply(&buf[..]).unwrap(), mesh);
        let text = "ply\nformat ascii 1.0\ncomment hi\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\n\
element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 9\n1 0 0 9\n1 1 0 9\n0 1 0 9\n4 0 1 2 3\n";
        let quad = read_ply(text.as_bytes()).unwrap();
        assert_eq!(quad.faces(), &[[0, 1, 2], [0, 2, 3]]);
        assert!(read_ply("ply\nformat binary_little_endian 1.0\nend_header\n".as_bytes()).is_err());
        assert!(read_ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n".as_bytes()).is_err());
    }

    #[test]
    fn points_ply() {
        let pts = vec![Vector3::new(1.5, -2.0, 0.1), Vector3::new(0.0, 0.0, 1e-9)];
        let mut buf = Vec::new();
        write_points_ply(&mut buf, &pts).unwrap();
        let back = read_ply(&buf[..]).unwrap();
        assert_eq!(back.vertices(), &pts[..]);
        assert!(back.faces().is_empty());
    }
}
