//! Triangle meshes, a handful of primitive generators and an OBJ subset reader.

use crate::error::{config, Error, Result};
use crate::num::{Real, Vec3};

/// Indexed triangle mesh with per-vertex unit normals, in the body frame (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh<T: Real> {
    vertices: Vec<Vec3<T>>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vec3<T>>,
}

const MIN_DOUBLE_AREA: f64 = 1e-12;
const NORMAL_TOL: f64 = 1e-9;

impl<T: Real> TriangleMesh<T> {
    pub fn new(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>, normals: Vec<Vec3<T>>) -> Result<Self> {
        if normals.len() != vertices.len() {
            return Err(config(format!(
                "mesh has {} vertices but {} normals",
                vertices.len(),
                normals.len()
            )));
        }
        let tol = if std::mem::size_of::<T>() < 8 { 1e-6 } else { NORMAL_TOL };
        for (i, n) in normals.iter().enumerate() {
            if (n.norm().as_f64() - 1.0).abs() > tol {
                return Err(config(format!("normal {i} is not unit length")));
            }
        }
        let mesh = Self { vertices, triangles, normals };
        mesh.check_triangles()?;
        Ok(mesh)
    }

    /// Builds a mesh whose normals are the area-weighted average of adjacent face normals.
    pub fn with_smooth_normals(vertices: Vec<Vec3<T>>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let mut mesh = Self {
            normals: vec![Vec3::zeros(); vertices.len()],
            vertices,
            triangles,
        };
        mesh.check_triangles()?;
        let mut acc = vec![Vec3::<T>::zeros(); mesh.vertices.len()];
        for tri in &mesh.triangles {
            let [a, b, c] = tri.map(|i| mesh.vertices[i as usize]);
            let face = (b - a).cross(&(c - a));
            for &i in tri {
                acc[i as usize] += face;
            }
        }
        for (i, n) in acc.into_iter().enumerate() {
            let len = n.norm();
            mesh.normals[i] = if len > T::zero() { n / len } else { Vec3::z() };
        }
        Ok(mesh)
    }

    fn check_triangles(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (ti, tri) in self.triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= nv) {
                return Err(config(format!("triangle {ti} references vertex {bad} (have {nv})")));
            }
            if self.double_area_f64(ti) <= MIN_DOUBLE_AREA {
                return Err(config(format!("triangle {ti} has zero area")));
            }
        }
        Ok(())
    }

    fn double_area_f64(&self, ti: usize) -> f64 {
        let [a, b, c] = self.triangles[ti].map(|i| {
            let v = self.vertices[i as usize];
            nalgebra::Vector3::new(v.x.as_f64(), v.y.as_f64(), v.z.as_f64())
        });
        (b - a).cross(&(c - a)).norm()
    }

    pub fn vertices(&self) -> &[Vec3<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vec3<T>] {
        &self.normals
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    /// UV sphere centred on the origin with poles on the z axis.
    pub fn uv_sphere(radius: T, stacks: usize, slices: usize) -> Result<Self> {
        if radius <= T::zero() || stacks < 2 || slices < 3 {
            return Err(config("sphere needs radius > 0, stacks >= 2, slices >= 3"));
        }
        let pi = T::pi();
        let mut vertices = vec![Vec3::new(T::zero(), T::zero(), -radius)];
        for i in 1..stacks {
            let polar = pi * T::lit(i as f64) / T::lit(stacks as f64);
            let (s, c) = (polar.sin(), -polar.cos());
            for j in 0..slices {
                let az = T::two_pi() * T::lit(j as f64) / T::lit(slices as f64);
                vertices.push(Vec3::new(radius * s * az.cos(), radius * s * az.sin(), radius * c));
            }
        }
        vertices.push(Vec3::new(T::zero(), T::zero(), radius));
        let top = (vertices.len() - 1) as u32;
        let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
        let mut triangles = Vec::new();
        for j in 0..slices {
            triangles.push([0, ring(1, j + 1), ring(1, j)]);
        }
        for i in 1..stacks - 1 {
            for j in 0..slices {
                let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
                triangles.push([a, b, d]);
                triangles.push([a, d, c]);
            }
        }
        for j in 0..slices {
            triangles.push([top, ring(stacks - 1, j), ring(stacks - 1, j + 1)]);
        }
        let normals = vertices.iter().map(|v| v / radius).collect();
        Self::new(vertices, triangles, normals)
    }

    /// Axis-aligned box centred on the origin, with flat per-face normals.
    pub fn cuboid(size: Vec3<T>) -> Result<Self> {
        if size.iter().any(|&s| s <= T::zero()) {
            return Err(config("box dimensions must be positive"));
        }
        let h = size / T::lit(2.0);
        let mut vertices = Vec::with_capacity(24);
        let mut normals = Vec::with_capacity(24);
        let mut triangles = Vec::with_capacity(12);
        for axis in 0..3 {
            for sign in [T::one(), -T::one()] {
                let mut n = Vec3::zeros();
                n[axis] = sign;
                let u_axis = (axis + 1) % 3;
                let v_axis = (axis + 2) % 3;
                let base = vertices.len() as u32;
                for (su, sv) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                    let mut p = Vec3::zeros();
                    p[axis] = sign * h[axis];
                    p[u_axis] = T::lit(su) * h[u_axis];
                    p[v_axis] = T::lit(sv) * h[v_axis];
                    vertices.push(p);
                    normals.push(n);
                }
                if sign > T::zero() {
                    triangles.push([base, base + 1, base + 2]);
                    triangles.push([base, base + 2, base + 3]);
                } else {
                    triangles.push([base, base + 2, base + 1]);
                    triangles.push([base, base + 3, base + 2]);
                }
            }
        }
        Self::new(vertices, triangles, normals)
    }

    /// Rectangle in the body XY plane centred on the origin, normal +Z.
    pub fn quad(width: T, height: T) -> Result<Self> {
        if width <= T::zero() || height <= T::zero() {
            return Err(config("quad dimensions must be positive"));
        }
        let (hw, hh) = (width / T::lit(2.0), height / T::lit(2.0));
        let z = T::zero();
        let vertices = vec![
            Vec3::new(-hw, -hh, z),
            Vec3::new(hw, -hh, z),
            Vec3::new(hw, hh, z),
            Vec3::new(-hw, hh, z),
        ];
        let normals = vec![Vec3::z(); 4];
        Self::new(vertices, vec![[0, 1, 2], [0, 2, 3]], normals)
    }

    /// Parses the `v`, `vn` and `f` records of a Wavefront OBJ file.
    ///
    /// Faces with more than three corners are fan-triangulated. When the file
    /// carries no normals, smooth normals are computed.
    pub fn from_obj(text: &str) -> Result<Self> {
        let mut positions: Vec<Vec3<T>> = Vec::new();
        let mut file_normals: Vec<Vec3<T>> = Vec::new();
        // (position index, normal index) pairs per face corner
        let mut faces: Vec<Vec<(usize, Option<usize>)>> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            let mut tok = content.split_whitespace();
            match tok.next() {
                Some("v") => positions.push(parse_vec3(&mut tok, line)?),
                Some("vn") => {
                    let n: Vec3<T> = parse_vec3(&mut tok, line)?;
                    let len = n.norm();
                    if len <= T::zero() {
                        return Err(Error::Parse { line, msg: "zero-length normal".into() });
                    }
                    file_normals.push(n / len);
                }
                Some("f") => {
                    let mut corners = Vec::new();
                    for t in tok {
                        let mut parts = t.split('/');
                        let vi = resolve_index(parts.next(), positions.len(), line)?
                            .ok_or_else(|| Error::Parse { line, msg: "face corner without vertex".into() })?;
                        let _vt = parts.next();
                        let ni = resolve_index(parts.next(), file_normals.len(), line)?;
                        corners.push((vi, ni));
                    }
                    if corners.len() < 3 {
                        return Err(Error::Parse { line, msg: "face needs at least 3 corners".into() });
                    }
                    faces.push(corners);
                }
                _ => {}
            }
        }

        let has_normals = faces.iter().flatten().all(|c| c.1.is_some()) && !faces.is_empty();
        if !has_normals {
            let triangles = faces
                .iter()
                .flat_map(|f| fan(f).map(|t| t.map(|c| c.0 as u32)))
                .collect();
            return Self::with_smooth_normals(positions, triangles);
        }

        let mut remap = std::collections::HashMap::new();
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        let mut triangles = Vec::new();
        for f in &faces {
            for tri in fan(f) {
                let idx = tri.map(|(vi, ni)| {
                    let key = (vi, ni.unwrap());
                    *remap.entry(key).or_insert_with(|| {
                        vertices.push(positions[vi]);
                        normals.push(file_normals[key.1]);
                        (vertices.len() - 1) as u32
                    })
                });
                triangles.push(idx);
            }
        }
        Self::new(vertices, triangles, normals)
    }
}

fn fan<C: Copy>(corners: &[C]) -> impl Iterator<Item = [C; 3]> + '_ {
    (1..corners.len() - 1).map(move |i| [corners[0], corners[i], corners[i + 1]])
}

fn parse_vec3<'a, T: Real>(tok: &mut impl Iterator<Item = &'a str>, line: usize) -> Result<Vec3<T>> {
    let mut c = [T::zero(); 3];
    for v in c.iter_mut() {
        let s = tok.next().ok_or_else(|| Error::Parse { line, msg: "expected 3 coordinates".into() })?;
        let f: f64 = s.parse().map_err(|_| Error::Parse { line, msg: format!("bad number '{s}'") })?;
        if !f.is_finite() {
            return Err(Error::Parse { line, msg: format!("non-finite number '{s}'") });
        }
        *v = T::lit(f);
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

/// OBJ indices are 1-based; negative values count back from the end.
fn resolve_index(part: Option<&str>, len: usize, line: usize) -> Result<Option<usize>> {
    let Some(s) = part.filter(|s| !s.is_empty()) else {
        return Ok(None);
    };
    let i: i64 = s.parse().map_err(|_| Error::Parse { line, msg: format!("bad index '{s}'") })?;
    let idx = if i > 0 { i - 1 } else { len as i64 + i };
    if i == 0 || idx < 0 || idx as usize >= len {
        return Err(Error::Parse { line, msg: format!("index {i} out of range") });
    }
    Ok(Some(idx as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_index_and_degenerate_triangles() {
        let v = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let n = vec![Vec3::z(); 3];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]], n.clone()).is_err());
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]], n.clone()).is_err());
        let bad_n = vec![Vec3::new(0.0, 0.0, 2.0); 3];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]], bad_n).is_err());
        assert!(TriangleMesh::<f64>::new(v, vec![[0, 1, 2]], n).is_ok());
    }

    #[test]
    fn obj_with_and_without_normals() {
        let src = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
        let m = TriangleMesh::<f64>::from_obj(src).unwrap();
        assert_eq!(m.triangle_count(), 2);
        assert!((m.normals()[0] - Vec3::z()).norm() < 1e-12);

        let src = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 2\nf 1//1 2//1 -1//1\n";
        let m = TriangleMesh::<f64>::from_obj(src).unwrap();
        assert_eq!(m.vertices().len(), 3);
        assert_eq!(m.normals()[2], Vec3::z());
    }

    #[test]
    fn obj_errors_carry_line() {
        let err = TriangleMesh::<f64>::from_obj("v 0 0 0\nv 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = TriangleMesh::<f64>::from_obj("v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn primitives_are_valid() {
        let s = TriangleMesh::<f64>::uv_sphere(1.0, 8, 12).unwrap();
        assert_eq!(s.vertices()[0], Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(s.triangle_count(), 2 * 12 + 2 * 12 * 6);
        assert_eq!(TriangleMesh::<f64>::cuboid(Vec3::new(1.0, 2.0, 3.0)).unwrap().triangle_count(), 12);
        assert_eq!(TriangleMesh::<f32>::quad(2.0, 1.0).unwrap().triangle_count(), 2);
    }

    #[test]
    fn cuboid_faces_point_outward() {
        let m = TriangleMesh::<f64>::cuboid(Vec3::new(1.0, 1.0, 1.0)).unwrap();
        for tri in m.triangles() {
            let [a, b, c] = tri.map(|i| m.vertices()[i as usize]);
            let face = (b - a).cross(&(c - a));
            let centroid = (a + b + c) / 3.0;
            assert!(face.dot(&centroid) > 0.0);
            assert!(face.normalize().dot(&m.normals()[tri[0] as usize]) > 0.999);
        }
    }
}
