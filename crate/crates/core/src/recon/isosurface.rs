//! Iso-surface extraction by marching tetrahedra.
//!
//! Each grid cell is split into six tetrahedra around its main diagonal.
//! The split is the same in every cell, so neighbouring cells agree on
//! shared faces and surfaces that stay inside the grid come out closed.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::volume::VacuumVolume;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    /// Counter-clockwise seen from outside (lower values).
    pub triangles: Vec<[usize; 3]>,
}

/// Cube corners are numbered `dx + 2 dy + 4 dz`. Each tetrahedron walks
/// from corner 0 to corner 7 along one ordering of the axes.
const TETRAHEDRA: [[usize; 4]; 6] =
    [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

struct Builder<'a> {
    volume: &'a VacuumVolume,
    level: f64,
    mesh: Mesh,
    edges: HashMap<(usize, usize), usize>,
}

impl Builder<'_> {
    fn position(&self, g: usize) -> [f64; 3] {
        let v = self.volume;
        let ix = g % v.dims[0];
        let iy = (g / v.dims[0]) % v.dims[1];
        let iz = g / (v.dims[0] * v.dims[1]);
        [v.coordinate(0, ix), v.coordinate(1, iy), v.coordinate(2, iz)]
    }

    /// Crossing vertex on the edge between grid points `a` (inside) and `b`.
    fn vertex(&mut self, a: usize, b: usize) -> usize {
        let key = (a.min(b), a.max(b));
        if let Some(&i) = self.edges.get(&key) {
            return i;
        }
        let (va, vb) = (self.volume.values[key.0], self.volume.values[key.1]);
        let t = (self.level - va) / (vb - va);
        let (pa, pb) = (self.position(key.0), self.position(key.1));
        let p = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]), pa[2] + t * (pb[2] - pa[2])];
        let i = self.mesh.vertices.len();
        self.mesh.vertices.push(p);
        self.edges.insert(key, i);
        i
    }

    /// Adds a triangle oriented so its normal points along `outward`.
    fn triangle(&mut self, mut t: [usize; 3], outward: [f64; 3]) {
        let v = &self.mesh.vertices;
        let n = cross(sub(v[t[1]], v[t[0]]), sub(v[t[2]], v[t[0]]));
        if dot(n, outward) < 0.0 {
            t.swap(1, 2);
        }
        self.mesh.triangles.push(t);
    }

    fn tetrahedron(&mut self, g: [usize; 4]) {
        let inside: Vec<usize> = g.iter().copied().filter(|&i| self.volume.values[i] > self.level).collect();
        let outside: Vec<usize> = g.iter().copied().filter(|&i| self.volume.values[i] <= self.level).collect();
        if inside.is_empty() || outside.is_empty() {
            return;
        }
        let centroid = |s: &Self, pts: &[usize]| {
            let mut c = [0.0; 3];
            for &p in pts {
                let q = s.position(p);
                for k in 0..3 {
                    c[k] += q[k] / pts.len() as f64;
                }
            }
            c
        };
        let outward = sub(centroid(self, &outside), centroid(self, &inside));
        match (inside.len(), outside.len()) {
            (1, 3) => {
                let t = [0, 1, 2].map(|k| self.vertex(inside[0], outside[k]));
                self.triangle(t, outward);
            }
            (3, 1) => {
                let t = [0, 1, 2].map(|k| self.vertex(inside[k], outside[0]));
                self.triangle(t, outward);
            }
            _ => {
                let (a, b, c, d) = (inside[0], inside[1], outside[0], outside[1]);
                let (ac, ad, bd, bc) = (self.vertex(a, c), self.vertex(a, d), self.vertex(b, d), self.vertex(b, c));
                self.triangle([ac, ad, bd], outward);
                self.triangle([ac, bd, bc], outward);
            }
        }
    }
}

/// Surface where the relative intensity equals `level`, enclosing the
/// region above it.
pub fn isosurface(volume: &VacuumVolume, level: f64) -> Result<Mesh> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::InvalidInput(format!("iso-level must be positive, got {level}")));
    }
    let max = volume.max();
    if level >= max {
        return Err(Error::EmptySurface { level, max });
    }
    let [nx, ny, nz] = volume.dims;
    let mut b = Builder { volume, level, mesh: Mesh::default(), edges: HashMap::new() };
    for iz in 0..nz - 1 {
        for iy in 0..ny - 1 {
            for ix in 0..nx - 1 {
                let corner: [usize; 8] = std::array::from_fn(|c| {
                    volume.index(ix + (c & 1), iy + ((c >> 1) & 1), iz + ((c >> 2) & 1))
                });
                for tet in &TETRAHEDRA {
                    b.tetrahedron(tet.map(|c| corner[c]));
                }
            }
        }
    }
    Ok(b.mesh)
}

impl Mesh {
    /// Connected components by shared vertices.
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for t in &self.triangles {
            for k in 1..3 {
                let (a, b) = (find(&mut parent, t[0]), find(&mut parent, t[k]));
                parent[a] = b;
            }
        }
        let mut roots: Vec<usize> = self.triangles.iter().map(|t| find(&mut parent, t[0])).collect();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    /// Every undirected edge is used by exactly two triangles, in opposite
    /// directions.
    pub fn is_closed(&self) -> bool {
        let mut directed: HashMap<(usize, usize), i32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *directed.entry((a, b)).or_default() += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// ASCII OBJ listing with 1-based face indices.
    pub fn to_obj(&self, header: &str) -> String {
        let mut s = String::with_capacity(self.vertices.len() * 72 + self.triangles.len() * 24);
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recon::volume::{assemble_volume, AxisProfiles, GridSpec};

    fn volume(dims: [usize; 3]) -> VacuumVolume {
        let w = 43e-6;
        let y: Vec<f64> = (0..241).map(|i| -3.0 * w + 6.0 * w * i as f64 / 240.0).collect();
        let axes = AxisProfiles {
            wavelength: 791.1e-9,
            wavelength_sigma: 0.0,
            row_wavelengths: vec![],
            z_reference: 0.0,
            x_waist: w,
            x_waist_sigma: 0.0,
            y_intensity: y.iter().map(|y| (-2.0 * y * y / (w * w)).exp()).collect(),
            y_samples: y,
            y_waist: w,
            y_waist_sigma: 0.0,
        };
        assemble_volume(&axes, &GridSpec::around_mode(w, axes.wavelength, dims), None).unwrap()
    }

    #[test]
    fn three_closed_lobes_at_half_wavelength_spacing() {
        let v = volume([25, 25, 61]);
        let mesh = isosurface(&v, 0.2).unwrap();
        assert_eq!(mesh.component_count(), 3);
        assert!(mesh.is_closed());
        // Lobe centroids sit at the antinodes 0 and ±λ/2.
        let mut zs: Vec<f64> = mesh.vertices.iter().map(|p| p[2]).collect();
        zs.sort_by(f64::total_cmp);
        let lambda = v.wavelength;
        assert!(zs[0] > -0.75 * lambda && zs[zs.len() - 1] < 0.75 * lambda);
    }

    #[test]
    fn extent_matches_level() {
        let v = volume([41, 41, 61]);
        let mesh = isosurface(&v, 0.2).unwrap();
        // On the z = 0 plane the contour is exp(−2r²/w²) = 0.2.
        let r_expected = 43e-6 * (0.5 * 5f64.ln()).sqrt();
        let r_max = mesh.vertices.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
        assert!((r_max / r_expected - 1.0).abs() < 0.02, "{r_max}");
    }

    #[test]
    fn vertex_count_grows_as_level_drops() {
        let v = volume([25, 25, 41]);
        let counts: Vec<usize> = [0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2].iter().map(|l| isosurface(&v, *l).unwrap().vertices.len()).collect();
        assert!(counts.windows(2).all(|w| w[1] >= w[0]), "{counts:?}");
    }

    #[test]
    fn level_limits() {
        let v = volume([5, 5, 9]);
        assert!(matches!(isosurface(&v, 1.5), Err(Error::EmptySurface { .. })));
        assert!(matches!(isosurface(&v, 1.0), Err(Error::EmptySurface { .. })));
        assert!(isosurface(&v, 0.0).is_err());
    }

    #[test]
    fn obj_lists_vertices_then_faces() {
        let v = volume([9, 9, 13]);
        let mesh = isosurface(&v, 0.5).unwrap();
        let obj = mesh.to_obj("level=0.5");
        assert!(obj.starts_with("# level=0.5\nv "));
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), mesh.triangles.len());
    }
}
