//! Discrete oriented varifolds: finite sums of weighted Diracs `r δ_(x,U)`.
//!
//! An oriented d-plane `U` is carried by a frame of d vectors whose parallelotope
//! volume is the Dirac's weight, so deforming the frame by a linear map rescales the
//! weight by the d-dimensional Jacobian automatically.

use crate::error::{Error, Result};
use crate::linalg::{cross_gram, det, det_general, dot, MAX_PLANE_DIM};
use crate::scalar::{lit, to_f64, Real};

/// Volume below which a frame (or an atom weight) counts as degenerate.
pub const DEGENERATE_VOLUME: f64 = 1e-14;

/// Relative tolerance between a stored weight and its frame volume.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// `√det(Gram(frame))` for a frame stored as `d` rows of length `n`; 0 when rank deficient.
pub fn frame_volume<T: Real>(frame: &[T], d: usize, n: usize) -> T {
    assert!(d <= n, "frame has more vectors ({d}) than the ambient dimension ({n})");
    assert_eq!(frame.len(), d * n);
    let mut g = [T::zero(); MAX_PLANE_DIM * MAX_PLANE_DIM];
    let g = &mut g[..d * d];
    cross_gram(frame, frame, d, n, g);
    let dt = det(g, d);
    if dt <= T::zero() {
        T::zero()
    } else {
        dt.sqrt()
    }
}

/// Inner product of the oriented planes spanned by two frames, `det(a_k · b_l) / (|a| |b|)`.
pub fn grassmann_inner<T: Real>(a: &[T], b: &[T], d: usize, n: usize) -> Result<T> {
    let va = frame_volume(a, d, n);
    let vb = frame_volume(b, d, n);
    let tiny = lit::<T>(DEGENERATE_VOLUME);
    if va < tiny {
        return Err(Error::DegenerateFrame { atom: 0, volume: to_f64(va) });
    }
    if vb < tiny {
        return Err(Error::DegenerateFrame { atom: 1, volume: to_f64(vb) });
    }
    let mut g = [T::zero(); MAX_PLANE_DIM * MAX_PLANE_DIM];
    let g = &mut g[..d * d];
    cross_gram(a, b, d, n, g);
    Ok(det(g, d) / (va * vb))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiracAtom<T> {
    pub position: Vec<T>,
    /// `d` frame vectors of length `n`, row-major. Empty for d = 0.
    pub frame: Vec<T>,
    pub weight: T,
}

impl<T: Real> DiracAtom<T> {
    pub fn frame_vector(&self, k: usize) -> &[T] {
        let n = self.position.len();
        &self.frame[k * n..(k + 1) * n]
    }

    pub fn is_degenerate(&self) -> bool {
        self.weight <= lit(DEGENERATE_VOLUME)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiracVarifold<T> {
    n: usize,
    d: usize,
    atoms: Vec<DiracAtom<T>>,
}

impl<T: Real> DiracVarifold<T> {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n < 1 || d > n || d > MAX_PLANE_DIM {
            return Err(Error::InvalidInput(format!(
                "unsupported dimensions n = {n}, d = {d}"
            )));
        }
        Ok(Self {
            n,
            d,
            atoms: Vec::new(),
        })
    }

    /// Builds a varifold from atoms, checking dimensions and that weights match frame volumes.
    pub fn from_atoms(n: usize, d: usize, atoms: Vec<DiracAtom<T>>) -> Result<Self> {
        let mut v = Self::new(n, d)?;
        for (i, a) in atoms.iter().enumerate() {
            v.check_atom(i, a)?;
        }
        v.atoms = atoms;
        Ok(v)
    }

    fn check_atom(&self, i: usize, a: &DiracAtom<T>) -> Result<()> {
        if a.position.len() != self.n || a.frame.len() != self.d * self.n {
            return Err(Error::DimensionMismatch(format!(
                "atom {i}: expected position of length {} and {} frame vectors",
                self.n, self.d
            )));
        }
        if a.position.iter().chain(&a.frame).any(|x| !x.is_finite()) || !a.weight.is_finite() {
            return Err(Error::InvalidInput(format!("atom {i} has non-finite coordinates")));
        }
        if a.weight < T::zero() {
            return Err(Error::InvalidWeights(format!("atom {i} has negative weight")));
        }
        if self.d > 0 {
            let vol = frame_volume(&a.frame, self.d, self.n);
            let scale = vol.max(a.weight).max(T::one());
            if (vol - a.weight).abs() > lit::<T>(WEIGHT_TOLERANCE) * scale {
                return Err(Error::InvalidWeights(format!(
                    "atom {i}: weight {} differs from frame volume {}",
                    a.weight, vol
                )));
            }
        }
        Ok(())
    }

    /// Appends an atom whose weight is the volume of `frame` (d ≥ 1).
    pub fn push_oriented(&mut self, position: Vec<T>, frame: Vec<T>) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidInput("d = 0 varifolds carry no frames".into()));
        }
        let weight = if frame.len() == self.d * self.n {
            frame_volume(&frame, self.d, self.n)
        } else {
            T::zero()
        };
        let atom = DiracAtom {
            position,
            frame,
            weight,
        };
        self.check_atom(self.atoms.len(), &atom)?;
        self.atoms.push(atom);
        Ok(())
    }

    /// Appends a weighted point mass (d = 0).
    pub fn push_mass(&mut self, position: Vec<T>, weight: T) -> Result<()> {
        if self.d != 0 {
            return Err(Error::InvalidInput(
                "point masses need a d = 0 varifold".into(),
            ));
        }
        let atom = DiracAtom {
            position,
            frame: Vec::new(),
            weight,
        };
        self.check_atom(self.atoms.len(), &atom)?;
        self.atoms.push(atom);
        Ok(())
    }

    pub fn dim_ambient(&self) -> usize {
        self.n
    }

    pub fn dim_plane(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[DiracAtom<T>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn weights(&self) -> Vec<T> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    pub fn positions(&self) -> Vec<Vec<T>> {
        self.atoms.iter().map(|a| a.position.clone()).collect()
    }

    /// Indices of atoms whose weight is (numerically) zero.
    pub fn degenerate_atoms(&self) -> Vec<usize> {
        self.atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_degenerate())
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy of the varifold with every weight multiplied by `factors[i]` (frames scaled
    /// along their first vector so the weight/volume invariant is kept).
    pub fn rescaled(&self, factors: &[T]) -> Result<Self> {
        if factors.len() != self.len() {
            return Err(Error::DimensionMismatch("one factor per atom expected".into()));
        }
        let mut out = self.clone();
        for (a, &f) in out.atoms.iter_mut().zip(factors) {
            if f < T::zero() {
                return Err(Error::InvalidWeights("negative rescaling factor".into()));
            }
            a.weight *= f;
            for x in a.frame.iter_mut().take(self.n) {
                *x *= f;
            }
        }
        Ok(out)
    }
}

/// Σ r_i
pub fn total_mass<T: Real>(v: &DiracVarifold<T>) -> T {
    v.atoms.iter().map(|a| a.weight).sum()
}

/// Ordered vertex list, optionally closed.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline<T> {
    pub vertices: Vec<Vec<T>>,
    pub closed: bool,
}

impl<T: Real> Polyline<T> {
    pub fn new(vertices: Vec<Vec<T>>, closed: bool) -> Self {
        Self { vertices, closed }
    }

    pub fn segment_count(&self) -> usize {
        match self.vertices.len() {
            0 | 1 => 0,
            m if self.closed => m,
            m => m - 1,
        }
    }
}

/// Triangulated surface in R³ with consistently oriented index triples.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh<T> {
    pub vertices: Vec<[T; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

/// One Dirac per segment at its midpoint, with the edge vector as frame.
pub fn curve_to_varifold<T: Real>(curve: &Polyline<T>) -> Result<DiracVarifold<T>> {
    let segs = curve.segment_count();
    if segs == 0 {
        return Err(Error::InvalidInput("polyline needs at least one segment".into()));
    }
    let n = curve.vertices[0].len();
    if curve.vertices.iter().any(|v| v.len() != n) {
        return Err(Error::DimensionMismatch("polyline vertices differ in length".into()));
    }
    if curve.vertices.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("polyline has non-finite coordinates".into()));
    }
    let m = curve.vertices.len();
    let half = lit::<T>(0.5);
    let mut out = DiracVarifold::new(n, 1)?;
    for s in 0..segs {
        let a = &curve.vertices[s];
        let b = &curve.vertices[(s + 1) % m];
        let mid = a.iter().zip(b).map(|(p, q)| (*p + *q) * half).collect();
        let edge = a.iter().zip(b).map(|(p, q)| *q - *p).collect();
        out.push_oriented(mid, edge)?;
    }
    Ok(out)
}

/// One Dirac per triangle at its barycenter with frame `(e1, e2/2)`, whose volume is the area.
pub fn mesh_to_varifold<T: Real>(mesh: &TriMesh<T>) -> Result<DiracVarifold<T>> {
    if mesh.triangles.is_empty() {
        return Err(Error::InvalidInput("mesh needs at least one triangle".into()));
    }
    let nv = mesh.vertices.len();
    if mesh.vertices.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("mesh has non-finite coordinates".into()));
    }
    let third = lit::<T>(1.0 / 3.0);
    let half = lit::<T>(0.5);
    let mut out = DiracVarifold::new(3, 2)?;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if tri.iter().any(|&i| i >= nv) {
            return Err(Error::InvalidInput(format!(
                "triangle {t} references a vertex out of range"
            )));
        }
        let [a, b, c] = tri.map(|i| mesh.vertices[i]);
        let center = (0..3).map(|k| (a[k] + b[k] + c[k]) * third).collect();
        let mut frame = Vec::with_capacity(6);
        frame.extend((0..3).map(|k| b[k] - a[k]));
        frame.extend((0..3).map(|k| (c[k] - a[k]) * half));
        out.push_oriented(center, frame)?;
    }
    Ok(out)
}

/// Pushforward by `φ(x) = A x + b` (A row-major n×n).
pub fn pushforward_affine<T: Real>(
    v: &DiracVarifold<T>,
    a: &[T],
    b: &[T],
) -> Result<DiracVarifold<T>> {
    let n = v.n;
    if a.len() != n * n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "affine map must be {n}x{n} with a length-{n} offset"
        )));
    }
    let da = det_general(a, n);
    if da.abs() < lit(DEGENERATE_VOLUME) {
        return Err(Error::SingularMap { det: to_f64(da) });
    }
    let apply = |x: &[T]| -> Vec<T> { (0..n).map(|r| dot(&a[r * n..(r + 1) * n], x)).collect() };
    let mut atoms = Vec::with_capacity(v.len());
    for atom in &v.atoms {
        let mut position = apply(&atom.position);
        for (p, o) in position.iter_mut().zip(b) {
            *p += *o;
        }
        let mut frame = Vec::with_capacity(atom.frame.len());
        for k in 0..v.d {
            frame.extend(apply(atom.frame_vector(k)));
        }
        let weight = if v.d == 0 {
            atom.weight
        } else {
            frame_volume(&frame, v.d, n)
        };
        atoms.push(DiracAtom {
            position,
            frame,
            weight,
        });
    }
    Ok(DiracVarifold {
        n,
        d: v.d,
        atoms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Polyline<f64> {
        Polyline::new(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0],
                vec![0.0, 1.0],
            ],
            true,
        )
    }

    #[test]
    fn frame_volume_examples() {
        assert_eq!(frame_volume(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], 2, 3), 1.0);
        assert_eq!(frame_volume(&[3.0, 4.0], 1, 2), 5.0);
        assert_eq!(frame_volume(&[1.0, 0.0, 2.0, 0.0], 2, 2), 0.0);
    }

    #[test]
    fn grassmann_inner_examples() {
        let a = [2.0f64, 0.0, 0.0, 3.0];
        assert!((grassmann_inner(&a, &a, 2, 2).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(grassmann_inner(&[1.0, 0.0], &[0.0, 1.0], 1, 2).unwrap(), 0.0);
        assert_eq!(grassmann_inner(&[1.0, 0.0], &[-1.0, 0.0], 1, 2).unwrap(), -1.0);
        assert!(matches!(
            grassmann_inner(&[0.0, 0.0], &[1.0, 0.0], 1, 2),
            Err(Error::DegenerateFrame { .. })
        ));
    }

    #[test]
    fn single_segment_curve() {
        let c = Polyline::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], false);
        let v = curve_to_varifold(&c).unwrap();
        assert_eq!(v.len(), 1);
        let a = &v.atoms()[0];
        assert_eq!(a.position, vec![0.5, 0.0]);
        assert_eq!(a.frame, vec![1.0, 0.0]);
        assert_eq!(a.weight, 1.0);
    }

    #[test]
    fn square_and_polygon_masses() {
        let v = curve_to_varifold(&unit_square()).unwrap();
        assert_eq!(v.len(), 4);
        assert!((total_mass(&v) - 4.0).abs() < 1e-15);

        // Oracle: perimeter of the inscribed regular N-gon is 2 N sin(π/N).
        let n = 256;
        let verts = (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let v = curve_to_varifold(&Polyline::new(verts, true)).unwrap();
        let perimeter = 2.0 * n as f64 * (std::f64::consts::PI / n as f64).sin();
        assert!((total_mass(&v) - perimeter).abs() < 1e-12);
        assert!((total_mass(&v) - 2.0 * std::f64::consts::PI).abs() < 1e-3);
    }

    #[test]
    fn zero_length_segment_is_degenerate() {
        let c = Polyline::new(vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 0.0]], false);
        let v = curve_to_varifold(&c).unwrap();
        assert_eq!(v.degenerate_atoms(), vec![0]);
    }

    fn unit_cube() -> TriMesh<f64> {
        let vertices = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ];
        let triangles = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriMesh {
            vertices,
            triangles,
        }
    }

    #[test]
    fn triangle_and_cube_masses() {
        let tri = TriMesh::<f64> {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            triangles: vec![[0, 1, 2]],
        };
        let v = mesh_to_varifold(&tri).unwrap();
        let a = &v.atoms()[0];
        for (p, q) in a.position.iter().zip([1.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((p - q).abs() < 1e-15);
        }
        assert!((a.weight - 0.5).abs() < 1e-15);

        let cube = mesh_to_varifold(&unit_cube()).unwrap();
        assert_eq!(cube.len(), 12);
        assert!((total_mass(&cube) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn collinear_triangle_is_flagged() {
        let tri = TriMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            triangles: vec![[0, 1, 2]],
        };
        let v = mesh_to_varifold(&tri).unwrap();
        assert_eq!(v.atoms()[0].weight, 0.0);
        assert_eq!(v.degenerate_atoms(), vec![0]);
    }

    #[test]
    fn bad_mesh_index_is_rejected() {
        let tri = TriMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            triangles: vec![[0, 1, 3]],
        };
        assert!(mesh_to_varifold(&tri).is_err());
    }

    #[test]
    fn pushforward_examples() {
        let v = curve_to_varifold(&unit_square()).unwrap();
        let id = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(pushforward_affine(&v, &id, &[0.0, 0.0]).unwrap(), v);

        let mut one = DiracVarifold::<f64>::new(2, 1).unwrap();
        one.push_oriented(vec![0.3, 0.1], vec![1.0, 0.0]).unwrap();
        let doubled = pushforward_affine(&one, &[2.0, 0.0, 0.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!((doubled.atoms()[0].weight - 2.0).abs() < 1e-15);

        assert!(matches!(
            pushforward_affine(&one, &[1.0, 2.0, 2.0, 4.0], &[0.0, 0.0]),
            Err(Error::SingularMap { .. })
        ));
    }

    #[test]
    fn measures_reject_frames() {
        let mut m = DiracVarifold::<f64>::new(2, 0).unwrap();
        m.push_mass(vec![0.0, 0.0], 0.5).unwrap();
        m.push_mass(vec![1.0, 0.0], 1.0).unwrap();
        assert_eq!(total_mass(&m), 1.5);
        assert!(m.push_oriented(vec![0.0, 0.0], vec![]).is_err());
        assert_eq!(total_mass(&DiracVarifold::<f64>::new(2, 1).unwrap()), 0.0);
    }

    #[test]
    fn generic_over_f32() {
        let v: f32 = frame_volume(&[3.0f32, 4.0], 1, 2);
        assert_eq!(v, 5.0);
    }

    fn rotation3(a: f64, b: f64, c: f64) -> [f64; 9] {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sc, cc) = c.sin_cos();
        let rz = [ca, -sa, 0.0, sa, ca, 0.0, 0.0, 0.0, 1.0];
        let ry = [cb, 0.0, sb, 0.0, 1.0, 0.0, -sb, 0.0, cb];
        let rx = [1.0, 0.0, 0.0, 0.0, cc, -sc, 0.0, sc, cc];
        mat3(&mat3(&rz, &ry), &rx)
    }

    fn mat3(a: &[f64; 9], b: &[f64; 9]) -> [f64; 9] {
        let mut m = [0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                m[i * 3 + j] = (0..3).map(|k| a[i * 3 + k] * b[k * 3 + j]).sum();
            }
        }
        m
    }

    proptest! {
        #[test]
        fn frame_volume_invariant_under_unimodular_in_plane_changes(
            f in prop::collection::vec(-2.0..2.0f64, 6),
            theta in 0.0..6.3f64,
            shear in -3.0..3.0f64,
        ) {
            let v0 = frame_volume(&f, 2, 3);
            let (s, c) = theta.sin_cos();
            // rotation then shear inside the plane, both with unit determinant
            let mix = |m: [f64; 4], fr: &[f64]| -> Vec<f64> {
                let mut out = vec![0.0; 6];
                for r in 0..2 {
                    for k in 0..3 {
                        out[r * 3 + k] = m[r * 2] * fr[k] + m[r * 2 + 1] * fr[3 + k];
                    }
                }
                out
            };
            let g = mix([1.0, shear, 0.0, 1.0], &mix([c, -s, s, c], &f));
            prop_assert!((frame_volume(&g, 2, 3) - v0).abs() < 1e-12 * (1.0 + v0));
        }

        #[test]
        fn grassmann_inner_symmetric_and_bounded(
            a in prop::collection::vec(-2.0..2.0f64, 6),
            b in prop::collection::vec(-2.0..2.0f64, 6),
        ) {
            prop_assume!(frame_volume(&a, 2, 3) > 1e-3 && frame_volume(&b, 2, 3) > 1e-3);
            let ab = grassmann_inner(&a, &b, 2, 3).unwrap();
            let ba = grassmann_inner(&b, &a, 2, 3).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn pushforward_composes_and_rotations_keep_mass(
            pts in prop::collection::vec(-1.0..1.0f64, 12),
            m1 in prop::collection::vec(-1.0..1.0f64, 9),
            m2 in prop::collection::vec(-1.0..1.0f64, 9),
            b1 in prop::collection::vec(-1.0..1.0f64, 3),
            b2 in prop::collection::vec(-1.0..1.0f64, 3),
            angles in prop::collection::vec(0.0..6.3f64, 3),
        ) {
            let verts: Vec<[f64; 3]> = pts.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            let mesh = TriMesh { vertices: verts, triangles: vec![[0, 1, 2], [0, 2, 3]] };
            let v = mesh_to_varifold(&mesh).unwrap();
            let a1: Vec<f64> = (0..9).map(|i| m1[i] + if i % 4 == 0 { 2.0 } else { 0.0 }).collect();
            let a2: Vec<f64> = (0..9).map(|i| m2[i] + if i % 4 == 0 { 2.0 } else { 0.0 }).collect();
            let two_step = pushforward_affine(&pushforward_affine(&v, &a1, &b1).unwrap(), &a2, &b2).unwrap();
            let a21 = mat3(&a2.clone().try_into().unwrap(), &a1.clone().try_into().unwrap());
            let b21: Vec<f64> = (0..3).map(|r| dot(&a2[r * 3..r * 3 + 3], &b1) + b2[r]).collect();
            let direct = pushforward_affine(&v, &a21, &b21).unwrap();
            for (x, y) in two_step.atoms().iter().zip(direct.atoms()) {
                for (p, q) in x.position.iter().chain(&x.frame).zip(y.position.iter().chain(&y.frame)) {
                    prop_assert!((p - q).abs() < 1e-10);
                }
                prop_assert!((x.weight - y.weight).abs() < 1e-10);
            }
            let rot = rotation3(angles[0], angles[1], angles[2]);
            let rotated = pushforward_affine(&v, &rot, &b1).unwrap();
            prop_assert!((total_mass(&rotated) - total_mass(&v)).abs() < 1e-12);
        }
    }
}
