//! Catalog Carnot groups in exponential coordinates.
//!
//! Three families are supported: Euclidean space, the Heisenberg groups
//! `H^n` and H-type groups given by their structure maps `J^1..J^k`.
//!
//! The Heisenberg group uses the chart with law
//! `(z, l)(z', l') = (z + z', l + l' + 2 sum Im(z_j conj(z'_j)))` and
//! coordinates `(x_1..x_n, y_1..y_n, l)`. H-type groups use the step-2
//! exponential chart `(v, z)(v', z') = (v + v', z + z' + [v, v'] / 2)` with
//! `[v, v']_s = <J^s v, v'>`. The two charts differ by a dilation of the
//! center (`l = 4 z` for `H^1` with the standard symplectic `J`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance used when validating H-type structure maps.
pub const HTYPE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupKind {
    Euclidean,
    Heisenberg,
    HType,
}

/// A point of a group in exponential coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPoint(pub Vec<f64>);

impl GroupPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        GroupPoint(coords)
    }

    pub fn origin(dim: usize) -> Self {
        GroupPoint(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_origin(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }
}

impl std::ops::Deref for GroupPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for GroupPoint {
    fn from(v: Vec<f64>) -> Self {
        GroupPoint(v)
    }
}

impl From<&[f64]> for GroupPoint {
    fn from(v: &[f64]) -> Self {
        GroupPoint(v.to_vec())
    }
}

/// Descriptor of a catalog stratified group.
#[derive(Debug, Clone, PartialEq)]
pub struct CarnotGroup {
    kind: GroupKind,
    ambient_dim: usize,
    layer_dims: Vec<usize>,
    dilation_exponents: Vec<u32>,
    /// `k` row-major `m x m` matrices (H-type only).
    htype_structure: Vec<Vec<f64>>,
    /// Coefficient of the vertical term in the homogeneous norm.
    norm_kappa: f64,
}

impl CarnotGroup {
    /// Heisenberg group `H^n` with `Q = 2n + 2`.
    pub fn heisenberg(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(invalid("Heisenberg group needs n >= 1"));
        }
        Ok(CarnotGroup {
            kind: GroupKind::Heisenberg,
            ambient_dim: 2 * n + 1,
            layer_dims: vec![2 * n, 1],
            dilation_exponents: exponents_for(&[2 * n, 1]),
            htype_structure: Vec::new(),
            norm_kappa: 1.0,
        })
    }

    /// Euclidean space `R^n` with vector addition.
    pub fn euclidean(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(invalid("Euclidean space needs n >= 1"));
        }
        Ok(CarnotGroup {
            kind: GroupKind::Euclidean,
            ambient_dim: n,
            layer_dims: vec![n],
            dilation_exponents: vec![1; n],
            htype_structure: Vec::new(),
            norm_kappa: 0.0,
        })
    }

    /// H-type group from `k` skew-symmetric `m x m` matrices given row-major.
    ///
    /// Fails with [`Error::NotHType`] unless `(sum_s z_s J^s)^2 = -|z|^2 Id`.
    pub fn htype(m: usize, k: usize, structure: Vec<Vec<f64>>) -> Result<Self> {
        if m < 1 || k < 1 {
            return Err(invalid("H-type group needs m >= 1 and k >= 1"));
        }
        if structure.len() != k {
            return Err(invalid(format!(
                "expected {k} structure matrices, got {}",
                structure.len()
            )));
        }
        for (s, mat) in structure.iter().enumerate() {
            if mat.len() != m * m {
                return Err(invalid(format!(
                    "structure matrix {s} has {} entries, expected {}",
                    mat.len(),
                    m * m
                )));
            }
        }
        validate_htype(m, &structure)?;
        Ok(CarnotGroup {
            kind: GroupKind::HType,
            ambient_dim: m + k,
            layer_dims: vec![m, k],
            dilation_exponents: exponents_for(&[m, k]),
            htype_structure: structure,
            norm_kappa: 16.0,
        })
    }

    /// Quaternionic H-type group: `V1 = H`, `V2 = Im H`, `J` from left
    /// multiplication by `i`, `j`, `k`. `Q = 10`.
    pub fn quaternionic() -> Self {
        #[rustfmt::skip]
        let structure = vec![
            vec![0.0, -1.0, 0.0, 0.0,
                 1.0, 0.0, 0.0, 0.0,
                 0.0, 0.0, 0.0, -1.0,
                 0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, -1.0, 0.0,
                 0.0, 0.0, 0.0, 1.0,
                 1.0, 0.0, 0.0, 0.0,
                 0.0, -1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, -1.0,
                 0.0, 0.0, -1.0, 0.0,
                 0.0, 1.0, 0.0, 0.0,
                 1.0, 0.0, 0.0, 0.0],
        ];
        Self::htype(4, 3, structure).expect("quaternion units satisfy the H-type identity")
    }

    /// Replaces the vertical coefficient of the homogeneous norm.
    pub fn with_norm_kappa(mut self, kappa: f64) -> Result<Self> {
        if self.kind == GroupKind::Euclidean {
            return Err(invalid("Euclidean norm has no vertical coefficient"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(invalid(format!("norm_kappa must be positive, got {kappa}")));
        }
        self.norm_kappa = kappa;
        Ok(self)
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn dilation_exponents(&self) -> &[u32] {
        &self.dilation_exponents
    }

    pub fn htype_structure(&self) -> &[Vec<f64>] {
        &self.htype_structure
    }

    pub fn norm_kappa(&self) -> f64 {
        self.norm_kappa
    }

    /// Dimension `m` of the first layer.
    pub fn horizontal_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// `Q = sum_j j dim V_j`.
    pub fn homogeneous_dimension(&self) -> usize {
        self.layer_dims
            .iter()
            .enumerate()
            .map(|(j, d)| (j + 1) * d)
            .sum()
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim {
            return Err(invalid(format!(
                "point has {} coordinates, group has dimension {}",
                x.len(),
                self.ambient_dim
            )));
        }
        Ok(())
    }

    pub fn multiply(&self, x: &GroupPoint, y: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(&x.0)?;
        self.check_point(&y.0)?;
        let mut out: Vec<f64> = x.0.iter().zip(&y.0).map(|(a, b)| a + b).collect();
        match self.kind {
            GroupKind::Euclidean => {}
            GroupKind::Heisenberg => {
                let n = (self.ambient_dim - 1) / 2;
                // 2 Im(z conj(z')) = 2 (y x' - x y')
                let mut twist = 0.0;
                for j in 0..n {
                    let (xa, ya) = (x.0[j], x.0[n + j]);
                    let (xb, yb) = (y.0[j], y.0[n + j]);
                    twist += ya * xb - xa * yb;
                }
                out[2 * n] += 2.0 * twist;
            }
            GroupKind::HType => {
                let m = self.layer_dims[0];
                for (s, mat) in self.htype_structure.iter().enumerate() {
                    let bracket = bilinear(mat, m, &x.0[..m], &y.0[..m]);
                    out[m + s] += 0.5 * bracket;
                }
            }
        }
        Ok(GroupPoint(out))
    }

    /// `x^{-1} = -x` in exponential coordinates.
    pub fn inverse(&self, x: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(&x.0)?;
        Ok(GroupPoint(x.0.iter().map(|c| -c).collect()))
    }

    pub fn dilate(&self, lambda: f64, x: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(&x.0)?;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!(
                "dilation factor must be positive, got {lambda}"
            )));
        }
        Ok(GroupPoint(self.dilate_coords(lambda, &x.0)))
    }

    pub(crate) fn dilate_coords(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.dilation_exponents)
            .map(|(c, &a)| c * lambda.powi(a as i32))
            .collect()
    }

    /// Coefficients of the left-invariant field `X_j` at `x`, as a vector in
    /// the ambient coordinates.
    pub fn vector_field(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let m = self.horizontal_dim();
        if j >= m {
            return Err(invalid(format!("generator index {j} out of range 0..{m}")));
        }
        let mut c = vec![0.0; self.ambient_dim];
        self.vector_field_into(j, x, &mut c);
        Ok(c)
    }

    /// Unchecked variant writing into `out`.
    pub(crate) fn vector_field_into(&self, j: usize, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|c| *c = 0.0);
        out[j] = 1.0;
        match self.kind {
            GroupKind::Euclidean => {}
            GroupKind::Heisenberg => {
                let n = (self.ambient_dim - 1) / 2;
                // X_j = d_xj + 2 y_j d_l, Y_j = d_yj - 2 x_j d_l
                out[2 * n] = if j < n {
                    2.0 * x[n + j]
                } else {
                    -2.0 * x[j - n]
                };
            }
            GroupKind::HType => {
                let m = self.layer_dims[0];
                // X_i = d_vi + 1/2 sum_s (J^s v)_i d_zs
                for (s, mat) in self.htype_structure.iter().enumerate() {
                    let row = &mat[j * m..(j + 1) * m];
                    let jv: f64 = row.iter().zip(&x[..m]).map(|(a, b)| a * b).sum();
                    out[m + s] = 0.5 * jv;
                }
            }
        }
    }

    /// Maximum over the box `|x_i| <= half_widths[i]` of `sum_i |c_i|` for the
    /// generator coefficients, used for explicit time-step bounds.
    pub fn max_field_coefficient(&self, half_widths: &[f64]) -> f64 {
        match self.kind {
            GroupKind::Euclidean => 0.0,
            GroupKind::Heisenberg => {
                let n = (self.ambient_dim - 1) / 2;
                half_widths[..2 * n].iter().cloned().fold(0.0, f64::max) * 2.0
            }
            GroupKind::HType => {
                let m = self.layer_dims[0];
                let mut best: f64 = 0.0;
                for j in 0..m {
                    let mut total = 0.0;
                    for mat in &self.htype_structure {
                        let row = &mat[j * m..(j + 1) * m];
                        total += 0.5
                            * row
                                .iter()
                                .zip(half_widths)
                                .map(|(a, w)| a.abs() * w)
                                .sum::<f64>();
                    }
                    best = best.max(total);
                }
                best
            }
        }
    }

    /// Half-widths of an axis-aligned box containing the unit ball `{N <= 1}`.
    pub fn unit_ball_bounding_box(&self) -> Vec<f64> {
        let mut b = vec![1.0; self.ambient_dim];
        if self.kind != GroupKind::Euclidean {
            let m = self.horizontal_dim();
            for c in b.iter_mut().skip(m) {
                *c = 1.0 / self.norm_kappa.sqrt();
            }
        }
        b
    }

    pub fn descriptor(&self) -> GroupDescriptor {
        match self.kind {
            GroupKind::Euclidean => GroupDescriptor::Euclidean {
                n: self.ambient_dim,
            },
            GroupKind::Heisenberg => GroupDescriptor::Heisenberg {
                n: (self.ambient_dim - 1) / 2,
                norm_kappa: Some(self.norm_kappa),
            },
            GroupKind::HType => GroupDescriptor::Htype {
                m: self.layer_dims[0],
                k: self.layer_dims[1],
                j: self.htype_structure.clone(),
                norm_kappa: Some(self.norm_kappa),
            },
        }
    }

    pub fn from_descriptor(d: &GroupDescriptor) -> Result<Self> {
        let (g, kappa) = match d {
            GroupDescriptor::Euclidean { n } => (Self::euclidean(*n)?, None),
            GroupDescriptor::Heisenberg { n, norm_kappa } => (Self::heisenberg(*n)?, *norm_kappa),
            GroupDescriptor::Htype {
                m,
                k,
                j,
                norm_kappa,
            } => (Self::htype(*m, *k, j.clone())?, *norm_kappa),
            GroupDescriptor::Quaternionic { norm_kappa } => (Self::quaternionic(), *norm_kappa),
        };
        match kappa {
            Some(kappa) => g.with_norm_kappa(kappa),
            None => Ok(g),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.descriptor()).expect("descriptor serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: GroupDescriptor = serde_json::from_str(s)?;
        Self::from_descriptor(&d)
    }

    /// Uniform sample in the box `[-scale, scale]^n`.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> GroupPoint {
        GroupPoint(
            (0..self.ambient_dim)
                .map(|_| rng.gen_range(-scale..=scale))
                .collect(),
        )
    }
}

/// Serialised form of a catalog group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroupDescriptor {
    Euclidean {
        n: usize,
    },
    Heisenberg {
        n: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm_kappa: Option<f64>,
    },
    Htype {
        m: usize,
        k: usize,
        /// Structure matrices, each row-major `m x m`.
        j: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm_kappa: Option<f64>,
    },
    /// Shorthand for the quaternionic H-type preset.
    Quaternionic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm_kappa: Option<f64>,
    },
}

fn exponents_for(layer_dims: &[usize]) -> Vec<u32> {
    layer_dims
        .iter()
        .enumerate()
        .flat_map(|(j, &d)| std::iter::repeat_n((j + 1) as u32, d))
        .collect()
}

/// `<J v, w>` for row-major `J`.
fn bilinear(mat: &[f64], m: usize, v: &[f64], w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m {
        let row = &mat[i * m..(i + 1) * m];
        let jv: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
        acc += jv * w[i];
    }
    acc
}

fn matmul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i * m + j] += aik * b[k * m + j];
            }
        }
    }
    out
}

/// `J_z = sum_s z_s J^s`, row-major.
pub(crate) fn combine_structure(structure: &[Vec<f64>], z: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for (mat, &zs) in structure.iter().zip(z) {
        for (o, a) in out.iter_mut().zip(mat) {
            *o += zs * a;
        }
    }
    out
}

/// Frobenius norm of `J_z^2 + |z|^2 Id`.
pub fn htype_defect(structure: &[Vec<f64>], m: usize, z: &[f64]) -> f64 {
    let jz = combine_structure(structure, z, m);
    let sq = matmul(&jz, &jz, m);
    let z2: f64 = z.iter().map(|c| c * c).sum();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            let target = if i == j { -z2 } else { 0.0 };
            acc += (sq[i * m + j] - target).powi(2);
        }
    }
    acc.sqrt()
}

fn validate_htype(m: usize, structure: &[Vec<f64>]) -> Result<()> {
    for (s, mat) in structure.iter().enumerate() {
        for i in 0..m {
            for j in 0..m {
                if (mat[i * m + j] + mat[j * m + i]).abs() > HTYPE_TOLERANCE {
                    return Err(Error::NotHType(format!(
                        "J^{} is not skew-symmetric",
                        s + 1
                    )));
                }
            }
        }
    }
    // (sum z_s J^s)^2 = -|z|^2 for all z iff (J^s)^2 = -Id and the J^s
    // anticommute; checking e_s and e_s + e_t covers both.
    let k = structure.len();
    for s in 0..k {
        for t in s..k {
            let mut z = vec![0.0; k];
            z[s] += 1.0;
            z[t] += 1.0;
            let defect = htype_defect(structure, m, &z);
            if defect > HTYPE_TOLERANCE {
                return Err(Error::NotHType(format!(
                    "J_z^2 != -|z|^2 Id for z = e{} + e{} (defect {defect:.3e})",
                    s + 1,
                    t + 1
                )));
            }
        }
    }
    Ok(())
}
