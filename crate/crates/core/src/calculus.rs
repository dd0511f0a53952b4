//! Horizontal differential operators and homogeneous norms.
//!
//! Derivatives along the generators `X_j` are second-order central
//! differences taken along the straight line `x + t c_j(x)`, where `c_j(x)`
//! are the coefficients of `X_j` at `x`. Nested operators (divergence of a
//! flux, the infinity-Laplacian, commutators) reuse the same step at both
//! levels.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::group::{combine_structure, CarnotGroup, GroupKind};

pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A real function on the group, optionally with its horizontal gradient.
#[derive(Clone)]
pub struct ScalarField {
    eval: EvalFn,
    grad: Option<GradFn>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("analytic_gradient", &self.grad.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn new(eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField {
            eval: Arc::new(eval),
            grad: None,
        }
    }

    /// Field with an analytic horizontal gradient `(X_1 f, ..., X_m f)`.
    pub fn with_gradient(
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        ScalarField {
            eval: Arc::new(eval),
            grad: Some(Arc::new(grad)),
        }
    }

    #[inline]
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn analytic_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.grad.as_ref().map(|g| g(x))
    }

    pub fn has_gradient(&self) -> bool {
        self.grad.is_some()
    }

    /// Same values, gradient left to finite differences.
    pub fn without_gradient(&self) -> Self {
        ScalarField {
            eval: self.eval.clone(),
            grad: None,
        }
    }
}

/// Components of a horizontal vector along `X_1..X_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizontalVector(pub Vec<f64>);

impl HorizontalVector {
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum()
    }

    pub fn dot(&self, other: &HorizontalVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }
}

/// Finite-difference step and the regulariser used for `|grad u|^{p-2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdScheme {
    pub h: f64,
    pub eta: f64,
}

impl FdScheme {
    pub fn new(h: f64, eta: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(invalid(format!(
                "regulariser must be nonnegative, got {eta}"
            )));
        }
        Ok(FdScheme { h, eta })
    }
}

impl Default for FdScheme {
    fn default() -> Self {
        FdScheme { h: 1e-3, eta: 0.0 }
    }
}

fn shifted(x: &[f64], dir: &[f64], t: f64) -> Vec<f64> {
    x.iter().zip(dir).map(|(a, c)| a + t * c).collect()
}

/// Central difference of `f` along `X_j` (no analytic shortcut).
fn fd_along<F: Fn(&[f64]) -> f64>(g: &CarnotGroup, j: usize, f: F, x: &[f64], h: f64) -> f64 {
    let mut dir = vec![0.0; g.ambient_dim()];
    g.vector_field_into(j, x, &mut dir);
    (f(&shifted(x, &dir, h)) - f(&shifted(x, &dir, -h))) / (2.0 * h)
}

fn check_index(g: &CarnotGroup, j: usize) -> Result<()> {
    let m = g.horizontal_dim();
    if j >= m {
        return Err(invalid(format!("generator index {j} out of range 0..{m}")));
    }
    Ok(())
}

/// Horizontal gradient, analytic when the field provides one.
fn gradient_unchecked(g: &CarnotGroup, f: &ScalarField, x: &[f64], h: f64) -> Vec<f64> {
    if let Some(grad) = f.analytic_gradient(x) {
        return grad;
    }
    (0..g.horizontal_dim())
        .map(|j| fd_along(g, j, |y| f.value(y), x, h))
        .collect()
}

/// `(X_j f)(x)`; `j` is zero-based.
pub fn apply_vector_field(
    g: &CarnotGroup,
    j: usize,
    f: &ScalarField,
    x: &[f64],
    s: &FdScheme,
) -> Result<f64> {
    g.check_point(x)?;
    check_index(g, j)?;
    if let Some(grad) = f.analytic_gradient(x) {
        return Ok(grad[j]);
    }
    Ok(fd_along(g, j, |y| f.value(y), x, s.h))
}

pub fn horizontal_gradient(
    g: &CarnotGroup,
    f: &ScalarField,
    x: &[f64],
    s: &FdScheme,
) -> Result<HorizontalVector> {
    g.check_point(x)?;
    Ok(HorizontalVector(gradient_unchecked(g, f, x, s.h)))
}

/// `(X_i X_j - X_j X_i) f` at `x` by nested differencing.
pub fn commutator_apply(
    g: &CarnotGroup,
    i: usize,
    j: usize,
    f: &ScalarField,
    x: &[f64],
    s: &FdScheme,
) -> Result<f64> {
    g.check_point(x)?;
    check_index(g, i)?;
    check_index(g, j)?;
    if i == j {
        return Ok(0.0);
    }
    let h = s.h;
    let inner = |k: usize| {
        move |y: &[f64]| match f.analytic_gradient(y) {
            Some(grad) => grad[k],
            None => fd_along(g, k, |z| f.value(z), y, h),
        }
    };
    let xixj = fd_along(g, i, inner(j), x, h);
    let xjxi = fd_along(g, j, inner(i), x, h);
    Ok(xixj - xjxi)
}

/// Homogeneous norm: `|x|` (Euclidean), `(|z|^4 + kappa l^2)^{1/4}`
/// (Heisenberg, `kappa = 1` by default) or `(|v|^4 + kappa |z|^2)^{1/4}`
/// (H-type, `kappa = 16` by default).
pub fn homogeneous_norm(g: &CarnotGroup, x: &[f64]) -> f64 {
    match g.kind() {
        GroupKind::Euclidean => x.iter().map(|c| c * c).sum::<f64>().sqrt(),
        _ => norm_fourth(g, x).sqrt().sqrt(),
    }
}

/// `N(x)^4`, a polynomial for the non-Euclidean catalog groups.
pub fn norm_fourth(g: &CarnotGroup, x: &[f64]) -> f64 {
    let m = g.horizontal_dim();
    let h2: f64 = x[..m].iter().map(|c| c * c).sum();
    let v2: f64 = x[m..].iter().map(|c| c * c).sum();
    h2 * h2 + g.norm_kappa() * v2
}

fn singular(x: &[f64]) -> Error {
    Error::SingularPoint(x.to_vec())
}

/// Analytic horizontal gradient of the homogeneous norm.
pub fn norm_horizontal_gradient(g: &CarnotGroup, x: &[f64]) -> Result<HorizontalVector> {
    g.check_point(x)?;
    let n = homogeneous_norm(g, x);
    if n == 0.0 {
        return Err(singular(x));
    }
    Ok(HorizontalVector(norm_gradient_unchecked(g, x, n)))
}

pub(crate) fn norm_gradient_unchecked(g: &CarnotGroup, x: &[f64], n: f64) -> Vec<f64> {
    let m = g.horizontal_dim();
    match g.kind() {
        GroupKind::Euclidean => x.iter().map(|c| c / n).collect(),
        GroupKind::Heisenberg => {
            let k = m / 2;
            let kappa = g.norm_kappa();
            let l = x[m];
            let z2: f64 = x[..m].iter().map(|c| c * c).sum();
            let scale = 1.0 / (4.0 * n * n * n);
            let mut out = vec![0.0; m];
            for j in 0..k {
                let (xj, yj) = (x[j], x[k + j]);
                out[j] = (4.0 * z2 * xj + 4.0 * kappa * l * yj) * scale;
                out[k + j] = (4.0 * z2 * yj - 4.0 * kappa * l * xj) * scale;
            }
            out
        }
        GroupKind::HType => {
            let kappa = g.norm_kappa();
            let v = &x[..m];
            let z = &x[m..];
            let v2: f64 = v.iter().map(|c| c * c).sum();
            let jz = combine_structure(g.htype_structure(), z, m);
            let scale = 1.0 / (4.0 * n * n * n);
            (0..m)
                .map(|i| {
                    let jzv: f64 = jz[i * m..(i + 1) * m]
                        .iter()
                        .zip(v)
                        .map(|(a, b)| a * b)
                        .sum();
                    (4.0 * v2 * v[i] + kappa * jzv) * scale
                })
                .collect()
        }
    }
}

/// `|grad_H N|` in closed form.
///
/// Heisenberg: `|z| sqrt(|z|^4 + kappa^2 l^2) / N^3` (`= |z| / N` for
/// `kappa = 1`). H-type: `|v| sqrt(16 |v|^4 + kappa^2 |z|^2) / (4 N^3)`
/// (`= |v| / N` for `kappa = 16`).
pub fn norm_gradient_magnitude(g: &CarnotGroup, x: &[f64]) -> Result<f64> {
    g.check_point(x)?;
    let n = homogeneous_norm(g, x);
    if n == 0.0 {
        return Err(singular(x));
    }
    Ok(norm_gradient_magnitude_unchecked(g, x, n))
}

pub(crate) fn norm_gradient_magnitude_unchecked(g: &CarnotGroup, x: &[f64], n: f64) -> f64 {
    let m = g.horizontal_dim();
    let kappa = g.norm_kappa();
    match g.kind() {
        GroupKind::Euclidean => 1.0,
        GroupKind::Heisenberg => {
            let z2: f64 = x[..m].iter().map(|c| c * c).sum();
            let l = x[m];
            z2.sqrt() * (z2 * z2 + kappa * kappa * l * l).sqrt() / (n * n * n)
        }
        GroupKind::HType => {
            let v2: f64 = x[..m].iter().map(|c| c * c).sum();
            let z2: f64 = x[m..].iter().map(|c| c * c).sum();
            v2.sqrt() * (16.0 * v2 * v2 + kappa * kappa * z2).sqrt() / (4.0 * n * n * n)
        }
    }
}

/// `(|grad_H N| / N)^p`.
pub fn hardy_weight(g: &CarnotGroup, p: f64, x: &[f64]) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid(format!("Hardy weight needs p > 1, got {p}")));
    }
    g.check_point(x)?;
    let n = homogeneous_norm(g, x);
    if n == 0.0 {
        return Err(singular(x));
    }
    Ok((norm_gradient_magnitude_unchecked(g, x, n) / n).powf(p))
}

/// Radial profile of the fundamental solution: `r^{(p-Q)/(p-1)}`, or `-log r`
/// when `p = Q`.
pub fn fundamental_radial(q: f64, p: f64, r: f64) -> f64 {
    if p == q {
        -r.ln()
    } else {
        r.powf((p - q) / (p - 1.0))
    }
}

fn fundamental_radial_derivative(q: f64, p: f64, r: f64) -> f64 {
    if p == q {
        -1.0 / r
    } else {
        let e = (p - q) / (p - 1.0);
        e * r.powf(e - 1.0)
    }
}

/// `u_p(x) = N^{(p-Q)/(p-1)}` (`-log N` when `p = Q`).
pub fn fundamental_profile(g: &CarnotGroup, p: f64, x: &[f64]) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid(format!("fundamental profile needs p > 1, got {p}")));
    }
    g.check_point(x)?;
    let n = homogeneous_norm(g, x);
    if n == 0.0 {
        return Err(singular(x));
    }
    Ok(fundamental_radial(g.homogeneous_dimension() as f64, p, n))
}

/// The homogeneous norm as a field with its analytic gradient.
pub fn norm_field(g: &CarnotGroup) -> ScalarField {
    let ge = g.clone();
    let gg = g.clone();
    ScalarField::with_gradient(
        move |x| homogeneous_norm(&ge, x),
        move |x| {
            let n = homogeneous_norm(&gg, x);
            if n == 0.0 {
                vec![0.0; gg.horizontal_dim()]
            } else {
                norm_gradient_unchecked(&gg, x, n)
            }
        },
    )
}

/// Radial field `x -> profile(N(x))` with gradient `profile'(N) grad_H N`.
pub fn radial_field(
    g: &CarnotGroup,
    profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
    derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> ScalarField {
    let ge = g.clone();
    let gg = g.clone();
    ScalarField::with_gradient(
        move |x| profile(homogeneous_norm(&ge, x)),
        move |x| {
            let n = homogeneous_norm(&gg, x);
            if n == 0.0 {
                return vec![0.0; gg.horizontal_dim()];
            }
            let d = derivative(n);
            norm_gradient_unchecked(&gg, x, n)
                .into_iter()
                .map(|c| c * d)
                .collect()
        },
    )
}

/// The fundamental solution `u_p` as a field with analytic gradient.
pub fn fundamental_field(g: &CarnotGroup, p: f64) -> ScalarField {
    let q = g.homogeneous_dimension() as f64;
    radial_field(
        g,
        move |r| fundamental_radial(q, p, r),
        move |r| fundamental_radial_derivative(q, p, r),
    )
}

/// `|v|^{p-2} v` with the regulariser, zero at a vanishing gradient.
#[inline]
pub(crate) fn p_flux_factor(norm_sq: f64, p: f64, eta: f64) -> f64 {
    let r = norm_sq + eta * eta;
    if r == 0.0 {
        0.0
    } else if p == 2.0 {
        1.0
    } else {
        r.powf(0.5 * (p - 2.0))
    }
}

/// `div_H((|grad_H f|^2 + eta^2)^{(p-2)/2} grad_H f)` at `x`.
pub fn sub_p_laplacian(
    g: &CarnotGroup,
    p: f64,
    f: &ScalarField,
    x: &[f64],
    s: &FdScheme,
) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid(format!("sub-p-Laplacian needs p > 1, got {p}")));
    }
    g.check_point(x)?;
    let h = s.h;
    let m = g.horizontal_dim();
    let mut total = 0.0;
    for j in 0..m {
        let flux = |y: &[f64]| {
            let grad = gradient_unchecked(g, f, y, h);
            let n2: f64 = grad.iter().map(|c| c * c).sum();
            p_flux_factor(n2, p, s.eta) * grad[j]
        };
        total += fd_along(g, j, flux, x, h);
    }
    Ok(total)
}

/// `1/2 <grad_H |grad_H f|^2, grad_H f>` at `x`.
pub fn infinity_laplacian(
    g: &CarnotGroup,
    f: &ScalarField,
    x: &[f64],
    s: &FdScheme,
) -> Result<f64> {
    g.check_point(x)?;
    let h = s.h;
    let grad = gradient_unchecked(g, f, x, h);
    let sq = |y: &[f64]| {
        gradient_unchecked(g, f, y, h)
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
    };
    let mut total = 0.0;
    for (j, gj) in grad.iter().enumerate() {
        total += fd_along(g, j, sq, x, h) * gj;
    }
    Ok(0.5 * total)
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `|a+b|^p - |a|^p - p |a|^{p-2} a.b` with the convention `|a|^{p-2} a = 0`
/// at `a = 0`.
fn convexity_gap(p: f64, a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(invalid("vectors a and b differ in length"));
    }
    let nb = norm2(b);
    if nb == 0.0 {
        return Err(invalid("b must be nonzero"));
    }
    let na = norm2(a);
    let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let lin = if na == 0.0 {
        0.0
    } else {
        p * na.powf(p - 2.0) * ab
    };
    Ok((norm2(&sum).powf(p) - na.powf(p) - lin, na, nb))
}

/// Largest `c(p)` admissible in `|a+b|^p - |a|^p >= c |b|^2 / (|a|+|b|)^{2-p} + p|a|^{p-2} a.b`
/// for this pair, `1 < p < 2`.
pub fn convexity_ratio_subquadratic(p: f64, a: &[f64], b: &[f64]) -> Result<f64> {
    if !(p > 1.0 && p < 2.0) {
        return Err(invalid(format!("ratio needs 1 < p < 2, got {p}")));
    }
    let (gap, na, nb) = convexity_gap(p, a, b)?;
    Ok(gap * (na + nb).powf(2.0 - p) / (nb * nb))
}

/// Largest `c(p)` admissible in `|a+b|^p - |a|^p >= c |b|^p + p|a|^{p-2} a.b`, `p > 2`.
pub fn convexity_ratio_superquadratic(p: f64, a: &[f64], b: &[f64]) -> Result<f64> {
    if !(p > 2.0) {
        return Err(invalid(format!("ratio needs p > 2, got {p}")));
    }
    let (gap, _, nb) = convexity_gap(p, a, b)?;
    Ok(gap / nb.powf(p))
}

/// `w1^p - w2^p - p w2^{p-1} (w1 - w2)`, strictly positive for `w1 != w2`.
pub fn elementary_inequality_margin(p: f64, w1: f64, w2: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid(format!("margin needs p > 1, got {p}")));
    }
    if !(w1 > 0.0 && w2 > 0.0) {
        return Err(invalid("w1 and w2 must be positive"));
    }
    if w1 == w2 {
        return Err(Error::ZeroMargin);
    }
    Ok(w1.powf(p) - w2.powf(p) - p * w2.powf(p - 1.0) * (w1 - w2))
}

/// Random point with `N(x)` uniform in `[r_lo, r_hi]`.
pub fn random_point_at_norm<R: Rng + ?Sized>(
    g: &CarnotGroup,
    rng: &mut R,
    r_lo: f64,
    r_hi: f64,
) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..g.ambient_dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let n = homogeneous_norm(g, &x);
        if n < 1e-3 {
            continue;
        }
        let target = rng.gen_range(r_lo..=r_hi);
        return g.dilate_coords(target / n, &x);
    }
}

/// Worst `|Delta_inf N|` over `points`; small values certify that the chosen
/// `norm_kappa` makes the norm infinity-harmonic off the origin.
pub fn polarizability_residual(g: &CarnotGroup, points: &[Vec<f64>], s: &FdScheme) -> Result<f64> {
    let f = norm_field(g).without_gradient();
    let mut worst: f64 = 0.0;
    for x in points {
        worst = worst.max(infinity_laplacian(g, &f, x, s)?.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn h1() -> CarnotGroup {
        CarnotGroup::heisenberg(1).unwrap()
    }

    #[test]
    fn vector_field_examples() {
        let g = h1();
        let s = FdScheme::default();
        let ell = ScalarField::new(|x| x[2]);
        let v = apply_vector_field(&g, 0, &ell, &[0.4, -0.7, 1.3], &s).unwrap();
        assert!((v - 2.0 * -0.7).abs() < 1e-10);
        let first = ScalarField::new(|x| x[0]);
        for x in [[0.1, 0.2, 0.3], [-2.0, 5.0, 1.0]] {
            assert!((apply_vector_field(&g, 0, &first, &x, &s).unwrap() - 1.0).abs() < 1e-10);
        }
        let r2 = CarnotGroup::euclidean(2).unwrap();
        let sq = ScalarField::new(|x| x[0] * x[0]);
        assert!((apply_vector_field(&r2, 0, &sq, &[3.0, 0.0], &s).unwrap() - 6.0).abs() < 1e-6);
        assert!(apply_vector_field(&g, 2, &sq, &[0.0, 0.0, 0.0], &s).is_err());
    }

    #[test]
    fn gradient_of_norm() {
        let g = h1();
        let s = FdScheme::new(1e-4, 0.0).unwrap();
        let n = norm_field(&g).without_gradient();
        let a = horizontal_gradient(&g, &n, &[1.0, 0.0, 0.0], &s).unwrap();
        assert!((a.norm() - 1.0).abs() < 1e-6);
        let b = horizontal_gradient(&g, &n, &[0.0, 0.0, 1.0], &s).unwrap();
        assert!(b.norm() < 1e-6);
        let c = horizontal_gradient(&g, &ScalarField::new(|_| 3.0), &[0.3, 0.1, 0.2], &s).unwrap();
        assert_eq!(c.norm(), 0.0);
    }

    #[test]
    fn commutator_examples() {
        let g = h1();
        let s = FdScheme::default();
        let ell = ScalarField::new(|x| x[2]);
        let c = commutator_apply(&g, 0, 1, &ell, &[0.3, -0.2, 0.5], &s).unwrap();
        assert!((c + 4.0).abs() < 1e-6, "{c}");
        let any = ScalarField::new(|x| x[0] * x[2] + x[1].sin());
        assert_eq!(
            commutator_apply(&g, 0, 0, &any, &[0.3, -0.2, 0.5], &s).unwrap(),
            0.0
        );
        let r2 = CarnotGroup::euclidean(2).unwrap();
        let poly = ScalarField::new(|x| 3.0 * x[0] * x[0] * x[1] - x[1] * x[1] + x[0]);
        let c = commutator_apply(&r2, 0, 1, &poly, &[0.7, -1.1], &s).unwrap();
        assert!(c.abs() < 1e-6);
        assert!(commutator_apply(&g, 0, 5, &ell, &[0.0; 3], &s).is_err());
    }

    #[test]
    fn norm_examples() {
        let g = h1();
        assert_eq!(homogeneous_norm(&g, &[1.0, 0.0, 0.0]), 1.0);
        assert!((homogeneous_norm(&g, &[0.0, 0.0, 4.0]) - 2.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = g.random_point(&mut rng, 2.0);
            let lam: f64 = rng.gen_range(0.1..5.0);
            let lhs = homogeneous_norm(&g, &g.dilate_coords(lam, &x));
            assert!((lhs - lam * homogeneous_norm(&g, &x)).abs() < 1e-12 * lhs.max(1.0));
        }
    }

    #[test]
    fn gradient_magnitude_examples() {
        let g = h1();
        assert!((norm_gradient_magnitude(&g, &[1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(norm_gradient_magnitude(&g, &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        let r3 = CarnotGroup::euclidean(3).unwrap();
        assert_eq!(
            norm_gradient_magnitude(&r3, &[0.2, -3.0, 1.0]).unwrap(),
            1.0
        );
        assert!(matches!(
            norm_gradient_magnitude(&g, &[0.0, 0.0, 0.0]),
            Err(Error::SingularPoint(_))
        ));
    }

    #[test]
    fn closed_form_matches_fd_gradient() {
        let s = FdScheme::new(1e-4, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in [
            h1(),
            CarnotGroup::heisenberg(2).unwrap(),
            CarnotGroup::quaternionic(),
            CarnotGroup::quaternionic().with_norm_kappa(3.0).unwrap(),
            CarnotGroup::euclidean(3).unwrap(),
        ] {
            let f = norm_field(&g).without_gradient();
            for _ in 0..200 {
                let x = random_point_at_norm(&g, &mut rng, 0.5, 2.0);
                let fd = horizontal_gradient(&g, &f, &x, &s).unwrap().norm();
                let cf = norm_gradient_magnitude(&g, &x).unwrap();
                assert!((fd - cf).abs() < 1e-6, "{:?} {fd} {cf}", g.kind());
                let an = norm_horizontal_gradient(&g, &x).unwrap().norm();
                assert!((an - cf).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hardy_weight_examples() {
        let g = h1();
        assert!((hardy_weight(&g, 2.0, &[1.0, 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let w = hardy_weight(&g, 2.0, &[1.0, 0.0, 3f64.sqrt()]).unwrap();
        assert!((w - 0.25).abs() < 1e-14);
        assert_eq!(hardy_weight(&g, 2.0, &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!(hardy_weight(&g, 2.0, &[0.0; 3]).is_err());
    }

    #[test]
    fn fundamental_profile_examples() {
        let g = h1();
        assert!((fundamental_profile(&g, 2.0, &[0.0, 0.0, 4.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(fundamental_profile(&g, 4.0, &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let r3 = CarnotGroup::euclidean(3).unwrap();
        assert!((fundamental_profile(&r3, 2.0, &[0.0, 1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(fundamental_profile(&g, 2.0, &[0.0; 3]).is_err());
    }

    #[test]
    fn sub_p_laplacian_examples() {
        let s = FdScheme::default();
        let r3 = CarnotGroup::euclidean(3).unwrap();
        let sq = ScalarField::new(|x| x.iter().map(|c| c * c).sum());
        let v = sub_p_laplacian(&r3, 2.0, &sq, &[0.3, -1.0, 2.0], &s).unwrap();
        assert!((v - 6.0).abs() < 1e-6);

        let g = h1();
        let f = fundamental_field(&g, 2.0).without_gradient();
        let x = g.dilate_coords(
            1.5 / homogeneous_norm(&g, &[0.6, 0.5, 0.4]),
            &[0.6, 0.5, 0.4],
        );
        assert!(sub_p_laplacian(&g, 2.0, &f, &x, &s).unwrap().abs() < 1e-4);

        let f = fundamental_field(&g, 1.5).without_gradient();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = random_point_at_norm(&g, &mut rng, 0.5, 2.0);
            if norm_gradient_magnitude(&g, &x).unwrap() < 0.3 {
                continue;
            }
            let coarse =
                sub_p_laplacian(&g, 1.5, &f, &x, &FdScheme::new(2e-3, 0.0).unwrap()).unwrap();
            let fine =
                sub_p_laplacian(&g, 1.5, &f, &x, &FdScheme::new(1e-3, 0.0).unwrap()).unwrap();
            // natural size of each term of the divergence
            let n = homogeneous_norm(&g, &x);
            let scale = (2.5 * n.powf(-6.0)).powf(0.5) / n;
            assert!(fine.abs() < 1e-3 * scale, "{fine} {coarse} {scale} {x:?}");
            assert!(fine.abs() <= coarse.abs() * 0.5 + 1e-9 * scale);
        }
    }

    #[test]
    fn infinity_laplacian_examples() {
        let s = FdScheme::default();
        let g = h1();
        let n = norm_field(&g).without_gradient();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x = random_point_at_norm(&g, &mut rng, 0.5, 2.0);
            assert!(infinity_laplacian(&g, &n, &x, &s).unwrap().abs() < 1e-4);
        }
        let r3 = CarnotGroup::euclidean(3).unwrap();
        let n3 = norm_field(&r3).without_gradient();
        assert!(
            infinity_laplacian(&r3, &n3, &[0.5, 1.0, -0.3], &s)
                .unwrap()
                .abs()
                < 1e-4
        );
        // f = x^2 + y^2: grad = (2x, 2y), |grad|^2 = 4(x^2+y^2), value 1/2 * (8x*2x + 8y*2y) = 16
        let f = ScalarField::new(|x| x[0] * x[0] + x[1] * x[1]);
        let v = infinity_laplacian(&g, &f, &[1.0, 1.0, 0.0], &s).unwrap();
        assert!((v - 16.0).abs() < 1e-5, "{v}");
    }

    #[test]
    fn wrong_kappa_breaks_polarizability() {
        let s = FdScheme::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let good = CarnotGroup::quaternionic();
        let bad = CarnotGroup::quaternionic().with_norm_kappa(1.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..100)
            .map(|_| random_point_at_norm(&good, &mut rng, 0.5, 2.0))
            .collect();
        assert!(polarizability_residual(&good, &pts, &s).unwrap() < 1e-4);
        assert!(polarizability_residual(&bad, &pts, &s).unwrap() > 1e-2);
    }

    #[test]
    fn inequality_examples() {
        let r = convexity_ratio_subquadratic(1.5, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((r - (2f64.powf(0.75) - 1.0) * 2f64.sqrt()).abs() < 1e-14);
        assert!((r - 0.9642).abs() < 1e-4);
        assert!(
            (convexity_ratio_subquadratic(1.5, &[0.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs()
                < 1e-15
        );
        assert!(convexity_ratio_subquadratic(1.5, &[1.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(
            (convexity_ratio_superquadratic(3.0, &[0.0, 0.0], &[1.0, 0.0]).unwrap() - 1.0).abs()
                < 1e-15
        );
        assert!(
            (convexity_ratio_superquadratic(3.0, &[1.0, 0.0], &[1.0, 0.0]).unwrap() - 4.0).abs()
                < 1e-14
        );
        assert!(convexity_ratio_superquadratic(3.0, &[1.0, 0.0], &[0.0, 0.0]).is_err());

        let m = elementary_inequality_margin(1.5, 2.0, 1.0).unwrap();
        assert!((m - (2f64.powf(1.5) - 2.5)).abs() < 1e-15);
        assert!((m - 0.3284).abs() < 1e-4);
        let m2 = elementary_inequality_margin(2.0, 3.5, 1.25).unwrap();
        assert!((m2 - 2.25f64 * 2.25).abs() < 1e-12);
        assert!(matches!(
            elementary_inequality_margin(2.0, 1.0, 1.0),
            Err(Error::ZeroMargin)
        ));
    }
}
