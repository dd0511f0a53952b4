//! Hardy potentials, the normalized p-energy form and its two probes: the
//! sharpness scan over the extremal family and the concentrating-family probe
//! of the bottom of the spectrum.
//!
//! Quotients come in two routes. The mesh route integrates on an
//! [`AnnularMesh`]. The radial route applies to radial test functions only:
//! `int g(N) A(x) dx = Q |B| <A> int g(r) r^{Q-1} dr` for a 0-homogeneous `A`,
//! where `<A>` is the mean of `A` over the unit ball. Both the energy and the
//! potential carry `A = |grad_H N|^p`, so one measured mean `mu_p` turns 1-D
//! Gauss-Legendre integrals into the full quotient.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    hardy_weight, homogeneous_norm, norm_gradient_magnitude_unchecked, norm_gradient_unchecked,
    FdScheme, ScalarField,
};
use crate::error::{invalid, Error, Result};
use crate::group::CarnotGroup;
use crate::quadrature::{
    build_annular_mesh, gauss_legendre, graded_gauss_legendre, unit_ball_volume_exact, AnnularMesh,
    NodeSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    HardyPure,
    HardyOscillating,
}

/// `V = lambda W` or `V = lambda W + beta W sin(N^{-alpha})`, with
/// `W = (|grad_H N| / N)^p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub lambda: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub alpha: f64,
}

impl PotentialSpec {
    pub fn pure(lambda: f64) -> Result<Self> {
        let s = PotentialSpec {
            kind: PotentialKind::HardyPure,
            lambda,
            beta: 0.0,
            alpha: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn oscillating(lambda: f64, beta: f64, alpha: f64) -> Result<Self> {
        let s = PotentialSpec {
            kind: PotentialKind::HardyOscillating,
            lambda,
            beta,
            alpha,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.kind == PotentialKind::HardyOscillating {
            if self.beta == 0.0 || !self.beta.is_finite() {
                return Err(invalid("oscillating potential needs a finite beta != 0"));
            }
            if !self.alpha.is_finite() {
                return Err(invalid("alpha must be finite"));
            }
        }
        Ok(())
    }

    /// Same potential multiplied by `factor` (both `lambda` and `beta`).
    pub fn scaled(&self, factor: f64) -> Self {
        PotentialSpec {
            lambda: self.lambda * factor,
            beta: self.beta * factor,
            ..*self
        }
    }

    /// `V / W` as a function of the norm.
    pub fn radial_factor(&self, n: f64) -> f64 {
        match self.kind {
            PotentialKind::HardyPure => self.lambda,
            PotentialKind::HardyOscillating => self.lambda + self.beta * n.powf(-self.alpha).sin(),
        }
    }
}

pub fn evaluate_potential(g: &CarnotGroup, p: f64, spec: &PotentialSpec, x: &[f64]) -> Result<f64> {
    spec.validate()?;
    let w = hardy_weight(g, p, x)?;
    Ok(spec.radial_factor(homogeneous_norm(g, x)) * w)
}

/// `((Q - p) / p)^p`.
pub fn hardy_constant(g: &CarnotGroup, p: f64) -> Result<f64> {
    let q = g.homogeneous_dimension() as f64;
    if !(p > 1.0) {
        return Err(invalid(format!("Hardy constant needs p > 1, got {p}")));
    }
    if p >= q {
        return Err(Error::OutOfRange(format!(
            "Hardy inequality needs p < Q = {q}, got {p}"
        )));
    }
    Ok(((q - p) / p).powf(p))
}

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Piecewise-smooth radial profile `f(r)` with its derivative.
///
/// `breakpoints` are increasing; the first and last delimit the support and
/// `f` is smooth between consecutive entries.
#[derive(Clone)]
pub struct RadialField {
    f: Profile,
    df: Profile,
    breakpoints: Vec<f64>,
}

impl std::fmt::Debug for RadialField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialField")
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl RadialField {
    pub fn new(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        breakpoints: Vec<f64>,
    ) -> Result<Self> {
        if breakpoints.len() < 2 || breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid(
                "breakpoints must be strictly increasing, at least two",
            ));
        }
        if breakpoints[0] < 0.0 {
            return Err(invalid("radial support must lie in r >= 0"));
        }
        Ok(RadialField {
            f: Arc::new(f),
            df: Arc::new(df),
            breakpoints,
        })
    }

    pub fn value(&self, r: f64) -> f64 {
        (self.f)(r)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        (self.df)(r)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn support(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    /// `x -> f(N(x))` with gradient `f'(N) grad_H N`.
    pub fn to_field(&self, g: &CarnotGroup) -> ScalarField {
        let (f, df) = (self.f.clone(), self.df.clone());
        crate::calculus::radial_field(g, move |r| f(r), move |r| df(r))
    }
}

/// Quintic smoothstep: `C^2`, 0 below 0 and 1 above 1.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

fn smoothstep_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (t - 1.0) * (t - 1.0)
    }
}

/// The extremal family: 1 inside the unit ball and `N^{-((Q-p)/p + epsilon)}`
/// outside, blended over `[1 - w, 1 + w]` and faded to 0 by a smoothstep in
/// `log N` over the last `outer_ramp_decades` decades below `r_out`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalFamilySpec {
    pub epsilon: f64,
    pub r_out: f64,
    pub mollify_width: f64,
    #[serde(default = "default_ramp_decades")]
    pub outer_ramp_decades: f64,
}

fn default_ramp_decades() -> f64 {
    1.0
}

impl ExtremalFamilySpec {
    /// Defaults: `r_out = 10 / epsilon`, `mollify_width = 0.05`, one decade of
    /// outer ramp.
    pub fn new(epsilon: f64) -> Result<Self> {
        let s = ExtremalFamilySpec {
            epsilon,
            r_out: 10.0 / epsilon,
            mollify_width: 0.05,
            outer_ramp_decades: default_ramp_decades(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.mollify_width > 0.0 && self.mollify_width < 1.0) {
            return Err(invalid("mollify_width must lie in (0, 1)"));
        }
        if !(self.r_out > 1.0 + self.mollify_width && self.r_out.is_finite()) {
            return Err(invalid("r_out must exceed 1 + mollify_width"));
        }
        if !(self.outer_ramp_decades > 0.0) {
            return Err(invalid("outer_ramp_decades must be positive"));
        }
        Ok(())
    }
}

pub fn extremal_profile(g: &CarnotGroup, p: f64, spec: &ExtremalFamilySpec) -> Result<RadialField> {
    spec.validate()?;
    hardy_constant(g, p)?;
    let q = g.homogeneous_dimension() as f64;
    let gamma = (q - p) / p + spec.epsilon;
    let w = spec.mollify_width;
    let r_out = spec.r_out;
    let start = (1.0 + w).max(r_out * 10f64.powf(-spec.outer_ramp_decades));
    let (la, lb) = (start.ln(), r_out.ln());
    let base = move |r: f64| {
        let s = smoothstep((r - (1.0 - w)) / (2.0 * w));
        (1.0 - s) + s * r.powf(-gamma)
    };
    let base_d = move |r: f64| {
        let t = (r - (1.0 - w)) / (2.0 * w);
        let s = smoothstep(t);
        let sp = smoothstep_derivative(t) / (2.0 * w);
        sp * (r.powf(-gamma) - 1.0) - s * gamma * r.powf(-gamma - 1.0)
    };
    let cut = move |r: f64| 1.0 - smoothstep((r.ln() - la) / (lb - la));
    let cut_d = move |r: f64| -smoothstep_derivative((r.ln() - la) / (lb - la)) / (r * (lb - la));
    let mut bps = vec![0.0, 1.0 - w, 1.0 + w];
    if start > 1.0 + w {
        bps.push(start);
    }
    bps.push(r_out);
    RadialField::new(
        move |r| if r >= r_out { 0.0 } else { base(r) * cut(r) },
        move |r| {
            if r >= r_out {
                0.0
            } else {
                base_d(r) * cut(r) + base(r) * cut_d(r)
            }
        },
        bps,
    )
}

/// The extremal field `phi_epsilon` on `g`.
pub fn make_extremal(g: &CarnotGroup, p: f64, spec: &ExtremalFamilySpec) -> Result<ScalarField> {
    Ok(extremal_profile(g, p, spec)?.to_field(g))
}

/// Test functions concentrating at the origin.
///
/// `phi_n = (r / b)^{-(Q-p)/p}` on `[a_n, b]`, a logarithmic ramp from 0 at
/// `a_n^2` to its value at `a_n`, and `2 - r/b` on `[b, 2b]`. The power on
/// the middle range makes the energy and the Hardy term grow like
/// `log(b / a_n)` while the `L^p` mass stays bounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentratingFamilySpec {
    pub inner_radii: Vec<f64>,
    pub plateau_radius: f64,
}

impl ConcentratingFamilySpec {
    /// `a_n = first * ratio^{n-1}`, `n = 1..=count`.
    pub fn geometric(first: f64, ratio: f64, count: usize, plateau_radius: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(invalid("ratio must lie in (0, 1)"));
        }
        let s = ConcentratingFamilySpec {
            inner_radii: (0..count).map(|k| first * ratio.powi(k as i32)).collect(),
            plateau_radius,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.plateau_radius;
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid("plateau_radius must be positive"));
        }
        if self.inner_radii.is_empty() {
            return Err(invalid("inner_radii is empty"));
        }
        for &a in &self.inner_radii {
            if !(a > 0.0 && a < 1.0 && a < b) {
                return Err(invalid(format!(
                    "inner radius {a} must satisfy 0 < a < min(1, b)"
                )));
            }
        }
        if self.inner_radii.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid("inner_radii must decrease"));
        }
        Ok(())
    }

    pub fn profile(&self, g: &CarnotGroup, p: f64, n: usize) -> Result<RadialField> {
        self.validate()?;
        if n == 0 || n > self.inner_radii.len() {
            return Err(invalid(format!(
                "family index {n} outside 1..={}",
                self.inner_radii.len()
            )));
        }
        let q = g.homogeneous_dimension() as f64;
        let gamma = (q - p) / p;
        let a = self.inner_radii[n - 1];
        let b = self.plateau_radius;
        let top = (a / b).powf(-gamma);
        let log_span = -a.ln();
        RadialField::new(
            move |r| {
                if r <= a * a || r >= 2.0 * b {
                    0.0
                } else if r < a {
                    top * (r / (a * a)).ln() / log_span
                } else if r < b {
                    (r / b).powf(-gamma)
                } else {
                    2.0 - r / b
                }
            },
            move |r| {
                if r <= a * a || r >= 2.0 * b {
                    0.0
                } else if r < a {
                    top / (r * log_span)
                } else if r < b {
                    -gamma * (r / b).powf(-gamma) / r
                } else {
                    -1.0 / b
                }
            },
            vec![a * a, a, b, 2.0 * b],
        )
    }
}

/// The pieces of the normalized p-energy form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuotientParts {
    /// `int |grad_H phi|^p`.
    pub energy: f64,
    /// `int V |phi|^p`.
    pub potential: f64,
    /// `int |phi|^p`.
    pub denominator: f64,
    /// `(energy - potential) / denominator`.
    pub quotient: f64,
}

impl QuotientParts {
    fn new(energy: f64, potential: f64, denominator: f64) -> Result<Self> {
        if !(denominator > 0.0) {
            return Err(Error::DegenerateTestFunction(denominator));
        }
        Ok(QuotientParts {
            energy,
            potential,
            denominator,
            quotient: (energy - potential) / denominator,
        })
    }
}

/// Sum three per-node quantities in node order; `f` may run in parallel.
fn integrate3<M, F>(mesh: &M, f: F) -> Result<[f64; 3]>
where
    M: NodeSet + Sync,
    F: Fn(&[f64]) -> Result<[f64; 3]> + Sync,
{
    let values: Vec<Result<[f64; 3]>> = (0..mesh.len())
        .into_par_iter()
        .map(|i| f(mesh.node(i)))
        .collect();
    let mut acc = [0.0; 3];
    for (i, (v, w)) in values.into_iter().zip(mesh.weights()).enumerate() {
        let v = v?;
        for k in 0..3 {
            if !v[k].is_finite() {
                return Err(Error::Evaluation {
                    node: i,
                    value: v[k],
                });
            }
            acc[k] += w * v[k];
        }
    }
    Ok(acc)
}

/// `(int |grad_H phi|^p - int V |phi|^p) / int |phi|^p` over `mesh`.
pub fn rayleigh_quotient<M: NodeSet + Sync>(
    g: &CarnotGroup,
    p: f64,
    potential: Option<&PotentialSpec>,
    phi: &ScalarField,
    mesh: &M,
) -> Result<QuotientParts> {
    rayleigh_quotient_with(g, p, potential, phi, mesh, &FdScheme::default())
}

/// As [`rayleigh_quotient`], with an explicit difference scheme for fields
/// without an analytic gradient.
pub fn rayleigh_quotient_with<M: NodeSet + Sync>(
    g: &CarnotGroup,
    p: f64,
    potential: Option<&PotentialSpec>,
    phi: &ScalarField,
    mesh: &M,
    scheme: &FdScheme,
) -> Result<QuotientParts> {
    if !(p > 1.0) {
        return Err(invalid(format!("quotient needs p > 1, got {p}")));
    }
    if mesh.dim() != g.ambient_dim() {
        return Err(invalid("mesh dimension does not match the group"));
    }
    if let Some(v) = potential {
        v.validate()?;
    }
    let [e, v, d] = integrate3(mesh, |x| {
        let u = phi.value(x);
        let up = u.abs().powf(p);
        let grad = crate::calculus::horizontal_gradient(g, phi, x, scheme)?;
        let e = grad.norm().powf(p);
        let v = match potential {
            Some(spec) if up != 0.0 => evaluate_potential(g, p, spec, x)? * up,
            _ => 0.0,
        };
        Ok([e, v, up])
    })?;
    QuotientParts::new(e, v, d)
}

/// `(int |grad_H phi|^p)^{1/p} / (int |phi|^{p*})^{1/p*}` with
/// `p* = Qp / (Q - p)`.
pub fn sobolev_quotient<M: NodeSet + Sync>(
    g: &CarnotGroup,
    p: f64,
    phi: &ScalarField,
    mesh: &M,
) -> Result<f64> {
    let q = g.homogeneous_dimension() as f64;
    if !(p >= 1.0 && p < q) {
        return Err(invalid(format!(
            "Sobolev quotient needs 1 <= p < Q, got {p}"
        )));
    }
    let exponent = q * p / (q - p);
    let scheme = FdScheme::default();
    let [e, d, _] = integrate3(mesh, |x| {
        let grad = crate::calculus::horizontal_gradient(g, phi, x, &scheme)?;
        Ok([grad.norm().powf(p), phi.value(x).abs().powf(exponent), 0.0])
    })?;
    if !(d > 0.0) {
        return Err(Error::DegenerateTestFunction(d));
    }
    Ok(e.powf(1.0 / p) / d.powf(1.0 / exponent))
}

/// Mean of `|grad_H N|^p` over the annulus `{1 <= N <= 2}` (equal to its
/// mean over the unit ball by homogeneity), on a one-shell mesh.
pub fn angular_mean(g: &CarnotGroup, p: f64, cells_per_dim: usize) -> Result<f64> {
    let mesh = build_annular_mesh(g, 1.0, 2.0, 1, cells_per_dim)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &w) in mesh.weights().iter().enumerate() {
        let n = mesh.norms()[i];
        num += w * norm_gradient_magnitude_unchecked(g, mesh.node(i), n).powf(p);
        den += w;
    }
    Ok(num / den)
}

/// Mesh parameters for radial families whose support changes with the
/// family index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshSettings {
    /// Inner radius for profiles whose support reaches the origin.
    pub r_min: f64,
    pub shells_per_octave: usize,
    pub cells_per_dim: usize,
}

impl Default for MeshSettings {
    fn default() -> Self {
        MeshSettings {
            r_min: 1e-3,
            shells_per_octave: 1,
            cells_per_dim: 24,
        }
    }
}

impl MeshSettings {
    pub fn build(&self, g: &CarnotGroup, r_lo: f64, r_hi: f64) -> Result<AnnularMesh> {
        if self.shells_per_octave == 0 {
            return Err(invalid("shells_per_octave must be positive"));
        }
        let r_lo = r_lo.max(self.r_min);
        let octaves = (r_hi / r_lo).log2();
        let levels = ((octaves * self.shells_per_octave as f64).ceil() as usize).max(1);
        build_annular_mesh(g, r_lo, r_hi, levels, self.cells_per_dim)
    }
}

/// Settings of the 1-D radial route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadialSettings {
    /// Gauss order per geometric panel.
    pub order: usize,
    /// Cells per axis of the mesh measuring `mu_p`.
    pub angular_cells: usize,
}

impl Default for RadialSettings {
    fn default() -> Self {
        RadialSettings {
            order: 16,
            angular_cells: 48,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Route {
    Mesh(MeshSettings),
    Radial(RadialSettings),
}

impl Default for Route {
    fn default() -> Self {
        Route::Mesh(MeshSettings::default())
    }
}

/// Largest admitted number of oscillations of `sin(r^{-alpha})` integrated
/// with Gauss panels in the radial route; beyond it the asymptotic expansion
/// takes over.
const MAX_RESOLVED_OSCILLATIONS: f64 = 1e4;
/// Gauss panels per half-period for the resolved oscillatory part.
const OSC_ORDER: usize = 8;

/// `int_{lo}^{hi} h(r) dr` for `h` smooth on `[lo, hi]`, geometric panels.
fn smooth_integral(h: &dyn Fn(f64) -> f64, lo: f64, hi: f64, order: usize) -> Result<f64> {
    Ok(graded_gauss_legendre(lo, hi, order)?
        .iter()
        .map(|&(r, w)| w * h(r))
        .sum())
}

/// `int_{lo}^{hi} sin(r^{-alpha}) h(r) dr` for smooth `h`, `alpha > 0`.
///
/// In `u = r^{-alpha}` the integrand is `sin(u) G(u)` with
/// `G(u) = h(u^{-1/alpha}) u^{-1/alpha - 1} / alpha`. Up to
/// [`MAX_RESOLVED_OSCILLATIONS`] periods are integrated with Gauss panels of
/// at most half a period; the rest uses two terms of integration by parts,
/// `[-cos(u) G(u) + sin(u) G'(u)]`.
fn oscillatory_integral(h: &dyn Fn(f64) -> f64, alpha: f64, lo: f64, hi: f64) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let inv = 1.0 / alpha;
    let big_g = |u: f64| h(u.powf(-inv)) * u.powf(-inv - 1.0) * inv;
    let (u_lo, u_hi) = (hi.powf(-alpha), lo.powf(-alpha));
    let u_cut = (u_lo + 2.0 * pi * MAX_RESOLVED_OSCILLATIONS).min(u_hi);
    let (xs, ws) = gauss_legendre(OSC_ORDER);
    let mut acc = 0.0;
    let mut a = u_lo;
    while a < u_cut {
        // geometric panels where G varies on the scale of u itself
        let b = (a + pi.min(0.25 * a).max(1e-12)).min(u_cut);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in xs.iter().zip(&ws) {
            let u = mid + half * x;
            acc += half * w * u.sin() * big_g(u);
        }
        a = b;
    }
    if u_cut < u_hi {
        let dg = |u: f64| {
            let du = 1e-4 * u;
            (big_g(u + du) - big_g(u - du)) / (2.0 * du)
        };
        let boundary = |u: f64| -u.cos() * big_g(u) + u.sin() * dg(u);
        acc += boundary(u_hi) - boundary(u_cut);
    }
    Ok(acc)
}

/// Rayleigh quotient of a radial test function by 1-D integrals, using the
/// angular mean `mu_p` of `|grad_H N|^p`.
pub fn radial_rayleigh_quotient(
    g: &CarnotGroup,
    p: f64,
    potential: Option<&PotentialSpec>,
    profile: &RadialField,
    mu_p: f64,
    order: usize,
) -> Result<QuotientParts> {
    if !(p > 1.0) {
        return Err(invalid(format!("quotient needs p > 1, got {p}")));
    }
    let q = g.homogeneous_dimension() as f64;
    let scale = q * unit_ball_volume_exact(g);
    let e_int = |r: f64| profile.derivative(r).abs().powf(p) * r.powf(q - 1.0);
    let w_int = |r: f64| profile.value(r).abs().powf(p) * r.powf(q - 1.0 - p);
    let d_int = |r: f64| profile.value(r).abs().powf(p) * r.powf(q - 1.0);
    let mut e = 0.0;
    let mut w = 0.0;
    let mut osc = 0.0;
    let mut d = 0.0;
    for pair in profile.breakpoints().windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        e += smooth_integral(&e_int, lo, hi, order)?;
        w += smooth_integral(&w_int, lo, hi, order)?;
        d += smooth_integral(&d_int, lo, hi, order)?;
        if let Some(spec) = potential {
            if spec.kind == PotentialKind::HardyOscillating {
                if spec.alpha > 0.0 {
                    osc += oscillatory_integral(&w_int, spec.alpha, lo.max(f64::MIN_POSITIVE), hi)?;
                } else {
                    let s = |r: f64| r.powf(-spec.alpha).sin() * w_int(r);
                    osc += smooth_integral(&s, lo, hi, order)?;
                }
            }
        }
    }
    let potential_term = match potential {
        None => 0.0,
        Some(spec) => {
            spec.validate()?;
            spec.lambda * w
                + if spec.kind == PotentialKind::HardyOscillating {
                    spec.beta * osc
                } else {
                    0.0
                }
        }
    };
    QuotientParts::new(scale * mu_p * e, scale * mu_p * potential_term, scale * d)
}

/// One row of a scan table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub parameter: f64,
    pub numerator_energy: f64,
    pub potential_term: f64,
    pub denominator: f64,
    pub quotient: f64,
}

impl ScanRow {
    fn new(parameter: f64, parts: QuotientParts) -> Self {
        ScanRow {
            parameter,
            numerator_energy: parts.energy,
            potential_term: parts.potential,
            denominator: parts.denominator,
            quotient: parts.quotient,
        }
    }
}

pub const SCAN_COLUMNS: [&str; 5] = [
    "parameter",
    "numerator_energy",
    "potential_term",
    "denominator",
    "quotient",
];

fn quotient_by_route(
    g: &CarnotGroup,
    p: f64,
    potential: Option<&PotentialSpec>,
    profile: &RadialField,
    route: &Route,
    mu_p: Option<f64>,
) -> Result<QuotientParts> {
    match route {
        Route::Mesh(settings) => {
            let (lo, hi) = profile.support();
            let mesh = settings.build(g, lo, hi)?;
            if let Some(spec) = potential {
                check_oscillation_resolved(spec, &mesh)?;
            }
            rayleigh_quotient(g, p, potential, &profile.to_field(g), &mesh)
        }
        Route::Radial(settings) => {
            let mu = match mu_p {
                Some(mu) => mu,
                None => angular_mean(g, p, settings.angular_cells)?,
            };
            radial_rayleigh_quotient(g, p, potential, profile, mu, settings.order)
        }
    }
}

/// Shell-count heuristic: a cell of radial width `~ 2 q r / cells` must see
/// at most an eighth of a period of `sin(N^{-alpha})` at the inner radius.
fn check_oscillation_resolved(spec: &PotentialSpec, mesh: &AnnularMesh) -> Result<()> {
    if spec.kind != PotentialKind::HardyOscillating || spec.alpha == 0.0 {
        return Ok(());
    }
    let q = (mesh.r_max() / mesh.r_min()).powf(1.0 / mesh.levels() as f64);
    let r = if spec.alpha > 0.0 {
        mesh.r_min()
    } else {
        mesh.r_max()
    };
    let phase_per_cell =
        2.0 * q * spec.alpha.abs() * r.powf(-spec.alpha) / mesh.cells_per_dim() as f64;
    let limit = 2.0 * std::f64::consts::PI / 8.0;
    if phase_per_cell > limit {
        return Err(Error::Resolution(format!(
            "sin(N^-{}) changes phase by {phase_per_cell:.3e} per cell at N = {r:.3e} (limit {limit:.3})",
            spec.alpha
        )));
    }
    Ok(())
}

/// Parameters of the sharpness scan besides the epsilon list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharpnessSettings {
    /// `r_out = r_out_scale / epsilon`.
    pub r_out_scale: f64,
    pub mollify_width: f64,
    pub outer_ramp_decades: f64,
    /// Potential `lambda = lambda_factor * hardy_constant`.
    pub lambda_factor: f64,
    pub route: Route,
}

impl Default for SharpnessSettings {
    fn default() -> Self {
        SharpnessSettings {
            r_out_scale: 10.0,
            mollify_width: 0.05,
            outer_ramp_decades: 1.0,
            lambda_factor: 1.0,
            route: Route::Mesh(MeshSettings {
                shells_per_octave: 2,
                ..MeshSettings::default()
            }),
        }
    }
}

/// Quotient with `V = lambda_factor * C * W` for each `phi_epsilon`.
pub fn sharpness_scan(
    g: &CarnotGroup,
    p: f64,
    epsilons: &[f64],
    settings: &SharpnessSettings,
) -> Result<Vec<ScanRow>> {
    if epsilons.is_empty() {
        return Err(invalid("epsilon list is empty"));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) || epsilons.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("epsilons must be positive and strictly decreasing"));
    }
    let c = hardy_constant(g, p)?;
    let potential = PotentialSpec::pure(settings.lambda_factor * c)?;
    let mu = match settings.route {
        Route::Radial(r) => Some(angular_mean(g, p, r.angular_cells)?),
        Route::Mesh(_) => None,
    };
    epsilons
        .iter()
        .map(|&eps| {
            let spec = ExtremalFamilySpec {
                epsilon: eps,
                r_out: settings.r_out_scale / eps,
                mollify_width: settings.mollify_width,
                outer_ramp_decades: settings.outer_ramp_decades,
            };
            let profile = extremal_profile(g, p, &spec)?;
            let parts = quotient_by_route(g, p, Some(&potential), &profile, &settings.route, mu)?;
            Ok(ScanRow::new(eps, parts))
        })
        .collect()
}

/// One row of a concentrating-family probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRow {
    pub n: usize,
    pub inner_radius: f64,
    pub numerator_energy: f64,
    pub potential_term: f64,
    pub denominator: f64,
    pub quotient: f64,
}

impl ProbeRow {
    pub fn as_scan_row(&self) -> ScanRow {
        ScanRow {
            parameter: self.n as f64,
            numerator_energy: self.numerator_energy,
            potential_term: self.potential_term,
            denominator: self.denominator,
            quotient: self.quotient,
        }
    }
}

/// Default `epsilon` margin in `sigma_inf((1 - epsilon) V)`.
pub const DEFAULT_EPSILON_MARGIN: f64 = 0.1;

/// Quotients of `(1 - epsilon_margin) V` along the concentrating family,
/// `n = 1..=n_max`.
pub fn sigma_inf_probe(
    g: &CarnotGroup,
    p: f64,
    potential: &PotentialSpec,
    family: &ConcentratingFamilySpec,
    n_max: usize,
    epsilon_margin: f64,
    route: &Route,
) -> Result<Vec<ProbeRow>> {
    potential.validate()?;
    family.validate()?;
    hardy_constant(g, p)?;
    if !(0.0..1.0).contains(&epsilon_margin) {
        return Err(invalid("epsilon_margin must lie in [0, 1)"));
    }
    if n_max == 0 || n_max > family.inner_radii.len() {
        return Err(invalid(format!(
            "n_max must lie in 1..={}",
            family.inner_radii.len()
        )));
    }
    let v = potential.scaled(1.0 - epsilon_margin);
    let mu = match route {
        Route::Radial(r) => Some(angular_mean(g, p, r.angular_cells)?),
        Route::Mesh(_) => None,
    };
    (1..=n_max)
        .map(|n| {
            let profile = family.profile(g, p, n)?;
            let parts = quotient_by_route(g, p, Some(&v), &profile, route, mu)?;
            Ok(ProbeRow {
                n,
                inner_radius: family.inner_radii[n - 1],
                numerator_energy: parts.energy,
                potential_term: parts.potential,
                denominator: parts.denominator,
                quotient: parts.quotient,
            })
        })
        .collect()
}

/// Smooth bump `amplitude * exp(-1 / (1 - (N(c^{-1} x) / radius)^2))`
/// centred at `c`. Left translation commutes with the generators, so the
/// gradient is the radial gradient evaluated at `c^{-1} x`.
pub fn bump_field(
    g: &CarnotGroup,
    center: &[f64],
    radius: f64,
    amplitude: f64,
) -> Result<ScalarField> {
    g.check_point(center)?;
    if !(radius > 0.0) {
        return Err(invalid("bump radius must be positive"));
    }
    let inv = g.inverse(&center.to_vec().into())?;
    let (g1, g2) = (g.clone(), g.clone());
    let (c1, c2) = (inv.clone(), inv);
    let profile = move |t: f64| {
        if t >= 1.0 {
            0.0
        } else {
            amplitude * (-1.0 / (1.0 - t * t)).exp()
        }
    };
    let dprofile = move |t: f64| {
        if t >= 1.0 {
            0.0
        } else {
            let s = 1.0 - t * t;
            amplitude * (-1.0 / s).exp() * (-2.0 * t / (s * s))
        }
    };
    Ok(ScalarField::with_gradient(
        move |x| {
            let y = g1
                .multiply(&c1, &x.to_vec().into())
                .expect("dimension checked");
            profile(homogeneous_norm(&g1, &y) / radius)
        },
        move |x| {
            let y = g2
                .multiply(&c2, &x.to_vec().into())
                .expect("dimension checked");
            let n = homogeneous_norm(&g2, &y);
            if n == 0.0 {
                return vec![0.0; g2.horizontal_dim()];
            }
            let d = dprofile(n / radius) / radius;
            norm_gradient_unchecked(&g2, &y, n)
                .into_iter()
                .map(|c| c * d)
                .collect()
        },
    ))
}

/// Write scan rows with a header and a leading `#` comment line.
pub fn write_scan_csv(path: &Path, comment: &str, rows: &[ScanRow]) -> Result<()> {
    let records: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            vec![
                r.parameter,
                r.numerator_energy,
                r.potential_term,
                r.denominator,
                r.quotient,
            ]
        })
        .collect();
    crate::report::write_csv(path, comment, &SCAN_COLUMNS, &records)
}
