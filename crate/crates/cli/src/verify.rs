//! The `verify` suite: residual checks of the group calculus at random
//! points, reported as a fixed-format table.

use std::fmt::Write as _;

use carnot_core::calculus::{
    commutator_apply, convexity_ratio_subquadratic, convexity_ratio_superquadratic,
    elementary_inequality_margin, fundamental_field, hardy_weight, homogeneous_norm,
    horizontal_gradient, norm_field, norm_gradient_magnitude, norm_horizontal_gradient,
    polarizability_residual, random_point_at_norm, sub_p_laplacian,
};
use carnot_core::{CarnotGroup, FdScheme, GroupKind, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, VerifySettings};
use crate::error::{CliError, CliResult};

/// Comparison a check's measured value must satisfy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    AtMost(f64),
    Above(f64),
}

impl Bound {
    fn holds(self, v: f64) -> bool {
        match self {
            Bound::AtMost(t) => v <= t,
            Bound::Above(t) => v > t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, bound: Bound) -> Self {
        Check {
            name: name.into(),
            measured,
            bound,
        }
    }

    pub fn passed(&self) -> bool {
        self.bound.holds(self.measured)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub header: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed()).count()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.header).unwrap();
        writeln!(
            s,
            "{:<32} {:>12} {:>14}  result",
            "check", "measured", "bound"
        )
        .unwrap();
        for c in &self.checks {
            let bound = match c.bound {
                Bound::AtMost(t) => format!("<= {t:.1e}"),
                Bound::Above(t) => format!("> {t:.1e}"),
            };
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            writeln!(
                s,
                "{:<32} {:>12.3e} {:>14}  {verdict}",
                c.name, c.measured, bound
            )
            .unwrap();
        }
        writeln!(
            s,
            "summary: {}/{} passed",
            self.checks.len() - self.failures(),
            self.checks.len()
        )
        .unwrap();
        s
    }
}

/// Sub-seed per check, so adding a check leaves the others' points alone.
fn rng_for(seed: u64, check: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(check))
}

pub fn run_verify(config: &ExperimentConfig) -> CliResult<VerifyReport> {
    let g = config.group()?;
    let v = &config.verify;
    if v.samples == 0 || v.fd_samples == 0 {
        return Err(CliError::Usage(
            "verify.samples and verify.fd_samples must be positive".into(),
        ));
    }
    let p = config.p();
    let scheme = FdScheme::new(v.h, 0.0).map_err(CliError::field("verify.h"))?;
    let seed = config.seed;
    let q = g.homogeneous_dimension();
    let mut checks = Vec::new();

    let (hom, inv) = norm_axioms(&g, v.samples, &mut rng_for(seed, 1))?;
    checks.push(Check::new("norm_homogeneity", hom, Bound::AtMost(1e-12)));
    checks.push(Check::new(
        "norm_inverse_symmetry",
        inv,
        Bound::AtMost(1e-12),
    ));

    let comm = commutator_residual(&g, v.fd_samples, &scheme, &mut rng_for(seed, 2))?;
    checks.push(Check::new("commutators", comm, Bound::AtMost(1e-6)));

    let mut rng = rng_for(seed, 3);
    let pts: Vec<Vec<f64>> = (0..v.samples)
        .map(|_| random_point_at_norm(&g, &mut rng, 0.5, 2.0))
        .collect();
    let gs = FdScheme::new(v.gradient_h, 0.0).map_err(CliError::field("verify.gradient_h"))?;
    let grad = norm_gradient_residual(&g, &pts, &gs)?;
    checks.push(Check::new(
        "norm_gradient_closed_form",
        grad,
        Bound::AtMost(1e-6),
    ));
    let polar = polarizability_residual(&g, &pts, &scheme)?;
    checks.push(Check::new("polarizability", polar, Bound::AtMost(1e-4)));

    if p < q as f64 {
        let w = weight_residual(&g, p, &pts)?;
        checks.push(Check::new(
            format!("hardy_weight_identity(p={p})"),
            w,
            Bound::AtMost(1e-12),
        ));
    }

    for &fp in &v.fundamental_ps {
        if fp <= 1.0 || fp.is_nan() || fp >= q as f64 {
            continue;
        }
        let ratio = fundamental_order(&g, fp, v, &mut rng_for(seed, 4))?;
        checks.push(Check::new(
            format!("fundamental_solution_order(p={fp})"),
            ratio,
            Bound::AtMost(0.35),
        ));
    }

    let mut rng = rng_for(seed, 5);
    if p > 1.0 && p < 2.0 {
        let r = min_over_pairs(v.samples, &mut rng, |a, b| {
            convexity_ratio_subquadratic(p, a, b)
        })?;
        checks.push(Check::new(
            format!("convexity_ratio_lt2(p={p})"),
            r,
            Bound::Above(0.0),
        ));
    } else if p > 2.0 {
        let r = min_over_pairs(v.samples, &mut rng, |a, b| {
            convexity_ratio_superquadratic(p, a, b)
        })?;
        checks.push(Check::new(
            format!("convexity_ratio_gt2(p={p})"),
            r,
            Bound::Above(0.0),
        ));
    }
    if p > 1.0 {
        let mut worst = f64::INFINITY;
        for _ in 0..v.samples {
            let (w1, w2): (f64, f64) = (rng.gen_range(0.01..10.0), rng.gen_range(0.01..10.0));
            if w1 == w2 {
                continue;
            }
            // scale-free margin
            let m = elementary_inequality_margin(p, w1, w2)? / (w1 - w2).abs().powi(2)
                * w1.max(w2).powf(2.0 - p);
            worst = worst.min(m);
        }
        checks.push(Check::new(
            format!("elementary_margin(p={p})"),
            worst,
            Bound::Above(0.0),
        ));
    }

    let header = format!(
        "verify group={} Q={q} p={p} seed={seed} samples={} fd_samples={} h={:e}",
        serde_json::to_string(&config.group).expect("descriptor serialises"),
        v.samples,
        v.fd_samples,
        v.h
    );
    Ok(VerifyReport { header, checks })
}

/// Worst relative errors of `N(delta_l x) = l N(x)` and `N(x^{-1}) = N(x)`.
fn norm_axioms(g: &CarnotGroup, samples: usize, rng: &mut ChaCha8Rng) -> CliResult<(f64, f64)> {
    let (mut hom, mut inv): (f64, f64) = (0.0, 0.0);
    for _ in 0..samples {
        let x = g.random_point(rng, 2.0);
        let l: f64 = rng.gen_range(0.1..10.0);
        let n = homogeneous_norm(g, &x);
        if n == 0.0 {
            continue;
        }
        let nd = homogeneous_norm(g, &g.dilate(l, &x)?);
        hom = hom.max((nd - l * n).abs() / (l * n));
        let ni = homogeneous_norm(g, &g.inverse(&x)?);
        inv = inv.max((ni - n).abs() / n);
    }
    Ok((hom, inv))
}

/// Monomials in ambient coordinates, given by their factor indices; `d` is
/// the last (central) coordinate.
fn test_polynomials(dim: usize) -> Vec<Vec<Vec<usize>>> {
    let d = dim - 1;
    vec![
        vec![vec![0, d]],
        vec![vec![0, 0, 1]],
        vec![vec![d, d]],
        vec![vec![0, 1, d]],
        vec![vec![0, 0, 0], vec![1, d], vec![d]],
    ]
}

fn poly_value(terms: &[Vec<usize>], x: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| t.iter().map(|&i| x[i]).product::<f64>())
        .sum()
}

fn poly_gradient(terms: &[Vec<usize>], x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for t in terms {
        for k in 0..t.len() {
            let rest: f64 = t
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != k)
                .map(|(_, &i)| x[i])
                .product();
            g[t[k]] += rest;
        }
    }
    g
}

/// `[X_i, X_j] f` by nested differencing against `b . grad f`, where the
/// bracket field `b = (X_i a_j) - (X_j a_i)` is formed from the coefficient
/// vectors (linear in `x`, so their differences are exact).
fn commutator_residual(
    g: &CarnotGroup,
    samples: usize,
    s: &FdScheme,
    rng: &mut ChaCha8Rng,
) -> CliResult<f64> {
    let dim = g.ambient_dim();
    let m = g.horizontal_dim();
    let mut worst: f64 = 0.0;
    for terms in test_polynomials(dim) {
        let f = {
            let t = terms.clone();
            ScalarField::new(move |x| poly_value(&t, x))
        };
        for _ in 0..samples {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let grad = poly_gradient(&terms, &x);
            for i in 0..m {
                for j in (i + 1)..m {
                    let b = bracket(g, i, j, &x)?;
                    let expected: f64 = b.iter().zip(&grad).map(|(a, c)| a * c).sum();
                    let got = commutator_apply(g, i, j, &f, &x, s)?;
                    worst = worst.max((got - expected).abs());
                }
            }
        }
    }
    Ok(worst)
}

fn bracket(g: &CarnotGroup, i: usize, j: usize, x: &[f64]) -> CliResult<Vec<f64>> {
    let ai = g.vector_field(i, x)?;
    let aj = g.vector_field(j, x)?;
    // directional derivative of a_k along the (constant-in-direction) vector w
    let along = |k: usize, w: &[f64]| -> CliResult<Vec<f64>> {
        let plus: Vec<f64> = x.iter().zip(w).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = x.iter().zip(w).map(|(a, b)| a - b).collect();
        let (fp, fm) = (g.vector_field(k, &plus)?, g.vector_field(k, &minus)?);
        Ok(fp.iter().zip(&fm).map(|(a, b)| 0.5 * (a - b)).collect())
    };
    let xi_aj = along(j, &ai)?;
    let xj_ai = along(i, &aj)?;
    Ok(xi_aj.iter().zip(&xj_ai).map(|(a, b)| a - b).collect())
}

fn norm_gradient_residual(g: &CarnotGroup, pts: &[Vec<f64>], s: &FdScheme) -> CliResult<f64> {
    let f = norm_field(g).without_gradient();
    let mut worst: f64 = 0.0;
    for x in pts {
        let closed = norm_horizontal_gradient(g, x)?;
        let fd = horizontal_gradient(g, &f, x, s)?;
        for (a, b) in closed.components().iter().zip(fd.components()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// `|grad_H N|^p / N^p` written out per group kind, relative error.
fn weight_residual(g: &CarnotGroup, p: f64, pts: &[Vec<f64>]) -> CliResult<f64> {
    let kappa = g.norm_kappa();
    let mut worst: f64 = 0.0;
    for x in pts {
        let expected = match g.kind() {
            GroupKind::Euclidean => x.iter().map(|c| c * c).sum::<f64>().powf(-0.5 * p),
            GroupKind::Heisenberg => {
                let d = x.len() - 1;
                let z2: f64 = x[..d].iter().map(|c| c * c).sum();
                let l = x[d];
                let n4 = z2 * z2 + kappa * l * l;
                let grad = z2.sqrt() * (z2 * z2 + kappa * kappa * l * l).sqrt() / n4.powf(0.75);
                (grad / n4.powf(0.25)).powf(p)
            }
            GroupKind::HType => {
                let m = g.layer_dims()[0];
                let v2: f64 = x[..m].iter().map(|c| c * c).sum();
                let z2: f64 = x[m..].iter().map(|c| c * c).sum();
                let n4 = v2 * v2 + kappa * z2;
                let grad = v2.sqrt() * (16.0 * v2 * v2 + kappa * kappa * z2).sqrt()
                    / (4.0 * n4.powf(0.75));
                (grad / n4.powf(0.25)).powf(p)
            }
        };
        let got = hardy_weight(g, p, x)?;
        worst = worst.max((got - expected).abs() / expected.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Largest ratio of successive worst residuals of `Delta_p` applied to the
/// fundamental solution as `h` shrinks; second order gives about 1/4.
fn fundamental_order(
    g: &CarnotGroup,
    p: f64,
    v: &VerifySettings,
    rng: &mut ChaCha8Rng,
) -> CliResult<f64> {
    if v.fundamental_hs.len() < 2 {
        return Err(CliError::Usage(
            "verify.fundamental_hs needs at least two spacings".into(),
        ));
    }
    let f = fundamental_field(g, p).without_gradient();
    let mut pts = Vec::new();
    while pts.len() < v.fd_samples {
        let x = random_point_at_norm(g, rng, 0.5, 2.0);
        // p < 2 makes the flux singular where grad N vanishes
        if norm_gradient_magnitude(g, &x)? >= 0.3 {
            pts.push(x);
        }
    }
    let mut residuals = Vec::new();
    for &h in &v.fundamental_hs {
        let s = FdScheme::new(h, 0.0).map_err(CliError::field("verify.fundamental_hs"))?;
        let mut worst: f64 = 0.0;
        for x in &pts {
            worst = worst.max(sub_p_laplacian(g, p, &f, x, &s)?.abs());
        }
        residuals.push(worst);
    }
    Ok(residuals
        .windows(2)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max))
}

fn min_over_pairs(
    samples: usize,
    rng: &mut ChaCha8Rng,
    ratio: impl Fn(&[f64], &[f64]) -> carnot_core::Result<f64>,
) -> CliResult<f64> {
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        worst = worst.min(ratio(&a, &b)?);
    }
    Ok(worst)
}
