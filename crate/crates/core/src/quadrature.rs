//! Quadrature over group domains.
//!
//! [`AnnularMesh`] covers `{r_min <= N <= r_max}` with geometric shells. Each
//! shell carries its own Cartesian grid over the dilated bounding box of the
//! unit ball, so every shell grid is an exact dilation of the first one and a
//! singular weight like `N^{-p}` costs the same relative accuracy in every
//! shell. Adjacent shells are blended with a smooth partition of unity in
//! `log N` instead of being cut at the shell radii. Cells cut by one of the two
//! end radii are clipped by sub-cell counting and their node moved inside.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::calculus::{homogeneous_norm, ScalarField};
use crate::error::{invalid, Error, Result};
use crate::group::{CarnotGroup, GroupKind};

/// Weighted point set that can be integrated against.
pub trait NodeSet {
    fn dim(&self) -> usize;
    /// Node coordinates, flattened row by row.
    fn coords(&self) -> &[f64];
    fn weights(&self) -> &[f64];

    fn len(&self) -> usize {
        self.weights().len()
    }

    fn is_empty(&self) -> bool {
        self.weights().is_empty()
    }

    fn node(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords()[i * d..(i + 1) * d]
    }

    fn total_weight(&self) -> f64 {
        self.weights().iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct AnnularMesh {
    group: CarnotGroup,
    r_min: f64,
    r_max: f64,
    levels: usize,
    cells_per_dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
    norms: Vec<f64>,
}

impl AnnularMesh {
    pub fn group(&self) -> &CarnotGroup {
        &self.group
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn cells_per_dim(&self) -> usize {
        self.cells_per_dim
    }

    /// `N(x)` at every node, in node order.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_nodes_csv(self, path)
    }
}

impl NodeSet for AnnularMesh {
    fn dim(&self) -> usize {
        self.group.ambient_dim()
    }

    fn coords(&self) -> &[f64] {
        &self.coords
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Tensor-product midpoint rule on an axis-aligned box.
#[derive(Debug, Clone)]
pub struct BoxMesh {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl BoxMesh {
    pub fn new(bounds: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != counts.len() {
            return Err(invalid("box mesh needs one count per axis"));
        }
        if bounds
            .iter()
            .any(|&(a, b)| !(a < b) || !a.is_finite() || !b.is_finite())
        {
            return Err(invalid("box bounds must satisfy lo < hi"));
        }
        if counts.contains(&0) {
            return Err(invalid("box counts must be positive"));
        }
        let steps: Vec<f64> = bounds
            .iter()
            .zip(&counts)
            .map(|(&(a, b), &c)| (b - a) / c as f64)
            .collect();
        let vol: f64 = steps.iter().product();
        let d = bounds.len();
        let total: usize = counts.iter().product();
        let mut coords = Vec::with_capacity(total * d);
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for k in 0..d {
                coords.push(bounds[k].0 + (idx[k] as f64 + 0.5) * steps[k]);
            }
            advance(&mut idx, &counts);
        }
        Ok(BoxMesh {
            bounds,
            counts,
            coords,
            weights: vec![vol; total],
        })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_nodes_csv(self, path)
    }
}

impl NodeSet for BoxMesh {
    fn dim(&self) -> usize {
        self.bounds.len()
    }

    fn coords(&self) -> &[f64] {
        &self.coords
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Odometer increment, last axis fastest.
fn advance(idx: &mut [usize], counts: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < counts[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// `C^inf` step: 0 for `t <= 0`, 1 for `t >= 1`.
pub(crate) fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

/// Partition weight of shell grid `i` at log-radius coordinate `s`.
fn shell_weight(i: usize, levels: usize, s: f64) -> f64 {
    let i = i as f64;
    let rising = if i == 0.0 {
        1.0
    } else {
        smooth_step(s - (i - 1.0))
    };
    let falling = if i == levels as f64 {
        1.0
    } else {
        1.0 - smooth_step(s - i)
    };
    if s < i - 1.0 || s > i + 1.0 {
        0.0
    } else if s <= i {
        rising
    } else {
        falling
    }
}

pub fn build_annular_mesh(
    g: &CarnotGroup,
    r_min: f64,
    r_max: f64,
    levels: usize,
    cells_per_dim: usize,
) -> Result<AnnularMesh> {
    if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
        return Err(invalid(format!(
            "need 0 < r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    if levels < 1 {
        return Err(invalid("levels must be at least 1"));
    }
    if cells_per_dim < 2 {
        return Err(invalid("cells_per_dim must be at least 2"));
    }
    let d = g.ambient_dim();
    let q = (r_max / r_min).powf(1.0 / levels as f64);
    let log_q = q.ln();
    let unit_box = g.unit_ball_bounding_box();
    let exps = g.dilation_exponents();

    let mut coords = Vec::new();
    let mut weights = Vec::new();
    let mut norms = Vec::new();
    let counts = vec![cells_per_dim; d];
    let total: usize = counts.iter().product();
    let mut x = vec![0.0; d];
    for i in 0..=levels {
        let outer = r_min * q.powi((i + 1).min(levels) as i32);
        let half: Vec<f64> = unit_box
            .iter()
            .zip(exps)
            .map(|(b, &a)| b * outer.powi(a as i32))
            .collect();
        let steps: Vec<f64> = half
            .iter()
            .map(|w| 2.0 * w / cells_per_dim as f64)
            .collect();
        let vol: f64 = steps.iter().product();
        let mut idx = vec![0usize; d];
        for _ in 0..total {
            for k in 0..d {
                x[k] = -half[k] + (idx[k] as f64 + 0.5) * steps[k];
            }
            advance(&mut idx, &counts);
            let n = homogeneous_norm(g, &x);
            let reach = cell_reach(g, &x, n, &steps);
            if n + reach < r_min || n - reach > r_max {
                continue;
            }
            let cut = n - reach < r_min || n + reach > r_max;
            let (node, n, fraction) = if cut {
                match clip_cell(g, &x, &steps, r_min, r_max) {
                    Some(v) => v,
                    None => continue,
                }
            } else {
                (x.clone(), n, 1.0)
            };
            let s = (n / r_min).ln() / log_q;
            let w = shell_weight(i, levels, s);
            if w > 0.0 {
                coords.extend_from_slice(&node);
                weights.push(vol * w * fraction);
                norms.push(n);
            }
        }
    }
    Ok(AnnularMesh {
        group: g.clone(),
        r_min,
        r_max,
        levels,
        cells_per_dim,
        coords,
        weights,
        norms,
    })
}

/// Sub-cells per axis used to clip cells cut by an end radius.
const CLIP_SUBDIVISIONS: usize = 4;

/// Upper bound on `|N(y) - N(x)|` over the cell centred at `x`, to first order
/// with a safety factor for curvature.
fn cell_reach(g: &CarnotGroup, x: &[f64], n: f64, steps: &[f64]) -> f64 {
    if n == 0.0 {
        return f64::INFINITY;
    }
    let m = g.horizontal_dim();
    let n3 = n * n * n;
    let reach: f64 = match g.kind() {
        GroupKind::Euclidean => x.iter().zip(steps).map(|(c, h)| (c / n).abs() * h).sum(),
        _ => {
            let v2: f64 = x[..m].iter().map(|c| c * c).sum();
            let horiz: f64 = x[..m]
                .iter()
                .zip(steps)
                .map(|(c, h)| (v2 * c / n3).abs() * h)
                .sum();
            let vert: f64 = x[m..]
                .iter()
                .zip(&steps[m..])
                .map(|(c, h)| (0.5 * g.norm_kappa() * c / n3).abs() * h)
                .sum();
            horiz + vert
        }
    };
    0.75 * reach + 0.25 * steps.iter().cloned().fold(0.0, f64::max)
}

/// Part of the cell inside the annulus by sub-cell counting: the centroid of
/// the inside sub-cells (or the inside sub-cell nearest to it), its norm and the
/// inside fraction.
fn clip_cell(
    g: &CarnotGroup,
    x: &[f64],
    steps: &[f64],
    r_min: f64,
    r_max: f64,
) -> Option<(Vec<f64>, f64, f64)> {
    let d = x.len();
    let s = CLIP_SUBDIVISIONS;
    let counts = vec![s; d];
    let total: usize = counts.iter().product();
    let mut idx = vec![0usize; d];
    let mut y = vec![0.0; d];
    let mut inside: Vec<Vec<f64>> = Vec::new();
    for _ in 0..total {
        for k in 0..d {
            y[k] = x[k] + ((idx[k] as f64 + 0.5) / s as f64 - 0.5) * steps[k];
        }
        advance(&mut idx, &counts);
        let n = homogeneous_norm(g, &y);
        if n >= r_min && n <= r_max {
            inside.push(y.clone());
        }
    }
    if inside.is_empty() {
        return None;
    }
    let fraction = inside.len() as f64 / total as f64;
    let mut c = vec![0.0; d];
    for p in &inside {
        for k in 0..d {
            c[k] += p[k] / inside.len() as f64;
        }
    }
    let nc = homogeneous_norm(g, &c);
    if nc >= r_min && nc <= r_max {
        return Some((c, nc, fraction));
    }
    let dist = |p: &[f64]| {
        p.iter()
            .zip(&c)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let best = inside
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .unwrap()
        .clone();
    let nb = homogeneous_norm(g, &best);
    Some((best, nb, fraction))
}

/// Evaluate `f` at every node (in parallel) and sum `weight * value` in node
/// order.
pub fn integrate_with<M, F>(mesh: &M, f: F) -> Result<f64>
where
    M: NodeSet + Sync,
    F: Fn(usize, &[f64]) -> f64 + Sync,
{
    let values: Vec<f64> = (0..mesh.len())
        .into_par_iter()
        .map(|i| f(i, mesh.node(i)))
        .collect();
    let mut acc = 0.0;
    for (i, (v, w)) in values.iter().zip(mesh.weights()).enumerate() {
        if !v.is_finite() {
            return Err(Error::Evaluation { node: i, value: *v });
        }
        acc += w * v;
    }
    Ok(acc)
}

pub fn integrate<M: NodeSet + Sync>(mesh: &M, integrand: &ScalarField) -> Result<f64> {
    integrate_with(mesh, |_, x| integrand.value(x))
}

/// Volume of `{N <= 1}` by midpoint counting on a `resolution^n` grid over the
/// bounding box.
pub fn unit_ball_volume(g: &CarnotGroup, resolution: usize) -> Result<f64> {
    if resolution < 10 {
        return Err(invalid(format!(
            "resolution must be at least 10, got {resolution}"
        )));
    }
    let half = g.unit_ball_bounding_box();
    let d = half.len();
    let steps: Vec<f64> = half.iter().map(|w| 2.0 * w / resolution as f64).collect();
    let vol: f64 = steps.iter().product();
    // Parallel over the first axis, fixed-order reduction.
    let counts: Vec<usize> = (0..resolution)
        .into_par_iter()
        .map(|i0| {
            let mut x = vec![0.0; d];
            x[0] = -half[0] + (i0 as f64 + 0.5) * steps[0];
            let rest = &vec![resolution; d - 1];
            let mut idx = vec![0usize; d - 1];
            let total: usize = rest.iter().product();
            let mut inside = 0usize;
            for _ in 0..total {
                for k in 1..d {
                    x[k] = -half[k] + (idx[k - 1] as f64 + 0.5) * steps[k];
                }
                advance(&mut idx, rest);
                if homogeneous_norm(g, &x) <= 1.0 {
                    inside += 1;
                }
            }
            inside
        })
        .collect();
    Ok(counts.iter().sum::<usize>() as f64 * vol)
}

/// Volume of `{N <= 1}` in closed form.
///
/// Uses `int exp(-N^4) dx = |B| Gamma(Q/4 + 1)` and the product structure of
/// `N^4 = |v|^4 + kappa |z|^2`.
pub fn unit_ball_volume_exact(g: &CarnotGroup) -> f64 {
    let pi = std::f64::consts::PI;
    match g.kind() {
        GroupKind::Euclidean => {
            let n = g.ambient_dim() as f64;
            pi.powf(0.5 * n) / gamma(0.5 * n + 1.0)
        }
        _ => {
            let m = g.horizontal_dim() as f64;
            let k = (g.ambient_dim() - g.horizontal_dim()) as f64;
            let q = g.homogeneous_dimension() as f64;
            let horizontal = 2.0 * pi.powf(0.5 * m) / gamma(0.5 * m) * gamma(0.25 * m) / 4.0;
            let vertical = (pi / g.norm_kappa()).powf(0.5 * k);
            horizontal * vertical / gamma(0.25 * q + 1.0)
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pi = std::f64::consts::PI;
    for i in 0..n.div_ceil(2) {
        let mut x = (pi * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Number of halvings from `r_max` used when `r_min = 0`.
const ZERO_LIMIT_HALVINGS: i32 = 60;

/// Nodes and weights for `int_{r_min}^{r_max} f(r) dr` on panels
/// `[r_max 2^{-k-1}, r_max 2^{-k}]`, `order` Gauss points per panel.
pub fn graded_gauss_legendre(r_min: f64, r_max: f64, order: usize) -> Result<Vec<(f64, f64)>> {
    if !(r_min >= 0.0 && r_min < r_max && r_max.is_finite()) {
        return Err(invalid(format!(
            "need 0 <= r_min < r_max, got [{r_min}, {r_max}]"
        )));
    }
    if order == 0 {
        return Err(invalid("order must be positive"));
    }
    let (xs, ws) = gauss_legendre(order);
    let floor = if r_min > 0.0 {
        r_min
    } else {
        r_max * 2f64.powi(-ZERO_LIMIT_HALVINGS)
    };
    let mut edges = vec![r_max];
    while *edges.last().unwrap() > floor {
        let next = (edges.last().unwrap() * 0.5).max(floor);
        edges.push(next);
    }
    if r_min == 0.0 {
        edges.push(0.0);
    }
    edges.reverse();
    let mut out = Vec::with_capacity((edges.len() - 1) * order);
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (x, w) in xs.iter().zip(&ws) {
            out.push((mid + half * x, half * w));
        }
    }
    Ok(out)
}

/// `Q |B| int_{r_min}^{r_max} f(r) r^{Q-1} dr`, the integral of `f(N(x))` over
/// the annulus. `n_points` is the Gauss order per geometric panel; `r_min = 0`
/// is allowed.
pub fn radial_integrate(
    g: &CarnotGroup,
    radial_profile: impl Fn(f64) -> f64,
    r_min: f64,
    r_max: f64,
    n_points: usize,
) -> Result<f64> {
    let q = g.homogeneous_dimension() as f64;
    let nodes = graded_gauss_legendre(r_min, r_max, n_points)?;
    let sum: f64 = nodes
        .iter()
        .map(|&(r, w)| w * radial_profile(r) * r.powf(q - 1.0))
        .sum();
    Ok(q * unit_ball_volume_exact(g) * sum)
}

fn write_nodes_csv<M: NodeSet>(mesh: &M, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    let mut header: Vec<String> = (0..mesh.dim()).map(|k| format!("x{k}")).collect();
    header.push("weight".into());
    writeln!(out, "{}", header.join(","))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for i in 0..mesh.len() {
        let mut row: Vec<String> = mesh.node(i).iter().map(|c| format!("{c:e}")).collect();
        row.push(format!("{:e}", mesh.weights()[i]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
