//! Explicit solver for `u_t = div_H((|grad_H u|^2 + eta^2)^{(p-2)/2} grad_H u) + V u^{p-1}`
//! on a box in H¹ with zero Dirichlet data.
//!
//! The discrete gradient `G` uses central differences for `X = d_x + 2y d_l`
//! and `Y = d_y - 2x d_l` at interior nodes (boundary values are 0). The
//! divergence is the exact negative transpose of `G` with zero flux on
//! boundary nodes, so with `V = 0` a step is explicit Euler on the gradient
//! flow of the discrete regularized energy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{homogeneous_norm, norm_gradient_magnitude_unchecked};
use crate::error::{invalid, Error, Result};
use crate::group::CarnotGroup;
use crate::hardy::PotentialSpec;

/// Box `[-l_xy, l_xy]^2 x [-l_ell, l_ell]` with `n + 1` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub l_xy: f64,
    pub l_ell: f64,
    pub n_xy: usize,
    pub n_ell: usize,
}

impl GridSpec {
    pub fn new(l_xy: f64, l_ell: f64, n_xy: usize, n_ell: usize) -> Result<Self> {
        let g = GridSpec {
            l_xy,
            l_ell,
            n_xy,
            n_ell,
        };
        g.validate()?;
        Ok(g)
    }

    /// Cubic grid with `n` cells per axis.
    pub fn cube(l_xy: f64, l_ell: f64, n: usize) -> Result<Self> {
        Self::new(l_xy, l_ell, n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_xy > 0.0 && self.l_ell > 0.0) {
            return Err(invalid("grid half-widths must be positive"));
        }
        if self.n_xy < 8 || self.n_ell < 8 {
            return Err(invalid("grid counts must be at least 8"));
        }
        if self.n_xy % 2 == 1 || self.n_ell % 2 == 1 {
            return Err(invalid("grid counts must be even so the origin is a node"));
        }
        Ok(())
    }

    pub fn h_xy(&self) -> f64 {
        2.0 * self.l_xy / self.n_xy as f64
    }

    pub fn h_ell(&self) -> f64 {
        2.0 * self.l_ell / self.n_ell as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h_xy() * self.h_xy() * self.h_ell()
    }

    pub fn node_count(&self) -> usize {
        (self.n_xy + 1) * (self.n_xy + 1) * (self.n_ell + 1)
    }

    /// Same box, `factor` times as many cells per axis.
    pub fn refined(&self, factor: usize) -> Self {
        GridSpec {
            n_xy: self.n_xy * factor,
            n_ell: self.n_ell * factor,
            ..*self
        }
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.n_xy + 1) + j) * (self.n_ell + 1) + k
    }

    /// Coordinates of node `(i, j, k)`.
    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            -self.l_xy + i as f64 * self.h_xy(),
            -self.l_xy + j as f64 * self.h_xy(),
            -self.l_ell + k as f64 * self.h_ell(),
        ]
    }

    fn is_boundary(&self, i: usize, j: usize, k: usize) -> bool {
        i == 0 || j == 0 || k == 0 || i == self.n_xy || j == self.n_xy || k == self.n_ell
    }
}

/// `A exp(-1 / (1 - (N / R)^2))` for `N < R`, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub amplitude: f64,
    pub radius: f64,
}

impl Default for BumpSpec {
    fn default() -> Self {
        BumpSpec {
            amplitude: 1.0,
            radius: 0.24,
        }
    }
}

impl BumpSpec {
    pub fn value(&self, n: f64) -> f64 {
        let t = n / self.radius;
        if t >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - t * t)).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub p: f64,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
    /// Regulariser; `None` means `1e-3 A / R`.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Diffusivity cap; `None` means `eta^{p-2}`.
    #[serde(default)]
    pub d_max: Option<f64>,
    /// The potential is capped at its value on `N = c_cap h_xy`.
    #[serde(default = "default_c_cap")]
    pub c_cap: f64,
    #[serde(default = "default_dt_safety")]
    pub dt_safety: f64,
    pub t_final: f64,
    #[serde(default)]
    pub u0: BumpSpec,
    /// Model-time spacing of diagnostics records; `None` means `t_final / 20`.
    #[serde(default)]
    pub record_interval: Option<f64>,
    /// A run stops as diverged once `sup u > blowup_factor * sup u0`.
    #[serde(default = "default_blowup")]
    pub blowup_factor: f64,
}

fn default_c_cap() -> f64 {
    2.0
}

fn default_dt_safety() -> f64 {
    0.9
}

fn default_blowup() -> f64 {
    1e6
}

impl EvolutionConfig {
    pub fn new(p: f64, potential: Option<PotentialSpec>, t_final: f64) -> Result<Self> {
        let c = EvolutionConfig {
            p,
            potential,
            eta: None,
            d_max: None,
            c_cap: default_c_cap(),
            dt_safety: default_dt_safety(),
            t_final,
            u0: BumpSpec::default(),
            record_interval: None,
            blowup_factor: default_blowup(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p < 2.0) {
            return Err(invalid(format!("p must lie in (1, 2), got {}", self.p)));
        }
        if let Some(v) = &self.potential {
            v.validate()?;
        }
        if let Some(e) = self.eta {
            if !(e > 0.0) {
                return Err(invalid("eta must be positive"));
            }
        }
        if let Some(d) = self.d_max {
            if !(d > 0.0) {
                return Err(invalid("d_max must be positive"));
            }
        }
        if !(self.dt_safety > 0.0 && self.dt_safety < 1.0) {
            return Err(invalid("dt_safety must lie in (0, 1)"));
        }
        if !(self.c_cap > 0.0) {
            return Err(invalid("c_cap must be positive"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(invalid("t_final must be finite and nonnegative"));
        }
        if !(self.u0.amplitude >= 0.0 && self.u0.radius > 0.0) {
            return Err(invalid("bump needs amplitude >= 0 and radius > 0"));
        }
        if let Some(r) = self.record_interval {
            if !(r > 0.0) {
                return Err(invalid("record_interval must be positive"));
            }
        }
        if !(self.blowup_factor > 1.0) {
            return Err(invalid("blowup_factor must exceed 1"));
        }
        Ok(())
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or_else(|| {
            let a = if self.u0.amplitude > 0.0 {
                self.u0.amplitude
            } else {
                1.0
            };
            1e-3 * a / self.u0.radius
        })
    }

    pub fn d_max(&self) -> f64 {
        self.d_max.unwrap_or_else(|| self.eta().powf(self.p - 2.0))
    }

    /// `dt_safety min(h)^2 / (D_max (1 + 2 L_xy)^2 6)`; `(1 + 2 L_xy)` bounds
    /// the coefficient sum of `X` and `Y` on the box.
    pub fn dt(&self, grid: &GridSpec) -> f64 {
        let h = grid.h_xy().min(grid.h_ell());
        let coef = 1.0 + 2.0 * grid.l_xy;
        self.dt_safety * h * h / (self.d_max() * coef * coef * 6.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub time: f64,
    pub step: usize,
    pub u: Vec<f64>,
    /// Mass added by clipping negative values, accumulated over all steps.
    pub clipped_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub t: f64,
    pub mass: f64,
    pub sup: f64,
    pub energy: f64,
    pub clipped_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub records: Vec<Record>,
    /// `(step, time)` at which the run was declared divergent.
    pub divergence: Option<(usize, f64)>,
    pub steps: usize,
    pub dt: f64,
}

impl Diagnostics {
    pub fn last(&self) -> &Record {
        self.records
            .last()
            .expect("diagnostics always hold the initial record")
    }

    pub fn max_sup(&self) -> f64 {
        self.records.iter().map(|r| r.sup).fold(0.0, f64::max)
    }
}

pub const DIAGNOSTIC_COLUMNS: [&str; 5] = ["t", "mass", "sup", "energy", "clipped_mass"];

fn h1() -> CarnotGroup {
    CarnotGroup::heisenberg(1).expect("n = 1 is valid")
}

pub fn init_state(grid: &GridSpec, config: &EvolutionConfig) -> Result<EvolutionState> {
    grid.validate()?;
    config.validate()?;
    let r = config.u0.radius;
    if !(r < grid.l_xy.min(grid.l_ell) / 2.0) {
        return Err(invalid(format!(
            "bump radius {r} must be below min(l_xy, l_ell) / 2 = {}",
            grid.l_xy.min(grid.l_ell) / 2.0
        )));
    }
    let g = h1();
    let mut u = vec![0.0; grid.node_count()];
    for i in 0..=grid.n_xy {
        for j in 0..=grid.n_xy {
            for k in 0..=grid.n_ell {
                if grid.is_boundary(i, j, k) {
                    continue;
                }
                let x = grid.point(i, j, k);
                u[grid.index(i, j, k)] = config.u0.value(homogeneous_norm(&g, &x));
            }
        }
    }
    Ok(EvolutionState {
        time: 0.0,
        step: 0,
        u,
        clipped_mass: 0.0,
    })
}

/// Capped potential at every node: `V` evaluated with `N` replaced by
/// `max(N, c_cap h_xy)` in the radial parts, and 0 at the origin where the
/// direction of `grad_H N` is undefined.
pub fn capped_potential(grid: &GridSpec, config: &EvolutionConfig) -> Vec<f64> {
    let mut v = vec![0.0; grid.node_count()];
    let spec = match &config.potential {
        Some(s) => s,
        None => return v,
    };
    let g = h1();
    let cap = config.c_cap * grid.h_xy();
    for i in 0..=grid.n_xy {
        for j in 0..=grid.n_xy {
            for k in 0..=grid.n_ell {
                let x = grid.point(i, j, k);
                let n = homogeneous_norm(&g, &x);
                if n == 0.0 {
                    continue;
                }
                let nc = n.max(cap);
                let grad = norm_gradient_magnitude_unchecked(&g, &x, n);
                v[grid.index(i, j, k)] =
                    spec.radial_factor(nc) * grad.powf(config.p) / nc.powf(config.p);
            }
        }
    }
    v
}

pub fn discrete_mass(state: &EvolutionState, grid: &GridSpec) -> f64 {
    state.u.iter().sum::<f64>() * grid.cell_volume()
}

pub fn discrete_sup(state: &EvolutionState) -> f64 {
    state.u.iter().cloned().fold(0.0, f64::max)
}

/// Central-difference horizontal gradient at interior node `(i, j, k)`.
#[inline]
fn gradient_at(grid: &GridSpec, u: &[f64], i: usize, j: usize, k: usize) -> (f64, f64) {
    let (hx, hl) = (grid.h_xy(), grid.h_ell());
    let sj = grid.n_ell + 1;
    let si = (grid.n_xy + 1) * sj;
    let c = grid.index(i, j, k);
    let dx = (u[c + si] - u[c - si]) / (2.0 * hx);
    let dy = (u[c + sj] - u[c - sj]) / (2.0 * hx);
    let dl = (u[c + 1] - u[c - 1]) / (2.0 * hl);
    let x = -grid.l_xy + i as f64 * hx;
    let y = -grid.l_xy + j as f64 * hx;
    (dx + 2.0 * y * dl, dy - 2.0 * x * dl)
}

/// `int |grad_H u|^p` with the discrete gradient.
pub fn discrete_energy(state: &EvolutionState, grid: &GridSpec, p: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.n_xy {
        for j in 1..grid.n_xy {
            for k in 1..grid.n_ell {
                let (a, b) = gradient_at(grid, &state.u, i, j, k);
                acc += (a * a + b * b).sqrt().powf(p);
            }
        }
    }
    acc * grid.cell_volume()
}

/// Scratch buffers reused across steps.
#[derive(Debug, Clone, Default)]
pub struct Workspace {
    f1: Vec<f64>,
    f2: Vec<f64>,
    rhs: Vec<f64>,
}

impl Workspace {
    fn resize(&mut self, n: usize) {
        for v in [&mut self.f1, &mut self.f2, &mut self.rhs] {
            if v.len() != n {
                *v = vec![0.0; n];
            }
        }
    }
}

/// Per-node flux `D (Xu, Yu)` at interior nodes, zero on the boundary.
fn fluxes_into(
    grid: &GridSpec,
    config: &EvolutionConfig,
    u: &[f64],
    f1: &mut [f64],
    f2: &mut [f64],
) {
    let plane = (grid.n_xy + 1) * (grid.n_ell + 1);
    let (eta2, d_max, half_exp) = (config.eta().powi(2), config.d_max(), 0.5 * (config.p - 2.0));
    let hx = grid.h_xy();
    let (ihx, ihl) = (0.5 / hx, 0.5 / grid.h_ell());
    let (m, sj) = (grid.n_ell + 1, grid.n_ell + 1);
    let si = (grid.n_xy + 1) * sj;
    f1.par_chunks_mut(plane)
        .zip(f2.par_chunks_mut(plane))
        .enumerate()
        .for_each(|(i, (a, b))| {
            if i == 0 || i == grid.n_xy {
                a.iter_mut().for_each(|v| *v = 0.0);
                b.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            let x = -grid.l_xy + i as f64 * hx;
            for j in 0..=grid.n_xy {
                let row = j * (grid.n_ell + 1);
                if j == 0 || j == grid.n_xy {
                    a[row..row + grid.n_ell + 1]
                        .iter_mut()
                        .for_each(|v| *v = 0.0);
                    b[row..row + grid.n_ell + 1]
                        .iter_mut()
                        .for_each(|v| *v = 0.0);
                    continue;
                }
                a[row] = 0.0;
                b[row] = 0.0;
                a[row + grid.n_ell] = 0.0;
                b[row + grid.n_ell] = 0.0;
                let c0 = grid.index(i, j, 0);
                let (xp, xm) = (&u[c0 + si..c0 + si + m], &u[c0 - si..c0 - si + m]);
                let (yp, ym) = (&u[c0 + sj..c0 + sj + m], &u[c0 - sj..c0 - sj + m]);
                let mid = &u[c0..c0 + m];
                let y = -grid.l_xy + j as f64 * hx;
                let (ar, br) = (&mut a[row..row + m], &mut b[row..row + m]);
                for k in 1..grid.n_ell {
                    let dl = (mid[k + 1] - mid[k - 1]) * ihl;
                    let xu = (xp[k] - xm[k]) * ihx + 2.0 * y * dl;
                    let yu = (yp[k] - ym[k]) * ihx - 2.0 * x * dl;
                    let d = (half_exp * (xu * xu + yu * yu + eta2).ln())
                        .exp()
                        .min(d_max);
                    ar[k] = d * xu;
                    br[k] = d * yu;
                }
            }
        });
}

/// Right-hand side `div_H(flux) + V u^{p-1}` into `ws.rhs` (0 on the boundary).
fn rhs_into(
    grid: &GridSpec,
    config: &EvolutionConfig,
    potential: &[f64],
    u: &[f64],
    ws: &mut Workspace,
) {
    ws.resize(grid.node_count());
    let Workspace { f1, f2, rhs: out } = ws;
    fluxes_into(grid, config, u, f1, f2);
    let (f1, f2) = (&*f1, &*f2);
    let plane = (grid.n_xy + 1) * (grid.n_ell + 1);
    let (hx, hl) = (grid.h_xy(), grid.h_ell());
    let sj = grid.n_ell + 1;
    let si = (grid.n_xy + 1) * sj;
    let p = config.p;
    let (ihx, ihl) = (0.5 / hx, 0.5 / hl);
    out.par_chunks_mut(plane).enumerate().for_each(|(i, o)| {
        o.iter_mut().for_each(|v| *v = 0.0);
        if i == 0 || i == grid.n_xy {
            return;
        }
        let x = -grid.l_xy + i as f64 * hx;
        for j in 1..grid.n_xy {
            let y = -grid.l_xy + j as f64 * hx;
            let c0 = grid.index(i, j, 0);
            let m = sj;
            let (axp, axm) = (&f1[c0 + si..c0 + si + m], &f1[c0 - si..c0 - si + m]);
            let (byp, bym) = (&f2[c0 + sj..c0 + sj + m], &f2[c0 - sj..c0 - sj + m]);
            let (a, b) = (&f1[c0..c0 + m], &f2[c0..c0 + m]);
            let (ur, vr) = (&u[c0..c0 + m], &potential[c0..c0 + m]);
            let orow = &mut o[j * sj..j * sj + m];
            for k in 1..grid.n_ell {
                let div = (axp[k] - axm[k]) * ihx
                    + 2.0 * y * (a[k + 1] - a[k - 1]) * ihl
                    + (byp[k] - bym[k]) * ihx
                    - 2.0 * x * (b[k + 1] - b[k - 1]) * ihl;
                let reaction = if ur[k] > 0.0 && vr[k] != 0.0 {
                    vr[k] * ((p - 1.0) * ur[k].ln()).exp()
                } else {
                    0.0
                };
                orow[k] = div + reaction;
            }
        }
    });
}

/// Right-hand side `div_H(flux) + V u^{p-1}` at every node (0 on the boundary).
pub fn rhs(grid: &GridSpec, config: &EvolutionConfig, potential: &[f64], u: &[f64]) -> Vec<f64> {
    let mut ws = Workspace::default();
    rhs_into(grid, config, potential, u, &mut ws);
    ws.rhs
}

/// Advance `state` in place by one explicit Euler step.
pub fn step_in_place(
    state: &mut EvolutionState,
    grid: &GridSpec,
    config: &EvolutionConfig,
    potential: &[f64],
    dt: f64,
    ws: &mut Workspace,
) -> Result<()> {
    rhs_into(grid, config, potential, &state.u, ws);
    let mut clipped = 0.0;
    let mut finite = true;
    for (a, b) in state.u.iter_mut().zip(&ws.rhs) {
        let v = *a + dt * b;
        finite &= v.is_finite();
        if v < 0.0 {
            clipped -= v;
            *a = 0.0;
        } else {
            *a = v;
        }
    }
    state.time += dt;
    state.step += 1;
    state.clipped_mass += clipped * grid.cell_volume();
    if !finite {
        return Err(Error::Divergence {
            step: state.step,
            time: state.time,
        });
    }
    Ok(())
}

/// One explicit Euler step with the given `dt` and precomputed potential.
pub fn step_with(
    state: &EvolutionState,
    grid: &GridSpec,
    config: &EvolutionConfig,
    potential: &[f64],
    dt: f64,
) -> Result<EvolutionState> {
    let mut next = state.clone();
    step_in_place(
        &mut next,
        grid,
        config,
        potential,
        dt,
        &mut Workspace::default(),
    )?;
    Ok(next)
}

/// One step at the stability-bound `dt`.
pub fn step(
    state: &EvolutionState,
    grid: &GridSpec,
    config: &EvolutionConfig,
) -> Result<EvolutionState> {
    let v = capped_potential(grid, config);
    step_with(state, grid, config, &v, config.dt(grid))
}

fn record(state: &EvolutionState, grid: &GridSpec, p: f64) -> Record {
    Record {
        t: state.time,
        mass: discrete_mass(state, grid),
        sup: discrete_sup(state),
        energy: discrete_energy(state, grid, p),
        clipped_mass: state.clipped_mass,
    }
}

/// Step to `t_final` (the last step is shortened to land on it), recording
/// diagnostics every `record_interval`. Non-finite values or
/// `sup > blowup_factor * sup u0` end the run and are reported as divergence.
pub fn evolve(grid: &GridSpec, config: &EvolutionConfig) -> Result<Diagnostics> {
    let mut state = init_state(grid, config)?;
    let potential = capped_potential(grid, config);
    let dt = config.dt(grid);
    let interval = config.record_interval.unwrap_or(config.t_final / 20.0);
    let sup0 = discrete_sup(&state);
    let mut records = vec![record(&state, grid, config.p)];
    let mut divergence = None;
    let mut next_record = interval;
    let mut ws = Workspace::default();
    while state.time < config.t_final {
        let remaining = config.t_final - state.time;
        let this_dt = if remaining < dt * (1.0 + 1e-9) {
            remaining
        } else {
            dt
        };
        match step_in_place(&mut state, grid, config, &potential, this_dt, &mut ws) {
            Ok(()) => {}
            Err(Error::Divergence { step, time }) => {
                divergence = Some((step, time));
                break;
            }
            Err(e) => return Err(e),
        }
        let sup = discrete_sup(&state);
        if sup0 > 0.0 && sup > config.blowup_factor * sup0 {
            divergence = Some((state.step, state.time));
            records.push(record(&state, grid, config.p));
            break;
        }
        let done = state.time >= config.t_final;
        if interval > 0.0 && (state.time >= next_record * (1.0 - 1e-12) || done) {
            records.push(record(&state, grid, config.p));
            while next_record <= state.time * (1.0 + 1e-12) {
                next_record += interval;
            }
        }
    }
    Ok(Diagnostics {
        records,
        divergence,
        steps: state.step,
        dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementRow {
    pub n_xy: usize,
    pub h: f64,
    pub final_time: f64,
    pub final_mass: f64,
    pub final_sup: f64,
    pub diverged: bool,
}

pub const REFINEMENT_COLUMNS: [&str; 6] = [
    "n_xy",
    "h",
    "final_time",
    "final_mass",
    "final_sup",
    "diverged",
];

/// `evolve` on `base`, `2 base`, `4 base`, ... (`levels` grids).
pub fn refinement_study(
    base: &GridSpec,
    config: &EvolutionConfig,
    levels: usize,
) -> Result<Vec<RefinementRow>> {
    if levels < 2 {
        return Err(invalid("a refinement study needs at least 2 levels"));
    }
    (0..levels)
        .map(|l| {
            let grid = base.refined(1 << l);
            let d = evolve(&grid, config)?;
            let last = d.last();
            Ok(RefinementRow {
                n_xy: grid.n_xy,
                h: grid.h_xy(),
                final_time: last.t,
                final_mass: last.mass,
                final_sup: last.sup,
                diverged: d.divergence.is_some(),
            })
        })
        .collect()
}

impl RefinementRow {
    pub fn to_record(&self) -> Vec<f64> {
        vec![
            self.n_xy as f64,
            self.h,
            self.final_time,
            self.final_mass,
            self.final_sup,
            if self.diverged { 1.0 } else { 0.0 },
        ]
    }
}

impl Record {
    pub fn to_record(&self) -> Vec<f64> {
        vec![self.t, self.mass, self.sup, self.energy, self.clipped_mass]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardy::hardy_constant;

    fn grid(n: usize) -> GridSpec {
        GridSpec::cube(0.5, 0.5, n).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::cube(0.5, 0.5, 6).is_err());
        assert!(GridSpec::cube(0.5, 0.5, 9).is_err());
        assert!(GridSpec::cube(0.0, 0.5, 8).is_err());
        let g = grid(8);
        assert_eq!(g.point(4, 4, 4), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn initial_state() {
        let g = grid(16);
        let c = EvolutionConfig::new(1.7, None, 0.0).unwrap();
        let s = init_state(&g, &c).unwrap();
        assert!((discrete_sup(&s) - (-1f64).exp()).abs() < 1e-15);
        assert!(s.u.iter().all(|&v| v >= 0.0));
        let zero = EvolutionConfig {
            u0: BumpSpec {
                amplitude: 0.0,
                radius: 0.24,
            },
            ..c.clone()
        };
        let z = init_state(&g, &zero).unwrap();
        assert_eq!(discrete_mass(&z, &g), 0.0);
        assert_eq!(discrete_sup(&z), 0.0);
        let wide = EvolutionConfig {
            u0: BumpSpec {
                amplitude: 1.0,
                radius: 0.3,
            },
            ..c
        };
        assert!(init_state(&g, &wide).is_err());
    }

    #[test]
    fn mass_and_sup_of_uniform_values() {
        let g = grid(8);
        let mut s = init_state(&g, &EvolutionConfig::new(1.7, None, 0.0).unwrap()).unwrap();
        s.u.iter_mut().for_each(|v| *v = 0.0);
        for k in 1..4 {
            s.u[g.index(3, 3, k)] = 2.5;
        }
        assert!((discrete_mass(&s, &g) - 2.5 * 3.0 * g.cell_volume()).abs() < 1e-15);
        assert_eq!(discrete_sup(&s), 2.5);
    }

    #[test]
    fn zero_stays_zero() {
        let g = grid(8);
        let c = EvolutionConfig {
            u0: BumpSpec {
                amplitude: 0.0,
                radius: 0.2,
            },
            ..EvolutionConfig::new(1.7, None, 1e-3).unwrap()
        };
        let s = init_state(&g, &c).unwrap();
        let t = step(&s, &g, &c).unwrap();
        assert!(t.u.iter().all(|&v| v == 0.0));
    }

    /// Independent straight-line evaluation of one step.
    #[test]
    fn step_matches_direct_evaluation() {
        let g = grid(16);
        let grp = h1();
        let lam = hardy_constant(&grp, 1.7).unwrap();
        let c = EvolutionConfig::new(1.7, Some(PotentialSpec::pure(lam).unwrap()), 1e-3).unwrap();
        let s = init_state(&g, &c).unwrap();
        let next = step(&s, &g, &c).unwrap();
        let dt = c.dt(&g);
        let (h, hl) = (g.h_xy(), g.h_ell());
        let n = g.n_xy;
        let at = |i: usize, j: usize, k: usize| s.u[(i * (n + 1) + j) * (n + 1) + k];
        let grad = |i: usize, j: usize, k: usize| -> (f64, f64) {
            if i == 0 || j == 0 || k == 0 || i == n || j == n || k == n {
                return (0.0, 0.0);
            }
            let x = -0.5 + i as f64 * h;
            let y = -0.5 + j as f64 * h;
            let dx = (at(i + 1, j, k) - at(i - 1, j, k)) / (2.0 * h);
            let dy = (at(i, j + 1, k) - at(i, j - 1, k)) / (2.0 * h);
            let dl = (at(i, j, k + 1) - at(i, j, k - 1)) / (2.0 * hl);
            let (a, b) = (dx + 2.0 * y * dl, dy - 2.0 * x * dl);
            let eta = 1e-3 / 0.24;
            let d = (a * a + b * b + eta * eta).powf(-0.15);
            (d * a, d * b)
        };
        let mut worst: f64 = 0.0;
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    let x = -0.5 + i as f64 * h;
                    let y = -0.5 + j as f64 * h;
                    let div = (grad(i + 1, j, k).0 - grad(i - 1, j, k).0) / (2.0 * h)
                        + 2.0 * y * (grad(i, j, k + 1).0 - grad(i, j, k - 1).0) / (2.0 * hl)
                        + (grad(i, j + 1, k).1 - grad(i, j - 1, k).1) / (2.0 * h)
                        - 2.0 * x * (grad(i, j, k + 1).1 - grad(i, j, k - 1).1) / (2.0 * hl);
                    let pt = [x, y, -0.5 + k as f64 * hl];
                    let nn = homogeneous_norm(&grp, &pt);
                    let v = if nn == 0.0 {
                        0.0
                    } else {
                        let z2 = x * x + y * y;
                        let weight = (z2.sqrt() / nn).powf(1.7);
                        lam * weight / nn.max(2.0 * h).powf(1.7)
                    };
                    let u = at(i, j, k);
                    let expect = (u + dt * (div + v * u.powf(0.7))).max(0.0);
                    worst = worst.max((expect - next.u[(i * (n + 1) + j) * (n + 1) + k]).abs());
                }
            }
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn mass_and_energy_decrease_without_potential() {
        // 16 cells leave the bump one node thick in l; clipping then adds ~1e-6
        let g = grid(32);
        let c = EvolutionConfig {
            record_interval: Some(1e-4),
            ..EvolutionConfig::new(1.7, None, 1e-3).unwrap()
        };
        let d = evolve(&g, &c).unwrap();
        assert!(d.divergence.is_none());
        for w in d.records.windows(2) {
            assert!(w[1].t > w[0].t);
            assert!(w[1].mass <= w[0].mass + 1e-8, "{w:?}");
            assert!(w[1].energy <= w[0].energy + 1e-8, "{w:?}");
        }
        assert!((d.last().t - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn dt_scales_with_cap() {
        let g = grid(16);
        let c = EvolutionConfig::new(1.7, None, 1e-3).unwrap();
        let c2 = EvolutionConfig {
            d_max: Some(2.0 * c.d_max()),
            ..c.clone()
        };
        assert!((c.dt(&g) / c2.dt(&g) - 2.0).abs() < 1e-12);
    }
}
