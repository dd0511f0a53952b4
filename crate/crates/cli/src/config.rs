//! JSON experiment configuration and command-line overrides.

use std::path::PathBuf;

use carnot_core::hardy::{hardy_constant, MeshSettings, SharpnessSettings};
use carnot_core::{
    BumpSpec, CarnotGroup, ConcentratingFamilySpec, EvolutionConfig, GridSpec, GroupDescriptor,
    PotentialKind, PotentialSpec, Route,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Verify,
    HardyScan,
    SigmaInf,
    Evolve,
    Refine,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::HardyScan => "hardy-scan",
            Command::SigmaInf => "sigma-inf",
            Command::Evolve => "evolve",
            Command::Refine => "refine",
        }
    }

    /// `p` used when neither the file nor the flags set one.
    fn default_p(self) -> f64 {
        match self {
            Command::Verify | Command::HardyScan => 2.0,
            Command::SigmaInf | Command::Evolve | Command::Refine => 1.7,
        }
    }
}

/// A coefficient given either as a number or as a multiple of the Hardy
/// constant, written `"2C"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coefficient {
    Absolute(f64),
    TimesHardy(f64),
}

impl Coefficient {
    pub fn parse(s: &str) -> Result<Self, String> {
        let t = s.trim();
        let (body, hardy) = match t.strip_suffix(['C', 'c']) {
            Some(b) => (b.trim(), true),
            None => (t, false),
        };
        let v: f64 = if hardy && body.is_empty() {
            1.0
        } else {
            body.parse()
                .map_err(|_| format!("cannot read coefficient {s:?}"))?
        };
        if !v.is_finite() {
            return Err(format!("coefficient {s:?} is not finite"));
        }
        Ok(if hardy {
            Coefficient::TimesHardy(v)
        } else {
            Coefficient::Absolute(v)
        })
    }

    pub fn resolve(self, g: &CarnotGroup, p: f64) -> CliResult<f64> {
        match self {
            Coefficient::Absolute(v) => Ok(v),
            Coefficient::TimesHardy(k) => {
                Ok(k * hardy_constant(g, p).map_err(CliError::field("potential.lambda"))?)
            }
        }
    }
}

impl Serialize for Coefficient {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Coefficient::Absolute(v) => s.serialize_f64(*v),
            Coefficient::TimesHardy(k) => s.serialize_str(&format!("{k}C")),
        }
    }
}

impl<'de> Deserialize<'de> for Coefficient {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Coefficient::Absolute(v)),
            Raw::Text(s) => Coefficient::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(default = "default_kind")]
    pub kind: PotentialKind,
    pub lambda: Coefficient,
    /// Oscillation amplitude as a multiple of `lambda`.
    #[serde(default)]
    pub beta_over_lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_kind() -> PotentialKind {
    PotentialKind::HardyPure
}

fn default_alpha() -> f64 {
    2.0
}

impl PotentialConfig {
    pub fn pure(lambda: Coefficient) -> Self {
        PotentialConfig {
            kind: PotentialKind::HardyPure,
            lambda,
            beta_over_lambda: 0.0,
            alpha: default_alpha(),
        }
    }

    pub fn resolve(&self, g: &CarnotGroup, p: f64) -> CliResult<PotentialSpec> {
        let lambda = self.lambda.resolve(g, p)?;
        let spec = match self.kind {
            PotentialKind::HardyPure => PotentialSpec::pure(lambda),
            PotentialKind::HardyOscillating => {
                PotentialSpec::oscillating(lambda, self.beta_over_lambda * lambda, self.alpha)
            }
        };
        spec.map_err(CliError::field("potential"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Random points per check.
    pub samples: usize,
    /// Random points for the second-order checks, which are costlier.
    pub fd_samples: usize,
    pub h: f64,
    /// Step for the first-order check of the closed-form norm gradient.
    pub gradient_h: f64,
    /// Exponents for the fundamental-solution check (those `>= Q` are skipped).
    pub fundamental_ps: Vec<f64>,
    pub fundamental_hs: Vec<f64>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            samples: 1000,
            fd_samples: 20,
            h: 1e-3,
            gradient_h: 1e-4,
            fundamental_ps: vec![1.5, 2.0, 3.0],
            fundamental_hs: vec![1e-2, 5e-3, 2.5e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub epsilons: Vec<f64>,
    #[serde(flatten)]
    pub settings: SharpnessSettings,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            settings: SharpnessSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub first_radius: f64,
    pub ratio: f64,
    pub count: usize,
    pub plateau_radius: f64,
    pub epsilon_margin: f64,
    pub route: Route,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            first_radius: 0.0025,
            ratio: 0.5,
            count: 12,
            plateau_radius: 0.02,
            epsilon_margin: carnot_core::hardy::DEFAULT_EPSILON_MARGIN,
            route: Route::Mesh(MeshSettings {
                r_min: 1e-300,
                shells_per_octave: 1,
                cells_per_dim: 16,
            }),
        }
    }
}

impl ProbeConfig {
    pub fn family(&self) -> CliResult<ConcentratingFamilySpec> {
        ConcentratingFamilySpec::geometric(
            self.first_radius,
            self.ratio,
            self.count,
            self.plateau_radius,
        )
        .map_err(CliError::field("probe"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSettings {
    pub grid: GridSpec,
    pub t_final: f64,
    pub eta: Option<f64>,
    pub d_max: Option<f64>,
    pub c_cap: f64,
    pub dt_safety: f64,
    pub u0: BumpSpec,
    pub record_interval: Option<f64>,
    pub blowup_factor: f64,
    /// Grids in a refinement study: `n, 2n, 4n, ...`.
    pub levels: usize,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        let base =
            EvolutionConfig::new(1.7, None, 2e-3).expect("default evolution parameters are valid");
        EvolutionSettings {
            grid: GridSpec::cube(0.5, 0.5, 32).expect("default grid is valid"),
            t_final: base.t_final,
            eta: base.eta,
            d_max: base.d_max,
            c_cap: base.c_cap,
            dt_safety: base.dt_safety,
            u0: base.u0,
            record_interval: base.record_interval,
            blowup_factor: base.blowup_factor,
            levels: 3,
        }
    }
}

/// Full description of one run. Every field has a default, so `{}` is a
/// valid file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default = "default_group")]
    pub group: GroupDescriptor,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    #[serde(default)]
    pub verify: VerifySettings,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub evolution: EvolutionSettings,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_group() -> GroupDescriptor {
    GroupDescriptor::Heisenberg {
        n: 1,
        norm_kappa: None,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config uses defaults")
    }
}

/// Values given on the command line; each replaces the file's value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub p: Option<f64>,
    pub lambda: Option<Coefficient>,
    pub grid: Option<(usize, usize)>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Parses `64` or `64x32` (`n_xy x n_ell`).
pub fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("cannot read grid {s:?}"))
    };
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("malformed config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fixes the command and applies flag overrides. `--grid` sets the
    /// parabolic grid for `evolve`/`refine` and the mesh cells per axis for
    /// mesh-route scans and probes.
    pub fn resolve(mut self, command: Command, o: &Overrides) -> CliResult<Self> {
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::Usage(format!(
                    "config is for `{}` but `{}` was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        self.command = Some(command);
        if let Some(p) = o.p {
            self.p = Some(p);
        }
        self.p.get_or_insert(command.default_p());
        if let Some(l) = o.lambda {
            match &mut self.potential {
                Some(pc) => pc.lambda = l,
                None => self.potential = Some(PotentialConfig::pure(l)),
            }
        }
        if let Some((nxy, nl)) = o.grid {
            match command {
                Command::Evolve | Command::Refine => {
                    self.evolution.grid.n_xy = nxy;
                    self.evolution.grid.n_ell = nl;
                }
                Command::HardyScan => set_cells(&mut self.scan.settings.route, nxy),
                Command::SigmaInf => set_cells(&mut self.probe.route, nxy),
                Command::Verify => {}
            }
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        Ok(self)
    }

    pub fn command(&self) -> Command {
        self.command.unwrap_or(Command::Verify)
    }

    pub fn p(&self) -> f64 {
        self.p.unwrap_or_else(|| self.command().default_p())
    }

    pub fn group(&self) -> CliResult<CarnotGroup> {
        CarnotGroup::from_descriptor(&self.group).map_err(CliError::field("group"))
    }

    /// The configured potential, or `default` when none is set.
    pub fn potential_or(&self, default: Coefficient) -> PotentialConfig {
        self.potential
            .clone()
            .unwrap_or(PotentialConfig::pure(default))
    }

    pub fn evolution_config(&self, g: &CarnotGroup) -> CliResult<EvolutionConfig> {
        // `lambda = 0` means no potential at all
        let potential = match &self.potential {
            Some(pc) if pc.lambda.resolve(g, self.p())? == 0.0 => None,
            Some(pc) => Some(pc.resolve(g, self.p())?),
            None => None,
        };
        let e = &self.evolution;
        let cfg = EvolutionConfig {
            p: self.p(),
            potential,
            eta: e.eta,
            d_max: e.d_max,
            c_cap: e.c_cap,
            dt_safety: e.dt_safety,
            t_final: e.t_final,
            u0: e.u0,
            record_interval: e.record_interval,
            blowup_factor: e.blowup_factor,
        };
        cfg.validate().map_err(CliError::field("evolution"))?;
        e.grid
            .validate()
            .map_err(CliError::field("evolution.grid"))?;
        Ok(cfg)
    }

    /// Compact JSON of the resolved configuration, recorded in every output.
    pub fn to_comment(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }
}

fn set_cells(route: &mut Route, cells: usize) {
    if let Route::Mesh(m) = route {
        m.cells_per_dim = cells;
    }
}
