//! Scenario configuration: TOML schema, per-scenario defaults and validation.
//!
//! Every section is optional in the input file. [`parse_config`] fills the
//! gaps from the scenario defaults, validates the result by constructing the
//! core objects, and returns a [`ScenarioConfig`] whose serialized form is
//! itself a complete, re-parseable config.

use std::fmt;
use std::path::Path;

use edlab_core::hydro::{SolverOptions, Splitting};
use edlab_core::{Boundary, PhysicalConstants, SpatialGrid};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SEED_ENV: &str = "EDLAB_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FreePacket,
    HarmonicOscillator,
    ArrowOfTime,
    ClassicalLimit,
    Custom,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::FreePacket,
        Scenario::HarmonicOscillator,
        Scenario::ArrowOfTime,
        Scenario::ClassicalLimit,
        Scenario::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::FreePacket => "free_packet",
            Scenario::HarmonicOscillator => "harmonic_oscillator",
            Scenario::ArrowOfTime => "arrow_of_time",
            Scenario::ClassicalLimit => "classical_limit",
            Scenario::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
            HarnessError::config(format!("unknown scenario `{name}`, expected one of {}", names.join(", ")))
        })
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Periodic,
    Reflecting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// Gaussian density with a plane-wave phase `k0 x`.
    Gaussian,
    /// Discrete ground state of the configured potential.
    HarmonicGround,
    /// `rho ~ 1 + amplitude cos(2 pi u)`, `S = entropy_amplitude sin(2 pi u)`,
    /// `u = (x - x_min) / L`.
    Modulated,
    /// Nodal values of `rho` and `S`.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Free,
    Harmonic,
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Strang,
    Rk4,
}

// Raw input: everything optional, unknown keys rejected.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    #[serde(default)]
    constants: RawConstants,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    potential: RawPotential,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    ensemble: RawEnsemble,
    #[serde(default)]
    outputs: RawOutputs,
    #[serde(default)]
    tolerances: Tolerances,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    sigma2: Option<f64>,
    tau: Option<f64>,
    eta: Option<f64>,
    mass: Option<f64>,
    mass_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    x_min: Option<f64>,
    x_max: Option<f64>,
    n: Option<usize>,
    boundary: Option<BoundaryKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Option<InitialKind>,
    s0: Option<f64>,
    k0: Option<f64>,
    x0: Option<f64>,
    amplitude: Option<f64>,
    entropy_amplitude: Option<f64>,
    rho: Option<Vec<f64>>,
    entropy: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    kind: Option<PotentialKind>,
    omega: Option<f64>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: Option<f64>,
    steps: Option<usize>,
    scheme: Option<SchemeKind>,
    vacuum_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    walkers: Option<usize>,
    seed: Option<u64>,
    substeps: Option<usize>,
    dump_walkers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    dir: Option<String>,
    snapshots: Option<usize>,
}

/// Pass/fail thresholds. A metric is checked only when its tolerance is set;
/// setting one the scenario cannot compute is a configuration error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Max L2 distance between coupled-field and Crank–Nicolson densities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fields_vs_schrodinger_l2: Option<f64>,
    /// Max relative error of the field variance against the closed-form law.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_rel_error: Option<f64>,
    /// Max relative energy drift over all steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_drift: Option<f64>,
    /// Max L-infinity change of the density from its initial value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_drift: Option<f64>,
    /// Max deviation of the initial energy from the closed-form value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_vs_oracle: Option<f64>,
    /// Max L1 distance between the walker histogram and the CK density.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble_vs_ck_l1: Option<f64>,
    /// Max L1 distance between the CK density and the coupled-field density.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ck_vs_fields_l1: Option<f64>,
    /// Max residual of the reverse-composition identity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reverse_identity: Option<f64>,
    /// Min forward/reverse asymmetry for the nonuniform state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymmetry_min: Option<f64>,
    /// Max asymmetry for the uniform control state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uniform_asymmetry: Option<f64>,
    /// Max relative error of the fluctuation-variance ratio against the mass factor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fluctuation_ratio_error: Option<f64>,
    /// Max deviation of the mean trajectory from the classical path, per unit travel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_tracking_error: Option<f64>,
    /// Max Hamilton–Jacobi residual of the classical solution.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hj_residual: Option<f64>,
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, Option<f64>); 13] {
        [
            ("fields_vs_schrodinger_l2", self.fields_vs_schrodinger_l2),
            ("variance_rel_error", self.variance_rel_error),
            ("energy_drift", self.energy_drift),
            ("density_drift", self.density_drift),
            ("energy_vs_oracle", self.energy_vs_oracle),
            ("ensemble_vs_ck_l1", self.ensemble_vs_ck_l1),
            ("ck_vs_fields_l1", self.ck_vs_fields_l1),
            ("reverse_identity", self.reverse_identity),
            ("asymmetry_min", self.asymmetry_min),
            ("uniform_asymmetry", self.uniform_asymmetry),
            ("fluctuation_ratio_error", self.fluctuation_ratio_error),
            ("mean_tracking_error", self.mean_tracking_error),
            ("hj_residual", self.hj_residual),
        ]
    }

    fn overlay(&mut self, user: &Tolerances) {
        macro_rules! take {
            ($($f:ident),*) => { $( if user.$f.is_some() { self.$f = user.$f; } )* };
        }
        take!(
            fields_vs_schrodinger_l2,
            variance_rel_error,
            energy_drift,
            density_drift,
            energy_vs_oracle,
            ensemble_vs_ck_l1,
            ck_vs_fields_l1,
            reverse_identity,
            asymmetry_min,
            uniform_asymmetry,
            fluctuation_ratio_error,
            mean_tracking_error,
            hj_residual
        );
    }
}

// Resolved config: every value concrete.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub constants: ConstantsSpec,
    pub grid: GridSpec,
    pub initial: InitialSpec,
    pub potential: PotentialSpec,
    pub time: TimeSpec,
    pub ensemble: EnsembleSpec,
    pub outputs: OutputSpec,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsSpec {
    pub sigma2: f64,
    pub tau: f64,
    pub eta: f64,
    pub mass: f64,
    /// Mass factor applied on top of the four constants.
    pub mass_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub boundary: BoundaryKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub s0: f64,
    pub k0: f64,
    pub x0: f64,
    pub amplitude: f64,
    pub entropy_amplitude: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rho: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub entropy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub omega: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSpec {
    pub dt: f64,
    pub steps: usize,
    pub scheme: SchemeKind,
    pub vacuum_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub walkers: usize,
    pub seed: u64,
    /// Field steps per walker / kernel step.
    pub substeps: usize,
    /// Number of walkers whose paths are written out.
    pub dump_walkers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSpec {
    pub dir: String,
    pub snapshots: usize,
}

impl ScenarioConfig {
    /// Resolved physical constants, including the mass scale.
    pub fn physical_constants(&self) -> PhysicalConstants {
        let c = &self.constants;
        PhysicalConstants::new(c.sigma2, c.tau, c.eta)
            .and_then(|p| p.with_mass_scaled(c.mass_scale))
            .expect("validated constants")
    }

    /// Constants before the mass scale is applied.
    pub fn base_constants(&self) -> PhysicalConstants {
        let c = &self.constants;
        PhysicalConstants::new(c.sigma2, c.tau, c.eta).expect("validated constants")
    }

    pub fn spatial_grid(&self) -> SpatialGrid {
        self.grid.build().expect("validated grid")
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            vacuum_threshold: self.time.vacuum_threshold,
            scheme: match self.time.scheme {
                SchemeKind::Strang => Splitting::Strang,
                SchemeKind::Rk4 => Splitting::Rk4,
            },
        }
    }

    /// Step of the walker ensemble and the kernel iteration.
    pub fn coarse_dt(&self) -> f64 {
        self.time.dt * self.ensemble.substeps as f64
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

impl GridSpec {
    fn build(&self) -> edlab_core::Result<SpatialGrid> {
        let boundary = match self.boundary {
            BoundaryKind::Periodic => Boundary::Periodic,
            BoundaryKind::Reflecting => Boundary::Reflecting,
        };
        SpatialGrid::new(self.x_min, self.x_max, self.n, boundary)
    }
}

/// Command-line overrides applied before defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
}

pub fn parse_config(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config_str(&text, overrides)
        .map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
}

pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::config(e.to_string().trim_end()))?;
    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(v.trim().parse::<u64>().map_err(|_| {
            HarnessError::config(format!("{SEED_ENV} must be a non-negative integer, got `{v}`"))
        })?),
        Err(_) => None,
    };
    resolve(raw, overrides, env_seed)
}

fn resolve(raw: RawConfig, ov: &Overrides, env_seed: Option<u64>) -> Result<ScenarioConfig> {
    let scenario = ov
        .scenario
        .or(raw.scenario)
        .ok_or_else(|| HarnessError::config("missing key `scenario`"))?;
    let d = Defaults::of(scenario);

    let rc = &raw.constants;
    let base = PhysicalConstants::resolve(rc.sigma2, rc.tau, rc.eta, rc.mass).map_err(HarnessError::from_core_config)?;
    let constants = ConstantsSpec {
        sigma2: base.sigma2(),
        tau: base.tau(),
        eta: base.eta(),
        mass: base.mass(),
        mass_scale: rc.mass_scale.unwrap_or(d.mass_scale),
    };

    let grid = GridSpec {
        x_min: raw.grid.x_min.unwrap_or(d.grid.x_min),
        x_max: raw.grid.x_max.unwrap_or(d.grid.x_max),
        n: raw.grid.n.unwrap_or(d.grid.n),
        boundary: raw.grid.boundary.unwrap_or(d.grid.boundary),
    };

    let ri = raw.initial;
    let initial = InitialSpec {
        kind: ri.kind.unwrap_or(d.initial.kind),
        s0: ri.s0.unwrap_or(d.initial.s0),
        k0: ri.k0.unwrap_or(d.initial.k0),
        x0: ri.x0.unwrap_or(d.initial.x0),
        amplitude: ri.amplitude.unwrap_or(d.initial.amplitude),
        entropy_amplitude: ri.entropy_amplitude.unwrap_or(d.initial.entropy_amplitude),
        rho: ri.rho.unwrap_or_default(),
        entropy: ri.entropy.unwrap_or_default(),
    };

    let rp = raw.potential;
    let potential = PotentialSpec {
        kind: rp.kind.unwrap_or(d.potential.kind),
        omega: rp.omega.unwrap_or(d.potential.omega),
        values: rp.values.unwrap_or_default(),
    };

    let time = TimeSpec {
        dt: raw.time.dt.unwrap_or(d.time.dt),
        steps: raw.time.steps.unwrap_or(d.time.steps),
        scheme: raw.time.scheme.unwrap_or(SchemeKind::Strang),
        vacuum_threshold: raw.time.vacuum_threshold.unwrap_or(SolverOptions::default().vacuum_threshold),
    };

    let ensemble = EnsembleSpec {
        walkers: raw.ensemble.walkers.unwrap_or(d.ensemble.walkers),
        seed: ov.seed.or(raw.ensemble.seed).or(env_seed).unwrap_or(0),
        substeps: raw.ensemble.substeps.unwrap_or(d.ensemble.substeps),
        dump_walkers: raw.ensemble.dump_walkers.unwrap_or(0),
    };

    let outputs = OutputSpec {
        dir: ov.out_dir.clone().or(raw.outputs.dir).unwrap_or_else(|| format!("out/{}", scenario.name())),
        snapshots: raw.outputs.snapshots.unwrap_or(10),
    };

    let user_tolerances = raw.tolerances;
    let mut cfg = ScenarioConfig {
        scenario,
        constants,
        grid,
        initial,
        potential,
        time,
        ensemble,
        outputs,
        tolerances: Tolerances::default(),
    };
    cfg.tolerances = default_tolerances(&cfg);
    cfg.tolerances.overlay(&user_tolerances);
    validate(&cfg)?;
    Ok(cfg)
}

struct Defaults {
    mass_scale: f64,
    grid: GridSpec,
    initial: InitialSpec,
    potential: PotentialSpec,
    time: TimeSpec,
    ensemble: EnsembleSpec,
}

impl Defaults {
    fn of(s: Scenario) -> Self {
        let gaussian = |s0: f64, k0: f64| InitialSpec {
            kind: InitialKind::Gaussian,
            s0,
            k0,
            x0: 0.0,
            amplitude: 0.5,
            entropy_amplitude: 1.0,
            rho: Vec::new(),
            entropy: Vec::new(),
        };
        let free = PotentialSpec { kind: PotentialKind::Free, omega: 1.0, values: Vec::new() };
        let time = |dt: f64, steps: usize| TimeSpec {
            dt,
            steps,
            scheme: SchemeKind::Strang,
            vacuum_threshold: SolverOptions::default().vacuum_threshold,
        };
        let ensemble = |walkers: usize, substeps: usize| EnsembleSpec { walkers, seed: 0, substeps, dump_walkers: 0 };
        let periodic = |x_min: f64, x_max: f64, n: usize| GridSpec { x_min, x_max, n, boundary: BoundaryKind::Periodic };
        match s {
            Scenario::FreePacket | Scenario::Custom => Defaults {
                mass_scale: 1.0,
                grid: periodic(-20.0, 20.0, 1024),
                initial: gaussian(0.5, 0.0),
                potential: free,
                time: time(1e-3, 2000),
                ensemble: ensemble(100_000, 10),
            },
            Scenario::HarmonicOscillator => Defaults {
                mass_scale: 1.0,
                grid: periodic(-10.0, 10.0, 512),
                initial: InitialSpec { kind: InitialKind::HarmonicGround, ..gaussian(1.0, 0.0) },
                potential: PotentialSpec { kind: PotentialKind::Harmonic, ..free },
                time: time(1e-3, 2000),
                ensemble: ensemble(20_000, 10),
            },
            Scenario::ArrowOfTime => Defaults {
                mass_scale: 1.0,
                grid: periodic(0.0, 1.0, 256),
                initial: InitialSpec { kind: InitialKind::Modulated, ..gaussian(1.0, 0.0) },
                potential: free,
                time: time(1e-3, 10),
                ensemble: ensemble(0, 1),
            },
            Scenario::ClassicalLimit => Defaults {
                mass_scale: 100.0,
                grid: periodic(-4.0, 6.0, 2048),
                // k0 = m v0 / eta for v0 = 1 at the scaled mass.
                initial: gaussian(0.5, 100.0),
                potential: free,
                time: time(1e-3, 1000),
                ensemble: ensemble(100_000, 10),
            },
        }
    }
}

/// Statistical bound for a histogram over `bins` cells from `walkers` samples.
pub fn histogram_bound(bins: usize, walkers: usize) -> f64 {
    5.0 * (bins as f64 / walkers as f64).sqrt()
}

fn default_tolerances(cfg: &ScenarioConfig) -> Tolerances {
    let mut t = Tolerances::default();
    let with_walkers = cfg.ensemble.walkers > 0;
    match cfg.scenario {
        Scenario::FreePacket => {
            t.fields_vs_schrodinger_l2 = Some(1e-3);
            t.variance_rel_error = Some(5e-3);
            if with_walkers {
                t.ensemble_vs_ck_l1 = Some(histogram_bound(cfg.grid.n, cfg.ensemble.walkers));
                t.ck_vs_fields_l1 = Some(2e-2);
            }
        }
        Scenario::HarmonicOscillator => {
            t.energy_drift = Some(1e-6);
            t.density_drift = Some(1e-6);
            t.energy_vs_oracle = Some(1e-4);
        }
        Scenario::ArrowOfTime => {
            t.reverse_identity = Some(1e-10);
            t.asymmetry_min = Some(1e-3);
            t.uniform_asymmetry = Some(1e-12);
        }
        Scenario::ClassicalLimit => {
            t.fluctuation_ratio_error = Some(5e-2);
            t.mean_tracking_error = Some(1e-2);
            t.hj_residual = Some(1e-8);
        }
        Scenario::Custom => {}
    }
    t
}

/// Metrics each scenario can compute.
fn supported_metrics(cfg: &ScenarioConfig) -> Vec<&'static str> {
    let mut m = Vec::new();
    let fields = cfg.scenario != Scenario::ArrowOfTime;
    if fields {
        m.extend(["fields_vs_schrodinger_l2", "energy_drift", "density_drift"]);
        if cfg.ensemble.walkers > 0 {
            m.extend(["ensemble_vs_ck_l1", "ck_vs_fields_l1"]);
        }
    }
    if is_free_gaussian(cfg) {
        m.push("variance_rel_error");
    }
    if has_energy_oracle(cfg) {
        m.push("energy_vs_oracle");
    }
    match cfg.scenario {
        Scenario::ArrowOfTime => m.extend(["reverse_identity", "asymmetry_min", "uniform_asymmetry"]),
        Scenario::ClassicalLimit => m.extend(["fluctuation_ratio_error", "mean_tracking_error", "hj_residual"]),
        _ => {}
    }
    m
}

/// Whether the closed-form free-packet spreading law applies.
pub fn is_free_gaussian(cfg: &ScenarioConfig) -> bool {
    cfg.scenario != Scenario::ArrowOfTime
        && cfg.initial.kind == InitialKind::Gaussian
        && cfg.potential.kind == PotentialKind::Free
}

/// Whether the initial energy has a closed form.
pub fn has_energy_oracle(cfg: &ScenarioConfig) -> bool {
    cfg.scenario != Scenario::ArrowOfTime
        && matches!(cfg.initial.kind, InitialKind::Gaussian | InitialKind::HarmonicGround)
        && (cfg.initial.kind == InitialKind::HarmonicGround) == (cfg.potential.kind == PotentialKind::Harmonic)
}

fn validate(cfg: &ScenarioConfig) -> Result<()> {
    let bad = |msg: String| Err(HarnessError::config(msg));
    if !(cfg.constants.mass_scale.is_finite() && cfg.constants.mass_scale > 0.0) {
        return bad(format!("constants.mass_scale must be positive, got {}", cfg.constants.mass_scale));
    }
    let grid = cfg.grid.build().map_err(HarnessError::from_core_config)?;
    let n = grid.len();

    let i = &cfg.initial;
    match i.kind {
        InitialKind::Gaussian => {
            if !(i.s0.is_finite() && i.s0 > 0.0 && i.k0.is_finite() && i.x0.is_finite()) {
                return bad(format!("initial gaussian needs s0 > 0 and finite k0, x0 (s0 = {})", i.s0));
            }
        }
        InitialKind::HarmonicGround => {
            if cfg.potential.kind != PotentialKind::Harmonic {
                return bad("initial.kind = \"harmonic_ground\" requires potential.kind = \"harmonic\"".into());
            }
        }
        InitialKind::Modulated => {
            if !(i.amplitude.abs() < 1.0 && i.entropy_amplitude.is_finite()) {
                return bad(format!("initial.amplitude must lie in (-1, 1), got {}", i.amplitude));
            }
        }
        InitialKind::Tabulated => {
            if i.rho.len() != n || i.entropy.len() != n {
                return bad(format!(
                    "tabulated initial state needs {n} values of rho and entropy, got {} and {}",
                    i.rho.len(),
                    i.entropy.len()
                ));
            }
        }
    }
    if i.kind != InitialKind::Tabulated && !(i.rho.is_empty() && i.entropy.is_empty()) {
        return bad("initial.rho and initial.entropy are only used with kind = \"tabulated\"".into());
    }

    match cfg.scenario {
        Scenario::ArrowOfTime if !matches!(i.kind, InitialKind::Modulated | InitialKind::Tabulated) => {
            return bad("arrow_of_time needs initial.kind = \"modulated\" or \"tabulated\"".into());
        }
        Scenario::ClassicalLimit
            if i.kind != InitialKind::Gaussian || cfg.potential.kind != PotentialKind::Free || i.k0 == 0.0 =>
        {
            return bad("classical_limit needs a moving gaussian (k0 != 0) in a free potential".into());
        }
        _ => {}
    }

    let p = &cfg.potential;
    match p.kind {
        PotentialKind::Free => {}
        PotentialKind::Harmonic => {
            if !(p.omega.is_finite() && p.omega > 0.0) {
                return bad(format!("potential.omega must be positive, got {}", p.omega));
            }
        }
        PotentialKind::Tabulated => {
            if p.values.len() != n {
                return bad(format!("tabulated potential needs {n} values, got {}", p.values.len()));
            }
        }
    }
    if !p.values.is_empty() && p.kind != PotentialKind::Tabulated {
        return bad("potential.values is only used with kind = \"tabulated\"".into());
    }

    let t = &cfg.time;
    if !(t.dt.is_finite() && t.dt > 0.0) {
        return bad(format!("time.dt must be positive, got {}", t.dt));
    }
    if t.steps == 0 {
        return bad("time.steps must be at least 1".into());
    }
    let e = &cfg.ensemble;
    if e.substeps == 0 || t.steps % e.substeps != 0 {
        return bad(format!("time.steps ({}) must be a positive multiple of ensemble.substeps ({})", t.steps, e.substeps));
    }
    if e.dump_walkers > e.walkers {
        return bad(format!("ensemble.dump_walkers ({}) exceeds ensemble.walkers ({})", e.dump_walkers, e.walkers));
    }
    if cfg.scenario == Scenario::ClassicalLimit && e.walkers < 2 {
        return bad("classical_limit needs at least 2 walkers".into());
    }
    if !(t.vacuum_threshold > 0.0 && t.vacuum_threshold < 1.0) {
        return bad(format!("time.vacuum_threshold must lie in (0, 1), got {}", t.vacuum_threshold));
    }

    let supported = supported_metrics(cfg);
    for (name, value) in cfg.tolerances.entries() {
        if let Some(v) = value {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("tolerances.{name} must be finite and non-negative, got {v}"));
            }
            if !supported.contains(&name) {
                return bad(format!("tolerances.{name} is not computed by scenario `{}` with this setup", cfg.scenario));
            }
        }
    }
    Ok(())
}
