//! Run configuration documents.
//!
//! A configuration is a flat TOML document. Either `scenario` names one of the
//! built-in experiments, or the initial data is given inline through `x`, `v`
//! and `z` (one array per agent or link). Every other key overrides a default.
//!
//! ```toml
//! scenario = "line-crossover"
//! kernel = "regular"
//! alpha = 0.5
//! t_end = 5.0
//! cadence = 10
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::integrator::{default_near_collision_eps, min_pairwise_distance, IntegratorConfig, Method};
use crate::model::{FormationSpec, Kernel, ModelParams, SwarmState};
use crate::scenarios::{self, ScenarioKind, ScenarioOptions, ScenarioSpec};

use super::RunError;

/// Environment variable that replaces the default output root `runs`.
pub const OUTPUT_ROOT_ENV: &str = "CSFORM_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Singular,
    Regular,
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Summary,
}

/// A configuration document. `None` means "use the default".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swapped: Option<bool>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelName>,
    /// Shift of the `shifted` kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collision_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_collision_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Write every `cadence`-th accepted step (the final state is always written).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<Format>>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<Vec<f64>>>,
}

/// Everything needed to execute a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub scenario: ScenarioSpec,
    pub output_dir: PathBuf,
    pub cadence: usize,
    pub formats: Vec<Format>,
    /// The configuration with every default made explicit.
    pub config: RunConfig,
}

impl ResolvedRun {
    pub fn writes(&self, format: Format) -> bool {
        self.formats.contains(&format)
    }
}

/// Parse a configuration document; defaults stay unresolved.
///
/// A run summary is accepted too: its `[config]` table is used.
pub fn parse_config(text: &str) -> Result<RunConfig, RunError> {
    if let Ok(mut doc) = text.parse::<toml::Table>() {
        if let Some(toml::Value::Table(config)) = doc.remove("config") {
            return config.try_into().map_err(|e: toml::de::Error| RunError::Config(e.to_string()));
        }
    }
    toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        RunError::Config(msg) => RunError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

fn config_error(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl RunConfig {
    /// Copy every key that is set in `other` over `self`.
    pub fn merge(&mut self, other: RunConfig) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            scenario, n, seed, radius, swapped, kernel, delta, alpha, beta, k, m, method, dt_init, rel_tol,
            abs_tol, dt_min, collision_eps, near_collision_eps, t_end, output_dir, cadence, formats, x, v, z
        );
    }

    fn kernel(&self, fallback: Kernel) -> Result<Kernel, RunError> {
        match (self.kernel, self.delta) {
            (None, None) => Ok(fallback),
            (None, Some(delta)) => match fallback {
                Kernel::ShiftedSingular { .. } => Ok(Kernel::ShiftedSingular { delta }),
                _ => Err(config_error("`delta` only applies to kernel = \"shifted\"")),
            },
            (Some(KernelName::Singular), None) => Ok(Kernel::Singular),
            (Some(KernelName::Regular), None) => Ok(Kernel::Regular),
            (Some(KernelName::Shifted), Some(delta)) => Ok(Kernel::ShiftedSingular { delta }),
            (Some(KernelName::Shifted), None) => Err(config_error("kernel = \"shifted\" needs `delta`")),
            (Some(_), Some(_)) => Err(config_error("`delta` only applies to kernel = \"shifted\"")),
        }
    }

    fn build_scenario(&self) -> Result<ScenarioSpec, RunError> {
        let inline = self.x.is_some() || self.v.is_some() || self.z.is_some();
        match (&self.scenario, inline) {
            (Some(_), true) => Err(config_error("give either `scenario` or inline `x`/`v`/`z`, not both")),
            (None, false) => Err(config_error("missing `scenario` (or inline `x`, `v` and `z`)")),
            (Some(name), false) => {
                let kind: ScenarioKind = name
                    .parse()
                    .map_err(|_| config_error(format!("unknown scenario `{name}` (see `csform list-scenarios`)")))?;
                let opts = ScenarioOptions {
                    n: self.n,
                    seed: self.seed,
                    radius: self.radius,
                    kernel: Some(self.kernel(Kernel::Singular)?),
                    alpha: self.alpha,
                    swapped: self.swapped,
                };
                Ok(scenarios::build(kind, &opts)?)
            }
            (None, true) => {
                for (key, set) in [("n", self.n.is_some()), ("seed", self.seed.is_some()), ("radius", self.radius.is_some()), ("swapped", self.swapped.is_some())] {
                    if set {
                        return Err(config_error(format!("`{key}` only applies to named scenarios")));
                    }
                }
                let (Some(x), Some(v), Some(z)) = (&self.x, &self.v, &self.z) else {
                    return Err(config_error("inline scenarios need all of `x`, `v` and `z`"));
                };
                let initial = SwarmState::from_vectors(0.0, x, v)?;
                let formation = FormationSpec::from_vectors(z)?;
                let mut waypoints = scenarios::reconstruct(&vec![0.0; formation.dim()], &formation);
                scenarios::recentre(&mut waypoints);
                let cfg = IntegratorConfig::for_initial(&initial, 200.0);
                Ok(ScenarioSpec {
                    name: "inline".into(),
                    initial,
                    formation,
                    params: scenarios::reference_params(),
                    cfg,
                    seed: None,
                    waypoints,
                })
            }
        }
    }

    /// Build the scenario, apply every override and fill in the defaults.
    pub fn resolve(&self) -> Result<ResolvedRun, RunError> {
        let mut spec = self.build_scenario()?;
        let p = &mut spec.params;
        p.kernel = self.kernel(p.kernel)?;
        p.alpha = self.alpha.unwrap_or(p.alpha);
        p.beta = self.beta.unwrap_or(p.beta);
        p.k = self.k.unwrap_or(p.k);
        p.m = self.m.unwrap_or(p.m);
        *p = ModelParams::new(p.k, p.m, p.alpha, p.beta, p.kernel)?;
        spec.formation
            .check_compatible(spec.initial.n(), spec.initial.dim(), &spec.params.kernel)?;

        let c = &mut spec.cfg;
        c.method = self.method.unwrap_or(c.method);
        c.dt_init = self.dt_init.unwrap_or(c.dt_init);
        c.rel_tol = self.rel_tol.unwrap_or(c.rel_tol);
        c.abs_tol = self.abs_tol.unwrap_or(c.abs_tol);
        c.dt_min = self.dt_min.unwrap_or(c.dt_min);
        c.collision_eps = self.collision_eps.unwrap_or(c.collision_eps);
        c.near_collision_eps = self
            .near_collision_eps
            .unwrap_or_else(|| default_near_collision_eps(min_pairwise_distance(&spec.initial).0));
        c.t_end = self.t_end.unwrap_or(c.t_end);
        c.validate()?;

        let cadence = self.cadence.unwrap_or(1);
        if cadence == 0 {
            return Err(config_error("`cadence` must be at least 1"));
        }
        let formats = self.formats.clone().unwrap_or_else(|| vec![Format::Csv, Format::Summary]);
        let output_dir = self
            .output_dir
            .clone()
            .unwrap_or_else(|| output_root().join(&spec.name));

        let config = self.explicit(&spec, &output_dir, cadence, &formats);
        Ok(ResolvedRun {
            scenario: spec,
            output_dir,
            cadence,
            formats,
            config,
        })
    }

    /// The same document with every default written out.
    fn explicit(&self, spec: &ScenarioSpec, output_dir: &Path, cadence: usize, formats: &[Format]) -> RunConfig {
        let p = &spec.params;
        let c = &spec.cfg;
        let (kernel, delta) = match p.kernel {
            Kernel::Singular => (KernelName::Singular, None),
            Kernel::Regular => (KernelName::Regular, None),
            Kernel::ShiftedSingular { delta } => (KernelName::Shifted, Some(delta)),
        };
        let named = self.scenario.is_some();
        RunConfig {
            scenario: self.scenario.clone(),
            n: named.then(|| spec.initial.n()),
            seed: spec.seed,
            radius: self.radius,
            swapped: self.swapped,
            kernel: Some(kernel),
            delta,
            alpha: Some(p.alpha),
            beta: Some(p.beta),
            k: Some(p.k),
            m: Some(p.m),
            method: Some(c.method),
            dt_init: Some(c.dt_init),
            rel_tol: Some(c.rel_tol),
            abs_tol: Some(c.abs_tol),
            dt_min: Some(c.dt_min),
            collision_eps: Some(c.collision_eps),
            near_collision_eps: Some(c.near_collision_eps),
            t_end: Some(c.t_end),
            output_dir: Some(output_dir.to_path_buf()),
            cadence: Some(cadence),
            formats: Some(formats.to_vec()),
            x: self.x.clone(),
            v: self.v.clone(),
            z: self.z.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
