//! Browser bindings: animate a scenario, print its certificate, sample the
//! interaction and control weights.

use wasm_bindgen::prelude::*;

use csform::diagnostics::{certify, DiagnosticsRecord};
use csform::integrator::{simulate_with, Termination};
use csform::io::cli::certificate_text;
use csform::model::{control_weight_phi, kernel_psi, phi_antiderivative};
use csform::scenarios::{build, ScenarioKind, ScenarioOptions, ScenarioSpec};
use csform::{Kernel, ModelParams, SwarmState};

/// Scenario names, one per line.
#[wasm_bindgen]
pub fn scenario_names() -> String {
    ScenarioKind::ALL.map(|k| k.name()).join("\n")
}

/// `[K, M, alpha, beta]` used by `scenario` unless overridden.
#[wasm_bindgen]
pub fn default_gains(scenario: &str) -> Result<Vec<f64>, String> {
    let kind: ScenarioKind = scenario.parse().map_err(|_| format!("unknown scenario `{scenario}`"))?;
    let p = build(kind, &ScenarioOptions::default()).map_err(|e| e.to_string())?.params;
    Ok(vec![p.k, p.m, p.alpha, p.beta])
}

/// A running simulation driven frame by frame from the page.
#[wasm_bindgen]
pub struct Demo {
    spec: ScenarioSpec,
    state: SwarmState,
    last: DiagnosticsRecord,
    termination: Option<Termination>,
    steps: usize,
}

#[wasm_bindgen]
impl Demo {
    /// Build `scenario` with the gains replaced by `k`, `m`, `alpha`, `beta`.
    #[wasm_bindgen(constructor)]
    pub fn new(scenario: &str, k: f64, m: f64, alpha: f64, beta: f64) -> Result<Demo, String> {
        let kind: ScenarioKind = scenario.parse().map_err(|_| format!("unknown scenario `{scenario}`"))?;
        let mut spec = build(kind, &ScenarioOptions::default()).map_err(|e| e.to_string())?;
        spec.params = ModelParams::new(k, m, alpha, beta, spec.params.kernel).map_err(|e| e.to_string())?;
        let last = csform::diagnostics::record(&spec.initial, &spec.params, &spec.formation).map_err(|e| e.to_string())?;
        Ok(Demo {
            state: spec.initial.clone(),
            spec,
            last,
            termination: None,
            steps: 0,
        })
    }

    /// Integrate for `duration` more time units. Does nothing once the run has
    /// stopped on a collision or a step-size floor.
    pub fn advance(&mut self, duration: f64) -> Result<(), String> {
        if self.termination.is_some_and(|t| t != Termination::Completed) {
            return Ok(());
        }
        let mut cfg = self.spec.cfg;
        cfg.t_end = duration;
        let mut latest = None;
        let (_, termination, stats) =
            simulate_with(&self.state, &self.spec.params, &self.spec.formation, &cfg, |s| latest = Some(s))
                .map_err(|e| e.to_string())?;
        let sample = latest.expect("the integrator always reports the final state");
        self.state = sample.state;
        self.last = sample.diagnostics;
        self.termination = Some(termination);
        self.steps += stats.accepted;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.state.n()
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Flat positions, `dim` entries per agent.
    pub fn positions(&self) -> Vec<f64> {
        self.state.positions().to_vec()
    }

    /// Target pattern translated to the current centre of mass.
    pub fn targets(&self) -> Vec<f64> {
        let centre = &self.last.x_c;
        self.spec
            .waypoints
            .iter()
            .flat_map(|p| p.iter().zip(centre).map(|(a, c)| a + c))
            .collect()
    }

    pub fn energy(&self) -> f64 {
        self.last.total_energy()
    }

    pub fn pattern_error(&self) -> f64 {
        self.last.pattern_error
    }

    pub fn v_diameter(&self) -> f64 {
        self.last.v_diameter
    }

    pub fn min_dist(&self) -> f64 {
        self.last.min_dist
    }

    /// `running`, `completed`, `collision` or `step-floor`.
    pub fn status(&self) -> String {
        match self.termination {
            None | Some(Termination::Completed) => "running",
            Some(Termination::Collision) => "collision",
            Some(Termination::StepFloor) => "step-floor",
        }
        .to_string()
    }

    /// Certificate for the initial data under the current gains.
    pub fn certificate(&self) -> Result<String, String> {
        let report = certify(&self.spec.initial, &self.spec.formation, &self.spec.params).map_err(|e| e.to_string())?;
        Ok(certificate_text(&report))
    }
}

/// Rows `[r, singular psi(r), regular psi(r), phi(r^2), Phi(r^2)]` for
/// `samples` radii in `(0, r_max]`, flattened.
#[wasm_bindgen]
pub fn weight_curves(alpha: f64, beta: f64, r_max: f64, samples: usize) -> Result<Vec<f64>, String> {
    if !(r_max > 0.0) || samples == 0 {
        return Err("need r_max > 0 and at least one sample".into());
    }
    let singular = ModelParams::new(1.0, 1.0, alpha, beta, Kernel::Singular).map_err(|e| e.to_string())?;
    let regular = ModelParams {
        kernel: Kernel::Regular,
        ..singular
    };
    let mut out = Vec::with_capacity(5 * samples);
    for i in 1..=samples {
        let r = r_max * i as f64 / samples as f64;
        let psi = kernel_psi(r, &singular).map_err(|e| e.to_string())?;
        let smooth = kernel_psi(r, &regular).map_err(|e| e.to_string())?;
        out.extend([r, psi, smooth, control_weight_phi(r * r, beta), phi_antiderivative(r * r, beta)]);
    }
    Ok(out)
}
