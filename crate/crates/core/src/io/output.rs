//! CSV trajectories and the run summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{asymptotic_summary, AsymptoticSummary, CertificateReport, DiagnosticsRecord};
use crate::integrator::{Event, EventKind, RunStats, Sample, Termination, Trajectory};

use super::config::{Format, ResolvedRun, RunConfig};
use super::RunError;

pub const STATES_FILE: &str = "states.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SUMMARY_FILE: &str = "summary.toml";

pub const DIAGNOSTICS_HEADER: &str = "t,E1,E2,D,v_diameter,x_diameter,min_dist,pattern_error";
pub const EVENTS_HEADER: &str = "t,kind,i,j,min_distance";

/// 17 significant digits: enough to round-trip any `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn states_header(n: usize, dim: usize) -> String {
    let mut cols = vec!["t".to_string()];
    for prefix in ["x", "v"] {
        for i in 0..n {
            for c in 0..dim {
                cols.push(format!("{prefix}_{i}_{c}"));
            }
        }
    }
    cols.join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub near_collision: usize,
    pub numerical_collision: usize,
    pub step_floor: usize,
}

impl EventCounts {
    pub fn tally(events: &[Event]) -> Self {
        let count = |kind| events.iter().filter(|e| e.kind == kind).count();
        Self {
            near_collision: count(EventKind::NearCollision),
            numerical_collision: count(EventKind::NumericalCollision),
            step_floor: count(EventKind::StepFloor),
        }
    }
}

/// Energy bookkeeping over every accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub e0: f64,
    pub e_final: f64,
    /// Trapezoid rule for the time integral of the dissipation rate.
    pub dissipated: f64,
    /// `|E0 - E_final - dissipated| / |E0 - E_final|`.
    pub identity_error: f64,
    /// Largest increase of `E1 + E2` between consecutive steps.
    pub max_increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalMetrics {
    pub t: f64,
    pub e1: f64,
    pub e2: f64,
    pub dissipation: f64,
    pub v_diameter: f64,
    pub x_diameter: f64,
    pub min_dist: f64,
    pub pattern_error: f64,
    pub v_c: Vec<f64>,
    pub x_c: Vec<f64>,
}

impl From<&DiagnosticsRecord> for TerminalMetrics {
    fn from(r: &DiagnosticsRecord) -> Self {
        Self {
            t: r.t,
            e1: r.e1,
            e2: r.e2,
            dissipation: r.dissipation,
            v_diameter: r.v_diameter,
            x_diameter: r.x_diameter,
            min_dist: r.min_dist,
            pattern_error: r.pattern_error,
            v_c: r.v_c.clone(),
            x_c: r.x_c.clone(),
        }
    }
}

/// Contents of `summary.toml`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub n: usize,
    pub dim: usize,
    pub termination: Termination,
    /// Smallest pairwise distance over all accepted steps.
    pub min_dist_overall: f64,
    pub stats: RunStats,
    pub events: EventCounts,
    pub terminal: TerminalMetrics,
    pub energy: EnergyAudit,
    pub asymptotic: Option<AsymptoticSummary>,
    pub certificate: CertificateReport,
    pub waypoints: Vec<Vec<f64>>,
    pub config: RunConfig,
}

struct CsvSink {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(dir: &Path, name: &str, header: &str) -> Result<Self, RunError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|source| RunError::Write {
            path: path.clone(),
            source,
        })?;
        let mut sink = Self {
            path,
            out: BufWriter::new(file),
        };
        sink.line(header)?;
        Ok(sink)
    }

    fn line(&mut self, text: &str) -> Result<(), RunError> {
        writeln!(self.out, "{text}").map_err(|source| RunError::Write {
            path: self.path.clone(),
            source,
        })
    }

    fn close(mut self) -> Result<(), RunError> {
        self.out.flush().map_err(|source| RunError::Write {
            path: self.path,
            source,
        })
    }
}

/// Streams samples to disk as they are produced.
///
/// Samples are thinned to every `cadence`-th accepted step; the final sample
/// is always written. I/O failures inside [`RunWriter::observe`] are held
/// back and reported by [`RunWriter::finish`].
pub struct RunWriter {
    dir: PathBuf,
    states: Option<CsvSink>,
    diagnostics: Option<CsvSink>,
    cadence: usize,
    seen: usize,
    pending: Option<Sample>,
    kept: Vec<DiagnosticsRecord>,
    first: Option<DiagnosticsRecord>,
    prev: Option<(f64, f64, f64)>,
    dissipated: f64,
    max_increase: f64,
    min_dist: f64,
    failure: Option<RunError>,
}

impl RunWriter {
    pub fn create(dir: &Path, n: usize, dim: usize, cadence: usize, csv: bool) -> Result<Self, RunError> {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let (states, diagnostics) = if csv {
            (
                Some(CsvSink::create(dir, STATES_FILE, &states_header(n, dim))?),
                Some(CsvSink::create(dir, DIAGNOSTICS_FILE, DIAGNOSTICS_HEADER)?),
            )
        } else {
            (None, None)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            states,
            diagnostics,
            cadence: cadence.max(1),
            seen: 0,
            pending: None,
            kept: Vec::new(),
            first: None,
            prev: None,
            dissipated: 0.0,
            max_increase: 0.0,
            min_dist: f64::INFINITY,
            failure: None,
        })
    }

    pub fn observe(&mut self, sample: Sample) {
        let d = &sample.diagnostics;
        let e = d.total_energy();
        if let Some((t, rate, energy)) = self.prev {
            self.dissipated += 0.5 * (d.t - t) * (rate + d.dissipation);
            self.max_increase = self.max_increase.max(e - energy);
        } else {
            self.first = Some(d.clone());
        }
        self.prev = Some((d.t, d.dissipation, e));
        self.min_dist = self.min_dist.min(d.min_dist);

        let due = self.seen % self.cadence == 0;
        self.seen += 1;
        if due {
            self.pending = None;
            self.write(&sample);
        } else {
            self.pending = Some(sample);
        }
    }

    fn write(&mut self, sample: &Sample) {
        if self.failure.is_some() {
            return;
        }
        self.kept.push(sample.diagnostics.clone());
        if let Err(e) = self.write_rows(sample) {
            self.failure = Some(e);
        }
    }

    fn write_rows(&mut self, sample: &Sample) -> Result<(), RunError> {
        if let Some(sink) = self.states.as_mut() {
            let s = &sample.state;
            let mut row = num(s.t);
            for &value in s.positions().iter().chain(s.velocities()) {
                row.push(',');
                row.push_str(&num(value));
            }
            sink.line(&row)?;
        }
        if let Some(sink) = self.diagnostics.as_mut() {
            let d = &sample.diagnostics;
            let row = [d.t, d.e1, d.e2, d.dissipation, d.v_diameter, d.x_diameter, d.min_dist, d.pattern_error]
                .map(num)
                .join(",");
            sink.line(&row)?;
        }
        Ok(())
    }

    /// Flush the last sample, write `events.csv` and `summary.toml`.
    pub fn finish(
        mut self,
        events: &[Event],
        termination: Termination,
        stats: RunStats,
        run: &ResolvedRun,
        certificate: CertificateReport,
    ) -> Result<RunSummary, RunError> {
        if let Some(last) = self.pending.take() {
            self.write(&last);
        }
        if let Some(e) = self.failure.take() {
            return Err(e);
        }
        for sink in [self.states.take(), self.diagnostics.take()].into_iter().flatten() {
            sink.close()?;
        }
        if run.writes(Format::Csv) {
            write_events(&self.dir, events)?;
        }

        let first = self.first.as_ref().ok_or_else(|| RunError::Numerical("run produced no samples".into()))?;
        let last = self.kept.last().expect("final sample is always kept");
        let e0 = first.total_energy();
        let e_final = last.total_energy();
        let drop = e0 - e_final;
        let identity_error = if drop != 0.0 {
            (drop - self.dissipated).abs() / drop.abs()
        } else {
            self.dissipated.abs()
        };
        let state = &run.scenario.initial;
        let summary = RunSummary {
            scenario: run.scenario.name.clone(),
            n: state.n(),
            dim: state.dim(),
            termination,
            min_dist_overall: self.min_dist,
            stats,
            events: EventCounts::tally(events),
            terminal: TerminalMetrics::from(last),
            energy: EnergyAudit {
                e0,
                e_final,
                dissipated: self.dissipated,
                identity_error,
                max_increase: self.max_increase,
            },
            asymptotic: asymptotic_summary(&self.kept),
            certificate,
            waypoints: run.scenario.waypoints.clone(),
            config: run.config.clone(),
        };
        if run.writes(Format::Summary) {
            write_summary(&self.dir.join(SUMMARY_FILE), &summary)?;
        }
        Ok(summary)
    }
}

pub fn write_events(dir: &Path, events: &[Event]) -> Result<(), RunError> {
    let mut sink = CsvSink::create(dir, EVENTS_FILE, EVENTS_HEADER)?;
    for e in events {
        let (i, j) = e
            .agents
            .map(|(i, j)| (i.to_string(), j.to_string()))
            .unwrap_or_default();
        sink.line(&format!("{},{},{i},{j},{}", num(e.t), e.kind.name(), num(e.min_distance)))?;
    }
    sink.close()
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<(), RunError> {
    let text = toml::to_string(summary).map_err(|e| RunError::Numerical(format!("summary not representable: {e}")))?;
    std::fs::write(path, text).map_err(|source| RunError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Write a finished in-memory trajectory.
pub fn write_trajectory(
    traj: &Trajectory,
    run: &ResolvedRun,
    certificate: CertificateReport,
) -> Result<RunSummary, RunError> {
    let state = &run.scenario.initial;
    let mut writer = RunWriter::create(&run.output_dir, state.n(), state.dim(), run.cadence, run.writes(Format::Csv))?;
    for sample in &traj.samples {
        writer.observe(sample.clone());
    }
    writer.finish(&traj.events, traj.termination, traj.stats, run, certificate)
}

/// The resolved configuration stored in a summary document.
pub fn summary_config(path: &Path) -> Result<RunConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut doc: toml::Table = toml::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
    let config = doc
        .remove("config")
        .ok_or_else(|| RunError::Config(format!("{}: no [config] table", path.display())))?;
    config
        .try_into()
        .map_err(|e: toml::de::Error| RunError::Config(format!("{}: {e}", path.display())))
}
