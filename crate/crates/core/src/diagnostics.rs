//! Energies, dissipation and the a-priori certificates for the controlled swarm.
//!
//! The total energy is `E = E1 + E2` with
//!
//! * `E1 = (1/4n) sum_{i,j} |v_i - v_j|^2` (velocity fluctuation),
//! * `E2 = (M/2) sum_i Phi(|x_i - x_{i+1} - z_i|^2)` (control potential),
//!
//! and along smooth solutions `dE/dt = -D` with
//! `D = (K/2n) sum_{i,j} psi(r_ij) |v_i - v_j|^2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    kernel_psi, link_residual, mean_vector, norm, norm_sq, phi_antiderivative,
    phi_antiderivative_inverse, phi_antiderivative_sup, FormationSpec, Kernel, ModelParams,
    SwarmState,
};

/// Per-sample diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Fluctuation kinetic energy `(1/4n) sum |v_i - v_j|^2`.
    pub e1: f64,
    /// Frame-dependent kinetic energy `(1/2) ||v||^2`.
    pub e1_half_norm: f64,
    pub e2: f64,
    pub dissipation: f64,
    pub v_diameter: f64,
    pub x_diameter: f64,
    pub min_dist: f64,
    pub pattern_error: f64,
    pub v_c: Vec<f64>,
    pub x_c: Vec<f64>,
}

impl DiagnosticsRecord {
    pub fn total_energy(&self) -> f64 {
        self.e1 + self.e2
    }
}

/// Both forms of the kinetic energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticEnergy {
    pub fluctuation: f64,
    pub half_norm: f64,
}

pub fn kinetic_energy(state: &SwarmState) -> KineticEnergy {
    let dim = state.dim();
    let v = state.velocities();
    let vc = mean_vector(v, dim);
    // (1/4n) sum_{i,j} |v_i - v_j|^2 == (1/2) sum_i |v_i - v_c|^2
    let fluctuation = 0.5
        * v.chunks_exact(dim)
            .map(|vi| vi.iter().zip(&vc).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>();
    KineticEnergy {
        fluctuation,
        half_norm: 0.5 * norm_sq(v),
    }
}

/// Per-link residuals `g_i = x_i - x_{i+1} - z_i` and the total `sum |g_i|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternResidual {
    pub links: Vec<Vec<f64>>,
    pub total: f64,
}

pub fn pattern_residual(state: &SwarmState, spec: &FormationSpec) -> PatternResidual {
    let dim = state.dim();
    let links: Vec<Vec<f64>> = (0..spec.links())
        .map(|i| {
            let mut g = vec![0.0; dim];
            link_residual(state.positions(), dim, spec, i, &mut g);
            g
        })
        .collect();
    let total = links.iter().map(|g| norm_sq(g)).sum();
    PatternResidual { links, total }
}

fn squared_link_residuals(state: &SwarmState, spec: &FormationSpec) -> Vec<f64> {
    let dim = state.dim();
    let mut g = vec![0.0; dim];
    (0..spec.links())
        .map(|i| {
            link_residual(state.positions(), dim, spec, i, &mut g);
            norm_sq(&g)
        })
        .collect()
}

/// Control potential `E2 = (M/2) sum_i Phi(|g_i|^2)`.
pub fn control_potential(state: &SwarmState, spec: &FormationSpec, m: f64, beta: f64) -> f64 {
    0.5 * m
        * squared_link_residuals(state, spec)
            .into_iter()
            .map(|a| phi_antiderivative(a, beta))
            .sum::<f64>()
}

/// Dissipation rate `D = (K/2n) sum_{i,j} psi(r_ij) |v_i - v_j|^2`.
pub fn dissipation(state: &SwarmState, params: &ModelParams) -> Result<f64> {
    let n = state.n();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = crate::model::distance(state.position(i), state.position(j));
            let w = kernel_psi(r, params).map_err(|_| Error::Overlap { i, j, r })?;
            let dv: f64 = state
                .velocity(i)
                .iter()
                .zip(state.velocity(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            sum += w * dv;
        }
    }
    Ok(params.k / n as f64 * sum)
}

fn diameter(flat: &[f64], dim: usize) -> f64 {
    let n = flat.len() / dim;
    let mut best = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.max(crate::model::distance(
                &flat[i * dim..(i + 1) * dim],
                &flat[j * dim..(j + 1) * dim],
            ));
        }
    }
    best
}

/// Evaluate every per-sample diagnostic for one state.
pub fn record(state: &SwarmState, params: &ModelParams, spec: &FormationSpec) -> Result<DiagnosticsRecord> {
    let ke = kinetic_energy(state);
    let (min_dist, _) = crate::integrator::min_pairwise_distance(state);
    Ok(DiagnosticsRecord {
        t: state.t,
        e1: ke.fluctuation,
        e1_half_norm: ke.half_norm,
        e2: control_potential(state, spec, params.m, params.beta),
        dissipation: dissipation(state, params)?,
        v_diameter: diameter(state.velocities(), state.dim()),
        x_diameter: diameter(state.positions(), state.dim()),
        min_dist,
        pattern_error: pattern_residual(state, spec).total,
        v_c: state.mean_velocity(),
        x_c: state.mean_position(),
    })
}

/// Initial energy budget `E0 = E1(0) + E2(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialEnergy {
    pub e0: f64,
    /// `2 sqrt(n E0)`, the uniform ceiling on `max |v_i - v_j|`.
    pub v_diameter_ceiling: f64,
}

pub fn initial_energy(initial: &SwarmState, spec: &FormationSpec, m: f64, beta: f64) -> InitialEnergy {
    let e0 = kinetic_energy(initial).fluctuation + control_potential(initial, spec, m, beta);
    InitialEnergy {
        e0,
        v_diameter_ceiling: 2.0 * (initial.n() as f64 * e0).sqrt(),
    }
}

/// Velocity-fluctuation budget `C0* = (1/2Mn) sum_{i,j} |v_i - v_j|^2`.
pub fn velocity_budget(initial: &SwarmState, m: f64) -> f64 {
    // (1/2Mn) sum_{i,j} |v_i - v_j|^2 == (2/M) E1
    2.0 * kinetic_energy(initial).fluctuation / m
}

/// Why [`solve_dm`] found no admissible root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum DmFailure {
    /// `beta > 1` and the energy budget exceeds what `Phi` can absorb.
    BudgetExceedsSupremum { budget: f64, capacity: f64 },
    /// The root of the energy balance lies below the largest initial link residual.
    BelowInitialResidual { root: f64, max_residual: f64 },
    /// `M = 0`: no control, no budget.
    NoControl,
}

impl std::fmt::Display for DmFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DmFailure::BudgetExceedsSupremum { budget, capacity } => write!(
                f,
                "velocity budget {budget:.6e} is not below the remaining control capacity {capacity:.6e}"
            ),
            DmFailure::BelowInitialResidual { root, max_residual } => write!(
                f,
                "energy-balance root {root:.6e} lies below the largest initial link residual {max_residual:.6e}"
            ),
            DmFailure::NoControl => write!(f, "control gain M is zero"),
        }
    }
}

/// Root of `sum_i (Phi(d^2) - Phi(a_i)) = C0*` as a function of `d >= 0`.
///
/// The sum is strictly increasing in `d`, so the root is unique when it exists.
/// Found by bracketed bisection followed by Newton polishing.
pub fn dm_equation_root(a: &[f64], budget: f64, beta: f64) -> Result<f64, DmFailure> {
    let links = a.len() as f64;
    let base: f64 = a.iter().map(|&ai| phi_antiderivative(ai, beta)).sum();
    if let Some(sup) = phi_antiderivative_sup(beta) {
        let capacity = links * sup - base;
        if !(capacity > budget) {
            return Err(DmFailure::BudgetExceedsSupremum { budget, capacity });
        }
    }
    let residual = |d: f64| links * phi_antiderivative(d * d, beta) - base - budget;

    let start = a.iter().copied().fold(0.0, f64::max).sqrt();
    let (mut lo, mut hi) = if residual(start) > 0.0 {
        (0.0, start)
    } else {
        let mut lo = start;
        let mut width = 10.0 + 10.0 * budget;
        let mut hi = start + width;
        while residual(hi) < 0.0 {
            lo = hi;
            width *= 2.0;
            hi = start + width;
        }
        (lo, hi)
    };

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * (1.0 + hi) {
            break;
        }
    }

    // Newton polish: d/dd [links * Phi(d^2)] = 2 d links phi(d^2)
    let mut d = 0.5 * (lo + hi);
    for _ in 0..50 {
        let f = residual(d);
        let slope = 2.0 * d * links * crate::model::control_weight_phi(d * d, beta);
        if slope <= 0.0 {
            break;
        }
        let next = (d - f / slope).clamp(lo, hi);
        if (next - d).abs() <= 1e-15 * (1.0 + d) {
            d = next;
            break;
        }
        d = next;
    }
    Ok(d)
}

/// Uniform bound `d_M` on the adjacent formation residuals.
///
/// Returns the root of the energy balance provided it dominates every initial
/// residual `sqrt(a_i)`; otherwise reports why no admissible value exists.
pub fn solve_dm(initial: &SwarmState, spec: &FormationSpec, m: f64, beta: f64) -> Result<f64, DmFailure> {
    if m <= 0.0 {
        return Err(DmFailure::NoControl);
    }
    let a = squared_link_residuals(initial, spec);
    let budget = velocity_budget(initial, m);
    let root = dm_equation_root(&a, budget, beta)?;
    let max_residual = a.iter().copied().fold(0.0, f64::max).sqrt();
    if root < max_residual * (1.0 - 1e-12) {
        return Err(DmFailure::BelowInitialResidual { root, max_residual });
    }
    Ok(root)
}

/// Bound that follows from `E2(t) <= E0` alone: every link satisfies
/// `Phi(|g_i(t)|^2) <= 2 E0 / M`.
pub fn energy_link_bound(initial: &SwarmState, spec: &FormationSpec, m: f64, beta: f64) -> Option<f64> {
    if m <= 0.0 {
        return None;
    }
    let e0 = initial_energy(initial, spec, m, beta).e0;
    phi_antiderivative_inverse(2.0 * e0 / m, beta).ok().map(f64::sqrt)
}

/// Verdict on the flocking hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlockingHypothesis {
    /// `beta <= 1`.
    pub holds_i: bool,
    /// `beta > 1` and the remaining control capacity exceeds the velocity budget.
    pub holds_ii: bool,
    /// Singular kernel with `alpha >= 1`, positive control gain and separated agents.
    pub applicable: bool,
    pub velocity_budget: f64,
    /// `sum_i int_{a_i}^inf phi`, only for `beta > 1`.
    pub capacity: Option<f64>,
}

impl FlockingHypothesis {
    pub fn holds(&self) -> bool {
        self.holds_i || self.holds_ii
    }
}

pub fn check_flocking_hypothesis(
    initial: &SwarmState,
    spec: &FormationSpec,
    params: &ModelParams,
) -> FlockingHypothesis {
    let beta = params.beta;
    let budget = if params.m > 0.0 {
        velocity_budget(initial, params.m)
    } else {
        f64::INFINITY
    };
    let capacity = (beta > 1.0).then(|| {
        squared_link_residuals(initial, spec)
            .into_iter()
            .map(|a| (1.0 + a).powf(1.0 - beta) / (beta - 1.0))
            .sum::<f64>()
    });
    let separated = crate::integrator::min_pairwise_distance(initial).0
        > params.kernel.singular_radius().unwrap_or(0.0);
    FlockingHypothesis {
        holds_i: beta <= 1.0,
        holds_ii: capacity.is_some_and(|c| c > budget),
        applicable: matches!(params.kernel, Kernel::Singular) && params.alpha >= 1.0 && params.m > 0.0 && separated,
        velocity_budget: budget,
        capacity,
    }
}

/// One pair of the explicit initial-data condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCondition {
    pub i: usize,
    pub j: usize,
    /// `|sum_{k=i}^{j-1} z_k|^2`
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryVerdict {
    pub velocity_budget: f64,
    /// `Phi^-1(C0*)`
    pub budget_preimage: f64,
    pub pairs: Vec<PairCondition>,
    pub overall: bool,
}

/// Explicit initial-data condition guaranteeing a positive minimal distance for
/// `beta in (0, 1)`. Returns `None` outside that range or when `M = 0`.
pub fn check_corollary(initial: &SwarmState, spec: &FormationSpec, m: f64, beta: f64) -> Option<CorollaryVerdict> {
    if !(beta > 0.0 && beta < 1.0) || m <= 0.0 {
        return None;
    }
    let budget = velocity_budget(initial, m);
    let preimage = phi_antiderivative_inverse(budget, beta).ok()?;
    let a = squared_link_residuals(initial, spec);
    let n = initial.n();
    let dim = initial.dim();
    let exponent = 2.0 - 1.0 / (1.0 - beta);
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let mut zsum = vec![0.0; dim];
        let mut residuals = 0.0;
        for j in (i + 1)..n {
            // extend the chain by link j - 1
            for (s, z) in zsum.iter_mut().zip(spec.offset(j - 1)) {
                *s += z;
            }
            residuals += a[j - 1];
            let gap = (j - i) as f64;
            let lhs = norm_sq(&zsum);
            let rhs = (gap / (gap + 1.0)).powf(exponent) * (gap + 1.0) * (preimage + residuals);
            pairs.push(PairCondition {
                i,
                j,
                lhs,
                rhs,
                holds: lhs > rhs,
            });
        }
    }
    let overall = pairs.iter().all(|p| p.holds);
    Some(CorollaryVerdict {
        velocity_budget: budget,
        budget_preimage: preimage,
        pairs,
        overall,
    })
}

/// Result of the chain Young inequality search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainYoung {
    pub delta: f64,
    /// `eps_1 .. eps_{n-1}`.
    pub eps: Vec<f64>,
}

impl ChainYoung {
    /// The contraction constant `delta^n`.
    pub fn contraction(&self) -> f64 {
        self.delta.powi(self.eps.len() as i32 + 1)
    }
}

fn young_sequence(delta: f64, links: usize) -> Option<Vec<f64>> {
    let mut eps = Vec::with_capacity(links);
    let first = 1.0 - delta;
    // eps_1 sits on the upper bound by construction: only the lower bound is strict
    if !((1.0 + delta) / 2.0 < first) {
        return None;
    }
    eps.push(first);
    for i in 2..=links {
        let di = delta.powi(i as i32);
        let e = 1.0 - di - 1.0 / (4.0 * eps[i - 2]);
        if !((1.0 + di) / 2.0 < e && e < 1.0 - di) {
            return None;
        }
        eps.push(e);
    }
    Some(eps)
}

/// Largest `delta` in `{1/4, 1/8, ...}` for which the Young-splitting sequence
/// `eps_1 = 1 - delta`, `eps_i = 1 - delta^i - 1/(4 eps_{i-1})` stays inside
/// `((1 + delta^i)/2, 1 - delta^i)`.
pub fn chain_young_delta(n: usize) -> ChainYoung {
    assert!(n >= 2, "chain needs at least two agents");
    let links = n - 1;
    let mut delta = 0.25;
    loop {
        if let Some(eps) = young_sequence(delta, links) {
            return ChainYoung { delta, eps };
        }
        delta *= 0.5;
        assert!(delta > 1e-30, "no admissible delta for n = {n}");
    }
}

/// Per-link and per-pair distance bounds implied by `d_M`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceBracket {
    /// `[max(0, |z_i| - d_M), |z_i| + d_M]` for each link.
    pub links: Vec<(f64, f64)>,
    /// `(i, j, |sum_{k=i}^{j-1} z_k| - (j - i) d_M)` for each pair.
    pub pair_lower: Vec<(usize, usize, f64)>,
    /// `n (max |z_k| + d_M)`
    pub c0: f64,
    /// `C0^-alpha`
    pub psi_m: f64,
}

pub fn distance_bracket(spec: &FormationSpec, d_m: f64, alpha: f64) -> DistanceBracket {
    let links = spec.links();
    let n = links + 1;
    let lengths: Vec<f64> = (0..links).map(|i| norm(spec.offset(i))).collect();
    let link_bounds = lengths
        .iter()
        .map(|&len| ((len - d_m).max(0.0), len + d_m))
        .collect();
    let mut pair_lower = Vec::with_capacity(n * links / 2);
    for i in 0..n {
        let mut zsum = vec![0.0; spec.dim()];
        for j in (i + 1)..n {
            for (s, z) in zsum.iter_mut().zip(spec.offset(j - 1)) {
                *s += z;
            }
            pair_lower.push((i, j, norm(&zsum) - (j - i) as f64 * d_m));
        }
    }
    let c0 = n as f64 * (lengths.iter().copied().fold(0.0, f64::max) + d_m);
    DistanceBracket {
        links: link_bounds,
        pair_lower,
        c0,
        psi_m: c0.powf(-alpha),
    }
}

/// All analytical conditions evaluated on initial data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub e0: f64,
    pub v_diameter_ceiling: f64,
    pub c0_star: f64,
    pub d_m: Option<f64>,
    pub d_m_failure: Option<DmFailure>,
    /// Root of the energy balance even when it is not an admissible `d_M`.
    pub d_m_equation_root: Option<f64>,
    pub energy_link_bound: Option<f64>,
    pub c0: Option<f64>,
    pub psi_m: Option<f64>,
    /// Capacity condition, only evaluated for `beta > 1`.
    pub apt_holds: Option<bool>,
    pub flocking: FlockingHypothesis,
    pub corollary: Option<CorollaryVerdict>,
    pub distance_bracket: Option<DistanceBracket>,
    pub chain_delta: f64,
}

pub fn certify(initial: &SwarmState, spec: &FormationSpec, params: &ModelParams) -> Result<CertificateReport> {
    spec.check_compatible(initial.n(), initial.dim(), &params.kernel)?;
    let energy = initial_energy(initial, spec, params.m, params.beta);
    let flocking = check_flocking_hypothesis(initial, spec, params);
    let dm = solve_dm(initial, spec, params.m, params.beta);
    let root = if params.m > 0.0 {
        dm_equation_root(
            &squared_link_residuals(initial, spec),
            velocity_budget(initial, params.m),
            params.beta,
        )
        .ok()
    } else {
        None
    };
    let bracket = dm.ok().map(|d| distance_bracket(spec, d, params.alpha));
    Ok(CertificateReport {
        e0: energy.e0,
        v_diameter_ceiling: energy.v_diameter_ceiling,
        c0_star: if params.m > 0.0 { velocity_budget(initial, params.m) } else { f64::INFINITY },
        d_m: dm.ok(),
        d_m_failure: dm.err(),
        d_m_equation_root: root,
        energy_link_bound: energy_link_bound(initial, spec, params.m, params.beta),
        c0: bracket.as_ref().map(|b| b.c0),
        psi_m: bracket.as_ref().map(|b| b.psi_m),
        apt_holds: (params.beta > 1.0).then_some(flocking.holds_ii),
        flocking,
        corollary: check_corollary(initial, spec, params.m, params.beta),
        distance_bracket: bracket,
        chain_delta: chain_young_delta(initial.n()).delta,
    })
}

/// Long-time behaviour read off a sampled run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticSummary {
    pub pattern_error_ratio: f64,
    pub v_diameter_ratio: f64,
    /// `v_diameter` fell below `1e-3` of its initial value.
    pub flocking_achieved: bool,
    /// Mean `|dE2/dt|` over the first and last tenth of the run.
    pub e2_rate_initial: f64,
    pub e2_rate_final: f64,
    pub min_dist_overall: f64,
    /// Running minimum distance decays monotonically toward zero over the last
    /// tenth of the run.
    pub suspected_asymptotic_collision: bool,
}

fn mean_abs_rate(records: &[DiagnosticsRecord], value: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    match (records.first(), records.last()) {
        (Some(a), Some(b)) if b.t > a.t => (value(b) - value(a)).abs() / (b.t - a.t),
        _ => 0.0,
    }
}

pub fn asymptotic_summary(records: &[DiagnosticsRecord]) -> Option<AsymptoticSummary> {
    let first = records.first()?;
    let last = records.last()?;
    let span = last.t - first.t;
    let head: Vec<_> = records.iter().filter(|r| r.t <= first.t + 0.1 * span).cloned().collect();
    let tail: Vec<_> = records.iter().filter(|r| r.t >= last.t - 0.1 * span).cloned().collect();
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let tail_decreasing = tail.windows(2).all(|w| w[1].min_dist <= w[0].min_dist);
    let min_dist_overall = records.iter().map(|r| r.min_dist).fold(f64::INFINITY, f64::min);
    Some(AsymptoticSummary {
        pattern_error_ratio: ratio(last.pattern_error, first.pattern_error),
        v_diameter_ratio: ratio(last.v_diameter, first.v_diameter),
        flocking_achieved: last.v_diameter < 1e-3 * first.v_diameter,
        e2_rate_initial: mean_abs_rate(&head, |r| r.e2),
        e2_rate_final: mean_abs_rate(&tail, |r| r.e2),
        min_dist_overall,
        suspected_asymptotic_collision: tail.len() > 2
            && tail_decreasing
            && last.min_dist < 1e-3 * first.min_dist,
    })
}
