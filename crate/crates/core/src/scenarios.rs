//! Initial data and formations for the reference experiments.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::integrator::IntegratorConfig;
use crate::model::{FormationSpec, Kernel, ModelParams, SwarmState};

/// Rejection radius for random clouds.
pub const MIN_SEPARATION: f64 = 0.1;
pub const DEFAULT_SEED: u64 = 1;

/// A fully specified experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub initial: SwarmState,
    pub formation: FormationSpec,
    pub params: ModelParams,
    pub cfg: IntegratorConfig,
    pub seed: Option<u64>,
    /// Target pattern, recentred to zero mean.
    pub waypoints: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Bird,
    Circle,
    LineCrossover,
    DegenerateSquare,
    Rings,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Bird,
        ScenarioKind::Circle,
        ScenarioKind::LineCrossover,
        ScenarioKind::DegenerateSquare,
        ScenarioKind::Rings,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Bird => "bird",
            ScenarioKind::Circle => "circle",
            ScenarioKind::LineCrossover => "line-crossover",
            ScenarioKind::DegenerateSquare => "degenerate-square",
            ScenarioKind::Rings => "rings",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            ScenarioKind::Bird => "2D, n = 10: V-shaped bird pattern aligned with the mean heading",
            ScenarioKind::Circle => "2D, n = 50: agents on a circle plus one at the centre",
            ScenarioKind::LineCrossover => "1D, n = 4: formation that forces the agents to cross",
            ScenarioKind::DegenerateSquare => "2D, n = 4: diagonal swap from the corners of a square",
            ScenarioKind::Rings => "3D, n = 50: five interlocking rings in the plane z = 0",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario `{s}`")))
    }
}

/// Knobs accepted by [`build`]; `None` means the scenario default.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScenarioOptions {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub radius: Option<f64>,
    pub kernel: Option<Kernel>,
    pub alpha: Option<f64>,
    pub swapped: Option<bool>,
}

pub fn build(kind: ScenarioKind, opts: &ScenarioOptions) -> Result<ScenarioSpec> {
    let seed = opts.seed.unwrap_or(DEFAULT_SEED);
    match kind {
        ScenarioKind::Bird => bird_scenario(opts.n.unwrap_or(10), seed),
        ScenarioKind::Circle => circle_scenario(opts.n.unwrap_or(50), opts.radius.unwrap_or(8.0), seed),
        ScenarioKind::LineCrossover => {
            line_crossover_scenario(opts.kernel.unwrap_or(Kernel::Singular), opts.alpha.unwrap_or(1.5))
        }
        ScenarioKind::DegenerateSquare => degenerate_square_scenario(opts.swapped.unwrap_or(false)),
        ScenarioKind::Rings => rings_scenario(opts.n.unwrap_or(50), seed),
    }
}

/// Gains shared by the planar and spatial pattern experiments.
pub fn reference_params() -> ModelParams {
    ModelParams {
        k: 10.0,
        m: 50.0,
        alpha: 1.1,
        beta: 0.5,
        kernel: Kernel::Singular,
    }
}

/// Offsets `z_i = p_i - p_{i+1}` that make the waypoints the target pattern.
pub fn formation_from_waypoints(points: &[Vec<f64>]) -> Result<FormationSpec> {
    if points.len() < 2 {
        return Err(Error::InvalidState("need at least two waypoints".into()));
    }
    let z: Vec<Vec<f64>> = points
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| a - b).collect())
        .collect();
    FormationSpec::from_vectors(&z)
}

/// Positions `x_0 = anchor`, `x_{i+1} = x_i - z_i`.
pub fn reconstruct(anchor: &[f64], spec: &FormationSpec) -> Vec<Vec<f64>> {
    let mut points = vec![anchor.to_vec()];
    for i in 0..spec.links() {
        let next = points[i].iter().zip(spec.offset(i)).map(|(p, z)| p - z).collect();
        points.push(next);
    }
    points
}

pub fn recentre(points: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|c| points.iter().map(|p| p[c]).sum::<f64>() / n).collect();
    for p in points.iter_mut() {
        for (c, m) in p.iter_mut().zip(&mean) {
            *c -= m;
        }
    }
}

/// Uniform positions in `[-half_width, half_width]^dim`, resampling any agent
/// that lands within [`MIN_SEPARATION`] of an earlier one.
fn random_cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, half_width: f64) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n);
    while points.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-half_width..half_width)).collect();
        if points.iter().all(|q| crate::model::distance(&p, q) >= MIN_SEPARATION) {
            points.push(p);
        }
    }
    points
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize, half_width: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-half_width..half_width)).collect())
        .collect()
}

/// Random velocities on the lattice `2^-20 Z` with an exactly zero sum, so the
/// mean velocity is `0` in floating point as well.
fn zero_mean_velocities(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    const SCALE: i64 = 1 << 20;
    let mut k: Vec<Vec<i64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-SCALE..=SCALE)).collect())
        .collect();
    for c in 0..dim {
        let sum: i64 = k.iter().map(|v| v[c]).sum();
        let share = sum.div_euclid(n as i64);
        let rest = sum.rem_euclid(n as i64);
        for (i, v) in k.iter_mut().enumerate() {
            v[c] -= share + i64::from((i as i64) < rest);
        }
    }
    k.into_iter()
        .map(|v| v.into_iter().map(|c| c as f64 / SCALE as f64).collect())
        .collect()
}

fn assemble(
    name: &str,
    x: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    formation: FormationSpec,
    params: ModelParams,
    t_end: f64,
    seed: Option<u64>,
    mut waypoints: Vec<Vec<f64>>,
) -> Result<ScenarioSpec> {
    let initial = SwarmState::from_vectors(0.0, &x, &v)?;
    formation.check_compatible(initial.n(), initial.dim(), &params.kernel)?;
    let cfg = IntegratorConfig::for_initial(&initial, t_end);
    recentre(&mut waypoints);
    Ok(ScenarioSpec {
        name: name.to_string(),
        initial,
        formation,
        params,
        cfg,
        seed,
        waypoints,
    })
}

/// Bird offsets for heading `theta`: the first half of the chain trails back
/// along one wing, the second half along the other.
pub fn bird_offsets(n: usize, theta: f64) -> FormationSpec {
    let dir = [2.0 * (theta - PI / 9.0).cos(), 2.0 * (theta - PI / 9.0).sin()];
    let z: Vec<Vec<f64>> = (1..n)
        .map(|i| {
            let sign = if i <= n / 2 { -1.0 } else { 1.0 };
            vec![sign * dir[0], sign * dir[1]]
        })
        .collect();
    FormationSpec::from_vectors(&z).expect("bird offsets are well formed")
}

/// Planar bird pattern, `n` agents in a random cloud with a random common heading.
pub fn bird_scenario(n: usize, seed: u64) -> Result<ScenarioSpec> {
    if n < 3 {
        return Err(Error::InvalidConfig("bird scenario needs n >= 3".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_cloud(&mut rng, n, 2, 5.0);
    let heading = rng.random_range(0.0..2.0 * PI);
    let drift = [heading.cos(), heading.sin()];
    let v: Vec<Vec<f64>> = random_vectors(&mut rng, n, 2, 1.0)
        .into_iter()
        .map(|p| vec![p[0] + drift[0], p[1] + drift[1]])
        .collect();
    let vc = crate::model::mean_vector(&v.concat(), 2);
    let theta = vc[1].atan2(vc[0]);
    let formation = bird_offsets(n, theta);
    let waypoints = reconstruct(&[0.0, 0.0], &formation);
    assemble("bird", x, v, formation, reference_params(), 200.0, Some(seed), waypoints)
}

/// `n - 1` rim points at angles `2 pi k / n`, `k = 1 .. n-1`, followed by the centre.
pub fn circle_waypoints(n: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = (1..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            vec![radius * a.cos(), radius * a.sin()]
        })
        .collect();
    points.push(vec![0.0, 0.0]);
    recentre(&mut points);
    points
}

pub fn circle_scenario(n: usize, radius: f64, seed: u64) -> Result<ScenarioSpec> {
    if n < 3 || !(radius > 0.0) {
        return Err(Error::InvalidConfig("circle scenario needs n >= 3 and radius > 0".into()));
    }
    let waypoints = circle_waypoints(n, radius);
    let formation = formation_from_waypoints(&waypoints)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_cloud(&mut rng, n, 2, 10.0);
    let v = random_vectors(&mut rng, n, 2, 1.0);
    assemble("circle", x, v, formation, reference_params(), 200.0, Some(seed), waypoints)
}

/// Four agents on a line whose target order is the reverse of the initial one.
pub fn line_crossover_scenario(kernel: Kernel, alpha: f64) -> Result<ScenarioSpec> {
    let params = ModelParams::new(10.0, 50.0, alpha, 0.5, kernel)?;
    let x: Vec<Vec<f64>> = vec![vec![0.5], vec![1.0], vec![1.5], vec![-1.0]];
    let v: Vec<Vec<f64>> = (1..=3)
        .map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 } * i as f64 / 4.0])
        .chain(std::iter::once(vec![1.0]))
        .collect();
    let formation = FormationSpec::new(1, vec![-2.0; 3])?;
    let waypoints = reconstruct(&[0.0], &formation);
    assemble("line-crossover", x, v, formation, params, LINE_CROSSOVER_HORIZON, None, waypoints)
}

/// Horizon of the crossover runs.
pub const LINE_CROSSOVER_HORIZON: f64 = 10.0;

/// Horizon of the unswapped square: by then the colliding pairs are within
/// `1e-4` and the alignment term is too stiff for explicit stepping.
pub const SQUARE_COLLAPSE_HORIZON: f64 = 8.0;

/// Agents at rest on the corners of a square, each asked to move to the
/// diagonally opposite corner (`x_i^inf = -x_i(0)`). The swapped variant
/// exchanges the starting corners of agents 3 and 4 before the targets are set.
pub fn degenerate_square_scenario(swapped: bool) -> Result<ScenarioSpec> {
    let params = ModelParams::new(60.0, 50.0, 1.1, 0.5, Kernel::Singular)?;
    let mut x = vec![vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, -1.0]];
    if swapped {
        x.swap(2, 3);
    }
    let v = vec![vec![0.0, 0.0]; 4];
    let waypoints: Vec<Vec<f64>> = x.iter().map(|p| p.iter().map(|c| -c).collect()).collect();
    let formation = formation_from_waypoints(&waypoints)?;
    let t_end = if swapped { 200.0 } else { SQUARE_COLLAPSE_HORIZON };
    assemble("degenerate-square", x, v, formation, params, t_end, None, waypoints)
}

/// Ring radius of the rings pattern.
pub const RING_RADIUS: f64 = 3.0;

/// Five interlocking rings in the plane `z = 0`, traversed left to right, each
/// sampled counterclockwise from its leftmost point.
pub fn rings_waypoints(n: usize, radius: f64) -> Vec<Vec<f64>> {
    // top row at y = 0, bottom row at y = -radius, alternating left to right
    let centres = [
        (-2.2 * radius, 0.0),
        (-1.1 * radius, -radius),
        (0.0, 0.0),
        (1.1 * radius, -radius),
        (2.2 * radius, 0.0),
    ];
    let mut points = Vec::with_capacity(n);
    for (ring, (cx, cy)) in centres.iter().enumerate() {
        let count = n / 5 + usize::from(ring < n % 5);
        for k in 0..count {
            let a = PI + 2.0 * PI * k as f64 / count as f64;
            points.push(vec![cx + radius * a.cos(), cy + radius * a.sin(), 0.0]);
        }
    }
    recentre(&mut points);
    points
}

pub fn rings_scenario(n: usize, seed: u64) -> Result<ScenarioSpec> {
    if n < 5 {
        return Err(Error::InvalidConfig("rings scenario needs n >= 5".into()));
    }
    let waypoints = rings_waypoints(n, RING_RADIUS);
    let formation = formation_from_waypoints(&waypoints)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_cloud(&mut rng, n, 3, 10.0);
    let v = zero_mean_velocities(&mut rng, n, 3);
    assemble("rings", x, v, formation, reference_params(), 200.0, Some(seed), waypoints)
}
