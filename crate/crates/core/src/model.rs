//! Right-hand side of the controlled swarm.
//!
//! Each agent follows
//!
//! ```text
//! dx_i/dt = v_i
//! dv_i/dt = (K/n) sum_j psi(|x_j - x_i|) (v_j - v_i) + M u_i
//! ```
//!
//! where `psi` is the (possibly singular) alignment kernel and `u_i` is the
//! decentralized chain control that only looks at the neighbours `i - 1` and
//! `i + 1` through the formation offsets `z`.
//!
//! States are stored flat: agent `i` owns the slice `[i * dim, (i + 1) * dim)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this distance from 1 the control-weight antiderivative switches to the
/// logarithmic branch.
const LOG_BRANCH_WIDTH: f64 = 1e-9;

/// Positions and velocities of `n` agents in `dim` dimensions at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub t: f64,
    dim: usize,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl SwarmState {
    /// Build a state from flat position and velocity buffers.
    pub fn new(t: f64, dim: usize, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidState("dimension must be at least 1".into()));
        }
        if x.len() != v.len() {
            return Err(Error::InvalidState(format!(
                "{} position coordinates but {} velocity coordinates",
                x.len(),
                v.len()
            )));
        }
        if x.len() % dim != 0 {
            return Err(Error::InvalidState(format!(
                "{} coordinates do not split into vectors of dimension {dim}",
                x.len()
            )));
        }
        if x.len() / dim < 2 {
            return Err(Error::InvalidState("need at least two agents".into()));
        }
        if !t.is_finite() || x.iter().chain(&v).any(|c| !c.is_finite()) {
            return Err(Error::InvalidState("non-finite coordinate".into()));
        }
        Ok(Self { t, dim, x, v })
    }

    /// Build a state from per-agent vectors.
    pub fn from_vectors(t: f64, x: &[Vec<f64>], v: &[Vec<f64>]) -> Result<Self> {
        let dim = x.first().map_or(0, Vec::len);
        if x.iter().chain(v).any(|p| p.len() != dim) {
            return Err(Error::InvalidState("agent vectors have mixed dimensions".into()));
        }
        Self::new(t, dim, x.concat(), v.concat())
    }

    pub(crate) fn from_parts_unchecked(t: f64, dim: usize, x: Vec<f64>, v: Vec<f64>) -> Self {
        Self { t, dim, x, v }
    }

    pub fn n(&self) -> usize {
        self.x.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.x
    }

    pub fn velocities(&self) -> &[f64] {
        &self.v
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mean_position(&self) -> Vec<f64> {
        mean_vector(&self.x, self.dim)
    }

    pub fn mean_velocity(&self) -> Vec<f64> {
        mean_vector(&self.v, self.dim)
    }
}

pub(crate) fn mean_vector(flat: &[f64], dim: usize) -> Vec<f64> {
    let n = flat.len() / dim;
    let mut mean = vec![0.0; dim];
    for agent in flat.chunks_exact(dim) {
        for (m, c) in mean.iter_mut().zip(agent) {
            *m += c;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    mean
}

/// Alignment kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Kernel {
    /// `r^-alpha`, defined for `r > 0`.
    Singular,
    /// `(1 + r)^-alpha`, defined for `r >= 0`.
    Regular,
    /// `(r - delta)^-alpha`, defined for `r > delta`.
    ShiftedSingular { delta: f64 },
}

impl Kernel {
    pub fn is_singular(&self) -> bool {
        !matches!(self, Kernel::Regular)
    }

    /// Distance at which the kernel blows up, if it does.
    pub fn singular_radius(&self) -> Option<f64> {
        match *self {
            Kernel::Singular => Some(0.0),
            Kernel::Regular => None,
            Kernel::ShiftedSingular { delta } => Some(delta),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::Singular => "singular",
            Kernel::Regular => "regular",
            Kernel::ShiftedSingular { .. } => "shifted",
        }
    }
}

/// Coupling gains and kernel exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Alignment gain `K`.
    pub k: f64,
    /// Control gain `M`.
    pub m: f64,
    /// Alignment kernel exponent.
    pub alpha: f64,
    /// Control weight exponent.
    pub beta: f64,
    pub kernel: Kernel,
}

impl ModelParams {
    pub fn new(k: f64, m: f64, alpha: f64, beta: f64, kernel: Kernel) -> Result<Self> {
        let params = Self {
            k,
            m,
            alpha,
            beta,
            kernel,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return bad(format!("K must be finite and >= 0, got {}", self.k));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return bad(format!("M must be finite and >= 0, got {}", self.m));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be > 0, got {}", self.beta));
        }
        if let Kernel::ShiftedSingular { delta } = self.kernel {
            if !(delta > 0.0 && delta.is_finite()) {
                return bad(format!("shifted kernel needs delta > 0, got {delta}"));
            }
        }
        Ok(())
    }
}

/// Chain offsets `z_0 .. z_{n-2}`: the target value of `x_i - x_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationSpec {
    dim: usize,
    z: Vec<f64>,
}

impl FormationSpec {
    pub fn new(dim: usize, z: Vec<f64>) -> Result<Self> {
        if dim == 0 || z.len() % dim != 0 || z.is_empty() {
            return Err(Error::InvalidState(format!(
                "{} offset coordinates do not form a non-empty list of {dim}-vectors",
                z.len()
            )));
        }
        if z.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidState("non-finite formation offset".into()));
        }
        Ok(Self { dim, z })
    }

    pub fn from_vectors(z: &[Vec<f64>]) -> Result<Self> {
        let dim = z.first().map_or(0, Vec::len);
        if z.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidState("offsets have mixed dimensions".into()));
        }
        Self::new(dim, z.concat())
    }

    /// Number of links, `n - 1`.
    pub fn links(&self) -> usize {
        self.z.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self, i: usize) -> &[f64] {
        &self.z[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.z
    }

    /// Check that this formation fits a swarm of `n` agents in `dim` dimensions,
    /// and that every link stays clear of a shifted kernel's singular radius.
    pub fn check_compatible(&self, n: usize, dim: usize, kernel: &Kernel) -> Result<()> {
        if self.links() + 1 != n || self.dim != dim {
            return Err(Error::FormationMismatch {
                got: self.links(),
                got_dim: self.dim,
                expected: n.saturating_sub(1),
                expected_dim: dim,
            });
        }
        if let Kernel::ShiftedSingular { delta } = *kernel {
            for i in 0..self.links() {
                let len = norm(self.offset(i));
                if len <= delta {
                    return Err(Error::InvalidParams(format!(
                        "offset {i} has length {len} <= shift {delta}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Symmetric matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseGeometry {
    n: usize,
    r: Vec<f64>,
}

impl PairwiseGeometry {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.r[i * self.n + j]
    }
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|c| c * c).sum()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (q - p) * (q - p))
        .sum::<f64>()
        .sqrt()
}

pub fn pairwise_distances(state: &SwarmState) -> PairwiseGeometry {
    let n = state.n();
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(state.position(i), state.position(j));
            r[i * n + j] = d;
            r[j * n + i] = d;
        }
    }
    PairwiseGeometry { n, r }
}

/// Alignment weight `psi(r)`.
///
/// Distances outside the kernel's domain are reported as
/// [`Error::SingularEvaluation`]; they mean two agents overlap and must never
/// be clamped away.
pub fn kernel_psi(r: f64, params: &ModelParams) -> Result<f64> {
    let alpha = params.alpha;
    match params.kernel {
        Kernel::Singular if r > 0.0 => Ok(r.powf(-alpha)),
        Kernel::Regular if r >= 0.0 => Ok((1.0 + r).powf(-alpha)),
        Kernel::ShiftedSingular { delta } if r > delta => Ok((r - delta).powf(-alpha)),
        _ => Err(Error::SingularEvaluation { r }),
    }
}

/// Control weight `phi(s) = (1 + s)^-beta` evaluated at a squared offset `s`.
pub fn control_weight_phi(s: f64, beta: f64) -> f64 {
    assert!(s >= 0.0, "control weight needs a squared offset >= 0, got {s}");
    (1.0 + s).powf(-beta)
}

/// Antiderivative of the control weight with `Phi(0) = 0`.
pub fn phi_antiderivative(s: f64, beta: f64) -> f64 {
    let log = s.ln_1p();
    let p = 1.0 - beta;
    if p.abs() < LOG_BRANCH_WIDTH {
        log
    } else {
        // ((1 + s)^(1 - beta) - 1) / (1 - beta), written to stay accurate near beta = 1
        (p * log).exp_m1() / p
    }
}

/// `sup Phi`: finite only for `beta > 1`.
pub fn phi_antiderivative_sup(beta: f64) -> Option<f64> {
    (beta > 1.0 + LOG_BRANCH_WIDTH).then(|| 1.0 / (beta - 1.0))
}

/// Inverse of [`phi_antiderivative`].
pub fn phi_antiderivative_inverse(c: f64, beta: f64) -> Result<f64> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::NoSolution(format!(
            "Phi takes values in [0, sup), got {c}"
        )));
    }
    let p = 1.0 - beta;
    if p.abs() < LOG_BRANCH_WIDTH {
        return Ok(c.exp_m1());
    }
    let inner = p * c;
    if inner <= -1.0 {
        return Err(Error::NoSolution(format!(
            "{c} lies outside the image of Phi for beta = {beta} (sup = {})",
            1.0 / (beta - 1.0)
        )));
    }
    Ok((inner.ln_1p() / p).exp_m1())
}

/// Chain residual `g_i = x_i - x_{i+1} - z_i` written into `out`.
pub(crate) fn link_residual(x: &[f64], dim: usize, spec: &FormationSpec, i: usize, out: &mut [f64]) {
    let a = &x[i * dim..(i + 1) * dim];
    let b = &x[(i + 1) * dim..(i + 2) * dim];
    for (c, o) in out.iter_mut().enumerate() {
        *o = a[c] - b[c] - spec.offset(i)[c];
    }
}

/// Adds `scale * u` to `out` for the chain control `u`.
fn add_control(x: &[f64], dim: usize, spec: &FormationSpec, beta: f64, scale: f64, out: &mut [f64]) {
    let mut g = vec![0.0; dim];
    for i in 0..spec.links() {
        link_residual(x, dim, spec, i, &mut g);
        let w = scale * control_weight_phi(norm_sq(&g), beta);
        for c in 0..dim {
            let f = w * g[c];
            out[i * dim + c] -= f;
            out[(i + 1) * dim + c] += f;
        }
    }
}

/// Decentralized chain control `u_i`, flat `n * dim`.
pub fn control_signal(state: &SwarmState, spec: &FormationSpec, beta: f64) -> Vec<f64> {
    let mut u = vec![0.0; state.x.len()];
    add_control(&state.x, state.dim, spec, beta, 1.0, &mut u);
    u
}

/// Kernel weights for every pair `i < j`, row-major upper triangle.
fn pair_weights(x: &[f64], dim: usize, params: &ModelParams, out: &mut Vec<f64>) -> Result<()> {
    let n = x.len() / dim;
    out.clear();
    for i in 0..n {
        for j in (i + 1)..n {
            let r = distance(&x[i * dim..(i + 1) * dim], &x[j * dim..(j + 1) * dim]);
            let w = kernel_psi(r, params).map_err(|_| Error::Overlap { i, j, r })?;
            out.push(w);
        }
    }
    Ok(())
}

/// Index of pair `(i, j)`, `i < j`, in the upper-triangle layout of [`pair_weights`].
#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn add_alignment(
    x: &[f64],
    v: &[f64],
    dim: usize,
    params: &ModelParams,
    weights: &mut Vec<f64>,
    out: &mut [f64],
) -> Result<()> {
    let n = x.len() / dim;
    if params.k == 0.0 {
        return Ok(());
    }
    pair_weights(x, dim, params, weights)?;
    let scale = params.k / n as f64;
    for i in 0..n {
        let vi = &v[i * dim..(i + 1) * dim];
        for c in 0..dim {
            // ascending j, diagonal skipped
            let mut acc = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = if j < i {
                    weights[tri_index(n, j, i)]
                } else {
                    weights[tri_index(n, i, j)]
                };
                acc += w * (v[j * dim + c] - vi[c]);
            }
            out[i * dim + c] += scale * acc;
        }
    }
    Ok(())
}

/// Velocity alignment acceleration `(K/n) sum_{j != i} psi(r_ij) (v_j - v_i)`.
pub fn alignment_accel(state: &SwarmState, params: &ModelParams) -> Result<Vec<f64>> {
    let mut a = vec![0.0; state.x.len()];
    let mut weights = Vec::new();
    add_alignment(&state.x, &state.v, state.dim, params, &mut weights, &mut a)?;
    Ok(a)
}

/// Time derivative of a state.
#[derive(Debug, Clone, PartialEq)]
pub struct Derivative {
    pub dx: Vec<f64>,
    pub dv: Vec<f64>,
}

/// Full right-hand side: `dx = v`, `dv = alignment + M * control`.
pub fn rhs(state: &SwarmState, params: &ModelParams, spec: &FormationSpec) -> Result<Derivative> {
    let mut dv = vec![0.0; state.x.len()];
    let mut ws = RhsWorkspace::default();
    ws.acceleration(&state.x, &state.v, state.dim, params, spec, &mut dv)?;
    Ok(Derivative {
        dx: state.v.clone(),
        dv,
    })
}

/// Scratch buffers reused across right-hand-side evaluations.
#[derive(Debug, Default)]
pub(crate) struct RhsWorkspace {
    weights: Vec<f64>,
}

impl RhsWorkspace {
    pub(crate) fn acceleration(
        &mut self,
        x: &[f64],
        v: &[f64],
        dim: usize,
        params: &ModelParams,
        spec: &FormationSpec,
        out: &mut [f64],
    ) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        add_alignment(x, v, dim, params, &mut self.weights, out)?;
        if params.m != 0.0 {
            add_control(x, dim, spec, params.beta, params.m, out);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn singular(k: f64, m: f64, alpha: f64, beta: f64) -> ModelParams {
        ModelParams::new(k, m, alpha, beta, Kernel::Singular).unwrap()
    }

    fn state_1d(x: &[f64], v: &[f64]) -> SwarmState {
        SwarmState::new(0.0, 1, x.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn state_rejects_bad_shapes() {
        assert!(SwarmState::new(0.0, 1, vec![0.0], vec![0.0]).is_err());
        assert!(SwarmState::new(0.0, 2, vec![0.0; 4], vec![0.0; 2]).is_err());
        assert!(SwarmState::new(0.0, 2, vec![0.0; 3], vec![0.0; 3]).is_err());
        assert!(SwarmState::new(0.0, 1, vec![0.0, f64::NAN], vec![0.0; 2]).is_err());
    }

    #[test]
    fn distances_examples() {
        let g = pairwise_distances(&state_1d(&[0.0, 1.0], &[0.0, 0.0]));
        assert_eq!((g.get(0, 0), g.get(0, 1), g.get(1, 0), g.get(1, 1)), (0.0, 1.0, 1.0, 0.0));

        let s = SwarmState::from_vectors(
            0.0,
            &[vec![-1.0, 0.0], vec![1.0, 0.0]],
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(pairwise_distances(&s).get(0, 1), 2.0);

        let square = SwarmState::from_vectors(
            0.0,
            &[vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, -1.0]],
            &vec![vec![0.0; 2]; 4],
        )
        .unwrap();
        let g = pairwise_distances(&square);
        assert_eq!(g.get(0, 2), 2.0);
        assert_eq!(g.get(1, 3), 2.0);
        assert!((g.get(0, 1) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(kernel_psi(1.0, &singular(1.0, 1.0, 3.7, 0.5)).unwrap(), 1.0);
        assert_eq!(kernel_psi(2.0, &singular(1.0, 1.0, 1.0, 0.5)).unwrap(), 0.5);
        let regular = ModelParams::new(1.0, 1.0, 0.5, 0.5, Kernel::Regular).unwrap();
        assert!((kernel_psi(1.0, &regular).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(kernel_psi(0.0, &regular).unwrap(), 1.0);
    }

    #[test]
    fn kernel_domain_violations() {
        let p = singular(1.0, 1.0, 1.0, 0.5);
        assert_eq!(kernel_psi(0.0, &p), Err(Error::SingularEvaluation { r: 0.0 }));
        assert!(kernel_psi(-1.0, &p).is_err());
        let shifted = ModelParams::new(1.0, 1.0, 1.0, 0.5, Kernel::ShiftedSingular { delta: 0.5 }).unwrap();
        assert!(kernel_psi(0.5, &shifted).is_err());
        assert!((kernel_psi(1.5, &shifted).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(-1.0, 1.0, 1.0, 1.0, Kernel::Singular).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 1.0, Kernel::Singular).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 0.0, Kernel::Singular).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 1.0, Kernel::ShiftedSingular { delta: 0.0 }).is_err());
    }

    #[test]
    fn phi_examples() {
        assert_eq!(control_weight_phi(0.0, 0.3), 1.0);
        assert!((control_weight_phi(1.0, 0.5) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(control_weight_phi(3.0, 1.0), 0.25);
    }

    #[test]
    #[should_panic]
    fn phi_rejects_negative_argument() {
        control_weight_phi(-1.0, 0.5);
    }

    #[test]
    fn antiderivative_examples() {
        assert!((phi_antiderivative(3.0, 0.5) - 2.0).abs() < 1e-14);
        assert!((phi_antiderivative(std::f64::consts::E - 1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((phi_antiderivative(1.0, 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(phi_antiderivative(0.0, 0.7), 0.0);
    }

    #[test]
    fn inverse_examples() {
        assert!((phi_antiderivative_inverse(2.0, 0.5).unwrap() - 3.0).abs() < 1e-14);
        for beta in [0.3, 1.0, 2.5] {
            assert_eq!(phi_antiderivative_inverse(0.0, beta).unwrap(), 0.0);
        }
        // bisection oracle on Phi(s) - 1 over [0, 10]
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi_antiderivative(mid, 0.5) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((oracle - 1.25).abs() < 1e-12);
        assert!((phi_antiderivative_inverse(1.0, 0.5).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn inverse_outside_image() {
        // sup Phi = 1 for beta = 2
        assert!(phi_antiderivative_inverse(1.0, 2.0).is_err());
        assert!(phi_antiderivative_inverse(1.5, 2.0).is_err());
        assert!(phi_antiderivative_inverse(-0.1, 0.5).is_err());
        assert!(phi_antiderivative_inverse(0.99, 2.0).is_ok());
        assert_eq!(phi_antiderivative_sup(2.0), Some(1.0));
        assert_eq!(phi_antiderivative_sup(1.0), None);
    }

    #[test]
    fn control_examples() {
        let spec = FormationSpec::new(1, vec![1.0]).unwrap();
        let u = control_signal(&state_1d(&[2.0, 0.0], &[0.0, 0.0]), &spec, 0.5);
        assert!((u[0] + 0.5f64.sqrt()).abs() < 1e-15);
        assert!((u[1] - 0.5f64.sqrt()).abs() < 1e-15);

        // exact formation
        let spec = FormationSpec::new(2, vec![1.0, 2.0, -0.5, 0.25]).unwrap();
        let s = SwarmState::new(0.0, 2, vec![0.5, 0.0, -0.5, -2.0, 0.0, -2.25], vec![0.0; 6]).unwrap();
        assert!(control_signal(&s, &spec, 0.5).iter().all(|c| *c == 0.0));
    }

    #[test]
    fn alignment_examples() {
        let p = singular(1.0, 0.0, 1.0, 0.5);
        let a = alignment_accel(&state_1d(&[0.0, 1.0], &[0.0, 2.0]), &p).unwrap();
        assert_eq!(a, vec![1.0, -1.0]);

        let a = alignment_accel(&state_1d(&[0.0, 1.0, 5.0], &[0.7, 0.7, 0.7]), &p).unwrap();
        assert!(a.iter().all(|c| *c == 0.0));

        let a = alignment_accel(&state_1d(&[-1.0, 0.0, 1.0], &[-0.3, 0.0, 0.3]), &p).unwrap();
        assert!(a[1].abs() < 1e-16);
    }

    #[test]
    fn alignment_reports_overlapping_pair() {
        let p = singular(1.0, 0.0, 1.0, 0.5);
        let err = alignment_accel(&state_1d(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]), &p).unwrap_err();
        assert_eq!(err, Error::Overlap { i: 1, j: 2, r: 0.0 });
    }

    #[test]
    fn rhs_examples() {
        let spec = FormationSpec::new(1, vec![-1.0]).unwrap();
        let p = singular(2.0, 3.0, 1.0, 0.5);
        // consensus + exact formation
        let d = rhs(&state_1d(&[0.0, 1.0], &[0.4, 0.4]), &p, &spec).unwrap();
        assert_eq!(d.dv, vec![0.0, 0.0]);
        assert_eq!(d.dx, vec![0.4, 0.4]);

        let no_control = singular(1.0, 0.0, 1.0, 0.5);
        let s = state_1d(&[0.0, 1.0], &[0.0, 2.0]);
        let d = rhs(&s, &no_control, &spec).unwrap();
        assert_eq!(d.dv, alignment_accel(&s, &no_control).unwrap());
    }

    #[test]
    fn shifted_kernel_formation_check() {
        let kernel = Kernel::ShiftedSingular { delta: 1.0 };
        let short = FormationSpec::new(1, vec![0.5]).unwrap();
        assert!(short.check_compatible(2, 1, &kernel).is_err());
        let long = FormationSpec::new(1, vec![1.5]).unwrap();
        assert!(long.check_compatible(2, 1, &kernel).is_ok());
        assert!(long.check_compatible(3, 1, &kernel).is_err());
    }

    fn arb_swarm() -> impl Strategy<Value = (SwarmState, FormationSpec)> {
        (2usize..8, 1usize..4).prop_flat_map(|(n, d)| {
            (
                prop::collection::vec(-10.0f64..10.0, n * d),
                prop::collection::vec(-3.0f64..3.0, n * d),
                prop::collection::vec(-3.0f64..3.0, (n - 1) * d),
            )
                .prop_map(move |(x, v, z)| {
                    (
                        SwarmState::new(0.0, d, x, v).unwrap(),
                        FormationSpec::new(d, z).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn control_telescopes((state, spec) in arb_swarm(), beta in 0.1f64..3.0) {
            let u = control_signal(&state, &spec, beta);
            let d = state.dim();
            let umax = u.chunks(d).map(norm).fold(0.0, f64::max);
            for c in 0..d {
                let sum: f64 = u.iter().skip(c).step_by(d).sum();
                prop_assert!(sum.abs() <= 1e-12 * (1.0 + umax));
            }
        }

        #[test]
        fn momentum_is_conserved((state, spec) in arb_swarm(), alpha in 0.2f64..2.5, beta in 0.1f64..3.0) {
            let p = ModelParams::new(10.0, 50.0, alpha, beta, Kernel::Singular).unwrap();
            let geometry = pairwise_distances(&state);
            let n = state.n();
            let tight = (0..n).any(|i| ((i + 1)..n).any(|j| geometry.get(i, j) < 1e-3));
            prop_assume!(!tight);
            let dv = rhs(&state, &p, &spec).unwrap().dv;
            let d = state.dim();
            let amax = dv.chunks(d).map(norm).fold(0.0, f64::max);
            for c in 0..d {
                let sum: f64 = dv.iter().skip(c).step_by(d).sum();
                prop_assert!(sum.abs() <= 1e-10 * n as f64 * amax.max(f64::MIN_POSITIVE));
                prop_assert!((sum / n as f64).abs() <= 1e-12 * (1.0 + amax));
            }
        }

        #[test]
        fn kernel_is_decreasing(r1 in 1e-3f64..50.0, gap in 1e-3f64..50.0, alpha in 0.1f64..3.0) {
            let r2 = r1 + gap;
            for kernel in [Kernel::Singular, Kernel::Regular] {
                let p = ModelParams::new(1.0, 1.0, alpha, 1.0, kernel).unwrap();
                prop_assert!(kernel_psi(r1, &p).unwrap() > kernel_psi(r2, &p).unwrap());
            }
        }

        #[test]
        fn antiderivative_matches_weight(s in 0.0f64..100.0, beta in 0.05f64..4.0) {
            let h = 1e-5 * (1.0 + s);
            let lo = (s - h).max(0.0);
            let numeric = (phi_antiderivative(s + h, beta) - phi_antiderivative(lo, beta)) / (s + h - lo);
            let exact = control_weight_phi(0.5 * (s + h + lo), beta);
            let roundoff = 8.0 * f64::EPSILON * phi_antiderivative(s + h, beta).abs() / (s + h - lo);
            prop_assert!((numeric - exact).abs() <= 1e-6 * exact + roundoff);
        }

        #[test]
        fn inverse_roundtrip(frac in 0.0f64..0.999, c in 0.0f64..50.0, beta in 0.05f64..4.0) {
            let target = match phi_antiderivative_sup(beta) {
                Some(sup) => frac * sup,
                None => c,
            };
            let s = phi_antiderivative_inverse(target, beta).unwrap();
            let back = phi_antiderivative(s, beta);
            prop_assert!((back - target).abs() <= 1e-10 * target.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn log_branch_is_continuous(s in 0.0f64..1e3) {
            let log = s.ln_1p();
            for beta in [1.0 - 1e-8, 1.0 + 1e-8] {
                let phi = phi_antiderivative(s, beta);
                prop_assert!((phi - log).abs() <= 1e-6 * log.max(f64::MIN_POSITIVE));
            }
        }
    }
}
