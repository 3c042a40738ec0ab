//! Exact steady-state analysis of the two-queue chain on a truncated
//! rectangle of states, with Little's-law latency for cross-checking the
//! closed forms and the simulator.
//!
//! Truncation is blocking: transitions that would leave the rectangle are
//! dropped. The probability mass sitting on the boundary is reported so
//! callers can judge whether the rectangle was large enough, and
//! [`solve_adaptive`] grows the rectangle until that mass is negligible.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{transitions, validate, SystemParams, SystemState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CtmcError {
    #[error("state space too large: {states} states exceeds limit {limit}")]
    Capacity { states: usize, limit: usize },
    #[error("steady-state solve failed: residual {residual:e} after {sweeps} sweeps (tolerance {tolerance:e})")]
    SolveFailed {
        residual: f64,
        sweeps: usize,
        tolerance: f64,
    },
    #[error(transparent)]
    InvalidParam(#[from] crate::model::InvalidParam),
}

/// Rectangular truncation `0..=i_max x 0..=j_max` with a dense index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub i_max: u32,
    pub j_max: u32,
}

impl StateSpace {
    pub fn new(i_max: u32, j_max: u32) -> Self {
        Self { i_max, j_max }
    }

    /// Number of states in the rectangle.
    pub fn len(&self) -> usize {
        (self.i_max as usize + 1) * (self.j_max as usize + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, state: SystemState) -> bool {
        state.i <= self.i_max && state.j <= self.j_max
    }

    /// Dense index; `index(0, 0) == 0` and rows are `i`-major.
    pub fn index(&self, state: SystemState) -> usize {
        debug_assert!(self.contains(state));
        state.i as usize * (self.j_max as usize + 1) + state.j as usize
    }

    pub fn state(&self, index: usize) -> SystemState {
        let width = self.j_max as usize + 1;
        SystemState::new((index / width) as u32, (index % width) as u32)
    }

    fn on_boundary(&self, state: SystemState) -> bool {
        state.i == self.i_max || state.j == self.j_max
    }
}

/// Sparse generator of the truncated chain: off-diagonal rates by row plus
/// the diagonal (negative row sums).
#[derive(Debug, Clone)]
pub struct Generator {
    space: StateSpace,
    rows: Vec<Vec<(u32, f64)>>,
    diag: Vec<f64>,
}

impl Generator {
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// Off-diagonal entries of one row.
    pub fn row(&self, index: usize) -> &[(u32, f64)] {
        &self.rows[index]
    }

    pub fn diagonal(&self, index: usize) -> f64 {
        self.diag[index]
    }
}

/// Solver knobs. The defaults suit desk-scale runs.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Largest state count solved by dense LU; beyond it the sparse
    /// Gauss-Seidel path runs.
    pub dense_limit: usize,
    /// Target residual for the iterative solver.
    pub tolerance: f64,
    /// Sweep budget for the iterative solver.
    pub max_sweeps: usize,
    /// Hard cap on the state count.
    pub max_states: usize,
    /// Boundary-mass target for [`solve_adaptive`].
    pub boundary_target: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            dense_limit: 2048,
            tolerance: 1e-12,
            max_sweeps: 400_000,
            max_states: 4_000_000,
            boundary_target: 1e-8,
        }
    }
}

/// Residual the solve must reach before the result counts as converged.
pub const RESIDUAL_BOUND: f64 = 1e-9;

/// Stationary distribution over a [`StateSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Probability per dense index; non-negative, sums to one.
    pub pi: Vec<f64>,
    /// Total probability on states with `i = i_max` or `j = j_max`.
    pub mass_at_boundary: f64,
    /// Achieved `max |pi Q|` residual.
    pub residual: f64,
}

/// Queue-length means and the Little's-law latency derived from a steady
/// state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Mean pending-queue length `E[i]`.
    pub e_pending: f64,
    /// Mean service-stage occupancy `E[j]`.
    pub e_service: f64,
    /// `(E[i] + E[j]) / lambda_eff`, the mean time a surviving request
    /// spends in the two queues; zero by convention when there is no
    /// traffic.
    pub little_latency: f64,
    /// Probability that the pending queue is non-empty.
    pub p_pending_nonempty: f64,
    pub boundary_mass: f64,
    /// Set when `boundary_mass` exceeds 1e-6 and the rectangle is suspect.
    pub truncation_warning: bool,
}

/// Builds the truncated generator for `params`.
pub fn build_generator(space: StateSpace, params: &SystemParams, opts: &SolveOptions) -> Result<Generator, CtmcError> {
    validate(params)?;
    let n = space.len();
    if n > opts.max_states {
        return Err(CtmcError::Capacity {
            states: n,
            limit: opts.max_states,
        });
    }
    let mut rows = vec![Vec::new(); n];
    let mut diag = vec![0.0; n];
    for idx in 0..n {
        let state = space.state(idx);
        for t in transitions(state, params) {
            if !space.contains(t.target) {
                continue; // blocking truncation
            }
            let target = space.index(t.target) as u32;
            rows[idx].push((target, t.rate));
            diag[idx] -= t.rate;
        }
    }
    Ok(Generator { space, rows, diag })
}

/// Solves `pi Q = 0`, `sum pi = 1` on the truncated chain.
///
/// Below [`SolveOptions::dense_limit`] states, one balance equation is
/// replaced by the normalization row and the dense system is LU-solved.
/// Above it, Gauss-Seidel sweeps (alternating direction) run until the
/// residual target is met.
pub fn steady_state(generator: &Generator, opts: &SolveOptions) -> Result<SteadyState, CtmcError> {
    let n = generator.space.len();

    // A state without outgoing rates absorbs everything (only reachable
    // configurations put it at the origin, e.g. lambda_a = 0).
    let absorbing: Vec<usize> = (0..n).filter(|&i| generator.diag[i] == 0.0).collect();
    if absorbing.len() == 1 {
        let mut pi = vec![0.0; n];
        pi[absorbing[0]] = 1.0;
        return Ok(finish(generator, pi));
    }
    if absorbing.len() > 1 {
        return Err(CtmcError::SolveFailed {
            residual: f64::INFINITY,
            sweeps: 0,
            tolerance: opts.tolerance,
        });
    }

    let pi = if n <= opts.dense_limit {
        solve_dense(generator)
    } else {
        solve_gauss_seidel(generator, opts)?
    };
    let ss = finish(generator, pi);
    if ss.residual > RESIDUAL_BOUND {
        return Err(CtmcError::SolveFailed {
            residual: ss.residual,
            sweeps: opts.max_sweeps,
            tolerance: opts.tolerance,
        });
    }
    Ok(ss)
}

fn finish(generator: &Generator, mut pi: Vec<f64>) -> SteadyState {
    // Clamp solver noise and renormalize.
    for p in &mut pi {
        if *p < 0.0 {
            debug_assert!(*p > -1e-12, "steady-state entry {p} too negative");
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    let residual = residual_inf(generator, &pi);
    let space = generator.space;
    let mass_at_boundary = pi
        .iter()
        .enumerate()
        .filter(|(idx, _)| space.on_boundary(space.state(*idx)))
        .map(|(_, p)| p)
        .sum();
    SteadyState {
        pi,
        mass_at_boundary,
        residual,
    }
}

/// `max_j |(pi Q)_j|`, evaluated against the sparse structure.
fn residual_inf(generator: &Generator, pi: &[f64]) -> f64 {
    let n = generator.space.len();
    let mut flow = vec![0.0; n];
    for (idx, p) in pi.iter().enumerate() {
        flow[idx] += p * generator.diag[idx];
        for &(target, rate) in &generator.rows[idx] {
            flow[target as usize] += p * rate;
        }
    }
    flow.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn solve_dense(generator: &Generator) -> Vec<f64> {
    let n = generator.space.len();
    // Columns of A are balance equations: A = Q^T with the last equation
    // replaced by normalization.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for idx in 0..n {
        a[(idx, idx)] = generator.diag[idx];
        for &(target, rate) in &generator.rows[idx] {
            a[(target as usize, idx)] = rate;
        }
    }
    for col in 0..n {
        a[(n - 1, col)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let solution = a.lu().solve(&b).expect("replaced balance system is nonsingular");
    solution.iter().copied().collect()
}

/// Gauss-Seidel on the balance equations
/// `pi_j = (sum_{i != j} pi_i q_ij) / (-q_jj)`, sweeping forward and
/// backward alternately, renormalizing each sweep.
fn solve_gauss_seidel(generator: &Generator, opts: &SolveOptions) -> Result<Vec<f64>, CtmcError> {
    let n = generator.space.len();

    // Column (incoming) adjacency, needed to evaluate inflow per state.
    let mut cols: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for idx in 0..n {
        for &(target, rate) in &generator.rows[idx] {
            cols[target as usize].push((idx as u32, rate));
        }
    }

    let mut pi = vec![1.0 / n as f64; n];
    let mut sweeps = 0;
    let mut residual = f64::INFINITY;
    while sweeps < opts.max_sweeps {
        for pass in 0..2 {
            let indices: Box<dyn Iterator<Item = usize>> = if pass == 0 {
                Box::new(0..n)
            } else {
                Box::new((0..n).rev())
            };
            for j in indices {
                let inflow: f64 = cols[j].iter().map(|&(src, rate)| pi[src as usize] * rate).sum();
                pi[j] = inflow / -generator.diag[j];
            }
            sweeps += 1;
        }
        let total: f64 = pi.iter().sum();
        for p in &mut pi {
            *p /= total;
        }
        if sweeps % 32 == 0 || sweeps >= opts.max_sweeps {
            residual = residual_inf(generator, &pi);
            if residual <= opts.tolerance {
                return Ok(pi);
            }
        }
    }
    if residual <= RESIDUAL_BOUND {
        return Ok(pi);
    }
    Err(CtmcError::SolveFailed {
        residual,
        sweeps,
        tolerance: opts.tolerance,
    })
}

/// Queue means and Little's-law latency for a solved chain.
///
/// The effective throughput discounts rejected flow:
/// `lambda_eff = lambda_a - r * lambda_r * P(i > 0)`.
pub fn metrics(ss: &SteadyState, space: &StateSpace, params: &SystemParams) -> Metrics {
    let mut e_pending = 0.0;
    let mut e_service = 0.0;
    let mut p_empty_pending = 0.0;
    for (idx, &p) in ss.pi.iter().enumerate() {
        let state = space.state(idx);
        e_pending += f64::from(state.i) * p;
        e_service += f64::from(state.j) * p;
        if state.i == 0 {
            p_empty_pending += p;
        }
    }
    let p_pending_nonempty = (1.0 - p_empty_pending).max(0.0);
    let little_latency = if params.lambda_a == 0.0 {
        0.0
    } else {
        let lambda_eff =
            params.lambda_a - f64::from(params.r) * params.lambda_r * p_pending_nonempty;
        if lambda_eff > 0.0 {
            (e_pending + e_service) / lambda_eff
        } else {
            f64::NAN
        }
    };
    let truncation_warning = ss.mass_at_boundary > 1e-6;
    if truncation_warning {
        log::warn!(
            "boundary mass {:.3e} exceeds 1e-6; enlarge the state space",
            ss.mass_at_boundary
        );
    }
    Metrics {
        e_pending,
        e_service,
        little_latency,
        p_pending_nonempty,
        boundary_mass: ss.mass_at_boundary,
        truncation_warning,
    }
}

/// Solves with a square rectangle grown from 16x16, doubling until the
/// boundary mass drops below [`SolveOptions::boundary_target`].
pub fn solve_adaptive(params: &SystemParams, opts: &SolveOptions) -> Result<(StateSpace, SteadyState), CtmcError> {
    validate(params)?;
    let mut extent = 16u32;
    loop {
        let space = StateSpace::new(extent, extent);
        if space.len() > opts.max_states {
            return Err(CtmcError::Capacity {
                states: space.len(),
                limit: opts.max_states,
            });
        }
        let generator = build_generator(space, params, opts)?;
        let ss = steady_state(&generator, opts)?;
        if ss.mass_at_boundary < opts.boundary_target {
            return Ok((space, ss));
        }
        extent *= 2;
    }
}
