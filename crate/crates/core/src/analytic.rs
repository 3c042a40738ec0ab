//! Closed-form performance metrics: latency components and bounds of the
//! two-queue pipeline, and the alternate-history attack success probability.
//!
//! All formulas describe the conventional model (one request per block);
//! batch behavior (`k > 1`) is only reachable through the simulator.

use thiserror::Error;

use crate::model::{validate, AttackParams, InvalidParam, SystemParams};

/// Which latency component a stability failure came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// Block-inclusion queue, requires `lambda_a < lambda_b`.
    BlockQueue,
    /// Service queue, requires `lambda_a < s * lambda_c`.
    ServiceQueue,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Component::BlockQueue => write!(f, "lambda_a < lambda_b"),
            Component::ServiceQueue => write!(f, "lambda_a < s * lambda_c"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("unstable: {component} violated (offered load {load:.6})")]
    Unstable { component: Component, load: f64 },
    #[error(transparent)]
    InvalidParam(#[from] InvalidParam),
}

/// Mean latency components and bounds for one parameter set.
///
/// `tau_s = tau1 + tau2 + tau3` holds exactly by construction; `tau_t`
/// subtracts the service time `1/lambda_c` and therefore reads as latency up
/// to service initiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    /// Mean sojourn of the block-inclusion M/M/1 queue.
    pub tau1: f64,
    /// Mean sojourn of the service M/M/s queue.
    pub tau2: f64,
    /// Confirmation delay `(N - 1) / lambda_b`.
    pub tau3: f64,
    /// Expected end-to-end sojourn.
    pub tau_s: f64,
    /// Average latency `tau_s - 1/lambda_c`.
    pub tau_t: f64,
    /// Upper latency bound.
    pub upper: f64,
    /// Lower latency bound `N / lambda_b`.
    pub lower: f64,
}

/// Erlang C: probability an arrival to an M/M/s queue with offered load
/// `a = lambda/mu` must wait.
///
/// Computed through the Erlang B recursion `B(0) = 1`,
/// `B(m) = a B(m-1) / (m + a B(m-1))`, then
/// `C = s B(s) / (s - a (1 - B(s)))`, which is stable for any desk-scale
/// `s` where the textbook factorial sum overflows.
pub fn erlang_c(servers: u32, offered_load: f64) -> Result<f64, AnalyticError> {
    if servers < 1 {
        return Err(InvalidParam::new("s", "must be >= 1").into());
    }
    if !offered_load.is_finite() || offered_load < 0.0 {
        return Err(InvalidParam::new("offered_load", format!("must be >= 0, got {offered_load}")).into());
    }
    let s = f64::from(servers);
    if offered_load >= s {
        return Err(AnalyticError::Unstable {
            component: Component::ServiceQueue,
            load: offered_load,
        });
    }
    let a = offered_load;
    let mut b = 1.0;
    for m in 1..=servers {
        b = a * b / (f64::from(m) + a * b);
    }
    let c = s * b / (s - a * (1.0 - b));
    Ok(clamp_probability(c, "erlang_c"))
}

/// Mean sojourn of the block-inclusion queue, `1 / (lambda_b - lambda_a)`.
pub fn tau1(params: &SystemParams) -> Result<f64, AnalyticError> {
    validate(params)?;
    if params.lambda_a >= params.lambda_b {
        return Err(AnalyticError::Unstable {
            component: Component::BlockQueue,
            load: params.lambda_a / params.lambda_b,
        });
    }
    Ok(1.0 / (params.lambda_b - params.lambda_a))
}

/// Mean sojourn of the service queue,
/// `C(s, lambda_a/lambda_c) / (s lambda_c - lambda_a) + 1/lambda_c`.
pub fn tau2(params: &SystemParams) -> Result<f64, AnalyticError> {
    validate(params)?;
    let a = params.lambda_a / params.lambda_c;
    let c = erlang_c(params.s, a)?;
    Ok(c / (f64::from(params.s) * params.lambda_c - params.lambda_a) + 1.0 / params.lambda_c)
}

/// Confirmation delay `(N - 1) / lambda_b`: the mean time for the `N - 1`
/// blocks that must follow a request's own block.
pub fn tau3(params: &SystemParams) -> Result<f64, AnalyticError> {
    validate(params)?;
    Ok(f64::from(params.n_conf - 1) / params.lambda_b)
}

/// Evaluates every latency quantity for a stable parameter set.
///
/// The error identifies which queue's stability condition failed.
pub fn latency_report(params: &SystemParams) -> Result<LatencyReport, AnalyticError> {
    let t1 = tau1(params)?;
    let t2 = tau2(params)?;
    let t3 = tau3(params)?;
    let tau_s = t1 + t2 + t3;
    let service_wait = t2 - 1.0 / params.lambda_c;
    Ok(LatencyReport {
        tau1: t1,
        tau2: t2,
        tau3: t3,
        tau_s,
        tau_t: tau_s - 1.0 / params.lambda_c,
        upper: t1 + service_wait + t3,
        lower: f64::from(params.n_conf) / params.lambda_b,
    })
}

/// Success probability of the alternate-history attack.
///
/// For `beta >= 1` the attacker out-mines the network and succeeds with
/// certainty. For `beta < 1` the probability is
///
/// ```text
/// 1 - sum_{n=0}^{N} C(n+N-1, n) (1/(1+beta))^N (beta/(1+beta))^n (1 - beta^(N-n+1))
/// ```
///
/// the negative-binomial race law with give-up threshold taken to infinity.
/// Finite thresholds are only reachable through the Monte Carlo in
/// [`crate::attack`].
pub fn attack_probability(ap: &AttackParams) -> Result<f64, AnalyticError> {
    ap.validate()?;
    if ap.beta >= 1.0 {
        return Ok(1.0);
    }
    let beta = ap.beta;
    let n_conf = ap.n_conf;
    let p = 1.0 / (1.0 + beta);
    let q = beta / (1.0 + beta);
    let p_pow_n = p.powi(n_conf as i32);

    let mut sum = 0.0;
    // binom accumulates C(n+N-1, n) multiplicatively; small for desk-scale N.
    let mut binom = 1.0;
    let mut q_pow = 1.0;
    for n in 0..=n_conf {
        if n > 0 {
            binom *= f64::from(n_conf - 1 + n) / f64::from(n);
            q_pow *= q;
        }
        let deficit_term = 1.0 - beta.powi((n_conf - n + 1) as i32);
        sum += binom * p_pow_n * q_pow * deficit_term;
    }
    Ok(clamp_probability(1.0 - sum, "attack_probability"))
}

/// Clamps a computed probability into `[0, 1]`, warning if the excursion
/// exceeds what floating-point roundoff can explain.
fn clamp_probability(value: f64, what: &str) -> f64 {
    let clamped = value.clamp(0.0, 1.0);
    if (value - clamped).abs() > 1e-9 {
        log::warn!("{what}: probability {value} clamped to {clamped}; internal inconsistency");
    }
    clamped
}
