//! Domain types and the continuous-time transition kernel of the B-RAN
//! two-queue Markov chain.
//!
//! The system state is the pair `(i, j)`: `i` requests pending inclusion in
//! a block and `j` confirmed requests waiting for (or under) service. Four
//! event classes move the state: request arrivals, block mining (batch moves
//! of up to `k` requests), service completions on up to `s` parallel links,
//! and rejection events that drop up to `r` pending requests.

use thiserror::Error;

/// Validation failure: a parameter violated its type invariant.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid parameter `{name}`: {reason}")]
pub struct InvalidParam {
    pub name: &'static str,
    pub reason: String,
}

impl InvalidParam {
    pub fn new(name: &'static str, reason: impl Into<String>) -> Self {
        Self {
            name,
            reason: reason.into(),
        }
    }
}

/// All model rates and integer shape parameters.
///
/// Rates are per unit time; the natural time unit is the mean block interval
/// (`lambda_b = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Arrival rate of service requests.
    pub lambda_a: f64,
    /// Block mining rate.
    pub lambda_b: f64,
    /// Per-link service rate.
    pub lambda_c: f64,
    /// Rejection-event rate.
    pub lambda_r: f64,
    /// Maximum requests per block.
    pub k: u32,
    /// Requests removed per rejection event.
    pub r: u32,
    /// Number of parallel access links.
    pub s: u32,
    /// Required confirmations before service.
    pub n_conf: u32,
}

impl Default for SystemParams {
    /// Dimensionless defaults: time measured in mean block intervals.
    fn default() -> Self {
        Self {
            lambda_a: 0.5,
            lambda_b: 1.0,
            lambda_c: 1.0,
            lambda_r: 0.0,
            k: 1,
            r: 1,
            s: 2,
            n_conf: 1,
        }
    }
}

/// Stability classification computed by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stability {
    /// Both closed-form queue formulas converge:
    /// `lambda_a < lambda_b` and `lambda_a < s * lambda_c`.
    pub analytic_stable: bool,
    /// The batch-service queue can drain: `lambda_a < k*lambda_b + r*lambda_r`
    /// and the surviving flow fits the service capacity.
    pub batch_stable: bool,
}

/// Checks every invariant of `params` and classifies its stability.
///
/// Stability is advisory: unstable parameters are fine for simulation and
/// steady-state solving on a truncated space, but the closed-form latency
/// formulas refuse them.
pub fn validate(params: &SystemParams) -> Result<Stability, InvalidParam> {
    let rates: [(&'static str, f64); 4] = [
        ("lambda_a", params.lambda_a),
        ("lambda_b", params.lambda_b),
        ("lambda_c", params.lambda_c),
        ("lambda_r", params.lambda_r),
    ];
    for (name, value) in rates {
        if !value.is_finite() {
            return Err(InvalidParam::new(name, format!("must be finite, got {value}")));
        }
        if value < 0.0 {
            return Err(InvalidParam::new(name, format!("must be >= 0, got {value}")));
        }
    }
    if params.lambda_b <= 0.0 {
        return Err(InvalidParam::new("lambda_b", "must be > 0"));
    }
    if params.lambda_c <= 0.0 {
        return Err(InvalidParam::new("lambda_c", "must be > 0"));
    }
    let ints: [(&'static str, u32); 4] = [
        ("k", params.k),
        ("r", params.r),
        ("s", params.s),
        ("n_conf", params.n_conf),
    ];
    for (name, value) in ints {
        if value < 1 {
            return Err(InvalidParam::new(name, "must be >= 1"));
        }
    }
    Ok(stability(params))
}

fn stability(params: &SystemParams) -> Stability {
    let service_capacity = f64::from(params.s) * params.lambda_c;
    let analytic_stable = params.lambda_a < params.lambda_b && params.lambda_a < service_capacity;

    // Drain capacity of the block queue counts both mining and rejection events.
    let drain = f64::from(params.k) * params.lambda_b + f64::from(params.r) * params.lambda_r;
    // Share of the drain that reaches service; a heuristic for warnings only.
    let serviced_fraction = if params.lambda_r > 0.0 {
        (f64::from(params.k) * params.lambda_b / drain).min(1.0)
    } else {
        1.0
    };
    let batch_stable = params.lambda_a < drain && params.lambda_a * serviced_fraction < service_capacity;

    Stability {
        analytic_stable,
        batch_stable,
    }
}

/// System state: `i` pending requests, `j` confirmed requests in the
/// service stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SystemState {
    pub i: u32,
    pub j: u32,
}

impl SystemState {
    pub const EMPTY: SystemState = SystemState { i: 0, j: 0 };

    pub fn new(i: u32, j: u32) -> Self {
        Self { i, j }
    }
}

/// The event class behind a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    /// A new request joins the pending queue.
    Arrival,
    /// A block is mined, moving `min(i, k)` pending requests to service.
    Mine,
    /// One request finishes service.
    Service,
    /// A rejection event drops `min(i, r)` pending requests.
    Reject,
}

/// A single enabled transition out of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub kind: TransitionKind,
    pub target: SystemState,
    pub rate: f64,
}

/// Enumerates the enabled transitions out of `state`, in the fixed order
/// arrival, mine, service, reject.
///
/// Only transitions with positive rate are emitted, so the list is exactly
/// the off-diagonal structure of the chain's generator. Mining and rejection
/// are disabled at `i = 0`: an empty-block self-transition has no effect on
/// the state process. Service proceeds at `min(j, s) * lambda_c`, the
/// multi-server rate.
pub fn transitions(state: SystemState, params: &SystemParams) -> Vec<Transition> {
    let mut out = Vec::with_capacity(4);
    if params.lambda_a > 0.0 {
        out.push(Transition {
            kind: TransitionKind::Arrival,
            target: SystemState::new(state.i + 1, state.j),
            rate: params.lambda_a,
        });
    }
    if state.i > 0 {
        let mined = state.i.min(params.k);
        out.push(Transition {
            kind: TransitionKind::Mine,
            target: SystemState::new(state.i - mined, state.j + mined),
            rate: params.lambda_b,
        });
    }
    if state.j > 0 && params.lambda_c > 0.0 {
        let busy = state.j.min(params.s);
        out.push(Transition {
            kind: TransitionKind::Service,
            target: SystemState::new(state.i, state.j - 1),
            rate: f64::from(busy) * params.lambda_c,
        });
    }
    if state.i > 0 && params.lambda_r > 0.0 {
        let dropped = state.i.min(params.r);
        out.push(Transition {
            kind: TransitionKind::Reject,
            target: SystemState::new(state.i - dropped, state.j),
            rate: params.lambda_r,
        });
    }
    out
}

/// Give-up threshold for the attack race: the chain-length deficit at which
/// the attacker abandons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GiveUp {
    Bounded(u32),
    Unbounded,
}

/// How the required confirmations are counted in the attack race.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ConfCounting {
    /// The attacked block itself is the first confirmation; the race starts
    /// once the honest chain holds `n_conf` blocks in total. This is the
    /// reading under which the race reproduces the closed-form series.
    #[default]
    Inclusive,
    /// Confirmations are blocks mined on top of the attacked block; the race
    /// starts after `n_conf` additional honest blocks.
    Exclusive,
}

/// Parameters of the alternate-history attack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackParams {
    /// Attacker mining rate relative to the official chain.
    pub beta: f64,
    /// Confirmations required before the race starts.
    pub n_conf: u32,
    /// Deficit at which the attacker gives up.
    pub give_up: GiveUp,
    /// Confirmation counting convention.
    pub conf_counting: ConfCounting,
}

impl AttackParams {
    pub fn new(beta: f64, n_conf: u32, give_up: GiveUp) -> Result<Self, InvalidParam> {
        let ap = Self {
            beta,
            n_conf,
            give_up,
            conf_counting: ConfCounting::Inclusive,
        };
        ap.validate()?;
        Ok(ap)
    }

    pub fn validate(&self) -> Result<(), InvalidParam> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(InvalidParam::new(
                "beta",
                format!("must be finite and >= 0, got {}", self.beta),
            ));
        }
        if self.n_conf < 1 {
            return Err(InvalidParam::new("n_conf", "must be >= 1"));
        }
        if let GiveUp::Bounded(g) = self.give_up {
            if g < 1 {
                return Err(InvalidParam::new("n_g", "must be >= 1 or unbounded"));
            }
        }
        Ok(())
    }

    /// Absolute attacker mining rate `beta * lambda_b`.
    pub fn attacker_rate(&self, lambda_b: f64) -> f64 {
        self.beta * lambda_b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(lambda_a: f64, lambda_b: f64, lambda_c: f64, s: u32) -> SystemParams {
        SystemParams {
            lambda_a,
            lambda_b,
            lambda_c,
            s,
            ..SystemParams::default()
        }
    }

    #[test]
    fn validate_accepts_stable_params() {
        let p = SystemParams {
            lambda_a: 1.0,
            lambda_b: 2.0,
            lambda_c: 1.0,
            lambda_r: 0.0,
            k: 1,
            r: 1,
            s: 2,
            n_conf: 1,
        };
        let st = validate(&p).unwrap();
        assert!(st.analytic_stable);
        assert!(st.batch_stable);
    }

    #[test]
    fn validate_flags_boundary_as_unstable() {
        let p = params(2.0, 2.0, 2.0, 2);
        let st = validate(&p).unwrap();
        assert!(!st.analytic_stable);
    }

    #[test]
    fn validate_rejects_zero_block_rate() {
        let p = params(1.0, 0.0, 1.0, 1);
        let err = validate(&p).unwrap_err();
        assert_eq!(err.name, "lambda_b");
    }

    #[test]
    fn validate_rejects_nan_and_negative_rates() {
        let p = SystemParams { lambda_a: f64::NAN, ..SystemParams::default() };
        assert_eq!(validate(&p).unwrap_err().name, "lambda_a");
        let p = SystemParams { lambda_a: -0.5, ..SystemParams::default() };
        assert_eq!(validate(&p).unwrap_err().name, "lambda_a");
        let p = SystemParams { lambda_r: f64::INFINITY, ..SystemParams::default() };
        assert_eq!(validate(&p).unwrap_err().name, "lambda_r");
    }

    #[test]
    fn validate_rejects_zero_integers() {
        for field in ["k", "r", "s", "n_conf"] {
            let mut p = SystemParams::default();
            match field {
                "k" => p.k = 0,
                "r" => p.r = 0,
                "s" => p.s = 0,
                _ => p.n_conf = 0,
            }
            assert_eq!(validate(&p).unwrap_err().name, field);
        }
    }

    #[test]
    fn batch_stability_uses_drain_capacity() {
        // lambda_a = 3 exceeds lambda_b but not k*lambda_b.
        let p = SystemParams {
            lambda_a: 3.0,
            lambda_b: 1.0,
            lambda_c: 2.0,
            k: 5,
            s: 2,
            ..SystemParams::default()
        };
        let st = validate(&p).unwrap();
        assert!(!st.analytic_stable);
        assert!(st.batch_stable);
    }

    #[test]
    fn empty_system_enables_only_arrivals() {
        let p = SystemParams::default();
        let ts = transitions(SystemState::EMPTY, &p);
        assert_eq!(ts.len(), 1);
        assert_eq!(ts[0].kind, TransitionKind::Arrival);
        assert_eq!(ts[0].target, SystemState::new(1, 0));
        assert_eq!(ts[0].rate, p.lambda_a);
    }

    #[test]
    fn busy_state_enables_all_four() {
        let p = SystemParams {
            lambda_a: 0.7,
            lambda_b: 1.0,
            lambda_c: 2.0,
            lambda_r: 0.25,
            k: 3,
            r: 1,
            s: 4,
            n_conf: 1,
        };
        let ts = transitions(SystemState::new(5, 2), &p);
        let kinds: Vec<_> = ts.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TransitionKind::Arrival,
                TransitionKind::Mine,
                TransitionKind::Service,
                TransitionKind::Reject
            ]
        );
        assert_eq!(ts[0].target, SystemState::new(6, 2));
        assert_eq!(ts[1].target, SystemState::new(2, 5));
        assert_eq!(ts[2].target, SystemState::new(5, 1));
        assert_eq!(ts[2].rate, 2.0 * p.lambda_c);
        assert_eq!(ts[3].target, SystemState::new(4, 2));
    }

    #[test]
    fn small_queues_move_everything_available() {
        // i <= k mines all i pending; i <= r drops all i pending.
        let p = SystemParams {
            lambda_a: 1.0,
            lambda_b: 1.0,
            lambda_c: 1.0,
            lambda_r: 0.5,
            k: 5,
            r: 3,
            s: 1,
            n_conf: 1,
        };
        let ts = transitions(SystemState::new(2, 1), &p);
        let mine = ts.iter().find(|t| t.kind == TransitionKind::Mine).unwrap();
        assert_eq!(mine.target, SystemState::new(0, 3));
        let reject = ts.iter().find(|t| t.kind == TransitionKind::Reject).unwrap();
        assert_eq!(reject.target, SystemState::new(0, 1));
    }

    #[test]
    fn attack_params_validation() {
        assert!(AttackParams::new(0.0, 1, GiveUp::Unbounded).is_ok());
        assert!(AttackParams::new(-0.1, 1, GiveUp::Unbounded).is_err());
        assert!(AttackParams::new(f64::NAN, 1, GiveUp::Unbounded).is_err());
        assert!(AttackParams::new(0.5, 0, GiveUp::Unbounded).is_err());
        assert!(AttackParams::new(0.5, 2, GiveUp::Bounded(0)).is_err());
        let ap = AttackParams::new(0.4, 2, GiveUp::Bounded(6)).unwrap();
        assert_eq!(ap.attacker_rate(2.0), 0.8);
    }

    proptest! {
        #[test]
        fn targets_never_underflow(
            i in 0u32..50,
            j in 0u32..50,
            k in 1u32..8,
            r in 1u32..8,
            s in 1u32..8,
            lambda_a in 0.0f64..5.0,
            lambda_r in 0.0f64..5.0,
        ) {
            let p = SystemParams {
                lambda_a,
                lambda_b: 1.0,
                lambda_c: 1.0,
                lambda_r,
                k,
                r,
                s,
                n_conf: 1,
            };
            let state = SystemState::new(i, j);
            for t in transitions(state, &p) {
                prop_assert!(t.rate > 0.0);
                prop_assert_ne!(t.target, state);
                let src = i64::from(i) + i64::from(j);
                let tgt = i64::from(t.target.i) + i64::from(t.target.j);
                match t.kind {
                    TransitionKind::Arrival => prop_assert_eq!(tgt, src + 1),
                    TransitionKind::Mine => {
                        prop_assert_eq!(tgt, src);
                        prop_assert_eq!(i64::from(i) - i64::from(t.target.i), i64::from(i.min(k)));
                    }
                    TransitionKind::Service => {
                        prop_assert_eq!(tgt, src - 1);
                        prop_assert_eq!(t.target.i, i);
                        prop_assert!((t.rate - f64::from(j.min(s))).abs() < 1e-12);
                    }
                    TransitionKind::Reject => {
                        prop_assert_eq!(tgt, src - i64::from(i.min(r)));
                        prop_assert_eq!(t.target.j, j);
                    }
                }
            }
        }

        #[test]
        fn transitions_are_pure(i in 0u32..30, j in 0u32..30) {
            let p = SystemParams {
                lambda_r: 0.3,
                k: 4,
                r: 2,
                ..SystemParams::default()
            };
            let state = SystemState::new(i, j);
            prop_assert_eq!(transitions(state, &p), transitions(state, &p));
        }

        #[test]
        fn service_rate_saturates_at_s(j in 1u32..40) {
            let p = SystemParams { s: 5, lambda_c: 0.7, ..SystemParams::default() };
            let ts = transitions(SystemState::new(0, j), &p);
            let service = ts.iter().find(|t| t.kind == TransitionKind::Service).unwrap();
            let expected = f64::from(j.min(5)) * 0.7;
            prop_assert!((service.rate - expected).abs() < 1e-12);
        }
    }
}
