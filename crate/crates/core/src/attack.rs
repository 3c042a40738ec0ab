//! Monte Carlo simulation of the alternate-history attack race.
//!
//! An attacker forks the chain at the attacked block and mines privately at
//! `beta` times the honest rate. Time is abstracted to the block-event
//! sequence: by Poisson thinning, each successive block is honest with
//! probability `1/(1+beta)` and the attacker's otherwise, so success
//! probabilities need no continuous clock. Once the attacked block has its
//! confirmations the attacker races; the attack succeeds when the private
//! fork gets strictly longer, and fails when the deficit exceeds the give-up
//! threshold.
//!
//! With an unbounded threshold the closed form in
//! [`crate::analytic::attack_probability`] applies; this module exists to
//! cross-validate it and to quantify what finite thresholds change.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{AttackParams, ConfCounting, GiveUp, InvalidParam};

/// Race-step budget per trial; only reachable for `beta >= 1` runs, where a
/// capped trial counts as failure and is tallied separately.
const STEP_CAP: u64 = 1_000_000_000;

/// Success probability below which an unbounded-threshold race is abandoned
/// as failed. The induced bias is orders of magnitude under any Monte Carlo
/// standard error.
const NEGLIGIBLE_SUCCESS: f64 = 1e-12;

/// Outcome of one simulated race.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RaceOutcome {
    pub success: bool,
    /// The attacker abandoned after falling more than `n_g` blocks behind.
    pub gave_up: bool,
}

/// Monte Carlo estimate of the attack success probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackEstimate {
    pub p_hat: f64,
    /// Binomial standard error `sqrt(p_hat (1 - p_hat) / trials)`.
    pub stderr: f64,
    pub trials: u64,
    /// Fraction of failed trials that ended by giving up.
    pub gave_up_fraction: f64,
    /// Trials cut by the hard step cap; zero in any meaningful run.
    pub capped_trials: u64,
}

/// Deficit beyond which catching up has negligible probability; the
/// simulated stand-in for an unbounded give-up threshold.
fn negligible_deficit(beta: f64) -> i64 {
    if beta <= 0.0 {
        return 0;
    }
    // beta^(d+1) < NEGLIGIBLE_SUCCESS
    (NEGLIGIBLE_SUCCESS.ln() / beta.ln()).ceil() as i64 + 1
}

/// Runs a single race.
///
/// Phase 1 draws block events until the honest chain holds the attacked
/// block's confirmations (`n_conf` honest blocks under inclusive counting,
/// `n_conf + 1` under exclusive); the attacker mines from the attacked
/// block's epoch, so its head start is whatever it managed meanwhile. Phase
/// 2 is the biased random walk on the length deficit: success on overtake by
/// one, failure once the deficit exceeds the give-up threshold.
pub fn race_once(ap: &AttackParams, rng: &mut impl Rng) -> RaceOutcome {
    let honest_goal = match ap.conf_counting {
        ConfCounting::Inclusive => i64::from(ap.n_conf),
        ConfCounting::Exclusive => i64::from(ap.n_conf) + 1,
    };
    if ap.beta == 0.0 {
        // The attacker mines nothing, ever.
        return RaceOutcome {
            success: false,
            gave_up: false,
        };
    }
    let p_honest = 1.0 / (1.0 + ap.beta);

    // Phase 1: confirmation period.
    let mut honest = 0i64;
    let mut attacker = 0i64;
    while honest < honest_goal {
        if rng.random::<f64>() < p_honest {
            honest += 1;
        } else {
            attacker += 1;
        }
    }

    // Phase 2: the race on the deficit d = honest - attacker.
    let give_up_at: i64 = match ap.give_up {
        GiveUp::Bounded(g) => i64::from(g),
        GiveUp::Unbounded => {
            if ap.beta < 1.0 {
                negligible_deficit(ap.beta)
            } else {
                i64::MAX
            }
        }
    };
    let mut deficit = honest_goal - attacker;
    let mut steps = 0u64;
    loop {
        if deficit <= -1 {
            return RaceOutcome {
                success: true,
                gave_up: false,
            };
        }
        if deficit > give_up_at {
            return RaceOutcome {
                success: false,
                gave_up: matches!(ap.give_up, GiveUp::Bounded(_)),
            };
        }
        if steps >= STEP_CAP {
            return RaceOutcome {
                success: false,
                gave_up: false,
            };
        }
        if rng.random::<f64>() < p_honest {
            deficit += 1;
        } else {
            deficit -= 1;
        }
        steps += 1;
    }
}

/// Estimates the attack success probability from `trials` independent races.
///
/// Trial `t` draws from substream `t` of a counter-based generator seeded
/// with `seed`, so the estimate is reproducible and independent of any
/// execution order.
pub fn estimate(ap: &AttackParams, trials: u64, seed: u64) -> Result<AttackEstimate, InvalidParam> {
    ap.validate()?;
    if trials < 1 {
        return Err(InvalidParam::new("trials", "must be >= 1"));
    }
    let mut successes = 0u64;
    let mut gave_up = 0u64;
    let mut capped = 0u64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let outcome = race_once(ap, &mut rng);
        if outcome.success {
            successes += 1;
        } else if outcome.gave_up {
            gave_up += 1;
        } else if ap.beta >= 1.0 {
            capped += 1;
        }
    }
    let p_hat = successes as f64 / trials as f64;
    let failures = trials - successes;
    Ok(AttackEstimate {
        p_hat,
        stderr: (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
        trials,
        gave_up_fraction: if failures > 0 {
            gave_up as f64 / failures as f64
        } else {
            0.0
        },
        capped_trials: capped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::attack_probability;

    fn ap(beta: f64, n_conf: u32, give_up: GiveUp) -> AttackParams {
        AttackParams::new(beta, n_conf, give_up).unwrap()
    }

    #[test]
    fn zero_mining_power_never_succeeds() {
        let est = estimate(&ap(0.0, 1, GiveUp::Unbounded), 10_000, 1).unwrap();
        assert_eq!(est.p_hat, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn majority_attacker_always_succeeds() {
        let est = estimate(&ap(1.5, 1, GiveUp::Unbounded), 5_000, 2).unwrap();
        assert_eq!(est.p_hat, 1.0);
        assert_eq!(est.capped_trials, 0);
        assert_eq!(est.gave_up_fraction, 0.0);
    }

    #[test]
    fn matches_closed_form_at_half_power() {
        // Closed form: 7/18 = 0.3888...
        let params = ap(0.5, 1, GiveUp::Unbounded);
        let expected = attack_probability(&params).unwrap();
        let est = estimate(&params, 200_000, 3).unwrap();
        assert!(
            (est.p_hat - expected).abs() < 4.0 * est.stderr,
            "p_hat {} vs {expected}, stderr {}",
            est.p_hat,
            est.stderr
        );
    }

    #[test]
    fn matches_closed_form_on_anchor_points() {
        for (beta, n_conf, seed) in [(0.1, 1, 4u64), (0.1, 3, 5u64)] {
            let params = ap(beta, n_conf, GiveUp::Unbounded);
            let expected = attack_probability(&params).unwrap();
            let est = estimate(&params, 400_000, seed).unwrap();
            assert!(
                (est.p_hat - expected).abs() < 4.0 * est.stderr.max(1e-5),
                "beta={beta} N={n_conf}: p_hat {} vs {expected} stderr {}",
                est.p_hat,
                est.stderr
            );
            assert_eq!(est.gave_up_fraction, 0.0);
        }
    }

    #[test]
    fn giving_up_only_loses_successes() {
        let bounded = estimate(&ap(0.3, 1, GiveUp::Bounded(1)), 150_000, 6).unwrap();
        let unbounded = estimate(&ap(0.3, 1, GiveUp::Unbounded), 150_000, 6).unwrap();
        assert!(
            bounded.p_hat <= unbounded.p_hat + 3.0 * (bounded.stderr + unbounded.stderr),
            "bounded {} vs unbounded {}",
            bounded.p_hat,
            unbounded.p_hat
        );
        assert!(bounded.gave_up_fraction > 0.0);
    }

    #[test]
    fn monotone_in_give_up_threshold() {
        let mut prev = -1.0;
        for g in [1u32, 2, 4, 8, 16] {
            let est = estimate(&ap(0.4, 2, GiveUp::Bounded(g)), 100_000, 7).unwrap();
            assert!(
                est.p_hat >= prev - 3.0 * est.stderr,
                "N_g={g}: {} after {prev}",
                est.p_hat
            );
            prev = est.p_hat;
        }
    }

    #[test]
    fn monotone_in_beta() {
        let mut prev = -1.0;
        for beta in [0.05, 0.2, 0.4, 0.6, 0.8, 0.95] {
            let est = estimate(&ap(beta, 2, GiveUp::Unbounded), 60_000, 8).unwrap();
            assert!(
                est.p_hat >= prev - 3.0 * est.stderr,
                "beta={beta}: {} after {prev}",
                est.p_hat
            );
            prev = est.p_hat;
        }
    }

    #[test]
    fn more_confirmations_hurt_the_attacker() {
        let mut prev = 2.0;
        for n_conf in [1u32, 2, 4, 8] {
            let est = estimate(&ap(0.5, n_conf, GiveUp::Unbounded), 60_000, 9).unwrap();
            assert!(
                est.p_hat <= prev + 3.0 * est.stderr,
                "N={n_conf}: {} after {prev}",
                est.p_hat
            );
            prev = est.p_hat;
        }
    }

    #[test]
    fn exclusive_counting_shifts_the_law_by_one() {
        // One extra honest block is exactly the closed form at N + 1.
        let mut params = ap(0.3, 1, GiveUp::Unbounded);
        params.conf_counting = ConfCounting::Exclusive;
        let expected = attack_probability(&ap(0.3, 2, GiveUp::Unbounded)).unwrap();
        let est = estimate(&params, 200_000, 10).unwrap();
        assert!(
            (est.p_hat - expected).abs() < 4.0 * est.stderr,
            "exclusive p_hat {} vs shifted closed form {expected}",
            est.p_hat
        );
    }

    #[test]
    fn estimates_are_deterministic() {
        let params = ap(0.35, 2, GiveUp::Bounded(5));
        let a = estimate(&params, 50_000, 42).unwrap();
        let b = estimate(&params, 50_000, 42).unwrap();
        assert_eq!(a, b);
        let c = estimate(&params, 50_000, 43).unwrap();
        assert_ne!(a.p_hat.to_bits(), c.p_hat.to_bits());
    }

    #[test]
    fn rejects_zero_trials() {
        assert!(estimate(&ap(0.5, 1, GiveUp::Unbounded), 0, 0).is_err());
    }
}
