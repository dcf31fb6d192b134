//! Bandwidth adaptation schemes run by a negotiator over its flows.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::Zero;

use crate::rate::Rate;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AimdParams {
    /// Additive increase per step.
    pub alpha: Rate,
    /// Multiplicative decrease factor, below one.
    pub beta: Ratio<u64>,
}

impl Default for AimdParams {
    fn default() -> Self {
        AimdParams {
            alpha: Rate::mbps(1),
            beta: Ratio::new(1, 2),
        }
    }
}

fn scale(v: u64, beta: Ratio<u64>) -> u64 {
    u64::try_from(u128::from(v) * u128::from(*beta.numer()) / u128::from(*beta.denom())).expect("beta is below one")
}

/// One AIMD round. A flow whose demand exceeds its allocation grows by
/// `alpha` (up to its demand); a flow demanding less drops to its demand. If
/// the total then exceeds `cap`, the flows that grew fall back to `beta`
/// times their previous allocation, and while the total is still too large
/// every flow is multiplied by `beta`.
pub fn step_aimd(allocations: &[u64], demands: &[u64], cap: u64, params: &AimdParams) -> Vec<u64> {
    assert_eq!(allocations.len(), demands.len(), "one demand per allocation");
    let mut grew = vec![false; allocations.len()];
    let mut next: Vec<u64> = allocations
        .iter()
        .zip(demands)
        .enumerate()
        .map(|(i, (&a, &d))| {
            if d > a {
                grew[i] = true;
                a.saturating_add(params.alpha.0).min(d)
            } else {
                d
            }
        })
        .collect();
    let total = |v: &[u64]| v.iter().map(|&x| u128::from(x)).sum::<u128>();
    if total(&next) > u128::from(cap) {
        for ((x, g), &prev) in next.iter_mut().zip(&grew).zip(allocations) {
            if *g {
                *x = scale(prev, params.beta);
            }
        }
    }
    while total(&next) > u128::from(cap) {
        for x in &mut next {
            *x = scale(*x, params.beta);
        }
    }
    next
}

/// Max-min fair shares of `capacity`: demands are satisfied in ascending
/// order while they fit under an equal split of what is left, and the rest
/// share equally. No flow receives more than it demands.
pub fn step_mmfs(demands: &[BigRational], capacity: &BigRational) -> Vec<BigRational> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| demands[a].cmp(&demands[b]).then(a.cmp(&b)));
    let mut out = vec![BigRational::zero(); demands.len()];
    let mut remaining = capacity.clone();
    for (k, &i) in order.iter().enumerate() {
        let share = &remaining / BigRational::from_integer(BigInt::from(order.len() - k));
        if demands[i] <= share {
            out[i] = demands[i].clone();
            remaining -= &demands[i];
        } else {
            for &j in &order[k..] {
                out[j] = share.clone();
            }
            break;
        }
    }
    out
}

/// Splits whatever `allocations` leave of `capacity` equally among all of
/// them.
pub fn share_leftover(allocations: &[BigRational], capacity: &BigRational) -> Vec<BigRational> {
    if allocations.is_empty() {
        return Vec::new();
    }
    let used: BigRational = allocations.iter().sum();
    let extra = (capacity - used) / BigRational::from_integer(BigInt::from(allocations.len()));
    if extra <= BigRational::zero() {
        return allocations.to_vec();
    }
    allocations.iter().map(|a| a + &extra).collect()
}

/// [`step_mmfs`] on whole bytes per second, rounding shares down.
pub fn step_mmfs_bytes(demands: &[u64], capacity: u64) -> Vec<u64> {
    let int = |v: u64| BigRational::from_integer(BigInt::from(v));
    let d: Vec<BigRational> = demands.iter().map(|&v| int(v)).collect();
    step_mmfs(&d, &int(capacity))
        .into_iter()
        .map(|r| u64::try_from(r.floor().to_integer()).expect("shares are at most the capacity"))
        .collect()
}
