//! Max-min fair allocation with per-flow floors, in exact arithmetic.

use num_rational::BigRational;
use num_traits::Zero;

/// A shared capacity and the flows (by index) that cross it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resource {
    pub capacity: BigRational,
    pub users: Vec<usize>,
}

/// Raises a common water level `λ`; flow `i` gets `min(demand, max(floor, λ))`
/// until a resource it crosses saturates, at which point it keeps its rate.
/// Floors are clamped to demands. Floors that already overload a resource
/// are kept as they are; callers detect the overload.
pub fn water_fill(resources: &[Resource], demands: &[BigRational], floors: &[BigRational]) -> Vec<BigRational> {
    let n = demands.len();
    let floor: Vec<BigRational> = floors.iter().zip(demands).map(|(f, d)| f.clone().min(d.clone())).collect();
    let mut fixed: Vec<Option<BigRational>> = vec![None; n];
    let mut level = BigRational::zero();
    let rate = |i: usize, level: &BigRational, fixed: &[Option<BigRational>]| -> BigRational {
        match &fixed[i] {
            Some(r) => r.clone(),
            None => demands[i].clone().min(floor[i].clone().max(level.clone())),
        }
    };
    loop {
        for i in 0..n {
            if fixed[i].is_none() && demands[i] <= level {
                fixed[i] = Some(demands[i].clone());
            }
        }
        let rising = |i: usize, fixed: &[Option<BigRational>]| fixed[i].is_none() && floor[i] <= level;
        let mut next: Option<BigRational> = None;
        let mut consider = |c: BigRational| {
            if next.as_ref().is_none_or(|x| c < *x) {
                next = Some(c);
            }
        };
        let mut froze = false;
        for res in resources {
            let slope = res.users.iter().filter(|&&i| rising(i, &fixed)).count();
            if slope == 0 {
                continue;
            }
            let used: BigRational = res.users.iter().map(|&i| rate(i, &level, &fixed)).sum();
            if used >= res.capacity {
                for &i in &res.users {
                    if rising(i, &fixed) {
                        fixed[i] = Some(rate(i, &level, &fixed));
                    }
                }
                froze = true;
                continue;
            }
            consider(&level + (&res.capacity - used) / BigRational::from_integer(slope.into()));
        }
        if froze {
            continue;
        }
        for i in (0..n).filter(|&i| fixed[i].is_none()) {
            for b in [&floor[i], &demands[i]] {
                if *b > level {
                    consider(b.clone());
                }
            }
        }
        match next {
            Some(l) => level = l,
            None => break,
        }
    }
    (0..n).map(|i| rate(i, &level, &fixed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: i64) -> BigRational {
        BigRational::from_integer(v.into())
    }

    fn link(cap: i64, users: &[usize]) -> Resource {
        Resource {
            capacity: r(cap),
            users: users.to_vec(),
        }
    }

    #[test]
    fn guarantee_holds_against_background() {
        let out = water_fill(&[link(100, &[0, 1])], &[r(100), r(100)], &[r(90), r(0)]);
        assert_eq!(out, vec![r(90), r(10)]);
    }

    #[test]
    fn idle_guarantee_frees_bandwidth() {
        let out = water_fill(&[link(100, &[0, 1])], &[r(0), r(100)], &[r(90), r(0)]);
        assert_eq!(out, vec![r(0), r(100)]);
    }

    #[test]
    fn equal_split_with_small_demand() {
        let out = water_fill(&[link(100, &[0, 1, 2])], &[r(10), r(100), r(100)], &[r(0), r(0), r(0)]);
        assert_eq!(out, vec![r(10), r(45), r(45)]);
    }

    #[test]
    fn thirds_are_exact() {
        let out = water_fill(&[link(100, &[0, 1, 2])], &[r(100), r(100), r(100)], &[r(0), r(0), r(0)]);
        let third = BigRational::new(100.into(), 3.into());
        assert_eq!(out, vec![third.clone(), third.clone(), third]);
    }

    #[test]
    fn two_bottlenecks() {
        // Flow 0 crosses both links, flow 1 only the first, flow 2 only the second.
        let res = [link(10, &[0, 1]), link(4, &[0, 2])];
        let out = water_fill(&res, &[r(100), r(100), r(100)], &[r(0), r(0), r(0)]);
        assert_eq!(out, vec![r(2), r(8), r(2)]);
    }
}
