//! Expectation, VaR and CVaR of finite discrete distributions.
//!
//! VaR is the supremum quantile `sup { r | F(r) <= p }`, so `VaR_1 = +inf`
//! and for `p` below the first CDF jump VaR is the least atom. CVaR is the
//! general definition that weights the atom at VaR with the leftover mass
//! `p - P[X < VaR]`, with `CVaR_0 = VaR_0` and `CVaR_1 = E`.

use std::collections::BTreeMap;
use std::fmt;

use num::{One, Signed, Zero};
use thiserror::Error;

use crate::Rational;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("probability {0} is negative")]
    Negative(Rational),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(Rational),
    #[error("empty sample")]
    Empty,
}

/// Finite mapping from values to positive probabilities summing to 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FiniteDistribution {
    atoms: BTreeMap<Rational, Rational>,
}

impl FiniteDistribution {
    /// Merges repeated values and drops zero-probability atoms.
    pub fn new(
        atoms: impl IntoIterator<Item = (Rational, Rational)>,
    ) -> Result<Self, DistributionError> {
        let mut map: BTreeMap<Rational, Rational> = BTreeMap::new();
        for (v, p) in atoms {
            if p.is_negative() {
                return Err(DistributionError::Negative(p));
            }
            *map.entry(v).or_insert_with(Rational::zero) += p;
        }
        map.retain(|_, p| !p.is_zero());
        let total: Rational = map.values().sum();
        if !total.is_one() {
            return Err(DistributionError::NotNormalized(total));
        }
        Ok(Self { atoms: map })
    }

    pub fn point(v: Rational) -> Self {
        Self {
            atoms: BTreeMap::from([(v, Rational::one())]),
        }
    }

    /// Empirical distribution: each sample carries mass 1/n.
    pub fn empirical(
        samples: impl IntoIterator<Item = Rational>,
    ) -> Result<Self, DistributionError> {
        let mut counts: BTreeMap<Rational, u64> = BTreeMap::new();
        let mut n = 0u64;
        for s in samples {
            *counts.entry(s).or_default() += 1;
            n += 1;
        }
        if n == 0 {
            return Err(DistributionError::Empty);
        }
        let atoms = counts
            .into_iter()
            .map(|(v, c)| (v, Rational::new(c.into(), n.into())))
            .collect();
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &BTreeMap<Rational, Rational> {
        &self.atoms
    }

    pub fn prob(&self, v: &Rational) -> Rational {
        self.atoms.get(v).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn min(&self) -> &Rational {
        self.atoms.keys().next().expect("non-empty")
    }

    pub fn max(&self) -> &Rational {
        self.atoms.keys().next_back().expect("non-empty")
    }

    pub fn prob_below(&self, v: &Rational) -> Rational {
        self.atoms.range(..v.clone()).map(|(_, p)| p).sum()
    }
}

impl fmt::Display for FiniteDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (v, p)) in self.atoms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}: {p}")?;
        }
        write!(f, "}}")
    }
}

/// A VaR value: finite, or `+inf` at level 1.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Quantile {
    Finite(Rational),
    Infinite,
}

impl Quantile {
    pub fn finite(self) -> Option<Rational> {
        match self {
            Quantile::Finite(v) => Some(v),
            Quantile::Infinite => None,
        }
    }

    pub fn at_least(&self, v: &Rational) -> bool {
        match self {
            Quantile::Finite(x) => x >= v,
            Quantile::Infinite => true,
        }
    }
}

impl fmt::Display for Quantile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantile::Finite(v) => write!(f, "{v}"),
            Quantile::Infinite => write!(f, "inf"),
        }
    }
}

fn check_level(p: &Rational) {
    assert!(
        !p.is_negative() && *p <= Rational::one(),
        "risk level {p} outside [0,1]"
    );
}

pub fn cdf(d: &FiniteDistribution, r: &Rational) -> Rational {
    d.atoms.range(..=r.clone()).map(|(_, p)| p).sum()
}

pub fn expectation(d: &FiniteDistribution) -> Rational {
    d.atoms.iter().map(|(v, p)| v * p).sum()
}

/// `sup { r | F(r) <= p }`, i.e. the least atom whose CDF exceeds `p`.
/// Panics if `p` is outside `[0,1]`.
pub fn var(d: &FiniteDistribution, p: &Rational) -> Quantile {
    check_level(p);
    if p.is_one() {
        return Quantile::Infinite;
    }
    let mut acc = Rational::zero();
    for (v, q) in &d.atoms {
        acc += q;
        if acc > *p {
            return Quantile::Finite(v.clone());
        }
    }
    unreachable!("total mass is 1 > p")
}

/// Panics if `p` is outside `[0,1]`.
pub fn cvar(d: &FiniteDistribution, p: &Rational) -> Rational {
    check_level(p);
    if p.is_zero() {
        return d.min().clone();
    }
    if p.is_one() {
        return expectation(d);
    }
    let v = var(d, p).finite().unwrap();
    let mut below_mass = Rational::zero();
    let mut below_sum = Rational::zero();
    for (x, q) in d.atoms.range(..v.clone()) {
        below_mass += q;
        below_sum += x * q;
    }
    (below_sum + (p - below_mass) * v) / p
}

/// Atom-wise `lambda * d1 + (1 - lambda) * d2`.
pub fn mix(
    d1: &FiniteDistribution,
    d2: &FiniteDistribution,
    lambda: &Rational,
) -> FiniteDistribution {
    check_level(lambda);
    let mu = Rational::one() - lambda;
    let atoms = d1
        .atoms
        .iter()
        .map(|(v, p)| (v.clone(), p * lambda))
        .chain(d2.atoms.iter().map(|(v, p)| (v.clone(), p * &mu)));
    FiniteDistribution::new(atoms).expect("convex combination of distributions")
}

/// First-order stochastic dominance: `d1`'s CDF lies nowhere above `d2`'s.
pub fn dominates(d1: &FiniteDistribution, d2: &FiniteDistribution) -> bool {
    d1.atoms
        .keys()
        .chain(d2.atoms.keys())
        .all(|r| cdf(d1, r) <= cdf(d2, r))
}

/// Result of [`partition_decompose`]: the selected parts and a risk level
/// per part (zero for unselected ones).
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub selected: Vec<usize>,
    pub levels: Vec<Rational>,
}

/// Splits a CVaR of a mixture into CVaRs of its parts.
///
/// With `v = VaR_p` of the mixture and `theta = (p - P[X<v]) / P[X=v]`,
/// part `i` gets level `p_i = P_i[X<v] + theta * P_i[X=v]`, so the parts'
/// weighted levels sum to `p` and
/// `p * CVaR_p = sum_i w_i * p_i * CVaR_{p_i}(d_i)`.
/// At `p = 0` the part holding the least atom is selected with level 0;
/// at `p = 1` every part is selected with level 1.
pub fn partition_decompose(parts: &[(Rational, FiniteDistribution)], p: &Rational) -> Partition {
    check_level(p);
    assert!(!parts.is_empty());
    let n = parts.len();
    if p.is_zero() {
        let owner = (0..n)
            .min_by(|&i, &j| parts[i].1.min().cmp(parts[j].1.min()).then(i.cmp(&j)))
            .unwrap();
        return Partition {
            selected: vec![owner],
            levels: vec![Rational::zero(); n],
        };
    }
    if p.is_one() {
        return Partition {
            selected: (0..n).collect(),
            levels: vec![Rational::one(); n],
        };
    }
    let mixture = FiniteDistribution::new(
        parts
            .iter()
            .flat_map(|(w, d)| d.atoms.iter().map(move |(v, q)| (v.clone(), w * q))),
    )
    .expect("weights sum to 1");
    let v = var(&mixture, p).finite().unwrap();
    let theta = (p - mixture.prob_below(&v)) / mixture.prob(&v);
    let levels: Vec<Rational> = parts
        .iter()
        .map(|(_, d)| d.prob_below(&v) + &theta * d.prob(&v))
        .collect();
    let selected = (0..n).filter(|&i| levels[i].is_positive()).collect();
    Partition { selected, levels }
}

/// Right-hand side of the partition identity for a decomposition; equals
/// `cvar(mixture, p)` exactly.
pub fn partition_value(
    parts: &[(Rational, FiniteDistribution)],
    part: &Partition,
    p: &Rational,
) -> Rational {
    if p.is_zero() {
        let i = part.selected[0];
        return cvar(&parts[i].1, &Rational::zero());
    }
    let weighted: Rational = part
        .selected
        .iter()
        .map(|&i| &parts[i].0 * &part.levels[i] * cvar(&parts[i].1, &part.levels[i]))
        .sum();
    weighted / p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;

    fn dist(atoms: &[(i64, i64, i64)]) -> FiniteDistribution {
        FiniteDistribution::new(atoms.iter().map(|&(v, n, d)| (rat(v, 1), rat(n, d)))).unwrap()
    }

    fn d_b() -> FiniteDistribution {
        dist(&[(0, 1, 10), (10, 9, 10)])
    }

    fn d_a() -> FiniteDistribution {
        FiniteDistribution::point(rat(5, 1))
    }

    /// The mixed strategy family on the choice example: lambda on the safe
    /// branch, the rest on the 0.9/0.1 gamble.
    fn d_lambda(lambda: Rational) -> FiniteDistribution {
        mix(&d_a(), &d_b(), &lambda)
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(cdf(&d_b(), &rat(0, 1)), rat(1, 10));
        assert_eq!(cdf(&d_b(), &rat(-1, 1)), rat(0, 1));
        assert_eq!(cdf(&d_b(), &rat(10, 1)), rat(1, 1));
    }

    #[test]
    fn var_examples() {
        assert_eq!(var(&d_b(), &rat(1, 20)), Quantile::Finite(rat(0, 1)));
        assert_eq!(var(&d_a(), &rat(7, 8)), Quantile::Finite(rat(5, 1)));
        assert_eq!(
            var(&d_lambda(rat(3, 4)), &rat(1, 20)),
            Quantile::Finite(rat(5, 1))
        );
        assert_eq!(var(&d_b(), &rat(1, 1)), Quantile::Infinite);
    }

    #[test]
    fn var_uses_the_supremum_on_flat_cdf() {
        // F = 1/2 on [0, 10): the inf-quantile at 1/2 is 0, the sup one 10.
        let d = dist(&[(0, 1, 2), (10, 1, 2)]);
        assert_eq!(var(&d, &rat(1, 2)), Quantile::Finite(rat(10, 1)));
        assert_eq!(var(&d, &rat(1, 4)), Quantile::Finite(rat(0, 1)));
    }

    #[test]
    fn cvar_examples() {
        assert_eq!(cvar(&d_b(), &rat(1, 20)), rat(0, 1));
        assert_eq!(cvar(&d_lambda(rat(3, 4)), &rat(1, 20)), rat(5, 2));
        assert_eq!(cvar(&d_lambda(rat(1, 2)), &rat(1, 5)), rat(15, 4));
        assert_eq!(
            cvar(&FiniteDistribution::point(rat(-3, 7)), &rat(1, 3)),
            rat(-3, 7)
        );
        assert_eq!(cvar(&d_lambda(rat(1, 20)), &rat(1, 5)), rat(4, 1));
    }

    #[test]
    fn cvar_corner_levels() {
        let d = d_lambda(rat(3, 4));
        assert_eq!(cvar(&d, &rat(0, 1)), rat(0, 1));
        assert_eq!(cvar(&d, &rat(1, 1)), expectation(&d));
    }

    #[test]
    fn two_point_half_level() {
        assert_eq!(cvar(&dist(&[(0, 1, 2), (10, 1, 2)]), &rat(1, 2)), rat(0, 1));
    }

    #[test]
    fn expectation_examples() {
        assert_eq!(expectation(&d_lambda(rat(3, 4))), rat(6, 1));
        assert_eq!(
            expectation(&FiniteDistribution::point(rat(2, 3))),
            rat(2, 3)
        );
        assert_eq!(expectation(&d_b()), rat(9, 1));
    }

    #[test]
    fn mix_examples() {
        assert_eq!(
            d_lambda(rat(3, 4)),
            dist(&[(0, 1, 40), (5, 3, 4), (10, 9, 40)])
        );
        assert_eq!(mix(&d_b(), &d_b(), &rat(1, 3)), d_b());
        assert_eq!(d_lambda(rat(0, 1)), d_b());
    }

    #[test]
    fn dominance_examples() {
        let ten = FiniteDistribution::point(rat(10, 1));
        assert!(dominates(&ten, &d_a()));
        assert!(!dominates(&d_b(), &d_a()));
        assert!(dominates(&d_b(), &d_b()));
    }

    #[test]
    fn partition_single_part() {
        let parts = vec![(rat(1, 1), d_b())];
        let p = rat(1, 20);
        let part = partition_decompose(&parts, &p);
        assert_eq!(part.selected, vec![0]);
        assert_eq!(part.levels[0], p);
        assert_eq!(partition_value(&parts, &part, &p), cvar(&d_b(), &p));
    }

    #[test]
    fn partition_two_points() {
        let parts = vec![
            (rat(1, 2), FiniteDistribution::point(rat(0, 1))),
            (rat(1, 2), FiniteDistribution::point(rat(10, 1))),
        ];
        let part = partition_decompose(&parts, &rat(1, 2));
        assert_eq!(part.selected, vec![0]);
        assert_eq!(part.levels[0], rat(1, 1));
        assert_eq!(partition_value(&parts, &part, &rat(1, 2)), rat(0, 1));
    }

    #[test]
    fn partition_of_the_mixed_strategy() {
        let parts = vec![(rat(3, 4), d_a()), (rat(1, 4), d_b())];
        let part = partition_decompose(&parts, &rat(1, 20));
        assert_eq!(part.selected, vec![0, 1]);
        assert_eq!(part.levels, vec![rat(1, 30), rat(1, 10)]);
        assert_eq!(partition_value(&parts, &part, &rat(1, 20)), rat(5, 2));
    }

    #[test]
    fn partition_corner_levels() {
        let parts = vec![(rat(3, 4), d_a()), (rat(1, 4), d_b())];
        let zero = partition_decompose(&parts, &rat(0, 1));
        assert_eq!(zero.selected, vec![1]);
        assert_eq!(partition_value(&parts, &zero, &rat(0, 1)), rat(0, 1));
        let one = partition_decompose(&parts, &rat(1, 1));
        assert_eq!(partition_value(&parts, &one, &rat(1, 1)), rat(6, 1));
    }

    #[test]
    fn construction_rejects_bad_mass() {
        assert!(matches!(
            FiniteDistribution::new([(rat(1, 1), rat(9, 10))]),
            Err(DistributionError::NotNormalized(_))
        ));
        assert!(FiniteDistribution::empirical(Vec::<Rational>::new()).is_err());
    }
}
