//! Joint-distribution feasibility for three binary variables.
//!
//! Given the three marginals `P(X_i = 1)` and the three pairwise agreements
//! `P(X_i = X_j)`, decide whether a single distribution over `{0,1}³`
//! reproduces them. The linear program has eight unknowns and is solved
//! exactly over rationals with a phase-one simplex. Infeasible inputs come
//! back with a Farkas certificate: a function on the eight outcomes that is
//! nonnegative everywhere, yet whose expectation implied by the inputs is
//! negative.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{require_probability, ConfigError};

pub const ATOMS: usize = 8;
pub const CONSTRAINTS: usize = 7;

/// Unordered pairs in agreement order: (1,2), (1,3), (2,3).
pub const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];

/// Value of `X_i` (0-based `i`) at outcome `atom`; `X_1` is the high bit.
pub fn bit(atom: usize, i: usize) -> u8 {
    ((atom >> (2 - i)) & 1) as u8
}

pub fn atom_label(atom: usize) -> String {
    (0..3).map(|i| char::from(b'0' + bit(atom, i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSpec {
    /// `P(X_i = 1)`.
    pub marginals: [f64; 3],
    /// `P(X_1 = X_2)`, `P(X_1 = X_3)`, `P(X_2 = X_3)`.
    pub agreements: [f64; 3],
}

impl PairwiseSpec {
    pub fn from_slice(values: &[f64]) -> Result<Self, ConfigError> {
        let values: [f64; 6] = values
            .try_into()
            .map_err(|_| ConfigError::new("spec", "expected six numbers: m1 m2 m3 a12 a13 a23"))?;
        let spec = Self {
            marginals: [values[0], values[1], values[2]],
            agreements: [values[3], values[4], values[5]],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (i, m) in self.marginals.iter().enumerate() {
            require_probability(*m, &format!("marginals[{i}]"))?;
        }
        for (i, a) in self.agreements.iter().enumerate() {
            require_probability(*a, &format!("agreements[{i}]"))?;
        }
        Ok(())
    }

    /// Right-hand side: total mass, marginals, agreements.
    pub fn targets(&self) -> [f64; CONSTRAINTS] {
        let [m1, m2, m3] = self.marginals;
        let [a12, a13, a23] = self.agreements;
        [1.0, m1, m2, m3, a12, a13, a23]
    }
}

/// Coefficient of `atom` in constraint `row` (0 or 1).
pub fn constraint_coefficient(row: usize, atom: usize) -> u8 {
    match row {
        0 => 1,
        1..=3 => bit(atom, row - 1),
        4..=6 => {
            let (i, j) = PAIRS[row - 4];
            (bit(atom, i) == bit(atom, j)) as u8
        }
        _ => panic!("constraint row {row} out of range"),
    }
}

/// Weights over the eight outcomes, indexed by [`atom_label`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub weights: [f64; ATOMS],
}

impl JointDistribution {
    pub fn marginal(&self, i: usize) -> f64 {
        (0..ATOMS).filter(|&a| bit(a, i) == 1).map(|a| self.weights[a]).sum()
    }

    pub fn agreement(&self, i: usize, j: usize) -> f64 {
        (0..ATOMS)
            .filter(|&a| bit(a, i) == bit(a, j))
            .map(|a| self.weights[a])
            .sum()
    }

    /// Largest deviation from `spec` over all seven constraints, or infinity
    /// if a weight is negative.
    pub fn max_violation(&self, spec: &PairwiseSpec) -> f64 {
        if self.weights.iter().any(|w| *w < 0.0) {
            return f64::INFINITY;
        }
        let mut worst = (self.weights.iter().sum::<f64>() - 1.0).abs();
        for i in 0..3 {
            worst = worst.max((self.marginal(i) - spec.marginals[i]).abs());
        }
        for (k, &(i, j)) in PAIRS.iter().enumerate() {
            worst = worst.max((self.agreement(i, j) - spec.agreements[k]).abs());
        }
        worst
    }
}

/// Proof of infeasibility: `functional = Σ_k coefficients[k] · row_k` is
/// nonnegative on every outcome while `Σ_k coefficients[k] · target_k < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub coefficients: Vec<BigRational>,
    pub functional: Vec<BigRational>,
    pub value: BigRational,
}

impl Certificate {
    /// Re-checks the certificate against `spec` in exact arithmetic.
    pub fn verify(&self, spec: &PairwiseSpec) -> bool {
        if self.coefficients.len() != CONSTRAINTS || self.functional.len() != ATOMS {
            return false;
        }
        let Some(targets) = exact_targets(spec) else { return false };
        let combined_ok = (0..ATOMS).all(|a| {
            let g: BigRational = (0..CONSTRAINTS)
                .map(|k| &self.coefficients[k] * BigRational::from_integer(constraint_coefficient(k, a).into()))
                .sum();
            g == self.functional[a] && !g.is_negative()
        });
        let value: BigRational = self.coefficients.iter().zip(&targets).map(|(y, b)| y * b).sum();
        combined_ok && value == self.value && value.is_negative()
    }

    pub fn functional_f64(&self) -> Vec<f64> {
        self.functional.iter().map(to_f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible { witness: JointDistribution },
    Infeasible { certificate: Certificate },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible { .. })
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Feasibility::Feasible { witness } => serde_json::json!({
                "feasible": true,
                "witness": (0..ATOMS)
                    .map(|a| (atom_label(a), serde_json::json!(witness.weights[a])))
                    .collect::<serde_json::Map<_, _>>(),
            }),
            Feasibility::Infeasible { certificate } => serde_json::json!({
                "feasible": false,
                "certificate": {
                    "functional": (0..ATOMS)
                        .map(|a| (atom_label(a), serde_json::json!(certificate.functional[a].to_string())))
                        .collect::<serde_json::Map<_, _>>(),
                    "coefficients": certificate.coefficients.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                    "value": certificate.value.to_string(),
                    "value_f64": to_f64(&certificate.value),
                },
            }),
        }
    }
}

fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn exact_targets(spec: &PairwiseSpec) -> Option<Vec<BigRational>> {
    spec.targets().iter().map(|&v| BigRational::from_float(v)).collect()
}

/// Dense phase-one simplex over rationals with Bland's rule.
struct PhaseOne {
    rows: usize,
    cols: usize,
    /// `rows × (cols + 1)`, last column is the right-hand side.
    tableau: Vec<Vec<BigRational>>,
    /// Reduced costs for every column, then the negated objective.
    costs: Vec<BigRational>,
    basis: Vec<usize>,
}

impl PhaseOne {
    /// Sets up `min Σ s` subject to `A x + s = b`, `x, s ≥ 0`.
    fn new(a: &[Vec<BigRational>], b: &[BigRational]) -> Self {
        let rows = a.len();
        let n = a[0].len();
        let cols = n + rows;
        let mut tableau = Vec::with_capacity(rows);
        for (i, (row, rhs)) in a.iter().zip(b).enumerate() {
            let flip = rhs.is_negative();
            let sign = |x: &BigRational| if flip { -x.clone() } else { x.clone() };
            let mut t: Vec<BigRational> = row.iter().map(sign).collect();
            t.extend((0..rows).map(|k| if k == i { BigRational::one() } else { BigRational::zero() }));
            t.push(sign(rhs));
            tableau.push(t);
        }
        // artificials start basic, so their reduced costs are zero
        let mut costs = vec![BigRational::zero(); cols + 1];
        for t in &tableau {
            for (j, c) in costs.iter_mut().enumerate().take(n) {
                *c -= &t[j];
            }
            costs[cols] -= &t[cols];
        }
        Self {
            rows,
            cols,
            tableau,
            costs,
            basis: (n..cols).collect(),
        }
    }

    fn solve(&mut self) {
        while let Some(enter) = (0..self.cols).find(|&j| self.costs[j].is_negative()) {
            let mut leave: Option<(usize, BigRational)> = None;
            for i in 0..self.rows {
                let pivot = &self.tableau[i][enter];
                if !pivot.is_positive() {
                    continue;
                }
                let ratio = &self.tableau[i][self.cols] / pivot;
                let better = match &leave {
                    None => true,
                    Some((best_row, best)) => {
                        ratio < *best || (ratio == *best && self.basis[i] < self.basis[*best_row])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            // phase one is bounded below by zero, so a pivot row always exists
            let (row, _) = leave.expect("phase-one objective is bounded");
            self.pivot(row, enter);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.tableau[row][col].clone();
        for x in self.tableau[row].iter_mut() {
            *x /= &p;
        }
        let pivot_row = self.tableau[row].clone();
        for (i, t) in self.tableau.iter_mut().enumerate() {
            if i == row || t[col].is_zero() {
                continue;
            }
            let f = t[col].clone();
            for (x, pr) in t.iter_mut().zip(&pivot_row) {
                *x -= &f * pr;
            }
        }
        let f = self.costs[col].clone();
        if !f.is_zero() {
            for (x, pr) in self.costs.iter_mut().zip(&pivot_row) {
                *x -= &f * pr;
            }
        }
        self.basis[row] = col;
    }

    fn objective(&self) -> BigRational {
        -self.costs[self.cols].clone()
    }

    fn primal(&self, n: usize) -> Vec<BigRational> {
        let mut x = vec![BigRational::zero(); n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.tableau[i][self.cols].clone();
            }
        }
        x
    }

    /// Simplex multipliers `y` for the original (unflipped) rows.
    fn duals(&self, n: usize, flipped: &[bool]) -> Vec<BigRational> {
        (0..self.rows)
            .map(|k| {
                let y = BigRational::one() - &self.costs[n + k];
                if flipped[k] {
                    -y
                } else {
                    y
                }
            })
            .collect()
    }
}

/// Decides whether some distribution over `{0,1}³` matches `spec`.
pub fn check_feasibility(spec: &PairwiseSpec) -> Result<Feasibility, ConfigError> {
    spec.validate()?;
    let b = exact_targets(spec).ok_or_else(|| ConfigError::new("spec", "values must be finite"))?;
    let a: Vec<Vec<BigRational>> = (0..CONSTRAINTS)
        .map(|k| {
            (0..ATOMS)
                .map(|j| BigRational::from_integer(BigInt::from(constraint_coefficient(k, j))))
                .collect()
        })
        .collect();
    let flipped: Vec<bool> = b.iter().map(Signed::is_negative).collect();
    let mut lp = PhaseOne::new(&a, &b);
    lp.solve();

    if lp.objective().is_zero() {
        let x = lp.primal(ATOMS);
        let mut weights = [0.0; ATOMS];
        for (w, v) in weights.iter_mut().zip(&x) {
            *w = to_f64(v);
        }
        return Ok(Feasibility::Feasible {
            witness: JointDistribution { weights },
        });
    }

    // y maximizes yᵀb with yᵀA ≤ 0; negate to get a nonnegative functional
    let coefficients: Vec<BigRational> = lp.duals(ATOMS, &flipped).into_iter().map(|y| -y).collect();
    let functional: Vec<BigRational> = (0..ATOMS)
        .map(|j| (0..CONSTRAINTS).map(|k| &coefficients[k] * &a[k][j]).sum())
        .collect();
    let value: BigRational = coefficients.iter().zip(&b).map(|(y, t)| y * t).sum();
    Ok(Feasibility::Infeasible {
        certificate: Certificate {
            coefficients,
            functional,
            value,
        },
    })
}

/// Tight lower bound on `P(A ∧ B)` given `P(A)` and `P(B)`, evaluated
/// exactly and rounded once.
pub fn conjunction_bound(p_a: f64, p_b: f64) -> Result<f64, ConfigError> {
    require_probability(p_a, "p_a")?;
    require_probability(p_b, "p_b")?;
    let exact = |x: f64| BigRational::from_float(x).expect("probabilities are finite");
    let bound = exact(p_a) + exact(p_b) - BigRational::one();
    Ok(if bound.is_positive() { to_f64(&bound) } else { 0.0 })
}

/// A two-event space attaining [`conjunction_bound`]: weights for
/// `A∧B`, `A∧¬B`, `¬A∧B`, `¬A∧¬B`.
pub fn extremal_conjunction_space(p_a: f64, p_b: f64) -> Result<[f64; 4], ConfigError> {
    let both = conjunction_bound(p_a, p_b)?;
    Ok([both, p_a - both, p_b - both, 1.0 - p_a - p_b + both])
}

/// Lower bound on `P(X_1 = X_2)` implied by `P(X_1 = X_3)` and `P(X_2 = X_3)`:
/// disagreeing with `X_3` on both sides forces `X_1 = X_2`.
pub fn implied_agreement_bound(agree_13: f64, agree_23: f64) -> Result<f64, ConfigError> {
    conjunction_bound(1.0 - agree_13, 1.0 - agree_23)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: f64, a: [f64; 3]) -> PairwiseSpec {
        PairwiseSpec {
            marginals: [m; 3],
            agreements: a,
        }
    }

    #[test]
    fn quarter_agreements_infeasible() {
        let s = spec(0.5, [0.25; 3]);
        match check_feasibility(&s).unwrap() {
            Feasibility::Infeasible { certificate } => assert!(certificate.verify(&s)),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn perfect_correlation_feasible() {
        let s = spec(0.5, [1.0; 3]);
        let Feasibility::Feasible { witness } = check_feasibility(&s).unwrap() else {
            panic!("infeasible")
        };
        assert!(witness.max_violation(&s) < 1e-12);
        assert_eq!(witness.weights[0], 0.5);
        assert_eq!(witness.weights[7], 0.5);
    }

    #[test]
    fn independence_feasible() {
        let s = spec(0.5, [0.5; 3]);
        let Feasibility::Feasible { witness } = check_feasibility(&s).unwrap() else {
            panic!("infeasible")
        };
        assert!(witness.max_violation(&s) < 1e-12);
    }

    #[test]
    fn third_agreement_threshold() {
        for (a, feasible) in [(0.49, false), (0.5, true), (0.51, true), (1.0, true), (0.0, false)] {
            let s = spec(0.5, [0.25, 0.25, a]);
            assert_eq!(check_feasibility(&s).unwrap().is_feasible(), feasible, "a = {a}");
        }
    }

    #[test]
    fn tampered_certificate_fails_verification() {
        let s = spec(0.5, [0.25; 3]);
        let Feasibility::Infeasible { mut certificate } = check_feasibility(&s).unwrap() else {
            panic!()
        };
        certificate.coefficients[0] += BigRational::one();
        assert!(!certificate.verify(&s));
        let other = spec(0.5, [0.5; 3]);
        let Feasibility::Infeasible { certificate } = check_feasibility(&s).unwrap() else {
            panic!()
        };
        assert!(!certificate.verify(&other));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(check_feasibility(&spec(1.5, [0.5; 3])).is_err());
        assert!(PairwiseSpec::from_slice(&[0.5; 5]).is_err());
    }

    #[test]
    fn conjunction_examples() {
        assert_eq!(conjunction_bound(0.75, 0.75).unwrap(), 0.5);
        assert_eq!(conjunction_bound(1.0, 0.3).unwrap(), 0.3);
        assert_eq!(conjunction_bound(0.3, 0.4).unwrap(), 0.0);
        assert_eq!(implied_agreement_bound(0.25, 0.25).unwrap(), 0.5);
        assert!(conjunction_bound(-0.1, 0.5).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(atom_label(0), "000");
        assert_eq!(atom_label(4), "100");
        assert_eq!(atom_label(6), "110");
        assert_eq!(constraint_coefficient(4, 6), 1);
        assert_eq!(constraint_coefficient(5, 6), 0);
    }
}
