//! Truncated multivariate Taylor arithmetic (forward-mode derivative towers).
//!
//! A [`Jet`] holds the Taylor coefficients of a smooth function around a base
//! point, truncated at a fixed total degree. Propagating jets through a
//! kernel formula yields every mixed partial up to the truncation order in a
//! single evaluation, which is the only numerically stable way to reach the
//! high orders the certificate Gram systems need.

use std::collections::HashMap;
use std::sync::Arc;

use crate::poly::{factorial, graded_monomials, MultiIndex};

/// Shared context for jets: a fixed variable count and truncation degree,
/// with the graded monomial ordering and its inverse lookup table.
#[derive(Debug)]
pub struct JetSpace {
    dim: usize,
    degree: u32,
    monomials: Vec<MultiIndex>,
    index: HashMap<Vec<u32>, usize>,
}

impl JetSpace {
    pub fn new(dim: usize, degree: u32) -> Arc<Self> {
        let monomials = graded_monomials(dim, degree);
        let index = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.0.clone(), i))
            .collect();
        Arc::new(JetSpace {
            dim,
            degree,
            monomials,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn position(&self, alpha: &MultiIndex) -> Option<usize> {
        self.index.get(&alpha.0).copied()
    }
}

/// Taylor coefficients of a function of the jet variables, truncated at the
/// space's total degree. `coef[i]` multiplies the `i`-th graded monomial.
#[derive(Debug, Clone)]
pub struct Jet {
    space: Arc<JetSpace>,
    coef: Vec<f64>,
}

impl Jet {
    pub fn constant(space: &Arc<JetSpace>, c: f64) -> Self {
        let mut coef = vec![0.0; space.len()];
        coef[0] = c;
        Jet {
            space: Arc::clone(space),
            coef,
        }
    }

    /// The seed `c + ε_k`: variable `k` expanded around base value `c`.
    pub fn variable(space: &Arc<JetSpace>, k: usize, c: f64) -> Self {
        let mut jet = Self::constant(space, c);
        if space.degree() >= 1 {
            let e = MultiIndex::unit(space.dim(), k);
            let pos = space.position(&e).expect("unit monomial in space");
            jet.coef[pos] = 1.0;
        }
        jet
    }

    pub fn value(&self) -> f64 {
        self.coef[0]
    }

    /// Taylor coefficient of `ε^α` (the mixed partial divided by `α!`).
    pub fn coefficient(&self, alpha: &MultiIndex) -> f64 {
        self.space
            .position(alpha)
            .map(|i| self.coef[i])
            .unwrap_or(0.0)
    }

    /// Mixed partial `∂^α` at the base point.
    pub fn partial(&self, alpha: &MultiIndex) -> f64 {
        self.coefficient(alpha) * alpha.factorial()
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let coef = self
            .coef
            .iter()
            .zip(&other.coef)
            .map(|(a, b)| a + b)
            .collect();
        Jet {
            space: Arc::clone(&self.space),
            coef,
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        let coef = self
            .coef
            .iter()
            .zip(&other.coef)
            .map(|(a, b)| a - b)
            .collect();
        Jet {
            space: Arc::clone(&self.space),
            coef,
        }
    }

    pub fn scale(&self, c: f64) -> Jet {
        Jet {
            space: Arc::clone(&self.space),
            coef: self.coef.iter().map(|a| a * c).collect(),
        }
    }

    pub fn add_scalar(&self, c: f64) -> Jet {
        let mut out = self.clone();
        out.coef[0] += c;
        out
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let space = &self.space;
        let degmax = space.degree();
        let mut coef = vec![0.0; space.len()];
        for (i, &ci) in self.coef.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let mi = &space.monomials()[i];
            let di = mi.total_degree();
            for (j, &cj) in other.coef.iter().enumerate() {
                if cj == 0.0 {
                    continue;
                }
                let mj = &space.monomials()[j];
                if di + mj.total_degree() > degmax {
                    continue;
                }
                let pos = space.position(&mi.add(mj)).expect("closed under addition");
                coef[pos] += ci * cj;
            }
        }
        Jet {
            space: Arc::clone(space),
            coef,
        }
    }

    pub fn square(&self) -> Jet {
        self.mul(self)
    }

    /// Compose a scalar analytic function with this jet, given the
    /// derivatives `g^(n)(c)` of the outer function at the jet's base value.
    pub fn compose(&self, outer_derivs: &[f64]) -> Jet {
        let mut w = self.clone();
        w.coef[0] = 0.0;
        let mut out = Jet::constant(&self.space, outer_derivs[0]);
        let mut wpow = Jet::constant(&self.space, 1.0);
        for (n, &g) in outer_derivs.iter().enumerate().skip(1) {
            wpow = wpow.mul(&w);
            out = out.add(&wpow.scale(g / factorial(n as u32)));
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let c = self.value().exp();
        let derivs = vec![c; self.space.degree() as usize + 1];
        self.compose(&derivs)
    }

    /// Requires a strictly positive base value.
    pub fn sqrt(&self) -> Jet {
        let c = self.value();
        assert!(c > 0.0, "sqrt of a jet with non-positive base value");
        let n = self.space.degree() as usize;
        // derivatives of x^{1/2} at c
        let mut derivs = Vec::with_capacity(n + 1);
        let mut cur = c.sqrt();
        let expo = 0.5;
        let mut fac = 1.0;
        for k in 0..=n {
            derivs.push(cur * fac);
            fac *= expo - k as f64;
            cur /= c;
        }
        self.compose(&derivs)
    }

    /// Requires a nonzero base value.
    pub fn recip(&self) -> Jet {
        let c = self.value();
        assert!(c != 0.0, "reciprocal of a jet with zero base value");
        let n = self.space.degree() as usize;
        let mut derivs = Vec::with_capacity(n + 1);
        let mut cur = 1.0 / c;
        let mut sign = 1.0;
        for k in 0..=n {
            derivs.push(sign * factorial(k as u32) * cur);
            cur /= c;
            sign = -sign;
        }
        self.compose(&derivs)
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self.mul(&other.recip())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_jet_partials_are_exact() {
        // f(x, y) = x² y + 3 y³ at (2, -1)
        let space = JetSpace::new(2, 4);
        let x = Jet::variable(&space, 0, 2.0);
        let y = Jet::variable(&space, 1, -1.0);
        let f = x.square().mul(&y).add(&y.mul(&y).mul(&y).scale(3.0));
        assert_eq!(f.value(), -7.0);
        // ∂x∂y f = 2x = 4
        assert_eq!(f.partial(&MultiIndex(vec![1, 1])), 4.0);
        // ∂y³ f = 18
        assert_eq!(f.partial(&MultiIndex(vec![0, 3])), 18.0);
        // ∂x²∂y f = 2
        assert_eq!(f.partial(&MultiIndex(vec![2, 1])), 2.0);
    }

    #[test]
    fn exp_jet_matches_known_derivatives() {
        // f(x) = e^{-x²/2}: f''(0) = -1, f''''(0) = 3
        let space = JetSpace::new(1, 6);
        let x = Jet::variable(&space, 0, 0.0);
        let f = x.square().scale(-0.5).exp();
        assert!((f.partial(&MultiIndex(vec![2])) + 1.0).abs() < 1e-14);
        assert!((f.partial(&MultiIndex(vec![4])) - 3.0).abs() < 1e-13);
        assert!(f.partial(&MultiIndex(vec![3])).abs() < 1e-14);
    }

    #[test]
    fn recip_and_sqrt_round_trip() {
        let space = JetSpace::new(2, 5);
        let x = Jet::variable(&space, 0, 0.7);
        let y = Jet::variable(&space, 1, -0.2);
        let g = x.square().add(&y.square()).add_scalar(1.5);
        let id = g.recip().mul(&g);
        assert!((id.value() - 1.0).abs() < 1e-14);
        for (i, m) in space.monomials().iter().enumerate().skip(1) {
            assert!(id.coef[i].abs() < 1e-12, "nonzero at {:?}", m);
        }
        let s = g.sqrt();
        let back = s.mul(&s).sub(&g);
        for c in &back.coef {
            assert!(c.abs() < 1e-12);
        }
    }
}
