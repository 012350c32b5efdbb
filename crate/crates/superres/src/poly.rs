//! Multivariate multi-index arithmetic and sparse polynomials.
//!
//! A [`MultiIndexPolynomial`] is both an ordinary polynomial (evaluated with
//! [`MultiIndexPolynomial::eval`]) and a constant-coefficient differential
//! operator `P(∂)` (applied with [`MultiIndexPolynomial::apply_diff`] against
//! any source of partial derivatives).

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Exponent tuple `α = (α₁, …, α_d)` of a monomial `x^α`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    /// The axis unit index `e_k`.
    pub fn unit(d: usize, k: usize) -> Self {
        let mut e = vec![0; d];
        e[k] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|α| = Σ α_s`.
    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `α! = Π α_s!`
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    /// `x^α`
    pub fn monomial_at(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// All multi-indices of dimension `d` with total degree at most `degmax`,
/// graded-lexicographically ordered: ascending total degree, lexicographic
/// on the exponent tuple within a degree.
pub fn graded_monomials(d: usize, degmax: u32) -> Vec<MultiIndex> {
    assert!(d >= 1, "dimension must be at least 1");
    let mut out = Vec::new();
    for deg in 0..=degmax {
        let mut level = Vec::new();
        compositions(d, deg, &mut vec![0; d], 0, &mut level);
        level.sort();
        out.extend(level.into_iter().map(MultiIndex));
    }
    out
}

fn compositions(d: usize, deg: u32, buf: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos == d - 1 {
        buf[pos] = deg;
        out.push(buf.clone());
        return;
    }
    for v in 0..=deg {
        buf[pos] = v;
        compositions(d, deg - v, buf, pos + 1, out);
    }
}

/// Supplies exact partial derivatives `∂^α f(x)` of some function `f`.
///
/// Implementors report the highest total order they can serve; requests
/// beyond that cap fail with [`Error::OrderCapExceeded`].
pub trait DerivativeOracle {
    fn dim(&self) -> usize;
    fn max_order(&self) -> u32;
    fn partial(&self, alpha: &MultiIndex, x: &[f64]) -> Result<f64>;
}

/// Sparse polynomial in `d` variables with real coefficients, stored as a
/// map from exponent tuples to coefficients. Zero coefficients are never
/// stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiIndexPolynomial {
    dim: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl MultiIndexPolynomial {
    pub fn zero(dim: usize) -> Self {
        MultiIndexPolynomial {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(MultiIndex::zeros(dim), c);
        p
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, 1.0)
    }

    /// The monomial `x^α`.
    pub fn monomial(alpha: MultiIndex, coeff: f64) -> Self {
        let mut p = Self::zero(alpha.dim());
        p.add_term(alpha, coeff);
        p
    }

    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (MultiIndex, f64)>) -> Self {
        let mut p = Self::zero(dim);
        for (a, c) in terms {
            p.add_term(a, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &f64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    /// Maximum total degree over stored terms, 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|a| a.total_degree())
            .max()
            .unwrap_or(0)
    }

    /// True when every stored term has the same total degree.
    pub fn is_homogeneous(&self) -> bool {
        let mut degs = self.terms.keys().map(|a| a.total_degree());
        match degs.next() {
            None => true,
            Some(d0) => degs.all(|d| d == d0),
        }
    }

    pub fn add_term(&mut self, alpha: MultiIndex, coeff: f64) {
        debug_assert_eq!(alpha.dim(), self.dim);
        let entry = self.terms.entry(alpha).or_insert(0.0);
        *entry += coeff;
        if *entry == 0.0 {
            let key = self
                .terms
                .iter()
                .find(|(_, &c)| c == 0.0)
                .map(|(k, _)| k.clone());
            if let Some(k) = key {
                self.terms.remove(&k);
            }
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        if c == 0.0 {
            return Self::zero(self.dim);
        }
        MultiIndexPolynomial {
            dim: self.dim,
            terms: self.terms.iter().map(|(a, v)| (a.clone(), v * c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, c) in other.terms() {
            out.add_term(a.clone(), *c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                out.add_term(a.add(b), ca * cb);
            }
        }
        out
    }

    /// `Σ a_α x^α`
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(a, c)| c * a.monomial_at(x))
            .sum()
    }

    /// Apply the differential operator `P(∂)` to `f` at `x`:
    /// `(P(∂)[f])(x) = Σ a_α ∂^α f(x)`.
    pub fn apply_diff(&self, f: &dyn DerivativeOracle, x: &[f64]) -> Result<f64> {
        if f.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: f.dim(),
            });
        }
        let mut acc = 0.0;
        for (alpha, c) in self.terms() {
            acc += c * f.partial(alpha, x)?;
        }
        Ok(acc)
    }

    /// Partial derivative `∂P/∂x_axis` as a polynomial.
    pub fn partial_derivative(&self, axis: usize) -> Self {
        let mut out = Self::zero(self.dim);
        for (a, c) in self.terms() {
            if a.0[axis] == 0 {
                continue;
            }
            let mut e = a.0.clone();
            e[axis] -= 1;
            out.add_term(MultiIndex(e), c * a.0[axis] as f64);
        }
        out
    }

    /// Evaluate `∂^α P` at `x` exactly.
    pub fn partial_at(&self, alpha: &MultiIndex, x: &[f64]) -> f64 {
        let mut p = self.clone();
        for (axis, &n) in alpha.0.iter().enumerate() {
            for _ in 0..n {
                p = p.partial_derivative(axis);
            }
        }
        p.eval(x)
    }

    /// The composition `P(Mx)` for a linear map given by rows `m`
    /// (`(Mx)_s = Σ_j m[s][j] x_j`).
    pub fn substitute_linear(&self, m: &[Vec<f64>]) -> Self {
        let d = self.dim;
        let mut out = Self::zero(d);
        for (a, c) in self.terms() {
            let mut term = Self::constant(d, *c);
            for (s, &e) in a.0.iter().enumerate() {
                let row = Self::from_terms(d, (0..d).map(|j| (MultiIndex::unit(d, j), m[s][j])));
                for _ in 0..e {
                    term = term.mul(&row);
                }
            }
            out = out.add(&term);
        }
        out
    }

    /// The polynomial `(v·X)^j`, expanded multinomially. Applying it as a
    /// differential operator gives the `j`-th directional derivative along `v`.
    pub fn directional_power(v: &[f64], j: u32) -> Self {
        let d = v.len();
        let linear = MultiIndexPolynomial::from_terms(
            d,
            (0..d).map(|k| (MultiIndex::unit(d, k), v[k])),
        );
        let mut p = MultiIndexPolynomial::one(d);
        for _ in 0..j {
            p = p.mul(&linear);
        }
        p
    }
}

/// `d^j/dt^j f(x + t v)` at `t = 0`, computed through the multinomial
/// expansion of `(v·∂)^j`.
pub fn directional_derivative(
    f: &dyn DerivativeOracle,
    v: &[f64],
    j: u32,
    x: &[f64],
) -> Result<f64> {
    MultiIndexPolynomial::directional_power(v, j).apply_diff(f, x)
}

impl fmt::Display for MultiIndexPolynomial {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(fmt, "0");
        }
        let vars = ["x", "y", "z", "w"];
        let mut first = true;
        for (a, c) in &self.terms {
            let mag = c.abs();
            if first {
                if *c < 0.0 {
                    write!(fmt, "-")?;
                }
                first = false;
            } else if *c < 0.0 {
                write!(fmt, " - ")?;
            } else {
                write!(fmt, " + ")?;
            }
            let is_const = a.total_degree() == 0;
            if is_const || (mag - 1.0).abs() > 1e-12 {
                write!(fmt, "{mag}")?;
                if !is_const {
                    write!(fmt, "*")?;
                }
            }
            let mut sep = "";
            for (k, &e) in a.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let name = vars.get(k).copied().unwrap_or("v");
                write!(fmt, "{sep}{name}")?;
                if e > 1 {
                    write!(fmt, "^{e}")?;
                }
                sep = "*";
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Finite-difference oracle over a closure, used to cross-check
    /// `apply_diff` on smooth test functions.
    pub struct FdOracle<F: Fn(&[f64]) -> f64> {
        pub f: F,
        pub dim: usize,
        pub step: f64,
    }

    impl<F: Fn(&[f64]) -> f64> DerivativeOracle for FdOracle<F> {
        fn dim(&self) -> usize {
            self.dim
        }
        fn max_order(&self) -> u32 {
            6
        }
        fn partial(&self, alpha: &MultiIndex, x: &[f64]) -> Result<f64> {
            // Nested central differences, one axis at a time.
            fn diff(
                f: &dyn Fn(&[f64]) -> f64,
                alpha: &[u32],
                x: &mut Vec<f64>,
                axis: usize,
                h: f64,
            ) -> f64 {
                if axis == alpha.len() {
                    return f(x);
                }
                if alpha[axis] == 0 {
                    return diff(f, alpha, x, axis + 1, h);
                }
                let mut rest = alpha.to_vec();
                rest[axis] -= 1;
                x[axis] += h;
                let plus = diff(f, &rest, x, axis, h);
                x[axis] -= 2.0 * h;
                let minus = diff(f, &rest, x, axis, h);
                x[axis] += h;
                (plus - minus) / (2.0 * h)
            }
            let mut pt = x.to_vec();
            Ok(diff(&self.f, &alpha.0, &mut pt, 0, self.step))
        }
    }

    fn gaussian_oracle(dim: usize) -> FdOracle<impl Fn(&[f64]) -> f64> {
        FdOracle {
            f: |x: &[f64]| (-0.5 * x.iter().map(|v| v * v).sum::<f64>()).exp(),
            dim,
            step: 1e-4,
        }
    }

    #[test]
    fn graded_monomials_univariate() {
        let ms = graded_monomials(1, 3);
        let exps: Vec<Vec<u32>> = ms.into_iter().map(|m| m.0).collect();
        assert_eq!(exps, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn graded_monomials_bivariate_degree_one() {
        let ms = graded_monomials(2, 1);
        let exps: Vec<Vec<u32>> = ms.into_iter().map(|m| m.0).collect();
        assert_eq!(exps, vec![vec![0, 0], vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn graded_monomials_count() {
        assert_eq!(graded_monomials(2, 3).len(), 10);
    }

    #[test]
    fn eval_basics() {
        let one = MultiIndexPolynomial::one(2);
        assert_eq!(one.eval(&[3.7, -2.0]), 1.0);

        let xy = MultiIndexPolynomial::monomial(MultiIndex(vec![1, 1]), 1.0);
        assert_eq!(xy.eval(&[2.0, 3.0]), 6.0);

        let y3 = MultiIndexPolynomial::monomial(MultiIndex(vec![0, 3]), 1.0);
        assert_eq!(y3.eval(&[0.0, 2.0]), 8.0);
    }

    #[test]
    fn apply_diff_identity_and_parity() {
        let oracle = gaussian_oracle(2);
        let p0 = MultiIndexPolynomial::one(2);
        let x = [0.3, -0.1];
        let fx = (-0.5f64 * (0.3f64 * 0.3 + 0.1 * 0.1)).exp();
        assert!((p0.apply_diff(&oracle, &x).unwrap() - fx).abs() < 1e-12);

        // odd derivative of an even function at the origin
        let p1 = MultiIndexPolynomial::monomial(MultiIndex(vec![1, 0]), 1.0);
        assert!(p1.apply_diff(&oracle, &[0.0, 0.0]).unwrap().abs() < 1e-8);
    }

    #[test]
    fn second_derivative_of_gaussian_at_origin() {
        // d²/dx₁² e^{-|x|²/2} at 0 equals -1
        let oracle = gaussian_oracle(2);
        let p = MultiIndexPolynomial::monomial(MultiIndex(vec![2, 0]), 1.0);
        let v = p.apply_diff(&oracle, &[0.0, 0.0]).unwrap();
        assert!((v - (-1.0)).abs() < 1e-5, "got {v}");
    }

    #[test]
    fn directional_derivative_axis_and_diagonal() {
        let oracle = gaussian_oracle(2);
        // axis direction, order 1 equals the plain partial
        let x = [0.2, 0.4];
        let d1 = directional_derivative(&oracle, &[1.0, 0.0], 1, &x).unwrap();
        let p1 = MultiIndexPolynomial::monomial(MultiIndex(vec![1, 0]), 1.0);
        assert!((d1 - p1.apply_diff(&oracle, &x).unwrap()).abs() < 1e-12);

        // odd order of an even function at 0
        let d3 = directional_derivative(&oracle, &[0.3, -0.8], 3, &[0.0, 0.0]).unwrap();
        assert!(d3.abs() < 1e-3, "got {d3}");

        // second derivative along the unit diagonal is -1 at the origin
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d2 = directional_derivative(&oracle, &[s, s], 2, &[0.0, 0.0]).unwrap();
        assert!((d2 - (-1.0)).abs() < 1e-5, "got {d2}");
    }

    proptest! {
        #[test]
        fn apply_diff_is_linear_in_p(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            x0 in -0.5f64..0.5,
            x1 in -0.5f64..0.5,
        ) {
            let oracle = gaussian_oracle(2);
            let p = MultiIndexPolynomial::from_terms(2, [
                (MultiIndex(vec![1, 0]), 1.0),
                (MultiIndex(vec![0, 2]), -0.5),
            ]);
            let q = MultiIndexPolynomial::from_terms(2, [
                (MultiIndex(vec![0, 0]), 2.0),
                (MultiIndex(vec![1, 1]), 1.5),
            ]);
            let x = [x0, x1];
            let lhs = p.scale(a).add(&q.scale(b)).apply_diff(&oracle, &x).unwrap();
            let rhs = a * p.apply_diff(&oracle, &x).unwrap()
                + b * q.apply_diff(&oracle, &x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn directional_matches_multinomial_expansion(
            v0 in 0.1f64..2.0,
            v1 in -2.0f64..2.0,
            j in 0u32..4,
        ) {
            let oracle = gaussian_oracle(2);
            let x = [0.1, -0.2];
            let via_dir = directional_derivative(&oracle, &[v0, v1], j, &x).unwrap();
            let via_poly = MultiIndexPolynomial::directional_power(&[v0, v1], j)
                .apply_diff(&oracle, &x)
                .unwrap();
            prop_assert!((via_dir - via_poly).abs() <= 1e-10 * (1.0 + via_dir.abs()));
        }

        #[test]
        fn graded_monomial_count_matches_binomial(d in 1usize..=4, degmax in 0u32..=8) {
            let n = graded_monomials(d, degmax).len() as f64;
            let expect = binomial(d as u32 + degmax, d as u32);
            prop_assert_eq!(n, expect);
        }
    }
}
