//! The least interpolant space `S_Z` for Hermite interpolation at spikes.
//!
//! `S_Z` is the polynomial space of least degree on which interpolation of
//! values and first derivatives at the points of `Z` is uniquely solvable.
//! It is computed from the Hermite–Vandermonde matrix over graded monomial
//! columns: Gaussian elimination with partial pivoting (row swaps only,
//! columns visited strictly in graded order) exposes one pivot column per
//! functional, and the homogeneous "least term" of each reduced row is a
//! basis polynomial.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::poly::{graded_monomials, MultiIndex, MultiIndexPolynomial};

/// Interpolation functional: point evaluation or an axis partial at a point,
/// both taken in the centered/scaled coordinates used for elimination.
#[derive(Debug, Clone)]
enum Functional {
    Value(Vec<f64>),
    Deriv(usize, Vec<f64>),
}

impl Functional {
    fn apply(&self, p: &MultiIndexPolynomial) -> f64 {
        match self {
            Functional::Value(z) => p.eval(z),
            Functional::Deriv(axis, z) => p.partial_derivative(*axis).eval(z),
        }
    }
}

/// Hermite–Vandermonde matrix: one row per interpolation functional, one
/// column per graded monomial of `Π_degmax`.
#[derive(Debug, Clone)]
pub struct HermiteVandermonde {
    pub columns: Vec<MultiIndex>,
    pub matrix: DMatrix<f64>,
}

impl HermiteVandermonde {
    /// Numeric rank via pivoted elimination at the relative threshold used
    /// for basis extraction.
    pub fn rank(&self) -> usize {
        let mut m = self.matrix.clone();
        rref(&mut m).len()
    }
}

/// Ordered basis of the least interpolant space. `basis[r]` is homogeneous
/// of degree `leading_degrees[r]`; `basis[0] ≡ 1`. The polynomials live in
/// coordinates centered at `center` and scaled by `1/scale`, which spans the
/// same space as the basis for the raw points (affine covariance).
#[derive(Debug, Clone)]
pub struct LeastBasis {
    pub basis: Vec<MultiIndexPolynomial>,
    pub leading_degrees: Vec<u32>,
    pub spikes: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub scale: f64,
    /// Condition number of the Q×Q collocation matrix `[F_i(P_j)]`.
    pub condition: f64,
}

impl LeastBasis {
    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn max_degree(&self) -> u32 {
        self.leading_degrees.iter().copied().max().unwrap_or(0)
    }
}

/// Build the Hermite–Vandermonde matrix for value + first-derivative
/// functionals at `z`, over the graded monomials of total degree ≤ `degmax`.
/// Row layout: all value rows, then all `∂_{x1}` rows, …, then `∂_{xd}` rows.
pub fn hermite_vandermonde(z: &[Vec<f64>], degmax: u32) -> Result<HermiteVandermonde> {
    let functionals = hermite_functionals(z, &[])?;
    let d = z.first().map(|p| p.len()).unwrap_or(1);
    let columns = graded_monomials(d, degmax);
    Ok(HermiteVandermonde {
        matrix: build_matrix(&functionals, &columns),
        columns,
    })
}

fn hermite_functionals(z: &[Vec<f64>], extra: &[Vec<f64>]) -> Result<Vec<Functional>> {
    let all: Vec<&Vec<f64>> = z.iter().chain(extra).collect();
    if all.is_empty() {
        return Err(Error::Config("no interpolation points given".into()));
    }
    let d = all[0].len();
    for (i, p) in all.iter().enumerate() {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        for q in all.iter().skip(i + 1) {
            if p.iter().zip(q.iter()).all(|(a, b)| a == b) {
                return Err(Error::DuplicateSpikes(i));
            }
        }
    }
    let mut f: Vec<Functional> = z.iter().map(|p| Functional::Value(p.clone())).collect();
    for axis in 0..d {
        f.extend(z.iter().map(|p| Functional::Deriv(axis, p.clone())));
    }
    f.extend(extra.iter().map(|p| Functional::Value(p.clone())));
    Ok(f)
}

fn build_matrix(functionals: &[Functional], columns: &[MultiIndex]) -> DMatrix<f64> {
    DMatrix::from_fn(functionals.len(), columns.len(), |i, j| {
        let alpha = &columns[j];
        match &functionals[i] {
            Functional::Value(z) => alpha.monomial_at(z),
            Functional::Deriv(axis, z) => {
                if alpha.0[*axis] == 0 {
                    0.0
                } else {
                    let mut e = alpha.0.clone();
                    e[*axis] -= 1;
                    alpha.0[*axis] as f64 * MultiIndex(e).monomial_at(z)
                }
            }
        }
    })
}

/// In-place reduced row echelon form with partial pivoting; columns are
/// visited strictly left to right (graded order), rows may swap. Returns the
/// pivot column of each pivot row. A candidate pivot counts as zero when its
/// magnitude is below 1e-10 times the largest remaining entry of its row.
fn rref(m: &mut DMatrix<f64>) -> Vec<usize> {
    let (nrows, ncols) = m.shape();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == nrows {
            break;
        }
        let mut best = r;
        for i in r + 1..nrows {
            if m[(i, c)].abs() > m[(best, c)].abs() {
                best = i;
            }
        }
        let row_max = (c..ncols).map(|j| m[(best, j)].abs()).fold(0.0, f64::max);
        if m[(best, c)].abs() < 1e-10 * row_max || row_max == 0.0 {
            continue;
        }
        m.swap_rows(r, best);
        let piv = m[(r, c)];
        for j in c..ncols {
            m[(r, j)] /= piv;
        }
        for i in 0..nrows {
            if i == r {
                continue;
            }
            let f = m[(i, c)];
            if f != 0.0 {
                for j in c..ncols {
                    m[(i, j)] -= f * m[(r, j)];
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

/// Least interpolant basis for Hermite interpolation (values + gradients)
/// at the points of `z`.
pub fn least_basis(z: &[Vec<f64>]) -> Result<LeastBasis> {
    let n = z.len() as u32;
    let degmax = if n == 0 { 0 } else { 2 * n - 1 };
    least_basis_extended(z, &[], degmax)
}

/// Least basis for Hermite functionals at `z` plus Lagrange (value-only)
/// functionals at `extra`.
pub fn extended_least_basis(z: &[Vec<f64>], extra: &[Vec<f64>]) -> Result<LeastBasis> {
    let n = z.len() as u32;
    let degmax = if n == 0 { 0 } else { 2 * n - 1 } + extra.len() as u32;
    least_basis_extended(z, extra, degmax)
}

fn least_basis_extended(z: &[Vec<f64>], extra: &[Vec<f64>], degmax: u32) -> Result<LeastBasis> {
    // validates dimensions and rejects duplicates before any transform
    hermite_functionals(z, extra)?;
    let d = z.iter().chain(extra).next().unwrap().len();

    // Center and rescale to unit diameter: pure conditioning, the span is
    // unchanged by affine maps of the points.
    let all: Vec<&Vec<f64>> = z.iter().chain(extra).collect();
    let mut center = vec![0.0; d];
    for p in &all {
        for s in 0..d {
            center[s] += p[s] / all.len() as f64;
        }
    }
    let mut diam: f64 = 0.0;
    for (i, p) in all.iter().enumerate() {
        for q in all.iter().skip(i + 1) {
            let d2: f64 = p.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            diam = diam.max(d2.sqrt());
        }
    }
    let scale = if diam > 0.0 { diam } else { 1.0 };
    let transform =
        |p: &Vec<f64>| -> Vec<f64> { (0..d).map(|s| (p[s] - center[s]) / scale).collect() };
    let zc: Vec<Vec<f64>> = z.iter().map(transform).collect();
    let extrac: Vec<Vec<f64>> = extra.iter().map(transform).collect();
    let functionals = hermite_functionals(&zc, &extrac)?;

    let columns = graded_monomials(d, degmax);
    let mut m = build_matrix(&functionals, &columns);
    let q = functionals.len();
    let pivots = rref(&mut m);
    if pivots.len() < q {
        return Err(Error::RankDeficient {
            rank: pivots.len(),
            expected: q,
        });
    }

    // Least term of row j: the homogeneous slice at the pivot's degree,
    // with the 1/α! normalization applied at extraction time.
    let mut basis = Vec::with_capacity(q);
    let mut leading_degrees = Vec::with_capacity(q);
    for (j, &pc) in pivots.iter().enumerate() {
        let deg = columns[pc].total_degree();
        let terms = (0..columns.len())
            .filter(|&c| columns[c].total_degree() == deg)
            .map(|c| (columns[c].clone(), m[(j, c)] / columns[c].factorial()));
        basis.push(MultiIndexPolynomial::from_terms(d, terms));
        leading_degrees.push(deg);
    }

    // Regularity of the Hermite problem on span(basis): the collocation
    // matrix [F_i(P_j)] must be invertible.
    let colloc = DMatrix::from_fn(q, q, |i, j| functionals[i].apply(&basis[j]));
    let svd = colloc.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-12 * smax {
        return Err(Error::SingularSystem(
            "collocation matrix of the least basis is singular".into(),
        ));
    }
    Ok(LeastBasis {
        basis,
        leading_degrees,
        spikes: z.to_vec(),
        center,
        scale,
        condition: smax / smin,
    })
}

/// The 1-D least space for N clustered spikes: `{1, x, …, x^{2N−1}}`.
pub fn least_basis_1d(n: u32) -> LeastBasis {
    assert!(n >= 1);
    let basis: Vec<MultiIndexPolynomial> = (0..2 * n)
        .map(|r| MultiIndexPolynomial::monomial(MultiIndex(vec![r]), 1.0))
        .collect();
    LeastBasis {
        leading_degrees: (0..2 * n).collect(),
        basis,
        spikes: Vec::new(),
        center: vec![0.0],
        scale: 1.0,
        condition: 1.0,
    }
}

/// Worst relative distance from the polynomials of `from` to the span of
/// `to`: 0 when span(from) ⊆ span(to). Both sets must share the dimension.
pub fn span_distance(from: &[MultiIndexPolynomial], to: &[MultiIndexPolynomial]) -> f64 {
    let d = from[0].dim();
    let degmax = from
        .iter()
        .chain(to)
        .map(|p| p.degree())
        .max()
        .unwrap_or(0);
    let columns = graded_monomials(d, degmax);
    let coef = |p: &MultiIndexPolynomial| {
        DMatrix::from_fn(columns.len(), 1, |i, _| p.coeff(&columns[i]))
    };
    let mut a = DMatrix::zeros(columns.len(), to.len());
    for (j, p) in to.iter().enumerate() {
        a.set_column(j, &coef(p).column(0));
    }
    let svd = a.clone().svd(true, true);
    let mut worst: f64 = 0.0;
    for p in from {
        let b = coef(p);
        let norm = b.norm();
        if norm == 0.0 {
            continue;
        }
        let x = svd.solve(&b, 1e-12).expect("svd solve");
        let res = (&a * x - &b).norm() / norm;
        worst = worst.max(res);
    }
    worst
}

/// Symmetric span equality: both inclusion residuals below `tol`.
pub fn spans_equal(a: &[MultiIndexPolynomial], b: &[MultiIndexPolynomial], tol: f64) -> bool {
    span_distance(a, b) < tol && span_distance(b, a) < tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mono(exps: &[&[u32]]) -> Vec<MultiIndexPolynomial> {
        exps.iter()
            .map(|e| MultiIndexPolynomial::monomial(MultiIndex(e.to_vec()), 1.0))
            .collect()
    }

    #[test]
    fn vandermonde_single_point_1d() {
        let v = hermite_vandermonde(&[vec![0.0]], 1).unwrap();
        assert_eq!(v.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(v.rank(), 2);
    }

    #[test]
    fn vandermonde_example_rows_and_rank() {
        let z = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let v = hermite_vandermonde(&z, 3).unwrap();
        assert_eq!(v.matrix.shape(), (6, 10));
        // value row of (0,1) equals 1 on the pure-y columns 1, y, y², y³
        let ycols: Vec<usize> = v
            .columns
            .iter()
            .enumerate()
            .filter(|(_, a)| a.0[0] == 0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(ycols.len(), 4);
        for c in ycols {
            assert_eq!(v.matrix[(1, c)], 1.0);
        }
        assert_eq!(v.rank(), 6);
    }

    #[test]
    fn two_point_vertical_basis() {
        let z = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let lb = least_basis(&z).unwrap();
        let expect = mono(&[&[0, 0], &[0, 1], &[1, 0], &[0, 2], &[1, 1], &[0, 3]]);
        assert!(spans_equal(&lb.basis, &expect, 1e-10));
        assert_eq!(lb.leading_degrees, vec![0, 1, 1, 2, 2, 3]);
        assert!(lb.basis.iter().all(|p| p.is_homogeneous()));
        assert_eq!(lb.basis[0], MultiIndexPolynomial::one(2));
    }

    #[test]
    fn aligned_points_basis() {
        for n in 2..=4usize {
            let z: Vec<Vec<f64>> = (0..n).map(|j| vec![j as f64, 0.0]).collect();
            let lb = least_basis(&z).unwrap();
            // span{1, x, …, x^{2N−1}} ∪ span{y, xy, …, x^{N−1} y}
            let mut expect = Vec::new();
            for r in 0..2 * n as u32 {
                expect.push(MultiIndexPolynomial::monomial(MultiIndex(vec![r, 0]), 1.0));
            }
            for r in 0..n as u32 {
                expect.push(MultiIndexPolynomial::monomial(MultiIndex(vec![r, 1]), 1.0));
            }
            assert!(spans_equal(&lb.basis, &expect, 1e-8), "N = {n}");
        }
    }

    #[test]
    fn three_point_basis() {
        let z = vec![vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 0.0]];
        let lb = least_basis(&z).unwrap();
        let mut expect = mono(&[
            &[0, 0],
            &[1, 0],
            &[0, 1],
            &[2, 0],
            &[0, 2],
            &[1, 1],
            &[3, 0],
            &[0, 3],
        ]);
        // x²y − y²x
        expect.push(MultiIndexPolynomial::from_terms(
            2,
            [
                (MultiIndex(vec![2, 1]), 1.0),
                (MultiIndex(vec![1, 2]), -1.0),
            ],
        ));
        assert!(spans_equal(&lb.basis, &expect, 1e-8));
    }

    #[test]
    fn one_dimensional_bases() {
        let lb = least_basis_1d(2);
        assert_eq!(lb.len(), 4);
        assert_eq!(lb.leading_degrees, vec![0, 1, 2, 3]);

        let lb = least_basis_1d(3);
        assert_eq!(lb.len(), 6);
        assert_eq!(lb.max_degree(), 5);

        // the generic construction agrees for distinct 1-D points
        let z = vec![vec![0.0], vec![1.0]];
        let lb = least_basis(&z).unwrap();
        assert!(spans_equal(&lb.basis, &least_basis_1d(2).basis, 1e-8));
    }

    #[test]
    fn single_spike_basis_is_degree_one() {
        let lb = least_basis(&[vec![0.3, -0.7]]).unwrap();
        assert_eq!(lb.leading_degrees, vec![0, 1, 1]);
        assert!(spans_equal(&lb.basis, &mono(&[&[0, 0], &[0, 1], &[1, 0]]), 1e-10));
    }

    #[test]
    fn extended_three_points_plus_interior() {
        let z = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let extra = vec![vec![0.3, 0.3]];
        let lb = extended_least_basis(&z, &extra).unwrap();
        assert_eq!(lb.len(), 10);
        // spans the full cubic space Π₃²
        let expect: Vec<MultiIndexPolynomial> = graded_monomials(2, 3)
            .into_iter()
            .map(|a| MultiIndexPolynomial::monomial(a, 1.0))
            .collect();
        assert!(spans_equal(&lb.basis, &expect, 1e-8));
    }

    #[test]
    fn extended_lagrange_only() {
        let lb = extended_least_basis(&[], &[vec![0.4, -0.1]]).unwrap();
        assert_eq!(lb.len(), 1);
        assert_eq!(lb.basis[0], MultiIndexPolynomial::one(2));
    }

    #[test]
    fn extended_four_corners() {
        let z = vec![
            vec![-1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, -1.0],
            vec![1.0, 1.0],
        ];
        let lb = extended_least_basis(&z, &[vec![0.25, 0.4]]).unwrap();
        assert_eq!(lb.len(), 13);
        // ten polynomials spanning the cubics, plus three quartics (the two
        // quartic elements of the Hermite-only space and one new one)
        let mut degs = lb.leading_degrees.clone();
        degs.sort_unstable();
        assert_eq!(degs.iter().filter(|&&d| d <= 3).count(), 10);
        assert_eq!(degs.iter().filter(|&&d| d == 4).count(), 3);
        assert!(lb.basis.iter().all(|p| p.is_homogeneous()));
    }

    #[test]
    fn duplicate_points_are_rejected() {
        let z = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert!(matches!(least_basis(&z), Err(Error::DuplicateSpikes(_))));
    }

    fn distinct_points(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_filter_map(
            "points too close",
            |pts| {
                for (i, p) in pts.iter().enumerate() {
                    for q in pts.iter().skip(i + 1) {
                        if (p.0 - q.0).abs() + (p.1 - q.1).abs() < 0.2 {
                            return None;
                        }
                    }
                }
                Some(pts.into_iter().map(|(a, b)| vec![a, b]).collect())
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn collocation_is_regular(z in distinct_points(3)) {
            let lb = least_basis(&z).unwrap();
            prop_assert_eq!(lb.len(), 9);
            prop_assert!(lb.condition.is_finite());
            prop_assert!(lb.basis.iter().all(|p| p.is_homogeneous()));
        }

        #[test]
        fn leading_degrees_are_permutation_invariant(z in distinct_points(3), swap in 0usize..3) {
            let lb = least_basis(&z).unwrap();
            let mut zp = z.clone();
            zp.swap(swap, (swap + 1) % 3);
            let lbp = least_basis(&zp).unwrap();
            let mut a = lb.leading_degrees.clone();
            let mut b = lbp.leading_degrees.clone();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
            prop_assert!(spans_equal(&lb.basis, &lbp.basis, 1e-8));
        }

        #[test]
        fn affine_covariance(
            z in distinct_points(2),
            a11 in 0.5f64..2.0, a12 in -0.5f64..0.5,
            a21 in -0.5f64..0.5, a22 in 0.5f64..2.0,
            t0 in -1.0f64..1.0, t1 in -1.0f64..1.0,
        ) {
            // A is diagonally dominant, hence invertible
            let a = [[a11, a12], [a21, a22]];
            let az: Vec<Vec<f64>> = z
                .iter()
                .map(|p| vec![
                    a[0][0] * p[0] + a[0][1] * p[1] + t0,
                    a[1][0] * p[0] + a[1][1] * p[1] + t1,
                ])
                .collect();
            let lb = least_basis(&z).unwrap();
            let lba = least_basis(&az).unwrap();
            // S_{AZ+t} = S_Z ∘ Aᵀ
            let at = vec![vec![a[0][0], a[1][0]], vec![a[0][1], a[1][1]]];
            let composed: Vec<MultiIndexPolynomial> =
                lb.basis.iter().map(|p| p.substitute_linear(&at)).collect();
            // 1e-6: elimination roundoff grows for nearly aligned points,
            // while a genuine covariance violation would be O(1)
            prop_assert!(spans_equal(&lba.basis, &composed, 1e-6));
        }
    }
}
