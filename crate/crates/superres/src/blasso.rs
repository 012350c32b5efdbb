//! Spike measures, synthesized observations, the BLASSO objective, and a
//! Frank-Wolfe solver with joint non-convex refinement.
//!
//! The measurement operator `Φ` maps a measure into the correlation kernel's
//! Hilbert space; it is never materialized. Every quantity the solver needs
//! — the objective, the dual variable `η(x) = ⟨φ(x), y − Φm⟩/λ`, its
//! gradient and Hessian — reduces to finite sums of kernel partials over the
//! atoms of the observation and the current iterate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{grid_points, wrap_torus, CorrelationKernel, Topology};
use crate::poly::MultiIndex;

/// A finite signed measure `m = Σ aᵢ δ_{zᵢ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeMeasure {
    pub positions: Vec<Vec<f64>>,
    pub amplitudes: Vec<f64>,
}

impl SpikeMeasure {
    pub fn new(positions: Vec<Vec<f64>>, amplitudes: Vec<f64>) -> Result<Self> {
        if positions.len() != amplitudes.len() {
            return Err(Error::DimensionMismatch {
                expected: positions.len(),
                got: amplitudes.len(),
            });
        }
        Ok(SpikeMeasure {
            positions,
            amplitudes,
        })
    }

    pub fn empty() -> Self {
        SpikeMeasure {
            positions: Vec::new(),
            amplitudes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Total variation `‖a‖₁`.
    pub fn total_variation(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.abs()).sum()
    }

    /// `(Φ*Φ m)(x) = Σ aᵢ Corr(zᵢ, x)`.
    pub fn correlate(&self, kernel: &CorrelationKernel, x: &[f64]) -> Result<f64> {
        let mut v = 0.0;
        for (z, a) in self.positions.iter().zip(&self.amplitudes) {
            v += a * kernel.corr(z, x)?;
        }
        Ok(v)
    }

    /// `⟨Φ self, Φ other⟩ = Σᵢⱼ aᵢ a′ⱼ Corr(zᵢ, z′ⱼ)`.
    pub fn gram_inner(&self, kernel: &CorrelationKernel, other: &SpikeMeasure) -> Result<f64> {
        let mut v = 0.0;
        for (z, a) in self.positions.iter().zip(&self.amplitudes) {
            for (w, b) in other.positions.iter().zip(&other.amplitudes) {
                v += a * b * kernel.corr(z, w)?;
            }
        }
        Ok(v)
    }

    /// Concatenate, scaling the other measure's amplitudes by `gain`.
    pub fn extend_scaled(&mut self, other: &SpikeMeasure, gain: f64) {
        self.positions.extend(other.positions.iter().cloned());
        self.amplitudes
            .extend(other.amplitudes.iter().map(|a| gain * a));
    }
}

/// An implicit observation `y = Φ·clean + noise_gain·Φ·noise`; inner
/// products against `φ(x)` are computable from kernel correlations alone.
#[derive(Debug, Clone)]
pub struct Observation {
    pub clean: SpikeMeasure,
    pub noise: SpikeMeasure,
    pub noise_gain: f64,
    pub kernel: CorrelationKernel,
}

impl Observation {
    pub fn noiseless(kernel: CorrelationKernel, clean: SpikeMeasure) -> Self {
        Observation {
            clean,
            noise: SpikeMeasure::empty(),
            noise_gain: 0.0,
            kernel,
        }
    }

    /// The observation as a single spike measure (noise amplitudes folded in).
    pub fn as_measure(&self) -> SpikeMeasure {
        let mut m = self.clean.clone();
        m.extend_scaled(&self.noise, self.noise_gain);
        m
    }

    /// `⟨φ(x), y⟩`.
    pub fn inner_at(&self, x: &[f64]) -> Result<f64> {
        Ok(self.clean.correlate(&self.kernel, x)?
            + self.noise_gain * self.noise.correlate(&self.kernel, x)?)
    }

    /// `‖y‖²` in the kernel Hilbert space.
    pub fn norm_squared(&self) -> Result<f64> {
        let m = self.as_measure();
        m.gram_inner(&self.kernel, &m)
    }
}

/// `η(x) = ⟨φ(x), y − Φm⟩ / λ`, the dual variable steering atom insertion.
pub fn residual_correlation(
    obs: &Observation,
    m: &SpikeMeasure,
    lambda: f64,
    x: &[f64],
) -> Result<f64> {
    Ok((obs.inner_at(x)? - m.correlate(&obs.kernel, x)?) / lambda)
}

/// The BLASSO objective `‖a‖₁ + (1/2λ)‖Φm − y‖²`.
pub fn objective(obs: &Observation, m: &SpikeMeasure, lambda: f64) -> Result<f64> {
    let y = obs.as_measure();
    let mm = m.gram_inner(&obs.kernel, m)?;
    let my = m.gram_inner(&obs.kernel, &y)?;
    let yy = y.gram_inner(&obs.kernel, &y)?;
    Ok(m.total_variation() + (mm - 2.0 * my + yy) / (2.0 * lambda))
}

/// Gradient of `x ↦ Σ aᵢ Corr(zᵢ, x)` over the atoms of `m`.
fn field_grad(kernel: &CorrelationKernel, m: &SpikeMeasure, x: &[f64]) -> Result<Vec<f64>> {
    let d = kernel.dim();
    let zero = MultiIndex::zeros(d);
    let mut g = vec![0.0; d];
    for (z, a) in m.positions.iter().zip(&m.amplitudes) {
        let table = kernel.partials_block(z, x, 0, 1)?;
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += a * table.get(&zero, &MultiIndex::unit(d, k))?;
        }
    }
    Ok(g)
}

/// Gradient and Hessian of the same field.
fn field_grad_hess(
    kernel: &CorrelationKernel,
    m: &SpikeMeasure,
    x: &[f64],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let d = kernel.dim();
    let zero = MultiIndex::zeros(d);
    let mut g = vec![0.0; d];
    let mut h = DMatrix::zeros(d, d);
    for (z, a) in m.positions.iter().zip(&m.amplitudes) {
        let table = kernel.partials_block(z, x, 0, 2)?;
        for k in 0..d {
            g[k] += a * table.get(&zero, &MultiIndex::unit(d, k))?;
            for l in 0..d {
                let e = MultiIndex::unit(d, k).add(&MultiIndex::unit(d, l));
                h[(k, l)] += a * table.get(&zero, &e)?;
            }
        }
    }
    Ok((g, h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `|η| ≤ 1 + ε` everywhere: the iterate certifies its own optimality.
    CertificateSatisfied,
    MaxIterations,
}

#[derive(Debug, Clone, Serialize)]
pub struct FwIteration {
    pub spike_count: usize,
    pub objective: f64,
    pub sup_eta: f64,
    pub inserted: Option<Vec<f64>>,
    /// Whether the joint refinement's line search stalled this iteration.
    pub refinement_stalled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveTrace {
    pub iterations: Vec<FwIteration>,
    pub termination: Termination,
    /// The step-1 argmax landed on the search box boundary at least once,
    /// suggesting the configured bounding box is too small.
    pub boundary_argmax: bool,
}

#[derive(Debug, Clone)]
pub struct FwOptions {
    /// Grid resolution per dimension for the insertion argmax seed.
    pub grid: usize,
    pub max_iters: usize,
    /// Slack ε of the stop rule `|η| ≤ 1 + ε`.
    pub stop_slack: f64,
    /// Insert on η instead of |η| and keep amplitudes nonnegative.
    pub nonneg: bool,
    /// Spikes closer than this merge; defaults to 1e-6·domain diameter.
    pub merge_radius: Option<f64>,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions {
            grid: 256,
            max_iters: 40,
            stop_slack: 1e-6,
            nonneg: false,
            merge_radius: None,
        }
    }
}

fn torus_aware_dist2(topology: Topology, p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| {
            let u = if topology == Topology::Torus {
                wrap_torus(a - b)
            } else {
                a - b
            };
            u * u
        })
        .sum()
}

/// Newton ascent on `s·η` from a grid seed; returns the polished point and
/// the signed η value there.
fn polish_candidate(
    obs: &Observation,
    diff: &SpikeMeasure,
    lambda: f64,
    x0: &[f64],
    nonneg: bool,
) -> Result<(Vec<f64>, f64)> {
    let kernel = &obs.kernel;
    let eta_at = |x: &[f64]| -> Result<f64> {
        Ok(-diff.correlate(kernel, x)? / lambda)
    };
    let mut x = x0.to_vec();
    let mut v = eta_at(&x)?;
    let s = if nonneg { 1.0 } else { v.signum() };
    for _ in 0..10 {
        let (g, h) = field_grad_hess(kernel, diff, &x)?;
        // η = −field/λ, so ∇(sη) = −s·g/λ etc.
        let grad = DVector::from_iterator(g.len(), g.iter().map(|gi| -s * gi / lambda));
        let hess = h.map(|hij| -s * hij / lambda);
        if grad.norm() < 1e-12 {
            break;
        }
        let step = hess
            .clone()
            .lu()
            .solve(&(-&grad))
            .filter(|dx| dx.dot(&grad) > 0.0)
            .unwrap_or_else(|| grad.clone() * (0.1 / (1.0 + grad.norm())));
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + alpha * d).collect();
            if kernel.contains(&xn) {
                let vn = eta_at(&xn)?;
                if s * vn > s * v {
                    x = xn;
                    v = vn;
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((x, v))
}

/// Newton descent on the fidelity term as a function of spike `i`'s position
/// alone: `x ↦ (aᵢ/λ)⟨φ(x), Φm₋ᵢ − y⟩ + (aᵢ²/2λ)Corr(x,x)`.
fn newton_position(
    obs: &Observation,
    y: &SpikeMeasure,
    lambda: f64,
    m: &mut SpikeMeasure,
    i: usize,
) -> Result<()> {
    let kernel = &obs.kernel;
    let d = kernel.dim();
    let a = m.amplitudes[i];
    if a == 0.0 {
        return Ok(());
    }
    let mut rest = SpikeMeasure {
        positions: m
            .positions
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect(),
        amplitudes: m
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, v)| *v)
            .collect(),
    };
    rest.extend_scaled(y, -1.0);
    let value = |x: &[f64]| -> Result<f64> {
        Ok(a / lambda * rest.correlate(kernel, x)?
            + a * a / (2.0 * lambda) * kernel.corr(x, x)?)
    };
    let mut x = m.positions[i].clone();
    let mut f = value(&x)?;
    for _ in 0..8 {
        let (rg, rh) = field_grad_hess(kernel, &rest, &x)?;
        let self_table = kernel.partials_block(&x, &x, 2, 2)?;
        let zero = MultiIndex::zeros(d);
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for k in 0..d {
            let ek = MultiIndex::unit(d, k);
            g[k] = a / lambda * rg[k]
                + a * a / (2.0 * lambda)
                    * (self_table.get(&ek, &zero)? + self_table.get(&zero, &ek)?);
            for l in 0..d {
                let el = MultiIndex::unit(d, l);
                let ekl = ek.add(&el);
                let self_dd = self_table.get(&ekl, &zero)?
                    + self_table.get(&ek, &el)?
                    + self_table.get(&el, &ek)?
                    + self_table.get(&zero, &ekl)?;
                h[(k, l)] = a / lambda * rh[(k, l)] + a * a / (2.0 * lambda) * self_dd;
            }
        }
        if g.norm() < 1e-14 * (1.0 + f.abs()) {
            break;
        }
        let step = h
            .clone()
            .lu()
            .solve(&(-&g))
            .filter(|s| s.dot(&g) < 0.0)
            .unwrap_or_else(|| -&g * (1.0 / (1.0 + g.norm())));
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..25 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(c, s)| c + alpha * s).collect();
            if kernel.contains(&xn) {
                let fnew = value(&xn)?;
                if fnew < f {
                    x = xn;
                    f = fnew;
                    improved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
    }
    m.positions[i] = x;
    Ok(())
}

/// Remove spikes whose deletion (followed by an exact amplitude re-solve)
/// does not increase the objective — typically numerically duplicated atoms
/// whose amplitude the sign-preserving line search pinned near zero.
fn prune_by_objective(
    obs: &Observation,
    lambda: f64,
    m: &mut SpikeMeasure,
    nonneg: bool,
) -> Result<()> {
    'outer: loop {
        if m.len() <= 1 {
            return Ok(());
        }
        let current = objective(obs, m, lambda)?;
        for i in 0..m.len() {
            let mut cand = m.clone();
            cand.positions.remove(i);
            cand.amplitudes.remove(i);
            let signs: Vec<f64> = cand
                .amplitudes
                .iter()
                .map(|a| if nonneg || *a >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            if let Ok(a) = restricted_lasso_amplitudes(obs, &cand.positions, &signs, lambda) {
                if a.iter().zip(&signs).all(|(ai, si)| ai * si > 0.0) {
                    cand.amplitudes = a;
                }
            }
            if objective(obs, &cand, lambda)? <= current + 1e-12 * (1.0 + current.abs()) {
                *m = cand;
                continue 'outer;
            }
        }
        return Ok(());
    }
}

/// Collapse split atoms: coherent near-duplicate spikes can sit on the flat
/// near-optimal face within the stop slack. Try merging each pair into the
/// position of its dominant member, re-refine, and keep the merge whenever
/// the objective does not increase — the unique minimizer has the smaller
/// support, while genuinely distinct spikes (as in degenerate regimes) make
/// the merged objective strictly worse and survive.
fn consolidate(
    obs: &Observation,
    lambda: f64,
    m: &mut SpikeMeasure,
    nonneg: bool,
) -> Result<()> {
    'outer: loop {
        let n = m.len();
        if n <= 1 {
            return Ok(());
        }
        let cur = objective(obs, m, lambda)?;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut cand = m.clone();
                let keep = if cand.amplitudes[i].abs() >= cand.amplitudes[j].abs() {
                    i
                } else {
                    j
                };
                let drop = i + j - keep;
                cand.amplitudes[keep] += cand.amplitudes[drop];
                cand.positions.remove(drop);
                cand.amplitudes.remove(drop);
                refine(obs, lambda, &mut cand, nonneg)?;
                if objective(obs, &cand, lambda)? <= cur + 1e-12 * (1.0 + cur.abs()) {
                    *m = cand;
                    continue 'outer;
                }
            }
        }
        return Ok(());
    }
}

/// Joint quasi-Newton refinement of all amplitudes and positions, holding
/// amplitude signs fixed (subgradient-safe: the line search never lets an
/// amplitude cross zero). Repeats warm-start/quasi-Newton rounds until the
/// objective stops improving. Returns whether a line search stalled.
fn refine(
    obs: &Observation,
    lambda: f64,
    m: &mut SpikeMeasure,
    nonneg: bool,
) -> Result<bool> {
    let mut stalled = false;
    for _ in 0..6 {
        let before = objective(obs, m, lambda)?;
        stalled = refine_round(obs, lambda, m, nonneg)?;
        let after = objective(obs, m, lambda)?;
        if before - after <= 1e-13 * (1.0 + before.abs()) {
            break;
        }
    }
    Ok(stalled)
}

fn refine_round(
    obs: &Observation,
    lambda: f64,
    m: &mut SpikeMeasure,
    nonneg: bool,
) -> Result<bool> {
    let kernel = &obs.kernel;
    let d = kernel.dim();
    let n = m.len();
    if n == 0 {
        return Ok(false);
    }
    let y = obs.as_measure();
    let yy = y.gram_inner(kernel, &y)?;
    let signs: Vec<f64> = m
        .amplitudes
        .iter()
        .map(|a| if nonneg || *a >= 0.0 { 1.0 } else { -1.0 })
        .collect();

    // amplitude pre-solve: at fixed positions and signs the subproblem is a
    // quadratic whose normal equations are exact; this removes the 1/λ
    // curvature from the quasi-Newton phase
    let presolve = |m: &mut SpikeMeasure| {
        if let Ok(a) = restricted_lasso_amplitudes(obs, &m.positions, &signs, lambda) {
            if a
                .iter()
                .zip(&signs)
                .all(|(ai, si)| ai * si > 0.0 && (!nonneg || *ai >= 0.0))
            {
                m.amplitudes = a;
            }
        }
    };
    presolve(m);

    // warm start: alternate exact amplitude solves with per-spike Newton
    // position updates; each position subproblem is smooth with an exact
    // small Hessian, which sidesteps the 1/λ conditioning of the joint step
    for _ in 0..20 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let before = m.positions[i].clone();
            newton_position(obs, &y, lambda, m, i)?;
            moved = moved.max(
                torus_aware_dist2(kernel.topology(), &before, &m.positions[i]).sqrt(),
            );
        }
        presolve(m);
        if moved < 1e-13 * kernel.domain_diameter() {
            break;
        }
    }

    let pack = |m: &SpikeMeasure| -> DVector<f64> {
        let mut v = Vec::with_capacity(n * (d + 1));
        for i in 0..n {
            v.push(m.amplitudes[i]);
            v.extend_from_slice(&m.positions[i]);
        }
        DVector::from_vec(v)
    };
    let unpack = |p: &DVector<f64>| -> SpikeMeasure {
        let mut positions = Vec::with_capacity(n);
        let mut amplitudes = Vec::with_capacity(n);
        for i in 0..n {
            let base = i * (d + 1);
            amplitudes.push(p[base]);
            positions.push((base + 1..base + 1 + d).map(|j| p[j]).collect());
        }
        SpikeMeasure {
            positions,
            amplitudes,
        }
    };
    // +∞ marks an infeasible point (position outside the kernel domain)
    let value = |p: &DVector<f64>| -> f64 {
        let mm = unpack(p);
        if mm.positions.iter().any(|z| !kernel.contains(z)) {
            return f64::INFINITY;
        }
        let tv: f64 = mm
            .amplitudes
            .iter()
            .zip(&signs)
            .map(|(a, s)| s * a)
            .sum();
        let fid = match (mm.gram_inner(kernel, &mm), mm.gram_inner(kernel, &y)) {
            (Ok(mm2), Ok(my)) => (mm2 - 2.0 * my + yy) / (2.0 * lambda),
            _ => return f64::INFINITY,
        };
        tv + fid
    };
    let gradient = |p: &DVector<f64>| -> Result<DVector<f64>> {
        let mm = unpack(p);
        let mut diff = mm.clone();
        diff.extend_scaled(&y, -1.0);
        let mut g = DVector::zeros(n * (d + 1));
        for i in 0..n {
            let base = i * (d + 1);
            g[base] = signs[i] + diff.correlate(kernel, &mm.positions[i])? / lambda;
            let fg = field_grad(kernel, &diff, &mm.positions[i])?;
            for k in 0..d {
                g[base + 1 + k] = mm.amplitudes[i] * fg[k] / lambda;
            }
        }
        Ok(g)
    };

    let dim = n * (d + 1);
    let mut x = pack(m);
    let mut f = value(&x);
    let mut g = gradient(&x)?;
    // curvature-aware diagonal seed: the fidelity Hessian scales like 1/λ in
    // the amplitudes and |a|²/λ in the positions
    let seed_hinv = |m: &SpikeMeasure| -> DMatrix<f64> {
        let mut h = DMatrix::<f64>::identity(dim, dim);
        for i in 0..n {
            let base = i * (d + 1);
            h[(base, base)] = lambda;
            let a2 = (m.amplitudes[i] * m.amplitudes[i]).max(1e-12);
            for k in 0..d {
                h[(base + 1 + k, base + 1 + k)] = lambda / a2;
            }
        }
        h
    };
    let mut hinv = seed_hinv(m);
    let mut stalled = false;
    for _ in 0..60 {
        if g.norm() < 1e-10 * (1.0 + f.abs()) {
            break;
        }
        let mut p = -(&hinv * &g);
        if p.dot(&g) >= 0.0 {
            // reset a corrupted curvature estimate
            hinv = seed_hinv(&unpack(&x));
            p = -(&hinv * &g);
        }
        // cap the step so no amplitude crosses zero mid-search
        let mut alpha_max = 1.0f64;
        for i in 0..n {
            let base = i * (d + 1);
            let (a, pa) = (x[base], p[base]);
            if pa != 0.0 {
                let cross = -a / pa;
                if cross > 0.0 {
                    alpha_max = alpha_max.min(0.999 * cross);
                }
            }
        }
        let gp = g.dot(&p);
        let mut alpha = alpha_max;
        let mut accepted = false;
        for _ in 0..40 {
            let xn = &x + &p * alpha;
            let fn_ = value(&xn);
            if fn_ <= f + 1e-4 * alpha * gp {
                let gn = gradient(&xn)?;
                let s = &xn - &x;
                let yv = &gn - &g;
                let sy = s.dot(&yv);
                if sy > 1e-12 * s.norm() * yv.norm() {
                    let rho = 1.0 / sy;
                    let i_m = DMatrix::<f64>::identity(dim, dim);
                    let left = &i_m - &s * yv.transpose() * rho;
                    hinv = &left * hinv * left.transpose() + &s * s.transpose() * rho;
                }
                x = xn;
                f = fn_;
                g = gn;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }
    *m = unpack(&x);
    Ok(stalled)
}

/// Drop spikes whose amplitude collapsed to zero and merge near-duplicates.
fn normalize_measure(kernel: &CorrelationKernel, m: &mut SpikeMeasure, merge_radius: f64) {
    let amax = m
        .amplitudes
        .iter()
        .fold(0.0f64, |acc, a| acc.max(a.abs()));
    let keep: Vec<bool> = m
        .amplitudes
        .iter()
        .map(|a| a.abs() > 1e-9 * amax.max(1e-30))
        .collect();
    let mut positions: Vec<Vec<f64>> = Vec::new();
    let mut amplitudes: Vec<f64> = Vec::new();
    for i in 0..m.len() {
        if !keep[i] {
            continue;
        }
        let mut merged = false;
        for (j, q) in positions.iter().enumerate() {
            if torus_aware_dist2(kernel.topology(), &m.positions[i], q)
                < merge_radius * merge_radius
            {
                amplitudes[j] += m.amplitudes[i];
                merged = true;
                break;
            }
        }
        if !merged {
            positions.push(m.positions[i].clone());
            amplitudes.push(m.amplitudes[i]);
        }
    }
    m.positions = positions;
    m.amplitudes = amplitudes;
}

/// Frank-Wolfe with joint non-convex refinement. Each iteration scans the
/// dual variable on a grid, polishes the best candidates by Newton ascent,
/// inserts a soft-thresholded spike at the winner, refines all spikes
/// jointly, and stops when `|η| ≤ 1 + ε`.
pub fn fw_solve(
    obs: &Observation,
    lambda: f64,
    opts: &FwOptions,
) -> Result<(SpikeMeasure, SolveTrace)> {
    if lambda <= 0.0 {
        return Err(Error::Config("lambda must be positive".into()));
    }
    let kernel = &obs.kernel;
    let merge_radius = opts
        .merge_radius
        .unwrap_or(1e-6 * kernel.domain_diameter());
    let bbox = kernel.bounding_box();
    let pts: Vec<Vec<f64>> = grid_points(&bbox, opts.grid)
        .into_iter()
        .filter(|p| kernel.contains(p))
        .collect();
    let y = obs.as_measure();

    let mut m = SpikeMeasure::empty();
    let mut iterations = Vec::new();
    let mut boundary_argmax = false;
    let mut termination = Termination::MaxIterations;

    for _ in 0..opts.max_iters {
        let mut diff = m.clone();
        diff.extend_scaled(&y, -1.0);
        // η on the grid (deterministic reduction: collect, then scan in order)
        let vals: Vec<f64> = pts
            .par_iter()
            .map(|p| Ok(-diff.correlate(kernel, p)? / lambda))
            .collect::<Result<Vec<f64>>>()?;
        let score = |v: f64| if opts.nonneg { v } else { v.abs() };

        // top candidates, kept apart by a couple of grid cells
        let cell = bbox
            .iter()
            .map(|(lo, hi)| (hi - lo) / opts.grid.max(2) as f64)
            .fold(0.0f64, f64::max);
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &b| score(vals[b]).total_cmp(&score(vals[a])));
        let mut seeds: Vec<usize> = Vec::new();
        for idx in order {
            if seeds.len() >= 5 {
                break;
            }
            if seeds
                .iter()
                .all(|&s| torus_aware_dist2(kernel.topology(), &pts[idx], &pts[s]) > 4.0 * cell * cell)
            {
                seeds.push(idx);
            }
        }

        let mut best: Option<(Vec<f64>, f64)> = None;
        for &s in &seeds {
            let (x, v) = polish_candidate(obs, &diff, lambda, &pts[s], opts.nonneg)?;
            if best
                .as_ref()
                .map_or(true, |(_, bv)| score(v) > score(*bv))
            {
                best = Some((x, v));
            }
        }
        let (xstar, vstar) = best.ok_or_else(|| {
            Error::Config("empty search grid: no domain point to insert at".into())
        })?;
        let sup_eta = score(vstar);

        if sup_eta <= 1.0 + opts.stop_slack {
            termination = Termination::CertificateSatisfied;
            iterations.push(FwIteration {
                spike_count: m.len(),
                objective: objective(obs, &m, lambda)?,
                sup_eta,
                inserted: None,
                refinement_stalled: false,
            });
            break;
        }
        if xstar
            .iter()
            .zip(&bbox)
            .any(|(c, (lo, hi))| (c - lo).abs() < 1e-9 || (c - hi).abs() < 1e-9)
            && kernel.topology() != Topology::Torus
        {
            boundary_argmax = true;
        }

        // soft-thresholded amplitude for the new atom
        let norm2 = kernel.corr(&xstar, &xstar)?;
        let a_new = vstar.signum() * lambda * (vstar.abs() - 1.0) / norm2;
        m.positions.push(xstar.clone());
        m.amplitudes.push(a_new);

        let stalled = refine(obs, lambda, &mut m, opts.nonneg)?;
        normalize_measure(kernel, &mut m, merge_radius);
        prune_by_objective(obs, lambda, &mut m, opts.nonneg)?;

        iterations.push(FwIteration {
            spike_count: m.len(),
            objective: objective(obs, &m, lambda)?,
            sup_eta,
            inserted: Some(xstar),
            refinement_stalled: stalled,
        });
    }

    if termination == Termination::CertificateSatisfied && !m.is_empty() {
        // final cleanup: atoms whose amplitude sits below the certificate
        // slack are artifacts of the finite stop tolerance; drop them and
        // re-polish the survivors
        let amax = m.amplitudes.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
        let keep: Vec<usize> = (0..m.len())
            .filter(|&i| m.amplitudes[i].abs() > opts.stop_slack * amax)
            .collect();
        if keep.len() < m.len() {
            m = SpikeMeasure {
                positions: keep.iter().map(|&i| m.positions[i].clone()).collect(),
                amplitudes: keep.iter().map(|&i| m.amplitudes[i]).collect(),
            };
            refine(obs, lambda, &mut m, opts.nonneg)?;
            normalize_measure(kernel, &mut m, merge_radius);
        }
    }
    // objective-checked consolidation is safe in every regime (genuinely
    // distinct spikes make the merged objective worse and survive), but the
    // pairwise re-refinements get expensive for large measures
    if m.len() > 1 && m.len() <= 12 {
        consolidate(obs, lambda, &mut m, opts.nonneg)?;
        prune_by_objective(obs, lambda, &mut m, opts.nonneg)?;
    }

    Ok((
        m,
        SolveTrace {
            iterations,
            termination,
            boundary_argmax,
        },
    ))
}

/// A random measure `m̄` with `q` uniform atoms in the kernel domain and
/// i.i.d. centered normal amplitudes; deterministic under `seed`.
pub fn noise_measure(
    seed: u64,
    q: usize,
    std: f64,
    kernel: &CorrelationKernel,
) -> Result<SpikeMeasure> {
    assert!(q >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bbox = kernel.bounding_box();
    let mut positions = Vec::with_capacity(q);
    while positions.len() < q {
        let p: Vec<f64> = bbox.iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect();
        if kernel.contains(&p) {
            positions.push(p);
        }
    }
    let amplitudes = if std > 0.0 {
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        (0..q).map(|_| normal.sample(&mut rng)).collect()
    } else {
        vec![0.0; q]
    };
    Ok(SpikeMeasure {
        positions,
        amplitudes,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub lambda: f64,
    pub noise_norm: f64,
    pub spike_count: usize,
    pub position_error: f64,
    pub amplitude_error: f64,
    /// `max(position_error, amplitude_error) · t³ / (λ + ‖w‖)` — an
    /// empirical estimate of the stability constant, which must stay
    /// bounded across the sweep when the pair is non-degenerate.
    pub error_ratio: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Shrink a two-spike configuration toward the cluster point and solve the
/// BLASSO at each scale with `λ = λ(t)` and noise gain `gain(t)`.
#[allow(clippy::too_many_arguments)]
pub fn two_spike_sweep(
    kernel: &CorrelationKernel,
    z0: &[Vec<f64>],
    a0: &[f64],
    t_list: &[f64],
    lambda_of_t: impl Fn(f64) -> f64,
    gain_of_t: impl Fn(f64) -> f64,
    seed: u64,
    opts: &FwOptions,
) -> Result<SweepResult> {
    if z0.len() != 2 || a0.len() != 2 {
        return Err(Error::Config("the sweep requires exactly two spikes".into()));
    }
    let anchor = kernel.z0();
    let noise = noise_measure(seed, 20, 1e-3, kernel)?;
    let noise_self = noise.gram_inner(kernel, &noise)?.max(0.0).sqrt();
    let mut rows = Vec::with_capacity(t_list.len());
    for &t in t_list {
        let lambda = lambda_of_t(t);
        let gain = gain_of_t(t);
        let truth = SpikeMeasure {
            positions: z0
                .iter()
                .map(|z| {
                    (0..z.len())
                        .map(|s| anchor[s] + t * (z[s] - anchor[s]))
                        .collect()
                })
                .collect(),
            amplitudes: a0.to_vec(),
        };
        let obs = Observation {
            clean: truth.clone(),
            noise: noise.clone(),
            noise_gain: gain,
            kernel: kernel.clone(),
        };
        let noise_norm = gain.abs() * noise_self;
        match fw_solve(&obs, lambda, opts) {
            Ok((rec, _trace)) => {
                let (pos_err, amp_err, failure) = if rec.len() == truth.len() {
                    // greedy nearest matching of recovered to true spikes
                    let mut used = vec![false; rec.len()];
                    let mut pe: f64 = 0.0;
                    let mut ae: f64 = 0.0;
                    for (tz, ta) in truth.positions.iter().zip(&truth.amplitudes) {
                        let mut bi = usize::MAX;
                        let mut bd = f64::INFINITY;
                        for (j, rz) in rec.positions.iter().enumerate() {
                            if used[j] {
                                continue;
                            }
                            let d2 = torus_aware_dist2(kernel.topology(), tz, rz);
                            if d2 < bd {
                                bd = d2;
                                bi = j;
                            }
                        }
                        used[bi] = true;
                        for (a, b) in tz.iter().zip(&rec.positions[bi]) {
                            pe = pe.max((a - b).abs());
                        }
                        ae = ae.max((ta - rec.amplitudes[bi]).abs());
                    }
                    (pe, ae, None)
                } else {
                    (
                        f64::NAN,
                        f64::NAN,
                        Some(format!(
                            "recovered {} spikes instead of {}",
                            rec.len(),
                            truth.len()
                        )),
                    )
                };
                let err = pos_err.max(amp_err);
                rows.push(SweepRow {
                    t,
                    lambda,
                    noise_norm,
                    spike_count: rec.len(),
                    position_error: pos_err,
                    amplitude_error: amp_err,
                    error_ratio: err * t.powi(3) / (lambda + noise_norm),
                    failure,
                });
            }
            Err(e) => rows.push(SweepRow {
                t,
                lambda,
                noise_norm,
                spike_count: 0,
                position_error: f64::NAN,
                amplitude_error: f64::NAN,
                error_ratio: f64::NAN,
                failure: Some(e.to_string()),
            }),
        }
    }
    Ok(SweepResult { rows })
}

/// Amplitudes of the finite LASSO restricted to a known support with known
/// signs, from the normal equations `G a = b − λs`. Oracle for solver tests.
pub fn restricted_lasso_amplitudes(
    obs: &Observation,
    support: &[Vec<f64>],
    signs: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let n = support.len();
    let kernel = &obs.kernel;
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = kernel.corr(&support[i], &support[j])?;
        }
    }
    let b = DVector::from_fn(n, |i, _| {
        obs.inner_at(&support[i]).unwrap() - lambda * signs[i]
    });
    g.lu()
        .solve(&b)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::SingularSystem("restricted LASSO Gram solve failed".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gauss() -> CorrelationKernel {
        CorrelationKernel::gaussian_unit()
    }

    fn two_spike_obs(kernel: &CorrelationKernel) -> Observation {
        Observation::noiseless(
            kernel.clone(),
            SpikeMeasure {
                positions: vec![vec![-1.0, -0.5], vec![1.2, 0.8]],
                amplitudes: vec![1.0, 0.7],
            },
        )
    }

    #[test]
    fn residual_correlation_basics() {
        let k = gauss();
        let obs = two_spike_obs(&k);
        // m equal to the clean measure → zero residual everywhere
        let m = obs.clean.clone();
        for x in [[0.0, 0.0], [1.0, -1.0]] {
            assert!(residual_correlation(&obs, &m, 0.3, &x).unwrap().abs() < 1e-12);
        }
        // m = 0, single spike, x on the spike → a/λ for a normalized kernel
        let single = Observation::noiseless(
            k.clone(),
            SpikeMeasure {
                positions: vec![vec![0.3, -0.2]],
                amplitudes: vec![2.5],
            },
        );
        let v = residual_correlation(&single, &SpikeMeasure::empty(), 0.5, &[0.3, -0.2]).unwrap();
        assert!((v - 2.5 / 0.5).abs() < 1e-12);
        // symmetric spikes → symmetric value at the midpoint under swap
        let sym = |p: Vec<Vec<f64>>| {
            let o = Observation::noiseless(
                k.clone(),
                SpikeMeasure {
                    positions: p,
                    amplitudes: vec![1.0, 1.0],
                },
            );
            residual_correlation(&o, &SpikeMeasure::empty(), 1.0, &[0.0, 0.0]).unwrap()
        };
        let a = sym(vec![vec![-0.7, 0.0], vec![0.7, 0.0]]);
        let b = sym(vec![vec![0.7, 0.0], vec![-0.7, 0.0]]);
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn objective_basics() {
        let k = gauss();
        let obs = two_spike_obs(&k);
        let lambda = 0.4;
        let f0 = objective(&obs, &SpikeMeasure::empty(), lambda).unwrap();
        assert!((f0 - obs.norm_squared().unwrap() / (2.0 * lambda)).abs() < 1e-12);
        let fc = objective(&obs, &obs.clean, lambda).unwrap();
        assert!((fc - obs.clean.total_variation()).abs() < 1e-12);
        // λ → ∞ limit is the total variation
        let finf = objective(&obs, &obs.clean, 1e15).unwrap();
        assert!((finf - 1.7).abs() < 1e-10);
    }

    #[test]
    fn exactness_sanity() {
        let k = gauss();
        let obs = two_spike_obs(&k);
        let lambda = 1e-8 * obs.norm_squared().unwrap();
        let opts = FwOptions {
            grid: 64,
            ..Default::default()
        };
        let (m, trace) = fw_solve(&obs, lambda, &opts).unwrap();
        assert_eq!(trace.termination, Termination::CertificateSatisfied);
        assert_eq!(m.len(), 2);
        let diam = k.domain_diameter();
        for (tz, ta) in obs.clean.positions.iter().zip(&obs.clean.amplitudes) {
            let (j, d2) = m
                .positions
                .iter()
                .enumerate()
                .map(|(j, rz)| (j, torus_aware_dist2(Topology::Plane, tz, rz)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d2.sqrt() < 1e-4 * diam, "position off by {}", d2.sqrt());
            assert!(
                (m.amplitudes[j] - ta).abs() < 1e-3 * ta.abs(),
                "amplitude {} vs {}",
                m.amplitudes[j],
                ta
            );
        }
    }

    #[test]
    fn recovered_amplitudes_match_restricted_lasso() {
        let k = gauss();
        let obs = two_spike_obs(&k);
        let lambda = 5e-3;
        let opts = FwOptions {
            grid: 64,
            ..Default::default()
        };
        let (m, _) = fw_solve(&obs, lambda, &opts).unwrap();
        assert_eq!(m.len(), 2);
        let oracle =
            restricted_lasso_amplitudes(&obs, &m.positions, &[1.0, 1.0], lambda).unwrap();
        for (a, b) in m.amplitudes.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn trace_objective_nonincreasing_and_dual_feasible() {
        let k = gauss();
        let obs = two_spike_obs(&k);
        let lambda = 1e-3;
        let opts = FwOptions {
            grid: 64,
            ..Default::default()
        };
        let (m, trace) = fw_solve(&obs, lambda, &opts).unwrap();
        for w in trace.iterations.windows(2) {
            assert!(
                w[1].objective <= w[0].objective + 1e-12,
                "objective increased: {} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
        assert_eq!(trace.termination, Termination::CertificateSatisfied);
        // dual feasibility on the search grid at termination
        let mut diff = m.clone();
        diff.extend_scaled(&obs.as_measure(), -1.0);
        let sup = grid_points(&k.bounding_box(), 64)
            .iter()
            .map(|p| (diff.correlate(&k, p).unwrap() / lambda).abs())
            .fold(0.0f64, f64::max);
        assert!(sup <= 1.0 + 1e-6, "sup |η| = {sup}");
    }

    #[test]
    fn seeded_determinism() {
        let k = gauss();
        let mut obs = two_spike_obs(&k);
        obs.noise = noise_measure(7, 20, 1e-3, &k).unwrap();
        obs.noise_gain = 1e-2;
        let opts = FwOptions {
            grid: 48,
            ..Default::default()
        };
        let (m1, t1) = fw_solve(&obs, 1e-2, &opts).unwrap();
        let (m2, t2) = fw_solve(&obs, 1e-2, &opts).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(t1.iterations.len(), t2.iterations.len());
        for (a, b) in t1.iterations.iter().zip(&t2.iterations) {
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
            assert_eq!(a.sup_eta.to_bits(), b.sup_eta.to_bits());
        }
    }

    #[test]
    fn noise_measure_properties() {
        let k = gauss();
        let a = noise_measure(42, 20, 1e-3, &k).unwrap();
        let b = noise_measure(42, 20, 1e-3, &k).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert!(a.positions.iter().all(|p| k.contains(p)));
        let z = noise_measure(42, 20, 0.0, &k).unwrap();
        assert!(z.amplitudes.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scaling_consistency() {
        let k = gauss();
        let obs = two_spike_obs(&k);
        let lambda = 2e-3;
        let opts = FwOptions {
            grid: 48,
            ..Default::default()
        };
        let (m1, _) = fw_solve(&obs, lambda, &opts).unwrap();
        let c = 3.0;
        let mut obs2 = obs.clone();
        for a in &mut obs2.clean.amplitudes {
            *a *= c;
        }
        let (m2, _) = fw_solve(&obs2, c * lambda, &opts).unwrap();
        assert_eq!(m1.len(), m2.len());
        for i in 0..m1.len() {
            let (j, d2) = m2
                .positions
                .iter()
                .enumerate()
                .map(|(j, rz)| (j, torus_aware_dist2(Topology::Plane, &m1.positions[i], rz)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(d2.sqrt() < 1e-8, "position shifted by {}", d2.sqrt());
            assert!(
                (m2.amplitudes[j] - c * m1.amplitudes[i]).abs() < 1e-6,
                "amplitude {} vs {}",
                m2.amplitudes[j],
                c * m1.amplitudes[i]
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn objective_at_truth_bounded_by_zero_measure(
            a1 in 0.2f64..2.0, a2 in 0.2f64..2.0,
            dx in 1.5f64..3.0, lam in 1e-4f64..1e-1,
        ) {
            // for small λ the truth beats the empty measure
            let k = gauss();
            let obs = Observation::noiseless(k, SpikeMeasure {
                positions: vec![vec![-dx / 2.0, 0.0], vec![dx / 2.0, 0.0]],
                amplitudes: vec![a1, a2],
            });
            let f_truth = objective(&obs, &obs.clean, lam).unwrap();
            let f_empty = objective(&obs, &SpikeMeasure::empty(), lam).unwrap();
            if lam < 1e-2 {
                prop_assert!(f_truth <= f_empty);
            }
            prop_assert!(f_truth >= obs.clean.total_variation() - 1e-12);
        }

        #[test]
        fn residual_is_linear_in_y(
            x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, c in 0.1f64..5.0,
        ) {
            let k = gauss();
            let obs = two_spike_obs(&k);
            let mut scaled = obs.clone();
            for a in &mut scaled.clean.amplitudes { *a *= c; }
            let x = [x0, x1];
            let v = residual_correlation(&obs, &SpikeMeasure::empty(), 1.0, &x).unwrap();
            let vc = residual_correlation(&scaled, &SpikeMeasure::empty(), 1.0, &x).unwrap();
            prop_assert!((vc - c * v).abs() < 1e-10 * (1.0 + vc.abs()));
        }
    }
}
