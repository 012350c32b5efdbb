//! Correlation kernels `Corr(x,x′) = ⟨φ(x), φ(x′)⟩` and their mixed partials.
//!
//! Four measurement setups are supported: a 2-D Gaussian convolution, a 1-D
//! Gaussian mixture parameterized by (mean, standard deviation), a singular
//! boundary-measurement kernel on the open unit disc, and the ideal low-pass
//! (Dirichlet) kernel on the torus. The Gaussian and Dirichlet kernels use
//! closed-form derivative recurrences; the other two propagate truncated
//! Taylor jets through the kernel formula, which stays exact at every order.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{Jet, JetSpace};
use crate::poly::{graded_monomials, MultiIndex, MultiIndexPolynomial};

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `Corr(x,x′) = e^{−‖x−x′‖²/(4σ²)}` on ℝ² (already L²-normalized).
    Gaussian2d { sigma: f64 },
    /// `Corr((m,s),(m′,s′)) = e^{−(m−m′)²/(2(s²+s′²))}/√(s²+s′²)`, s > 0.
    Gmixture1d,
    /// `Corr(x,x′) = 2π(1−‖x‖²‖x′‖²) / [(1−‖x‖²)(1−‖x′‖²)((1−⟨x,x′⟩)² + (x∧x′)²)]`
    /// on the open unit disc.
    NeuroDisc,
    /// Dirichlet kernel `Σ_{|k|≤fc} e^{2πik(x−x′)}` on ℝ/ℤ.
    LowpassTorus { fc: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Plane,
    Torus,
}

/// Immutable kernel evaluator with domain metadata. All evaluation methods
/// are pure; the kernel is safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationKernel {
    kind: KernelKind,
    normalized: bool,
    max_order: u32,
}

impl CorrelationKernel {
    pub fn gaussian2d(sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        CorrelationKernel {
            kind: KernelKind::Gaussian2d { sigma },
            normalized: true,
            max_order: 24,
        }
    }

    /// Gaussian kernel in the convention `Corr(x,x′) = e^{−‖x−x′‖²/2}`
    /// (σ = 1/√2), the coordinates in which the closed-form certificate
    /// results are stated.
    pub fn gaussian_unit() -> Self {
        Self::gaussian2d(std::f64::consts::FRAC_1_SQRT_2)
    }

    pub fn gmixture1d() -> Self {
        CorrelationKernel {
            kind: KernelKind::Gmixture1d,
            normalized: false,
            max_order: 8,
        }
    }

    pub fn neuro_disc() -> Self {
        CorrelationKernel {
            kind: KernelKind::NeuroDisc,
            normalized: false,
            max_order: 8,
        }
    }

    pub fn lowpass_torus(fc: u32) -> Self {
        assert!(fc >= 1, "cutoff frequency must be at least 1");
        CorrelationKernel {
            kind: KernelKind::LowpassTorus { fc },
            normalized: false,
            max_order: 24,
        }
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            KernelKind::LowpassTorus { .. } => 1,
            _ => 2,
        }
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn with_max_order(mut self, cap: u32) -> Self {
        self.max_order = cap;
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// L² normalization `Corr ← Corr/√(Corr(x,x)·Corr(x′,x′))`. A no-op for
    /// the translation-invariant kernels, whose diagonal is already constant
    /// (the Dirichlet kernel is divided by its diagonal value `2fc+1`).
    pub fn normalize(&self) -> Self {
        let mut k = self.clone();
        k.normalized = true;
        k
    }

    /// Cluster point z₀ of the experimental setups.
    pub fn z0(&self) -> Vec<f64> {
        match self.kind {
            KernelKind::Gaussian2d { .. } => vec![0.0, 0.0],
            KernelKind::Gmixture1d => vec![0.0, 2.0],
            KernelKind::NeuroDisc => vec![0.4, 0.3],
            KernelKind::LowpassTorus { .. } => vec![0.0],
        }
    }

    pub fn topology(&self) -> Topology {
        match self.kind {
            KernelKind::LowpassTorus { .. } => Topology::Torus,
            _ => Topology::Plane,
        }
    }

    pub fn is_translation_invariant(&self) -> bool {
        matches!(
            self.kind,
            KernelKind::Gaussian2d { .. } | KernelKind::LowpassTorus { .. }
        )
    }

    /// Default evaluation box, as (low, high) per coordinate. For the torus
    /// this is one full period.
    pub fn bounding_box(&self) -> Vec<(f64, f64)> {
        match self.kind {
            KernelKind::Gaussian2d { sigma } => {
                let w = 4.0 * sigma * std::f64::consts::SQRT_2;
                vec![(-w, w), (-w, w)]
            }
            KernelKind::Gmixture1d => vec![(-3.0, 3.0), (0.5, 6.0)],
            KernelKind::NeuroDisc => vec![(-0.95, 0.95), (-0.95, 0.95)],
            KernelKind::LowpassTorus { .. } => vec![(-0.5, 0.5)],
        }
    }

    pub fn domain_diameter(&self) -> f64 {
        self.bounding_box()
            .iter()
            .map(|(lo, hi)| (hi - lo) * (hi - lo))
            .sum::<f64>()
            .sqrt()
    }

    /// Whether `x` lies strictly inside the kernel's domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self.kind {
            KernelKind::NeuroDisc => x[0] * x[0] + x[1] * x[1] < 1.0,
            KernelKind::Gmixture1d => x[1] > 0.0,
            _ => true,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.contains(x) {
            let reason = match self.kind {
                KernelKind::NeuroDisc => "outside the open unit disc",
                KernelKind::Gmixture1d => "standard deviation must be positive",
                _ => "outside domain",
            };
            return Err(Error::OutOfDomain {
                point: x.to_vec(),
                reason: reason.to_string(),
            });
        }
        Ok(())
    }

    fn check_order(&self, alpha: &MultiIndex, beta: &MultiIndex) -> Result<()> {
        let a = alpha.total_degree();
        let b = beta.total_degree();
        if a > self.max_order || b > self.max_order {
            return Err(Error::OrderCapExceeded {
                requested: a.max(b),
                cap: self.max_order,
            });
        }
        Ok(())
    }

    /// Kernel value `Corr(x, x′)`.
    pub fn corr(&self, x: &[f64], xp: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(xp)?;
        let raw = self.raw_corr(x, xp);
        if !self.normalized {
            return Ok(raw);
        }
        match self.kind {
            KernelKind::Gaussian2d { .. } => Ok(raw),
            KernelKind::LowpassTorus { fc } => Ok(raw / (2 * fc + 1) as f64),
            _ => {
                let dx = self.raw_corr(x, x);
                let dy = self.raw_corr(xp, xp);
                if dx <= 0.0 {
                    return Err(Error::NonPositiveDiagonal { point: x.to_vec() });
                }
                if dy <= 0.0 {
                    return Err(Error::NonPositiveDiagonal { point: xp.to_vec() });
                }
                Ok(raw / (dx * dy).sqrt())
            }
        }
    }

    fn raw_corr(&self, x: &[f64], xp: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Gaussian2d { sigma } => {
                let d2: f64 = x.iter().zip(xp).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (4.0 * sigma * sigma)).exp()
            }
            KernelKind::Gmixture1d => {
                let (m, s, mp, sp) = (x[0], x[1], xp[0], xp[1]);
                let t = s * s + sp * sp;
                (-(m - mp) * (m - mp) / (2.0 * t)).exp() / t.sqrt()
            }
            KernelKind::NeuroDisc => {
                let nx = x[0] * x[0] + x[1] * x[1];
                let ny = xp[0] * xp[0] + xp[1] * xp[1];
                let dot = x[0] * xp[0] + x[1] * xp[1];
                let wedge = x[0] * xp[1] - x[1] * xp[0];
                let den = (1.0 - nx) * (1.0 - ny) * ((1.0 - dot) * (1.0 - dot) + wedge * wedge);
                2.0 * PI * (1.0 - nx * ny) / den
            }
            KernelKind::LowpassTorus { fc } => {
                let u = wrap_torus(x[0] - xp[0]);
                dirichlet(fc, u)
            }
        }
    }

    /// Mixed partial `∂_x^α ∂_{x′}^β Corr(x, x′)`.
    pub fn corr_partial(
        &self,
        alpha: &MultiIndex,
        beta: &MultiIndex,
        x: &[f64],
        xp: &[f64],
    ) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(xp)?;
        self.check_order(alpha, beta)?;
        match self.kind {
            KernelKind::Gaussian2d { sigma } => Ok(gaussian_partial(sigma, alpha, beta, x, xp)),
            KernelKind::LowpassTorus { fc } => {
                let v = lowpass_partial(fc, alpha.0[0], beta.0[0], x[0] - xp[0]);
                Ok(if self.normalized {
                    v / (2 * fc + 1) as f64
                } else {
                    v
                })
            }
            _ => {
                let deg = alpha.total_degree() + beta.total_degree();
                let jet =
                    self.corr_jet(x, xp, deg, alpha.total_degree() > 0, beta.total_degree() > 0)?;
                let mut gamma = alpha.0.clone();
                gamma.extend_from_slice(&beta.0);
                Ok(jet.partial(&MultiIndex(gamma)))
            }
        }
    }

    /// Every mixed partial `∂_x^α ∂_{x′}^β Corr(x,x′)` with `|α| ≤ deg1`,
    /// `|β| ≤ deg2`, computed in one pass.
    pub fn partials_block(
        &self,
        x: &[f64],
        xp: &[f64],
        deg1: u32,
        deg2: u32,
    ) -> Result<PartialsTable> {
        self.check_point(x)?;
        self.check_point(xp)?;
        if deg1 > self.max_order || deg2 > self.max_order {
            return Err(Error::OrderCapExceeded {
                requested: deg1.max(deg2),
                cap: self.max_order,
            });
        }
        let d = self.dim();
        let alphas = graded_monomials(d, deg1);
        let betas = graded_monomials(d, deg2);
        let mut map = HashMap::with_capacity(alphas.len() * betas.len());
        match self.kind {
            KernelKind::Gaussian2d { sigma } => {
                let a = 1.0 / (4.0 * sigma * sigma);
                let nmax = deg1 + deg2;
                let tables: Vec<Vec<f64>> = (0..d)
                    .map(|s| gaussian_derivs(a, x[s] - xp[s], nmax))
                    .collect();
                for al in &alphas {
                    for be in &betas {
                        let mut v = 1.0;
                        for s in 0..d {
                            v *= neg_pow(be.0[s]) * tables[s][(al.0[s] + be.0[s]) as usize];
                        }
                        map.insert((al.0.clone(), be.0.clone()), v);
                    }
                }
            }
            KernelKind::LowpassTorus { fc } => {
                let scale = if self.normalized {
                    1.0 / (2 * fc + 1) as f64
                } else {
                    1.0
                };
                let u = x[0] - xp[0];
                for al in &alphas {
                    for be in &betas {
                        let v = lowpass_partial(fc, al.0[0], be.0[0], u) * scale;
                        map.insert((al.0.clone(), be.0.clone()), v);
                    }
                }
            }
            _ => {
                let jet = self.corr_jet(x, xp, deg1 + deg2, deg1 > 0, deg2 > 0)?;
                for al in &alphas {
                    for be in &betas {
                        let mut gamma = al.0.clone();
                        gamma.extend_from_slice(&be.0);
                        map.insert((al.0.clone(), be.0.clone()), jet.partial(&MultiIndex(gamma)));
                    }
                }
            }
        }
        Ok(PartialsTable {
            dim: d,
            deg1,
            deg2,
            map,
        })
    }

    /// `P^{[1]}(∂) Q^{[2]}(∂) Corr` at `(x, x′)`: the differential operators
    /// `P(∂)` and `Q(∂)` applied to the first and second slot respectively.
    pub fn corr_poly_partial(
        &self,
        p: &MultiIndexPolynomial,
        q: &MultiIndexPolynomial,
        x: &[f64],
        xp: &[f64],
    ) -> Result<f64> {
        let table = self.partials_block(x, xp, p.degree(), q.degree())?;
        let mut acc = 0.0;
        for (al, cp) in p.terms() {
            for (be, cq) in q.terms() {
                acc += cp * cq * table.get(al, be)?;
            }
        }
        Ok(acc)
    }

    /// Taylor jet of the (possibly normalized) kernel around `(x, x′)` in the
    /// 2d variables (first-slot offsets, then second-slot offsets). Slots
    /// whose derivatives are not needed are seeded as constants, which keeps
    /// the jet sparse and the arithmetic proportionally cheaper.
    fn corr_jet(&self, x: &[f64], xp: &[f64], deg: u32, act1: bool, act2: bool) -> Result<Jet> {
        let d = self.dim();
        let space = JetSpace::new(2 * d, deg);
        let seed = |active: bool, var: usize, c: f64| {
            if active {
                Jet::variable(&space, var, c)
            } else {
                Jet::constant(&space, c)
            }
        };
        let first: Vec<Jet> = (0..d).map(|s| seed(act1, s, x[s])).collect();
        let second: Vec<Jet> = (0..d).map(|s| seed(act2, d + s, xp[s])).collect();
        let full = self.raw_jet(&first, &second);
        if !self.normalized {
            return Ok(full);
        }
        let dx = self.raw_jet(&first, &first);
        let dy = self.raw_jet(&second, &second);
        if dx.value() <= 0.0 {
            return Err(Error::NonPositiveDiagonal { point: x.to_vec() });
        }
        if dy.value() <= 0.0 {
            return Err(Error::NonPositiveDiagonal { point: xp.to_vec() });
        }
        Ok(full.mul(&dx.mul(&dy).sqrt().recip()))
    }

    fn raw_jet(&self, x: &[Jet], xp: &[Jet]) -> Jet {
        match self.kind {
            KernelKind::Gmixture1d => {
                let t = x[1].square().add(&xp[1].square());
                let diff = x[0].sub(&xp[0]);
                let arg = diff.square().scale(-0.5).mul(&t.recip());
                arg.exp().mul(&t.sqrt().recip())
            }
            KernelKind::NeuroDisc => {
                let nx = x[0].square().add(&x[1].square());
                let ny = xp[0].square().add(&xp[1].square());
                let dot = x[0].mul(&xp[0]).add(&x[1].mul(&xp[1]));
                let wedge = x[0].mul(&xp[1]).sub(&x[1].mul(&xp[0]));
                let num = nx.mul(&ny).scale(-1.0).add_scalar(1.0).scale(2.0 * PI);
                let one_minus_dot = dot.scale(-1.0).add_scalar(1.0);
                let den = nx
                    .scale(-1.0)
                    .add_scalar(1.0)
                    .mul(&ny.scale(-1.0).add_scalar(1.0))
                    .mul(&one_minus_dot.square().add(&wedge.square()));
                num.mul(&den.recip())
            }
            _ => unreachable!("closed-form kernels do not use jets"),
        }
    }
}

/// All mixed partials of a kernel at a fixed point pair, up to per-slot total
/// degrees `deg1`, `deg2`.
#[derive(Debug, Clone)]
pub struct PartialsTable {
    dim: usize,
    deg1: u32,
    deg2: u32,
    map: HashMap<(Vec<u32>, Vec<u32>), f64>,
}

impl PartialsTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, alpha: &MultiIndex, beta: &MultiIndex) -> Result<f64> {
        self.map.get(&(alpha.0.clone(), beta.0.clone())).copied().ok_or(
            Error::OrderCapExceeded {
                requested: alpha.total_degree().max(beta.total_degree()),
                cap: self.deg1.max(self.deg2),
            },
        )
    }
}

fn neg_pow(n: u32) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `g^{(n)}(u)` for `g(u) = e^{−a u²}`, n = 0..=nmax, via the polynomial
/// recurrence `g^{(n)} = p_n·g`, `p_{n+1} = p_n′ − 2au·p_n`.
fn gaussian_derivs(a: f64, u: f64, nmax: u32) -> Vec<f64> {
    let g = (-a * u * u).exp();
    let mut p = vec![1.0f64]; // coefficients of p_n in u
    let mut out = Vec::with_capacity(nmax as usize + 1);
    for _ in 0..=nmax {
        let val: f64 = p
            .iter()
            .enumerate()
            .map(|(i, c)| c * u.powi(i as i32))
            .sum();
        out.push(val * g);
        // p' − 2au·p
        let mut next = vec![0.0; p.len() + 1];
        for (i, c) in p.iter().enumerate() {
            if i >= 1 {
                next[i - 1] += i as f64 * c;
            }
            next[i + 1] -= 2.0 * a * c;
        }
        p = next;
    }
    out
}

/// `∂_x^a ∂_{x′}^b Σ_{|k|≤fc} e^{2πik(x−x′)}` evaluated at `u = x − x′`.
fn lowpass_partial(fc: u32, a: u32, b: u32, u: f64) -> f64 {
    let mut acc = if a == 0 && b == 0 { 1.0 } else { 0.0 }; // k = 0 term
    for k in 1..=fc {
        let w = 2.0 * PI * k as f64;
        let iw = Complex64::new(0.0, w);
        let coeff = iw.powu(a) * (-iw).powu(b);
        let phase = Complex64::new(0.0, w * u).exp();
        // k and −k are conjugate; their sum is twice the real part
        acc += 2.0 * (coeff * phase).re;
    }
    acc
}

fn dirichlet(fc: u32, u: f64) -> f64 {
    let s = (PI * u).sin();
    if s.abs() < 1e-12 {
        (2 * fc + 1) as f64
    } else {
        ((2 * fc + 1) as f64 * PI * u).sin() / s
    }
}

/// Wrap a torus displacement to the fundamental interval [−½, ½).
pub fn wrap_torus(u: f64) -> f64 {
    let w = u - u.round();
    if w >= 0.5 {
        w - 1.0
    } else {
        w
    }
}

/// Uniform grid over a box, row-major, `res` points per dimension.
pub fn grid_points(bbox: &[(f64, f64)], res: usize) -> Vec<Vec<f64>> {
    assert!(res >= 2);
    let d = bbox.len();
    let mut out = Vec::with_capacity(res.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        out.push(
            (0..d)
                .map(|s| {
                    let (lo, hi) = bbox[s];
                    lo + (hi - lo) * idx[s] as f64 / (res - 1) as f64
                })
                .collect(),
        );
        let mut s = d;
        loop {
            if s == 0 {
                return out;
            }
            s -= 1;
            idx[s] += 1;
            if idx[s] < res {
                break;
            }
            idx[s] = 0;
        }
    }
}

fn gaussian_partial(
    sigma: f64,
    alpha: &MultiIndex,
    beta: &MultiIndex,
    x: &[f64],
    xp: &[f64],
) -> f64 {
    let a = 1.0 / (4.0 * sigma * sigma);
    let mut v = 1.0;
    for s in 0..x.len() {
        let n = alpha.0[s] + beta.0[s];
        let derivs = gaussian_derivs(a, x[s] - xp[s], n);
        v *= neg_pow(beta.0[s]) * derivs[n as usize];
    }
    v
}

/// Declarative kernel selection, deserializable from a JSON config like
/// `{"kernel": "gaussian2d", "sigma": 1.0, "normalized": true}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fc: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<u32>,
}

impl KernelSpec {
    pub fn build(&self) -> Result<CorrelationKernel> {
        let mut k = match self.kernel.as_str() {
            "gaussian2d" => CorrelationKernel::gaussian2d(self.sigma.unwrap_or(1.0)),
            "gaussian_unit" => CorrelationKernel::gaussian_unit(),
            "gmixture1d" => CorrelationKernel::gmixture1d(),
            "neuro_disc" => CorrelationKernel::neuro_disc(),
            "lowpass_torus" => {
                let fc = self.fc.ok_or_else(|| {
                    Error::Config("lowpass_torus requires the `fc` field".into())
                })?;
                CorrelationKernel::lowpass_torus(fc)
            }
            other => return Err(Error::Config(format!("unknown kernel `{other}`"))),
        };
        if self.normalized.unwrap_or(true) {
            k = k.normalize();
        }
        if let Some(cap) = self.max_order {
            k = k.with_max_order(cap);
        }
        Ok(k)
    }
}
