//! Basis-function ILC in the commutation-angle domain.
//!
//! The sampled error of each step is projected onto the basis by least
//! squares. The input coefficients are then updated as
//!
//! ```text
//! θᵘ_{j+1} = Q θᵘ_j + L θᵉ_j
//! ```
//!
//! where Q and L minimize the weighted continuous cost over [0, 2π) of the
//! next error, the next input and the input change. Both matrices are built
//! from weighted Gram integrals ∫ w(α) ψ(α)ψ⊤(α) dα and depend only on the
//! basis and the weights, never on the sample grid.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{certify, sampled_matrix, BasisSet, IndependenceCertificate, ParamVector, Role};
use crate::commutation::SampleGrid;
use crate::error::{Error, Result};
use crate::quadrature::{CompositeRule, QuadratureSpec};

/// Extra scan points for admissibility checks of non-constant weights.
const WEIGHT_SCAN_POINTS: usize = 4096;

/// A non-negative weight function of α.
#[derive(Clone)]
pub enum Weight {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Weight {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Weight::Function(Arc::new(f))
    }

    pub fn at(&self, alpha: f64) -> f64 {
        match self {
            Weight::Constant(c) => *c,
            Weight::Function(f) => f(alpha),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            Weight::Constant(c) => Some(*c),
            Weight::Function(_) => None,
        }
    }
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Constant(c) => write!(f, "Constant({c:e})"),
            Weight::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Cost weights on the next error, the next input and the input change.
#[derive(Debug, Clone)]
pub struct IlcWeights {
    pub w_e: Weight,
    pub w_u: Weight,
    pub w_du: Weight,
}

/// Scalar weights as written in the experiment file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarWeights {
    #[serde(rename = "W_e")]
    pub w_e: f64,
    #[serde(rename = "W_u")]
    pub w_u: f64,
    #[serde(rename = "W_du")]
    pub w_du: f64,
}

impl From<ScalarWeights> for IlcWeights {
    fn from(s: ScalarWeights) -> Self {
        IlcWeights::scalar(s.w_e, s.w_u, s.w_du)
    }
}

impl IlcWeights {
    pub fn scalar(w_e: f64, w_u: f64, w_du: f64) -> Self {
        Self {
            w_e: Weight::Constant(w_e),
            w_u: Weight::Constant(w_u),
            w_du: Weight::Constant(w_du),
        }
    }

    /// W_e = 1, W_u = W_du = 0: one-iteration cancellation for a matched gain.
    pub fn deadbeat() -> Self {
        Self::scalar(1.0, 0.0, 0.0)
    }

    fn scan_points(rule: &CompositeRule) -> impl Iterator<Item = f64> + '_ {
        rule.nodes
            .iter()
            .copied()
            .chain((0..WEIGHT_SCAN_POINTS).map(|i| TAU * i as f64 / WEIGHT_SCAN_POINTS as f64))
    }

    /// Weights must be non-negative and at least one positive at every α.
    pub fn check_update_admissible(&self, rule: &CompositeRule) -> Result<()> {
        for a in Self::scan_points(rule) {
            let (e, u, du) = (self.w_e.at(a), self.w_u.at(a), self.w_du.at(a));
            if !(e >= 0.0 && u >= 0.0 && du >= 0.0) || !(e + u + du).is_finite() {
                return Err(Error::InadmissibleWeights(format!(
                    "weights must be finite and non-negative, got W_e={e:e}, W_u={u:e}, W_du={du:e} at α={a}"
                )));
            }
            if e + u + du <= 0.0 {
                return Err(Error::InadmissibleWeights(format!(
                    "W_e, W_u and W_du all vanish at α={a}; the optimal update is not unique"
                )));
            }
        }
        Ok(())
    }

    /// Monotonic convergence additionally needs W_e or W_u positive at every α.
    pub fn check_convergence_admissible(&self, rule: &CompositeRule) -> Result<()> {
        self.check_update_admissible(rule)?;
        for a in Self::scan_points(rule) {
            if self.w_e.at(a) + self.w_u.at(a) <= 0.0 {
                return Err(Error::InadmissibleWeights(format!(
                    "W_e and W_u both vanish at α={a}; convergence is not guaranteed"
                )));
            }
        }
        Ok(())
    }

    /// W_du / (h0² W_e + W_u + W_du) for scalar weights, the per-iteration
    /// retention factor of the matched-gain update.
    pub fn damping_ratio(&self, h0: f64) -> Option<f64> {
        let (e, u, du) = (
            self.w_e.as_constant()?,
            self.w_u.as_constant()?,
            self.w_du.as_constant()?,
        );
        Some(du / (h0 * h0 * e + u + du))
    }
}

/// ∫₀^{2π} w(α) ψ(α)ψ⊤(α) dα by composite Gauss–Legendre quadrature.
pub fn weighted_gram(
    basis: &BasisSet,
    weight: impl Fn(f64) -> f64,
    quad: QuadratureSpec,
) -> Result<DMatrix<f64>> {
    let rule = CompositeRule::new(quad)?;
    let m = basis.len();
    let mut g = DMatrix::zeros(m, m);
    let mut psi = vec![0.0; m];
    for (&a, &w) in rule.nodes.iter().zip(&rule.weights) {
        let ww = w * weight(a);
        for (k, p) in psi.iter_mut().enumerate() {
            *p = basis.value(k, a);
        }
        for c in 0..m {
            for r in c..m {
                g[(r, c)] += ww * psi[r] * psi[c];
            }
        }
    }
    g.fill_upper_triangle_with_lower_triangle();
    Ok(g)
}

/// Q, L and how they were built.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningMatrices {
    pub q: DMatrix<f64>,
    pub l: DMatrix<f64>,
    pub h0_model: f64,
    pub quadrature: QuadratureSpec,
    pub ridge: f64,
}

impl LearningMatrices {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }
}

pub fn compute_learning_matrices(
    basis: &BasisSet,
    weights: &IlcWeights,
    h0_model: f64,
    quad: QuadratureSpec,
) -> Result<LearningMatrices> {
    compute_learning_matrices_with_ridge(basis, weights, h0_model, quad, 0.0)
}

/// Builds Q = A⁻¹B and L = A⁻¹C with
/// A = ∫(h0²W_e + W_u + W_du)ψψ⊤ + ridge·I, B = ∫(h0²W_e + W_du)ψψ⊤, C = ∫h0 W_e ψψ⊤.
///
/// A is ill-conditioned for smooth overlapping bases, so it is never formed.
/// With Φ the quadrature-weighted sampled basis, A = Φ⊤Φ = R⊤R from a thin QR
/// Φ = UR, and B = Φ⊤ diag(b/a) Φ. Then A⁻¹B = R⁻¹ (U⊤ diag(b/a) U) R, which
/// only involves triangular solves with R, whose condition number is the
/// square root of A's.
pub fn compute_learning_matrices_with_ridge(
    basis: &BasisSet,
    weights: &IlcWeights,
    h0_model: f64,
    quad: QuadratureSpec,
    ridge: f64,
) -> Result<LearningMatrices> {
    if !(h0_model.is_finite() && h0_model > 0.0) {
        return Err(Error::Domain {
            what: "model gain h0 [m/V]",
            value: h0_model,
            expected: "finite and > 0",
        });
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::Domain {
            what: "ridge",
            value: ridge,
            expected: "finite and ≥ 0",
        });
    }
    let rule = CompositeRule::new(quad)?;
    weights.check_update_admissible(&rule)?;

    let m = basis.len();
    let k_nodes = rule.nodes.len();
    let extra = if ridge > 0.0 { m } else { 0 };
    let h2 = h0_model * h0_model;

    let mut phi = DMatrix::zeros(k_nodes + extra, m);
    let mut rho_b = vec![0.0; k_nodes + extra];
    let mut rho_c = vec![0.0; k_nodes + extra];
    for (i, (&a, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let (we, wu, wdu) = (weights.w_e.at(a), weights.w_u.at(a), weights.w_du.at(a));
        let full = h2 * we + wu + wdu;
        rho_b[i] = (h2 * we + wdu) / full;
        rho_c[i] = h0_model * we / full;
        let s = (w * full).sqrt();
        for k in 0..m {
            phi[(i, k)] = s * basis.value(k, a);
        }
    }
    for k in 0..extra {
        phi[(k_nodes + k, k)] = ridge.sqrt();
    }

    let qr = phi.qr();
    let r = qr.r();
    let u = qr.q();
    let diag = r.diagonal().abs();
    if diag.min() <= 1e-14 * diag.max() {
        return Err(Error::SingularGram(format!(
            "triangular factor has |R_kk| ratio {:e}",
            diag.min() / diag.max()
        )));
    }

    let project = |rho: &[f64]| -> DMatrix<f64> {
        let mut scaled = u.clone();
        for (mut row, &p) in scaled.row_iter_mut().zip(rho) {
            row *= p;
        }
        u.transpose() * scaled
    };
    let solve = |s: DMatrix<f64>| -> Result<DMatrix<f64>> {
        r.solve_upper_triangular(&(s * &r))
            .ok_or_else(|| Error::SingularGram("triangular solve failed".into()))
    };
    let q = solve(project(&rho_b))?;
    let l = solve(project(&rho_c))?;

    Ok(LearningMatrices {
        q,
        l,
        h0_model,
        quadrature: quad,
        ridge,
    })
}

/// θᵘ_{j+1} = Q θᵘ_j + L θᵉ_j.
pub fn ilc_update(
    theta_u: &ParamVector,
    theta_e: &ParamVector,
    lm: &LearningMatrices,
) -> Result<ParamVector> {
    theta_u.check_len(lm.dim())?;
    theta_e.check_len(lm.dim())?;
    let next = &lm.q * &theta_u.theta + &lm.l * &theta_e.theta;
    let mut out = ParamVector::new(next, Role::Input);
    out.iteration = theta_u.iteration.map(|j| j + 1);
    Ok(out)
}

/// ‖Q − h0_true·L‖₂, the factor by which the distance to the fixed point shrinks
/// per iteration when the plant gain is `h0_true`.
pub fn contraction_factor(lm: &LearningMatrices, h0_true: f64) -> f64 {
    (&lm.q - &lm.l * h0_true).singular_values().max()
}

/// Fixed point θ* of θ ↦ Qθ + L(c − h0_true θ), where c = θᵉ observed with θᵘ = 0.
pub fn fixed_point(lm: &LearningMatrices, h0_true: f64, c: &DVector<f64>) -> Result<DVector<f64>> {
    let m = lm.dim();
    if c.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: c.len(),
        });
    }
    let a = DMatrix::identity(m, m) - &lm.q + &lm.l * h0_true;
    a.lu()
        .solve(&(&lm.l * c))
        .ok_or_else(|| Error::SingularGram("iteration map has no unique fixed point".into()))
}

/// Least-squares parameterization of a sampled error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorFit {
    pub theta: ParamVector,
    /// RMS of ē − Ψ̄⊤θ over the samples [m].
    pub residual_rms_m: f64,
    pub certificate: IndependenceCertificate,
}

/// θᵉ minimizing Σ (ē_i − ψ⊤(α_i)θ)², solved through a QR factorization of Ψ̄⊤.
pub fn fit_error(
    e_bar: &[f64],
    grid: &SampleGrid,
    basis: &BasisSet,
    min_sigma_ratio: f64,
) -> Result<ErrorFit> {
    if e_bar.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            got: e_bar.len(),
        });
    }
    let psi = sampled_matrix(basis, &grid.alphas);
    let certificate = certify(&psi, min_sigma_ratio)?;

    let a = psi.transpose();
    let e = DVector::from_column_slice(e_bar);
    let qr = a.clone().qr();
    let rhs = qr.q().transpose() * &e;
    let theta = qr.r().solve_upper_triangular(&rhs).ok_or(Error::RankDeficient {
        ratio: certificate.ratio(),
        threshold: min_sigma_ratio,
    })?;

    let resid = &e - &a * &theta;
    let residual_rms_m = (resid.norm_squared() / e_bar.len() as f64).sqrt();
    Ok(ErrorFit {
        theta: ParamVector::new(theta, Role::Error).at_iteration(grid.iteration),
        residual_rms_m,
        certificate,
    })
}

/// The least-squares cost Σ (ē_i − ψ⊤(α_i)θ)².
pub fn fit_cost(e_bar: &[f64], grid: &SampleGrid, basis: &BasisSet, theta: &[f64]) -> f64 {
    grid.alphas
        .iter()
        .zip(e_bar)
        .map(|(&a, &e)| (e - basis.combine(theta, a)).powi(2))
        .sum()
}

/// √((1/2π) ∫₀^{2π} f(α)² dα).
pub fn rms_function(f: impl Fn(f64) -> f64, quad: QuadratureSpec) -> Result<f64> {
    let rule = CompositeRule::new(quad)?;
    Ok((rule.integrate(|a| f(a).powi(2)) / TAU).sqrt())
}

/// Continuous RMS of the parameterized error ψ⊤θᵉ over one step.
pub fn rms_alpha(theta_e: &ParamVector, basis: &BasisSet, quad: QuadratureSpec) -> Result<f64> {
    theta_e.check_len(basis.len())?;
    let t = theta_e.theta.as_slice();
    rms_function(|a| basis.combine(t, a), quad)
}
