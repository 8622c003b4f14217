//! Basis functions ψ(α) for parameterizing inputs and errors over one step.
//!
//! The shipped kind is the inverse-quadratic radial basis function
//! ψ_k(α) = 1 / (1 + (ε |α − c_k|)²) with M centers spread equidistantly over
//! [0, 2π). The distance is the plain absolute difference by default. A
//! periodic (wrap-around) distance can be switched on for comparison studies.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::commutation::SampleGrid;
use crate::error::{Error, Result};

/// Default rejection threshold on σ_min/σ_max of a sampled basis.
pub const DEFAULT_MIN_SIGMA_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    InverseQuadratic,
}

/// Configuration form, e.g. `{"kind": "inverse_quadratic", "M": 30}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub kind: BasisKind,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default = "unit_width", skip_serializing_if = "is_unit")]
    pub width_rad: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub periodic_distance: bool,
}

fn unit_width() -> f64 {
    1.0
}

fn is_unit(w: &f64) -> bool {
    *w == 1.0
}

impl BasisSpec {
    pub fn inverse_quadratic(m: usize) -> Self {
        Self {
            kind: BasisKind::InverseQuadratic,
            m,
            width_rad: 1.0,
            periodic_distance: false,
        }
    }

    pub fn build(&self) -> Result<BasisSet> {
        BasisSet::new(self.kind, self.m, self.width_rad, self.periodic_distance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    kind: BasisKind,
    centers: Vec<f64>,
    width: f64,
    periodic: bool,
}

impl BasisSet {
    pub fn new(kind: BasisKind, m: usize, width_rad: f64, periodic: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("basis needs at least one function".into()));
        }
        if !(width_rad.is_finite() && width_rad > 0.0) {
            return Err(Error::Domain {
                what: "basis width [rad]",
                value: width_rad,
                expected: "finite and > 0",
            });
        }
        let centers = (0..m).map(|k| TAU * k as f64 / m as f64).collect();
        Ok(Self {
            kind,
            centers,
            width: width_rad,
            periodic,
        })
    }

    /// M inverse-quadratic RBFs with unit width and non-periodic distance.
    pub fn inverse_quadratic(m: usize) -> Result<Self> {
        Self::new(BasisKind::InverseQuadratic, m, 1.0, false)
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn spec(&self) -> BasisSpec {
        BasisSpec {
            kind: self.kind,
            m: self.len(),
            width_rad: self.width,
            periodic_distance: self.periodic,
        }
    }

    /// ψ_k(α) with no domain check; callers on the closed interval [0, 2π] use this.
    #[inline]
    pub fn value(&self, k: usize, alpha: f64) -> f64 {
        let mut r = (alpha - self.centers[k]).abs();
        if self.periodic {
            r = r.min(TAU - r);
        }
        let r = r / self.width;
        match self.kind {
            BasisKind::InverseQuadratic => 1.0 / (1.0 + r * r),
        }
    }

    /// ψ⊤(α)θ without a domain check.
    #[inline]
    pub fn combine(&self, theta: &[f64], alpha: f64) -> f64 {
        theta
            .iter()
            .enumerate()
            .map(|(k, t)| t * self.value(k, alpha))
            .sum()
    }

    fn check_alpha(alpha: f64) -> Result<()> {
        if (0.0..TAU).contains(&alpha) {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "commutation angle [rad]",
                value: alpha,
                expected: "in [0, 2π)",
            })
        }
    }
}

/// [ψ_1(α), …, ψ_M(α)].
pub fn eval_basis(basis: &BasisSet, alpha: f64) -> Result<DVector<f64>> {
    BasisSet::check_alpha(alpha)?;
    Ok(DVector::from_fn(basis.len(), |k, _| basis.value(k, alpha)))
}

/// The M×N matrix Ψ̄ with entry (k, i) = ψ_k(α_i).
pub fn sampled_basis(basis: &BasisSet, grid: &SampleGrid) -> DMatrix<f64> {
    sampled_matrix(basis, &grid.alphas)
}

pub(crate) fn sampled_matrix(basis: &BasisSet, alphas: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(basis.len(), alphas.len(), |k, i| basis.value(k, alphas[i]))
}

/// Which coefficient vector a [`ParamVector`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Input,
    Error,
    Disturbance,
    Reference,
    StandardShear,
}

/// Coefficients θ of a signal ψ⊤θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub theta: DVector<f64>,
    pub role: Role,
    pub iteration: Option<usize>,
}

impl ParamVector {
    pub fn new(theta: DVector<f64>, role: Role) -> Self {
        Self {
            theta,
            role,
            iteration: None,
        }
    }

    pub fn zeros(m: usize, role: Role) -> Self {
        Self::new(DVector::zeros(m), role)
    }

    pub fn from_slice(theta: &[f64], role: Role) -> Self {
        Self::new(DVector::from_column_slice(theta), role)
    }

    pub fn at_iteration(mut self, j: usize) -> Self {
        self.iteration = Some(j);
        self
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn check_len(&self, m: usize) -> Result<()> {
        if self.len() == m {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected: m,
                got: self.len(),
            })
        }
    }
}

/// ψ⊤(α)θ at every angle.
pub fn reconstruct(basis: &BasisSet, theta: &ParamVector, alphas: &[f64]) -> Result<Vec<f64>> {
    theta.check_len(basis.len())?;
    alphas
        .iter()
        .map(|&a| {
            BasisSet::check_alpha(a)?;
            Ok(basis.combine(theta.theta.as_slice(), a))
        })
        .collect()
}

/// Extreme singular values of a sampled basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndependenceCertificate {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub condition_number: f64,
}

impl IndependenceCertificate {
    pub fn ratio(&self) -> f64 {
        self.sigma_min / self.sigma_max
    }
}

/// Certifies that the sampled basis on `grid` has full row rank M.
pub fn independence_certificate(
    basis: &BasisSet,
    grid: &SampleGrid,
    min_sigma_ratio: f64,
) -> Result<IndependenceCertificate> {
    certify(&sampled_basis(basis, grid), min_sigma_ratio)
}

pub(crate) fn certify(psi: &DMatrix<f64>, min_sigma_ratio: f64) -> Result<IndependenceCertificate> {
    let (m, n) = psi.shape();
    if n < m {
        return Err(Error::InsufficientSamples {
            available: n,
            required: m,
        });
    }
    let sv = psi.singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    let cert = IndependenceCertificate {
        sigma_min,
        sigma_max,
        condition_number: sigma_max / sigma_min,
    };
    if !(sigma_max > 0.0 && cert.ratio() >= min_sigma_ratio) {
        return Err(Error::RankDeficient {
            ratio: if sigma_max > 0.0 { cert.ratio() } else { 0.0 },
            threshold: min_sigma_ratio,
        });
    }
    Ok(cert)
}
