//! Composite Gauss–Legendre quadrature over [0, 2π].

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of panels and Gauss nodes per panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    pub panels: usize,
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { panels: 64, nodes: 8 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.panels == 0 || self.nodes == 0 {
            return Err(Error::Config(format!(
                "quadrature needs ≥ 1 panel and node, got {}×{}",
                self.panels, self.nodes
            )));
        }
        Ok(())
    }

    /// Same rule with twice as many nodes in total.
    pub fn doubled(&self) -> Self {
        Self {
            panels: 2 * self.panels,
            nodes: self.nodes,
        }
    }

    pub fn total_nodes(&self) -> usize {
        self.panels * self.nodes
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

/// Nodes and weights of the composite rule on [0, 2π].
#[derive(Debug, Clone)]
pub struct CompositeRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeRule {
    pub fn new(spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let (x, w) = gauss_legendre(spec.nodes);
        let h = TAU / spec.panels as f64;
        let mut nodes = Vec::with_capacity(spec.total_nodes());
        let mut weights = Vec::with_capacity(spec.total_nodes());
        for p in 0..spec.panels {
            let mid = (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + 0.5 * h * xi);
                weights.push(0.5 * h * wi);
            }
        }
        Ok(Self { nodes, weights })
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&a, &w)| w * f(a))
            .sum()
    }
}
