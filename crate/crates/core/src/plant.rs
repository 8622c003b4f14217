//! Piezo-stepper plant: a static gain from the combined shear input to mover
//! position, plus a lumped disturbance that repeats in α.

use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::commutation::SampleGrid;
use crate::error::{Error, Result};
use crate::waveform::{desired_position, Waveform};

/// One term a·sin(nα + φ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub order: u32,
    pub amplitude_m: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

/// Disturbance description as it appears in the experiment file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSpec {
    pub harmonics: Vec<Harmonic>,
    /// Use d(α) = ψ⊤(α)θ^d, which the basis represents exactly.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub basis_exact: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_d: Option<Vec<f64>>,
    /// Redraws the harmonic phases uniformly from this seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DisturbanceSpec {
    /// Three low harmonics with a peak near 1e-7 m.
    pub fn nominal() -> Self {
        Self {
            harmonics: vec![
                Harmonic {
                    order: 1,
                    amplitude_m: 4e-8,
                    phase_rad: 0.3,
                },
                Harmonic {
                    order: 2,
                    amplitude_m: 5e-8,
                    phase_rad: 1.1,
                },
                Harmonic {
                    order: 3,
                    amplitude_m: 2.5e-8,
                    phase_rad: -0.7,
                },
            ],
            ..Self::default()
        }
    }

    pub fn basis_exact(theta_d: Vec<f64>) -> Self {
        Self {
            basis_exact: true,
            theta_d: Some(theta_d),
            ..Self::default()
        }
    }

    /// Random θ^d scaled so that max |ψ⊤θ^d| on [0, 2π) equals `peak_m`.
    pub fn random_basis_exact(basis: &BasisSet, peak_m: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let theta: Vec<f64> = (0..basis.len()).map(|_| normal.sample(&mut rng)).collect();
        let peak = (0..4096)
            .map(|i| basis.combine(&theta, TAU * i as f64 / 4096.0).abs())
            .fold(0.0, f64::max);
        Self::basis_exact(theta.iter().map(|t| t * peak_m / peak).collect())
    }
}

/// The lumped disturbance d_α(α) [m].
#[derive(Debug, Clone, PartialEq)]
pub enum Disturbance {
    Harmonics(Vec<Harmonic>),
    BasisExact { basis: BasisSet, theta: Vec<f64> },
}

impl Disturbance {
    pub fn eval(&self, alpha: f64) -> f64 {
        match self {
            Disturbance::Harmonics(hs) => hs
                .iter()
                .map(|h| h.amplitude_m * (h.order as f64 * alpha + h.phase_rad).sin())
                .sum(),
            Disturbance::BasisExact { basis, theta } => basis.combine(theta, alpha),
        }
    }

    pub fn zero() -> Self {
        Disturbance::Harmonics(Vec::new())
    }
}

pub fn make_disturbance(spec: &DisturbanceSpec, basis: &BasisSet) -> Result<Disturbance> {
    if spec.basis_exact {
        let theta = spec
            .theta_d
            .clone()
            .ok_or_else(|| Error::Config("basis-exact disturbance requires theta_d".into()))?;
        if theta.len() != basis.len() {
            return Err(Error::Dimension {
                expected: basis.len(),
                got: theta.len(),
            });
        }
        return Ok(Disturbance::BasisExact {
            basis: basis.clone(),
            theta,
        });
    }
    let mut harmonics = spec.harmonics.clone();
    for h in &harmonics {
        if h.order == 0 || !h.amplitude_m.is_finite() || !h.phase_rad.is_finite() {
            return Err(Error::Config(format!("invalid harmonic {h:?}")));
        }
    }
    if let Some(seed) = spec.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for h in &mut harmonics {
            h.phase_rad = rng.random_range(0.0..TAU);
        }
    }
    Ok(Disturbance::Harmonics(harmonics))
}

/// Scales the disturbance by (1 + ε Δf/f) in an iteration whose drive
/// frequency differs from the previous one. `iterations` restricts this to
/// the listed iteration indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatePerturbation {
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub h0_m_per_v: f64,
    pub disturbance: Disturbance,
    pub noise_sigma_m: f64,
    pub rate_perturbation: Option<RatePerturbation>,
}

impl PlantModel {
    pub fn new(h0_m_per_v: f64, disturbance: Disturbance) -> Result<Self> {
        let plant = Self {
            h0_m_per_v,
            disturbance,
            noise_sigma_m: 0.0,
            rate_perturbation: None,
        };
        plant.validate()?;
        Ok(plant)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h0_m_per_v.is_finite() && self.h0_m_per_v > 0.0) {
            return Err(Error::Domain {
                what: "plant gain h0 [m/V]",
                value: self.h0_m_per_v,
                expected: "finite and > 0",
            });
        }
        if !(self.noise_sigma_m.is_finite() && self.noise_sigma_m >= 0.0) {
            return Err(Error::Domain {
                what: "noise standard deviation [m]",
                value: self.noise_sigma_m,
                expected: "finite and ≥ 0",
            });
        }
        Ok(())
    }

    pub fn disturbance_scale(&self, cond: &StepConditions) -> f64 {
        let (Some(rp), Some(prev)) = (&self.rate_perturbation, cond.previous_drive_hz) else {
            return 1.0;
        };
        let listed = rp
            .iterations
            .as_ref()
            .is_none_or(|its| its.contains(&cond.iteration));
        if cond.drive_hz != prev && listed {
            1.0 + rp.epsilon * (cond.drive_hz - prev) / cond.drive_hz
        } else {
            1.0
        }
    }
}

/// Which iteration is being run and at what drive frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConditions {
    pub iteration: usize,
    pub drive_hz: f64,
    pub previous_drive_hz: Option<f64>,
}

impl StepConditions {
    pub fn at(iteration: usize, drive_hz: f64) -> Self {
        Self {
            iteration,
            drive_hz,
            previous_drive_hz: None,
        }
    }
}

/// Sampled position and error of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMeasurement {
    pub alphas: Vec<f64>,
    pub y_m: Vec<f64>,
    pub e_m: Vec<f64>,
    pub disturbance_scale: f64,
}

/// Runs one step: y = h0 (u_s + u_j) + d + noise and e = y_d − y at every grid angle,
/// with y_d = h0 u_s. Noise is drawn from `seed`.
pub fn simulate_step(
    plant: &PlantModel,
    u_s: &Waveform,
    u_j: impl Fn(f64) -> f64,
    grid: &SampleGrid,
    cond: &StepConditions,
    seed: u64,
) -> Result<StepMeasurement> {
    plant.validate()?;
    let y_d = desired_position(u_s, plant.h0_m_per_v)?;
    let scale = plant.disturbance_scale(cond);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, plant.noise_sigma_m).map_err(|e| Error::Config(e.to_string()))?;

    let mut y_m = Vec::with_capacity(grid.len());
    let mut e_m = Vec::with_capacity(grid.len());
    for &a in &grid.alphas {
        let mut y = plant.h0_m_per_v * (u_s.eval(a) + u_j(a)) + scale * plant.disturbance.eval(a);
        if plant.noise_sigma_m > 0.0 {
            y += noise.sample(&mut rng);
        }
        y_m.push(y);
        e_m.push(y_d.eval(a) - y);
    }
    Ok(StepMeasurement {
        alphas: grid.alphas.clone(),
        y_m,
        e_m,
        disturbance_scale: scale,
    })
}

/// Writes `alpha_rad,y_m,e_m`, one row per sample.
pub fn write_step_csv<W: Write>(mut out: W, m: &StepMeasurement) -> std::io::Result<()> {
    writeln!(out, "alpha_rad,y_m,e_m")?;
    for ((a, y), e) in m.alphas.iter().zip(&m.y_m).zip(&m.e_m) {
        writeln!(out, "{a:e},{y:e},{e:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisSet;
    use crate::commutation::{build_sample_grid, DriveProfile};
    use crate::waveform::{combined_shear_input, standard_waveforms, WaveformConfig};

    fn setup() -> (Waveform, f64, BasisSet) {
        let cfg = WaveformConfig::default();
        let s = standard_waveforms(&cfg).unwrap();
        let us = combined_shear_input(&s.shears).unwrap();
        (
            us,
            3e-7 / cfg.shear_slope(),
            BasisSet::inverse_quadratic(30).unwrap(),
        )
    }

    fn grid(hz: f64) -> SampleGrid {
        build_sample_grid(&DriveProfile::constant(hz).unwrap(), 0, 1500.0, 30).unwrap()
    }

    #[test]
    fn perfect_plant_tracks_reference() {
        let (us, h0, _) = setup();
        let plant = PlantModel::new(h0, Disturbance::zero()).unwrap();
        let m = simulate_step(&plant, &us, |_| 0.0, &grid(30.0), &StepConditions::at(0, 30.0), 1).unwrap();
        assert!(m.e_m.iter().all(|e| e.abs() < 1e-20));
        for (a, y) in m.alphas.iter().zip(&m.y_m) {
            assert!((y - 3e-7 * a).abs() < 1e-18);
        }
    }

    #[test]
    fn exact_cancellation_of_basis_disturbance() {
        let (us, h0, basis) = setup();
        let spec = DisturbanceSpec::random_basis_exact(&basis, 1e-7, 5);
        let d = make_disturbance(&spec, &basis).unwrap();
        let theta = spec.theta_d.clone().unwrap();
        let plant = PlantModel::new(h0, d).unwrap();
        let b2 = basis.clone();
        let m = simulate_step(
            &plant,
            &us,
            move |a| -b2.combine(&theta, a) / h0,
            &grid(25.0),
            &StepConditions::at(0, 25.0),
            0,
        )
        .unwrap();
        assert!(m.e_m.iter().all(|e| e.abs() < 1e-12 * 1e-7), "{:?}", m.e_m);
    }

    #[test]
    fn nominal_disturbance_scale() {
        let (us, h0, basis) = setup();
        let d = make_disturbance(&DisturbanceSpec::nominal(), &basis).unwrap();
        let plant = PlantModel::new(h0, d).unwrap();
        let m = simulate_step(&plant, &us, |_| 0.0, &grid(30.0), &StepConditions::at(0, 30.0), 0).unwrap();
        let peak = m.e_m.iter().fold(0.0f64, |p, e| p.max(e.abs()));
        assert!(peak > 3e-8 && peak < 3e-7, "peak {peak}");
    }

    #[test]
    fn disturbance_generators() {
        let basis = BasisSet::inverse_quadratic(8).unwrap();
        let zero = make_disturbance(&DisturbanceSpec::default(), &basis).unwrap();
        assert_eq!(zero.eval(1.234), 0.0);

        let one = DisturbanceSpec {
            harmonics: vec![Harmonic {
                order: 2,
                amplitude_m: 1e-7,
                phase_rad: 0.0,
            }],
            ..Default::default()
        };
        let d = make_disturbance(&one, &basis).unwrap();
        assert!((d.eval(std::f64::consts::FRAC_PI_4) - 1e-7).abs() < 1e-22);
        assert!((d.eval(0.0) - d.eval(TAU - 1e-15)).abs() < 1e-12);

        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        let d = make_disturbance(&DisturbanceSpec::basis_exact(e1), &basis).unwrap();
        for a in [0.0, 0.5, 2.0] {
            assert_eq!(d.eval(a), basis.value(0, a));
        }
    }

    #[test]
    fn basis_exact_requires_theta() {
        let basis = BasisSet::inverse_quadratic(8).unwrap();
        let spec = DisturbanceSpec {
            basis_exact: true,
            ..Default::default()
        };
        assert!(matches!(make_disturbance(&spec, &basis), Err(Error::Config(_))));
    }

    #[test]
    fn seeded_phases_are_reproducible() {
        let basis = BasisSet::inverse_quadratic(8).unwrap();
        let spec = DisturbanceSpec {
            seed: Some(42),
            ..DisturbanceSpec::nominal()
        };
        let a = make_disturbance(&spec, &basis).unwrap();
        let b = make_disturbance(&spec, &basis).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, make_disturbance(&DisturbanceSpec::nominal(), &basis).unwrap());
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let (us, h0, _) = setup();
        let mut plant = PlantModel::new(h0, Disturbance::zero()).unwrap();
        plant.noise_sigma_m = 1e-9;
        let g = grid(30.0);
        let c = StepConditions::at(0, 30.0);
        let a = simulate_step(&plant, &us, |_| 0.0, &g, &c, 9).unwrap();
        let b = simulate_step(&plant, &us, |_| 0.0, &g, &c, 9).unwrap();
        let other = simulate_step(&plant, &us, |_| 0.0, &g, &c, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.e_m, other.e_m);
    }

    #[test]
    fn linear_in_input() {
        let (us, h0, basis) = setup();
        let d = make_disturbance(&DisturbanceSpec::nominal(), &basis).unwrap();
        let plant = PlantModel::new(h0, d.clone()).unwrap();
        let g = grid(35.0);
        let c = StepConditions::at(0, 35.0);
        let one = simulate_step(&plant, &us, |a| a.cos(), &g, &c, 0).unwrap();
        let us2 = Waveform {
            table: us.table.scaled(2.0),
            ..us.clone()
        };
        let two = simulate_step(&plant, &us2, |a| 2.0 * a.cos(), &g, &c, 0).unwrap();
        for (i, a) in g.alphas.iter().enumerate() {
            let r1 = one.y_m[i] - d.eval(*a);
            let r2 = two.y_m[i] - d.eval(*a);
            assert!((r2 - 2.0 * r1).abs() <= 1e-15 * r1.abs().max(1e-12));
        }
    }

    #[test]
    fn rate_perturbation_applies_on_frequency_change() {
        let (_, h0, _) = setup();
        let mut plant = PlantModel::new(h0, Disturbance::zero()).unwrap();
        plant.rate_perturbation = Some(RatePerturbation {
            epsilon: 0.1,
            iterations: Some(vec![12]),
        });
        let c = |j, f, p| StepConditions {
            iteration: j,
            drive_hz: f,
            previous_drive_hz: Some(p),
        };
        assert_eq!(plant.disturbance_scale(&c(12, 28.0, 28.0)), 1.0);
        assert!((plant.disturbance_scale(&c(12, 28.0, 25.0)) - (1.0 + 0.1 * 3.0 / 28.0)).abs() < 1e-15);
        assert_eq!(plant.disturbance_scale(&c(8, 25.0, 35.0)), 1.0);
        assert_eq!(plant.disturbance_scale(&StepConditions::at(0, 30.0)), 1.0);
    }

    #[test]
    fn invalid_plant() {
        assert!(PlantModel::new(0.0, Disturbance::zero()).is_err());
        let mut p = PlantModel::new(1e-8, Disturbance::zero()).unwrap();
        p.noise_sigma_m = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn step_csv_columns() {
        let m = StepMeasurement {
            alphas: vec![0.1, 0.2],
            y_m: vec![1e-8, 2e-8],
            e_m: vec![-1e-9, 0.0],
            disturbance_scale: 1.0,
        };
        let mut buf = Vec::new();
        write_step_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "alpha_rad,y_m,e_m");
        assert_eq!(text.lines().count(), 3);
    }
}
