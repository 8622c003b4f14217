//! Drive-frequency profiles, the commutation angle they integrate to, and the
//! per-iteration grid of angles at which a constant-rate sampler fires.
//!
//! A step is one full commutation period, α ∈ [0, 2π). The sampler runs at a
//! fixed temporal rate `fs`, so a change in drive frequency changes both the
//! number of samples in the step and where in α they fall.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when deciding whether a sample lands exactly on α = 2π.
const STEP_END_TOL: f64 = 1e-9;

/// One constant-frequency piece of a drive profile. `duration_s = None` marks an
/// open-ended trailing segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub duration_s: Option<f64>,
    pub hz: f64,
}

/// Drive frequency as a piecewise-constant function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRepr", into = "ProfileRepr")]
pub struct DriveProfile {
    segments: Vec<Segment>,
}

/// Wire form: `{"const_hz": 30.0}` or `{"segments": [[0.025, 20.0], [null, 30.0]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum ProfileRepr {
    ConstHz(f64),
    Segments(Vec<(Option<f64>, f64)>),
}

impl TryFrom<ProfileRepr> for DriveProfile {
    type Error = Error;

    fn try_from(repr: ProfileRepr) -> Result<Self> {
        match repr {
            ProfileRepr::ConstHz(hz) => DriveProfile::constant(hz),
            ProfileRepr::Segments(list) => DriveProfile::piecewise(
                list.into_iter()
                    .map(|(duration_s, hz)| Segment { duration_s, hz })
                    .collect(),
            ),
        }
    }
}

impl From<DriveProfile> for ProfileRepr {
    fn from(p: DriveProfile) -> Self {
        match p.segments.as_slice() {
            [Segment { duration_s: None, hz }] => ProfileRepr::ConstHz(*hz),
            segs => ProfileRepr::Segments(segs.iter().map(|s| (s.duration_s, s.hz)).collect()),
        }
    }
}

impl DriveProfile {
    pub fn constant(hz: f64) -> Result<Self> {
        Self::piecewise(vec![Segment { duration_s: None, hz }])
    }

    /// Builds a profile from consecutive segments. Only the last one may be open-ended.
    pub fn piecewise(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Config("drive profile has no segments".into()));
        }
        let last = segments.len() - 1;
        for (k, seg) in segments.iter().enumerate() {
            if !(seg.hz.is_finite() && seg.hz > 0.0) {
                return Err(Error::Domain {
                    what: "drive frequency [Hz]",
                    value: seg.hz,
                    expected: "finite and > 0",
                });
            }
            match seg.duration_s {
                Some(d) if !(d.is_finite() && d > 0.0) => {
                    return Err(Error::Domain {
                        what: "segment duration [s]",
                        value: d,
                        expected: "finite and > 0",
                    })
                }
                None if k != last => {
                    return Err(Error::Config(
                        "only the last drive segment may be open-ended".into(),
                    ))
                }
                _ => {}
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn max_hz(&self) -> f64 {
        self.segments.iter().map(|s| s.hz).fold(0.0, f64::max)
    }

    /// Commutation angle reached at time `t`: 2π ∫₀ᵗ f_α(τ) dτ, summed exactly per segment.
    pub fn alpha_of_time(&self, t: f64) -> Result<f64> {
        Ok(TAU * self.turns_at(t)?)
    }

    /// Same integral in units of steps (one step = 2π rad).
    fn turns_at(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain {
                what: "time [s]",
                value: t,
                expected: "finite and ≥ 0",
            });
        }
        let mut start = 0.0;
        let mut turns = 0.0;
        for seg in &self.segments {
            match seg.duration_s {
                Some(d) if t > start + d => {
                    turns += seg.hz * d;
                    start += d;
                }
                _ => return Ok(turns + seg.hz * (t - start)),
            }
        }
        // A tiny overshoot past a closed profile is rounding, anything else is out of range.
        if t - start <= STEP_END_TOL * start.max(1.0) {
            Ok(turns)
        } else {
            Err(Error::Domain {
                what: "time [s]",
                value: t,
                expected: "within the drive profile",
            })
        }
    }

    /// Duration T of one step, the smallest T with α(T) = 2π.
    pub fn step_duration(&self) -> Result<f64> {
        let mut start = 0.0;
        let mut turns = 0.0;
        for seg in &self.segments {
            let needed = 1.0 - turns;
            match seg.duration_s {
                Some(d) if seg.hz * d < needed => {
                    turns += seg.hz * d;
                    start += d;
                }
                _ => return Ok(start + needed / seg.hz),
            }
        }
        Err(Error::UnreachableStep {
            reached_rad: TAU * turns,
        })
    }

    /// Mean step rate over one step, 1/T. Equals the frequency for constant profiles.
    pub fn effective_hz(&self) -> Result<f64> {
        Ok(1.0 / self.step_duration()?)
    }
}

/// The angles ᾱ_j sampled during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub alphas: Vec<f64>,
    pub step_duration_s: f64,
    pub iteration: usize,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// An equidistant grid `2π i / n`, i = 0..n, used for fit-quality studies.
    pub fn equidistant(n: usize) -> Self {
        Self {
            alphas: (0..n).map(|i| TAU * i as f64 / n as f64).collect(),
            step_duration_s: f64::NAN,
            iteration: 0,
        }
    }

    /// Wraps an externally measured set of angles after checking the grid invariants.
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        for (i, &a) in alphas.iter().enumerate() {
            if !(0.0..TAU).contains(&a) {
                return Err(Error::Domain {
                    what: "sample angle [rad]",
                    value: a,
                    expected: "in [0, 2π)",
                });
            }
            if i > 0 && a <= alphas[i - 1] {
                return Err(Error::Config(format!(
                    "sample angles must be strictly increasing (index {i})"
                )));
            }
        }
        Ok(Self {
            alphas,
            step_duration_s: f64::NAN,
            iteration: 0,
        })
    }
}

/// Samples taken at t = h, 2h, … inside one step, mapped to α.
///
/// A sample landing exactly on α = 2π belongs to the next step and is dropped,
/// which keeps every grid inside the half-open interval [0, 2π).
pub fn build_sample_grid(
    profile: &DriveProfile,
    iteration: usize,
    fs_hz: f64,
    min_samples: usize,
) -> Result<SampleGrid> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::Domain {
            what: "sampling frequency [Hz]",
            value: fs_hz,
            expected: "finite and > 0",
        });
    }
    let step = profile.step_duration()?;
    let n = samples_in_step(step, fs_hz);
    if n < min_samples {
        return Err(Error::InsufficientSamples {
            available: n,
            required: min_samples,
        });
    }
    let alphas = (1..=n)
        .map(|i| profile.alpha_of_time(i as f64 / fs_hz))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleGrid {
        alphas,
        step_duration_s: step,
        iteration,
    })
}

/// Number of sample instants i/fs, i ≥ 1, strictly before the step ends.
pub fn samples_in_step(step_duration_s: f64, fs_hz: f64) -> usize {
    let x = step_duration_s * fs_hz;
    let n = (x - STEP_END_TOL * x.max(1.0)).ceil() - 1.0;
    n.max(0.0) as usize
}
