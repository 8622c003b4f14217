//! Clamp and shear drive waveforms over one commutation period.
//!
//! Each waveform is a dense lookup table on the closed uniform grid
//! α_k = 2πk/n, k = 0..=n, read back with linear interpolation. Periodic
//! channels store `values[n] == values[0]`.
//!
//! The step is divided into two exclusive windows and the region between them.
//! Inside group 1's window only shear group 1 holds the mover (group 2 is
//! retracted and resets), inside group 2's window the roles swap, and
//! everywhere else both groups may be in contact so their shear derivatives
//! must agree.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 3600;

/// Relative slack, per unit of the shear limit, on equal shear derivatives.
const DERIVATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Clamp1,
    Clamp2,
    Shear1,
    Shear2,
    /// The single equivalent shear input u_s.
    Combined,
}

impl Channel {
    pub fn name(self) -> &'static str {
        match self {
            Channel::Clamp1 => "clamp1",
            Channel::Clamp2 => "clamp2",
            Channel::Shear1 => "shear1",
            Channel::Shear2 => "shear2",
            Channel::Combined => "combined",
        }
    }
}

/// Uniform table over [0, 2π] with n intervals and n + 1 stored values.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    values: Vec<f64>,
}

impl LookupTable {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("lookup table needs at least two points".into()));
        }
        Ok(Self { values })
    }

    pub fn from_fn(resolution: usize, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: (0..=resolution).map(|k| f(node(k, resolution))).collect(),
        }
    }

    pub fn resolution(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn alpha(&self, k: usize) -> f64 {
        node(k, self.resolution())
    }

    /// Linear interpolation; α is clamped to [0, 2π].
    pub fn eval(&self, alpha: f64) -> f64 {
        let n = self.resolution();
        let x = (alpha / TAU * n as f64).clamp(0.0, n as f64);
        let k = (x.floor() as usize).min(n - 1);
        let frac = x - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.windows(2).map(|w| w[1] - w[0])
    }
}

fn node(k: usize, n: usize) -> f64 {
    TAU * k as f64 / n as f64
}

/// A drive voltage table for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub channel: Channel,
    pub table: LookupTable,
    pub limit_v: f64,
}

impl Waveform {
    pub fn eval(&self, alpha: f64) -> f64 {
        self.table.eval(alpha)
    }

    pub fn values(&self) -> &[f64] {
        self.table.values()
    }

    pub fn resolution(&self) -> usize {
        self.table.resolution()
    }

    /// Maximal runs of grid nodes where |value| exceeds the channel limit.
    pub fn saturation_intervals(&self) -> Vec<(f64, f64)> {
        let n = self.resolution();
        let slack = 1e-12 * self.limit_v;
        let mut out = Vec::new();
        let mut start: Option<usize> = None;
        for (k, v) in self.values().iter().enumerate() {
            let bad = v.abs() > self.limit_v + slack;
            match (bad, start) {
                (true, None) => start = Some(k),
                (false, Some(s)) => {
                    out.push((node(s, n), node(k - 1, n)));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push((node(s, n), TAU));
        }
        out
    }

    fn check_limits(&self) -> Result<()> {
        let intervals = self.saturation_intervals();
        if intervals.is_empty() {
            Ok(())
        } else {
            Err(Error::Saturation {
                channel: self.channel.name(),
                limit_v: self.limit_v,
                intervals,
            })
        }
    }
}

/// Shapes and limits of the standard waveform set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveformConfig {
    pub resolution: usize,
    pub clamp_max_v: f64,
    /// Half the peak-to-peak swing of the standard shear ramp.
    pub shear_amplitude_v: f64,
    pub shear_limit_v: f64,
    pub clamp_ramp_rad: f64,
    /// Interval where only shear group 1 holds the mover.
    pub group1_window_rad: [f64; 2],
    /// Interval where only shear group 2 holds the mover.
    pub group2_window_rad: [f64; 2],
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            clamp_max_v: 100.0,
            shear_amplitude_v: 60.0,
            shear_limit_v: 100.0,
            clamp_ramp_rad: PI / 6.0,
            group1_window_rad: [PI / 3.0, 2.0 * PI / 3.0],
            group2_window_rad: [4.0 * PI / 3.0, 5.0 * PI / 3.0],
        }
    }
}

impl WaveformConfig {
    /// Slope of both standard shear ramps while engaged [V/rad].
    pub fn shear_slope(&self) -> f64 {
        let w = self.group1_window_rad[1] - self.group1_window_rad[0];
        2.0 * self.shear_amplitude_v / (TAU - w)
    }

    fn windows(&self) -> Result<Windows> {
        let n = self.resolution;
        if n < 6 {
            return Err(Error::Config(format!("waveform resolution {n} is too small")));
        }
        let to_node = |a: f64| -> Result<usize> {
            let x = a / TAU * n as f64;
            let k = x.round();
            if !(0.0..=n as f64).contains(&k) || (x - k).abs() > 1e-9 * x.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "window bound {a} rad does not fall on the {n}-point waveform grid"
                )));
            }
            Ok(k as usize)
        };
        let g1 = (
            to_node(self.group1_window_rad[0])?,
            to_node(self.group1_window_rad[1])?,
        );
        let g2 = (
            to_node(self.group2_window_rad[0])?,
            to_node(self.group2_window_rad[1])?,
        );
        if !(g1.0 < g1.1 && g1.1 < g2.0 && g2.0 < g2.1) {
            return Err(Error::Config(
                "exclusive windows must be ordered and disjoint inside [0, 2π]".into(),
            ));
        }
        if g1.1 - g1.0 != g2.1 - g2.0 {
            return Err(Error::Config(
                "both exclusive windows must have the same width so standard shear slopes agree".into(),
            ));
        }
        Ok(Windows { n, g1, g2 })
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("clamp_max_v", self.clamp_max_v),
            ("shear_amplitude_v", self.shear_amplitude_v),
            ("shear_limit_v", self.shear_limit_v),
            ("clamp_ramp_rad", self.clamp_ramp_rad),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{what} must be positive, got {v}")));
            }
        }
        if self.shear_amplitude_v > self.shear_limit_v {
            return Err(Error::Config("shear amplitude exceeds the shear limit".into()));
        }
        self.windows().map(|_| ())
    }
}

/// Exclusive windows as node-index ranges; interval k spans nodes k..k+1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Windows {
    n: usize,
    g1: (usize, usize),
    g2: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Region {
    Group1Only,
    Group2Only,
    Shared,
}

impl Windows {
    fn region(&self, interval: usize) -> Region {
        if (self.g1.0..self.g1.1).contains(&interval) {
            Region::Group1Only
        } else if (self.g2.0..self.g2.1).contains(&interval) {
            Region::Group2Only
        } else {
            Region::Shared
        }
    }
}

/// The two shear-group waveforms together with the window layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ShearSplit {
    pub shear1: Waveform,
    pub shear2: Waveform,
    windows: Windows,
}

impl ShearSplit {
    /// Windows in radians, group 1 then group 2.
    pub fn windows_rad(&self) -> [(f64, f64); 2] {
        let n = self.windows.n;
        [
            (node(self.windows.g1.0, n), node(self.windows.g1.1, n)),
            (node(self.windows.g2.0, n), node(self.windows.g2.1, n)),
        ]
    }

    pub fn resolution(&self) -> usize {
        self.windows.n
    }

    /// Finite-difference check that both shears move together outside the windows.
    pub fn check_equal_derivatives(&self) -> Result<()> {
        let n = self.windows.n;
        let tol = DERIVATIVE_TOL * self.shear1.limit_v.max(self.shear2.limit_v) * TAU / n as f64;
        for (k, (d1, d2)) in self
            .shear1
            .table
            .increments()
            .zip(self.shear2.table.increments())
            .enumerate()
        {
            if self.windows.region(k) == Region::Shared && (d1 - d2).abs() > tol {
                return Err(Error::InconsistentDerivative {
                    alpha_rad: node(k, n),
                    mismatch: d1 - d2,
                });
            }
        }
        Ok(())
    }
}

/// The four standard actuation waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardWaveforms {
    pub clamp1: Waveform,
    pub clamp2: Waveform,
    pub shears: ShearSplit,
}

/// Trapezoidal clamps that retract over the other group's exclusive window and
/// piecewise-linear shears that ramp with one common slope while engaged and
/// reset linearly while their clamp is retracted.
pub fn standard_waveforms(cfg: &WaveformConfig) -> Result<StandardWaveforms> {
    cfg.validate()?;
    let windows = cfg.windows()?;
    let n = cfg.resolution;
    let [w1, w2] = [cfg.group1_window_rad, cfg.group2_window_rad];

    // group 1 retracts while group 2 holds alone, and vice versa
    let clamp = |channel, retract: [f64; 2]| Waveform {
        channel,
        table: periodic_table(n, |a| {
            clamp_profile(a, retract, cfg.clamp_ramp_rad, cfg.clamp_max_v)
        }),
        limit_v: cfg.clamp_max_v,
    };
    let shear = |channel, reset: [f64; 2]| Waveform {
        channel,
        table: periodic_table(n, |a| shear_profile(a, reset, cfg.shear_amplitude_v)),
        limit_v: cfg.shear_limit_v,
    };

    Ok(StandardWaveforms {
        clamp1: clamp(Channel::Clamp1, w2),
        clamp2: clamp(Channel::Clamp2, w1),
        shears: ShearSplit {
            shear1: shear(Channel::Shear1, w2),
            shear2: shear(Channel::Shear2, w1),
            windows,
        },
    })
}

fn periodic_table(n: usize, f: impl Fn(f64) -> f64) -> LookupTable {
    let mut t = LookupTable::from_fn(n, f);
    t.values[n] = t.values[0];
    t
}

fn clamp_profile(alpha: f64, retract: [f64; 2], ramp: f64, vmax: f64) -> f64 {
    let width = retract[1] - retract[0];
    if (alpha - retract[0]).rem_euclid(TAU) <= width {
        return 0.0;
    }
    let before = (retract[0] - alpha).rem_euclid(TAU);
    let after = (alpha - retract[1]).rem_euclid(TAU);
    if before < ramp {
        vmax * before / ramp
    } else if after < ramp {
        vmax * after / ramp
    } else {
        vmax
    }
}

fn shear_profile(alpha: f64, reset: [f64; 2], amplitude: f64) -> f64 {
    let width = reset[1] - reset[0];
    let into_reset = (alpha - reset[0]).rem_euclid(TAU);
    if into_reset <= width {
        amplitude - 2.0 * amplitude * into_reset / width
    } else {
        let slope = 2.0 * amplitude / (TAU - width);
        -amplitude + slope * (alpha - reset[1]).rem_euclid(TAU)
    }
}

/// The single equivalent shear input u_s.
///
/// The derivative follows shear 1 in group 1's window, shear 2 in group 2's
/// window and their common value elsewhere. The increments are accumulated on
/// the waveform grid starting from the mean of both shears at α = 0, which is
/// zero for the standard set.
pub fn combined_shear_input(split: &ShearSplit) -> Result<Waveform> {
    split.check_equal_derivatives()?;
    let n = split.windows.n;
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.5 * (split.shear1.values()[0] + split.shear2.values()[0]);
    values.push(acc);
    for (k, (d1, d2)) in split
        .shear1
        .table
        .increments()
        .zip(split.shear2.table.increments())
        .enumerate()
    {
        acc += match split.windows.region(k) {
            Region::Group1Only | Region::Shared => d1,
            Region::Group2Only => d2,
        };
        values.push(acc);
    }
    Ok(Waveform {
        channel: Channel::Combined,
        table: LookupTable { values },
        limit_v: f64::INFINITY,
    })
}

/// y_d(α) = h0 · u_s(α), in meters.
pub fn desired_position(u_s: &Waveform, h0_m_per_v: f64) -> Result<LookupTable> {
    if !(h0_m_per_v.is_finite() && h0_m_per_v > 0.0) {
        return Err(Error::Domain {
            what: "piezo gain h0 [m/V]",
            value: h0_m_per_v,
            expected: "finite and > 0",
        });
    }
    Ok(u_s.table.scaled(h0_m_per_v))
}

/// Splits a compensating input over the two shear groups and adds it to `base`.
///
/// `u` holds the input at every waveform grid node including α = 2π. Each
/// group follows every increment of `u` while it may be engaged. While it is
/// retracted, its reset absorbs the offset accumulated over the rest of the
/// period so the enhanced waveform stays periodic.
pub fn split_compensating_input(u: &[f64], base: &ShearSplit) -> Result<ShearSplit> {
    let n = base.windows.n;
    if u.len() != n + 1 {
        return Err(Error::Dimension {
            expected: n + 1,
            got: u.len(),
        });
    }
    base.check_equal_derivatives()?;

    let du: Vec<f64> = u.windows(2).map(|w| w[1] - w[0]).collect();
    // shear 1 resets in group 2's window, shear 2 in group 1's
    let ua = group_offsets(u[0], &du, base.windows, Region::Group2Only);
    let ub = group_offsets(u[0], &du, base.windows, Region::Group1Only);

    let enhance = |w: &Waveform, add: Vec<f64>| Waveform {
        channel: w.channel,
        table: LookupTable {
            values: w.values().iter().zip(add).map(|(b, a)| b + a).collect(),
        },
        limit_v: w.limit_v,
    };
    let out = ShearSplit {
        shear1: enhance(&base.shear1, ua),
        shear2: enhance(&base.shear2, ub),
        windows: base.windows,
    };
    out.shear1.check_limits()?;
    out.shear2.check_limits()?;
    Ok(out)
}

/// Same as [`split_compensating_input`] with `u` given as a function on [0, 2π].
pub fn split_compensating_fn(u: impl Fn(f64) -> f64, base: &ShearSplit) -> Result<ShearSplit> {
    let n = base.windows.n;
    let samples: Vec<f64> = (0..=n).map(|k| u(node(k, n))).collect();
    split_compensating_input(&samples, base)
}

fn group_offsets(start: f64, du: &[f64], windows: Windows, reset: Region) -> Vec<f64> {
    let reset_len = du
        .iter()
        .enumerate()
        .filter(|(k, _)| windows.region(*k) == reset)
        .count();
    let carried: f64 = du
        .iter()
        .enumerate()
        .filter(|(k, _)| windows.region(*k) != reset)
        .map(|(_, d)| d)
        .sum();
    let reset_step = -carried / reset_len as f64;

    let mut out = Vec::with_capacity(du.len() + 1);
    let mut acc = start;
    out.push(acc);
    for (k, d) in du.iter().enumerate() {
        acc += if windows.region(k) == reset {
            reset_step
        } else {
            *d
        };
        out.push(acc);
    }
    let last = out.len() - 1;
    out[last] = start;
    out
}

/// Writes `alpha_rad,clamp1_V,clamp2_V,shear1_V,shear2_V`, one row per grid node in [0, 2π).
pub fn write_waveforms_csv<W: Write>(
    mut out: W,
    clamp1: &Waveform,
    clamp2: &Waveform,
    shears: &ShearSplit,
) -> std::io::Result<()> {
    writeln!(out, "alpha_rad,clamp1_V,clamp2_V,shear1_V,shear2_V")?;
    let n = shears.resolution();
    for k in 0..n {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e}",
            node(k, n),
            clamp1.values()[k],
            clamp2.values()[k],
            shears.shear1.values()[k],
            shears.shear2.values()[k]
        )?;
    }
    Ok(())
}
