//! Piecewise-constant detuning controls and their smoothing.
//!
//! Controls live on a coarse grid (1 ns by default) inside an active window
//! flanked by buffers pinned at the idle detuning. The coarse samples are
//! held on a fine grid and convolved with a truncated, renormalised Gaussian
//! kernel. Outside `[0, t_g)` the signal is extended with the idle value.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSpec {
    /// Total gate duration including both buffers.
    pub gate_time_ns: f64,
    pub coarse_dt_ns: f64,
    pub fine_dt_ns: f64,
    pub buffer_ns: f64,
    pub filter_sigma_ns: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            gate_time_ns: 56.0,
            coarse_dt_ns: 1.0,
            fine_dt_ns: 0.1,
            buffer_ns: 4.0,
            filter_sigma_ns: 0.4,
        }
    }
}

/// Kernel half-width in units of σ.
pub const KERNEL_HALF_WIDTH_SIGMAS: f64 = 5.0;

fn integer_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() < 1e-9 && n >= 0.0).then_some(n as usize)
}

impl ScheduleSpec {
    pub fn with_gate_time(gate_time_ns: f64) -> Self {
        Self {
            gate_time_ns,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.gate_time_ns,
            self.coarse_dt_ns,
            self.fine_dt_ns,
            self.buffer_ns,
            self.filter_sigma_ns,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSchedule(
                "schedule values must be finite".into(),
            ));
        }
        if self.coarse_dt_ns <= 0.0 || self.fine_dt_ns <= 0.0 {
            return Err(Error::InvalidSchedule("time steps must be positive".into()));
        }
        if self.buffer_ns < 0.0 {
            return Err(Error::InvalidSchedule("buffer must be non-negative".into()));
        }
        if self.filter_sigma_ns <= 0.0 {
            return Err(Error::InvalidSchedule(
                "filter sigma must be positive".into(),
            ));
        }
        if self.gate_time_ns <= 2.0 * self.buffer_ns {
            return Err(Error::InvalidSchedule(format!(
                "gate time {} ns must exceed twice the {} ns buffer",
                self.gate_time_ns, self.buffer_ns
            )));
        }
        if integer_ratio(self.coarse_dt_ns, self.fine_dt_ns).is_none_or(|n| n == 0) {
            return Err(Error::InvalidSchedule(format!(
                "coarse step {} ns is not a multiple of fine step {} ns",
                self.coarse_dt_ns, self.fine_dt_ns
            )));
        }
        if integer_ratio(self.gate_time_ns, self.coarse_dt_ns).is_none() {
            return Err(Error::InvalidSchedule(format!(
                "gate time {} ns is not a multiple of coarse step {} ns",
                self.gate_time_ns, self.coarse_dt_ns
            )));
        }
        if integer_ratio(self.buffer_ns, self.coarse_dt_ns).is_none() {
            return Err(Error::InvalidSchedule(format!(
                "buffer {} ns is not a multiple of coarse step {} ns",
                self.buffer_ns, self.coarse_dt_ns
            )));
        }
        Ok(())
    }

    pub fn fine_per_coarse(&self) -> usize {
        integer_ratio(self.coarse_dt_ns, self.fine_dt_ns).unwrap_or(1)
    }

    pub fn n_coarse(&self) -> usize {
        integer_ratio(self.gate_time_ns, self.coarse_dt_ns).unwrap_or(0)
    }

    pub fn n_buffer_coarse(&self) -> usize {
        integer_ratio(self.buffer_ns, self.coarse_dt_ns).unwrap_or(0)
    }

    /// Number of free coarse samples per control.
    pub fn n_active(&self) -> usize {
        self.n_coarse().saturating_sub(2 * self.n_buffer_coarse())
    }

    pub fn n_fine(&self) -> usize {
        self.n_coarse() * self.fine_per_coarse()
    }

    /// Normalised kernel taps for offsets `-h..=h` fine samples.
    pub fn kernel(&self) -> Vec<f64> {
        let h = (KERNEL_HALF_WIDTH_SIGMAS * self.filter_sigma_ns / self.fine_dt_ns + 1e-9).floor()
            as i64;
        let mut k: Vec<f64> = (-h..=h)
            .map(|j| {
                let t = j as f64 * self.fine_dt_ns;
                (-t * t / (2.0 * self.filter_sigma_ns * self.filter_sigma_ns)).exp()
            })
            .collect();
        let sum: f64 = k.iter().sum();
        k.iter_mut().for_each(|w| *w /= sum);
        k
    }
}

/// Coarse decision variables: detunings δ_i/2π in GHz for each control over
/// the active window, plus the idle value the buffers are pinned to.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarsePulse {
    pub active: Vec<Vec<f64>>,
    pub idle: Vec<f64>,
}

impl CoarsePulse {
    pub fn constant(idle: &[f64], spec: &ScheduleSpec) -> Self {
        Self {
            active: idle.iter().map(|&v| vec![v; spec.n_active()]).collect(),
            idle: idle.to_vec(),
        }
    }

    pub fn num_controls(&self) -> usize {
        self.active.len()
    }

    pub fn check(&self, spec: &ScheduleSpec) -> Result<()> {
        spec.validate()?;
        if self.idle.len() != self.active.len() {
            return Err(Error::GridMismatch(format!(
                "{} idle values for {} controls",
                self.idle.len(),
                self.active.len()
            )));
        }
        let n = spec.n_active();
        if let Some(bad) = self.active.iter().find(|c| c.len() != n) {
            return Err(Error::GridMismatch(format!(
                "control has {} coarse samples, schedule needs {n}",
                bad.len()
            )));
        }
        Ok(())
    }

    /// Every coarse interval over `[0, t_g)` including the buffers.
    pub fn full_samples(&self, spec: &ScheduleSpec) -> Vec<Vec<f64>> {
        let nb = spec.n_buffer_coarse();
        self.active
            .iter()
            .zip(&self.idle)
            .map(|(a, &idle)| {
                let mut v = vec![idle; nb];
                v.extend_from_slice(a);
                v.extend(std::iter::repeat_n(idle, nb));
                v
            })
            .collect()
    }
}

/// Detunings on the fine grid covering `[0, t_g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FinePulse {
    pub samples: Vec<Vec<f64>>,
    pub idle: Vec<f64>,
}

impl FinePulse {
    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_controls(&self) -> usize {
        self.samples.len()
    }

    /// Detunings of every control at fine step `m`.
    pub fn at(&self, m: usize) -> Vec<f64> {
        self.samples.iter().map(|c| c[m]).collect()
    }

    pub fn check(&self, spec: &ScheduleSpec) -> Result<()> {
        let n = spec.n_fine();
        if let Some(bad) = self.samples.iter().find(|c| c.len() != n) {
            return Err(Error::GridMismatch(format!(
                "fine pulse has {} samples, schedule needs {n}",
                bad.len()
            )));
        }
        if self.idle.len() != self.samples.len() {
            return Err(Error::GridMismatch(
                "idle values do not match controls".into(),
            ));
        }
        Ok(())
    }
}

pub fn zero_order_hold(pulse: &CoarsePulse, spec: &ScheduleSpec) -> Result<FinePulse> {
    pulse.check(spec)?;
    let r = spec.fine_per_coarse();
    let samples = pulse
        .full_samples(spec)
        .into_iter()
        .map(|c| {
            c.into_iter()
                .flat_map(|v| std::iter::repeat_n(v, r))
                .collect()
        })
        .collect();
    Ok(FinePulse {
        samples,
        idle: pulse.idle.clone(),
    })
}

pub fn gaussian_filter(fine: &FinePulse, spec: &ScheduleSpec) -> Result<FinePulse> {
    spec.validate()?;
    let kernel = spec.kernel();
    let h = (kernel.len() / 2) as i64;
    let samples = fine
        .samples
        .iter()
        .zip(&fine.idle)
        .map(|(x, &idle)| {
            let n = x.len() as i64;
            (0..n)
                .map(|m| {
                    kernel
                        .iter()
                        .enumerate()
                        .map(|(k, w)| {
                            let j = m + h - k as i64;
                            let v = if (0..n).contains(&j) {
                                x[j as usize]
                            } else {
                                idle
                            };
                            w * v
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(FinePulse {
        samples,
        idle: fine.idle.clone(),
    })
}

/// `gaussian_filter ∘ zero_order_hold` restricted to the active samples of
/// one control: `fine = W·u + idle·(1 − W·1)`.
#[derive(Clone, Debug)]
pub struct FilterMap {
    weights: DMatrix<f64>,
    idle_gain: Vec<f64>,
}

impl FilterMap {
    pub fn new(spec: &ScheduleSpec) -> Result<Self> {
        spec.validate()?;
        let n_fine = spec.n_fine();
        let n_active = spec.n_active();
        let r = spec.fine_per_coarse();
        let offset = spec.n_buffer_coarse() * r;
        let kernel = spec.kernel();
        let h = (kernel.len() / 2) as i64;
        let mut w = DMatrix::<f64>::zeros(n_fine, n_active);
        for col in 0..n_active {
            let start = (offset + col * r) as i64;
            for j in start..start + r as i64 {
                for (k, tap) in kernel.iter().enumerate() {
                    let m = j - h + k as i64;
                    if (0..n_fine as i64).contains(&m) {
                        w[(m as usize, col)] += tap;
                    }
                }
            }
        }
        let idle_gain = w.row_iter().map(|row| 1.0 - row.sum()).collect();
        Ok(Self {
            weights: w,
            idle_gain,
        })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn n_fine(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_active(&self) -> usize {
        self.weights.ncols()
    }

    pub fn apply(&self, active: &[f64], idle: f64) -> Vec<f64> {
        (0..self.n_fine())
            .map(|m| {
                let row = self.weights.row(m);
                row.iter().zip(active).map(|(w, u)| w * u).sum::<f64>() + idle * self.idle_gain[m]
            })
            .collect()
    }

    /// `Wᵀ·v`.
    pub fn adjoint(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n_active())
            .map(|c| {
                self.weights
                    .column(c)
                    .iter()
                    .zip(v)
                    .map(|(w, x)| w * x)
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(t: f64) -> ScheduleSpec {
        ScheduleSpec::with_gate_time(t)
    }

    #[test]
    fn schedule_validation() {
        assert!(spec(56.0).validate().is_ok());
        assert!(matches!(
            spec(8.0).validate(),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(spec(9.0).validate().is_ok());
        assert!(spec(10.5).validate().is_err());
        let mut s = spec(56.0);
        s.fine_dt_ns = 0.3;
        assert!(s.validate().is_err());
        let mut s = spec(56.0);
        s.filter_sigma_ns = 0.0;
        assert!(s.validate().is_err());
        assert_eq!(spec(56.0).n_fine(), 560);
        assert_eq!(spec(56.0).n_active(), 48);
    }

    #[test]
    fn hold_of_constant_and_two_samples() {
        let s = spec(10.0);
        let p = CoarsePulse::constant(&[1.25], &s);
        let f = zero_order_hold(&p, &s).unwrap();
        assert!(f.samples[0].iter().all(|&v| v == 1.25));
        assert_eq!(f.len(), 100);

        let p = CoarsePulse {
            active: vec![vec![0.5, -0.25]],
            idle: vec![1.0],
        };
        let f = zero_order_hold(&p, &s).unwrap();
        let x = &f.samples[0];
        assert!(x[..40].iter().all(|&v| v == 1.0));
        assert!(x[40..50].iter().all(|&v| v == 0.5));
        assert!(x[50..60].iter().all(|&v| v == -0.25));
        assert!(x[60..].iter().all(|&v| v == 1.0));

        let bad = CoarsePulse {
            active: vec![vec![0.0; 3]],
            idle: vec![1.0],
        };
        assert!(matches!(
            zero_order_hold(&bad, &s),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn constant_passes_filter_unchanged() {
        let s = spec(20.0);
        let f = FinePulse {
            samples: vec![vec![0.7; 200]],
            idle: vec![0.7],
        };
        let out = gaussian_filter(&f, &s).unwrap();
        assert!(out.samples[0].iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn impulse_response_peak() {
        let s = spec(20.0);
        let mut x = vec![0.0; 200];
        x[100] = 1.0;
        let out = gaussian_filter(
            &FinePulse {
                samples: vec![x],
                idle: vec![0.0],
            },
            &s,
        )
        .unwrap();
        let y = &out.samples[0];
        let expected = 0.1 / (0.4 * (2.0 * std::f64::consts::PI).sqrt());
        assert!((y[100] - expected).abs() < 1e-6, "{}", y[100]);
        assert!((y[99] - y[101]).abs() < 1e-16);
        assert_eq!(y[79], 0.0);
        assert!(y[80] > 0.0);
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn step_rise_time_matches_gaussian_quantiles() {
        let s = spec(20.0);
        let x: Vec<f64> = (0..200).map(|m| if m < 100 { 0.0 } else { 1.0 }).collect();
        let out = gaussian_filter(
            &FinePulse {
                samples: vec![x],
                idle: vec![0.0],
            },
            &s,
        )
        .unwrap();
        let y = &out.samples[0];
        // The held step edge sits at t = 10 ns; each sample represents the
        // midpoint of its cell, which cancels for a difference of crossings.
        let crossing = |level: f64| {
            let m = (1..y.len()).find(|&m| y[m] >= level).unwrap();
            let frac = (level - y[m - 1]) / (y[m] - y[m - 1]);
            (m - 1) as f64 * 0.1 + frac * 0.1
        };
        let rise = crossing(0.9) - crossing(0.1);
        // 2·Φ⁻¹(0.9)·σ with Φ⁻¹(0.9) = 1.2815515655446004.
        let expected = 2.0 * 1.2815515655446004 * 0.4;
        assert!((rise - expected).abs() < 0.02, "rise {rise} vs {expected}");
    }

    #[test]
    fn filter_map_matches_composition() {
        let s = spec(16.0);
        let map = FilterMap::new(&s).unwrap();
        let active: Vec<f64> = (0..s.n_active()).map(|k| (k as f64 * 0.7).sin()).collect();
        let idle = 1.5;
        let p = CoarsePulse {
            active: vec![active.clone()],
            idle: vec![idle],
        };
        let direct = gaussian_filter(&zero_order_hold(&p, &s).unwrap(), &s).unwrap();
        let via_map = map.apply(&active, idle);
        for (a, b) in direct.samples[0].iter().zip(&via_map) {
            assert!((a - b).abs() < 1e-12);
        }
        let idle_only = map.apply(&vec![idle; s.n_active()], idle);
        assert!(idle_only.iter().all(|v| (v - idle).abs() < 1e-14));
        assert!(map.weights().row_iter().all(|r| r.sum() <= 1.0 + 1e-14));
    }

    #[test]
    fn filter_map_columns_match_probes() {
        let s = spec(12.0);
        let map = FilterMap::new(&s).unwrap();
        let base = vec![0.0; s.n_active()];
        for col in 0..s.n_active() {
            let mut bumped = base.clone();
            bumped[col] = 1.0;
            let run = |u: &[f64]| {
                let p = CoarsePulse {
                    active: vec![u.to_vec()],
                    idle: vec![0.3],
                };
                gaussian_filter(&zero_order_hold(&p, &s).unwrap(), &s)
                    .unwrap()
                    .samples[0]
                    .clone()
            };
            let (hi, lo) = (run(&bumped), run(&base));
            for m in 0..s.n_fine() {
                assert!((hi[m] - lo[m] - map.weights()[(m, col)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn buffers_pin_to_idle() {
        let s = spec(56.0);
        let map = FilterMap::new(&s).unwrap();
        let wild: Vec<f64> = (0..48)
            .map(|k| if k % 2 == 0 { 3.5 } else { -0.5 })
            .collect();
        let y = map.apply(&wild, 1.0);
        assert!((y[0] - 1.0).abs() < 1e-6);
        assert!((y[559] - 1.0).abs() < 1e-6);
    }
}
