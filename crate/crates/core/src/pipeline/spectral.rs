use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::record::SweepRecord;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann.
    Hann,
    Rectangular,
}

impl Window {
    fn weights<T: Real>(&self, n: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); n],
            Window::Hann => {
                let two_pi = T::lit(std::f64::consts::TAU);
                (0..n)
                    .map(|k| {
                        T::half()
                            * (T::one() - (two_pi * T::from_count(k) / T::from_count(n)).cos())
                    })
                    .collect()
            }
        }
    }
}

/// Frequency bands (Hz) in which the excitation is trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBands(pub Vec<(f64, f64)>);

impl Default for AnalysisBands {
    fn default() -> Self {
        Self(vec![(20.0, 27.0), (40.0, 45.0), (55.0, 57.0)])
    }
}

impl AnalysisBands {
    pub fn contains(&self, hz: f64) -> bool {
        self.0.iter().any(|&(lo, hi)| hz >= lo && hz <= hi)
    }

    pub fn describe(&self) -> String {
        self.0
            .iter()
            .map(|(lo, hi)| format!("{lo}–{hi} Hz"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Complex amplitudes of every channel at one frequency bin.
/// A channel `x(t)` maps to `c` with `x(t) ≈ Re(c·e^{iωt})`, time measured from the record start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample<T> {
    /// Hz, the requested frequency.
    pub requested: T,
    /// Hz, centre of the selected bin.
    pub frequency: T,
    /// Hz
    pub bin_width: T,
    pub in_band: bool,
    pub window: Window,
    pub force_amp: Vec<(String, Complex<T>)>,
    pub disp_amp: Vec<(String, Complex<T>)>,
}

impl<T: Real> SpectralSample<T> {
    pub fn force(&self, name: &str) -> Option<Complex<T>> {
        self.force_amp
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| *c)
    }

    pub fn displacement(&self, name: &str) -> Option<Complex<T>> {
        self.disp_amp
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| *c)
    }
}

/// Single-bin DFT of every channel at the bin nearest to `frequency` (Hz).
pub fn fourier_extract<T: Real>(
    record: &SweepRecord<T>,
    frequency: T,
    window: Window,
    bands: &AnalysisBands,
) -> Result<SpectralSample<T>> {
    let n = record.len();
    if n < 2 {
        return Err(Error::Sampling(
            "record holds fewer than two samples".into(),
        ));
    }
    if record
        .force
        .iter()
        .chain(&record.displacement)
        .any(|c| c.values.len() != n)
    {
        return Err(Error::Sampling(
            "channels differ in length; trim the record first".into(),
        ));
    }
    if !(frequency > T::zero()) || frequency >= record.rate * T::half() {
        return Err(Error::Sampling(format!(
            "frequency {frequency} Hz is outside (0, Nyquist = {} Hz)",
            record.rate * T::half()
        )));
    }
    let bin_width = record.rate / T::from_count(n);
    let bin = (frequency / bin_width).round().to_usize().unwrap_or(0);
    if bin == 0 || 2 * bin >= n {
        return Err(Error::Sampling(format!(
            "record of {n} samples cannot resolve {frequency} Hz"
        )));
    }
    let in_band = bands.contains(frequency.to_f64_lossy());
    if !in_band {
        log::warn!(
            "{frequency} Hz lies outside the analysis bands {}",
            bands.describe()
        );
    }
    let w: Vec<T> = window.weights(n);
    let norm = T::two() / w.iter().copied().sum::<T>();
    let two_pi = T::lit(std::f64::consts::TAU);
    // exact phase reduction keeps the twiddles accurate for long records
    let twiddle: Vec<Complex<T>> = (0..n)
        .map(|k| {
            let r = (bin * k) % n;
            let phi = -two_pi * T::from_count(r) / T::from_count(n);
            Complex::new(phi.cos(), phi.sin()) * w[k]
        })
        .collect();
    let extract = |values: &[T]| -> Complex<T> {
        let acc = values
            .iter()
            .zip(&twiddle)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (&x, &t)| {
                acc + t * x
            });
        acc * norm
    };
    let run = |chs: &[super::record::Channel<T>]| -> Vec<(String, Complex<T>)> {
        chs.par_iter()
            .map(|c| (c.name.clone(), extract(&c.values)))
            .collect()
    };
    Ok(SpectralSample {
        requested: frequency,
        frequency: T::from_count(bin) * bin_width,
        bin_width,
        in_band,
        window,
        force_amp: run(&record.force),
        disp_amp: run(&record.displacement),
    })
}

#[cfg(test)]
mod tests {
    use super::super::record::Channel;
    use super::*;
    use std::f64::consts::TAU;

    fn record(rate: f64, n: usize, f: impl Fn(f64) -> f64) -> SweepRecord<f64> {
        let values = (0..n).map(|k| f(k as f64 / rate)).collect();
        SweepRecord {
            rate,
            start: 0.0,
            force: vec![Channel {
                name: "p_x".into(),
                values,
            }],
            displacement: Vec::new(),
        }
    }

    #[test]
    fn pure_tone_rectangular_is_exact() {
        // 21 Hz over exactly 42 periods
        let r = record(1000.0, 2000, |t| 3.5 * (TAU * 21.0 * t).sin());
        let s = fourier_extract(&r, 21.0, Window::Rectangular, &AnalysisBands::default()).unwrap();
        let c = s.force_amp[0].1;
        assert!((c.norm() - 3.5).abs() < 1e-6 * 3.5);
        // sine = cos shifted by −π/2
        assert!((c.im + 3.5).abs() < 1e-9 && c.re.abs() < 1e-9);
        assert_eq!(s.frequency, 21.0);
        assert!((s.bin_width - 0.5).abs() < 1e-12);
        assert!(s.in_band);
    }

    #[test]
    fn zero_signal_has_zero_amplitude() {
        let r = record(500.0, 1000, |_| 0.0);
        let s = fourier_extract(&r, 41.0, Window::Hann, &AnalysisBands::default()).unwrap();
        assert_eq!(s.force_amp[0].1.norm(), 0.0);
    }

    #[test]
    fn out_of_band_is_flagged_not_rejected() {
        let r = record(1000.0, 1000, |t| (TAU * 100.0 * t).sin());
        let s = fourier_extract(&r, 100.0, Window::Hann, &AnalysisBands::default()).unwrap();
        assert!(!s.in_band);
    }

    #[test]
    fn above_nyquist_fails() {
        let r = record(100.0, 1000, |t| t);
        assert!(matches!(
            fourier_extract(&r, 60.0, Window::Hann, &AnalysisBands::default()),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn hann_two_tone_within_leakage_bound() {
        // Non-integer number of periods of the second tone, spaced well beyond the Hann main lobe.
        let rate = 1000.0;
        let n = 4000;
        let (a1, a2) = (2.0, 0.7);
        let r = record(rate, n, |t| {
            a1 * (TAU * 21.0 * t).cos() + a2 * (TAU * 41.13 * t + 0.4).cos()
        });
        let s1 = fourier_extract(&r, 21.0, Window::Hann, &AnalysisBands::default()).unwrap();
        let s2 = fourier_extract(&r, 41.13, Window::Hann, &AnalysisBands::default()).unwrap();
        // Hann sidelobes decay as 1/k³ in bins: leakage from the other tone at ~80 bins
        // is below a·(1/(k(k²−1)))·(1/π) per unit amplitude.
        let k = (41.13f64 - 21.0) / s1.bin_width;
        let cross = 1.0 / (std::f64::consts::PI * k * (k * k - 1.0));
        assert!((s1.force_amp[0].1.norm() - a1).abs() <= a2 * cross + 1e-12);
        // scalloping of a Hann window at offset ≤ half a bin: |sinc-like| loss ≤ 15.2 %
        let offset = ((41.13 - s2.frequency) / s2.bin_width).abs();
        let scallop = (std::f64::consts::PI * offset).sin()
            / (std::f64::consts::PI * offset)
            / (1.0 - offset * offset);
        let expect = a2 * if offset > 0.0 { scallop } else { 1.0 };
        assert!((s2.force_amp[0].1.norm() - expect).abs() <= 1e-3 * a2 + a1 * cross);
    }
}
