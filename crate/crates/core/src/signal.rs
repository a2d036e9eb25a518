//! Spectral peak and envelope of stroboscopic records.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    /// Angular frequency of the strongest non-zero bin.
    pub omega: f64,
    pub bin: usize,
    /// Bin spacing `2 pi / (len dt)`.
    pub resolution: f64,
    pub power: f64,
}

/// Periodogram peak of the mean-free record, sampled every `dt`.
pub fn dominant_frequency(series: &[f64], dt: f64) -> Option<SpectralPeak> {
    let n = series.len();
    if n < 4 || !(dt > 0.0) {
        return None;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (bin, power) = buf[1..=n / 2]
        .iter()
        .enumerate()
        .map(|(k, z)| (k + 1, z.norm_sqr()))
        .fold(
            (0, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    let resolution = 2.0 * PI / (n as f64 * dt);
    Some(SpectralPeak {
        omega: bin as f64 * resolution,
        bin,
        resolution,
        power,
    })
}

/// `max |x|` over the `window` samples starting at each index.
pub fn envelope(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    if series.len() < w {
        return Vec::new();
    }
    series
        .windows(w)
        .map(|s| s.iter().fold(0.0, |m: f64, x| m.max(x.abs())))
        .collect()
}

/// First index at which the envelope drops below `threshold`.
pub fn collapse_time(series: &[f64], window: usize, threshold: f64) -> Option<usize> {
    envelope(series, window).iter().position(|&e| e < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone_on_a_bin() {
        let n = 1024;
        let omega = 2.0 * PI * 37.0 / n as f64;
        let s: Vec<f64> = (0..n).map(|k| 0.3 + (omega * k as f64).cos()).collect();
        let p = dominant_frequency(&s, 1.0).unwrap();
        assert_eq!(p.bin, 37);
        assert!((p.omega - omega).abs() < 1e-12);
    }

    #[test]
    fn tone_between_bins_lands_on_a_neighbour() {
        let n = 4096;
        let s: Vec<f64> = (0..n).map(|k| (1.0 * k as f64).cos()).collect();
        let p = dominant_frequency(&s, 1.0).unwrap();
        assert!((p.omega - 1.0).abs() <= p.resolution);
    }

    #[test]
    fn time_step_scales_frequency() {
        let s: Vec<f64> = (0..256)
            .map(|k| (2.0 * PI * 8.0 * k as f64 / 256.0).sin())
            .collect();
        let a = dominant_frequency(&s, 1.0).unwrap();
        let b = dominant_frequency(&s, 0.5).unwrap();
        assert!((b.omega - 2.0 * a.omega).abs() < 1e-12);
        assert!(dominant_frequency(&s[..2], 1.0).is_none());
    }

    #[test]
    fn envelope_of_decaying_oscillation() {
        let s: Vec<f64> = (0..400)
            .map(|k| (-(k as f64) / 100.0).exp() * (k as f64).cos())
            .collect();
        let t = collapse_time(&s, 7, (-1.0f64).exp()).unwrap();
        assert!((t as i64 - 100).abs() <= 8, "{t}");
        assert_eq!(envelope(&[1.0, -3.0, 2.0], 2), vec![3.0, 3.0]);
        assert!(envelope(&[1.0], 3).is_empty());
    }
}
