//! Welch power spectral density estimation and band-power integration.

use rustfft::{num_complex::Complex, FftPlanner};

/// Welch estimator settings: Hann window, 50% overlap by default.
#[derive(Debug, Clone)]
pub struct PsdConfig {
    pub segment_len: usize,
    pub overlap: f64,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            segment_len: 4096,
            overlap: 0.5,
        }
    }
}

/// One-sided power spectral density estimate.
#[derive(Debug, Clone)]
pub struct Psd {
    pub freqs_hz: Vec<f64>,
    pub density: Vec<f64>,
    /// Set when the signal was shorter than one segment and a single
    /// zero-padded periodogram was used instead of Welch averaging.
    pub single_segment_fallback: bool,
}

impl Psd {
    pub fn df(&self) -> f64 {
        if self.freqs_hz.len() > 1 {
            self.freqs_hz[1] - self.freqs_hz[0]
        } else {
            0.0
        }
    }

    /// Density at the bin nearest to `f_hz`.
    pub fn at(&self, f_hz: f64) -> f64 {
        if self.freqs_hz.is_empty() {
            return 0.0;
        }
        let df = self.df().max(f64::MIN_POSITIVE);
        let idx = ((f_hz / df).round() as usize).min(self.density.len() - 1);
        self.density[idx]
    }
}

/// Welch PSD of a uniformly sampled signal: per-segment mean removal, Hann
/// window, mean average over 50%-overlapping segments. Density units are
/// (signal^2)/Hz, one-sided.
pub fn psd(signal: &[f64], dt: f64, cfg: &PsdConfig) -> Psd {
    assert!(dt > 0.0, "dt must be positive");
    let fs = 1.0 / dt;
    if signal.is_empty() {
        return Psd {
            freqs_hz: vec![],
            density: vec![],
            single_segment_fallback: true,
        };
    }

    let (seg_len, fallback) = if signal.len() < cfg.segment_len {
        (signal.len(), true)
    } else {
        (cfg.segment_len, false)
    };
    let hop = ((seg_len as f64) * (1.0 - cfg.overlap)).max(1.0) as usize;

    // Periodic Hann window.
    let window: Vec<f64> = (0..seg_len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / seg_len as f64).cos()))
        .collect();
    let win_energy: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(seg_len);

    let n_half = seg_len / 2 + 1;
    let mut accum = vec![0.0f64; n_half];
    let mut n_segments = 0usize;
    let mut start = 0usize;
    while start + seg_len <= signal.len() {
        let seg = &signal[start..start + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        let mut buf: Vec<Complex<f64>> = seg
            .iter()
            .zip(&window)
            .map(|(x, w)| Complex::new((x - mean) * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (k, acc) in accum.iter_mut().enumerate() {
            let mag2 = buf[k].norm_sqr();
            let mut p = mag2 / (fs * win_energy);
            // One-sided spectrum: double everything except DC and Nyquist.
            if k != 0 && !(seg_len % 2 == 0 && k == seg_len / 2) {
                p *= 2.0;
            }
            *acc += p;
        }
        n_segments += 1;
        start += hop;
    }
    debug_assert!(n_segments > 0);
    for a in accum.iter_mut() {
        *a /= n_segments as f64;
    }

    let freqs_hz = (0..n_half).map(|k| k as f64 * fs / seg_len as f64).collect();
    Psd {
        freqs_hz,
        density: accum,
        single_segment_fallback: fallback,
    }
}

/// Integrated power over the band `center ± halfwidth` (Hz).
pub fn band_power(psd: &Psd, center_hz: f64, halfwidth_hz: f64) -> f64 {
    let df = psd.df();
    if df == 0.0 {
        return 0.0;
    }
    let lo = center_hz - halfwidth_hz;
    let hi = center_hz + halfwidth_hz;
    psd.freqs_hz
        .iter()
        .zip(&psd.density)
        .filter(|(f, _)| **f >= lo && **f <= hi)
        .map(|(_, d)| d * df)
        .sum()
}

/// Total integrated power (Parseval check helper).
pub fn total_power(psd: &Psd) -> f64 {
    psd.density.iter().sum::<f64>() * psd.df()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn sine_peak_lands_on_its_bin() {
        let dt = 1e-3;
        let f0 = 50.0;
        let x: Vec<f64> = (0..20_000)
            .map(|k| (2.0 * std::f64::consts::PI * f0 * k as f64 * dt).sin())
            .collect();
        let p = psd(&x, dt, &PsdConfig::default());
        let (imax, _) = p
            .density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let df = p.df();
        assert!((p.freqs_hz[imax] - f0).abs() <= df, "peak at {}", p.freqs_hz[imax]);
        assert!(!p.single_segment_fallback);
        // Nearly all sine power sits in a +-2 Hz band.
        let bp = band_power(&p, f0, 2.0);
        assert!(bp > 0.99 * 0.5, "band power {bp}");
    }

    #[test]
    fn white_noise_parseval() {
        let mut rng = StdRng::seed_from_u64(99);
        let sigma = 0.7;
        let x: Vec<f64> = (0..200_000)
            .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let p = psd(&x, 1e-3, &PsdConfig::default());
        let var = sigma * sigma;
        let tot = total_power(&p);
        assert!(
            (tot - var).abs() < 0.01 * var,
            "integrated {tot} vs variance {var}"
        );
        let whole = band_power(&p, 250.0, 250.0);
        assert!((whole - tot).abs() < 1e-12);
    }

    #[test]
    fn constant_signal_is_all_zero() {
        let x = vec![3.25; 10_000];
        let p = psd(&x, 1e-3, &PsdConfig::default());
        assert!(p.density.iter().all(|d| *d < 1e-25));
    }

    #[test]
    fn short_signal_falls_back_to_single_periodogram() {
        let x: Vec<f64> = (0..1000).map(|k| (0.3 * k as f64).sin()).collect();
        let p = psd(&x, 1e-3, &PsdConfig::default());
        assert!(p.single_segment_fallback);
        assert_eq!(p.freqs_hz.len(), 501);
    }

    #[test]
    fn empty_band_is_zero() {
        let x: Vec<f64> = (0..10_000).map(|k| (0.3 * k as f64).sin()).collect();
        let p = psd(&x, 1e-3, &PsdConfig::default());
        assert_eq!(band_power(&p, 600.0, 1.0), 0.0);
    }
}
