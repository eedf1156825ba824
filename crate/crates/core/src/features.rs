//! Differentiable MFCC front-end.
//!
//! Forward: frame → Hann window → power spectrum → mel filterbank →
//! `ln(x + log_floor)` → orthonormal DCT-II. The backward pass walks the same
//! chain in reverse using intermediates cached on the [`FeatureMatrix`].

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, AudioClip, DspError, RealFft, Spectrum, SAMPLE_RATE};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("bad feature config: {0}")]
    BadConfig(String),
    #[error("feature matrix carries no backward cache")]
    MissingCache,
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_mels: usize,
    pub n_ceps: usize,
    pub window_len: usize,
    pub hop: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
    pub sample_rate: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_mels: 26,
            n_ceps: 26,
            window_len: 512,
            hop: 320,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-6,
            sample_rate: SAMPLE_RATE,
        }
    }
}

impl FeatureConfig {
    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::BadConfig(m.to_string()));
        if self.n_mels == 0 || self.n_ceps == 0 {
            return bad("n_mels and n_ceps must be positive");
        }
        if self.n_ceps > self.n_mels {
            return bad("n_ceps must not exceed n_mels");
        }
        if !self.window_len.is_power_of_two() || self.window_len < 4 {
            return bad("window_len must be a power of two");
        }
        if self.hop == 0 {
            return bad("hop must be positive");
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) {
            return bad("need 0 <= fmin < fmax");
        }
        if self.fmax > self.sample_rate as f64 / 2.0 {
            return bad("fmax exceeds the Nyquist frequency");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the mel filters, before snapping to bins.
pub fn mel_centers(cfg: &FeatureConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    (1..=cfg.n_mels).map(|i| mel_to_hz(lo + step * i as f64)).collect()
}

/// Triangular filters equally spaced on the mel scale. Edges and centers are
/// snapped to the nearest FFT bin, so each filter peaks with height 1 at the
/// bin nearest its center frequency.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Result<Array2<f64>, FeatureError> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let bin_hz = cfg.sample_rate as f64 / cfg.window_len as f64;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let step = (hi - lo) / (cfg.n_mels + 1) as f64;
    let edges: Vec<usize> = (0..cfg.n_mels + 2)
        .map(|i| (mel_to_hz(lo + step * i as f64) / bin_hz).round() as usize)
        .map(|b| b.min(n_bins - 1))
        .collect();
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        if !(l < c && c < r) {
            return Err(FeatureError::BadConfig(format!(
                "mel filter {m} collapses onto bins {l}/{c}/{r}; use fewer filters or a longer window"
            )));
        }
        for k in l..=r {
            let w = if k <= c {
                (k - l) as f64 / (c - l) as f64
            } else {
                (r - k) as f64 / (r - c) as f64
            };
            fb[[m, k]] = w;
        }
    }
    Ok(fb)
}

/// Orthonormal DCT-II matrix, `n_out × n_in`.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Array2<f64> {
    let mut d = Array2::zeros((n_out, n_in));
    for k in 0..n_out {
        let scale = if k == 0 {
            (1.0 / n_in as f64).sqrt()
        } else {
            (2.0 / n_in as f64).sqrt()
        };
        for m in 0..n_in {
            d[[k, m]] = scale
                * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5) / n_in as f64).cos();
        }
    }
    d
}

#[derive(Debug, Clone)]
pub struct FeatureCache {
    pub spectra: Vec<Spectrum>,
    /// Mel energies before the log, `T × n_mels`.
    pub mel: Array2<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    /// `T × n_ceps`.
    pub values: Array2<f64>,
    pub cfg: FeatureConfig,
    pub cache: Option<FeatureCache>,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }
}

/// Precomputed filterbank, window, DCT and FFT plan for one config.
#[derive(Debug, Clone)]
pub struct Frontend {
    cfg: FeatureConfig,
    window: Vec<f64>,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
    fft: RealFft,
}

impl Frontend {
    pub fn new(cfg: FeatureConfig) -> Result<Self, FeatureError> {
        let filterbank = mel_filterbank(&cfg)?;
        Ok(Self {
            cfg,
            window: dsp::hann_window(cfg.window_len),
            dct: dct_matrix(cfg.n_ceps, cfg.n_mels),
            fft: RealFft::new(cfg.window_len)?,
            filterbank,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> ArrayView2<'_, f64> {
        self.filterbank.view()
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        dsp::frame_count(n_samples, self.cfg.window_len, self.cfg.hop)
    }

    pub fn forward(&self, samples: &[f64]) -> FeatureMatrix {
        let win = self.cfg.window_len;
        let hop = self.cfg.hop;
        let t_count = self.n_frames(samples.len());
        let n_bins = self.cfg.n_bins();
        let mut spectra = Vec::with_capacity(t_count);
        let mut power = Array2::zeros((t_count, n_bins));
        let mut frame = vec![0.0; win];
        for t in 0..t_count {
            let start = t * hop;
            for (i, f) in frame.iter_mut().enumerate() {
                *f = samples.get(start + i).copied().unwrap_or(0.0) * self.window[i];
            }
            let spec = self.fft.forward(&frame);
            for (p, c) in power.row_mut(t).iter_mut().zip(&spec.bins) {
                *p = c.norm_sqr();
            }
            spectra.push(spec);
        }
        let mel = power.dot(&self.filterbank.t());
        let log_mel = mel.mapv(|m| (m + self.cfg.log_floor).ln());
        let values = log_mel.dot(&self.dct.t());
        FeatureMatrix {
            values,
            cfg: self.cfg,
            cache: Some(FeatureCache {
                spectra,
                mel,
                n_samples: samples.len(),
            }),
        }
    }

    pub fn backward(
        &self,
        features: &FeatureMatrix,
        grad_out: ArrayView2<'_, f64>,
    ) -> Result<Vec<f64>, FeatureError> {
        let cache = features.cache.as_ref().ok_or(FeatureError::MissingCache)?;
        let expected = features.values.dim();
        if grad_out.dim() != expected {
            return Err(FeatureError::ShapeMismatch {
                expected,
                actual: grad_out.dim(),
            });
        }
        let grad_log_mel = grad_out.dot(&self.dct);
        let grad_mel = &grad_log_mel / &cache.mel.mapv(|m| m + self.cfg.log_floor);
        let grad_power = grad_mel.dot(&self.filterbank);

        let (win, hop) = (self.cfg.window_len, self.cfg.hop);
        let mut grad = vec![0.0; cache.n_samples];
        for (t, (spec, gp)) in cache.spectra.iter().zip(grad_power.axis_iter(Axis(0))).enumerate() {
            let gp = gp.to_vec();
            let gw = self.fft.power_adjoint(spec, &gp);
            let start = t * hop;
            for i in 0..win {
                if let Some(g) = grad.get_mut(start + i) {
                    *g += gw[i] * self.window[i];
                }
            }
        }
        Ok(grad)
    }
}

pub fn mfcc_forward(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    Ok(Frontend::new(*cfg)?.forward(&clip.samples))
}

pub fn mfcc_backward(
    features: &FeatureMatrix,
    grad_out: ArrayView2<'_, f64>,
) -> Result<Vec<f64>, FeatureError> {
    Frontend::new(features.cfg)?.backward(features, grad_out)
}
