//! Frequency masking in the style of MPEG-1 psychoacoustic model 1, and the
//! hinge loss that measures how far a perturbation pokes above the masking
//! threshold of the clip it is added to.
//!
//! Every frame of the original clip is normalised so that its strongest bin
//! sits at 96 dB. The same per-frame offset is applied to the perturbation,
//! which puts both spectra on one scale.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{self, AudioClip, RealFft, I16_MAX};

pub const PSD_MAX_DB: f64 = 96.0;
pub const PSD_FLOOR_DB: f64 = -200.0;
/// Minimum masker-to-masker distance after decimation.
pub const MIN_MASKER_BARK: f64 = 0.5;
/// Bark distance range `[below, above)` over which a masker spreads.
pub const SPREAD_BARK: (f64, f64) = (-3.0, 8.0);

#[derive(Debug, Error)]
pub enum PsychoError {
    #[error("perturbation has {actual} samples, thresholds were computed for {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsychoConfig {
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
}

impl Default for PsychoConfig {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 320,
            sample_rate: dsp::SAMPLE_RATE,
        }
    }
}

impl PsychoConfig {
    pub fn n_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        (0..self.n_bins())
            .map(|k| k as f64 * self.sample_rate as f64 / self.window_len as f64)
            .collect()
    }

    /// Offset used for an all-zero frame: the one that would put a
    /// full-scale sinusoid at 96 dB.
    pub fn silent_offset(&self) -> f64 {
        let wsum: f64 = dsp::hann_window(self.window_len).iter().sum();
        PSD_MAX_DB - 20.0 * (I16_MAX * wsum / 2.0).log10()
    }
}

pub fn bark(freq: f64) -> f64 {
    13.0 * (0.00076 * freq).atan() + 3.5 * (freq / 7500.0).powi(2).atan()
}

/// Absolute threshold of hearing in dB SPL. Frequencies are clamped to
/// 20 Hz – 8 kHz.
pub fn ath(freq: f64) -> f64 {
    let f = freq.clamp(20.0, 8000.0) / 1000.0;
    3.64 * f.powf(-0.8) - 6.5 * (-0.6 * (f - 3.3).powi(2)).exp() + 1e-3 * f.powi(4)
}

fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn power_to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(PSD_FLOOR_DB)
    } else {
        PSD_FLOOR_DB
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdFrame {
    pub psd: Vec<f64>,
    pub bin_freqs: Vec<f64>,
    /// dB added to `10·log10(|X|²)`.
    pub offset: f64,
}

/// Normalised PSD of an already windowed frame.
pub fn psd_normalized(frame: &[f64], cfg: &PsychoConfig) -> Result<PsdFrame, PsychoError> {
    let fft = RealFft::new(frame.len())?;
    Ok(psd_with(&fft, frame, cfg))
}

fn psd_with(fft: &RealFft, frame: &[f64], cfg: &PsychoConfig) -> PsdFrame {
    let power = fft.forward(frame).power();
    let peak = power.iter().fold(0.0_f64, |m, &p| m.max(p));
    let offset = if peak > 0.0 {
        PSD_MAX_DB - 10.0 * peak.log10()
    } else {
        cfg.silent_offset()
    };
    let psd = power
        .iter()
        .map(|&p| if p > 0.0 { (10.0 * p.log10() + offset).max(PSD_FLOOR_DB) } else { PSD_FLOOR_DB })
        .collect();
    PsdFrame {
        psd,
        bin_freqs: cfg.bin_freqs(),
        offset,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MaskerKind {
    Tonal,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Masker {
    pub bin: usize,
    pub level: f64,
    pub kind: MaskerKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskerSet {
    pub tone_maskers: Vec<(usize, f64)>,
    pub noise_maskers: Vec<(usize, f64)>,
}

impl MaskerSet {
    pub fn all(&self) -> Vec<Masker> {
        let tones = self.tone_maskers.iter().map(|&(bin, level)| Masker {
            bin,
            level,
            kind: MaskerKind::Tonal,
        });
        let noise = self.noise_maskers.iter().map(|&(bin, level)| Masker {
            bin,
            level,
            kind: MaskerKind::Noise,
        });
        tones.chain(noise).collect()
    }

    pub fn len(&self) -> usize {
        self.tone_maskers.len() + self.noise_maskers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn tonal_offsets(freq: f64) -> &'static [usize] {
    if freq < 5500.0 {
        &[2]
    } else {
        &[2, 3]
    }
}

/// Tonal and noise maskers before the ATH check and decimation.
pub fn raw_maskers(psd: &PsdFrame) -> MaskerSet {
    let p = &psd.psd;
    let n = p.len();
    let mut tonal = Vec::new();
    let mut claimed = vec![false; n];
    for k in 1..n.saturating_sub(1) {
        if !(p[k] > p[k - 1] && p[k] > p[k + 1]) {
            continue;
        }
        let offs = tonal_offsets(psd.bin_freqs[k]);
        let prominent = offs.iter().all(|&j| {
            let lo = k.checked_sub(j).is_none_or(|i| p[k] >= p[i] + 7.0);
            let hi = p.get(k + j).is_none_or(|&v| p[k] >= v + 7.0);
            lo && hi
        });
        if !prominent {
            continue;
        }
        let level = power_to_db(db_to_power(p[k - 1]) + db_to_power(p[k]) + db_to_power(p[k + 1]));
        tonal.push((k, level));
        let reach = *offs.iter().max().unwrap_or(&1);
        for c in &mut claimed[k.saturating_sub(reach)..(k + reach + 1).min(n)] {
            *c = true;
        }
    }

    let mut noise = Vec::new();
    let bands: Vec<usize> = psd.bin_freqs.iter().map(|&f| bark(f).floor() as usize).collect();
    let mut start = 0;
    while start < n {
        let band = bands[start];
        let end = (start..n).find(|&i| bands[i] != band).unwrap_or(n);
        let power: f64 = (start..end)
            .filter(|&i| !claimed[i] && p[i] > PSD_FLOOR_DB)
            .map(|i| db_to_power(p[i]))
            .sum();
        if power > 0.0 {
            let positive: Vec<f64> = psd.bin_freqs[start..end]
                .iter()
                .copied()
                .filter(|&f| f > 0.0)
                .collect();
            let centre = if positive.is_empty() {
                0.0
            } else {
                (positive.iter().map(|f| f.ln()).sum::<f64>() / positive.len() as f64).exp()
            };
            let bin = (start..end)
                .min_by(|&a, &b| {
                    (psd.bin_freqs[a] - centre)
                        .abs()
                        .total_cmp(&(psd.bin_freqs[b] - centre).abs())
                })
                .unwrap_or(start);
            noise.push((bin, power_to_db(power)));
        }
        start = end;
    }
    MaskerSet {
        tone_maskers: tonal,
        noise_maskers: noise,
    }
}

/// Drops maskers below the threshold in quiet, then walks the rest in
/// frequency order keeping only the louder of any pair closer than 0.5 Bark.
pub fn decimate(maskers: &MaskerSet, bin_freqs: &[f64]) -> MaskerSet {
    let mut all: Vec<Masker> = maskers
        .all()
        .into_iter()
        .filter(|m| m.level >= ath(bin_freqs[m.bin]))
        .collect();
    all.sort_by(|a, b| a.bin.cmp(&b.bin).then(a.kind.cmp(&b.kind)));
    let mut kept: Vec<Masker> = Vec::with_capacity(all.len());
    for m in all {
        match kept.last_mut() {
            Some(last) if bark(bin_freqs[m.bin]) - bark(bin_freqs[last.bin]) < MIN_MASKER_BARK => {
                if m.level > last.level {
                    *last = m;
                }
            }
            _ => kept.push(m),
        }
    }
    let mut out = MaskerSet::default();
    for m in kept {
        match m.kind {
            MaskerKind::Tonal => out.tone_maskers.push((m.bin, m.level)),
            MaskerKind::Noise => out.noise_maskers.push((m.bin, m.level)),
        }
    }
    out
}

pub fn find_maskers(psd: &PsdFrame) -> MaskerSet {
    decimate(&raw_maskers(psd), &psd.bin_freqs)
}

/// Individual masking threshold of one masker at Bark position `z`.
pub fn individual_threshold(m: &Masker, z_masker: f64, z: f64) -> f64 {
    let offset = match m.kind {
        MaskerKind::Tonal => -6.025 - 0.275 * z_masker,
        MaskerKind::Noise => -2.025 - 0.175 * z_masker,
    };
    let dz = z - z_masker;
    if !(SPREAD_BARK.0..SPREAD_BARK.1).contains(&dz) {
        return f64::NEG_INFINITY;
    }
    let spread = if dz < 0.0 {
        27.0 * dz
    } else {
        (-17.0 + 0.15 * m.level).min(0.0) * dz
    };
    m.level + offset + spread
}

pub fn global_threshold(maskers: &MaskerSet, bin_freqs: &[f64]) -> Vec<f64> {
    let all = maskers.all();
    let z: Vec<f64> = bin_freqs.iter().map(|&f| bark(f)).collect();
    bin_freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let quiet = db_to_power(ath(f));
            let masked: f64 = all
                .iter()
                .map(|m| db_to_power(individual_threshold(m, z[m.bin], z[i])))
                .sum();
            10.0 * (quiet + masked).log10()
        })
        .collect()
}

/// Per-frame global masking threshold of a clip, together with the
/// normalisation offsets needed to place a perturbation on the same scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskingThreshold {
    /// `T × (W/2+1)` in dB.
    pub theta: Array2<f64>,
    pub offsets: Vec<f64>,
    pub bin_freqs: Vec<f64>,
    pub n_samples: usize,
    pub cfg: PsychoConfig,
}

impl MaskingThreshold {
    pub fn compute(clip: &AudioClip, cfg: &PsychoConfig) -> Result<Self, PsychoError> {
        let fft = RealFft::new(cfg.window_len)?;
        let window = dsp::hann_window(cfg.window_len);
        let frames = dsp::frame_signal(&clip.samples, cfg.window_len, cfg.hop)?;
        let bin_freqs = cfg.bin_freqs();
        let mut theta = Array2::zeros((frames.n_frames(), cfg.n_bins()));
        let mut offsets = Vec::with_capacity(frames.n_frames());
        for (t, row) in frames.frames.outer_iter().enumerate() {
            let windowed: Vec<f64> = row.iter().zip(&window).map(|(x, w)| x * w).collect();
            let psd = psd_with(&fft, &windowed, cfg);
            let thr = global_threshold(&find_maskers(&psd), &bin_freqs);
            theta.row_mut(t).assign(&ndarray::Array1::from(thr));
            offsets.push(psd.offset);
        }
        Ok(Self {
            theta,
            offsets,
            bin_freqs,
            n_samples: clip.len(),
            cfg: *cfg,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.theta.nrows()
    }

    /// CSV with columns `frame,bin,hz,db`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "frame,bin,hz,db")?;
        for (t, row) in self.theta.outer_iter().enumerate() {
            for (k, db) in row.iter().enumerate() {
                writeln!(w, "{t},{k},{},{db}", self.bin_freqs[k])?;
            }
        }
        Ok(())
    }
}

pub fn masking_thresholds(clip: &AudioClip) -> Result<MaskingThreshold, PsychoError> {
    MaskingThreshold::compute(clip, &PsychoConfig::default())
}

/// Reusable evaluator for [`psycho_loss`] that keeps the FFT plan and window.
#[derive(Debug, Clone)]
pub struct PsychoLoss {
    thr: MaskingThreshold,
    fft: RealFft,
    window: Vec<f64>,
}

impl PsychoLoss {
    pub fn new(thr: MaskingThreshold) -> Result<Self, PsychoError> {
        Ok(Self {
            fft: RealFft::new(thr.cfg.window_len)?,
            window: dsp::hann_window(thr.cfg.window_len),
            thr,
        })
    }

    pub fn threshold(&self) -> &MaskingThreshold {
        &self.thr
    }

    /// Loss value only.
    pub fn value(&self, delta: &[f64]) -> Result<f64, PsychoError> {
        self.eval(delta, false).map(|(l, _)| l)
    }

    /// Loss and gradient with respect to `delta`.
    pub fn eval_grad(&self, delta: &[f64]) -> Result<(f64, Vec<f64>), PsychoError> {
        self.eval(delta, true)
    }

    fn eval(&self, delta: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>), PsychoError> {
        let thr = &self.thr;
        if delta.len() != thr.n_samples {
            return Err(PsychoError::LengthMismatch {
                expected: thr.n_samples,
                actual: delta.len(),
            });
        }
        let (win, hop) = (thr.cfg.window_len, thr.cfg.hop);
        let n_bins = thr.cfg.n_bins();
        let scale = 1.0 / (thr.n_frames() * n_bins) as f64;
        let mut loss = 0.0;
        let mut grad = if want_grad { vec![0.0; delta.len()] } else { Vec::new() };
        let mut frame = vec![0.0; win];
        let mut gp = vec![0.0; n_bins];
        let db_slope = 10.0 / std::f64::consts::LN_10;
        for t in 0..thr.n_frames() {
            let start = t * hop;
            for (i, f) in frame.iter_mut().enumerate() {
                *f = delta.get(start + i).copied().unwrap_or(0.0) * self.window[i];
            }
            let spec = self.fft.forward(&frame);
            let mut active = false;
            for (k, c) in spec.bins.iter().enumerate() {
                let p = c.norm_sqr();
                gp[k] = 0.0;
                if p <= 0.0 {
                    continue;
                }
                let db = 10.0 * p.log10() + thr.offsets[t];
                if db <= PSD_FLOOR_DB {
                    continue;
                }
                let excess = db - thr.theta[[t, k]];
                // equality takes the zero subgradient
                if excess > 0.0 {
                    loss += excess;
                    gp[k] = db_slope / p;
                    active = true;
                }
            }
            if want_grad && active {
                let gw = self.fft.power_adjoint(&spec, &gp);
                for i in 0..win {
                    if let Some(g) = grad.get_mut(start + i) {
                        *g += gw[i] * self.window[i] * scale;
                    }
                }
            }
        }
        Ok((loss * scale, grad))
    }
}

/// Mean hinge excess of the perturbation's PSD over the masking threshold,
/// and its gradient with respect to `delta`.
pub fn psycho_loss(delta: &[f64], thr: &MaskingThreshold) -> Result<(f64, Vec<f64>), PsychoError> {
    PsychoLoss::new(thr.clone())?.eval_grad(delta)
}
