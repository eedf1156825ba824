//! Audio clips, WAV I/O, framing, FFT and peak-loudness arithmetic.
//!
//! Samples are carried as `f64` on the signed 16-bit integer scale, so a
//! full-scale clip spans roughly `[-32768, 32767]`.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

pub const SAMPLE_RATE: u32 = 16_000;
pub const I16_MIN: f64 = -32768.0;
pub const I16_MAX: f64 = 32767.0;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated WAV file: {0}")]
    Truncated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("sample {index} = {value} is outside the 16-bit range")]
    OutOfRange { index: usize, value: f64 },
    #[error("signal is empty")]
    EmptySignal,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("bad window parameters: window_len={window_len}, hop={hop}")]
    BadWindowParams { window_len: usize, hop: usize },
    #[error("FFT length {0} is not a power of two")]
    NonPowerOfTwo(usize),
}

#[derive(Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl fmt::Debug for AudioClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AudioClip")
            .field("len", &self.samples.len())
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl AudioClip {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Clamp a sample to the representable 16-bit range.
pub fn clip_i16(x: f64) -> f64 {
    x.clamp(I16_MIN, I16_MAX)
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip, DspError> {
    let reader = hound::WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DspError::UnsupportedFormat(format!(
            "{} channels, expected mono",
            spec.channels
        )));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(DspError::UnsupportedFormat(format!(
            "{}-bit {:?}, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(DspError::UnsupportedFormat(format!(
            "{} Hz, expected {SAMPLE_RATE} Hz",
            spec.sample_rate
        )));
    }
    let declared = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(f64::from))
        .collect::<Result<Vec<_>, _>>()
        .map_err(map_hound)?;
    if samples.len() != declared {
        return Err(DspError::Truncated(format!(
            "header declares {declared} samples, found {}",
            samples.len()
        )));
    }
    Ok(AudioClip::new(samples))
}

/// Writes a PCM 16-bit mono file. Samples are rounded to the nearest integer;
/// anything outside the 16-bit range after rounding is rejected.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), DspError> {
    let quantised = clip
        .samples
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            let r = x.round();
            if !(I16_MIN..=I16_MAX).contains(&r) {
                Err(DspError::OutOfRange { index, value: x })
            } else {
                Ok(r as i16)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound)?;
    for s in quantised {
        writer.write_sample(s).map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)
}

fn map_hound(err: hound::Error) -> DspError {
    match err {
        // hound reports a short data chunk as a custom `Other` error
        hound::Error::IoError(e)
            if e.kind() == std::io::ErrorKind::UnexpectedEof
                || e.to_string().contains("enough bytes") =>
        {
            DspError::Truncated(e.to_string())
        }
        hound::Error::IoError(e) => DspError::Io(e),
        hound::Error::FormatError(msg) => DspError::UnsupportedFormat(msg.to_string()),
        hound::Error::TooWide => DspError::UnsupportedFormat("sample too wide".into()),
        hound::Error::UnfinishedSample => DspError::Truncated("unfinished sample".into()),
        hound::Error::Unsupported => DspError::UnsupportedFormat("unsupported feature".into()),
        hound::Error::InvalidSampleFormat => {
            DspError::UnsupportedFormat("invalid sample format".into())
        }
    }
}

/// `20·log10(max |v|)`, or `-inf` for an all-zero signal.
pub fn loudness_db(samples: &[f64]) -> Result<f64, DspError> {
    if samples.is_empty() {
        return Err(DspError::EmptySignal);
    }
    let peak = samples.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    if peak == 0.0 {
        Ok(f64::NEG_INFINITY)
    } else {
        Ok(20.0 * peak.log10())
    }
}

/// Peak loudness of `delta` relative to `original`, in dB. Negative values
/// mean the perturbation is quieter than the clip; a zero perturbation gives
/// `-inf`.
pub fn noise_loudness(original: &AudioClip, delta: &[f64]) -> Result<f64, DspError> {
    if delta.len() != original.len() {
        return Err(DspError::LengthMismatch {
            expected: original.len(),
            actual: delta.len(),
        });
    }
    let noise = loudness_db(delta)?;
    if noise == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(noise - loudness_db(&original.samples)?)
}

#[derive(Debug, Clone)]
pub struct FrameMatrix {
    pub frames: Array2<f64>,
    pub hop: usize,
    pub window_len: usize,
}

impl FrameMatrix {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// Number of frames produced for a signal of `len` samples.
pub fn frame_count(len: usize, window_len: usize, hop: usize) -> usize {
    len.saturating_sub(window_len).div_ceil(hop) + 1
}

pub fn frame_signal(samples: &[f64], window_len: usize, hop: usize) -> Result<FrameMatrix, DspError> {
    if window_len == 0 || hop == 0 {
        return Err(DspError::BadWindowParams { window_len, hop });
    }
    let n = frame_count(samples.len(), window_len, hop);
    let mut frames = Array2::zeros((n, window_len));
    for (t, mut row) in frames.outer_iter_mut().enumerate() {
        let start = t * hop;
        let end = (start + window_len).min(samples.len());
        if start < end {
            for (dst, &src) in row.iter_mut().zip(&samples[start..end]) {
                *dst = src;
            }
        }
    }
    Ok(FrameMatrix {
        frames,
        hop,
        window_len,
    })
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Non-negative half spectrum of a real frame (`N/2 + 1` bins).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }

    pub fn power(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Length of the frame this spectrum came from.
    pub fn frame_len(&self) -> usize {
        2 * (self.bins.len() - 1)
    }
}

/// Reusable real-input FFT of a fixed power-of-two length.
#[derive(Clone)]
pub struct RealFft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for RealFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealFft").field("len", &self.len).finish()
    }
}

impl RealFft {
    pub fn new(len: usize) -> Result<Self, DspError> {
        if len < 2 || !len.is_power_of_two() {
            return Err(DspError::NonPowerOfTwo(len));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_bins(&self) -> usize {
        self.len / 2 + 1
    }

    pub fn forward(&self, frame: &[f64]) -> Spectrum {
        debug_assert_eq!(frame.len(), self.len);
        let mut buf: Vec<Complex64> = frame.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf.truncate(self.n_bins());
        Spectrum { bins: buf }
    }

    pub fn inverse(&self, spectrum: &Spectrum) -> Vec<f64> {
        let half = self.n_bins();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        buf[..half].copy_from_slice(&spectrum.bins[..half]);
        for k in half..self.len {
            buf[k] = spectrum.bins[self.len - k].conj();
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// Gradient with respect to the frame of `sum_k g[k] * |X[k]|^2`, where
    /// `X` is the half spectrum of the frame.
    pub fn power_adjoint(&self, spectrum: &Spectrum, grad_power: &[f64]) -> Vec<f64> {
        // d|X_k|^2/dx_n = 2 Re(conj(X_k) e^{-2πikn/N}), summed over k is a
        // forward DFT of g ⊙ conj(X) padded with zeros.
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        for (k, (&g, x)) in grad_power.iter().zip(&spectrum.bins).enumerate() {
            buf[k] = x.conj() * g;
        }
        self.forward.process(&mut buf);
        buf.iter().map(|c| 2.0 * c.re).collect()
    }
}

pub fn fft_real(frame: &[f64]) -> Result<Spectrum, DspError> {
    Ok(RealFft::new(frame.len())?.forward(frame))
}

pub fn ifft_real(spectrum: &Spectrum) -> Result<Vec<f64>, DspError> {
    Ok(RealFft::new(spectrum.frame_len())?.inverse(spectrum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loudness_examples() {
        assert_abs_diff_eq!(loudness_db(&[32767.0; 4]).unwrap(), 90.3087, epsilon = 1e-4);
        assert_eq!(loudness_db(&[1.0, -1.0]).unwrap(), 0.0);
        assert_eq!(loudness_db(&[0.0; 8]).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(loudness_db(&[]), Err(DspError::EmptySignal)));
    }

    #[test]
    fn noise_loudness_examples() {
        let orig = AudioClip::new(vec![1000.0, -3000.0, 200.0]);
        assert_abs_diff_eq!(noise_loudness(&orig, &orig.samples).unwrap(), 0.0, epsilon = 1e-12);
        let tenth: Vec<f64> = orig.samples.iter().map(|x| 0.1 * x).collect();
        assert_abs_diff_eq!(noise_loudness(&orig, &tenth).unwrap(), -20.0, epsilon = 1e-9);

        let orig = AudioClip::new(vec![10000.0, 5.0]);
        assert_abs_diff_eq!(noise_loudness(&orig, &[-100.0, 3.0]).unwrap(), -40.0, epsilon = 1e-9);
        assert!(matches!(
            noise_loudness(&orig, &[1.0]),
            Err(DspError::LengthMismatch { .. })
        ));
        assert_eq!(noise_loudness(&orig, &[0.0, 0.0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn frame_counts() {
        for (len, expect) in [(512, 1), (832, 2), (833, 3), (0, 1), (100, 1)] {
            let fm = frame_signal(&vec![1.0; len], 512, 320).unwrap();
            assert_eq!(fm.n_frames(), expect, "len={len}");
        }
        let fm = frame_signal(&vec![1.0; 833], 512, 320).unwrap();
        // third frame starts at 640: samples 640..833 real, rest padded
        assert_eq!(fm.frames[[2, 192]], 1.0);
        assert_eq!(fm.frames[[2, 193]], 0.0);
        assert!(matches!(
            frame_signal(&[1.0], 0, 10),
            Err(DspError::BadWindowParams { .. })
        ));
        assert!(matches!(
            frame_signal(&[1.0], 10, 0),
            Err(DspError::BadWindowParams { .. })
        ));
    }

    #[test]
    fn rectangular_overlap_add_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (w, hop) = (64, 16);
        let fm = frame_signal(&x, w, hop).unwrap();
        let total = (fm.n_frames() - 1) * hop + w;
        let mut acc = vec![0.0; total];
        let mut cover = vec![0.0; total];
        for (t, row) in fm.frames.outer_iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                acc[t * hop + i] += v;
                cover[t * hop + i] += 1.0;
            }
        }
        for i in 0..total {
            let expect = x.get(i).copied().unwrap_or(0.0);
            assert_abs_diff_eq!(acc[i] / cover[i], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn fft_basics() {
        let mut imp = vec![0.0; 16];
        imp[0] = 1.0;
        for m in fft_real(&imp).unwrap().magnitudes() {
            assert_abs_diff_eq!(m, 1.0, epsilon = 1e-12);
        }

        let n = 64;
        let k = 5;
        let cos: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64).cos())
            .collect();
        let mags = fft_real(&cos).unwrap().magnitudes();
        for (bin, m) in mags.iter().enumerate() {
            if bin == k {
                assert_abs_diff_eq!(*m, n as f64 / 2.0, epsilon = 1e-9);
            } else {
                assert_abs_diff_eq!(*m, 0.0, epsilon = 1e-9);
            }
        }
        assert!(matches!(fft_real(&[0.0; 12]), Err(DspError::NonPowerOfTwo(12))));
    }

    #[test]
    fn parseval_and_inverse_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x: Vec<f64> = (0..512).map(|_| rng.random_range(-1000.0..1000.0)).collect();
            let spec = fft_real(&x).unwrap();
            let n = x.len();
            let p = spec.power();
            // half spectrum: DC and Nyquist once, others twice
            let mut bins_energy = p[0] + p[n / 2];
            bins_energy += 2.0 * p[1..n / 2].iter().sum::<f64>();
            let frame_energy: f64 = x.iter().map(|v| v * v).sum();
            assert!(((bins_energy / n as f64) - frame_energy).abs() / frame_energy < 1e-6);

            let back = ifft_real(&spec).unwrap();
            let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() / scale < 1e-9);
            }
        }
    }

    #[test]
    fn power_adjoint_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fft = RealFft::new(32).unwrap();
        let x: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..17).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |x: &[f64]| -> f64 {
            fft.forward(x).power().iter().zip(&g).map(|(p, g)| p * g).sum()
        };
        let grad = fft.power_adjoint(&fft.forward(&x), &g);
        for i in 0..32 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += 1e-5;
            xm[i] -= 1e-5;
            let fd = (f(&xp) - f(&xm)) / 2e-5;
            assert_abs_diff_eq!(grad[i], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn wav_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let clip = AudioClip::new((0..16000).map(|i| ((i * 37) % 65536) as f64 - 32768.0).collect());
        write_wav(&clip, &path).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.len(), 16000);
        assert_eq!(back, clip);

        let empty = AudioClip::new(vec![]);
        write_wav(&empty, &path).unwrap();
        assert!(read_wav(&path).unwrap().is_empty());

        let bad = AudioClip::new(vec![0.0, 40000.0]);
        assert!(matches!(
            write_wav(&bad, &path),
            Err(DspError::OutOfRange { index: 1, .. })
        ));

        let stereo = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&stereo), Err(DspError::UnsupportedFormat(_))));

        let rate = dir.path().join("r.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            ..spec
        };
        let mut w = hound::WavWriter::create(&rate, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&rate), Err(DspError::UnsupportedFormat(_))));

        write_wav(&clip, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.wav");
        std::fs::write(&cut, &bytes[..bytes.len() - 1001]).unwrap();
        assert!(matches!(read_wav(&cut), Err(DspError::Truncated(_))));

        assert!(matches!(read_wav(dir.path().join("missing.wav")), Err(DspError::Io(_))));
    }
}
