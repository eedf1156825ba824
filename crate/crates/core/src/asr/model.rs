//! Context-window MLP → vanilla RNN → linear projection, with hand-written
//! reverse mode.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Alphabet, AsrError, Logits};
use crate::features::FeatureConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Frames of context on each side of the current frame.
    pub context: usize,
    pub hidden: usize,
    pub recurrent: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            context: 4,
            hidden: 128,
            recurrent: 64,
        }
    }
}

/// Trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub wx: Array2<f64>,
    pub wh: Array2<f64>,
    pub bh: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
}

impl Params {
    pub fn zeros(n_in: usize, dims: ModelDims, n_out: usize) -> Self {
        let din = n_in * (2 * dims.context + 1);
        Self {
            w1: Array2::zeros((dims.hidden, din)),
            b1: Array1::zeros(dims.hidden),
            wx: Array2::zeros((dims.recurrent, dims.hidden)),
            wh: Array2::zeros((dims.recurrent, dims.recurrent)),
            bh: Array1::zeros(dims.recurrent),
            wo: Array2::zeros((n_out, dims.recurrent)),
            bo: Array1::zeros(n_out),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 7] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.wx.as_slice().unwrap(),
            self.wh.as_slice().unwrap(),
            self.bh.as_slice().unwrap(),
            self.wo.as_slice().unwrap(),
            self.bo.as_slice().unwrap(),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.wx.as_slice_mut().unwrap(),
            self.wh.as_slice_mut().unwrap(),
            self.bh.as_slice_mut().unwrap(),
            self.wo.as_slice_mut().unwrap(),
            self.bo.as_slice_mut().unwrap(),
        ]
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Per-coefficient standardisation applied before the context window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputNorm {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    pub fn fit<'a>(matrices: impl IntoIterator<Item = &'a Array2<f64>>) -> Self {
        let mut sum: Option<Array1<f64>> = None;
        let mut sq: Option<Array1<f64>> = None;
        let mut n = 0usize;
        for m in matrices {
            let s = m.sum_axis(Axis(0));
            let q = m.mapv(|v| v * v).sum_axis(Axis(0));
            sum = Some(sum.map_or(s.clone(), |acc| acc + &s));
            sq = Some(sq.map_or(q.clone(), |acc| acc + &q));
            n += m.nrows();
        }
        let (sum, sq) = (sum.expect("no feature matrices"), sq.unwrap());
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcousticModel {
    pub alphabet: Alphabet,
    pub feature_cfg: FeatureConfig,
    pub dims: ModelDims,
    pub norm: InputNorm,
    pub params: Params,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ModelCache {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
}

impl AcousticModel {
    pub fn zeros(alphabet: Alphabet, feature_cfg: FeatureConfig, dims: ModelDims) -> Self {
        let params = Params::zeros(feature_cfg.n_ceps, dims, alphabet.n_outputs());
        Self {
            norm: InputNorm::identity(feature_cfg.n_ceps),
            alphabet,
            feature_cfg,
            dims,
            params,
        }
    }

    /// Seeded Glorot-uniform initialisation; the recurrent matrix is scaled
    /// down to keep early BPTT stable.
    pub fn init(alphabet: Alphabet, feature_cfg: FeatureConfig, dims: ModelDims, norm: InputNorm, seed: u64) -> Self {
        let mut m = Self::zeros(alphabet, feature_cfg, dims);
        m.norm = norm;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut glorot = |a: &mut Array2<f64>, gain: f64| {
            let (fo, fi) = a.dim();
            let lim = gain * (6.0 / (fo + fi) as f64).sqrt();
            a.mapv_inplace(|_| rng.random_range(-lim..lim));
        };
        glorot(&mut m.params.w1, 1.0);
        glorot(&mut m.params.wx, 1.0);
        glorot(&mut m.params.wh, 0.5);
        glorot(&mut m.params.wo, 1.0);
        m
    }

    pub fn n_inputs(&self) -> usize {
        self.feature_cfg.n_ceps
    }

    fn window_input(&self, features: ArrayView2<'_, f64>) -> Array2<f64> {
        let (t_len, n) = features.dim();
        let c = self.dims.context as isize;
        let mut z = features.to_owned();
        for mut row in z.outer_iter_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.norm.mean[k]) / self.norm.std[k];
            }
        }
        let width = 2 * self.dims.context + 1;
        let mut x = Array2::zeros((t_len, n * width));
        for t in 0..t_len as isize {
            for j in -c..=c {
                let src = t + j;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let off = ((j + c) as usize) * n;
                x.slice_mut(s![t as usize, off..off + n]).assign(&z.row(src as usize));
            }
        }
        x
    }

    pub fn forward(&self, features: ArrayView2<'_, f64>) -> Result<(Logits, ModelCache), AsrError> {
        if features.ncols() != self.n_inputs() {
            return Err(AsrError::ShapeMismatch {
                expected: self.n_inputs(),
                actual: features.ncols(),
            });
        }
        let p = &self.params;
        let x = self.window_input(features);
        let mut h1 = x.dot(&p.w1.t());
        h1 += &p.b1;
        h1.mapv_inplace(f64::tanh);

        let mut h2 = h1.dot(&p.wx.t());
        h2 += &p.bh;
        let t_len = h2.nrows();
        for t in 0..t_len {
            if t > 0 {
                let rec = p.wh.dot(&h2.row(t - 1));
                let mut row = h2.row_mut(t);
                row += &rec;
            }
            h2.row_mut(t).mapv_inplace(f64::tanh);
        }
        let mut out = h2.dot(&p.wo.t());
        out += &p.bo;
        Ok((Logits { values: out }, ModelCache { x, h1, h2 }))
    }

    /// Gradient of the loss with respect to the input features and, when
    /// requested, the parameters.
    pub fn backward(
        &self,
        cache: &ModelCache,
        grad_logits: ArrayView2<'_, f64>,
        want_params: bool,
    ) -> (Array2<f64>, Option<Params>) {
        let p = &self.params;
        let t_len = grad_logits.nrows();
        let mut grad_h2 = grad_logits.dot(&p.wo);
        let mut carry = Array1::<f64>::zeros(self.dims.recurrent);
        for t in (0..t_len).rev() {
            let mut g = grad_h2.row_mut(t);
            g += &carry;
            let h = cache.h2.row(t);
            g.zip_mut_with(&h, |gv, hv| *gv *= 1.0 - hv * hv);
            carry = p.wh.t().dot(&g);
        }
        let grad_a2 = grad_h2;
        let mut grad_a1 = grad_a2.dot(&p.wx);
        grad_a1.zip_mut_with(&cache.h1, |g, h| *g *= 1.0 - h * h);
        let grad_x = grad_a1.dot(&p.w1);

        let n = self.n_inputs();
        let c = self.dims.context as isize;
        let mut grad_feat = Array2::zeros((t_len, n));
        for t in 0..t_len as isize {
            for j in -c..=c {
                let src = t + j;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let off = ((j + c) as usize) * n;
                let mut dst = grad_feat.row_mut(src as usize);
                dst += &grad_x.slice(s![t as usize, off..off + n]);
            }
        }
        for mut row in grad_feat.outer_iter_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v /= self.norm.std[k];
            }
        }

        let grads = want_params.then(|| {
            let mut wh = Array2::zeros(p.wh.dim());
            if t_len > 1 {
                wh = grad_a2.slice(s![1.., ..]).t().dot(&cache.h2.slice(s![..t_len - 1, ..]));
            }
            Params {
                w1: grad_a1.t().dot(&cache.x),
                b1: grad_a1.sum_axis(Axis(0)),
                wx: grad_a2.t().dot(&cache.h1),
                wh,
                bh: grad_a2.sum_axis(Axis(0)),
                wo: grad_logits.t().dot(&cache.h2),
                bo: grad_logits.sum_axis(Axis(0)),
            }
        });
        (grad_feat, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asr::ctc::{ctc_loss, log_softmax};
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn small_model(seed: u64) -> AcousticModel {
        let cfg = FeatureConfig {
            n_ceps: 5,
            ..FeatureConfig::default()
        };
        let dims = ModelDims {
            context: 1,
            hidden: 7,
            recurrent: 6,
        };
        AcousticModel::init(Alphabet::new("ab".chars()), cfg, dims, InputNorm::identity(5), seed)
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = AcousticModel::zeros(Alphabet::new("ab".chars()), FeatureConfig::default(), ModelDims::default());
        let f = Array2::from_elem((9, 26), 3.0);
        let (l, _) = m.forward(f.view()).unwrap();
        assert_eq!(l.values.dim(), (9, 4));
        assert!(l.values.iter().all(|&v| v == 0.0));
        for row in log_softmax(l.values.view()).outer_iter() {
            assert_abs_diff_eq!(row.mapv(f64::exp).sum(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(row[0].exp(), 0.25, epsilon = 1e-12);
        }
        assert!(matches!(
            m.forward(Array2::zeros((3, 4)).view()),
            Err(AsrError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn parameter_and_input_gradients_match_finite_differences() {
        let m = small_model(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Array2::from_shape_fn((6, 5), |_| StandardNormal.sample(&mut rng));
        let labels = [0, 1, 2];
        let loss_of = |m: &AcousticModel, f: &Array2<f64>| {
            let (l, _) = m.forward(f.view()).unwrap();
            ctc_loss(&l, &labels, m.alphabet.blank()).unwrap().0
        };
        let (l, cache) = m.forward(f.view()).unwrap();
        let (_, gl) = ctc_loss(&l, &labels, m.alphabet.blank()).unwrap();
        let (gf, gp) = m.backward(&cache, gl.view(), true);
        let gp = gp.unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for k in 0..5 {
                let mut fp = f.clone();
                fp[[i, k]] += h;
                let mut fm = f.clone();
                fm[[i, k]] -= h;
                let fd = (loss_of(&m, &fp) - loss_of(&m, &fm)) / (2.0 * h);
                assert_abs_diff_eq!(gf[[i, k]], fd, epsilon = 1e-6);
            }
        }
        for (ti, tensor) in gp.tensors().iter().enumerate() {
            for idx in (0..tensor.len()).step_by(3) {
                let mut mp = m.clone();
                mp.params.tensors_mut()[ti][idx] += h;
                let mut mm = m.clone();
                mm.params.tensors_mut()[ti][idx] -= h;
                let fd = (loss_of(&mp, &f) - loss_of(&mm, &f)) / (2.0 * h);
                assert_abs_diff_eq!(tensor[idx], fd, epsilon = 1e-6);
            }
        }
    }
}
