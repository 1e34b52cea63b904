//! Linear-softmax pixel classifier over a small hand-made feature vector.

use crate::grid::{GridImage, ProbMap};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// intensity, 3x3 mean, 7x7 mean, gradient magnitude, x/W, y/H, bias.
pub const FEATURES: usize = 7;

pub type Feature = [f64; FEATURES];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("no training samples")]
    NoSamples,
    #[error("label {label} is not below class count {class_count}")]
    BadLabel { label: u8, class_count: usize },
    #[error("training diverged at epoch {epoch}, step {step} (loss {loss})")]
    Diverged { epoch: usize, step: usize, loss: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 4,
            learning_rate: 0.5,
            momentum: 0.9,
            batch_size: 256,
            l2: 1e-5,
            seed: 0,
        }
    }
}

fn box_mean(data: &[f64], w: usize, h: usize, r: i64) -> Vec<f64> {
    // Clamp-to-edge box filter via a summed-area table.
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += data[y * w + x];
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let x0 = (x as i64 - r).max(0) as usize;
            let y0 = (y as i64 - r).max(0) as usize;
            let x1 = ((x as i64 + r) as usize).min(w - 1) + 1;
            let y1 = ((y as i64 + r) as usize).min(h - 1) + 1;
            let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] + sat[y0 * (w + 1) + x0];
            out[y * w + x] = s / ((x1 - x0) * (y1 - y0)) as f64;
        }
    }
    out
}

/// Feature vector of every pixel, row-major.
pub fn pixel_features(img: &GridImage) -> Vec<Feature> {
    let (w, h) = (img.width(), img.height());
    let d = img.data();
    let m3 = box_mean(d, w, h, 1);
    let m7 = box_mean(d, w, h, 3);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = (d[y * w + (x + 1).min(w - 1)] - d[y * w + x.saturating_sub(1)]) / 2.0;
            let gy = (d[(y + 1).min(h - 1) * w + x] - d[y.saturating_sub(1) * w + x]) / 2.0;
            out.push([
                d[y * w + x],
                m3[y * w + x],
                m7[y * w + x],
                (gx * gx + gy * gy).sqrt(),
                x as f64 / w as f64,
                y as f64 / h as f64,
                1.0,
            ]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelClassifier {
    class_count: usize,
    /// One weight row per class.
    weights: Vec<Feature>,
    final_loss: Option<f64>,
}

impl PixelClassifier {
    /// All-zero weights: every pixel gets the uniform distribution.
    pub fn new(class_count: usize) -> Self {
        assert!(class_count >= 2, "a classifier needs at least two classes");
        Self {
            class_count,
            weights: vec![[0.0; FEATURES]; class_count],
            final_loss: None,
        }
    }

    pub fn from_weights(weights: Vec<Feature>) -> Self {
        assert!(weights.len() >= 2, "a classifier needs at least two classes");
        Self {
            class_count: weights.len(),
            weights,
            final_loss: None,
        }
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn weights(&self) -> &[Feature] {
        &self.weights
    }

    /// Mean cross-entropy over the last training epoch.
    pub fn final_loss(&self) -> Option<f64> {
        self.final_loss
    }

    fn softmax_into(&self, f: &Feature, out: &mut [f64]) {
        for (c, w) in self.weights.iter().enumerate() {
            out[c] = w.iter().zip(f).map(|(a, b)| a * b).sum();
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in out.iter_mut() {
            *v /= z;
        }
    }

    pub fn predict(&self, img: &GridImage) -> ProbMap {
        let feats = pixel_features(img);
        let c = self.class_count;
        let mut probs = vec![0.0; feats.len() * c];
        for (f, out) in feats.iter().zip(probs.chunks_mut(c)) {
            self.softmax_into(f, out);
        }
        ProbMap::new(img.width(), img.height(), c, probs).expect("softmax output is normalized")
    }

    /// Mini-batch SGD with momentum on mean cross-entropy, continuing from the
    /// current weights. The sample order is shuffled by a generator seeded from
    /// `params.seed`, so equal inputs give equal weights.
    pub fn train(&mut self, samples: &[(Feature, u8)], params: &TrainParams) -> Result<f64, TrainError> {
        if samples.is_empty() {
            return Err(TrainError::NoSamples);
        }
        if let Some(&(_, label)) = samples.iter().find(|(_, l)| *l as usize >= self.class_count) {
            return Err(TrainError::BadLabel {
                label,
                class_count: self.class_count,
            });
        }
        let c = self.class_count;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut velocity = vec![[0.0; FEATURES]; c];
        let mut grad = vec![[0.0; FEATURES]; c];
        let mut p = vec![0.0; c];
        let batch = params.batch_size.max(1);
        let mut epoch_loss = f64::NAN;
        for epoch in 0..params.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for (step, chunk) in order.chunks(batch).enumerate() {
                grad.iter_mut().for_each(|g| *g = [0.0; FEATURES]);
                let mut loss = 0.0;
                for &i in chunk {
                    let (f, label) = &samples[i];
                    self.softmax_into(f, &mut p);
                    loss -= p[*label as usize].max(1e-300).ln();
                    for (k, g) in grad.iter_mut().enumerate() {
                        let err = p[k] - if k == *label as usize { 1.0 } else { 0.0 };
                        for j in 0..FEATURES {
                            g[j] += err * f[j];
                        }
                    }
                }
                if !loss.is_finite() {
                    return Err(TrainError::Diverged { epoch, step, loss });
                }
                total += loss;
                let n = chunk.len() as f64;
                for k in 0..c {
                    for j in 0..FEATURES {
                        let g = grad[k][j] / n + params.l2 * self.weights[k][j];
                        velocity[k][j] = params.momentum * velocity[k][j] - params.learning_rate * g;
                        self.weights[k][j] += velocity[k][j];
                    }
                }
                if self.weights.iter().flatten().any(|w| !w.is_finite()) {
                    return Err(TrainError::Diverged { epoch, step, loss });
                }
            }
            epoch_loss = total / samples.len() as f64;
        }
        if params.epochs > 0 {
            self.final_loss = Some(epoch_loss);
        }
        Ok(epoch_loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_phantoms, PhantomSpec};

    #[test]
    fn untrained_model_is_uniform() {
        let img = GridImage::filled(4, 3, 0.4);
        let p = PixelClassifier::new(3).predict(&img);
        assert!(p.probs().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn softmax_matches_closed_form_on_one_pixel() {
        let img = GridImage::filled(1, 1, 0.5);
        let f = pixel_features(&img)[0];
        assert_eq!(f, [0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]);
        let m = PixelClassifier::from_weights(vec![[2.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0], [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]]);
        // logits 0 and 0.5
        let want = 1.0 / (1.0 + 0.5f64.exp());
        assert!((m.predict(&img).pixel(0, 0)[0] - want).abs() < 1e-12);
    }

    #[test]
    fn box_mean_matches_direct_average() {
        let img = GridImage::from_fn(9, 7, |x, y| ((x * 7 + y * 3) % 10) as f64 / 10.0);
        let m = box_mean(img.data(), 9, 7, 1);
        for y in 0..7usize {
            for x in 0..9usize {
                let mut s = 0.0;
                let mut n = 0;
                for yy in y.saturating_sub(1)..=(y + 1).min(6) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(8) {
                        s += img.get(xx, yy);
                        n += 1;
                    }
                }
                assert!((m[y * 9 + x] - s / n as f64).abs() < 1e-12);
            }
        }
    }

    fn samples(spec: &PhantomSpec) -> Vec<(Feature, u8)> {
        generate_phantoms(spec)
            .unwrap()
            .items
            .iter()
            .flat_map(|it| pixel_features(&it.image).into_iter().zip(it.labels.labels().iter().copied()))
            .collect()
    }

    #[test]
    fn learns_two_tone_phantoms_deterministically() {
        let spec = PhantomSpec {
            count: 4,
            width: 48,
            height: 48,
            blob_radius: (6.0, 12.0),
            ..PhantomSpec::default()
        };
        let data = samples(&spec);
        let mut a = PixelClassifier::new(2);
        a.train(&data, &TrainParams::default()).unwrap();
        let mut b = PixelClassifier::new(2);
        b.train(&data, &TrainParams::default()).unwrap();
        assert_eq!(a, b);
        let correct = data
            .iter()
            .filter(|(f, l)| {
                let mut p = [0.0; 2];
                a.softmax_into(f, &mut p);
                (p[1] > p[0]) as u8 == *l
            })
            .count();
        let acc = correct as f64 / data.len() as f64;
        assert!(acc >= 0.95, "accuracy {acc}");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let mut m = PixelClassifier::new(2);
        assert_eq!(m.train(&[], &TrainParams::default()), Err(TrainError::NoSamples));
        assert!(matches!(
            m.train(&[([0.0; FEATURES], 2)], &TrainParams::default()),
            Err(TrainError::BadLabel { label: 2, .. })
        ));
        let huge = TrainParams {
            learning_rate: 1e308,
            momentum: 0.0,
            ..TrainParams::default()
        };
        let data = vec![([1e10; FEATURES], 0u8)];
        assert!(matches!(m.train(&data, &huge), Err(TrainError::Diverged { .. })));
    }
}
