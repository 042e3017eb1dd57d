//! Rank pooling: summarize a clip by the linear functional `d` whose scores
//! `S(t|d) = <d, V_t>` rank the time-averaged frames `V_t` in temporal order.
//!
//! The pooled vector minimizes
//!
//! ```text
//! E(d) = λ/2 ‖d‖² + 2/(T(T−1)) Σ_{q>t} max{0, 1 − S(q|d) + S(t|d)}
//! ```
//!
//! [`solve_rank_pool`] runs subgradient descent on `E`; [`approx_rank_pool`]
//! is the closed-form direction of the first step from `d = 0`, where every
//! pair is active. Either result is reshaped into a [`DynamicImage`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::Frame;

/// Iterations per convergence check in [`solve_rank_pool`].
pub const SWEEP_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl FrameShape {
    pub fn of(frame: &Frame) -> Self {
        FrameShape {
            width: frame.width(),
            height: frame.height(),
            channels: frame.channels(),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    /// `V_t` is the running mean of the first `t` feature vectors.
    #[default]
    RunningMean,
    /// `V_t = ψ(I_t)`, for ablations.
    Raw,
}

/// Per-frame features `ψ(I_t)` and the vectors `V_t` that get ranked.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSeq {
    shape: FrameShape,
    features: Vec<Vec<f64>>,
    smoothed: Vec<Vec<f64>>,
}

impl FeatureSeq {
    /// Builds a sequence over plain vectors; the image shape is `dim x 1 x 1`.
    pub fn from_vectors(features: Vec<Vec<f64>>, smoothing: Smoothing) -> Result<Self> {
        let dim = features.first().map_or(0, Vec::len);
        let shape = FrameShape {
            width: dim,
            height: 1,
            channels: 1,
        };
        Self::with_shape(shape, features, smoothing)
    }

    fn with_shape(shape: FrameShape, features: Vec<Vec<f64>>, smoothing: Smoothing) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::DegenerateClip(0));
        }
        let dim = shape.len();
        if let Some(t) = features.iter().position(|f| f.len() != dim) {
            return Err(Error::Shape(format!(
                "feature {t} has length {}, expected {dim}",
                features[t].len()
            )));
        }
        let smoothed = match smoothing {
            Smoothing::Raw => features.clone(),
            Smoothing::RunningMean => {
                // incremental form keeps V_t bit-identical across a constant clip
                let mut mean = vec![0.0; dim];
                features
                    .iter()
                    .enumerate()
                    .map(|(t, f)| {
                        let n = (t + 1) as f64;
                        for (m, x) in mean.iter_mut().zip(f) {
                            *m += (x - *m) / n;
                        }
                        mean.clone()
                    })
                    .collect()
            }
        };
        Ok(FeatureSeq {
            shape,
            features,
            smoothed,
        })
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> FrameShape {
        self.shape
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn smoothed(&self) -> &[Vec<f64>] {
        &self.smoothed
    }

    fn scores(&self, d: &[f64]) -> Vec<f64> {
        self.smoothed.iter().map(|v| dot(d, v)).collect()
    }

    /// `Σ_t coeffs[t] · V_t` for zero-sum coefficients, evaluated as
    /// `Σ_t coeffs[t] · (V_t − V_1)` so a constant sequence yields exact zeros.
    fn combine_zero_sum(&self, coeffs: &[f64]) -> Vec<f64> {
        let base = &self.smoothed[0];
        let mut out = vec![0.0; self.dim()];
        for (c, v) in coeffs.iter().zip(&self.smoothed).skip(1) {
            if *c != 0.0 {
                for ((o, x), b) in out.iter_mut().zip(v).zip(base) {
                    *o += c * (x - b);
                }
            }
        }
        out
    }

    fn check_pairs(&self) -> Result<()> {
        if self.len() < 2 {
            Err(Error::DegenerateClip(self.len()))
        } else {
            Ok(())
        }
    }

    fn check_len(&self, d: &[f64]) -> Result<()> {
        if d.len() != self.dim() {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, features have {}",
                d.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Features are the flattened normalized pixels of each frame (identity feature map).
pub fn build_feature_seq(clip: &[Frame], smoothing: Smoothing) -> Result<FeatureSeq> {
    let first = clip.first().ok_or(Error::DegenerateClip(0))?;
    if let Some(t) = clip.iter().position(|f| !f.same_shape(first)) {
        return Err(Error::Shape(format!(
            "frame {t} is {}x{}x{}, frame 0 is {}x{}x{}",
            clip[t].width(),
            clip[t].height(),
            clip[t].channels(),
            first.width(),
            first.height(),
            first.channels()
        )));
    }
    let features = clip.iter().map(|f| f.pixels().to_vec()).collect();
    FeatureSeq::with_shape(FrameShape::of(first), features, smoothing)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `S(t|d) = <d, V_t>`
pub fn ranking_score(d: &[f64], v: &[f64]) -> Result<f64> {
    if d.len() != v.len() {
        return Err(Error::Shape(format!(
            "score needs equal lengths, got {} and {}",
            d.len(),
            v.len()
        )));
    }
    Ok(dot(d, v))
}

fn pair_scale(t: usize) -> f64 {
    2.0 / (t as f64 * (t as f64 - 1.0))
}

/// Sum of hinge terms over all pairs `q > t`, and the per-frame coefficients of
/// the hinge subgradient `Σ_active (V_t − V_q)`.
fn hinge_terms(scores: &[f64]) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut coeffs = vec![0.0; scores.len()];
    for t in 0..scores.len() {
        for q in t + 1..scores.len() {
            let arg = 1.0 - scores[q] + scores[t];
            if arg > 0.0 {
                total += arg;
                coeffs[t] += 1.0;
                coeffs[q] -= 1.0;
            }
        }
    }
    (total, coeffs)
}

fn energy_from_scores(d: &[f64], scores: &[f64], lambda: f64) -> f64 {
    let (hinge, _) = hinge_terms(scores);
    0.5 * lambda * norm_sq(d) + pair_scale(scores.len()) * hinge
}

pub fn hinge_energy(d: &[f64], seq: &FeatureSeq, lambda: f64) -> Result<f64> {
    seq.check_pairs()?;
    seq.check_len(d)?;
    Ok(energy_from_scores(d, &seq.scores(d), lambda))
}

/// A subgradient of [`hinge_energy`]; a pair sitting exactly on its kink contributes zero.
pub fn energy_subgradient(d: &[f64], seq: &FeatureSeq, lambda: f64) -> Result<Vec<f64>> {
    seq.check_pairs()?;
    seq.check_len(d)?;
    Ok(subgradient_from_scores(d, seq, &seq.scores(d), lambda))
}

fn subgradient_from_scores(d: &[f64], seq: &FeatureSeq, scores: &[f64], lambda: f64) -> Vec<f64> {
    let (_, mut coeffs) = hinge_terms(scores);
    let scale = pair_scale(seq.len());
    coeffs.iter_mut().for_each(|c| *c *= scale);
    let mut g = seq.combine_zero_sum(&coeffs);
    for (gi, di) in g.iter_mut().zip(d) {
        *gi += lambda * di;
    }
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankPoolConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Step at iteration `k` is `step_size / sqrt(k)`, measured in units of
    /// `1 / |g_0|^2` where `g_0` is the subgradient at the origin. A unit
    /// step from the origin therefore moves the mean pairwise score gap by one.
    /// Steps are capped at `1 / lambda`.
    pub step_size: f64,
    /// Stop once the best energy improves by less than this over a sweep of
    /// [`SWEEP_LEN`] iterations. Zero disables the check.
    pub tol: f64,
    /// The solver is deterministic; the seed is carried into output metadata.
    pub seed: u64,
    pub smoothing: Smoothing,
}

impl Default for RankPoolConfig {
    fn default() -> Self {
        RankPoolConfig {
            lambda: 1e-3,
            max_iters: 200,
            step_size: 1.0,
            tol: 1e-6,
            seed: 0,
            smoothing: Smoothing::RunningMean,
        }
    }
}

impl RankPoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Param(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::Param("max_iters must be at least 1".into()));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Param(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Param(format!("tol must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankPoolSolution {
    pub image: DynamicImage,
    /// `E(d*)`; never above `E(0) = 1`.
    pub energy: f64,
    pub iterations: usize,
}

/// Subgradient descent on [`hinge_energy`] from `d = 0`, returning the best iterate seen.
pub fn solve_rank_pool(seq: &FeatureSeq, cfg: &RankPoolConfig) -> Result<RankPoolSolution> {
    cfg.validate()?;
    seq.check_pairs()?;
    let mut d = vec![0.0; seq.dim()];
    let mut scores = vec![0.0; seq.len()];
    let mut best_energy = energy_from_scores(&d, &scores, cfg.lambda);
    let mut best_d = d.clone();
    let mut sweep_start = best_energy;
    let mut iterations = 0;
    let mut unit = 0.0;

    for k in 1..=cfg.max_iters {
        iterations = k;
        let g = subgradient_from_scores(&d, seq, &scores, cfg.lambda);
        if g.iter().all(|&x| x == 0.0) {
            break;
        }
        if k == 1 {
            unit = 1.0 / norm_sq(&g);
        }
        let step = (unit * cfg.step_size / (k as f64).sqrt()).min(1.0 / cfg.lambda);
        for (di, gi) in d.iter_mut().zip(&g) {
            *di -= step * gi;
        }
        scores = seq.scores(&d);
        let energy = energy_from_scores(&d, &scores, cfg.lambda);
        if !energy.is_finite() {
            return Err(Error::Numeric(format!(
                "energy became {energy} at iteration {k}; reduce step_size"
            )));
        }
        if energy < best_energy {
            best_energy = energy;
            best_d.copy_from_slice(&d);
        }
        if k % SWEEP_LEN == 0 {
            if sweep_start - best_energy < cfg.tol {
                break;
            }
            sweep_start = best_energy;
        }
    }

    let shape = seq.shape();
    Ok(RankPoolSolution {
        image: to_dynamic_image(best_d, shape.width, shape.height, shape.channels)?,
        energy: best_energy,
        iterations,
    })
}

/// Temporal weights `2t − T − 1` for `t = 1..=T`.
pub fn approx_coefficients(len: usize) -> Vec<f64> {
    (1..=len)
        .map(|t| 2.0 * t as f64 - len as f64 - 1.0)
        .collect()
}

/// `Σ_t (2t − T − 1) V_t`, scaled to unit norm. A constant clip gives the zero
/// vector, which renders as uniform mid-gray.
pub fn approx_rank_pool(seq: &FeatureSeq) -> Result<DynamicImage> {
    seq.check_pairs()?;
    let mut d = seq.combine_zero_sum(&approx_coefficients(seq.len()));
    let norm = norm_sq(&d).sqrt();
    if norm > 0.0 {
        d.iter_mut().for_each(|x| *x /= norm);
    }
    let shape = seq.shape();
    to_dynamic_image(d, shape.width, shape.height, shape.channels)
}

/// Pooled vector `d` together with the min-max mapping used to display it.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicImage {
    d: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
    norm_min: f64,
    norm_max: f64,
}

pub fn to_dynamic_image(
    d: Vec<f64>,
    width: usize,
    height: usize,
    channels: usize,
) -> Result<DynamicImage> {
    if d.len() != width * height * channels {
        return Err(Error::Shape(format!(
            "{} values cannot form a {width}x{height}x{channels} image",
            d.len()
        )));
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("pooled vector has non-finite entries".into()));
    }
    let (norm_min, norm_max) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(DynamicImage {
        d,
        width,
        height,
        channels,
        norm_min,
        norm_max,
    })
}

impl DynamicImage {
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn norm_min(&self) -> f64 {
        self.norm_min
    }

    pub fn norm_max(&self) -> f64 {
        self.norm_max
    }

    /// Display values in `[0, 1]`: affine min-max rescale, or 0.5 everywhere for constant `d`.
    pub fn pixels(&self) -> Vec<f64> {
        let range = self.norm_max - self.norm_min;
        if range > 0.0 {
            self.d
                .iter()
                .map(|x| ((x - self.norm_min) / range).clamp(0.0, 1.0))
                .collect()
        } else {
            vec![0.5; self.d.len()]
        }
    }

    pub fn to_frame(&self) -> Result<Frame> {
        Frame::new(self.width, self.height, self.channels, self.pixels())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vectors(rng: &mut crate::rng::Rng, len: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn identical_frames_smooth_to_themselves() {
        let f = vec![0.1, 0.5, 0.9];
        let seq = FeatureSeq::from_vectors(vec![f.clone(); 4], Smoothing::RunningMean).unwrap();
        for v in seq.smoothed() {
            assert_eq!(v, &f);
        }
        let mut rng = rng_from_seed(1);
        let g: Vec<f64> = (0..50).map(|_| rng.gen_range(0.0..1.0)).collect();
        let seq = FeatureSeq::from_vectors(vec![g.clone(); 25], Smoothing::RunningMean).unwrap();
        assert!(seq.smoothed().iter().all(|v| v == &g));
    }

    #[test]
    fn two_frame_running_mean() {
        let seq =
            FeatureSeq::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 3.0]], Smoothing::RunningMean)
                .unwrap();
        assert_eq!(seq.smoothed()[0], vec![1.0, 0.0]);
        assert_eq!(seq.smoothed()[1], vec![0.5, 1.5]);
    }

    #[test]
    fn running_mean_matches_direct_sum() {
        let mut rng = rng_from_seed(3);
        let feats = random_vectors(&mut rng, 3, 16);
        let seq = FeatureSeq::from_vectors(feats.clone(), Smoothing::RunningMean).unwrap();
        for i in 0..16 {
            let brute = (feats[0][i] + feats[1][i] + feats[2][i]) / 3.0;
            assert!((seq.smoothed()[2][i] - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_frames_are_rejected() {
        let a = Frame::filled(2, 2, 1, 0.0).unwrap();
        let b = Frame::filled(2, 3, 1, 0.0).unwrap();
        assert!(matches!(build_feature_seq(&[a, b], Smoothing::Raw), Err(Error::Shape(_))));
        assert!(matches!(
            FeatureSeq::from_vectors(vec![vec![0.0; 2], vec![0.0; 3]], Smoothing::Raw),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn score_examples() {
        let v = [0.3, -1.2, 4.0, 0.5, 2.0];
        assert_eq!(ranking_score(&[0.0; 5], &v).unwrap(), 0.0);
        assert_eq!(ranking_score(&[0.0, 0.0, 1.0, 0.0, 0.0], &v).unwrap(), 4.0);
        let d = [1.5, 0.25, -2.0, 3.0, 0.1];
        let mut by_hand = 0.0;
        for i in 0..5 {
            by_hand += d[i] * v[i];
        }
        assert!((ranking_score(&d, &v).unwrap() - by_hand).abs() < 1e-12);
        assert!(ranking_score(&d[..4], &v).is_err());
    }

    #[test]
    fn energy_examples() {
        let mut rng = rng_from_seed(5);
        let seq = FeatureSeq::from_vectors(random_vectors(&mut rng, 7, 4), Smoothing::RunningMean)
            .unwrap();
        assert_eq!(hinge_energy(&[0.0; 4], &seq, 0.3).unwrap(), 1.0);

        let flat = FeatureSeq::from_vectors(vec![vec![0.2, 0.4]; 5], Smoothing::Raw).unwrap();
        let d = [1.5, -2.0];
        let expected = 0.5 * 0.7 * (1.5f64 * 1.5 + 4.0) + 1.0;
        assert!((hinge_energy(&d, &flat, 0.7).unwrap() - expected).abs() < 1e-12);

        let two = FeatureSeq::from_vectors(vec![vec![0.0], vec![2.0]], Smoothing::Raw).unwrap();
        assert_eq!(hinge_energy(&[1.0], &two, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn single_frame_is_degenerate() {
        let one = FeatureSeq::from_vectors(vec![vec![0.5]], Smoothing::Raw).unwrap();
        assert!(matches!(hinge_energy(&[0.0], &one, 1.0), Err(Error::DegenerateClip(1))));
        assert!(matches!(energy_subgradient(&[0.0], &one, 1.0), Err(Error::DegenerateClip(1))));
        assert!(matches!(approx_rank_pool(&one), Err(Error::DegenerateClip(1))));
        assert!(matches!(
            solve_rank_pool(&one, &RankPoolConfig::default()),
            Err(Error::DegenerateClip(1))
        ));
    }

    #[test]
    fn subgradient_in_flat_region_is_regularizer() {
        let seq = FeatureSeq::from_vectors(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]],
            Smoothing::Raw,
        )
        .unwrap();
        let d = [5.0, 1.0];
        let g = energy_subgradient(&d, &seq, 0.2).unwrap();
        assert_eq!(g, vec![1.0, 0.2]);
    }

    #[test]
    fn subgradient_at_origin_uses_temporal_weights() {
        let mut rng = rng_from_seed(9);
        let len = 6;
        let seq = FeatureSeq::from_vectors(random_vectors(&mut rng, len, 5), Smoothing::RunningMean)
            .unwrap();
        let g = energy_subgradient(&[0.0; 5], &seq, 0.5).unwrap();
        // count how often V_t appears with + and − across pairs q > t
        let scale = 2.0 / (len * (len - 1)) as f64;
        for i in 0..5 {
            let mut expected = 0.0;
            for t in 0..len {
                let plus = (len - 1 - t) as f64;
                let minus = t as f64;
                expected += scale * (plus - minus) * seq.smoothed()[t][i];
            }
            let closed_form: f64 = -scale
                * (1..=len)
                    .map(|t| (2 * t) as f64 - len as f64 - 1.0)
                    .zip(seq.smoothed())
                    .map(|(c, v)| c * v[i])
                    .sum::<f64>();
            assert!((g[i] - expected).abs() < 1e-12);
            assert!((g[i] - closed_form).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_clip_pools_to_zero() {
        let seq = FeatureSeq::from_vectors(vec![vec![0.3, 0.6, 0.9]; 8], Smoothing::RunningMean)
            .unwrap();
        let sol = solve_rank_pool(&seq, &RankPoolConfig::default()).unwrap();
        assert!(sol.image.d().iter().all(|&x| x == 0.0));
        assert_eq!(sol.energy, 1.0);
        let approx = approx_rank_pool(&seq).unwrap();
        assert!(approx.d().iter().all(|&x| x == 0.0));
        assert_eq!(approx.pixels(), vec![0.5; 3]);
    }

    #[test]
    fn one_dimensional_solution_orders_scores() {
        let seq = FeatureSeq::from_vectors(vec![vec![1.0], vec![2.0], vec![3.0]], Smoothing::Raw)
            .unwrap();
        let cfg = RankPoolConfig {
            lambda: 0.01,
            ..RankPoolConfig::default()
        };
        let sol = solve_rank_pool(&seq, &cfg).unwrap();
        let d = sol.image.d()[0];
        assert!(d > 0.0);
        let scores: Vec<f64> = seq.smoothed().iter().map(|v| d * v[0]).collect();
        assert!(scores[0] < scores[1] && scores[1] < scores[2]);

        // grid-search oracle over [-10, 10]
        let grid_min = (0..=20_000)
            .map(|i| -10.0 + i as f64 * 1e-3)
            .map(|x| hinge_energy(&[x], &seq, 0.01).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(sol.energy <= 1.0);
        assert!(sol.energy - grid_min < 1e-2, "{} vs {grid_min}", sol.energy);
    }

    #[test]
    fn approx_weights_for_two_and_three_frames() {
        assert_eq!(approx_coefficients(2), vec![-1.0, 1.0]);
        assert_eq!(approx_coefficients(3), vec![-2.0, 0.0, 2.0]);
        let seq = FeatureSeq::from_vectors(vec![vec![1.0, 2.0], vec![4.0, 6.0]], Smoothing::Raw)
            .unwrap();
        let img = approx_rank_pool(&seq).unwrap();
        assert!((img.d()[0] - 0.6).abs() < 1e-12 && (img.d()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn display_mapping() {
        let img = to_dynamic_image(vec![-1.0, 0.0, 1.0], 3, 1, 1).unwrap();
        assert_eq!(img.pixels(), vec![0.0, 0.5, 1.0]);
        assert_eq!((img.norm_min(), img.norm_max()), (-1.0, 1.0));
        let flat = to_dynamic_image(vec![2.0; 4], 2, 2, 1).unwrap();
        assert_eq!(flat.pixels(), vec![0.5; 4]);
        assert!(matches!(to_dynamic_image(vec![0.0; 5], 2, 2, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn reversing_a_monotone_clip_negates_the_approximation() {
        let u = [0.3, -0.1, 0.8];
        let forward: Vec<Vec<f64>> = (1..=9).map(|t| u.iter().map(|x| x * t as f64).collect()).collect();
        let mut backward = forward.clone();
        backward.reverse();
        let a = approx_rank_pool(&FeatureSeq::from_vectors(forward, Smoothing::Raw).unwrap()).unwrap();
        let b = approx_rank_pool(&FeatureSeq::from_vectors(backward, Smoothing::Raw).unwrap()).unwrap();
        for (x, y) in a.d().iter().zip(b.d()) {
            assert!((x + y).abs() < 1e-12);
        }
    }

    fn argsort(xs: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
        idx
    }

    fn seq_strategy() -> impl Strategy<Value = FeatureSeq> {
        (2usize..10, 1usize..8, any::<u64>()).prop_map(|(len, dim, seed)| {
            let mut rng = rng_from_seed(seed);
            FeatureSeq::from_vectors(random_vectors(&mut rng, len, dim), Smoothing::RunningMean)
                .unwrap()
        })
    }

    proptest! {
        #[test]
        fn energy_is_convex_along_segments(seq in seq_strategy(), seed in any::<u64>(), alpha in 0.0f64..=1.0) {
            let mut rng = rng_from_seed(seed);
            let x: Vec<f64> = (0..seq.dim()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y: Vec<f64> = (0..seq.dim()).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
            let lhs = hinge_energy(&mid, &seq, 0.1).unwrap();
            let rhs = alpha * hinge_energy(&x, &seq, 0.1).unwrap()
                + (1.0 - alpha) * hinge_energy(&y, &seq, 0.1).unwrap();
            prop_assert!(lhs <= rhs + 1e-10);
        }

        #[test]
        fn subgradient_matches_central_differences(seq in seq_strategy(), seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let lambda = 0.05;
            let d: Vec<f64> = (0..seq.dim()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let g = energy_subgradient(&d, &seq, lambda).unwrap();
            let h = 1e-6;
            // skip points within reach of a kink, where the one-sided slopes differ
            let scores: Vec<f64> = seq.smoothed().iter().map(|v| ranking_score(&d, v).unwrap()).collect();
            let reach = 2.0 * h * seq.smoothed().iter().map(|v| v.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
            let near_kink = (0..scores.len()).any(|t| (t + 1..scores.len()).any(|q| (1.0 - scores[q] + scores[t]).abs() < reach));
            prop_assume!(!near_kink);
            for i in 0..seq.dim() {
                let mut plus = d.clone();
                let mut minus = d.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (hinge_energy(&plus, &seq, lambda).unwrap() - hinge_energy(&minus, &seq, lambda).unwrap()) / (2.0 * h);
                let rel = (fd - g[i]).abs() / g[i].abs().max(fd.abs()).max(1e-2);
                prop_assert!(rel < 1e-6, "component {}: fd {} vs {}", i, fd, g[i]);
            }
        }

        #[test]
        fn solver_never_exceeds_origin_energy(seq in seq_strategy()) {
            let sol = solve_rank_pool(&seq, &RankPoolConfig::default()).unwrap();
            prop_assert!(sol.energy <= 1.0);
            prop_assert!((hinge_energy(sol.image.d(), &seq, 1e-3).unwrap() - sol.energy).abs() < 1e-12);
        }

        #[test]
        fn approx_is_scale_invariant(seq in seq_strategy(), scale in 0.01f64..100.0) {
            let scaled: Vec<Vec<f64>> = seq.features().iter().map(|f| f.iter().map(|x| x * scale).collect()).collect();
            let scaled = FeatureSeq::from_vectors(scaled, Smoothing::RunningMean).unwrap();
            let a = approx_rank_pool(&seq).unwrap();
            let b = approx_rank_pool(&scaled).unwrap();
            for (x, y) in a.d().iter().zip(b.d()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn display_rescale_preserves_order(d in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let img = to_dynamic_image(d.clone(), d.len(), 1, 1).unwrap();
            let px = img.pixels();
            for i in 0..d.len() {
                for j in 0..d.len() {
                    if d[i] < d[j] {
                        prop_assert!(px[i] <= px[j]);
                    }
                }
            }
            if img.norm_min() < img.norm_max() {
                prop_assert_eq!(argsort(&d), argsort(&px));
            }
        }
    }
}
