//! Clip windowing, labeled manifests, stratified splits, k-fold indices, and
//! the synthetic clip generator used in place of real barn footage.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{CropRect, Frame};
use crate::rng::{derive_seed, rng_from_seed};

/// Frame rate of synthetic clips; about 243 frames per minute of footage.
pub const SYNTH_FPS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Ruminating,
    Other,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Ruminating, Label::Other];

    /// Output index in the classifier; `Ruminating` is the positive class.
    pub fn class_index(self) -> usize {
        match self {
            Label::Other => 0,
            Label::Ruminating => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Label {
        if i == 1 {
            Label::Ruminating
        } else {
            Label::Other
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// One manifest record: a window of `T` frames from one source directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledClip {
    pub source_id: String,
    pub start: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub label: Label,
    #[serde(default)]
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropRect>,
    /// Augmentation variant; 0 is the unmodified clip.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub aug: u32,
}

fn is_zero(x: &u32) -> bool {
    *x == 0
}

impl LabeledClip {
    /// Identifies the underlying window, shared by all augmented copies.
    pub fn base_key(&self) -> String {
        format!("{}_{:06}", self.source_id, self.start)
    }

    /// Unique file stem for this entry's pooled outputs.
    pub fn key(&self) -> String {
        format!("{}_a{}", self.base_key(), self.aug)
    }

    pub fn frame_range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<LabeledClip>,
    pub t: usize,
    pub multiplier: u32,
}

impl Manifest {
    pub fn new(entries: Vec<LabeledClip>, t: usize) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| e.t != t) {
            return Err(Error::Data(format!(
                "entry {} has T = {}, manifest T = {t}",
                e.key(),
                e.t
            )));
        }
        let multiplier = entries.iter().map(|e| e.aug + 1).max().unwrap_or(1);
        Ok(Manifest {
            entries,
            t,
            multiplier,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&i| self.entries[i].split == split)
            .collect()
    }

    pub fn read_jsonl(path: &Path) -> Result<Manifest> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LabeledClip = serde_json::from_str(&line).map_err(|e| {
                Error::Data(format!("{} line {}: {e}", path.display(), n + 1))
            })?;
            entries.push(entry);
        }
        let t = entries.first().map_or(0, |e| e.t);
        Manifest::new(entries, t)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for e in &self.entries {
            let line = serde_json::to_string(e).map_err(|e| Error::json(path, e))?;
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Expands every entry into `multiplier` augmentation variants that keep its split.
    pub fn augmented(&self, multiplier: u32) -> Result<Manifest> {
        if multiplier == 0 {
            return Err(Error::Param("augmentation multiplier must be at least 1".into()));
        }
        let entries = self
            .entries
            .iter()
            .filter(|e| e.aug == 0)
            .flat_map(|e| {
                (0..multiplier).map(move |aug| LabeledClip {
                    aug,
                    ..e.clone()
                })
            })
            .collect();
        Manifest::new(entries, self.t)
    }
}

/// Start offsets of every complete window; trailing partial windows are dropped.
pub fn window(frame_count: usize, t: usize, stride: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if t < 2 {
        return Err(Error::Param(format!("window length T must be at least 2, got {t}")));
    }
    if stride == 0 {
        return Err(Error::Param("stride must be at least 1".into()));
    }
    Ok((0..)
        .map(|i| i * stride)
        .take_while(|s| s + t <= frame_count)
        .map(|s| s..s + t)
        .collect())
}

/// Stratified, seeded train/test assignment with `|test| = round(test_fraction × N)`.
///
/// Augmented copies of one window always land in the same split; `N` counts
/// distinct windows.
pub fn split_manifest(m: &Manifest, test_fraction: f64, seed: u64) -> Result<Manifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Param(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let groups = group_windows(m);
    let n = groups.len();
    let mut by_label: BTreeMap<Label, Vec<&str>> = BTreeMap::new();
    for (key, label) in &groups {
        by_label.entry(*label).or_default().push(key.as_str());
    }
    for (label, keys) in &by_label {
        if keys.len() < 2 {
            return Err(Error::Stratify(format!(
                "class {label:?} has {} clip(s); at least 2 are needed to appear in both splits",
                keys.len()
            )));
        }
    }

    let target = (test_fraction * n as f64).round() as usize;
    let sizes: Vec<usize> = by_label.values().map(Vec::len).collect();
    let quotas = stratified_quotas(&sizes, test_fraction, target);

    let mut test_keys = std::collections::HashSet::new();
    for ((label, keys), quota) in by_label.iter().zip(quotas) {
        let mut keys = keys.clone();
        let mut rng = rng_from_seed(derive_seed(seed, "split", label.class_index() as u64));
        keys.shuffle(&mut rng);
        test_keys.extend(keys.into_iter().take(quota).map(str::to_owned));
    }

    let entries = m
        .entries
        .iter()
        .map(|e| LabeledClip {
            split: if test_keys.contains(&e.base_key()) {
                Split::Test
            } else {
                Split::Train
            },
            ..e.clone()
        })
        .collect();
    Ok(Manifest {
        entries,
        t: m.t,
        multiplier: m.multiplier,
    })
}

/// Distinct windows in first-seen order with their labels.
fn group_windows(m: &Manifest) -> Vec<(String, Label)> {
    let mut seen = std::collections::HashSet::new();
    m.entries
        .iter()
        .filter(|e| seen.insert(e.base_key()))
        .map(|e| (e.base_key(), e.label))
        .collect()
}

/// Largest-remainder allocation of `target` test slots across classes, keeping
/// at least one clip of each class on both sides.
fn stratified_quotas(sizes: &[usize], fraction: f64, target: usize) -> Vec<usize> {
    let exact: Vec<f64> = sizes.iter().map(|&s| s as f64 * fraction).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut assigned: usize = quotas.iter().sum();
    for &i in order.iter().cycle().take(order.len() * 2) {
        if assigned >= target {
            break;
        }
        if quotas[i] < sizes[i] - 1 {
            quotas[i] += 1;
            assigned += 1;
        }
    }
    for (q, &s) in quotas.iter_mut().zip(sizes) {
        *q = (*q).clamp(1, s - 1);
    }
    let mut total: usize = quotas.iter().sum();
    while total > target {
        match order.iter().rev().find(|&&i| quotas[i] > 1) {
            Some(&i) => {
                quotas[i] -= 1;
                total -= 1;
            }
            None => break,
        }
    }
    while total < target {
        match order.iter().find(|&&i| quotas[i] < sizes[i] - 1) {
            Some(&i) => {
                quotas[i] += 1;
                total += 1;
            }
            None => break,
        }
    }
    quotas
}

/// Seeded partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Param(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::Param(format!("cannot split {n} items into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from_seed(derive_seed(seed, "kfold", 0)));
    let (q, r) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut rest = idx.as_slice();
    for f in 0..k {
        let (head, tail) = rest.split_at(q + usize::from(f < r));
        let mut fold = head.to_vec();
        fold.sort_unstable();
        folds.push(fold);
        rest = tail;
    }
    Ok(folds)
}

/// Like [`kfold_indices`], but deals each class round-robin so every fold sees
/// both classes whenever a class has at least `k` members.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Param(format!("k must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(Error::Param(format!(
            "cannot split {} items into {k} folds",
            labels.len()
        )));
    }
    let mut dealt = Vec::with_capacity(labels.len());
    for label in Label::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        members.shuffle(&mut rng_from_seed(derive_seed(
            seed,
            "stratified-kfold",
            label.class_index() as u64,
        )));
        dealt.extend(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (j, i) in dealt.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Patch oscillating in place, labeled `Ruminating`.
    Periodic,
    /// Patch translating monotonically, labeled `Other`.
    Drift,
    /// Fixed content with pixel noise only, labeled `Other`.
    Static,
}

impl SynthKind {
    pub fn label(self) -> Label {
        match self {
            SynthKind::Periodic => Label::Ruminating,
            SynthKind::Drift | SynthKind::Static => Label::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::Periodic => "periodic",
            SynthKind::Drift => "drift",
            SynthKind::Static => "static",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthStyle {
    /// Standard deviation of independent per-pixel Gaussian noise.
    pub noise: f64,
    pub channels: usize,
}

impl Default for SynthStyle {
    fn default() -> Self {
        SynthStyle {
            noise: 0.02,
            channels: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthClip {
    pub frames: Vec<Frame>,
    pub label: Label,
    /// Patch center `(x, y)` per frame.
    pub centers: Vec<(f64, f64)>,
    pub radius: f64,
    /// Oscillation period in frames, for `Periodic` clips.
    pub period: Option<usize>,
}

impl SynthClip {
    /// Pixels covered by the patch in at least one frame, row-major `width × height`.
    pub fn path_mask(&self) -> Vec<bool> {
        let f = &self.frames[0];
        let (w, h) = (f.width(), f.height());
        let mut mask = vec![false; w * h];
        for &(cx, cy) in &self.centers {
            for y in 0..h {
                for x in 0..w {
                    if disc_alpha(x, y, cx, cy, self.radius) > 0.0 {
                        mask[y * w + x] = true;
                    }
                }
            }
        }
        mask
    }
}

pub fn synth_clip(kind: SynthKind, t: usize, width: usize, height: usize, seed: u64) -> Result<SynthClip> {
    synth_clip_with(kind, t, width, height, seed, &SynthStyle::default())
}

fn disc_alpha(x: usize, y: usize, cx: f64, cy: f64, r: f64) -> f64 {
    let dist = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
    (r + 0.5 - dist).clamp(0.0, 1.0)
}

fn gaussian(rng: &mut crate::rng::Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

pub fn synth_clip_with(
    kind: SynthKind,
    t: usize,
    width: usize,
    height: usize,
    seed: u64,
    style: &SynthStyle,
) -> Result<SynthClip> {
    if t < 2 {
        return Err(Error::Param(format!("synthetic clips need T >= 2, got {t}")));
    }
    if width < 8 || height < 8 {
        return Err(Error::Param(format!(
            "synthetic frames must be at least 8x8, got {width}x{height}"
        )));
    }
    if style.channels != 1 && style.channels != 3 {
        return Err(Error::Param(format!("channels must be 1 or 3, got {}", style.channels)));
    }
    if !(style.noise >= 0.0) {
        return Err(Error::Param(format!("noise must be non-negative, got {}", style.noise)));
    }
    let mut rng = rng_from_seed(derive_seed(seed, kind.name(), t as u64));
    let c = style.channels;
    let (wf, hf) = (width as f64, height as f64);
    let side = wf.min(hf);
    let radius = (side / 8.0).max(1.5);

    // background: two-tone gradient with a low-frequency ripple
    let bg_a: Vec<f64> = (0..c).map(|_| rng.gen_range(0.15..0.45)).collect();
    let bg_b: Vec<f64> = (0..c).map(|_| rng.gen_range(0.15..0.45)).collect();
    let ripple = rng.gen_range(0.5..2.0);
    let mut background = Vec::with_capacity(width * height * c);
    for y in 0..height {
        for x in 0..width {
            let s = x as f64 / wf;
            let wave = 0.05 * (2.0 * PI * ripple * (x as f64 + y as f64) / side).sin();
            for ch in 0..c {
                background.push((bg_a[ch] * (1.0 - s) + bg_b[ch] * s + wave).clamp(0.0, 1.0));
            }
        }
    }
    let patch: Vec<f64> = (0..c).map(|_| rng.gen_range(0.7..0.95)).collect();

    let margin = radius + 1.0;
    let point = |rng: &mut crate::rng::Rng| {
        (
            rng.gen_range(margin..wf - margin),
            rng.gen_range(margin..hf - margin),
        )
    };
    let near_center = |rng: &mut crate::rng::Rng| {
        (
            wf * (0.5 + rng.gen_range(-0.1..0.1)),
            hf * (0.5 + rng.gen_range(-0.1..0.1)),
        )
    };
    let mut period = None;
    let centers: Vec<(f64, f64)> = match kind {
        SynthKind::Periodic => {
            // 1-2 s per cycle
            let p = rng.gen_range((SYNTH_FPS as usize)..=(2 * SYNTH_FPS as usize));
            period = Some(p);
            let amp = (side / 10.0).max(1.0);
            let angle = rng.gen_range(0.0..2.0 * PI);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let (cx, cy) = near_center(&mut rng);
            (0..t)
                .map(|i| {
                    let s = amp * (2.0 * PI * (i % p) as f64 / p as f64 + phase).sin();
                    (cx + s * angle.cos(), cy + s * angle.sin())
                })
                .collect()
        }
        SynthKind::Drift => {
            let start = point(&mut rng);
            let mut end = point(&mut rng);
            let mut tries = 0;
            while ((end.0 - start.0).powi(2) + (end.1 - start.1).powi(2)).sqrt() < 0.4 * side
                && tries < 100
            {
                end = point(&mut rng);
                tries += 1;
            }
            (0..t)
                .map(|i| {
                    let a = i as f64 / (t - 1) as f64;
                    (start.0 + a * (end.0 - start.0), start.1 + a * (end.1 - start.1))
                })
                .collect()
        }
        SynthKind::Static => vec![near_center(&mut rng); t],
    };

    let frames = centers
        .iter()
        .map(|&(cx, cy)| {
            let mut px = background.clone();
            for y in 0..height {
                for x in 0..width {
                    let a = disc_alpha(x, y, cx, cy, radius);
                    if a > 0.0 {
                        for ch in 0..c {
                            let i = (y * width + x) * c + ch;
                            px[i] = px[i] * (1.0 - a) + patch[ch] * a;
                        }
                    }
                }
            }
            if style.noise > 0.0 {
                for p in &mut px {
                    *p += style.noise * gaussian(&mut rng);
                }
            }
            Frame::from_clamped(width, height, c, px)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SynthClip {
        frames,
        label: kind.label(),
        centers,
        radius,
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rankpool::{approx_rank_pool, build_feature_seq, solve_rank_pool, RankPoolConfig, Smoothing};
    use proptest::prelude::*;

    fn clip(source: &str, start: usize, label: Label) -> LabeledClip {
        LabeledClip {
            source_id: source.into(),
            start,
            t: 25,
            label,
            split: Split::Train,
            crop: None,
            aug: 0,
        }
    }

    fn manifest(pos: usize, neg: usize) -> Manifest {
        let entries = (0..pos)
            .map(|i| clip(&format!("r{i}"), 0, Label::Ruminating))
            .chain((0..neg).map(|i| clip(&format!("o{i}"), 0, Label::Other)))
            .collect();
        Manifest::new(entries, 25).unwrap()
    }

    #[test]
    fn window_examples() {
        assert_eq!(window(100, 100, 100).unwrap().len(), 1);
        assert_eq!(window(243, 25, 25).unwrap().len(), 9);
        assert!(window(50, 100, 100).unwrap().is_empty());
        assert_eq!(window(10, 4, 3).unwrap(), vec![0..4, 3..7, 6..10]);
        assert!(window(10, 1, 1).is_err());
        assert!(window(10, 2, 0).is_err());
    }

    proptest! {
        #[test]
        fn window_count_formula(count in 0usize..500, t in 2usize..60, stride in 1usize..60) {
            let n = window(count, t, stride).unwrap().len();
            let expected = if count >= t { (count - t) / stride + 1 } else { 0 };
            prop_assert_eq!(n, expected);
        }

        #[test]
        fn folds_partition(n in 2usize..300, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let folds = kfold_indices(n, k, seed).unwrap();
            prop_assert_eq!(folds.len(), k);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn split_sizes_and_ratio(pos in 2usize..200, neg in 2usize..200, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let m = split_manifest(&manifest(pos, neg), frac, seed).unwrap();
            let n = pos + neg;
            let test = m.indices_in(Split::Test);
            let target = (frac * n as f64).round() as usize;
            let per_class = |label| test.iter().filter(|&&i| m.entries[i].label == label).count();
            let (tp, tn) = (per_class(Label::Ruminating), per_class(Label::Other));
            prop_assert!(tp >= 1 && tp < pos && tn >= 1 && tn < neg);
            // the ±1 ratio rule only binds when the clamp to both splits is not active
            let ep = frac * pos as f64;
            let en = frac * neg as f64;
            if ep >= 1.0 && ep <= (pos - 1) as f64 && en >= 1.0 && en <= (neg - 1) as f64 {
                prop_assert_eq!(test.len(), target);
                prop_assert!((tp as f64 - ep).abs() <= 1.0);
                prop_assert!((tn as f64 - en).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn split_matches_reported_sizes() {
        let m = split_manifest(&manifest(515, 500), 0.21, 1).unwrap();
        assert_eq!(m.indices_in(Split::Test).len(), 213);
        let m = split_manifest(&manifest(130, 124), 0.21, 1).unwrap();
        assert_eq!(m.indices_in(Split::Test).len(), 53);
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_manifest(&manifest(20, 30), 0.3, 9).unwrap();
        let b = split_manifest(&manifest(20, 30), 0.3, 9).unwrap();
        let c = split_manifest(&manifest(20, 30), 0.3, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_needs_two_per_class() {
        assert!(matches!(
            split_manifest(&manifest(1, 10), 0.2, 0),
            Err(Error::Stratify(_))
        ));
        assert!(split_manifest(&manifest(3, 3), 0.0, 0).is_err());
    }

    #[test]
    fn augmented_copies_share_split() {
        let m = split_manifest(&manifest(10, 10), 0.3, 2).unwrap();
        let aug = m.augmented(3).unwrap();
        assert_eq!(aug.len(), 60);
        assert_eq!(aug.multiplier, 3);
        for chunk in aug.entries.chunks(3) {
            assert!(chunk.iter().all(|e| e.split == chunk[0].split));
            assert_eq!(chunk.iter().map(|e| e.aug).collect::<Vec<_>>(), vec![0, 1, 2]);
        }
        let resplit = split_manifest(&aug, 0.3, 2).unwrap();
        assert_eq!(resplit.indices_in(Split::Test).len(), 3 * m.indices_in(Split::Test).len());
    }

    #[test]
    fn manifest_round_trips_through_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut m = split_manifest(&manifest(3, 4), 0.3, 0).unwrap();
        m.entries[0].crop = Some(CropRect::new(1, 2, 3, 4));
        m.write_jsonl(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains("\"crop\":[1,2,3,4]"));
        assert!(text.contains("\"T\":25"));
        assert_eq!(Manifest::read_jsonl(&path).unwrap(), m);
    }

    #[test]
    fn manifest_rejects_mixed_t() {
        let mut a = clip("a", 0, Label::Other);
        a.t = 50;
        assert!(Manifest::new(vec![clip("b", 0, Label::Other), a], 25).is_err());
    }

    #[test]
    fn kfold_examples() {
        let folds = kfold_indices(10, 10, 0).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let folds = kfold_indices(213, 10, 0).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 22).count(), 3);
        assert_eq!(sizes.iter().filter(|&&s| s == 21).count(), 7);
        assert_eq!(kfold_indices(50, 5, 3).unwrap(), kfold_indices(50, 5, 3).unwrap());
        assert!(kfold_indices(3, 5, 0).is_err());
    }

    #[test]
    fn stratified_folds_hold_both_classes() {
        let labels: Vec<Label> = (0..60)
            .map(|i| if i % 2 == 0 { Label::Ruminating } else { Label::Other })
            .collect();
        let folds = stratified_kfold(&labels, 10, 4).unwrap();
        for f in &folds {
            assert_eq!(f.len(), 6);
            assert!(f.iter().any(|&i| labels[i] == Label::Ruminating));
            assert!(f.iter().any(|&i| labels[i] == Label::Other));
        }
    }

    #[test]
    fn static_clip_without_noise_is_constant() {
        let style = SynthStyle {
            noise: 0.0,
            channels: 3,
        };
        let c = synth_clip_with(SynthKind::Static, 10, 16, 12, 5, &style).unwrap();
        assert_eq!(c.label, Label::Other);
        assert!(c.frames.iter().all(|f| f == &c.frames[0]));
        let seq = build_feature_seq(&c.frames, Smoothing::RunningMean).unwrap();
        let img = solve_rank_pool(&seq, &RankPoolConfig::default()).unwrap().image;
        assert!(img.pixels().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn periodic_clip_repeats_each_period() {
        let noise = 0.01;
        let style = SynthStyle { noise, channels: 3 };
        let c = synth_clip_with(SynthKind::Periodic, 30, 24, 24, 8, &style).unwrap();
        assert_eq!(c.label, Label::Ruminating);
        let p = c.period.unwrap();
        assert!((4..=8).contains(&p));
        let n = c.frames[0].len() as f64;
        // independent noise in both frames: difference std is noise·√2 per pixel
        let bound = 3.0 * noise * (2.0 * n).sqrt();
        for t in 0..30 - p {
            let l2 = c.frames[t]
                .pixels()
                .iter()
                .zip(c.frames[t + p].pixels())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(l2 < bound, "t={t} l2={l2} bound={bound}");
        }
        // one patch position is not the next: the clip actually moves
        assert_ne!(c.frames[0], c.frames[1]);
    }

    #[test]
    fn drift_energy_follows_the_path() {
        let style = SynthStyle {
            noise: 0.0,
            channels: 3,
        };
        let c = synth_clip_with(SynthKind::Drift, 25, 32, 32, 11, &style).unwrap();
        let seq = build_feature_seq(&c.frames, Smoothing::RunningMean).unwrap();
        let img = approx_rank_pool(&seq).unwrap();
        let mask = c.path_mask();
        let mag: Vec<f64> = img
            .d()
            .chunks(3)
            .map(|px| px.iter().map(|x| x.abs()).sum())
            .collect();
        let mut order: Vec<usize> = (0..mag.len()).collect();
        order.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]));
        let top = &order[..mag.len() / 10];
        let total: f64 = top.iter().map(|&i| mag[i]).sum();
        let inside: f64 = top.iter().filter(|&&i| mask[i]).map(|&i| mag[i]).sum();
        assert!(inside / total > 0.5);
    }

    #[test]
    fn synth_is_deterministic_and_validates() {
        let a = synth_clip(SynthKind::Drift, 5, 16, 16, 1).unwrap();
        let b = synth_clip(SynthKind::Drift, 5, 16, 16, 1).unwrap();
        assert_eq!(a, b);
        assert!(synth_clip(SynthKind::Drift, 1, 16, 16, 1).is_err());
        assert!(synth_clip(SynthKind::Drift, 5, 4, 16, 1).is_err());
    }
}
