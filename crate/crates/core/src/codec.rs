//! Multi-scale residual vector quantizer.
//!
//! An image is cut into a `G × G` grid of square patches (`G` is the last
//! scale of the schedule). A linear encoder learned by principal component
//! analysis maps each patch to a `D`-dimensional feature. The feature map is
//! then quantized coarse-to-fine: at scale `s` the residual map is averaged
//! over an `s × s` partition of the grid, each block mean is replaced by its
//! nearest codebook entry, and the entry is subtracted from every cell of the
//! block. Decoding a prefix of scales sums the upsampled entries and maps the
//! features back to pixels with the transposed encoder.
//!
//! The partition is a nearest-cell assignment, so upsampling is plain
//! replication and the block mean is the least-squares projection. Codebook
//! entry 0 is pinned to the zero vector. Together these make the residual
//! energy non-increasing from scale to scale for every image.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Image;
use crate::error::{Error, Result};
use crate::hash::sha256_hex;

pub const CODEC_FORMAT_VERSION: u32 = 1;
pub const MIN_TRAINING_IMAGES: usize = 500;

/// Strictly increasing side lengths, one per scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ScaleSchedule(Vec<usize>);

impl ScaleSchedule {
    pub fn new(sides: Vec<usize>) -> Result<Self> {
        if sides.is_empty() || sides[0] == 0 || sides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(format!(
                "scale schedule must be non-empty, positive and strictly increasing: {sides:?}"
            )));
        }
        Ok(Self(sides))
    }

    /// `1, 2, …, n`.
    pub fn linear(n: usize) -> Self {
        Self((1..=n).collect())
    }

    pub fn sides(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn finest(&self) -> usize {
        *self.0.last().expect("non-empty schedule")
    }

    pub fn check_prefix(&self, prefix: usize) -> Result<()> {
        if prefix == 0 || prefix > self.0.len() {
            return Err(Error::PrefixOutOfRange {
                prefix,
                max: self.0.len(),
            });
        }
        Ok(())
    }

    /// Number of tokens in the first `prefix` scales.
    pub fn token_count(&self, prefix: usize) -> usize {
        self.0.iter().take(prefix).map(|s| s * s).sum()
    }
}

impl Default for ScaleSchedule {
    fn default() -> Self {
        Self::linear(4)
    }
}

impl TryFrom<Vec<usize>> for ScaleSchedule {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScaleSchedule> for Vec<usize> {
    fn from(s: ScaleSchedule) -> Self {
        s.0
    }
}

/// Tokens per pixel for the first `prefix` scales of `schedule` on a
/// `image_side × image_side` image.
pub fn compression_ratio(schedule: &ScaleSchedule, prefix: usize, image_side: u64) -> Result<Ratio<u64>> {
    schedule.check_prefix(prefix)?;
    if image_side == 0 {
        return Err(Error::InvalidConfig("image side must be positive".into()));
    }
    Ok(Ratio::new(schedule.token_count(prefix) as u64, image_side * image_side))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub image_size: usize,
    pub schedule: ScaleSchedule,
    /// Codebook entries (K).
    pub codebook_size: usize,
    /// Feature dimension (D).
    pub dim: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            image_size: 16,
            schedule: ScaleSchedule::default(),
            codebook_size: 64,
            dim: 16,
            epochs: 12,
            seed: 0,
        }
    }
}

impl CodecConfig {
    pub fn grid(&self) -> usize {
        self.schedule.finest()
    }

    pub fn patch(&self) -> usize {
        self.image_size / self.grid()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch() * self.patch() * 3
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid();
        if self.image_size == 0 || self.image_size % g != 0 {
            return Err(Error::InvalidConfig(format!(
                "image size {} must be a multiple of the finest scale {g}",
                self.image_size
            )));
        }
        if self.codebook_size < 2 || self.codebook_size > u16::MAX as usize {
            return Err(Error::InvalidConfig("codebook size must be in 2..=65535".into()));
        }
        if self.dim == 0 || self.dim > self.patch_dim() {
            return Err(Error::InvalidConfig(format!(
                "feature dim must be in 1..={}",
                self.patch_dim()
            )));
        }
        Ok(())
    }
}

/// Per-scale index maps of one image, scale-major then row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentPyramid {
    pub scales: Vec<Vec<u16>>,
    pub image_size: usize,
}

impl LatentPyramid {
    /// Indices of the first `prefix` scales in canonical order.
    pub fn flatten(&self, prefix: usize) -> Vec<u16> {
        self.scales.iter().take(prefix).flatten().copied().collect()
    }

    pub fn from_flat(schedule: &ScaleSchedule, tokens: &[u16], image_size: usize) -> Result<Self> {
        let prefix = schedule
            .sides()
            .iter()
            .scan(0, |acc, s| {
                *acc += s * s;
                Some(*acc)
            })
            .position(|n| n == tokens.len())
            .map(|p| p + 1)
            .ok_or_else(|| Error::ShapeMismatch {
                expected: "a whole number of scales".into(),
                got: format!("{} tokens", tokens.len()),
            })?;
        let mut scales = Vec::with_capacity(prefix);
        let mut off = 0;
        for &s in &schedule.sides()[..prefix] {
            scales.push(tokens[off..off + s * s].to_vec());
            off += s * s;
        }
        Ok(Self { scales, image_size })
    }
}

/// Result of encoding with per-scale diagnostics.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub pyramid: LatentPyramid,
    /// Residual energy before scale 1 and after each scale (`S + 1` values).
    pub residual_energy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codec {
    pub config: CodecConfig,
    /// Mean patch, `patch_dim` values.
    pub mean: Vec<f64>,
    /// `dim × patch_dim`, orthonormal rows.
    pub encoder: Vec<f64>,
    /// `codebook_size × dim`; entry 0 is the zero vector.
    pub codebook: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CodecFile {
    version: u32,
    #[serde(flatten)]
    codec: Codec,
}

/// Maps fine grid index `i` to its block at a scale of side `s` on a grid of side `g`.
fn block_of(i: usize, s: usize, g: usize) -> usize {
    i * s / g
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest entry by squared distance; ties go to the lowest index.
pub fn nearest_entry(codebook: &[f64], dim: usize, z: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, entry) in codebook.chunks_exact(dim).enumerate() {
        let d = sq_dist(entry, z);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// One quantization step at a single scale: block means, their weights, and the chosen entries.
struct ScaleStep {
    means: Vec<Vec<f64>>,
    weights: Vec<usize>,
    indices: Vec<u16>,
}

fn quantize_scale(residual: &mut [f64], g: usize, s: usize, dim: usize, codebook: &[f64]) -> ScaleStep {
    let mut means = vec![vec![0.0; dim]; s * s];
    let mut weights = vec![0usize; s * s];
    for r in 0..g {
        for c in 0..g {
            let b = block_of(r, s, g) * s + block_of(c, s, g);
            weights[b] += 1;
            let cell = &residual[(r * g + c) * dim..(r * g + c + 1) * dim];
            for (m, v) in means[b].iter_mut().zip(cell) {
                *m += v;
            }
        }
    }
    for (m, &w) in means.iter_mut().zip(&weights) {
        for v in m.iter_mut() {
            *v /= w as f64;
        }
    }
    let indices: Vec<u16> = means
        .iter()
        .map(|m| nearest_entry(codebook, dim, m).0 as u16)
        .collect();
    for r in 0..g {
        for c in 0..g {
            let b = block_of(r, s, g) * s + block_of(c, s, g);
            let k = indices[b] as usize;
            let entry = &codebook[k * dim..(k + 1) * dim];
            let cell = &mut residual[(r * g + c) * dim..(r * g + c + 1) * dim];
            for (v, e) in cell.iter_mut().zip(entry) {
                *v -= e;
            }
        }
    }
    ScaleStep {
        means,
        weights,
        indices,
    }
}

fn energy(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

impl Codec {
    pub fn grid(&self) -> usize {
        self.config.grid()
    }

    pub fn num_scales(&self) -> usize {
        self.config.schedule.len()
    }

    pub fn codebook_size(&self) -> usize {
        self.config.codebook_size
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        let n = self.config.image_size;
        if image.size != n || image.data.len() != n * n * 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}x3 image"),
                got: format!("{}x{}x3 ({} values)", image.size, image.size, image.data.len()),
            });
        }
        Ok(())
    }

    fn patches(&self, image: &Image) -> Vec<Vec<f64>> {
        let (g, p, n) = (self.grid(), self.config.patch(), self.config.image_size);
        let mut out = Vec::with_capacity(g * g);
        for gr in 0..g {
            for gc in 0..g {
                let mut v = Vec::with_capacity(p * p * 3);
                for y in 0..p {
                    for x in 0..p {
                        let i = ((gr * p + y) * n + gc * p + x) * 3;
                        v.extend(image.data[i..i + 3].iter().map(|&c| c as f64));
                    }
                }
                out.push(v);
            }
        }
        out
    }

    /// Unquantized feature map, `G² × D` row-major.
    pub fn features(&self, image: &Image) -> Result<Vec<f64>> {
        self.check_image(image)?;
        let (d, pd) = (self.config.dim, self.config.patch_dim());
        let mut f = Vec::with_capacity(self.grid() * self.grid() * d);
        for patch in self.patches(image) {
            for row in self.encoder.chunks_exact(pd) {
                f.push(row.iter().zip(&patch).zip(&self.mean).map(|((e, x), m)| e * (x - m)).sum());
            }
        }
        Ok(f)
    }

    pub fn encode(&self, image: &Image) -> Result<LatentPyramid> {
        Ok(self.encode_detailed(image)?.pyramid)
    }

    pub fn encode_detailed(&self, image: &Image) -> Result<Encoding> {
        let mut residual = self.features(image)?;
        let (g, d) = (self.grid(), self.config.dim);
        let mut residual_energy = vec![energy(&residual)];
        let mut scales = Vec::with_capacity(self.num_scales());
        for &s in self.config.schedule.sides() {
            let step = quantize_scale(&mut residual, g, s, d, &self.codebook);
            let e = energy(&residual);
            debug_assert!(
                e <= *residual_energy.last().unwrap(),
                "residual energy increased at scale {s}"
            );
            residual_energy.push(e);
            scales.push(step.indices);
        }
        Ok(Encoding {
            pyramid: LatentPyramid {
                scales,
                image_size: self.config.image_size,
            },
            residual_energy,
        })
    }

    /// Feature map reconstructed from the first `prefix` scales.
    pub fn decode_features(&self, pyramid: &LatentPyramid, prefix: usize) -> Result<Vec<f64>> {
        self.config.schedule.check_prefix(prefix)?;
        if pyramid.scales.len() < prefix {
            return Err(Error::PrefixOutOfRange {
                prefix,
                max: pyramid.scales.len(),
            });
        }
        let (g, d, k) = (self.grid(), self.config.dim, self.config.codebook_size);
        let mut f = vec![0.0; g * g * d];
        for (si, &s) in self.config.schedule.sides()[..prefix].iter().enumerate() {
            let map = &pyramid.scales[si];
            if map.len() != s * s {
                return Err(Error::ShapeMismatch {
                    expected: format!("{s}x{s} index map"),
                    got: format!("{} indices", map.len()),
                });
            }
            for r in 0..g {
                for c in 0..g {
                    let idx = map[block_of(r, s, g) * s + block_of(c, s, g)] as usize;
                    if idx >= k {
                        return Err(Error::UnknownToken {
                            id: idx as u32,
                            size: k,
                        });
                    }
                    let entry = &self.codebook[idx * d..(idx + 1) * d];
                    for (v, e) in f[(r * g + c) * d..(r * g + c + 1) * d].iter_mut().zip(entry) {
                        *v += e;
                    }
                }
            }
        }
        Ok(f)
    }

    /// Pixels from a feature map, clipped to `[0, 1]`.
    pub fn features_to_image(&self, features: &[f64]) -> Image {
        let (g, p, n, d, pd) = (
            self.grid(),
            self.config.patch(),
            self.config.image_size,
            self.config.dim,
            self.config.patch_dim(),
        );
        let mut data = vec![0f32; n * n * 3];
        for gr in 0..g {
            for gc in 0..g {
                let f = &features[(gr * g + gc) * d..(gr * g + gc + 1) * d];
                let mut patch = self.mean.clone();
                for (fi, row) in f.iter().zip(self.encoder.chunks_exact(pd)) {
                    for (v, e) in patch.iter_mut().zip(row) {
                        *v += fi * e;
                    }
                }
                for y in 0..p {
                    for x in 0..p {
                        let src = (y * p + x) * 3;
                        let dst = ((gr * p + y) * n + gc * p + x) * 3;
                        for ch in 0..3 {
                            data[dst + ch] = patch[src + ch].clamp(0.0, 1.0) as f32;
                        }
                    }
                }
            }
        }
        Image { size: n, data }
    }

    pub fn decode(&self, pyramid: &LatentPyramid, prefix: usize) -> Result<Image> {
        let f = self.decode_features(pyramid, prefix)?;
        Ok(self.features_to_image(&f))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&CodecFile {
            version: CODEC_FORMAT_VERSION,
            codec: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CodecFile = serde_json::from_str(s)?;
        if file.version != CODEC_FORMAT_VERSION {
            return Err(Error::Version {
                what: "codec".into(),
                found: file.version,
            });
        }
        let c = file.codec;
        c.config.validate()?;
        let (k, d, pd) = (c.config.codebook_size, c.config.dim, c.config.patch_dim());
        if c.mean.len() != pd || c.encoder.len() != d * pd || c.codebook.len() != k * d {
            return Err(Error::malformed("codec", "parameter shapes do not match config"));
        }
        if c.codebook.iter().any(|v| !v.is_finite()) {
            return Err(Error::malformed("codec", "non-finite codebook entry"));
        }
        Ok(c)
    }

    /// SHA-256 of the canonical checkpoint bytes.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

pub fn mse(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.data.len(), b.data.len());
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.data.len() as f64
}

/// Statistics gathered while training the codebook.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CodecTrainLog {
    /// Mean final residual energy per epoch.
    pub epoch_residual: Vec<f64>,
    pub reseeded: Vec<usize>,
    pub unused_entries: usize,
}

/// Fits the PCA patch encoder, then runs Lloyd iterations of the greedy
/// residual quantizer with dead-entry re-seeding.
pub fn train_codec(images: &[Image], config: &CodecConfig) -> Result<(Codec, CodecTrainLog)> {
    config.validate()?;
    if images.len() < MIN_TRAINING_IMAGES {
        return Err(Error::TooFewImages {
            needed: MIN_TRAINING_IMAGES,
            got: images.len(),
        });
    }
    let (d, pd, k) = (config.dim, config.patch_dim(), config.codebook_size);
    let mut codec = Codec {
        config: config.clone(),
        mean: vec![0.0; pd],
        encoder: vec![0.0; d * pd],
        codebook: vec![0.0; k * d],
    };
    for img in images {
        codec.check_image(img)?;
    }

    // principal components of all patches
    let all_patches: Vec<Vec<f64>> = images.iter().flat_map(|img| codec.patches(img)).collect();
    let count = all_patches.len() as f64;
    let mut mean = vec![0.0; pd];
    for p in &all_patches {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut cov = DMatrix::<f64>::zeros(pd, pd);
    for p in &all_patches {
        let c: Vec<f64> = p.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..pd {
            for j in i..pd {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    for i in 0..pd {
        for j in i..pd {
            let v = cov[(i, j)] / count;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..pd).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    for (row, &col) in order.iter().take(d).enumerate() {
        let v = eig.eigenvectors.column(col);
        // sign convention: largest-magnitude component positive
        let pivot = (0..pd).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a))).unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..pd {
            codec.encoder[row * pd + j] = sign * v[j];
        }
    }
    codec.mean = mean;

    let features: Vec<Vec<f64>> = images.iter().map(|img| codec.features(img)).collect::<Result<_>>()?;
    let g = codec.grid();
    let sides = config.schedule.sides().to_vec();

    // initial entries: distinct block means of the raw feature maps
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: Vec<Vec<f64>> = Vec::new();
    for f in &features {
        let mut scratch = f.clone();
        for &s in &sides {
            let zero = vec![0.0; d];
            pool.extend(quantize_scale(&mut scratch, g, s, d, &zero).means);
        }
    }
    pool.shuffle(&mut rng);
    let mut filled = 1;
    for cand in &pool {
        if filled == k {
            break;
        }
        let dup = codec.codebook[..filled * d].chunks_exact(d).any(|e| e == cand.as_slice());
        if !dup {
            codec.codebook[filled * d..(filled + 1) * d].copy_from_slice(cand);
            filled += 1;
        }
    }

    let mut log = CodecTrainLog::default();
    for _ in 0..config.epochs {
        let mut sums = vec![0.0; k * d];
        let mut weights = vec![0.0f64; k];
        let mut errors: Vec<(f64, Vec<f64>)> = Vec::new();
        let mut final_energy = 0.0;
        for f in &features {
            let mut residual = f.clone();
            for &s in &sides {
                let step = quantize_scale(&mut residual, g, s, d, &codec.codebook);
                for ((m, &w), &idx) in step.means.iter().zip(&step.weights).zip(&step.indices) {
                    let idx = idx as usize;
                    let w = w as f64;
                    weights[idx] += w;
                    for (acc, v) in sums[idx * d..(idx + 1) * d].iter_mut().zip(m) {
                        *acc += w * v;
                    }
                    let err = w * sq_dist(m, &codec.codebook[idx * d..(idx + 1) * d]);
                    errors.push((err, m.clone()));
                }
            }
            final_energy += energy(&residual);
        }
        log.epoch_residual.push(final_energy / features.len() as f64);

        let mut dead = Vec::new();
        for e in 1..k {
            if weights[e] > 0.0 {
                for j in 0..d {
                    codec.codebook[e * d + j] = sums[e * d + j] / weights[e];
                }
            } else {
                dead.push(e);
            }
        }
        errors.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut reseeded = 0;
        let mut cands = errors.into_iter().filter(|(err, _)| *err > 0.0);
        for e in dead {
            if let Some((_, z)) = cands.next() {
                codec.codebook[e * d..(e + 1) * d].copy_from_slice(&z);
                reseeded += 1;
            }
        }
        log.reseeded.push(reseeded);
    }

    let mut used = vec![false; k];
    for img in images {
        for map in codec.encode(img)?.scales {
            for idx in map {
                used[idx as usize] = true;
            }
        }
    }
    let unused = used.iter().filter(|u| !**u).count();
    log.unused_entries = unused;
    if unused * 2 > k {
        return Err(Error::CodebookCollapse { unused, total: k });
    }
    Ok((codec, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noisy_images(n: usize, seed: u64) -> Vec<Image> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let base: [f32; 3] = [rng.random(), rng.random(), rng.random()];
                let mut img = Image::filled(16, base);
                // a random colored block
                let (r0, c0) = (rng.random_range(0..12), rng.random_range(0..12));
                let rgb: [f32; 3] = [rng.random(), rng.random(), rng.random()];
                for r in r0..r0 + 4 {
                    for c in c0..c0 + 4 {
                        let i = (r * 16 + c) * 3;
                        img.data[i..i + 3].copy_from_slice(&rgb);
                    }
                }
                img
            })
            .collect()
    }

    #[test]
    fn schedule_token_counts() {
        let s = ScaleSchedule::default();
        assert_eq!(s.token_count(4), 30);
        assert_eq!(s.token_count(1), 1);
        assert!(ScaleSchedule::new(vec![1, 3, 3]).is_err());
        assert!(s.check_prefix(0).is_err());
        assert!(s.check_prefix(5).is_err());
    }

    #[test]
    fn ratio_for_reference_resolution() {
        let r = compression_ratio(&ScaleSchedule::default(), 4, 256).unwrap();
        assert_eq!(r, Ratio::new(30, 65536));
        let recip = 65536.0 / 30.0;
        assert_eq!((recip as f64).round(), 2185.0);
        assert_eq!(compression_ratio(&ScaleSchedule::default(), 4, 16).unwrap(), Ratio::new(30, 256));
    }

    #[test]
    fn too_few_images() {
        let imgs = noisy_images(10, 0);
        assert!(matches!(
            train_codec(&imgs, &CodecConfig::default()),
            Err(Error::TooFewImages { .. })
        ));
    }

    #[test]
    fn encode_shapes_and_residual_energy() {
        let imgs = noisy_images(600, 1);
        let (codec, _) = train_codec(&imgs, &CodecConfig { epochs: 4, ..Default::default() }).unwrap();
        for img in imgs.iter().take(50) {
            let enc = codec.encode_detailed(img).unwrap();
            let shapes: Vec<usize> = enc.pyramid.scales.iter().map(Vec::len).collect();
            assert_eq!(shapes, vec![1, 4, 9, 16]);
            assert_eq!(enc.pyramid.flatten(4).len(), 30);
            assert!(enc.residual_energy.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(codec.encode(img).unwrap(), enc.pyramid);
        }
        let wrong = Image::filled(8, [0.0; 3]);
        assert!(matches!(codec.encode(&wrong), Err(Error::ShapeMismatch { .. })));
        let p = codec.encode(&imgs[0]).unwrap();
        assert!(matches!(codec.decode(&p, 0), Err(Error::PrefixOutOfRange { .. })));
        assert!(matches!(codec.decode(&p, 5), Err(Error::PrefixOutOfRange { .. })));
        assert_eq!(LatentPyramid::from_flat(&codec.config.schedule, &p.flatten(4), 16).unwrap(), p);
    }

    #[test]
    fn checkpoint_round_trip_is_byte_stable() {
        let imgs = noisy_images(520, 2);
        let cfg = CodecConfig { epochs: 2, ..Default::default() };
        let (a, _) = train_codec(&imgs, &cfg).unwrap();
        let (b, _) = train_codec(&imgs, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = Codec::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_json().unwrap(), a.to_json().unwrap());
    }
}
