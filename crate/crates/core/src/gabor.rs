//! Gabor filter bank and the difference-response appearance tensor.
//!
//! Each sequence is resampled to a fixed number of frames, every frame is
//! filtered by the bank, and the neutral (first) frame's magnitude stack is
//! subtracted from the later frames. The result is an order-4 tensor with
//! modes rows x cols x kernel x time.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Grayscale image, row-major, intensities nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} image with {} pixels",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r, c)))
            .map(|(r, c)| f(r, c))
            .collect();
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Mean over non-overlapping `factor x factor` blocks; trailing rows and
    /// columns that do not fill a block are dropped.
    pub fn block_average(&self, factor: usize) -> Result<Image> {
        if factor == 0 || factor > self.rows || factor > self.cols {
            return Err(Error::InvalidArgument(format!(
                "downsampling factor {factor} for a {}x{} image",
                self.rows, self.cols
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (rows, cols) = (self.rows / factor, self.cols / factor);
        let norm = (factor * factor) as f64;
        Image::from_fn(rows, cols, |r, c| {
            let mut s = 0.0;
            for i in 0..factor {
                for j in 0..factor {
                    s += self.get(r * factor + i, c * factor + j);
                }
            }
            s / norm
        })
    }

    /// Reads an 8-bit grayscale PGM and scales it to `[0, 1]`.
    pub fn read_pgm(path: &Path) -> Result<Image> {
        let img = image::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .to_luma8();
        let (cols, rows) = img.dimensions();
        let data = img.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
        Image::new(rows as usize, cols as usize, data)
    }

    /// Writes a binary (P5) 8-bit PGM, clamping to `[0, 1]` before quantizing.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let bytes = self.to_u8();
        let file = std::fs::File::create(path)?;
        PnmEncoder::new(std::io::BufWriter::new(file))
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(&bytes, self.cols as u32, self.rows as u32, ExtendedColorType::L8)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Ordered frames of equal size; the first frame is the neutral face.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    frames: Vec<Image>,
}

impl ImageSequence {
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a sequence needs at least two frames, got {}",
                frames.len()
            )));
        }
        let (r, c) = (frames[0].rows, frames[0].cols);
        if frames.iter().any(|f| f.rows != r || f.cols != c) {
            return Err(Error::DimensionMismatch("frames differ in size".into()));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.frames[0].rows
    }

    pub fn cols(&self) -> usize {
        self.frames[0].cols
    }

    /// Loads every `*.pgm` in `dir`, ordered by the number in the file name.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<(u64, PathBuf)> = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("pgm") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
            let index = digits
                .parse()
                .map_err(|_| Error::Format(format!("no frame number in {}", path.display())))?;
            files.push((index, path));
        }
        files.sort();
        let frames = files
            .iter()
            .map(|(_, p)| Image::read_pgm(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(frames)
    }

    /// Writes frames as `frame_001.pgm`, `frame_002.pgm`, ...
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, f) in self.frames.iter().enumerate() {
            f.write_pgm(&dir.join(format!("frame_{:03}.pgm", i + 1)))?;
        }
        Ok(())
    }
}

/// One complex kernel on a `(2 * radius + 1)^2` square support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborKernel {
    pub orientation: f64,
    pub wavelength: f64,
    pub sigma: f64,
    pub radius: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl GaborKernel {
    /// Builds a kernel whose envelope is truncated at three standard
    /// deviations. The carrier's envelope-weighted mean is removed so both
    /// parts sum to zero; the kernel is then scaled to unit L2 norm.
    pub fn new(orientation: f64, wavelength: f64, sigma: f64) -> Result<Self> {
        if !(wavelength > 0.0 && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength {wavelength} and sigma {sigma} must be positive"
            )));
        }
        let radius = (3.0 * sigma).ceil() as usize;
        let size = 2 * radius + 1;
        let (cos_t, sin_t) = (orientation.cos(), orientation.sin());
        let mut env = Vec::with_capacity(size * size);
        let mut phase = Vec::with_capacity(size * size);
        for dy in -(radius as i64)..=radius as i64 {
            for dx in -(radius as i64)..=radius as i64 {
                let (x, y) = (dx as f64, dy as f64);
                env.push((-(x * x + y * y) / (2.0 * sigma * sigma)).exp());
                phase.push(2.0 * PI * (x * cos_t + y * sin_t) / wavelength);
            }
        }
        let env_sum: f64 = env.iter().sum();
        let mean_re = env.iter().zip(&phase).map(|(e, p)| e * p.cos()).sum::<f64>() / env_sum;
        let mean_im = env.iter().zip(&phase).map(|(e, p)| e * p.sin()).sum::<f64>() / env_sum;
        let mut re: Vec<f64> = env.iter().zip(&phase).map(|(e, p)| e * (p.cos() - mean_re)).collect();
        let mut im: Vec<f64> = env.iter().zip(&phase).map(|(e, p)| e * (p.sin() - mean_im)).collect();
        let l2 = re.iter().chain(&im).map(|v| v * v).sum::<f64>().sqrt();
        re.iter_mut().chain(im.iter_mut()).for_each(|v| *v /= l2);
        Ok(Self {
            orientation,
            wavelength,
            sigma,
            radius,
            re,
            im,
        })
    }

    pub fn size(&self) -> usize {
        2 * self.radius + 1
    }

    /// Kernel value at offset `(dy, dx)` from the centre.
    pub fn at(&self, dy: i64, dx: i64) -> (f64, f64) {
        let r = self.radius as i64;
        let i = ((dy + r) * (2 * r + 1) + dx + r) as usize;
        (self.re[i], self.im[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborBank {
    pub kernels: Vec<GaborKernel>,
}

/// Envelope width relative to the wavelength.
pub const SIGMA_PER_WAVELENGTH: f64 = 0.56;

impl GaborBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.kernels.iter().map(GaborKernel::size).max().unwrap_or(0)
    }
}

/// `orientations` evenly spaced angles in `[0, pi)` times `scales`
/// wavelengths `base_wavelength * sqrt(2)^s`. Kernels are ordered by scale,
/// then orientation.
pub fn make_bank(orientations: usize, scales: usize, base_wavelength: f64) -> Result<GaborBank> {
    if orientations == 0 || scales == 0 || !(base_wavelength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bank needs positive parameters, got {orientations} orientations, \
             {scales} scales, base wavelength {base_wavelength}"
        )));
    }
    let mut kernels = Vec::with_capacity(orientations * scales);
    for s in 0..scales {
        let wavelength = base_wavelength * 2f64.sqrt().powi(s as i32);
        for o in 0..orientations {
            let theta = PI * o as f64 / orientations as f64;
            kernels.push(GaborKernel::new(
                theta,
                wavelength,
                SIGMA_PER_WAVELENGTH * wavelength,
            )?);
        }
    }
    Ok(GaborBank { kernels })
}

/// Magnitude of the convolution of `image` with every kernel of `bank`.
///
/// Pixels outside the image repeat the nearest edge pixel, so a constant
/// image produces an all-zero response.
pub fn response(image: &Image, bank: &GaborBank) -> Result<Vec<Image>> {
    let size = bank.max_size();
    if size > image.rows || size > image.cols {
        return Err(Error::KernelTooLarge {
            kernel_rows: size,
            kernel_cols: size,
            rows: image.rows,
            cols: image.cols,
        });
    }
    let pad = size / 2;
    let padded = pad_replicate(image, pad);
    let pcols = image.cols + 2 * pad;
    bank.kernels
        .iter()
        .map(|k| {
            let (rows, cols) = (image.rows, image.cols);
            let mut re = vec![0.0; rows * cols];
            let mut im = vec![0.0; rows * cols];
            let r = k.radius as i64;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (kr, ki) = k.at(dy, dx);
                    // out(y, x) += g(dy, dx) * img(y - dy, x - dx)
                    let col0 = (pad as i64 - dx) as usize;
                    for y in 0..rows {
                        let prow = (y as i64 + pad as i64 - dy) as usize;
                        let src = &padded[prow * pcols + col0..prow * pcols + col0 + cols];
                        let out_re = &mut re[y * cols..(y + 1) * cols];
                        let out_im = &mut im[y * cols..(y + 1) * cols];
                        for ((o_re, o_im), s) in out_re.iter_mut().zip(out_im.iter_mut()).zip(src) {
                            *o_re += kr * s;
                            *o_im += ki * s;
                        }
                    }
                }
            }
            let mag = re.iter().zip(&im).map(|(a, b)| a.hypot(*b)).collect();
            Image::new(rows, cols, mag)
        })
        .collect()
}

fn pad_replicate(image: &Image, pad: usize) -> Vec<f64> {
    let (rows, cols) = (image.rows, image.cols);
    let pcols = cols + 2 * pad;
    let mut out = Vec::with_capacity((rows + 2 * pad) * pcols);
    for pr in 0..rows + 2 * pad {
        let r = pr.saturating_sub(pad).min(rows - 1);
        for pc in 0..pcols {
            let c = pc.saturating_sub(pad).min(cols - 1);
            out.push(image.get(r, c));
        }
    }
    out
}

/// Zero-based frame indices keeping the first and last frame and spreading
/// the rest evenly (`round(k (n - 1) / (t - 1))`). Short sources repeat
/// frames.
pub fn resample_indices(source_len: usize, t_target: usize) -> Result<Vec<usize>> {
    if source_len < 2 || t_target < 2 {
        return Err(Error::InvalidArgument(format!(
            "cannot resample {source_len} frames to {t_target}"
        )));
    }
    let step = (source_len - 1) as f64 / (t_target - 1) as f64;
    Ok((0..t_target)
        .map(|k| match k {
            0 => 0,
            k if k == t_target - 1 => source_len - 1,
            k => (k as f64 * step).round() as usize,
        })
        .collect())
}

pub fn resample_frames(seq: &ImageSequence, t_target: usize) -> Result<ImageSequence> {
    let idx = resample_indices(seq.len(), t_target)?;
    ImageSequence::new(idx.into_iter().map(|i| seq.frames[i].clone()).collect())
}

/// Difference Gabor tensor of dims `rows/f x cols/f x kernels x (t_target - 1)`
/// where `f` is the block-averaging factor (1 disables downsampling).
pub fn difference_tensor(
    seq: &ImageSequence,
    bank: &GaborBank,
    t_target: usize,
    downsample: usize,
) -> Result<Tensor> {
    let frames = resample_frames(seq, t_target)?;
    let stacks = frames
        .frames
        .iter()
        .map(|f| {
            response(f, bank)?
                .iter()
                .map(|m| m.block_average(downsample))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, cols) = (stacks[0][0].rows, stacks[0][0].cols);
    let p = bank.len();
    let dims = [rows, cols, p, t_target - 1];
    let mut data = vec![0.0; rows * cols * p * (t_target - 1)];
    let neutral = &stacks[0];
    for (t, stack) in stacks.iter().skip(1).enumerate() {
        for (k, (map, base)) in stack.iter().zip(neutral).enumerate() {
            let slab = rows * cols * (k + p * t);
            for c in 0..cols {
                for r in 0..rows {
                    data[slab + r + rows * c] = map.get(r, c) - base.get(r, c);
                }
            }
        }
    }
    Tensor::from_vec(&dims, data)
}
