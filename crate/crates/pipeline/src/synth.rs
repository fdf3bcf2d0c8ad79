//! Seeded synthetic action-unit sequences.
//!
//! Each subject gets a smooth random texture and a slightly shifted and
//! scaled face layout. An active action unit adds an oriented intensity
//! bump at its location and drags nearby grid points; both ramp linearly
//! from zero on the first frame to their peak on the last.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use mbda_core::classify::{Au, AuSet};
use mbda_core::gabor::{Image, ImageSequence};
use mbda_core::geometric::{canonical_grid, LandmarkTrack};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{AuSpec, PipelineConfig};
use crate::dataset::{write_sequence, Manifest, ManifestEntry, SequenceSample, Split};
use crate::error::{PipelineError, Result};

const TEXTURE_BLOBS: usize = 40;
const SUBJECT_STREAM: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub image_rows: usize,
    pub image_cols: usize,
    pub subjects: usize,
    pub test_subjects: usize,
    pub sequences_per_combination: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    pub noise: f64,
    pub illumination: f64,
    pub jitter: f64,
    pub signal_scale: f64,
    pub amplitude_variation: f64,
    pub combinations: Vec<AuSet>,
    pub aus: BTreeMap<Au, AuSpec>,
}

impl SynthSpec {
    pub fn from_config(c: &PipelineConfig) -> Self {
        Self {
            seed: c.seed,
            image_rows: c.image_rows,
            image_cols: c.image_cols,
            subjects: c.subjects,
            test_subjects: c.test_subjects,
            sequences_per_combination: c.sequences_per_combination,
            frames_min: c.frames_min,
            frames_max: c.frames_max,
            noise: c.noise,
            illumination: c.illumination,
            jitter: c.jitter,
            signal_scale: c.signal_scale,
            amplitude_variation: c.amplitude_variation,
            combinations: c.combinations.clone(),
            aus: c.aus.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        if self.subjects == 0 || self.test_subjects >= self.subjects {
            return bad("test subjects must leave at least one training subject");
        }
        if self.sequences_per_combination == 0 || self.combinations.is_empty() {
            return bad("no sequences to generate");
        }
        if self.frames_min < 2 || self.frames_max < self.frames_min {
            return bad("frame range must satisfy 2 <= frames_min <= frames_max");
        }
        if !(self.noise >= 0.0 && self.illumination >= 0.0 && self.jitter >= 0.0) {
            return bad("noise levels must be non-negative");
        }
        for combo in &self.combinations {
            if combo.iter().any(|au| !self.aus.contains_key(&au)) {
                return bad("combination uses an action unit without a spec");
            }
        }
        Ok(())
    }
}

/// Face placement and texture shared by all of a subject's sequences.
struct Subject {
    texture: Image,
    offset: (f64, f64),
    scale: f64,
    grid: Vec<[f64; 2]>,
}

impl Subject {
    fn new(spec: &SynthSpec, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(SUBJECT_STREAM + index as u64);
        let (rows, cols) = (spec.image_rows, spec.image_cols);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..TEXTURE_BLOBS)
            .map(|_| {
                (
                    rng.gen_range(0.0..cols as f64),
                    rng.gen_range(0.0..rows as f64),
                    rng.gen_range(4.0..10.0),
                    rng.gen_range(-0.08..0.08),
                )
            })
            .collect();
        let offset = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let scale = rng.gen_range(0.95..1.05);
        let mut subject = Self {
            texture: Image::filled(rows, cols, 0.0).expect("positive size"),
            offset,
            scale,
            grid: Vec::new(),
        };
        let features = [
            (0.32, 0.33, 2.0, 1.8, -0.15),
            (0.5, 0.76, 1.5, 4.0, -0.12),
            (0.5, 0.55, 1.5, 1.0, 0.08),
        ];
        subject.texture = Image::from_fn(rows, cols, |r, c| {
            let (x, y) = (c as f64, r as f64);
            let mut v = 0.45;
            for &(bx, by, s, a) in &blobs {
                v += a * (-((x - bx).powi(2) + (y - by).powi(2)) / (2.0 * s * s)).exp();
            }
            for &(u, w, across, along, a) in &features {
                for (cx, cy, theta) in subject.instances(spec, u, w, 0.0) {
                    v += a * bump(x - cx, y - cy, theta, along, across);
                }
            }
            v
        })
        .expect("positive size");
        subject.grid = canonical_grid()
            .iter()
            .map(|&(_, u, v)| {
                let (x, y) = subject.place(spec, u, v);
                [x, y]
            })
            .collect();
        subject
    }

    /// Pixel position of normalized face coordinates.
    fn place(&self, spec: &SynthSpec, u: f64, v: f64) -> (f64, f64) {
        let (w, h) = (spec.image_cols as f64, spec.image_rows as f64);
        (
            w / 2.0 + (u - 0.5) * w * self.scale + self.offset.0,
            h / 2.0 + (v - 0.5) * h * self.scale + self.offset.1,
        )
    }

    /// Pixel centre and orientation of a unit and of its mirror image.
    fn instances(&self, spec: &SynthSpec, u: f64, v: f64, theta: f64) -> Vec<(f64, f64, f64)> {
        let (x, y) = self.place(spec, u, v);
        if (u - 0.5).abs() < 1e-9 {
            vec![(x, y, theta)]
        } else {
            let (xm, ym) = self.place(spec, 1.0 - u, v);
            vec![(x, y, theta), (xm, ym, PI - theta)]
        }
    }
}

fn bump(dx: f64, dy: f64, theta: f64, along: f64, across: f64) -> f64 {
    let a = dx * theta.cos() + dy * theta.sin();
    let b = -dx * theta.sin() + dy * theta.cos();
    (-(a * a) / (2.0 * along * along) - (b * b) / (2.0 * across * across)).exp()
}

/// Generates every sequence in memory, frames quantized to 8 bits.
pub fn generate(spec: &SynthSpec) -> Result<Vec<SequenceSample>> {
    spec.validate()?;
    let subjects: Vec<Subject> = (0..spec.subjects).map(|s| Subject::new(spec, s)).collect();
    let ids: Vec<u32> = canonical_grid().iter().map(|&(id, _, _)| id).collect();
    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let illum = Normal::new(0.0, spec.illumination.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let jitter = Normal::new(0.0, spec.jitter.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut out = Vec::new();
    let mut stream = 0u64;
    for (ci, combo) in spec.combinations.iter().enumerate() {
        for rep in 0..spec.sequences_per_combination {
            let s = (rep + ci) % spec.subjects;
            let subject = &subjects[s];
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(stream);
            stream += 1;

            let t = rng.gen_range(spec.frames_min..=spec.frames_max);
            let active: Vec<(&AuSpec, f64)> = combo
                .iter()
                .map(|au| {
                    let amp = spec.signal_scale
                        * rng.gen_range(
                            1.0 - spec.amplitude_variation..=1.0 + spec.amplitude_variation,
                        );
                    (&spec.aus[&au], amp)
                })
                .collect();

            let mut frames = Vec::with_capacity(t);
            let mut positions = Vec::with_capacity(t);
            for f in 0..t {
                let ramp = f as f64 / (t - 1) as f64;
                let offset = if spec.illumination > 0.0 { illum.sample(&mut rng) } else { 0.0 };
                let mut img = subject.texture.clone();
                let (rows, cols) = (img.rows(), img.cols());
                for (au, amp) in &active {
                    let gain = ramp * amp * au.intensity;
                    let theta = au.orientation.to_radians();
                    for (cx, cy, th) in subject.instances(spec, au.center.0, au.center.1, theta) {
                        let along = au.radius * au.elongation;
                        let reach = 3.0 * along.max(au.radius);
                        let r0 = (cy - reach).floor().max(0.0) as usize;
                        let r1 = ((cy + reach).ceil() as usize).min(rows - 1);
                        let c0 = (cx - reach).floor().max(0.0) as usize;
                        let c1 = ((cx + reach).ceil() as usize).min(cols - 1);
                        for r in r0..=r1 {
                            for c in c0..=c1 {
                                img.as_mut_slice()[r * cols + c] += gain
                                    * bump(c as f64 - cx, r as f64 - cy, th, along, au.radius);
                            }
                        }
                    }
                }
                for v in img.as_mut_slice() {
                    *v += offset;
                    if spec.noise > 0.0 {
                        *v += noise.sample(&mut rng);
                    }
                    *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
                }
                frames.push(img);

                let mut pts = subject.grid.clone();
                for (au, amp) in &active {
                    let falloff = 1.5 * au.radius;
                    let insts = subject.instances(spec, au.center.0, au.center.1, 0.0);
                    for (k, (cx, cy, _)) in insts.iter().enumerate() {
                        let sign = if k == 0 { 1.0 } else { -1.0 };
                        for (p, base) in pts.iter_mut().zip(&subject.grid) {
                            let d2 = (base[0] - cx).powi(2) + (base[1] - cy).powi(2);
                            let w = ramp * amp * (-d2 / (2.0 * falloff * falloff)).exp();
                            p[0] += w * sign * au.motion.0;
                            p[1] += w * au.motion.1;
                        }
                    }
                }
                if spec.jitter > 0.0 {
                    for p in &mut pts {
                        p[0] += jitter.sample(&mut rng);
                        p[1] += jitter.sample(&mut rng);
                    }
                }
                // Keep the CSV text short and exactly reproducible.
                for p in &mut pts {
                    p[0] = (p[0] * 1e4).round() / 1e4;
                    p[1] = (p[1] * 1e4).round() / 1e4;
                }
                positions.push(pts);
            }

            out.push(SequenceSample {
                id: format!("s{s:02}_c{ci:02}_r{rep:02}"),
                subject: s as u32,
                split: if s >= spec.subjects - spec.test_subjects {
                    Split::Test
                } else {
                    Split::Train
                },
                labels: combo.clone(),
                frames: ImageSequence::new(frames)?,
                track: Some(LandmarkTrack::new(ids.clone(), positions)?),
            });
        }
    }
    Ok(out)
}

/// Generates the dataset and writes it under `root`.
pub fn synth_dataset(spec: &SynthSpec, root: &Path) -> Result<Manifest> {
    let samples = generate(spec)?;
    std::fs::create_dir_all(root)?;
    let manifest = Manifest {
        sequences: samples
            .iter()
            .map(|s| ManifestEntry {
                id: s.id.clone(),
                subject: s.subject,
                split: s.split,
                labels: s.labels.clone(),
            })
            .collect(),
    };
    manifest.check()?;
    for s in &samples {
        write_sequence(root, s)?;
    }
    manifest.write(root)?;
    Ok(manifest)
}
