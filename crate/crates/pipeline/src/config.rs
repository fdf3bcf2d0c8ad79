//! Flat `key = value` configuration.
//!
//! Every setting has a default; a config file only lists overrides. Lists
//! are comma separated, `#` starts a comment. [`PipelineConfig::to_text`]
//! writes every key in a fixed order so the echo is stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use mbda_core::classify::{Au, AuSet, SvmParams};
use mbda_core::geometric::RegionSpec;
use mbda_core::{EigenConfig, MbdaConfig, Regularizer};

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FaceGroup {
    Upper,
    Lower,
}

impl FaceGroup {
    pub fn name(self) -> &'static str {
        match self {
            FaceGroup::Upper => "upper",
            FaceGroup::Lower => "lower",
        }
    }
}

impl FromStr for FaceGroup {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(FaceGroup::Upper),
            "lower" => Ok(FaceGroup::Lower),
            _ => Err(PipelineError::Config(format!("unknown face group {s:?}"))),
        }
    }
}

/// Appearance and motion of one synthetic action unit. Units off the
/// vertical midline are mirrored to the other half of the face.
#[derive(Debug, Clone, PartialEq)]
pub struct AuSpec {
    pub group: FaceGroup,
    /// Centre in normalized face coordinates (across, down).
    pub center: (f64, f64),
    /// Bump and motion falloff radius in pixels.
    pub radius: f64,
    /// Peak intensity change on the last frame.
    pub intensity: f64,
    /// Bump long-axis angle in degrees.
    pub orientation: f64,
    /// Long-axis to short-axis ratio of the bump.
    pub elongation: f64,
    /// Peak landmark motion in pixels (x, y); x flips on the mirrored side.
    pub motion: (f64, f64),
}

impl AuSpec {
    fn parse(value: &str) -> Result<Self> {
        let f: Vec<&str> = value.split_whitespace().collect();
        if f.len() != 9 {
            return Err(PipelineError::Config(format!(
                "action unit spec needs 9 fields \
                 (group u v radius intensity orientation elongation dx dy), got {value:?}"
            )));
        }
        let n = |i: usize| parse_num::<f64>(f[i]);
        Ok(Self {
            group: f[0].parse()?,
            center: (n(1)?, n(2)?),
            radius: n(3)?,
            intensity: n(4)?,
            orientation: n(5)?,
            elongation: n(6)?,
            motion: (n(7)?, n(8)?),
        })
    }

    fn to_text(&self) -> String {
        format!(
            "{} {} {} {} {} {} {} {} {}",
            self.group.name(),
            self.center.0,
            self.center.1,
            self.radius,
            self.intensity,
            self.orientation,
            self.elongation,
            self.motion.0,
            self.motion.1
        )
    }
}

fn default_aus() -> BTreeMap<Au, AuSpec> {
    use FaceGroup::{Lower, Upper};
    let spec = |group, u, v, radius, intensity, orientation, elongation, dx, dy| AuSpec {
        group,
        center: (u, v),
        radius,
        intensity,
        orientation,
        elongation,
        motion: (dx, dy),
    };
    [
        (1, spec(Upper, 0.42, 0.18, 2.5, 0.22, 0.0, 2.0, 0.0, -1.2)),
        (2, spec(Upper, 0.25, 0.18, 2.5, 0.22, 0.0, 2.0, 0.0, -1.2)),
        (4, spec(Upper, 0.42, 0.25, 2.5, -0.22, 90.0, 2.0, 0.6, 0.8)),
        (5, spec(Upper, 0.32, 0.32, 2.0, -0.2, 0.0, 1.5, 0.0, -0.7)),
        (6, spec(Upper, 0.28, 0.46, 3.0, 0.2, 30.0, 1.5, 0.0, -0.3)),
        (7, spec(Upper, 0.32, 0.37, 2.0, 0.2, 0.0, 2.0, 0.0, 0.25)),
        (12, spec(Lower, 0.35, 0.72, 2.5, 0.22, 45.0, 2.0, -1.2, -0.8)),
        (15, spec(Lower, 0.35, 0.78, 2.5, -0.22, -45.0, 2.0, 0.0, 1.0)),
        (17, spec(Lower, 0.5, 0.9, 3.0, 0.2, 0.0, 1.5, 0.0, -0.8)),
        (20, spec(Lower, 0.32, 0.75, 2.5, 0.2, 0.0, 2.5, -1.2, 0.0)),
        (25, spec(Lower, 0.5, 0.76, 2.5, -0.25, 0.0, 2.5, 0.0, 0.3)),
        (26, spec(Lower, 0.5, 0.84, 3.5, -0.18, 0.0, 1.5, 0.0, 1.3)),
    ]
    .into_iter()
    .map(|(au, s)| (Au(au), s))
    .collect()
}

fn default_combinations() -> Vec<AuSet> {
    [
        "1", "2", "4", "5", "6", "7", "1+2", "1+2+4", "1+4", "4+5", "6+7", "1+2+5", "12", "15",
        "17", "20", "25", "26", "12+25", "15+17", "20+25", "25+26",
    ]
    .iter()
    .map(|s| s.parse().expect("valid default combination"))
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub image_rows: usize,
    pub image_cols: usize,
    pub subjects: usize,
    /// The last `test_subjects` subjects form the test split.
    pub test_subjects: usize,
    pub sequences_per_combination: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Pixel noise standard deviation.
    pub noise: f64,
    /// Per-frame global brightness offset standard deviation.
    pub illumination: f64,
    /// Landmark jitter standard deviation in pixels.
    pub jitter: f64,
    /// Multiplies every action unit's intensity and motion.
    pub signal_scale: f64,
    /// Per-sequence amplitude is drawn from `[1 - v, 1 + v]`.
    pub amplitude_variation: f64,
    pub combinations: Vec<AuSet>,
    pub aus: BTreeMap<Au, AuSpec>,

    pub t_target: usize,
    pub downsample: usize,
    pub gabor_orientations: usize,
    pub gabor_scales: usize,
    pub gabor_base_wavelength: f64,
    pub appearance_dims: Vec<usize>,
    pub geometric: bool,
    pub geometric_dims: (usize, usize),
    pub upper_region: Option<Vec<u32>>,
    pub lower_region: Option<Vec<u32>>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub regularizer: Regularizer,
    pub discount: f64,
    pub sqrt_weighting: bool,
    pub slice_dims: (usize, usize),
    pub bda_dims: usize,
    /// Retained-variance fraction of the principal-component step before
    /// vector BDA; 0 disables it.
    pub pca_variance: f64,
    pub pca_max: usize,
    pub standardize: bool,
    pub svm: SvmParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            image_rows: 32,
            image_cols: 56,
            subjects: 8,
            test_subjects: 2,
            sequences_per_combination: 16,
            frames_min: 6,
            frames_max: 12,
            noise: 0.03,
            illumination: 0.05,
            jitter: 0.35,
            signal_scale: 1.0,
            amplitude_variation: 0.4,
            combinations: default_combinations(),
            aus: default_aus(),
            t_target: 5,
            downsample: 2,
            gabor_orientations: 4,
            gabor_scales: 4,
            gabor_base_wavelength: 2.0,
            appearance_dims: vec![3, 4, 1, 1],
            geometric: true,
            geometric_dims: (4, 2),
            upper_region: None,
            lower_region: None,
            max_iterations: 5,
            tolerance: 1e-4,
            regularizer: Regularizer::Relative(10.0),
            discount: 1.0,
            sqrt_weighting: false,
            slice_dims: (2, 2),
            bda_dims: 12,
            pca_variance: 0.98,
            pca_max: 64,
            standardize: true,
            svm: SvmParams::default(),
        }
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| PipelineError::Config(format!("cannot parse {s:?} as a number")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(PipelineError::Config(format!("cannot parse {s:?} as a boolean"))),
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(parse_num)
        .collect()
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    match parse_list::<usize>(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(PipelineError::Config(format!("expected two values, got {s:?}"))),
    }
}

fn parse_region(s: &str) -> Result<Option<Vec<u32>>> {
    if s.trim() == "auto" {
        Ok(None)
    } else {
        parse_list(s).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::default().with_overrides(&text)
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn with_overrides(mut self, text: &str) -> Result<Self> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_num(value)?,
            "image_rows" => self.image_rows = parse_num(value)?,
            "image_cols" => self.image_cols = parse_num(value)?,
            "subjects" => self.subjects = parse_num(value)?,
            "test_subjects" => self.test_subjects = parse_num(value)?,
            "sequences_per_combination" => self.sequences_per_combination = parse_num(value)?,
            "frames_min" => self.frames_min = parse_num(value)?,
            "frames_max" => self.frames_max = parse_num(value)?,
            "noise" => self.noise = parse_num(value)?,
            "illumination" => self.illumination = parse_num(value)?,
            "jitter" => self.jitter = parse_num(value)?,
            "signal_scale" => self.signal_scale = parse_num(value)?,
            "amplitude_variation" => self.amplitude_variation = parse_num(value)?,
            "combinations" => {
                self.combinations = value
                    .split(',')
                    .filter(|p| !p.trim().is_empty())
                    .map(|p| p.parse::<AuSet>().map_err(PipelineError::from))
                    .collect::<Result<_>>()?
            }
            "t_target" => self.t_target = parse_num(value)?,
            "downsample" => self.downsample = parse_num(value)?,
            "gabor_orientations" => self.gabor_orientations = parse_num(value)?,
            "gabor_scales" => self.gabor_scales = parse_num(value)?,
            "gabor_base_wavelength" => self.gabor_base_wavelength = parse_num(value)?,
            "appearance_dims" => self.appearance_dims = parse_list(value)?,
            "geometric" => self.geometric = parse_bool(value)?,
            "geometric_dims" => self.geometric_dims = parse_pair(value)?,
            "upper_region" => self.upper_region = parse_region(value)?,
            "lower_region" => self.lower_region = parse_region(value)?,
            "max_iterations" => self.max_iterations = parse_num(value)?,
            "tolerance" => self.tolerance = parse_num(value)?,
            "regularizer" => {
                self.regularizer = if value == "auto" {
                    Regularizer::Auto
                } else if let Some(f) = value.strip_prefix("relative:") {
                    Regularizer::Relative(parse_num(f.trim())?)
                } else {
                    Regularizer::Fixed(parse_num(value)?)
                }
            }
            "discount" => self.discount = parse_num(value)?,
            "sqrt_weighting" => self.sqrt_weighting = parse_bool(value)?,
            "slice_dims" => self.slice_dims = parse_pair(value)?,
            "bda_dims" => self.bda_dims = parse_num(value)?,
            "pca_variance" => self.pca_variance = parse_num(value)?,
            "pca_max" => self.pca_max = parse_num(value)?,
            "standardize" => self.standardize = parse_bool(value)?,
            "svm_c" => self.svm.c = parse_num(value)?,
            "svm_gamma" => {
                self.svm.gamma = if value == "auto" {
                    None
                } else {
                    Some(parse_num(value)?)
                }
            }
            "svm_tol" => self.svm.tol = parse_num(value)?,
            "svm_positive_weight" => self.svm.positive_weight = parse_num(value)?,
            "svm_max_iterations" => self.svm.max_iterations = parse_num(value)?,
            _ => {
                let au = key
                    .strip_prefix("au.")
                    .ok_or_else(|| PipelineError::Config(format!("unknown key {key:?}")))?;
                self.aus.insert(Au(parse_num(au)?), AuSpec::parse(value)?);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.image_rows == 0 || self.image_cols == 0 {
            return fail("image size must be positive".into());
        }
        if self.test_subjects == 0 || self.test_subjects >= self.subjects {
            return fail(format!(
                "need 1..{} test subjects, got {}",
                self.subjects, self.test_subjects
            ));
        }
        if self.sequences_per_combination == 0 {
            return fail("sequences_per_combination must be positive".into());
        }
        if self.frames_min < 2 || self.frames_max < self.frames_min {
            return fail("frame range must satisfy 2 <= frames_min <= frames_max".into());
        }
        if self.t_target < 2 || self.downsample == 0 {
            return fail("t_target must be >= 2 and downsample >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.amplitude_variation) {
            return fail("amplitude_variation must lie in [0, 1]".into());
        }
        if self.combinations.is_empty() {
            return fail("no action unit combinations".into());
        }
        for combo in &self.combinations {
            if let Some(au) = combo.iter().find(|au| !self.aus.contains_key(au)) {
                return fail(format!("combination {combo} uses unknown action unit {au}"));
            }
        }
        if self.appearance_dims.len() != 4 {
            return fail("appearance_dims needs four values".into());
        }
        if self.bda_dims == 0 {
            return fail("bda_dims must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.pca_variance) {
            return fail("pca_variance must lie in [0, 1]".into());
        }
        for region in [&self.upper_region, &self.lower_region].into_iter().flatten() {
            RegionSpec::new("check", region.clone())?;
        }
        Ok(())
    }

    /// Every key in a fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("image_rows", self.image_rows.to_string());
        kv("image_cols", self.image_cols.to_string());
        kv("subjects", self.subjects.to_string());
        kv("test_subjects", self.test_subjects.to_string());
        kv("sequences_per_combination", self.sequences_per_combination.to_string());
        kv("frames_min", self.frames_min.to_string());
        kv("frames_max", self.frames_max.to_string());
        kv("noise", self.noise.to_string());
        kv("illumination", self.illumination.to_string());
        kv("jitter", self.jitter.to_string());
        kv("signal_scale", self.signal_scale.to_string());
        kv("amplitude_variation", self.amplitude_variation.to_string());
        kv("combinations", join(&self.combinations));
        for (au, spec) in &self.aus {
            kv(&format!("au.{au}"), spec.to_text());
        }
        kv("t_target", self.t_target.to_string());
        kv("downsample", self.downsample.to_string());
        kv("gabor_orientations", self.gabor_orientations.to_string());
        kv("gabor_scales", self.gabor_scales.to_string());
        kv("gabor_base_wavelength", self.gabor_base_wavelength.to_string());
        kv("appearance_dims", join(&self.appearance_dims));
        kv("geometric", self.geometric.to_string());
        kv(
            "geometric_dims",
            format!("{},{}", self.geometric_dims.0, self.geometric_dims.1),
        );
        let region = |r: &Option<Vec<u32>>| r.as_ref().map_or("auto".to_string(), |v| join(v));
        kv("upper_region", region(&self.upper_region));
        kv("lower_region", region(&self.lower_region));
        kv("max_iterations", self.max_iterations.to_string());
        kv("tolerance", self.tolerance.to_string());
        kv(
            "regularizer",
            match self.regularizer {
                Regularizer::Auto => "auto".into(),
                Regularizer::Fixed(eps) => eps.to_string(),
                Regularizer::Relative(f) => format!("relative:{f}"),
            },
        );
        kv("discount", self.discount.to_string());
        kv("sqrt_weighting", self.sqrt_weighting.to_string());
        kv("slice_dims", format!("{},{}", self.slice_dims.0, self.slice_dims.1));
        kv("bda_dims", self.bda_dims.to_string());
        kv("pca_variance", self.pca_variance.to_string());
        kv("pca_max", self.pca_max.to_string());
        kv("standardize", self.standardize.to_string());
        kv("svm_c", self.svm.c.to_string());
        kv(
            "svm_gamma",
            self.svm.gamma.map_or("auto".into(), |g| g.to_string()),
        );
        kv("svm_tol", self.svm.tol.to_string());
        kv("svm_positive_weight", self.svm.positive_weight.to_string());
        kv("svm_max_iterations", self.svm.max_iterations.to_string());
        out
    }

    pub fn eigen(&self) -> EigenConfig {
        EigenConfig {
            regularizer: self.regularizer,
            discount: self.discount,
            sqrt_weighting: self.sqrt_weighting,
        }
    }

    pub fn appearance_config(&self) -> MbdaConfig {
        MbdaConfig::new(self.appearance_dims.clone())
            .with_eigen(self.eigen())
            .with_max_iterations(self.max_iterations)
            .with_tolerance(self.tolerance)
    }

    pub fn geometric_config(&self) -> MbdaConfig {
        MbdaConfig::new(vec![self.geometric_dims.0, self.geometric_dims.1])
            .with_eigen(self.eigen())
            .with_max_iterations(self.max_iterations)
            .with_tolerance(self.tolerance)
    }

    pub fn slice_config(&self) -> MbdaConfig {
        MbdaConfig::new(vec![self.slice_dims.0, self.slice_dims.1])
            .with_eigen(self.eigen())
            .with_max_iterations(self.max_iterations)
            .with_tolerance(self.tolerance)
    }

    pub fn region(&self, group: FaceGroup) -> Result<RegionSpec> {
        let ids = match group {
            FaceGroup::Upper => &self.upper_region,
            FaceGroup::Lower => &self.lower_region,
        };
        match ids {
            Some(ids) => Ok(RegionSpec::new(group.name(), ids.clone())?),
            None => Ok(match group {
                FaceGroup::Upper => RegionSpec::upper_face(),
                FaceGroup::Lower => RegionSpec::lower_face(),
            }),
        }
    }

    pub fn group_of(&self, au: Au) -> Result<FaceGroup> {
        self.aus
            .get(&au)
            .map(|s| s.group)
            .ok_or_else(|| PipelineError::Config(format!("action unit {au} not in vocabulary")))
    }

    pub fn vocabulary(&self) -> Vec<Au> {
        self.aus.keys().copied().collect()
    }
}
