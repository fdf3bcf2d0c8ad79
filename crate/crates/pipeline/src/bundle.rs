//! Trained model bundle and its binary file format.
//!
//! Layout (little-endian): magic `MBDABNDL`, `u32` format version, method
//! tag, the configuration echo, the skipped action units with their
//! reasons, then one record per detector: unit, face group, appearance
//! model, optional geometric subspace, standardizer and SVM.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use mbda_core::classify::{Au, SvmModel};
use mbda_core::discriminant::Subspace;
use mbda_core::Matrix;

use crate::config::{FaceGroup, PipelineConfig};
use crate::error::{PipelineError, Result};
use crate::features::{AppearanceModel, AuFeatureModel, Method, Pca, Standardizer};

pub const BUNDLE_MAGIC: &[u8; 8] = b"MBDABNDL";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub features: AuFeatureModel,
    pub svm: SvmModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub method: Method,
    pub config: PipelineConfig,
    pub detectors: Vec<Detector>,
    /// Action units left without a detector, with the reason.
    pub skipped: Vec<(Au, String)>,
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn len(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| PipelineError::Bundle(format!("{v} too large")))?;
        Ok(self.0.write_u32::<LittleEndian>(v)?)
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        Ok(self.0.write_f64::<LittleEndian>(v)?)
    }

    fn u8(&mut self, v: u8) -> Result<()> {
        Ok(self.0.write_u8(v)?)
    }

    fn f64s(&mut self, v: &[f64]) -> Result<()> {
        self.len(v.len())?;
        v.iter().try_for_each(|x| self.f64(*x))
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.len(s.len())?;
        Ok(self.0.write_all(s.as_bytes())?)
    }

    fn matrix(&mut self, m: &Matrix) -> Result<()> {
        self.len(m.rows())?;
        self.len(m.cols())?;
        m.as_slice().iter().try_for_each(|x| self.f64(*x))
    }

    fn subspace(&mut self, s: &Subspace) -> Result<()> {
        Ok(s.write_to(&mut self.0)?)
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn len(&mut self) -> Result<usize> {
        Ok(self.0.read_u32::<LittleEndian>()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(self.0.read_f64::<LittleEndian>()?)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.0.read_u8()?)
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        let mut v = vec![0.0; n];
        self.0.read_f64_into::<LittleEndian>(&mut v)?;
        Ok(v)
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        let mut buf = vec![0u8; n];
        self.0.read_exact(&mut buf)?;
        String::from_utf8(buf).map_err(|_| PipelineError::Bundle("invalid UTF-8".into()))
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.len()?;
        let cols = self.len()?;
        let mut v = vec![0.0; rows * cols];
        self.0.read_f64_into::<LittleEndian>(&mut v)?;
        Ok(Matrix::from_row_major(rows, cols, v)?)
    }

    fn subspace(&mut self) -> Result<Subspace> {
        Ok(Subspace::read_from(&mut self.0)?)
    }
}

fn group_tag(g: FaceGroup) -> u8 {
    match g {
        FaceGroup::Upper => 0,
        FaceGroup::Lower => 1,
    }
}

impl ModelBundle {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = Writer(w);
        w.0.write_all(BUNDLE_MAGIC)?;
        w.0.write_u32::<LittleEndian>(BUNDLE_VERSION)?;
        w.u8(self.method.to_tag())?;
        w.str(&self.config.to_text())?;
        w.len(self.skipped.len())?;
        for (au, reason) in &self.skipped {
            w.0.write_u16::<LittleEndian>(au.0)?;
            w.str(reason)?;
        }
        w.len(self.detectors.len())?;
        for d in &self.detectors {
            let f = &d.features;
            w.0.write_u16::<LittleEndian>(f.au.0)?;
            w.u8(group_tag(f.group))?;
            match &f.appearance {
                AppearanceModel::None => w.u8(0)?,
                AppearanceModel::Multilinear(s) => {
                    w.u8(1)?;
                    w.subspace(s)?;
                }
                AppearanceModel::SliceBda { slices, pca, bda } => {
                    w.u8(2)?;
                    w.len(slices.len())?;
                    for s in slices {
                        w.subspace(s)?;
                    }
                    match pca {
                        Some(p) => {
                            w.u8(1)?;
                            w.f64s(&p.mean)?;
                            w.matrix(&p.basis)?;
                        }
                        None => w.u8(0)?,
                    }
                    w.matrix(bda)?;
                }
            }
            match &f.geometric {
                Some(s) => {
                    w.u8(1)?;
                    w.subspace(s)?;
                }
                None => w.u8(0)?,
            }
            w.f64s(&f.standardizer.mean)?;
            w.f64s(&f.standardizer.scale)?;

            let svm = &d.svm;
            w.len(svm.support_vectors.len())?;
            w.len(svm.dim().unwrap_or(0))?;
            for sv in &svm.support_vectors {
                sv.iter().try_for_each(|x| w.f64(*x))?;
            }
            svm.dual_coef.iter().try_for_each(|x| w.f64(*x))?;
            w.f64(svm.bias)?;
            w.f64(svm.gamma)?;
            w.f64(svm.c)?;
            w.f64(svm.positive_weight)?;
            w.len(svm.iterations)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader(r);
        let mut magic = [0u8; 8];
        r.0.read_exact(&mut magic)?;
        if &magic != BUNDLE_MAGIC {
            return Err(PipelineError::Bundle("not a model bundle".into()));
        }
        let version = r.0.read_u32::<LittleEndian>()?;
        if version != BUNDLE_VERSION {
            return Err(PipelineError::Bundle(format!(
                "unsupported bundle version {version}"
            )));
        }
        let method = Method::from_tag(r.u8()?)?;
        let config = PipelineConfig::default().with_overrides(&r.str()?)?;
        let skipped = (0..r.len()?)
            .map(|_| Ok((Au(r.0.read_u16::<LittleEndian>()?), r.str()?)))
            .collect::<Result<Vec<_>>>()?;
        let count = r.len()?;
        let mut detectors = Vec::with_capacity(count);
        for _ in 0..count {
            let au = Au(r.0.read_u16::<LittleEndian>()?);
            let group = match r.u8()? {
                0 => FaceGroup::Upper,
                1 => FaceGroup::Lower,
                t => return Err(PipelineError::Bundle(format!("bad face group tag {t}"))),
            };
            let appearance = match r.u8()? {
                0 => AppearanceModel::None,
                1 => AppearanceModel::Multilinear(r.subspace()?),
                2 => {
                    let slices = (0..r.len()?)
                        .map(|_| r.subspace())
                        .collect::<Result<Vec<_>>>()?;
                    let pca = match r.u8()? {
                        0 => None,
                        _ => Some(Pca {
                            mean: r.f64s()?,
                            basis: r.matrix()?,
                        }),
                    };
                    AppearanceModel::SliceBda {
                        slices,
                        pca,
                        bda: r.matrix()?,
                    }
                }
                t => return Err(PipelineError::Bundle(format!("bad appearance tag {t}"))),
            };
            let geometric = match r.u8()? {
                0 => None,
                _ => Some(r.subspace()?),
            };
            let standardizer = Standardizer {
                mean: r.f64s()?,
                scale: r.f64s()?,
            };
            let n_sv = r.len()?;
            let dim = r.len()?;
            let support_vectors = (0..n_sv)
                .map(|_| (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let dual_coef = (0..n_sv).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let svm = SvmModel {
                support_vectors,
                dual_coef,
                bias: r.f64()?,
                gamma: r.f64()?,
                c: r.f64()?,
                positive_weight: r.f64()?,
                iterations: r.len()?,
            };
            detectors.push(Detector {
                features: AuFeatureModel {
                    au,
                    group,
                    appearance,
                    geometric,
                    standardizer,
                },
                svm,
            });
        }
        let bundle = Self {
            method,
            config,
            detectors,
            skipped,
        };
        bundle.check()?;
        Ok(bundle)
    }

    /// Every detector has the parts its method needs and consistent sizes.
    pub fn check(&self) -> Result<()> {
        for d in &self.detectors {
            let f = &d.features;
            let bad = |m: &str| Err(PipelineError::Bundle(format!("action unit {}: {m}", f.au)));
            let appearance_ok = match (self.method, &f.appearance) {
                (Method::GeometricOnly, AppearanceModel::None) => true,
                (Method::Mbda | Method::Mda, AppearanceModel::Multilinear(_)) => true,
                (Method::TwodbdaBda, AppearanceModel::SliceBda { .. }) => true,
                _ => false,
            };
            if !appearance_ok {
                return bad("appearance model does not match the method");
            }
            if f.geometric.is_some() != self.config.geometric {
                return bad("geometric subspace presence does not match the config");
            }
            if f.standardizer.scale.len() != f.dim() {
                return bad("standardizer lengths differ");
            }
            if d.svm.dim().is_some_and(|n| n != f.dim()) {
                return bad("SVM and feature lengths differ");
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Human-readable summary for `inspect`.
    pub fn describe(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "format version {BUNDLE_VERSION}");
        let _ = writeln!(out, "method {}", self.method);
        let _ = writeln!(out, "detectors {}", self.detectors.len());
        for d in &self.detectors {
            let f = &d.features;
            let appearance = match &f.appearance {
                AppearanceModel::None => "none".to_string(),
                AppearanceModel::Multilinear(s) => format!(
                    "{:?} -> {:?} ({} iterations)",
                    s.input_dims(),
                    s.output_dims(),
                    s.iterations_run
                ),
                AppearanceModel::SliceBda { slices, pca, bda } => format!(
                    "{} slices, pca {}, bda {}x{}",
                    slices.len(),
                    pca.as_ref().map_or(0, |p| p.basis.cols()),
                    bda.rows(),
                    bda.cols()
                ),
            };
            let geometric = f.geometric.as_ref().map_or("none".to_string(), |s| {
                format!("{:?} -> {:?}", s.input_dims(), s.output_dims())
            });
            let _ = writeln!(
                out,
                "  AU {:<3} {:<5} features {:<3} support vectors {:<4} appearance {appearance}; geometric {geometric}",
                f.au.to_string(),
                f.group.name(),
                f.dim(),
                d.svm.support_vectors.len()
            );
        }
        for (au, reason) in &self.skipped {
            let _ = writeln!(out, "  AU {au} skipped: {reason}");
        }
        let _ = writeln!(out, "config:");
        for line in self.config.to_text().lines() {
            let _ = writeln!(out, "  {line}");
        }
        out
    }
}
