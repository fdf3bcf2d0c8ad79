//! On-disk dataset layout.
//!
//! ```text
//! root/manifest.json
//! root/<id>/frame_001.pgm ...
//! root/<id>/track.csv
//! root/<id>/labels.txt
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mbda_core::classify::AuSet;
use mbda_core::gabor::ImageSequence;
use mbda_core::geometric::LandmarkTrack;
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACK_FILE: &str = "track.csv";
pub const LABEL_FILE: &str = "labels.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub subject: u32,
    pub split: Split,
    pub labels: AuSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub sequences: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(root: &Path) -> Result<Self> {
        let file = File::open(root.join(MANIFEST_FILE))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(root.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    /// Fails when a subject appears in both splits or an id repeats.
    pub fn check(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for e in &self.sequences {
            if e.id.is_empty() || e.id.contains(['/', '\\']) || e.id.starts_with('.') {
                return Err(PipelineError::Dataset(format!("bad sequence id {:?}", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(PipelineError::Dataset(format!("duplicate sequence id {}", e.id)));
            }
        }
        let subjects = |split| {
            self.sequences
                .iter()
                .filter(|e| e.split == split)
                .map(|e| e.subject)
                .collect::<BTreeSet<_>>()
        };
        let shared: Vec<u32> = subjects(Split::Train)
            .intersection(&subjects(Split::Test))
            .copied()
            .collect();
        if !shared.is_empty() {
            return Err(PipelineError::Dataset(format!(
                "subjects {shared:?} appear in both train and test splits"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SequenceSample {
    pub id: String,
    pub subject: u32,
    pub split: Split,
    pub labels: AuSet,
    pub frames: ImageSequence,
    pub track: Option<LandmarkTrack>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub samples: Vec<SequenceSample>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let manifest = Manifest::read(root)?;
        manifest.check()?;
        let mut samples = Vec::with_capacity(manifest.sequences.len());
        for e in manifest.sequences {
            let dir = root.join(&e.id);
            let frames = ImageSequence::load_dir(&dir)?;
            let track_path = dir.join(TRACK_FILE);
            let track = if track_path.exists() {
                Some(LandmarkTrack::read_csv(BufReader::new(File::open(track_path)?))?)
            } else {
                None
            };
            samples.push(SequenceSample {
                id: e.id,
                subject: e.subject,
                split: e.split,
                labels: e.labels,
                frames,
                track,
            });
        }
        Ok(Self {
            root: root.to_path_buf(),
            samples,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SequenceSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Writes one sequence directory.
pub fn write_sequence(root: &Path, sample: &SequenceSample) -> Result<()> {
    let dir = root.join(&sample.id);
    sample.frames.save_dir(&dir)?;
    if let Some(track) = &sample.track {
        track.write_csv(BufWriter::new(File::create(dir.join(TRACK_FILE))?))?;
    }
    std::fs::write(dir.join(LABEL_FILE), format!("{}\n", sample.labels))?;
    Ok(())
}
