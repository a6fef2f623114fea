//! JSON Lines manifests. Each line holds `transcript`, `speaker_id`, an
//! optional `id`, and `audio`: either a WAV path or an object with
//! `speech_emb` and `speaker_emb` EMB1 paths. Relative paths resolve against
//! the manifest's directory.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AudioRef {
    Wav(PathBuf),
    Embeddings { speech_emb: PathBuf, speaker_emb: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub audio: AudioRef,
    pub transcript: String,
    pub speaker_id: String,
}

/// Loaded manifest with absolute paths and the speaker class table.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub records: Vec<ManifestRecord>,
    /// Distinct speaker ids in lexicographic order; position is class index.
    pub speakers: Vec<String>,
}

impl ManifestRecord {
    pub fn id_or(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| format!("rec{index:05}"))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Self {
        let mut speakers: Vec<String> = records.iter().map(|r| r.speaker_id.clone()).collect();
        speakers.sort();
        speakers.dedup();
        Self { records, speakers }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn speaker_index(&self, id: &str) -> Option<usize> {
        self.speakers.binary_search_by(|s| s.as_str().cmp(id)).ok()
    }

    /// Read and validate a manifest; every referenced file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let load_err = |message: String| Error::Load {
                record: format!("{}:{}", path.display(), n + 1),
                message,
            };
            let mut rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| load_err(e.to_string()))?;
            rec.audio = match rec.audio {
                AudioRef::Wav(p) => AudioRef::Wav(resolve(base, &p)),
                AudioRef::Embeddings { speech_emb, speaker_emb } => AudioRef::Embeddings {
                    speech_emb: resolve(base, &speech_emb),
                    speaker_emb: resolve(base, &speaker_emb),
                },
            };
            let paths: Vec<&PathBuf> = match &rec.audio {
                AudioRef::Wav(p) => vec![p],
                AudioRef::Embeddings { speech_emb, speaker_emb } => vec![speech_emb, speaker_emb],
            };
            if let Some(missing) = paths.into_iter().find(|p| !p.is_file()) {
                return Err(load_err(format!("missing file {}", missing.display())));
            }
            records.push(rec);
        }
        Ok(Self::new(records))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_both_audio_forms_and_sorts_speakers() {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.wav", "s.emb", "k.emb"] {
            std::fs::write(dir.path().join(f), b"x").unwrap();
        }
        let text = concat!(
            r#"{"audio": "a.wav", "transcript": "hi", "speaker_id": "zed"}"#,
            "\n\n",
            r#"{"id": "u2", "audio": {"speech_emb": "s.emb", "speaker_emb": "k.emb"}, "transcript": "yo", "speaker_id": "amy"}"#,
            "\n"
        );
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, text).unwrap();
        let m = Manifest::load(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.speakers, vec!["amy", "zed"]);
        assert_eq!(m.speaker_index("zed"), Some(1));
        assert_eq!(m.records[0].audio, AudioRef::Wav(dir.path().join("a.wav")));
        assert_eq!(m.records[0].id_or(0), "rec00000");
        assert_eq!(m.records[1].id_or(1), "u2");

        let again = dir.path().join("m2.jsonl");
        m.save(&again).unwrap();
        assert_eq!(Manifest::load(&again).unwrap(), m);
    }

    #[test]
    fn missing_file_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, r#"{"audio": "nope.wav", "transcript": "hi", "speaker_id": "s"}"#).unwrap();
        match Manifest::load(&path) {
            Err(Error::Load { record, message }) => {
                assert!(record.ends_with(":1"));
                assert!(message.contains("nope.wav"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
