use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{AudioRef, Manifest, ManifestRecord};
use super::text::{normalize_text, tokenize};
use crate::audio::{read_wav, resample, Waveform, CANONICAL_SAMPLE_RATE};
use crate::corpus::SyntheticUtterance;
use crate::embeddings::{
    fuse, read_emb, synth_speaker_encode, synth_speech_encode, EmbeddingSequence, Matrix, SpeakerEmbedding,
    SPEECH_FRAME_HOP_MS,
};
use crate::error::{Error, Result};
use crate::losses::min_frames;

/// Model input for a waveform: fused `N × 704` features, or the `N × 512`
/// speech embeddings alone when `joint` is false.
pub fn waveform_features(w: &Waveform, joint: bool) -> Result<Matrix> {
    let w = if w.sample_rate_hz == CANONICAL_SAMPLE_RATE {
        w.clone()
    } else {
        resample(w, CANONICAL_SAMPLE_RATE)?
    };
    let speech = synth_speech_encode(&w)?;
    if !joint {
        return Ok(speech.data);
    }
    Ok(fuse(&speech, &synth_speaker_encode(&w)?).data)
}

/// The record's audio at 16 kHz; fails for embedding-only records.
pub fn record_waveform(rec: &ManifestRecord) -> Result<Waveform> {
    match &rec.audio {
        AudioRef::Wav(p) => {
            let w = read_wav(p)?;
            if w.sample_rate_hz == CANONICAL_SAMPLE_RATE {
                Ok(w)
            } else {
                resample(&w, CANONICAL_SAMPLE_RATE)
            }
        }
        AudioRef::Embeddings { .. } => Err(Error::Config("record has embeddings but no audio".into())),
    }
}

/// Features for a manifest record: synthetic encoders over WAV audio, or
/// precomputed EMB1 embeddings.
pub fn record_features(rec: &ManifestRecord, joint: bool) -> Result<Matrix> {
    match &rec.audio {
        AudioRef::Wav(_) => waveform_features(&record_waveform(rec)?, joint),
        AudioRef::Embeddings { speech_emb, speaker_emb } => {
            let speech = EmbeddingSequence::new(read_emb(speech_emb)?, SPEECH_FRAME_HOP_MS)?;
            if !joint {
                return Ok(speech.data);
            }
            let spk = read_emb(speaker_emb)?;
            Ok(fuse(&speech, &SpeakerEmbedding::new(spk.data)?).data)
        }
    }
}

/// One training or evaluation item with precomputed features.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub transcript: String,
    pub label: Vec<usize>,
    pub speaker: usize,
    pub features: Matrix,
}

/// Featurised utterances plus the speaker class table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub speakers: Vec<String>,
    pub joint: bool,
    /// `(id, reason)` for every record left out.
    pub skipped: Vec<(String, String)>,
}

fn make_example(id: String, raw: &str, speaker: usize, features: Matrix) -> std::result::Result<Example, String> {
    let transcript = normalize_text(raw).map_err(|e| e.to_string())?;
    let label = tokenize(&transcript).map_err(|e| e.to_string())?;
    let needed = min_frames(&label);
    if needed > features.rows {
        return Err(Error::Infeasible { needed, frames: features.rows }.to_string());
    }
    Ok(Example {
        id,
        transcript,
        label,
        speaker,
        features,
    })
}

impl Dataset {
    /// Featurise every record. Records whose text normalises to nothing or
    /// whose label cannot fit the frames are skipped and logged; unreadable
    /// files are errors naming the record.
    pub fn from_manifest(m: &Manifest, joint: bool) -> Result<Self> {
        let mut examples = Vec::new();
        let mut skipped = Vec::new();
        for (i, rec) in m.records.iter().enumerate() {
            let id = rec.id_or(i);
            let features = record_features(rec, joint).map_err(|e| Error::Load {
                record: id.clone(),
                message: e.to_string(),
            })?;
            let speaker = m.speaker_index(&rec.speaker_id).expect("speaker table covers records");
            match make_example(id.clone(), &rec.transcript, speaker, features) {
                Ok(ex) => examples.push(ex),
                Err(reason) => {
                    log::warn!("skipping {id}: {reason}");
                    skipped.push((id, reason));
                }
            }
        }
        Ok(Self {
            examples,
            speakers: m.speakers.clone(),
            joint,
            skipped,
        })
    }

    pub fn from_synthetic(corpus: &[SyntheticUtterance], joint: bool) -> Result<Self> {
        let mut speakers: Vec<String> = corpus.iter().map(|u| u.speaker_id.clone()).collect();
        speakers.sort();
        speakers.dedup();
        let mut examples = Vec::new();
        let mut skipped = Vec::new();
        for u in corpus {
            let speaker = speakers.binary_search(&u.speaker_id).unwrap();
            match make_example(u.id.clone(), &u.transcript, speaker, waveform_features(&u.waveform, joint)?) {
                Ok(ex) => examples.push(ex),
                Err(reason) => skipped.push((u.id.clone(), reason)),
            }
        }
        Ok(Self {
            examples,
            speakers,
            joint,
            skipped,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Padded model input for a group of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Dataset positions of the items.
    pub indices: Vec<usize>,
    /// Each item zero-padded to the longest item.
    pub features: Vec<Matrix>,
    pub masks: Vec<Vec<bool>>,
    pub labels: Vec<Vec<usize>>,
    pub label_lengths: Vec<usize>,
    pub speakers: Vec<usize>,
}

impl Batch {
    pub fn assemble(ds: &Dataset, indices: &[usize]) -> Self {
        let n_max = indices.iter().map(|&i| ds.examples[i].features.rows).max().unwrap_or(0);
        let mut batch = Batch {
            indices: indices.to_vec(),
            features: Vec::new(),
            masks: Vec::new(),
            labels: Vec::new(),
            label_lengths: Vec::new(),
            speakers: Vec::new(),
        };
        for &i in indices {
            let ex = &ds.examples[i];
            let mut f = ex.features.clone();
            f.data.resize(n_max * f.cols, 0.0);
            f.rows = n_max;
            batch.features.push(f);
            batch.masks.push((0..n_max).map(|r| r < ex.features.rows).collect());
            batch.labels.push(ex.label.clone());
            batch.label_lengths.push(ex.label.len());
            batch.speakers.push(ex.speaker);
        }
        batch
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Epoch order: a seeded shuffle, then within consecutive windows of
/// `8 × batch_size` items a stable sort by length, then chunks of
/// `batch_size`.
pub fn batch_order(items: &[usize], lengths: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let batch_size = batch_size.max(1);
    let mut order = items.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    for window in order.chunks_mut(8 * batch_size) {
        window.sort_by_key(|&i| lengths[i]);
    }
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Padded batches covering `items` (dataset positions) once.
pub fn make_batches(ds: &Dataset, items: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Vec<Batch> {
    let lengths: Vec<usize> = ds.examples.iter().map(|e| e.features.rows).collect();
    batch_order(items, &lengths, batch_size, seed, epoch)
        .iter()
        .map(|idx| Batch::assemble(ds, idx))
        .collect()
}
