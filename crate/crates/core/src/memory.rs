//! Gated long-term memory.
//!
//! A view is written only if it is both relevant (`score >= tau_mem`) and
//! valid, at most once per waypoint, and memory is append-only. Entries hold
//! a unit-norm embedding, the pose, and a reference to the stored
//! observation payload.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::config::ConfigError;
use crate::explore::EpisodeResult;
use crate::rng::stream;
use crate::world::{Observation, Pose};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MemoryError {
    #[error("a memory entry was already admitted at waypoint {0}")]
    DuplicateWaypointAdmission(u64),
    #[error("waypoint {got} precedes the last admission at {last}")]
    NonMonotonicWaypoint { got: u64, last: u64 },
    #[error("entry belongs to waypoint {entry}, update is for waypoint {update}")]
    WaypointMismatch { entry: u64, update: u64 },
    #[error("gate is open but no entry was supplied")]
    MissingEntry,
    #[error("embedding has dimension {got}, expected {expected}")]
    EmbeddingDimensionMismatch { got: usize, expected: usize },
    #[error("embedding has zero norm")]
    DegenerateEmbedding,
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("no episode results to aggregate")]
    EmptyResultSet,
}

/// How `Valid(.)` is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValidityMode {
    /// A synthetic view is valid when it shows anything at all.
    #[default]
    Synthetic,
    /// Camera frames: sharp enough and neither too dark nor too bright.
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidityConfig {
    pub mode: ValidityMode,
    /// Minimum mean squared Laplacian response, 8-bit intensity scale.
    pub sharpness_threshold: f64,
    pub brightness_min: f64,
    pub brightness_max: f64,
}

impl Default for ValidityConfig {
    fn default() -> Self {
        ValidityConfig {
            mode: ValidityMode::Synthetic,
            sharpness_threshold: 100.0,
            brightness_min: 20.0,
            brightness_max: 235.0,
        }
    }
}

impl ValidityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sharpness_threshold >= 0.0) {
            return Err(ConfigError::invalid("validity.sharpness_threshold", "must be >= 0"));
        }
        if !(self.brightness_min <= self.brightness_max) {
            return Err(ConfigError::invalid(
                "validity.brightness_min",
                "must not exceed brightness_max",
            ));
        }
        Ok(())
    }
}

/// 8-bit grayscale frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size");
        GrayFrame {
            width,
            height,
            pixels,
        }
    }

    fn at(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x] as f64
    }

    /// Mean squared response of the 4-neighbour discrete Laplacian over the
    /// interior pixels. Frames smaller than 3x3 have no interior and score 0.
    pub fn sharpness(&self) -> f64 {
        if self.width < 3 || self.height < 3 {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 1..self.height - 1 {
            for x in 1..self.width - 1 {
                let lap = self.at(x - 1, y) + self.at(x + 1, y) + self.at(x, y - 1) + self.at(x, y + 1)
                    - 4.0 * self.at(x, y);
                sum += lap * lap;
                n += 1;
            }
        }
        sum / n as f64
    }

    pub fn mean_brightness(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Image-mode validity check.
pub fn is_valid_frame(frame: &GrayFrame, cfg: &ValidityConfig) -> bool {
    let b = frame.mean_brightness();
    frame.sharpness() >= cfg.sharpness_threshold && b >= cfg.brightness_min && b <= cfg.brightness_max
}

/// Validity of a synthetic observation. In image mode a synthetic
/// observation carries no frame and is never valid.
pub fn is_valid(obs: &Observation, cfg: &ValidityConfig) -> bool {
    match cfg.mode {
        ValidityMode::Synthetic => !obs.visible.is_empty(),
        ValidityMode::Image => false,
    }
}

/// The admission gate: relevant enough and valid.
pub fn admission_gate(score: f64, valid: bool, tau_mem: f64) -> bool {
    score >= tau_mem && valid
}

/// Maps an observation to an embedding vector.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, obs: &Observation) -> Result<Vec<f32>, MemoryError>;
}

/// Random projection of an observation's content tokens.
///
/// Each distinct token maps to a fixed Gaussian vector drawn from a stream
/// keyed by the token; an observation embeds to the normalised sum of its
/// token vectors, so identical content gives identical embeddings and shared
/// content gives correlated ones.
#[derive(Debug)]
pub struct SyntheticEmbedder {
    dim: usize,
    seed: u64,
    cache: RwLock<HashMap<String, Arc<[f32]>>>,
}

impl SyntheticEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        SyntheticEmbedder {
            dim,
            seed,
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn token_vector(&self, token: &str) -> Arc<[f32]> {
        if let Some(v) = self.cache.read().expect("cache lock").get(token) {
            return v.clone();
        }
        let mut rng = stream(self.seed, &format!("embed:{token}"));
        let v: Arc<[f32]> = (0..self.dim)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x as f32
            })
            .collect();
        self.cache
            .write()
            .expect("cache lock")
            .entry(token.to_owned())
            .or_insert(v)
            .clone()
    }
}

impl EmbeddingProvider for SyntheticEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, obs: &Observation) -> Result<Vec<f32>, MemoryError> {
        let mut acc = vec![0f64; self.dim];
        for token in obs.content_tokens() {
            for (a, x) in acc.iter_mut().zip(self.token_vector(&token).iter()) {
                *a += *x as f64;
            }
        }
        Ok(acc.into_iter().map(|x| x as f32).collect())
    }
}

/// L2-normalises in place.
pub fn normalize(v: &mut [f32]) -> Result<(), MemoryError> {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(MemoryError::DegenerateEmbedding);
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    Ok(())
}

/// One admitted view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    #[serde(serialize_with = "ser_embedding", deserialize_with = "de_embedding")]
    pub embedding: Vec<f32>,
    pub pose: Pose,
    pub observation_ref: String,
    #[serde(rename = "waypoint")]
    pub waypoint_index: u64,
    #[serde(rename = "score")]
    pub admit_score: f64,
}

fn ser_embedding<S: Serializer>(v: &[f32], s: S) -> Result<S::Ok, S::Error> {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    s.serialize_str(&B64.encode(bytes))
}

fn de_embedding<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f32>, D::Error> {
    let text = String::deserialize(d)?;
    let bytes = B64.decode(text).map_err(serde::de::Error::custom)?;
    if bytes.len() % 4 != 0 {
        return Err(serde::de::Error::custom("embedding byte length not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Builds an entry for a view that passed the gate.
pub fn make_entry(
    obs: &Observation,
    pose: &Pose,
    waypoint: u64,
    score: f64,
    embedder: &dyn EmbeddingProvider,
    expected_dim: usize,
) -> Result<MemoryEntry, MemoryError> {
    let mut embedding = embedder.embed(obs)?;
    if embedding.len() != expected_dim {
        return Err(MemoryError::EmbeddingDimensionMismatch {
            got: embedding.len(),
            expected: expected_dim,
        });
    }
    normalize(&mut embedding)?;
    Ok(MemoryEntry {
        embedding,
        pose: *pose,
        observation_ref: obs.id.clone(),
        waypoint_index: waypoint,
        admit_score: score,
    })
}

/// An entry together with the observation it refers to.
#[derive(Debug, Clone)]
pub struct Admission {
    pub entry: MemoryEntry,
    pub observation: Observation,
}

/// Append-only memory for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Memory {
    pub embedding_dim: usize,
    entries: Vec<MemoryEntry>,
    last_admitted_waypoint: Option<u64>,
    /// Stored observation payloads keyed by `observation_ref`.
    observations: BTreeMap<String, Observation>,
}

impl Memory {
    pub fn new(embedding_dim: usize) -> Self {
        Memory {
            embedding_dim,
            entries: Vec::new(),
            last_admitted_waypoint: None,
            observations: BTreeMap::new(),
        }
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_admitted_waypoint(&self) -> Option<u64> {
        self.last_admitted_waypoint
    }

    pub fn observation(&self, reference: &str) -> Option<&Observation> {
        self.observations.get(reference)
    }

    /// Stored observations in admission order.
    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.entries
            .iter()
            .filter_map(|e| self.observations.get(&e.observation_ref))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("memory serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    #[cfg(test)]
    pub(crate) fn push_unchecked(&mut self, waypoint: u64, obs: Observation, score: f64) {
        self.entries.push(MemoryEntry {
            embedding: vec![1.0; self.embedding_dim],
            pose: obs.pose,
            observation_ref: obs.id.clone(),
            waypoint_index: waypoint,
            admit_score: score,
        });
        self.last_admitted_waypoint = Some(waypoint);
        self.observations.insert(obs.id.clone(), obs);
    }
}

/// Applies one gate decision. An open gate appends exactly one entry; a
/// closed gate leaves memory untouched.
pub fn update_memory(
    mem: &mut Memory,
    admission: Option<Admission>,
    gate: bool,
    waypoint: u64,
) -> Result<(), MemoryError> {
    if !gate {
        return Ok(());
    }
    let Admission { entry, observation } = admission.ok_or(MemoryError::MissingEntry)?;
    if entry.waypoint_index != waypoint {
        return Err(MemoryError::WaypointMismatch {
            entry: entry.waypoint_index,
            update: waypoint,
        });
    }
    if entry.embedding.len() != mem.embedding_dim {
        return Err(MemoryError::EmbeddingDimensionMismatch {
            got: entry.embedding.len(),
            expected: mem.embedding_dim,
        });
    }
    match mem.last_admitted_waypoint {
        Some(last) if last == waypoint => return Err(MemoryError::DuplicateWaypointAdmission(waypoint)),
        Some(last) if last > waypoint => {
            return Err(MemoryError::NonMonotonicWaypoint { got: waypoint, last })
        }
        _ => {}
    }
    mem.observations.insert(entry.observation_ref.clone(), observation);
    mem.entries.push(entry);
    mem.last_admitted_waypoint = Some(waypoint);
    Ok(())
}

/// Mean admitted-entry count per episode.
pub fn mem_metric(results: &[EpisodeResult]) -> Result<f64, MemoryError> {
    if results.is_empty() {
        return Err(MemoryError::EmptyResultSet);
    }
    let total: usize = results.iter().map(|r| r.admitted_count).sum();
    Ok(total as f64 / results.len() as f64)
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::world::{Cell, Sighting};
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn serialization_round_trips(
            rows in proptest::collection::vec((0i32..20, 0i32..20, 0u32..8, prop::collection::vec(-10.0f32..10.0, 4), 0.8f64..1.0), 0..6)
        ) {
            let mut mem = Memory::new(4);
            for (i, (x, y, h, emb, score)) in rows.into_iter().enumerate() {
                let pose = Pose::new(Cell::new(x, y), h as f64 * 45.0, i as u32 * 10);
                let obs = Observation {
                    id: Observation::id_for(&pose),
                    pose,
                    visible: vec![Sighting { id: "o1".into(), category: "cup".into(), detail: Some("color=red".into()), cell: Cell::new(x + 1, y) }],
                    occluded_ids: vec!["h2".into()],
                };
                let entry = MemoryEntry { embedding: emb, pose, observation_ref: obs.id.clone(), waypoint_index: i as u64 * 2, admit_score: score };
                update_memory(&mut mem, Some(Admission { entry, observation: obs }), true, i as u64 * 2).unwrap();
            }
            let back = Memory::from_json(&mem.to_json()).unwrap();
            prop_assert_eq!(back, mem);
        }
    }
}
