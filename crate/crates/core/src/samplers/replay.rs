//! Pre-scored datasets replayed as a world, drawn without replacement.
//!
//! One JSON object per line:
//! `{"topic_id", "topic_name", "keywords", "sample_id", "qe", "difficulty"}`
//! with optional `text` and `source_url`. A sidecar `<file>.manifest.json`
//! lists the topic count and per-topic record counts.

use super::{DrawError, Sampler, SamplerError, World, WorldKind};
use crate::ledger::{keywords_from_name, TopicId, TopicMeta};
use crate::rng::RunRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

/// Tolerance between a stored difficulty and `100 - mean(qe)`.
const DIFFICULTY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub topic_id: i64,
    pub topic_name: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    pub sample_id: i64,
    /// Quality score per dimension (language x model), each in `[0, 100]`.
    pub qe: BTreeMap<String, f64>,
    pub difficulty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl ReplayRecord {
    /// `100 - mean(qe)`; `None` when there are no scores.
    pub fn recompute_difficulty(qe: &BTreeMap<String, f64>) -> Option<f64> {
        if qe.is_empty() {
            return None;
        }
        Some(100.0 - qe.values().sum::<f64>() / qe.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub topic_id: i64,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayManifest {
    pub topic_count: usize,
    pub records_per_topic: Vec<ManifestEntry>,
}

impl ReplayManifest {
    pub fn path_for(dataset: &Path) -> PathBuf {
        let mut name = dataset.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        dataset.with_file_name(name)
    }
}

#[derive(Debug, Clone)]
pub struct ReplayWorld {
    topics: Vec<TopicMeta>,
    /// Records grouped by dense topic id.
    records: Vec<Vec<ReplayRecord>>,
    source_ids: Vec<i64>,
    true_means: Vec<f64>,
    manifest: ReplayManifest,
}

impl ReplayWorld {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SamplerError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let file = fs::File::open(path).map_err(|e| SamplerError::io(format!("opening {shown}"), e))?;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| SamplerError::io(format!("reading {shown}"), e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line).map_err(|e| SamplerError::Parse {
                path: shown.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
            records.push((line_no, rec));
        }
        let world = Self::from_numbered(records, &shown)?;

        let manifest_path = ReplayManifest::path_for(path);
        if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path)
                .map_err(|e| SamplerError::io(format!("reading {}", manifest_path.display()), e))?;
            let stored: ReplayManifest =
                serde_json::from_str(&text).map_err(|e| SamplerError::Manifest(e.to_string()))?;
            if stored != world.manifest {
                return Err(SamplerError::Manifest(format!(
                    "{} does not match the records in {shown}",
                    manifest_path.display()
                )));
            }
        }
        Ok(world)
    }

    pub fn from_records(records: Vec<ReplayRecord>) -> Result<Self, SamplerError> {
        Self::from_numbered(
            records.into_iter().enumerate().map(|(i, r)| (i + 1, r)).collect(),
            "<memory>",
        )
    }

    fn from_numbered(records: Vec<(usize, ReplayRecord)>, path: &str) -> Result<Self, SamplerError> {
        if records.is_empty() {
            return Err(SamplerError::Config(format!("{path}: dataset has no records")));
        }
        let parse_err = |line: usize, message: String| SamplerError::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut seen = HashSet::new();
        for (line, rec) in &records {
            let line = *line;
            for (dim, &score) in &rec.qe {
                if !(0.0..=100.0).contains(&score) {
                    return Err(parse_err(
                        line,
                        format!("qe score {score} for {dim:?} outside [0, 100]"),
                    ));
                }
            }
            let recomputed = ReplayRecord::recompute_difficulty(&rec.qe)
                .ok_or_else(|| parse_err(line, "record has no qe scores".into()))?;
            if !rec.difficulty.is_finite() || (recomputed - rec.difficulty).abs() > DIFFICULTY_TOLERANCE {
                return Err(SamplerError::Integrity {
                    path: path.to_string(),
                    line,
                    stored: rec.difficulty,
                    recomputed,
                });
            }
            if !seen.insert((rec.topic_id, rec.sample_id)) {
                return Err(parse_err(
                    line,
                    format!("duplicate sample {} for topic {}", rec.sample_id, rec.topic_id),
                ));
            }
        }

        let source_ids: Vec<i64> = records
            .iter()
            .map(|(_, r)| r.topic_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let dense: BTreeMap<i64, TopicId> = source_ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let mut grouped: Vec<Vec<ReplayRecord>> = vec![Vec::new(); source_ids.len()];
        for (_, mut rec) in records {
            // stored difficulty is verified; keep the recomputed value
            rec.difficulty = ReplayRecord::recompute_difficulty(&rec.qe).unwrap_or(rec.difficulty);
            grouped[dense[&rec.topic_id]].push(rec);
        }
        for g in &mut grouped {
            g.sort_by_key(|r| r.sample_id);
        }

        let topics = grouped
            .iter()
            .enumerate()
            .map(|(id, recs)| {
                let first = &recs[0];
                let mut keywords: BTreeSet<String> = recs
                    .iter()
                    .flat_map(|r| r.keywords.iter().map(|k| k.to_lowercase()))
                    .collect();
                if keywords.is_empty() {
                    keywords = keywords_from_name(&first.topic_name);
                }
                TopicMeta {
                    id,
                    name: first.topic_name.clone(),
                    keywords,
                }
            })
            .collect();
        let true_means = grouped
            .iter()
            .map(|recs| recs.iter().map(|r| r.difficulty).sum::<f64>() / recs.len() as f64)
            .collect();
        let manifest = ReplayManifest {
            topic_count: source_ids.len(),
            records_per_topic: source_ids
                .iter()
                .zip(&grouped)
                .map(|(&topic_id, recs)| ManifestEntry {
                    topic_id,
                    records: recs.len(),
                })
                .collect(),
        };
        Ok(Self {
            topics,
            records: grouped,
            source_ids,
            true_means,
            manifest,
        })
    }

    pub fn records(&self, topic: TopicId) -> &[ReplayRecord] {
        &self.records[topic]
    }

    pub fn all_records(&self) -> impl Iterator<Item = &ReplayRecord> {
        self.records.iter().flatten()
    }

    pub fn record_count(&self) -> usize {
        self.records.iter().map(Vec::len).sum()
    }

    pub fn min_records_per_topic(&self) -> usize {
        self.records.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn source_id(&self, topic: TopicId) -> i64 {
        self.source_ids[topic]
    }

    pub fn manifest(&self) -> &ReplayManifest {
        &self.manifest
    }

    /// Every qe dimension present in the dataset.
    pub fn dimensions(&self) -> BTreeSet<String> {
        self.all_records().flat_map(|r| r.qe.keys().cloned()).collect()
    }

    pub fn replay_sampler(&self) -> ReplaySampler<'_> {
        ReplaySampler {
            world: self,
            remaining: self.records.iter().map(|r| (0..r.len()).collect()).collect(),
        }
    }
}

impl World for ReplayWorld {
    fn topics(&self) -> &[TopicMeta] {
        &self.topics
    }

    fn kind(&self) -> WorldKind {
        WorldKind::Replay
    }

    fn true_means(&self) -> Option<&[f64]> {
        Some(&self.true_means)
    }

    fn sampler(&self) -> Result<Box<dyn Sampler + '_>, SamplerError> {
        Ok(Box::new(self.replay_sampler()))
    }
}

/// Undrawn record indices per topic for one run.
pub struct ReplaySampler<'a> {
    world: &'a ReplayWorld,
    remaining: Vec<Vec<usize>>,
}

impl<'a> ReplaySampler<'a> {
    /// A uniformly chosen record not yet drawn in this run.
    pub fn draw_record(&mut self, topic: TopicId, rng: &mut RunRng) -> Result<&'a ReplayRecord, DrawError> {
        let left = &mut self.remaining[topic];
        if left.is_empty() {
            return Err(DrawError::Exhausted(topic));
        }
        let j = rng.random_range(0..left.len());
        let idx = left.swap_remove(j);
        Ok(&self.world.records[topic][idx])
    }

    pub fn draw(&mut self, topic: TopicId, rng: &mut RunRng) -> Result<f64, DrawError> {
        self.draw_record(topic, rng).map(|r| r.difficulty)
    }

    pub fn remaining(&self, topic: TopicId) -> usize {
        self.remaining[topic].len()
    }
}

impl Sampler for ReplaySampler<'_> {
    fn draw_batch(&mut self, topics: &[TopicId], rng: &mut RunRng) -> Vec<Result<f64, DrawError>> {
        topics.iter().map(|&t| self.draw(t, rng)).collect()
    }
}

/// Pooled within-topic variance: `sum (d - mean_t)^2 / sum (n_t - 1)`.
pub fn estimate_sigma2(world: &ReplayWorld) -> Result<f64, SamplerError> {
    let mut ss = 0.0;
    let mut dof = 0usize;
    for recs in &world.records {
        if recs.len() < 2 {
            continue;
        }
        let m = recs.iter().map(|r| r.difficulty).sum::<f64>() / recs.len() as f64;
        ss += recs.iter().map(|r| (r.difficulty - m).powi(2)).sum::<f64>();
        dof += recs.len() - 1;
    }
    if dof == 0 {
        return Err(SamplerError::Estimation);
    }
    Ok(ss / dof as f64)
}

/// Writes records as JSON lines plus the manifest sidecar.
pub fn write_replay(path: impl AsRef<Path>, records: &[ReplayRecord]) -> Result<ReplayManifest, SamplerError> {
    let path = path.as_ref();
    let world = ReplayWorld::from_records(records.to_vec())?;
    let file = fs::File::create(path).map_err(|e| SamplerError::io(format!("creating {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    let io = |e| SamplerError::io(format!("writing {}", path.display()), e);
    for rec in records {
        let line = serde_json::to_string(rec).map_err(|e| SamplerError::Config(e.to_string()))?;
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)?;
    let manifest_path = ReplayManifest::path_for(path);
    let text = serde_json::to_string_pretty(world.manifest()).map_err(|e| SamplerError::Config(e.to_string()))?;
    fs::write(&manifest_path, text + "\n")
        .map_err(|e| SamplerError::io(format!("writing {}", manifest_path.display()), e))?;
    Ok(world.manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    pub(crate) fn rec(topic_id: i64, sample_id: i64, qe: &[(&str, f64)]) -> ReplayRecord {
        let qe: BTreeMap<String, f64> = qe.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        ReplayRecord {
            topic_id,
            topic_name: format!("Topic {topic_id}"),
            keywords: vec![],
            sample_id,
            difficulty: ReplayRecord::recompute_difficulty(&qe).unwrap(),
            qe,
            text: None,
            source_url: None,
        }
    }

    fn diff_rec(topic_id: i64, sample_id: i64, d: f64) -> ReplayRecord {
        rec(topic_id, sample_id, &[("m", 100.0 - d)])
    }

    #[test]
    fn difficulty_is_inverse_mean_qe() {
        let r = rec(0, 0, &[("a", 90.0), ("b", 70.0)]);
        assert_eq!(r.difficulty, 20.0);
    }

    #[test]
    fn topic_true_mean() {
        let w =
            ReplayWorld::from_records(vec![diff_rec(7, 0, 10.0), diff_rec(7, 1, 20.0), diff_rec(7, 2, 30.0)]).unwrap();
        assert_eq!(w.true_means().unwrap(), &[20.0]);
        assert_eq!(w.source_id(0), 7);
        assert_eq!(w.topics()[0].keywords.iter().collect::<Vec<_>>(), ["7", "topic"]);
    }

    #[test]
    fn integrity_mismatch_rejected() {
        let mut r = diff_rec(0, 0, 10.0);
        r.difficulty = 10.1;
        assert!(matches!(
            ReplayWorld::from_records(vec![r]),
            Err(SamplerError::Integrity { line: 1, .. })
        ));
    }

    #[test]
    fn duplicate_sample_rejected() {
        assert!(ReplayWorld::from_records(vec![diff_rec(0, 0, 1.0), diff_rec(0, 0, 2.0)]).is_err());
    }

    #[test]
    fn exhaustion_after_single_record() {
        let w = ReplayWorld::from_records(vec![diff_rec(0, 0, 42.0)]).unwrap();
        let mut s = w.replay_sampler();
        let mut rng = RunRng::seed_from_u64(0);
        assert_eq!(s.draw(0, &mut rng), Ok(42.0));
        assert_eq!(s.draw(0, &mut rng), Err(DrawError::Exhausted(0)));
    }

    #[test]
    fn draws_cover_topic_without_replacement() {
        let recs: Vec<ReplayRecord> = (0..25).map(|i| diff_rec(3, i, i as f64 * 1.5)).collect();
        let w = ReplayWorld::from_records(recs.clone()).unwrap();
        let mut s = w.replay_sampler();
        let mut rng = RunRng::seed_from_u64(5);
        let mut drawn: Vec<f64> = (0..25).map(|_| s.draw(0, &mut rng).unwrap()).collect();
        drawn.sort_by(f64::total_cmp);
        let mut expected: Vec<f64> = recs.iter().map(|r| r.difficulty).collect();
        expected.sort_by(f64::total_cmp);
        assert_eq!(drawn, expected);
        assert!(s.draw(0, &mut rng).is_err());
    }

    #[test]
    fn first_draw_is_uniform() {
        let w = ReplayWorld::from_records(vec![diff_rec(0, 0, 1.0), diff_rec(0, 1, 2.0), diff_rec(0, 2, 3.0)]).unwrap();
        let mut rng = RunRng::seed_from_u64(12);
        let mut hits = [0usize; 3];
        for _ in 0..10_000 {
            let mut s = w.replay_sampler();
            hits[s.draw(0, &mut rng).unwrap() as usize - 1] += 1;
        }
        for h in hits {
            assert!((h as f64 / 10_000.0 - 1.0 / 3.0).abs() < 0.02, "{hits:?}");
        }
    }

    #[test]
    fn pooled_variance() {
        let w = ReplayWorld::from_records(vec![diff_rec(0, 0, 10.0), diff_rec(0, 1, 20.0)]).unwrap();
        assert_eq!(estimate_sigma2(&w).unwrap(), 50.0);
        let w = ReplayWorld::from_records(vec![diff_rec(0, 0, 5.0), diff_rec(0, 1, 5.0), diff_rec(1, 0, 9.0)]).unwrap();
        assert_eq!(estimate_sigma2(&w).unwrap(), 0.0);
        let w = ReplayWorld::from_records(vec![diff_rec(0, 0, 5.0), diff_rec(1, 0, 9.0)]).unwrap();
        assert!(matches!(estimate_sigma2(&w), Err(SamplerError::Estimation)));
    }

    #[test]
    fn qe_out_of_range_rejected() {
        assert!(ReplayWorld::from_records(vec![rec(0, 0, &[("a", 120.0)])]).is_err());
    }
}
