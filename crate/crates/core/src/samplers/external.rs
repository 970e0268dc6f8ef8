//! Live difficulty estimates from an adapter process.
//!
//! The adapter reads one JSON request per line on stdin,
//! `{"id": <int>, "topic": <string>}`, and answers each with one line on
//! stdout, `{"id": <int>, "difficulty": <number>}`. Responses may arrive in any
//! order and are matched by id; answers to requests that already timed out
//! are discarded.

use super::{DrawError, Sampler, SamplerError, World, WorldKind};
use crate::ledger::{keywords_from_name, TopicId, TopicMeta};
use crate::rng::RunRng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

fn default_timeout_secs() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

impl AdapterConfig {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs_f64();
        self
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    topic: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    difficulty: f64,
}

/// A running adapter process.
pub struct AdapterSession {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    next_id: u64,
    timeout: Duration,
}

impl AdapterSession {
    pub fn spawn(config: &AdapterConfig) -> Result<Self, SamplerError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| SamplerError::Config("adapter command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SamplerError::io(format!("spawning adapter {program:?}"), e))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            next_id: 0,
            timeout: config.timeout(),
        })
    }

    /// Sends every request, then waits up to the timeout for all answers.
    pub fn request_batch(&mut self, topics: &[&str]) -> Vec<Result<f64, DrawError>> {
        let mut results: Vec<Option<Result<f64, DrawError>>> = vec![None; topics.len()];
        let mut outstanding: BTreeMap<u64, usize> = BTreeMap::new();

        let mut payload = String::new();
        for (slot, topic) in topics.iter().enumerate() {
            let id = self.next_id;
            self.next_id += 1;
            outstanding.insert(id, slot);
            payload.push_str(&serde_json::to_string(&Request { id, topic }).expect("request serializes"));
            payload.push('\n');
        }
        let written = match self.stdin.as_mut() {
            Some(stdin) => stdin.write_all(payload.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(std::io::Error::other("adapter stdin closed")),
        };
        if let Err(e) = written {
            let err = DrawError::Adapter(format!("writing request: {e}"));
            return vec![Err(err); topics.len()];
        }

        let deadline = Instant::now() + self.timeout;
        while !outstanding.is_empty() {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                break;
            }
            match self.lines.recv_timeout(left) {
                Ok(line) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    if let Some((slot, outcome)) = parse_response(&line, &mut outstanding) {
                        results[slot] = Some(outcome);
                    }
                }
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => {
                    for (_, slot) in std::mem::take(&mut outstanding) {
                        results[slot] = Some(Err(DrawError::Adapter("adapter closed its output".into())));
                    }
                }
            }
        }
        for (_, slot) in outstanding {
            results[slot] = Some(Err(DrawError::Timeout(self.timeout)));
        }
        results.into_iter().map(|r| r.expect("every slot resolved")).collect()
    }
}

/// Matches one response line to an outstanding request.
///
/// A line without a usable id is charged to the oldest outstanding request.
fn parse_response(line: &str, outstanding: &mut BTreeMap<u64, usize>) -> Option<(usize, Result<f64, DrawError>)> {
    match serde_json::from_str::<Response>(line) {
        Ok(resp) => {
            let slot = outstanding.remove(&resp.id)?;
            if resp.difficulty.is_finite() && (0.0..=100.0).contains(&resp.difficulty) {
                Some((slot, Ok(resp.difficulty)))
            } else {
                Some((slot, Err(DrawError::OutOfRange(resp.difficulty))))
            }
        }
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(serde_json::Value::as_u64));
            let slot = match id {
                Some(id) => outstanding.remove(&id)?,
                None => {
                    let (&oldest, _) = outstanding.iter().next()?;
                    outstanding.remove(&oldest)?
                }
            };
            Some((slot, Err(DrawError::Malformed(format!("{e}: {line}")))))
        }
    }
}

impl Drop for AdapterSession {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One request to a freshly spawned adapter.
pub fn external_draw(config: &AdapterConfig, topic_name: &str) -> Result<f64, DrawError> {
    let mut session = AdapterSession::spawn(config).map_err(|e| DrawError::Adapter(e.to_string()))?;
    session
        .request_batch(&[topic_name])
        .pop()
        .unwrap_or_else(|| Err(DrawError::Adapter("no response slot".into())))
}

/// Topics whose difficulty only an adapter can report; no true means.
#[derive(Debug, Clone)]
pub struct ExternalWorld {
    topics: Vec<TopicMeta>,
    adapter: AdapterConfig,
}

impl ExternalWorld {
    pub fn new(names: Vec<String>, adapter: AdapterConfig) -> Result<Self, SamplerError> {
        if names.is_empty() {
            return Err(SamplerError::Config("external world needs at least one topic".into()));
        }
        let topics = names
            .into_iter()
            .enumerate()
            .map(|(id, name)| TopicMeta {
                id,
                keywords: keywords_from_name(&name),
                name,
            })
            .collect();
        Ok(Self { topics, adapter })
    }

    pub fn adapter(&self) -> &AdapterConfig {
        &self.adapter
    }
}

impl World for ExternalWorld {
    fn topics(&self) -> &[TopicMeta] {
        &self.topics
    }

    fn kind(&self) -> WorldKind {
        WorldKind::External
    }

    fn true_means(&self) -> Option<&[f64]> {
        None
    }

    fn sampler(&self) -> Result<Box<dyn Sampler + '_>, SamplerError> {
        Ok(Box::new(ExternalSampler {
            topics: &self.topics,
            session: AdapterSession::spawn(&self.adapter)?,
        }))
    }
}

pub struct ExternalSampler<'a> {
    topics: &'a [TopicMeta],
    session: AdapterSession,
}

impl Sampler for ExternalSampler<'_> {
    fn draw_batch(&mut self, topics: &[TopicId], _rng: &mut RunRng) -> Vec<Result<f64, DrawError>> {
        let names: Vec<&str> = topics.iter().map(|&t| self.topics[t].name.as_str()).collect();
        self.session.request_batch(&names)
    }
}
