//! Wire protocol for out-of-process scorers.
//!
//! The child speaks newline-delimited JSON over its standard streams, one
//! object per line:
//!
//!   request:  {"id": <uint64>, "dim": <uint32>, "indices": [<uint32>...], "values": [<float64>...]}
//!   response: {"id": <uint64>, "scores": [<float64>...]}
//!
//! Every request gets exactly one response, in request order. Child stderr is
//! forwarded verbatim to this process's stderr.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::blackbox::{ScoreVector, Scorer};
use crate::error::{Error, Result};
use crate::numkit::SparseVector;

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    dim: u32,
    indices: &'a [u32],
    values: &'a [f64],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    scores: Vec<f64>,
}

struct Pipes {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

/// A scorer backed by a child process speaking the line protocol.
///
/// Access to the child's pipes is serialized behind a mutex; concurrent
/// callers block until their whole batch is answered.
pub struct ExternalScorer {
    pipes: Mutex<Pipes>,
    dim: usize,
    class_ids: Vec<i32>,
    timeout: Duration,
}

impl ExternalScorer {
    /// Spawns `command` (program + args) and wires up the protocol. The
    /// external model's classes are positional: ids 0..n_classes.
    pub fn spawn(
        command: &[String],
        dim: usize,
        n_classes: usize,
        timeout: Duration,
    ) -> Result<Self> {
        let (program, args) = command.split_first().ok_or_else(|| Error::Config(
            "external scorer command is empty".into(),
        ))?;
        if n_classes < 2 {
            return Err(Error::Config(format!(
                "external scorer needs at least 2 classes, got {n_classes}"
            )));
        }
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Config(format!("failed to spawn {program:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");

        std::thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                eprintln!("external scorer: {line}");
            }
        });

        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });

        Ok(ExternalScorer {
            pipes: Mutex::new(Pipes {
                child,
                stdin,
                lines: rx,
                next_id: 0,
            }),
            dim,
            class_ids: (0..n_classes as i32).collect(),
            timeout,
        })
    }

    fn read_response(&self, pipes: &mut Pipes, expect_id: u64) -> Result<ScoreVector> {
        let line = match pipes.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                return Err(Error::Protocol {
                    message: format!("failed reading scorer output: {e}"),
                    payload: String::new(),
                })
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Protocol {
                    message: format!("timed out after {:?} waiting for scores", self.timeout),
                    payload: String::new(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(Error::Protocol {
                    message: "scorer closed its output".into(),
                    payload: String::new(),
                })
            }
        };
        let response: Response = serde_json::from_str(&line).map_err(|e| Error::Protocol {
            message: format!("malformed response: {e}"),
            payload: line.clone(),
        })?;
        if response.id != expect_id {
            return Err(Error::Protocol {
                message: format!("id mismatch: expected {expect_id}, got {}", response.id),
                payload: line,
            });
        }
        if response.scores.len() != self.class_ids.len() {
            return Err(Error::Protocol {
                message: format!(
                    "expected {} scores, got {}",
                    self.class_ids.len(),
                    response.scores.len()
                ),
                payload: line,
            });
        }
        ScoreVector::new(response.scores, self.class_ids.clone()).map_err(|e| Error::Protocol {
            message: format!("scores not normalized: {e}"),
            payload: line,
        })
    }
}

impl Scorer for ExternalScorer {
    fn dim(&self) -> usize {
        self.dim
    }

    fn class_ids(&self) -> &[i32] {
        &self.class_ids
    }

    fn score(&self, x: &SparseVector) -> Result<ScoreVector> {
        Ok(self.score_batch(std::slice::from_ref(x))?.remove(0))
    }

    /// Writes the whole batch before reading any response; responses must
    /// come back in request order.
    fn score_batch(&self, xs: &[SparseVector]) -> Result<Vec<ScoreVector>> {
        let mut pipes = self.pipes.lock().expect("scorer mutex");
        let first_id = pipes.next_id;
        let mut payload = String::new();
        for (offset, x) in xs.iter().enumerate() {
            if x.dim() != self.dim {
                return Err(Error::Contract(format!(
                    "dimension mismatch: instance {} vs scorer {}",
                    x.dim(),
                    self.dim
                )));
            }
            let request = Request {
                id: first_id + offset as u64,
                dim: x.dim() as u32,
                indices: x.indices(),
                values: x.values(),
            };
            payload.push_str(&serde_json::to_string(&request)?);
            payload.push('\n');
        }
        pipes.next_id += xs.len() as u64;
        pipes
            .stdin
            .write_all(payload.as_bytes())
            .and_then(|_| pipes.stdin.flush())
            .map_err(|e| Error::Protocol {
                message: format!("failed writing request: {e}"),
                payload: String::new(),
            })?;
        (0..xs.len())
            .map(|offset| self.read_response(&mut pipes, first_id + offset as u64))
            .collect()
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        if let Ok(mut pipes) = self.pipes.lock() {
            let _ = pipes.child.kill();
            let _ = pipes.child.wait();
        }
    }
}

/// Misbehaviours the bundled echo scorer can simulate, for exercising the
/// protocol error paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EchoMode {
    /// well-formed deterministic scores
    Normal,
    /// scores that do not sum to one
    Unnormalized,
    /// answers with the wrong request id
    WrongId,
    /// emits a non-JSON line
    Garbage,
    /// never answers
    Silent,
}

/// Loopback scorer: reads requests from stdin and answers each with
/// deterministic normalized scores derived from the instance.
pub fn run_echo_scorer(mode: EchoMode, n_classes: usize) -> std::io::Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("echo-scorer: bad request: {e}");
                continue;
            }
        };
        let id = request["id"].as_u64().unwrap_or(0);
        let values: Vec<f64> = request["values"]
            .as_array()
            .map(|a| a.iter().filter_map(|v| v.as_f64()).collect())
            .unwrap_or_default();
        let mass: f64 = values.iter().map(|v| v.abs()).sum();
        let nnz = values.len() as u64;

        match mode {
            EchoMode::Silent => continue,
            EchoMode::Garbage => {
                writeln!(out, "this is not json")?;
            }
            EchoMode::Unnormalized => {
                let scores = vec![0.6; n_classes];
                writeln!(out, "{}", serde_json::json!({ "id": id, "scores": scores }))?;
            }
            EchoMode::WrongId => {
                let scores = echo_scores(mass, nnz, n_classes);
                writeln!(out, "{}", serde_json::json!({ "id": id + 1, "scores": scores }))?;
            }
            EchoMode::Normal => {
                let scores = echo_scores(mass, nnz, n_classes);
                writeln!(out, "{}", serde_json::json!({ "id": id, "scores": scores }))?;
            }
        }
        out.flush()?;
    }
    Ok(())
}

fn echo_scores(mass: f64, nnz: u64, n_classes: usize) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..n_classes as u64)
        .map(|c| 1.0 + ((nnz + c * 7) % 5) as f64)
        .collect();
    raw[0] += mass / (1.0 + mass);
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}
