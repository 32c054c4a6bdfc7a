//! External-grounder wire protocol over a subprocess's standard streams.
//!
//! One JSON document per line, UTF-8. Request:
//!
//! ```json
//! {"id": "q-42", "kind": "pick", "instruction": "...", "scene": { ... }}
//! ```
//!
//! Response, matched to the request by `id`:
//!
//! ```json
//! {"id": "q-42", "box": [x1, y1, x2, y2], "confidence": 0.87}
//! ```
//!
//! One request is in flight per connection. A response whose id does not
//! match the outstanding request is malformed.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use groundgen_core::grounding::{AdapterError, AdapterResponse, ExternalGrounder, GroundingQuery};
use groundgen_core::instruction::TaskKind;
use groundgen_core::scene::{BBox, Scene};

#[derive(Serialize)]
struct RequestWire<'a> {
    id: &'a str,
    kind: TaskKind,
    instruction: &'a str,
    scene: &'a Scene,
}

#[derive(Deserialize)]
struct RequestOwned {
    id: String,
    #[allow(dead_code)]
    kind: TaskKind,
    #[allow(dead_code)]
    instruction: String,
    scene: Scene,
}

#[derive(Serialize, Deserialize)]
struct ResponseWire {
    id: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
}

/// A grounder reached by spawning a subprocess and speaking line-delimited
/// JSON over its stdin/stdout.
pub struct SubprocessAdapter {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
}

impl SubprocessAdapter {
    /// Spawn `command` (split on whitespace; no shell quoting).
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, AdapterError> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| AdapterError::Io("empty adapter command".to_string()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Io(format!("cannot spawn `{command}`: {e}")))?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| AdapterError::Io("adapter stdin unavailable".to_string()))?;
        let stdout = child
            .stdout
            .take()
            .ok_or_else(|| AdapterError::Io("adapter stdout unavailable".to_string()))?;
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
            next_id: 0,
        })
    }

    fn request(&mut self, query: &GroundingQuery) -> Result<AdapterResponse, AdapterError> {
        self.next_id += 1;
        let id = format!("q-{}", self.next_id);
        let wire = RequestWire {
            id: &id,
            kind: query.kind,
            instruction: &query.instruction,
            scene: &query.scene,
        };
        let mut line = serde_json::to_string(&wire)
            .map_err(|e| AdapterError::Io(format!("cannot serialize request: {e}")))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|()| self.stdin.flush())
            .map_err(|e| AdapterError::Io(format!("cannot write request: {e}")))?;

        let line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(AdapterError::Io(format!("cannot read response: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(AdapterError::Timeout),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(AdapterError::Io("adapter closed its stdout".to_string()))
            }
        };
        let response: ResponseWire = serde_json::from_str(&line)
            .map_err(|e| AdapterError::Malformed(format!("{e} in `{line}`")))?;
        if response.id != id {
            return Err(AdapterError::Malformed(format!(
                "response id `{}` does not match request id `{id}`",
                response.id
            )));
        }
        Ok(AdapterResponse {
            bbox: response.bbox.into(),
            confidence: response.confidence,
        })
    }
}

impl ExternalGrounder for SubprocessAdapter {
    fn ground(&mut self, query: &GroundingQuery) -> Result<AdapterResponse, AdapterError> {
        self.request(query)
    }
}

impl Drop for SubprocessAdapter {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Behavior knobs for the built-in echo test double.
#[derive(Debug, Clone)]
pub struct EchoOptions {
    /// Fixed box to answer with; when unset, the first object's box.
    pub fixed_box: Option<BBox>,
    pub confidence: f64,
    pub delay: Duration,
    /// Respond with a non-JSON line.
    pub malformed: bool,
    /// Respond with a wrong request id.
    pub wrong_id: bool,
}

impl Default for EchoOptions {
    fn default() -> Self {
        Self {
            fixed_box: None,
            confidence: 1.0,
            delay: Duration::ZERO,
            malformed: false,
            wrong_id: false,
        }
    }
}

/// Serve the echo adapter on the given streams until EOF. Answers every
/// request with the configured box (or the scene's first object box).
pub fn serve_echo(
    input: impl std::io::Read,
    mut output: impl Write,
    options: &EchoOptions,
) -> std::io::Result<()> {
    let reader = BufReader::new(input);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !options.delay.is_zero() {
            std::thread::sleep(options.delay);
        }
        if options.malformed {
            output.write_all(b"this is not json\n")?;
            output.flush()?;
            continue;
        }
        let request: RequestOwned = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("echo-adapter: bad request: {e}");
                continue;
            }
        };
        let bbox = options
            .fixed_box
            .or_else(|| request.scene.objects.first().map(|o| o.bbox))
            .unwrap_or(BBox::new(0.0, 0.0, 1.0, 1.0));
        let response = ResponseWire {
            id: if options.wrong_id {
                format!("{}-mismatch", request.id)
            } else {
                request.id
            },
            bbox: bbox.into(),
            confidence: options.confidence,
        };
        let mut line = serde_json::to_string(&response)?;
        line.push('\n');
        output.write_all(line.as_bytes())?;
        output.flush()?;
    }
    Ok(())
}
