//! Newline-delimited JSON evaluator protocol.
//!
//! Request:  `{"id": 7, "design": {...design/v1...}, "freqs": [...]}`
//! Response: `{"id": 7, "s21": [[re, im], ...]}`
//!
//! One object per line. Responses may arrive out of order; ids tie them back
//! to requests. A line that cannot be decoded at all is charged to the oldest
//! request still waiting for an answer.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{surrogate_eval_at, EvalError, Evaluator, SurrogateConfig, TransferFunction};
use crate::geometry::CircuitDesign;
use crate::io::DesignFile;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub design: DesignFile,
    pub freqs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Shell command whose stdin/stdout carry the protocol.
    Exec(String),
    /// `host:port` of a TCP server.
    Tcp(String),
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            Ok(Endpoint::Exec(cmd.to_string()))
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            Ok(Endpoint::Tcp(addr.to_string()))
        } else {
            Err(format!("unrecognized evaluator endpoint `{s}` (expected exec:<cmd> or tcp:<host:port>)"))
        }
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

fn spawn_reader<R: std::io::Read + Send + 'static>(r: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in BufReader::new(r).lines() {
            let stop = line.is_err();
            if tx.send(line).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl Connection {
    fn open(endpoint: &Endpoint) -> Result<Self, EvalError> {
        match endpoint {
            Endpoint::Exec(cmd) => {
                let mut child = Command::new("sh")
                    .arg("-c")
                    .arg(cmd)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| EvalError::Transport(format!("cannot start `{cmd}`: {e}")))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Self { writer: Box::new(stdin), lines: spawn_reader(stdout), child: Some(child) })
            }
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| EvalError::Transport(format!("cannot connect to {addr}: {e}")))?;
                let read = stream.try_clone().map_err(|e| EvalError::Transport(e.to_string()))?;
                Ok(Self { writer: Box::new(stream), lines: spawn_reader(read), child: None })
            }
        }
    }
}

/// Client for an external evaluator. The connection is opened lazily and
/// reused across batches; it is dropped after a transport failure or timeout.
pub struct ExternalEvaluator {
    endpoint: Endpoint,
    pub timeout: Duration,
    pub max_in_flight: usize,
    conn: Mutex<Option<Connection>>,
    next_id: Mutex<u64>,
}

impl ExternalEvaluator {
    pub fn new(endpoint: Endpoint) -> Self {
        Self {
            endpoint,
            timeout: Duration::from_secs(30),
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            conn: Mutex::new(None),
            next_id: Mutex::new(0),
        }
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.endpoint
    }

    /// Opens the connection now so an unreachable endpoint surfaces early.
    pub fn connect(&self) -> Result<(), EvalError> {
        let mut guard = self.conn.lock().unwrap();
        if guard.is_none() {
            *guard = Some(Connection::open(&self.endpoint)?);
        }
        Ok(())
    }

    fn run(
        &self,
        conn: &mut Connection,
        designs: &[CircuitDesign],
        freqs: &[f64],
        base: u64,
    ) -> (Vec<Result<TransferFunction, EvalError>>, bool) {
        let n = designs.len();
        let mut results: Vec<Option<Result<TransferFunction, EvalError>>> = vec![None; n];
        let mut waiting = BTreeSet::new();
        let mut sent = 0usize;
        let mut healthy = true;

        while results.iter().any(Option::is_none) {
            while sent < n && waiting.len() < self.max_in_flight.max(1) {
                let req = Request {
                    id: base + sent as u64,
                    design: DesignFile::from_design(&designs[sent]),
                    freqs: freqs.to_vec(),
                };
                let line = serde_json::to_string(&req).map(|mut s| {
                    s.push('\n');
                    s
                });
                let wrote = line.map_err(|e| e.to_string()).and_then(|l| {
                    conn.writer.write_all(l.as_bytes()).and_then(|_| conn.writer.flush()).map_err(|e| e.to_string())
                });
                if let Err(msg) = wrote {
                    healthy = false;
                    for slot in results.iter_mut().filter(|s| s.is_none()) {
                        *slot = Some(Err(EvalError::Transport(msg.clone())));
                    }
                    break;
                }
                waiting.insert(sent);
                sent += 1;
            }
            if waiting.is_empty() {
                break;
            }
            match conn.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let (index, outcome) = match decode_response(&line, freqs, base, n) {
                        Ok((i, r)) => (i, r),
                        Err(msg) => {
                            let oldest = *waiting.iter().next().unwrap();
                            (oldest, Err(EvalError::Decode { index: oldest, msg }))
                        }
                    };
                    if waiting.remove(&index) {
                        results[index] = Some(outcome);
                    }
                }
                Ok(Err(e)) => {
                    healthy = false;
                    for &i in &waiting {
                        results[i] = Some(Err(EvalError::Transport(e.to_string())));
                    }
                    waiting.clear();
                }
                Err(RecvTimeoutError::Timeout) => {
                    healthy = false;
                    for (i, slot) in results.iter_mut().enumerate() {
                        if slot.is_none() {
                            *slot = Some(Err(EvalError::Timeout { index: i }));
                        }
                    }
                    break;
                }
                Err(RecvTimeoutError::Disconnected) => {
                    healthy = false;
                    for slot in results.iter_mut().filter(|s| s.is_none()) {
                        *slot = Some(Err(EvalError::Transport("evaluator closed the stream".into())));
                    }
                    break;
                }
            }
        }
        (results.into_iter().map(|r| r.expect("every slot resolved")).collect(), healthy)
    }
}

fn decode_response(
    line: &str,
    freqs: &[f64],
    base: u64,
    n: usize,
) -> Result<(usize, Result<TransferFunction, EvalError>), String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let id = value.get("id").and_then(Value::as_u64).ok_or_else(|| "response lacks an integer `id`".to_string())?;
    if id < base || id >= base + n as u64 {
        return Err(format!("response id {id} does not match any pending request"));
    }
    let index = (id - base) as usize;
    if let Some(msg) = value.get("error") {
        let msg = msg.as_str().map_or_else(|| msg.to_string(), str::to_string);
        return Ok((index, Err(EvalError::Remote { index, msg })));
    }
    let field = |msg: String| EvalError::Validation { index, field: "s21".into(), msg };
    let Some(raw) = value.get("s21") else {
        return Ok((index, Err(field("missing".into()))));
    };
    let Some(items) = raw.as_array() else {
        return Ok((index, Err(field("expected an array of [re, im] pairs".into()))));
    };
    if items.len() != freqs.len() {
        return Ok((index, Err(EvalError::GridMismatch { index, expected: freqs.len(), found: items.len() })));
    }
    let mut s21 = Vec::with_capacity(items.len());
    for (k, item) in items.iter().enumerate() {
        let pair = item.as_array().filter(|p| p.len() == 2);
        let parsed = pair.and_then(|p| Some(Complex64::new(p[0].as_f64()?, p[1].as_f64()?)));
        match parsed {
            Some(c) if c.re.is_finite() && c.im.is_finite() => s21.push(c),
            _ => return Ok((index, Err(field(format!("entry {k} is not a finite [re, im] pair"))))),
        }
    }
    Ok((index, Ok(TransferFunction { freqs: freqs.to_vec(), s21 })))
}

impl Evaluator for ExternalEvaluator {
    fn evaluate_batch(&self, designs: &[CircuitDesign], freqs: &[f64]) -> Vec<Result<TransferFunction, EvalError>> {
        let base = {
            let mut next = self.next_id.lock().unwrap();
            let b = *next;
            *next += designs.len() as u64;
            b
        };
        let mut guard = self.conn.lock().unwrap();
        if guard.is_none() {
            match Connection::open(&self.endpoint) {
                Ok(c) => *guard = Some(c),
                Err(e) => return vec![Err(e); designs.len()],
            }
        }
        let (results, healthy) = self.run(guard.as_mut().unwrap(), designs, freqs, base);
        if !healthy {
            *guard = None;
        }
        results
    }
}

fn respond(line: &str, cfg: &SurrogateConfig) -> String {
    let reply = match serde_json::from_str::<Request>(line) {
        Ok(req) => {
            let outcome = req
                .design
                .to_design()
                .map_err(|e| e.to_string())
                .and_then(|d| surrogate_eval_at(&d, cfg, &req.freqs).map_err(|e| e.to_string()));
            match outcome {
                Ok(tf) => serde_json::json!({
                    "id": req.id,
                    "s21": tf.s21.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
                }),
                Err(msg) => serde_json::json!({ "id": req.id, "error": msg }),
            }
        }
        Err(e) => {
            let id = serde_json::from_str::<Value>(line).ok().and_then(|v| v.get("id").cloned());
            serde_json::json!({ "id": id, "error": format!("bad request: {e}") })
        }
    };
    reply.to_string()
}

/// Serves surrogate evaluations over a line stream until EOF.
pub fn serve_lines<R: BufRead, W: Write>(reader: R, mut writer: W, cfg: &SurrogateConfig) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", respond(&line, cfg))?;
        writer.flush()?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(listener: TcpListener, cfg: SurrogateConfig) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let cfg = cfg.clone();
        std::thread::spawn(move || {
            if let Ok(read) = stream.try_clone() {
                let _ = serve_lines(BufReader::new(read), stream, &cfg);
            }
        });
    }
    Ok(())
}
