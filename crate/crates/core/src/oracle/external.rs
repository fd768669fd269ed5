//! Child-process oracles speaking [`protocol`](super::protocol) v1.

use std::io::{BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::protocol::{self, Request, Response, PROTOCOL_VERSION};
use super::{Oracle, OracleError, OracleKind, OracleMeta};
use crate::features::FeatureLayout;

struct Connection {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
    /// Set after a failed exchange; the stream state is unknown from then on.
    broken: Option<String>,
}

/// An external model run as `sh -c <command>`.
///
/// One process serves requests strictly in sequence; concurrent callers
/// queue on an internal lock.
pub struct ExternalOracle {
    meta: OracleMeta,
    command: String,
    conn: Mutex<Connection>,
}

impl std::fmt::Debug for ExternalOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalOracle")
            .field("meta", &self.meta)
            .field("command", &self.command)
            .finish()
    }
}

impl ExternalOracle {
    /// Start the process and perform the handshake. Fails if the oracle
    /// declares a layout other than `layout`.
    pub fn spawn(command: &str, layout: &FeatureLayout) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = BufReader::new(child.stdout.take().expect("stdout piped"));
        let mut conn = Connection {
            child,
            stdin: Some(stdin),
            stdout,
            next_id: 0,
            broken: None,
        };
        match handshake(&mut conn, layout) {
            Ok((name, version, found)) => {
                let expected = layout.fingerprint();
                if found != expected {
                    shutdown(&mut conn);
                    return Err(OracleError::LayoutMismatch {
                        oracle: name,
                        expected,
                        found,
                    });
                }
                Ok(ExternalOracle {
                    meta: OracleMeta {
                        kind: OracleKind::External,
                        name,
                        version,
                        layout: found,
                    },
                    command: command.to_string(),
                    conn: Mutex::new(conn),
                })
            }
            Err(e) => {
                let _ = conn.child.kill();
                let _ = conn.child.wait();
                Err(e)
            }
        }
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

fn handshake(conn: &mut Connection, layout: &FeatureLayout) -> Result<(String, String, String), OracleError> {
    let hello = protocol::encode(&Request::Hello {
        protocol: PROTOCOL_VERSION,
        layout: layout.fingerprint(),
        dim: layout.dim(),
    });
    let stdin = conn.stdin.as_mut().expect("open until shutdown");
    stdin.write_all(hello.as_bytes())?;
    stdin.flush()?;
    let line = protocol::read_line(&mut conn.stdout)?
        .ok_or_else(|| OracleError::Protocol("oracle closed its output before the handshake".into()))?;
    match protocol::decode_response(&line)? {
        Response::Hello {
            protocol,
            name,
            version,
            layout,
        } => {
            if protocol != PROTOCOL_VERSION {
                return Err(OracleError::Protocol(format!(
                    "oracle speaks protocol {protocol}, expected {PROTOCOL_VERSION}"
                )));
            }
            Ok((name, version, layout))
        }
        Response::Error { message } => Err(OracleError::Protocol(format!("oracle error: {message}"))),
        Response::Score { .. } => Err(OracleError::Protocol(format!(
            "expected hello, got `{}`",
            line.trim_end()
        ))),
    }
}

fn shutdown(conn: &mut Connection) {
    if let Some(mut stdin) = conn.stdin.take() {
        let _ = stdin.write_all(protocol::encode(&Request::Bye).as_bytes());
        let _ = stdin.flush();
    }
    let deadline = Instant::now() + Duration::from_secs(2);
    loop {
        match conn.child.try_wait() {
            Ok(Some(_)) | Err(_) => return,
            Ok(None) if Instant::now() >= deadline => {
                let _ = conn.child.kill();
                let _ = conn.child.wait();
                return;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
        }
    }
}

fn read_scores(
    stdout: &mut BufReader<ChildStdout>,
    first_id: u64,
    count: usize,
) -> Result<Vec<f64>, OracleError> {
    let mut scores = Vec::with_capacity(count);
    for k in 0..count {
        let expected_id = first_id + k as u64;
        let Some(line) = protocol::read_line(stdout)? else {
            return Err(OracleError::CountMismatch {
                expected: count,
                found: scores.len(),
            });
        };
        match protocol::decode_response(&line)? {
            Response::Score { id, score } if id == expected_id => {
                if !(0.0..=1.0).contains(&score) {
                    return Err(OracleError::InvalidScore(score));
                }
                scores.push(score);
            }
            Response::Score { id, .. } => {
                return Err(OracleError::Protocol(format!(
                    "response out of order: expected id {expected_id}, got {id}"
                )))
            }
            Response::Error { message } => {
                return Err(OracleError::Protocol(format!("oracle error: {message}")))
            }
            Response::Hello { .. } => {
                return Err(OracleError::Protocol(format!(
                    "unexpected hello in place of response {expected_id}: `{}`",
                    line.trim_end()
                )))
            }
        }
    }
    Ok(scores)
}

impl Oracle for ExternalOracle {
    fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    fn predict_rows(&self, rows: &[f64], dim: usize) -> Result<Vec<f64>, OracleError> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(reason) = &guard.broken {
            return Err(OracleError::Protocol(format!("oracle unusable after earlier failure: {reason}")));
        }
        let count = if dim == 0 { 0 } else { rows.len() / dim };
        let first_id = guard.next_id;
        let Connection {
            child,
            stdin,
            stdout,
            ..
        } = &mut *guard;
        let stdin = stdin.as_mut().expect("open until drop");

        let (written, read) = std::thread::scope(|s| {
            let writer = s.spawn(move || -> std::io::Result<()> {
                let mut w = BufWriter::new(stdin);
                for (k, row) in rows.chunks_exact(dim.max(1)).take(count).enumerate() {
                    w.write_all(protocol::encode_predict(first_id + k as u64, row).as_bytes())?;
                }
                w.flush()
            });
            let read = read_scores(stdout, first_id, count);
            if read.is_err() {
                // unblock a writer stuck on a full pipe
                let _ = child.kill();
            }
            (writer.join().expect("writer thread does not panic"), read)
        });

        guard.next_id = first_id + count as u64;
        let result = match (read, written) {
            (Err(e), _) => Err(e),
            (Ok(_), Err(e)) => Err(OracleError::Io(e)),
            (Ok(scores), Ok(())) => Ok(scores),
        };
        if let Err(e) = &result {
            guard.broken = Some(e.to_string());
        }
        result
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        let conn = self.conn.get_mut().unwrap_or_else(|p| p.into_inner());
        shutdown(conn);
    }
}
