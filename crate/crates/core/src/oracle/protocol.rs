//! Oracle wire protocol, version 1.
//!
//! UTF-8, one JSON object per line, each tagged by a `"type"` field. Unknown
//! fields are ignored on both sides.
//!
//! ```text
//! toolkit -> oracle  {"type":"hello","protocol":1,"layout":"flat-v1;T=15;...","dim":705}
//! oracle -> toolkit  {"type":"hello","protocol":1,"name":"m","version":"1","layout":"flat-v1;T=15;..."}
//! toolkit -> oracle  {"type":"predict","id":0,"features":[1.0000000000000000e0, ...]}
//! oracle -> toolkit  {"type":"score","id":0,"score":0.73}
//! toolkit -> oracle  {"type":"bye"}
//! ```
//!
//! Request ids increase by one per row over the life of the connection.
//! Responses must come back in request order, one per request. An oracle
//! may answer any request with `{"type":"error","message":"..."}`, which
//! aborts the run.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::numfmt;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Hello { protocol: u32, layout: String, dim: usize },
    Predict { id: u64, features: Vec<f64> },
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Hello {
        protocol: u32,
        name: String,
        version: String,
        layout: String,
    },
    Score { id: u64, score: f64 },
    Error { message: String },
}

#[derive(Serialize)]
struct PredictRef<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    id: u64,
    features: &'a [f64],
}

/// One request line, newline included, without copying the feature row.
pub fn encode_predict(id: u64, features: &[f64]) -> String {
    let mut line = numfmt::to_json_line(&PredictRef {
        kind: "predict",
        id,
        features,
    })
    .expect("predict request serializes");
    line.push('\n');
    line
}

pub fn encode<T: Serialize>(message: &T) -> String {
    let mut line = numfmt::to_json_line(message).expect("protocol message serializes");
    line.push('\n');
    line
}

fn quote(line: &str) -> String {
    const MAX: usize = 200;
    let line = line.trim_end_matches(['\n', '\r']);
    if line.chars().count() > MAX {
        format!("{}...", line.chars().take(MAX).collect::<String>())
    } else {
        line.to_string()
    }
}

pub fn decode_response(line: &str) -> Result<Response, OracleError> {
    serde_json::from_str(line)
        .map_err(|e| OracleError::Protocol(format!("malformed line `{}`: {e}", quote(line))))
}

pub fn decode_request(line: &str) -> Result<Request, OracleError> {
    serde_json::from_str(line)
        .map_err(|e| OracleError::Protocol(format!("malformed line `{}`: {e}", quote(line))))
}

/// Counters returned by [`serve`] when the client says goodbye or hangs up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub requests: u64,
}

/// Answer protocol requests from `input` on `output` until `bye` or EOF.
///
/// The oracle side of the protocol, for model wrappers written in Rust.
/// `layout: None` echoes whatever layout the client announces. Rows whose
/// width differs from the handshake's `dim` get an error reply.
pub fn serve<R, W, F>(
    input: R,
    mut output: W,
    name: &str,
    version: &str,
    layout: Option<&str>,
    mut score: F,
) -> Result<ServeStats, OracleError>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[f64]) -> f64,
{
    let mut stats = ServeStats::default();
    let mut dim = None;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match decode_request(&line) {
            Err(e) => {
                let msg = e.to_string();
                output.write_all(encode(&Response::Error { message: msg.clone() }).as_bytes())?;
                output.flush()?;
                return Err(OracleError::Protocol(msg));
            }
            Ok(Request::Bye) => break,
            Ok(Request::Hello { dim: d, layout: asked, .. }) => {
                dim = Some(d);
                Response::Hello {
                    protocol: PROTOCOL_VERSION,
                    name: name.to_string(),
                    version: version.to_string(),
                    layout: layout.map(str::to_string).unwrap_or(asked),
                }
            }
            Ok(Request::Predict { id, features }) => {
                stats.requests += 1;
                match dim {
                    Some(d) if d != features.len() => Response::Error {
                        message: format!("request {id} has {} features, expected {d}", features.len()),
                    },
                    _ => Response::Score {
                        id,
                        score: score(&features),
                    },
                }
            }
        };
        output.write_all(encode(&reply).as_bytes())?;
        output.flush()?;
    }
    Ok(stats)
}

/// Read one line; `None` at EOF.
pub(crate) fn read_line<R: BufRead>(reader: &mut R) -> io::Result<Option<String>> {
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        Ok(None)
    } else {
        Ok(Some(line))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_line_round_trips() {
        let line = encode_predict(7, &[0.1, -2.0]);
        assert!(line.ends_with('\n'));
        assert_eq!(
            decode_request(&line).unwrap(),
            Request::Predict { id: 7, features: vec![0.1, -2.0] }
        );
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let r = decode_response(r#"{"type":"score","id":3,"score":0.5,"latency_ms":12}"#).unwrap();
        assert_eq!(r, Response::Score { id: 3, score: 0.5 });
    }

    #[test]
    fn malformed_line_is_quoted() {
        let err = decode_response("not json at all").unwrap_err().to_string();
        assert!(err.contains("`not json at all`"), "{err}");
    }

    #[test]
    fn serve_answers_in_order() {
        let input = [
            encode(&Request::Hello { protocol: 1, layout: "L".into(), dim: 2 }),
            encode_predict(0, &[1.0, 2.0]),
            encode_predict(1, &[3.0, 4.0]),
            encode_predict(2, &[5.0]),
            encode(&Request::Bye),
        ]
        .concat();
        let mut out = Vec::new();
        let stats = serve(input.as_bytes(), &mut out, "sum", "0", Some("L"), |r| r.iter().sum::<f64>() / 10.0).unwrap();
        assert_eq!(stats.requests, 3);
        let replies: Vec<Response> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| decode_response(l).unwrap())
            .collect();
        assert!(matches!(&replies[0], Response::Hello { name, .. } if name == "sum"));
        assert_eq!(replies[1], Response::Score { id: 0, score: 0.3 });
        assert_eq!(replies[2], Response::Score { id: 1, score: 0.7 });
        assert!(matches!(replies[3], Response::Error { .. }));
    }
}
