//! Length-prefixed little-endian framing for the environment server.
//!
//! Every frame is a `u32` payload length followed by the payload. Requests start
//! with an opcode byte. Responses start with a status byte: 0 is followed by the
//! request opcode and its body, 1 by a `u16` length and a UTF-8 message.

use std::io::{Read, Write};

use crate::error::{RunError, RunResult};

pub const OP_RESET: u8 = 1;
pub const OP_STEP: u8 = 2;
pub const OP_OBS_SPEC: u8 = 3;
pub const OP_CLOSE: u8 = 4;

const MAX_FRAME: u32 = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Reset { seed: u64 },
    Step { action: Vec<f64> },
    ObsSpec,
    Close,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub len: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Reset { observation: Vec<f64> },
    Step { observation: Vec<f64>, done: bool },
    ObsSpec { fields: Vec<FieldSpec> },
    Closed,
    Error { message: String },
}

fn proto(msg: impl Into<String>) -> RunError {
    RunError::Protocol(msg.into())
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> std::io::Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| std::io::Error::other("frame too large"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream before the header.
pub fn read_frame<R: Read>(r: &mut R) -> RunResult<Option<Vec<u8>>> {
    let mut head = [0u8; 4];
    match r.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(RunError::io("<socket>", e)),
    }
    let len = u32::from_le_bytes(head);
    if len > MAX_FRAME {
        return Err(proto(format!("frame of {len} bytes exceeds the limit")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf).map_err(|e| RunError::io("<socket>", e))?;
    Ok(Some(buf))
}

struct Cursor<'a> {
    buf: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> RunResult<&'a [u8]> {
        if self.buf.len() < n {
            return Err(proto("truncated message"));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> RunResult<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> RunResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> RunResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> RunResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> RunResult<Vec<f64>> {
        let n = self.u32()? as usize;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| proto("length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn finish(&self) -> RunResult<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(proto(format!("{} trailing bytes", self.buf.len())))
        }
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_request(req: &Request) -> Vec<u8> {
    let mut out = Vec::new();
    match req {
        Request::Reset { seed } => {
            out.push(OP_RESET);
            out.extend_from_slice(&seed.to_le_bytes());
        }
        Request::Step { action } => {
            out.push(OP_STEP);
            put_f64s(&mut out, action);
        }
        Request::ObsSpec => out.push(OP_OBS_SPEC),
        Request::Close => out.push(OP_CLOSE),
    }
    out
}

pub fn decode_request(buf: &[u8]) -> RunResult<Request> {
    let mut c = Cursor { buf };
    let req = match c.u8()? {
        OP_RESET => Request::Reset { seed: c.u64()? },
        OP_STEP => Request::Step { action: c.f64s()? },
        OP_OBS_SPEC => Request::ObsSpec,
        OP_CLOSE => Request::Close,
        op => return Err(proto(format!("unknown opcode {op}"))),
    };
    c.finish()?;
    Ok(req)
}

pub fn encode_response(resp: &Response) -> Vec<u8> {
    let mut out = Vec::new();
    match resp {
        Response::Error { message } => {
            out.push(1);
            let bytes = message.as_bytes();
            let n = bytes.len().min(u16::MAX as usize);
            out.extend_from_slice(&(n as u16).to_le_bytes());
            out.extend_from_slice(&bytes[..n]);
        }
        Response::Reset { observation } => {
            out.extend_from_slice(&[0, OP_RESET]);
            put_f64s(&mut out, observation);
        }
        Response::Step { observation, done } => {
            out.extend_from_slice(&[0, OP_STEP, u8::from(*done)]);
            put_f64s(&mut out, observation);
        }
        Response::ObsSpec { fields } => {
            out.extend_from_slice(&[0, OP_OBS_SPEC]);
            out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
            for f in fields {
                out.extend_from_slice(&(f.name.len() as u16).to_le_bytes());
                out.extend_from_slice(f.name.as_bytes());
                out.extend_from_slice(&f.len.to_le_bytes());
            }
        }
        Response::Closed => out.extend_from_slice(&[0, OP_CLOSE]),
    }
    out
}

pub fn decode_response(buf: &[u8]) -> RunResult<Response> {
    let mut c = Cursor { buf };
    let resp = match c.u8()? {
        1 => {
            let n = c.u16()? as usize;
            let message = String::from_utf8_lossy(c.take(n)?).into_owned();
            Response::Error { message }
        }
        0 => match c.u8()? {
            OP_RESET => Response::Reset { observation: c.f64s()? },
            OP_STEP => {
                let done = c.u8()? != 0;
                Response::Step { observation: c.f64s()?, done }
            }
            OP_OBS_SPEC => {
                let n = c.u32()? as usize;
                let mut fields = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let len = c.u16()? as usize;
                    let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| proto("field name is not UTF-8"))?;
                    fields.push(FieldSpec { name, len: c.u32()? });
                }
                Response::ObsSpec { fields }
            }
            OP_CLOSE => Response::Closed,
            op => return Err(proto(format!("unknown response kind {op}"))),
        },
        s => return Err(proto(format!("unknown status {s}"))),
    };
    c.finish()?;
    Ok(resp)
}
