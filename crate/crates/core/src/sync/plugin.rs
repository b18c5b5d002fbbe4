//! External-process denoiser protocol.
//!
//! Each request is the magic `SNDR`, then little-endian `u32` step index,
//! `u32` timestep, `f64` sigma, `u8` conditional flag, `u32` length and the
//! condition bytes, then a tensor. A tensor is a `u32` rank, that many `u32`
//! dimensions, and the `f32` samples in row-major order. The reply is a single
//! tensor of the request's shape. The host closes stdin to end the session.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use super::{Conditioning, Denoiser, Latent, SyncError, TimeStep};

pub const PLUGIN_MAGIC: &[u8; 4] = b"SNDR";
const MAX_RANK: usize = 8;
const MAX_ELEMENTS: usize = 1 << 28;

fn write_tensor<W: Write>(out: &mut W, z: &Latent) -> io::Result<()> {
    out.write_all(&(z.shape().len() as u32).to_le_bytes())?;
    for d in z.shape() {
        out.write_all(&(*d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(4 * z.len());
    for v in z.data() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&buf)
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

fn read_tensor<R: Read>(r: &mut R) -> io::Result<Latent> {
    let rank = read_u32(r)? as usize;
    if rank > MAX_RANK {
        return Err(invalid(format!("tensor rank {rank} too large")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(r)? as usize);
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .filter(|n| *n <= MAX_ELEMENTS)
        .ok_or_else(|| invalid("tensor too large"))?;
    let mut raw = vec![0u8; 4 * n];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Latent::new(shape, data).map_err(|e| invalid(e.to_string()))
}

fn write_request<W: Write>(out: &mut W, z: &Latent, time: TimeStep, condition: Conditioning<'_>) -> io::Result<()> {
    out.write_all(PLUGIN_MAGIC)?;
    out.write_all(&(time.index as u32).to_le_bytes())?;
    out.write_all(&(time.t as u32).to_le_bytes())?;
    out.write_all(&time.sigma.to_le_bytes())?;
    let (flag, bytes): (u8, &[u8]) = match condition {
        Conditioning::Conditional(b) => (1, b),
        Conditioning::Unconditional => (0, &[]),
    };
    out.write_all(&[flag])?;
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)?;
    write_tensor(out, z)?;
    out.flush()
}

/// Answers requests from `input` with `denoiser` until `input` is exhausted.
pub fn serve_denoiser<R: Read, W: Write>(input: R, output: W, denoiser: &dyn Denoiser) -> io::Result<()> {
    let mut input = BufReader::new(input);
    let mut output = BufWriter::new(output);
    loop {
        let mut magic = [0u8; 4];
        match input.read_exact(&mut magic) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        }
        if &magic != PLUGIN_MAGIC {
            return Err(invalid("bad request magic"));
        }
        let index = read_u32(&mut input)? as usize;
        let t = read_u32(&mut input)? as usize;
        let mut s = [0u8; 8];
        input.read_exact(&mut s)?;
        let sigma = f64::from_le_bytes(s);
        let mut flag = [0u8; 1];
        input.read_exact(&mut flag)?;
        let len = read_u32(&mut input)? as usize;
        let mut cond = vec![0u8; len];
        input.read_exact(&mut cond)?;
        let z = read_tensor(&mut input)?;
        let condition = if flag[0] == 1 { Conditioning::Conditional(&cond) } else { Conditioning::Unconditional };
        let v = denoiser
            .velocity(&z, TimeStep { index, t, sigma }, condition)
            .map_err(|e| invalid(e.to_string()))?;
        write_tensor(&mut output, &v)?;
        output.flush()?;
    }
}

struct Pipes {
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// Denoiser hosted by a child process speaking the protocol on stdin/stdout.
pub struct ProcessDenoiser {
    child: Mutex<Child>,
    pipes: Mutex<Option<Pipes>>,
}

impl ProcessDenoiser {
    pub fn spawn(program: &str, args: &[String]) -> io::Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child: Mutex::new(child), pipes: Mutex::new(Some(Pipes { stdin, stdout })) })
    }
}

impl Denoiser for ProcessDenoiser {
    fn velocity(&self, z: &Latent, time: TimeStep, condition: Conditioning<'_>) -> Result<Latent, SyncError> {
        let protocol = |message: String| SyncError::Protocol { step: time.index, message };
        let mut guard = self.pipes.lock().map_err(|_| protocol("plug-in pipes poisoned".into()))?;
        let pipes = guard.as_mut().ok_or_else(|| protocol("plug-in already closed".into()))?;
        write_request(&mut pipes.stdin, z, time, condition).map_err(|e| protocol(format!("write failed: {e}")))?;
        let v = read_tensor(&mut pipes.stdout).map_err(|e| protocol(format!("read failed: {e}")))?;
        if v.shape() != z.shape() {
            return Err(protocol(format!("reply shape {:?} does not match {:?}", v.shape(), z.shape())));
        }
        Ok(v)
    }
}

impl Drop for ProcessDenoiser {
    fn drop(&mut self) {
        if let Ok(mut pipes) = self.pipes.lock() {
            pipes.take();
        }
        if let Ok(mut child) = self.child.lock() {
            if child.wait().is_err() {
                let _ = child.kill();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sync::OracleDenoiser;

    #[test]
    fn request_reply_round_trip_in_memory() {
        let target = Latent::new(vec![2, 2], vec![0.5, -0.25, 1.0, 0.0]).unwrap();
        let oracle = OracleDenoiser { target: target.clone() };
        let z = Latent::new(vec![2, 2], vec![1.5, 0.75, 1.0, -1.0]).unwrap();
        let time = TimeStep { index: 3, t: 4, sigma: 0.5 };
        let mut req = Vec::new();
        write_request(&mut req, &z, time, Conditioning::Conditional(b"a cat")).unwrap();
        write_request(&mut req, &z, time, Conditioning::Unconditional).unwrap();
        let mut reply = Vec::new();
        serve_denoiser(req.as_slice(), &mut reply, &oracle).unwrap();
        let mut r = reply.as_slice();
        let expected = oracle.velocity(&z, time, Conditioning::Unconditional).unwrap();
        assert_eq!(read_tensor(&mut r).unwrap(), expected);
        assert_eq!(read_tensor(&mut r).unwrap(), expected);
        assert!(r.is_empty());
    }

    #[test]
    fn rejects_oversized_tensors() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(read_tensor(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn missing_program_fails_to_spawn() {
        assert!(ProcessDenoiser::spawn("/nonexistent/denoiser", &[]).is_err());
    }
}
