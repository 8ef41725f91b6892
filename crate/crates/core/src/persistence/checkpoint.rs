//! Binary checkpoint container.
//!
//! ```text
//! "SPWM" | u32 version | u64 body length | sha256(body) | body
//! ```
//!
//! All integers are little-endian. Tensor payloads are 32-bit floats unless
//! the checkpoint was written in 64-bit precision.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::nn::{Algorithm, Moments, OptimizerConfig, OptimizerState, Precision};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPWM";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub precision: Precision,
    pub tensors: Vec<NamedTensor>,
    pub optimizer: OptimizerState,
    /// The run configuration, serialized as TOML.
    pub config: String,
    pub rng_seed: u64,
    /// Position of the training RNG stream.
    pub rng_word_pos: u128,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LE>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn put_payload(out: &mut Vec<u8>, data: &[f64], precision: Precision) {
    for v in data {
        match precision {
            Precision::F32 => out.write_f32::<LE>(*v as f32).unwrap(),
            Precision::F64 => out.write_f64::<LE>(*v).unwrap(),
        }
    }
}

pub fn checkpoint_to_bytes(ck: &Checkpoint) -> Vec<u8> {
    let p = ck.precision;
    let mut body = Vec::new();
    body.push(match p {
        Precision::F32 => 0,
        Precision::F64 => 1,
    });
    body.write_u64::<LE>(ck.iteration).unwrap();
    body.write_u64::<LE>(ck.rng_seed).unwrap();
    body.write_u128::<LE>(ck.rng_word_pos).unwrap();
    put_str(&mut body, &ck.config);
    body.write_u32::<LE>(ck.tensors.len() as u32).unwrap();
    for t in &ck.tensors {
        put_str(&mut body, &t.name);
        body.push(t.shape.len() as u8);
        for d in &t.shape {
            body.write_u64::<LE>(*d as u64).unwrap();
        }
        put_payload(&mut body, &t.data, p);
    }
    let opt = &ck.optimizer;
    let cfg = &opt.config;
    body.push(cfg.algorithm.tag());
    for v in [cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon, cfg.weight_decay, cfg.trust_clip] {
        body.write_f64::<LE>(v).unwrap();
    }
    body.write_u64::<LE>(opt.step_count).unwrap();
    body.write_u32::<LE>(opt.moments.len() as u32).unwrap();
    for (name, mo) in &opt.moments {
        put_str(&mut body, name);
        body.write_u64::<LE>(mo.steps).unwrap();
        body.write_u64::<LE>(mo.m.len() as u64).unwrap();
        put_payload(&mut body, &mo.m, p);
        put_payload(&mut body, &mo.v, p);
    }

    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.write_u32::<LE>(CHECKPOINT_VERSION).unwrap();
    out.write_u64::<LE>(body.len() as u64).unwrap();
    out.extend_from_slice(&Sha256::digest(&body));
    out.extend_from_slice(&body);
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct BodyReader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl BodyReader<'_> {
    fn fail(&self, what: &str) -> Error {
        Error::Truncated(format!("body ends while reading {what} at byte {}", self.cur.position()))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        self.cur.read_u8().map_err(|_| self.fail(what))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.cur.read_u32::<LE>().map_err(|_| self.fail(what))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.cur.read_u64::<LE>().map_err(|_| self.fail(what))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.cur.read_f64::<LE>().map_err(|_| self.fail(what))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        self.check_remaining(len, what)?;
        let mut buf = vec![0; len];
        self.cur.read_exact(&mut buf).map_err(|_| self.fail(what))?;
        String::from_utf8(buf).map_err(|_| Error::CorruptHeader(format!("{what} is not UTF-8")))
    }

    fn check_remaining(&self, bytes: usize, what: &str) -> Result<()> {
        let left = self.cur.get_ref().len() as u64 - self.cur.position();
        if (bytes as u64) > left {
            Err(self.fail(what))
        } else {
            Ok(())
        }
    }

    fn payload(&mut self, len: usize, precision: Precision, what: &str) -> Result<Vec<f64>> {
        let width = match precision {
            Precision::F32 => 4,
            Precision::F64 => 8,
        };
        self.check_remaining(len.saturating_mul(width), what)?;
        (0..len)
            .map(|_| match precision {
                Precision::F32 => self.cur.read_f32::<LE>().map(|v| v as f64),
                Precision::F64 => self.cur.read_f64::<LE>(),
            })
            .collect::<std::io::Result<Vec<f64>>>()
            .map_err(|_| self.fail(what))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::CorruptHeader("missing SPWM magic".into()));
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated("header ends before the version field".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated(format!("header is {} bytes, expected {HEADER_LEN}", bytes.len())));
    }
    let body_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[HEADER_LEN..];
    if (body.len() as u64) < body_len {
        return Err(Error::Truncated(format!("body is {} bytes, header declares {body_len}", body.len())));
    }
    if body.len() as u64 > body_len {
        return Err(Error::CorruptHeader(format!(
            "{} trailing bytes after the declared body",
            body.len() as u64 - body_len
        )));
    }
    let computed = Sha256::digest(body);
    if computed.as_slice() != &bytes[16..48] {
        return Err(Error::Checksum {
            stored: hex(&bytes[16..48]),
            computed: hex(&computed),
        });
    }

    let mut r = BodyReader { cur: Cursor::new(body) };
    let precision = match r.u8("precision")? {
        0 => Precision::F32,
        1 => Precision::F64,
        other => return Err(Error::CorruptHeader(format!("unknown precision tag {other}"))),
    };
    let iteration = r.u64("iteration")?;
    let rng_seed = r.u64("rng seed")?;
    let rng_word_pos = r.cur.read_u128::<LE>().map_err(|_| r.fail("rng position"))?;
    let config = r.string("config")?;
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let name = r.string("tensor name")?;
        let ndim = r.u8("tensor rank")?;
        let shape = (0..ndim)
            .map(|_| r.u64("tensor shape").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d)).ok_or_else(|| {
            Error::CorruptHeader(format!("tensor `{name}` shape overflows"))
        })?;
        let data = r.payload(len, precision, &name)?;
        tensors.push(NamedTensor { name, shape, data });
    }
    let algorithm = Algorithm::from_tag(r.u8("optimizer")?)
        .ok_or_else(|| Error::CorruptHeader("unknown optimizer tag".into()))?;
    let mut h = [0.0; 6];
    for v in h.iter_mut() {
        *v = r.f64("optimizer hyperparameters")?;
    }
    let mut optimizer = OptimizerState::new(OptimizerConfig {
        algorithm,
        learning_rate: h[0],
        beta1: h[1],
        beta2: h[2],
        epsilon: h[3],
        weight_decay: h[4],
        trust_clip: h[5],
    });
    optimizer.step_count = r.u64("optimizer step count")?;
    let moments = r.u32("moment count")?;
    for _ in 0..moments {
        let name = r.string("moment name")?;
        let steps = r.u64("moment steps")?;
        let len = r.u64("moment length")? as usize;
        let m = r.payload(len, precision, &name)?;
        let v = r.payload(len, precision, &name)?;
        optimizer.moments.insert(name, Moments { steps, m, v });
    }
    if r.cur.position() != body.len() as u64 {
        return Err(Error::CorruptHeader("unparsed bytes at the end of the body".into()));
    }
    Ok(Checkpoint {
        iteration,
        precision,
        tensors,
        optimizer,
        config,
        rng_seed,
        rng_word_pos,
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_file(path, &checkpoint_to_bytes(ck))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_bytes(&read_file(path)?)
}
