//! Ternary codes, their two-bitplane packing and popcount Hamming distance.
//!
//! Each trit maps to a 2-bit pattern `{-1, 0, +1} -> {01, 00, 10}`. The packed
//! form keeps the first bit of every pattern in the `pos` plane and the second
//! bit in the `neg` plane, so the Hamming distance between two encodings is
//! `popcount(pos ^ pos') + popcount(neg ^ neg')`.

use std::io::{Read, Write};

use crate::activation::{hard_value, validate_alpha, Trit};
use crate::error::{Error, Result};

pub const CODE_MAGIC: &[u8; 4] = b"TNC1";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TernaryCode {
    trits: Vec<Trit>,
}

impl TernaryCode {
    pub fn new(trits: Vec<Trit>) -> Self {
        Self { trits }
    }

    /// Builds a code from integer values, rejecting anything outside {-1, 0, 1}.
    pub fn from_values(values: &[i8]) -> Result<Self> {
        values
            .iter()
            .map(|&v| Trit::from_i8(v).ok_or_else(|| Error::format("ternary code", format!("invalid trit {v}"))))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn trits(&self) -> &[Trit] {
        &self.trits
    }

    pub fn values(&self) -> Vec<i8> {
        self.trits.iter().map(|t| t.value()).collect()
    }

    pub fn len(&self) -> usize {
        self.trits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trits.is_empty()
    }
}

pub(crate) fn words_for(d: usize) -> usize {
    d.div_ceil(64)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedCode {
    d: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
}

impl PackedCode {
    /// Builds a packed code from raw planes, checking the layout invariants.
    pub fn from_planes(d: usize, pos: Vec<u64>, neg: Vec<u64>) -> Result<Self> {
        let w = words_for(d);
        if pos.len() != w || neg.len() != w {
            return Err(Error::ShapeMismatch {
                expected: format!("{w} words per plane"),
                got: format!("{} / {}", pos.len(), neg.len()),
            });
        }
        if pos.iter().zip(&neg).any(|(p, n)| p & n != 0) {
            return Err(Error::format("packed code", "a trit is set in both planes"));
        }
        if let (Some(p), Some(n)) = (pos.last(), neg.last()) {
            let tail = d % 64;
            if tail != 0 && (p | n) >> tail != 0 {
                return Err(Error::format("packed code", "bits set beyond code length"));
            }
        }
        Ok(Self { d, pos, neg })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn pos(&self) -> &[u64] {
        &self.pos
    }

    pub fn neg(&self) -> &[u64] {
        &self.neg
    }
}

/// Applies the hard ternary threshold element-wise.
pub fn ternarize(features: &[f64], alpha: f64) -> Result<TernaryCode> {
    validate_alpha(alpha)?;
    features
        .iter()
        .map(|&x| {
            if x.is_finite() {
                Ok(hard_value(x, alpha))
            } else {
                Err(Error::NonFinite(x))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(TernaryCode::new)
}

pub fn pack(code: &TernaryCode) -> PackedCode {
    let d = code.len();
    let w = words_for(d);
    let mut pos = vec![0u64; w];
    let mut neg = vec![0u64; w];
    for (i, t) in code.trits.iter().enumerate() {
        let bit = 1u64 << (i % 64);
        match t {
            Trit::Pos => pos[i / 64] |= bit,
            Trit::Neg => neg[i / 64] |= bit,
            Trit::Zero => {}
        }
    }
    PackedCode { d, pos, neg }
}

pub fn unpack(packed: &PackedCode) -> TernaryCode {
    let trits = (0..packed.d)
        .map(|i| {
            let bit = 1u64 << (i % 64);
            if packed.pos[i / 64] & bit != 0 {
                Trit::Pos
            } else if packed.neg[i / 64] & bit != 0 {
                Trit::Neg
            } else {
                Trit::Zero
            }
        })
        .collect();
    TernaryCode::new(trits)
}

/// Concatenated 2-bit patterns, `+1 -> "10"`, `0 -> "00"`, `-1 -> "01"`.
pub fn encode_binary(code: &TernaryCode) -> String {
    let mut s = String::with_capacity(2 * code.len());
    for t in &code.trits {
        s.push_str(match t {
            Trit::Pos => "10",
            Trit::Zero => "00",
            Trit::Neg => "01",
        });
    }
    s
}

#[inline]
pub(crate) fn hamming_words(pos_a: &[u64], neg_a: &[u64], pos_b: &[u64], neg_b: &[u64]) -> u32 {
    let p: u32 = pos_a.iter().zip(pos_b).map(|(x, y)| (x ^ y).count_ones()).sum();
    let n: u32 = neg_a.iter().zip(neg_b).map(|(x, y)| (x ^ y).count_ones()).sum();
    p + n
}

/// Hamming distance between the 2-bit encodings of two codes.
pub fn hamming(a: &PackedCode, b: &PackedCode) -> Result<u32> {
    if a.d != b.d {
        return Err(Error::DimensionMismatch(a.d, b.d));
    }
    Ok(hamming_words(&a.pos, &a.neg, &b.pos, &b.neg))
}

/// Writes codes in the `TNC1` layout: magic, `u32 n`, `u32 d`, then per code
/// the `pos` plane words followed by the `neg` plane words, all little-endian.
pub fn write_codes<W: Write>(mut w: W, d: usize, codes: &[PackedCode]) -> Result<()> {
    let n = u32::try_from(codes.len()).map_err(|_| Error::format("TNC1", "too many codes"))?;
    let d32 = u32::try_from(d).map_err(|_| Error::format("TNC1", "code length too large"))?;
    w.write_all(CODE_MAGIC)?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&d32.to_le_bytes())?;
    for c in codes {
        if c.d != d {
            return Err(Error::DimensionMismatch(d, c.d));
        }
        for word in c.pos.iter().chain(&c.neg) {
            w.write_all(&word.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a `TNC1` stream; returns the code length and the codes.
pub fn read_codes<R: Read>(mut r: R) -> Result<(usize, Vec<PackedCode>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("TNC1", "truncated header"))?;
    if &magic != CODE_MAGIC {
        return Err(Error::format("TNC1", "bad magic"));
    }
    let n = read_u32(&mut r)? as usize;
    let d = read_u32(&mut r)? as usize;
    let w = words_for(d);
    let mut codes = Vec::with_capacity(n);
    for _ in 0..n {
        let mut words = Vec::with_capacity(2 * w);
        for _ in 0..2 * w {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)
                .map_err(|_| Error::format("TNC1", "truncated code data"))?;
            words.push(u64::from_le_bytes(buf));
        }
        let neg = words.split_off(w);
        codes.push(PackedCode::from_planes(d, words, neg)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("TNC1", "trailing bytes"));
    }
    Ok((d, codes))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format("TNC1", "truncated header"))?;
    Ok(u32::from_le_bytes(buf))
}
