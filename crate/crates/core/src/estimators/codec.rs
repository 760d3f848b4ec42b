//! Versioned binary encoding of a fitted estimator.
//!
//! All integers and floats are little-endian. Layout:
//!
//! | field | type |
//! |---|---|
//! | magic `SCOREKIT` | 8 bytes |
//! | format version | u32 |
//! | kernel kind (0 diagonal, 1 curl-free) | u8 |
//! | kernel family (0 imq, 1 gaussian) | u8 |
//! | bandwidth | f64 |
//! | scheme tag, then its parameters (see below) | u8 … |
//! | offset `a` | f64 |
//! | sample count `M`, dimension `d` | u64, u64 |
//! | samples, row-major | `M·d` f64 |
//! | has subset (0/1) | u8 |
//! | subset size `N`, then indices (only if has subset) | u64, `N` u64 |
//! | coefficients, one row of `d` per basis point | f64 |
//!
//! Scheme tags: 0 Tikhonov `λ: f64`; 1 truncated Tikhonov `λ: f64`;
//! 2 cut-off by threshold `λ: f64`; 3 cut-off by rank `J: u64`;
//! 4 Landweber `η: f64` (NaN when unresolved), `t: u64`; 5 ν-method `ν: f64`, `t: u64`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::fitted::{FitDiagnostics, FittedScoreEstimator};
use super::regularizer::{Cutoff, RegularizerSpec};
use crate::error::{Result, ScoreError};
use crate::kernels::{KernelFamily, KernelKind, MatrixKernelSpec, SampleMatrix, ScalarRadialKernel};

pub const MAGIC: &[u8; 8] = b"SCOREKIT";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(est: &FittedScoreEstimator) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match est.spec.kind {
        KernelKind::Diagonal => 0,
        KernelKind::CurlFree => 1,
    });
    out.push(match est.spec.scalar.family() {
        KernelFamily::Imq => 0,
        KernelFamily::Gaussian => 1,
    });
    put_f64(&mut out, est.spec.scalar.bandwidth());
    match est.scheme {
        RegularizerSpec::Tikhonov { lambda } => {
            out.push(0);
            put_f64(&mut out, lambda);
        }
        RegularizerSpec::TruncatedTikhonov { lambda } => {
            out.push(1);
            put_f64(&mut out, lambda);
        }
        RegularizerSpec::SpectralCutoff(Cutoff::Threshold(l)) => {
            out.push(2);
            put_f64(&mut out, l);
        }
        RegularizerSpec::SpectralCutoff(Cutoff::Rank(j)) => {
            out.push(3);
            put_u64(&mut out, j as u64);
        }
        RegularizerSpec::Landweber { step, iterations } => {
            out.push(4);
            put_f64(&mut out, step.unwrap_or(f64::NAN));
            put_u64(&mut out, iterations as u64);
        }
        RegularizerSpec::NuMethod { nu, iterations } => {
            out.push(5);
            put_f64(&mut out, nu);
            put_u64(&mut out, iterations as u64);
        }
    }
    put_f64(&mut out, est.offset);
    put_u64(&mut out, est.samples.len() as u64);
    put_u64(&mut out, est.samples.dim() as u64);
    for &v in est.samples.as_array().iter() {
        put_f64(&mut out, v);
    }
    match &est.basis {
        None => out.push(0),
        Some(idx) => {
            out.push(1);
            put_u64(&mut out, idx.len() as u64);
            for &i in idx {
                put_u64(&mut out, i as u64);
            }
        }
    }
    for &v in est.coeffs.iter() {
        put_f64(&mut out, v);
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<FittedScoreEstimator> {
    let mut r = Cursor { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(ScoreError::input("not a serialized estimator (bad magic)"));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ScoreError::input(format!(
            "unsupported estimator format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let kind = match r.u8()? {
        0 => KernelKind::Diagonal,
        1 => KernelKind::CurlFree,
        t => return Err(ScoreError::input(format!("unknown kernel kind tag {t}"))),
    };
    let family = match r.u8()? {
        0 => KernelFamily::Imq,
        1 => KernelFamily::Gaussian,
        t => return Err(ScoreError::input(format!("unknown kernel family tag {t}"))),
    };
    let scalar = ScalarRadialKernel::new(family, r.f64()?)?;
    let scheme = match r.u8()? {
        0 => RegularizerSpec::Tikhonov { lambda: r.f64()? },
        1 => RegularizerSpec::TruncatedTikhonov { lambda: r.f64()? },
        2 => RegularizerSpec::SpectralCutoff(Cutoff::Threshold(r.f64()?)),
        3 => RegularizerSpec::SpectralCutoff(Cutoff::Rank(r.usize()?)),
        4 => {
            let eta = r.f64()?;
            RegularizerSpec::Landweber {
                step: (!eta.is_nan()).then_some(eta),
                iterations: r.usize()?,
            }
        }
        5 => RegularizerSpec::NuMethod { nu: r.f64()?, iterations: r.usize()? },
        t => return Err(ScoreError::input(format!("unknown scheme tag {t}"))),
    };
    let offset = r.f64()?;
    let m = r.usize()?;
    let d = r.usize()?;
    let samples = SampleMatrix::new(Array2::from_shape_vec((m, d), r.f64s(m.checked_mul(d).ok_or_else(truncated)?)?)
        .map_err(|e| ScoreError::input(format!("bad sample shape: {e}")))?)?;
    let basis = match r.u8()? {
        0 => None,
        1 => {
            let n = r.usize()?;
            let idx = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
            if idx.iter().any(|&i| i >= m) || idx.is_empty() {
                return Err(ScoreError::input("subset indices out of range"));
            }
            Some(idx)
        }
        t => return Err(ScoreError::input(format!("bad subset flag {t}"))),
    };
    let rows = basis.as_ref().map_or(m, |b| b.len());
    let coeffs = Array2::from_shape_vec((rows, d), r.f64s(rows * d)?).expect("length read");
    if r.pos != bytes.len() {
        return Err(ScoreError::input("trailing bytes after serialized estimator"));
    }
    Ok(FittedScoreEstimator {
        spec: MatrixKernelSpec::new(kind, scalar),
        samples,
        basis,
        coeffs,
        offset,
        scheme,
        diagnostics: FitDiagnostics::default(),
    })
}

pub fn save(est: &FittedScoreEstimator, path: &Path) -> Result<()> {
    std::fs::File::create(path)?.write_all(&encode(est))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<FittedScoreEstimator> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn truncated() -> ScoreError {
    ScoreError::input("serialized estimator is truncated")
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| ScoreError::input("size field overflows usize"))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(truncated)?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"nope").is_err());
        assert!(decode(b"SCOREKIT\x02\x00\x00\x00").is_err());
        assert!(decode(b"SCOREKIT\x01\x00\x00\x00\x01").is_err());
    }
}
