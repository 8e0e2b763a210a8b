//! Binary label snapshots.
//!
//! Layout, all little endian:
//!
//! | offset | width | field                                   |
//! |--------|-------|-----------------------------------------|
//! | 0      | 4     | magic `NCPT`                            |
//! | 4      | 4     | format version (`u32`)                  |
//! | 8      | 1     | lattice kind: 0 triangular, 1 square    |
//! | 9      | 1     | domain: 0 torus, 1 box                  |
//! | 10     | 2     | reserved, zero                          |
//! | 12     | 4     | `n` (`u32`)                             |
//! | 16     | 8     | `m` (`f64`)                             |
//! | 24     | 8     | seed (`u64`)                            |
//! | 32     | 8     | label count (`u64`)                     |
//! | 40     | 8     | first 8 bytes of SHA-256 of bytes 0..40 |
//! | 48     | 8·k   | labels (`f64`) in carrier order         |

use std::path::Path;

use nearcrit::ensemble::LabelField;
use nearcrit::geometry::{DomainKind, Geometry, LatticeKind, LatticeSpec};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MAGIC: [u8; 4] = *b"NCPT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 48;

fn checksum(head: &[u8]) -> [u8; 8] {
    let digest = Sha256::digest(head);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

pub fn encode(labels: &LabelField) -> Vec<u8> {
    let values = labels.values();
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match labels.spec.kind {
        LatticeKind::TriangularSite => 0,
        LatticeKind::SquareBond => 1,
    });
    buf.push(match labels.spec.domain {
        DomainKind::Torus => 0,
        DomainKind::Box => 1,
    });
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&labels.spec.n.to_le_bytes());
    buf.extend_from_slice(&labels.spec.m.to_le_bytes());
    buf.extend_from_slice(&labels.seed.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    let sum = checksum(&buf);
    buf.extend_from_slice(&sum);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode(bytes: &[u8]) -> CliResult<LabelField> {
    let prefix = bytes.len().min(4);
    if bytes[..prefix] != MAGIC[..prefix] {
        return Err(CliError::Format("missing NCPT magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(CliError::Integrity(format!("file of {} bytes is shorter than the header", bytes.len())));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != VERSION {
        return Err(CliError::Format(format!("version {version}, expected {VERSION}")));
    }
    if checksum(&bytes[..40]) != bytes[40..48] {
        return Err(CliError::Integrity("header checksum mismatch".into()));
    }
    let kind = match bytes[8] {
        0 => LatticeKind::TriangularSite,
        1 => LatticeKind::SquareBond,
        k => return Err(CliError::Format(format!("unknown lattice kind {k}"))),
    };
    let domain = match bytes[9] {
        0 => DomainKind::Torus,
        1 => DomainKind::Box,
        d => return Err(CliError::Format(format!("unknown domain {d}"))),
    };
    if bytes[10..12] != [0, 0] {
        return Err(CliError::Format("reserved header bytes are not zero".into()));
    }
    let spec = LatticeSpec::new(kind, u32_at(12), f64::from_bits(u64_at(16)), domain);
    let seed = u64_at(24);
    let count = u64_at(32);
    let expected = Geometry::new(spec).map_err(|e| CliError::Format(e.to_string()))?.carrier_count() as u64;
    if count != expected {
        return Err(CliError::Integrity(format!("header declares {count} labels, the lattice has {expected}")));
    }
    let want = HEADER_LEN as u64 + 8 * count;
    if bytes.len() as u64 != want {
        return Err(CliError::Integrity(format!("file has {} bytes, expected {want}", bytes.len())));
    }
    let values = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    LabelField::from_values(spec, seed, values).map_err(|e| CliError::Integrity(e.to_string()))
}

pub fn save_snapshot(labels: &LabelField, path: &Path) -> CliResult<()> {
    std::fs::write(path, encode(labels))?;
    Ok(())
}

pub fn load_snapshot(path: &Path) -> CliResult<LabelField> {
    decode(&std::fs::read(path)?)
}
