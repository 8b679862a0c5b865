//! Binary sequence ("CKT1") and mask ("CKM1") files.
//!
//! CKT1: `b"CKT1"`, then `T`, `Y`, `X` as little-endian `u32`, then
//! `T·Y·X` interleaved `(re, im)` little-endian `f32` pairs in `[t][y][x]`
//! order. CKM1: `b"CKM1"`, `T`, `X` as little-endian `u32`, then `T·X`
//! bytes of 0 or 1.
//!
//! Sequences are stored in single precision, so a round trip is bit-exact
//! only for values representable as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, FormatError, Result};
use crate::sampling::SamplingMask;
use crate::volume::{ComplexVolume, Domain};

pub const SEQUENCE_MAGIC: [u8; 4] = *b"CKT1";
pub const MASK_MAGIC: [u8; 4] = *b"CKM1";

/// Upper bound on stored samples; larger headers are treated as corrupt.
const MAX_ELEMENTS: u64 = 1 << 32;

pub fn write_sequence<W: Write>(mut w: W, v: &ComplexVolume) -> Result<()> {
    w.write_all(&SEQUENCE_MAGIC)?;
    for d in v.dims() {
        let d = u32::try_from(d).map_err(|_| FormatError::DimensionOverflow)?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(v.len() * 8);
    for z in v.data() {
        buf.extend_from_slice(&(z.re as f32).to_le_bytes());
        buf.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

/// Reads a CKT1 stream. The domain tag is not stored; the result is tagged `domain`.
pub fn read_sequence<R: Read>(mut r: R, domain: Domain) -> Result<ComplexVolume> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let magic = read_magic(&bytes, SEQUENCE_MAGIC)?;
    debug_assert_eq!(magic, SEQUENCE_MAGIC);
    if bytes.len() < 16 {
        return Err(FormatError::Truncated {
            expected: 16,
            found: bytes.len() as u64,
        }
        .into());
    }
    let t = u32_at(&bytes, 4) as u64;
    let y = u32_at(&bytes, 8) as u64;
    let x = u32_at(&bytes, 12) as u64;
    let count = t
        .checked_mul(y)
        .and_then(|n| n.checked_mul(x))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or(FormatError::DimensionOverflow)?;
    if count == 0 {
        return Err(FormatError::Malformed("zero-sized dimension".into()).into());
    }
    let expected = 16 + 8 * count;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(FormatError::Truncated { expected, found }.into());
    }
    if found > expected {
        return Err(FormatError::Malformed(format!("{} trailing bytes", found - expected)).into());
    }
    let data: Vec<Complex64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect();
    ComplexVolume::from_vec(t as usize, y as usize, x as usize, domain, data)
}

pub fn save_sequence<P: AsRef<Path>>(path: P, v: &ComplexVolume) -> Result<()> {
    write_sequence(BufWriter::new(File::create(path)?), v)
}

pub fn load_sequence<P: AsRef<Path>>(path: P) -> Result<ComplexVolume> {
    load_sequence_as(path, Domain::Image)
}

pub fn load_sequence_as<P: AsRef<Path>>(path: P, domain: Domain) -> Result<ComplexVolume> {
    read_sequence(BufReader::new(File::open(path)?), domain)
}

pub fn write_mask<W: Write>(mut w: W, mask: &SamplingMask) -> Result<()> {
    w.write_all(&MASK_MAGIC)?;
    for d in [mask.t_frames(), mask.cols()] {
        let d = u32::try_from(d).map_err(|_| FormatError::DimensionOverflow)?;
        w.write_all(&d.to_le_bytes())?;
    }
    let bits: Vec<u8> = mask.bits().iter().map(|&b| b as u8).collect();
    w.write_all(&bits)?;
    w.flush()?;
    Ok(())
}

pub fn read_mask<R: Read>(mut r: R) -> Result<SamplingMask> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    read_magic(&bytes, MASK_MAGIC)?;
    if bytes.len() < 12 {
        return Err(FormatError::Truncated {
            expected: 12,
            found: bytes.len() as u64,
        }
        .into());
    }
    let t = u32_at(&bytes, 4) as u64;
    let x = u32_at(&bytes, 8) as u64;
    let count = t
        .checked_mul(x)
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or(FormatError::DimensionOverflow)?;
    let expected = 12 + count;
    let found = bytes.len() as u64;
    if found < expected {
        return Err(FormatError::Truncated { expected, found }.into());
    }
    if found > expected {
        return Err(FormatError::Malformed(format!("{} trailing bytes", found - expected)).into());
    }
    let bits = bytes[12..]
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(FormatError::Malformed(format!("mask byte {other}"))),
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    SamplingMask::from_bits(t as usize, x as usize, bits)
}

pub fn save_mask<P: AsRef<Path>>(path: P, mask: &SamplingMask) -> Result<()> {
    write_mask(BufWriter::new(File::create(path)?), mask)
}

pub fn load_mask<P: AsRef<Path>>(path: P) -> Result<SamplingMask> {
    read_mask(BufReader::new(File::open(path)?))
}

pub(crate) fn read_magic(bytes: &[u8], expected: [u8; 4]) -> Result<[u8; 4]> {
    if bytes.len() < 4 {
        return Err(Error::Format(FormatError::Truncated {
            expected: 4,
            found: bytes.len() as u64,
        }));
    }
    let found = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if found != expected {
        return Err(FormatError::BadMagic { expected, found }.into());
    }
    Ok(found)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{make_shear_mask, AcquisitionSpec};
    use proptest::prelude::*;

    fn sample_volume() -> ComplexVolume {
        ComplexVolume::from_fn(3, 4, 5, Domain::Image, |t, y, x| {
            Complex64::new(t as f64 * 0.5 - y as f64, x as f64 * 0.25)
        })
        .unwrap()
    }

    #[test]
    fn file_size_matches_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckt");
        save_sequence(&path, &sample_volume()).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 8 * 3 * 4 * 5);
        assert_eq!(load_sequence(&path).unwrap(), sample_volume());
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut buf = Vec::new();
        write_sequence(&mut buf, &sample_volume()).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            read_sequence(&buf[..], Domain::Image),
            Err(Error::Format(FormatError::BadMagic { .. }))
        ));
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut buf = Vec::new();
        write_sequence(&mut buf, &sample_volume()).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(
            read_sequence(&buf[..], Domain::Image),
            Err(Error::Format(FormatError::Truncated { .. }))
        ));
    }

    #[test]
    fn oversized_header_rejected() {
        let mut buf = SEQUENCE_MAGIC.to_vec();
        for _ in 0..3 {
            buf.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(
            read_sequence(&buf[..], Domain::Image),
            Err(Error::Format(FormatError::DimensionOverflow))
        ));
    }

    #[test]
    fn mask_round_trip_and_errors() {
        let mask = make_shear_mask(&AcquisitionSpec::new(3, 2), 4, 9).unwrap();
        let mut buf = Vec::new();
        write_mask(&mut buf, &mask).unwrap();
        assert_eq!(buf.len(), 12 + 36);
        assert_eq!(read_mask(&buf[..]).unwrap(), mask);
        let mut bad = buf.clone();
        bad[20] = 7;
        assert!(matches!(read_mask(&bad[..]), Err(Error::Format(FormatError::Malformed(_)))));
        bad = buf.clone();
        bad[3] = b'2';
        assert!(matches!(read_mask(&bad[..]), Err(Error::Format(FormatError::BadMagic { .. }))));
    }

    proptest! {
        #[test]
        fn f32_representable_volumes_round_trip_bit_exact(
            (t, y, x, vals) in (1usize..4, 1usize..5, 1usize..5).prop_flat_map(|(t, y, x)| {
                (Just(t), Just(y), Just(x), prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), t * y * x))
            })
        ) {
            let v = ComplexVolume::from_fn(t, y, x, Domain::KSpace, |a, b, c| {
                let (re, im) = vals[(a * y + b) * x + c];
                Complex64::new(re as f64, im as f64)
            }).unwrap();
            let mut buf = Vec::new();
            write_sequence(&mut buf, &v).unwrap();
            let back = read_sequence(&buf[..], Domain::KSpace).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
