//! Classic libpcap capture files.
//!
//! Files are written little-endian with microsecond timestamps and linktype
//! 147 (USER0), since frames start directly at the ZEP header. The reader
//! accepts either byte order and nanosecond-resolution files.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::simnet::PacketRecord;

pub const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
pub const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
pub const VERSION_MAJOR: u16 = 2;
pub const VERSION_MINOR: u16 = 4;
pub const SNAPLEN: u32 = 65535;
pub const LINKTYPE_USER0: u32 = 147;
pub const GLOBAL_HEADER_LEN: usize = 24;
pub const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("i/o failure")]
    IoFailure(#[from] io::Error),
    #[error("bad magic {0:#010x}")]
    BadMagic(u32),
    #[error("file truncated after {recovered} complete records")]
    Truncated { recovered: usize },
    #[error("frame of {0} bytes exceeds snaplen")]
    FrameTooLarge(usize),
    #[error("timestamp {0} cannot be represented")]
    BadTimestamp(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcapRecord {
    pub timestamp_s: f64,
    pub data: Vec<u8>,
}

impl From<&PacketRecord> for PcapRecord {
    fn from(r: &PacketRecord) -> Self {
        PcapRecord { timestamp_s: r.timestamp_s, data: r.raw_bytes.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalHeader {
    pub magic: u32,
    pub version_major: u16,
    pub version_minor: u16,
    pub thiszone: i32,
    pub sigfigs: u32,
    pub snaplen: u32,
    pub linktype: u32,
}

/// Split seconds into whole seconds and rounded microseconds.
fn split_ts(t: f64) -> Result<(u32, u32), PcapError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(PcapError::BadTimestamp(t));
    }
    let total_us = (t * 1e6).round() as u64;
    let sec = u32::try_from(total_us / 1_000_000).map_err(|_| PcapError::BadTimestamp(t))?;
    Ok((sec, (total_us % 1_000_000) as u32))
}

/// Serialize records to pcap bytes.
pub fn encode<'a>(records: impl IntoIterator<Item = (f64, &'a [u8])>) -> Result<Vec<u8>, PcapError> {
    let mut out = Vec::with_capacity(GLOBAL_HEADER_LEN);
    out.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
    out.extend_from_slice(&VERSION_MAJOR.to_le_bytes());
    out.extend_from_slice(&VERSION_MINOR.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&SNAPLEN.to_le_bytes());
    out.extend_from_slice(&LINKTYPE_USER0.to_le_bytes());
    for (ts, data) in records {
        if data.len() > SNAPLEN as usize {
            return Err(PcapError::FrameTooLarge(data.len()));
        }
        let (sec, usec) = split_ts(ts)?;
        let len = data.len() as u32;
        for v in [sec, usec, len, len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(data);
    }
    Ok(out)
}

pub fn write_pcap(path: impl AsRef<Path>, records: &[PcapRecord]) -> Result<(), PcapError> {
    let bytes = encode(records.iter().map(|r| (r.timestamp_s, r.data.as_slice())))?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Convenience wrapper for generator output.
pub fn write_packet_records(path: impl AsRef<Path>, records: &[PacketRecord]) -> Result<(), PcapError> {
    let bytes = encode(records.iter().map(|r| (r.timestamp_s, r.raw_bytes.as_slice())))?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn parse_global_header(bytes: &[u8]) -> Result<(GlobalHeader, bool), PcapError> {
    if bytes.len() < GLOBAL_HEADER_LEN {
        if bytes.len() >= 4 {
            check_magic(u32::from_le_bytes(bytes[..4].try_into().unwrap()))?;
        }
        return Err(PcapError::Truncated { recovered: 0 });
    }
    let raw = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    let (little, _) = check_magic(raw)?;
    let u16_at = |o: usize| {
        let b = [bytes[o], bytes[o + 1]];
        if little {
            u16::from_le_bytes(b)
        } else {
            u16::from_be_bytes(b)
        }
    };
    let u32_at = |o: usize| read_u32(bytes, o, little);
    let header = GlobalHeader {
        magic: u32_at(0),
        version_major: u16_at(4),
        version_minor: u16_at(6),
        thiszone: u32_at(8) as i32,
        sigfigs: u32_at(12),
        snaplen: u32_at(16),
        linktype: u32_at(20),
    };
    Ok((header, little))
}

/// Returns (little-endian?, nanosecond resolution?).
fn check_magic(raw_le: u32) -> Result<(bool, bool), PcapError> {
    match raw_le {
        MAGIC_MICROS => Ok((true, false)),
        MAGIC_NANOS => Ok((true, true)),
        m if m.swap_bytes() == MAGIC_MICROS => Ok((false, false)),
        m if m.swap_bytes() == MAGIC_NANOS => Ok((false, true)),
        m => Err(PcapError::BadMagic(m)),
    }
}

fn read_u32(bytes: &[u8], o: usize, little: bool) -> u32 {
    let b: [u8; 4] = bytes[o..o + 4].try_into().unwrap();
    if little {
        u32::from_le_bytes(b)
    } else {
        u32::from_be_bytes(b)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<PcapRecord>, PcapError> {
    let (_, little) = parse_global_header(bytes)?;
    let (_, nanos) = check_magic(u32::from_le_bytes(bytes[..4].try_into().unwrap()))?;
    let mut records = Vec::new();
    let mut off = GLOBAL_HEADER_LEN;
    while off < bytes.len() {
        if bytes.len() - off < RECORD_HEADER_LEN {
            return Err(PcapError::Truncated { recovered: records.len() });
        }
        let sec = read_u32(bytes, off, little) as u64;
        let frac = read_u32(bytes, off + 4, little) as u64;
        let incl = read_u32(bytes, off + 8, little) as usize;
        off += RECORD_HEADER_LEN;
        if bytes.len() - off < incl {
            return Err(PcapError::Truncated { recovered: records.len() });
        }
        let timestamp_s =
            if nanos { (sec * 1_000_000_000 + frac) as f64 / 1e9 } else { (sec * 1_000_000 + frac) as f64 / 1e6 };
        records.push(PcapRecord { timestamp_s, data: bytes[off..off + incl].to_vec() });
        off += incl;
    }
    Ok(records)
}

pub fn read_pcap(path: impl AsRef<Path>) -> Result<Vec<PcapRecord>, PcapError> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_is_global_header() {
        let b = encode(std::iter::empty()).unwrap();
        assert_eq!(b.len(), 24);
        assert_eq!(&b[..4], &[0xD4, 0xC3, 0xB2, 0xA1]);
        let (h, little) = parse_global_header(&b).unwrap();
        assert!(little);
        assert_eq!(
            h,
            GlobalHeader {
                magic: MAGIC_MICROS,
                version_major: 2,
                version_minor: 4,
                thiszone: 0,
                sigfigs: 0,
                snaplen: 65535,
                linktype: 147
            }
        );
        assert!(decode(&b).unwrap().is_empty());
    }

    #[test]
    fn single_record_layout() {
        let frame = vec![0x5Au8; 67];
        let b = encode([(1.5, frame.as_slice())]).unwrap();
        assert_eq!(b.len(), 24 + 16 + 67);
        assert_eq!(read_u32(&b, 24, true), 1);
        assert_eq!(read_u32(&b, 28, true), 500_000);
        assert_eq!(read_u32(&b, 32, true), 67);
        assert_eq!(read_u32(&b, 36, true), 67);
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut b = encode([(0.25, &[1u8; 20][..]), (0.5, &[2u8; 20][..])]).unwrap();
        assert!(matches!(decode(&b[..24 + 16 + 10]), Err(PcapError::Truncated { recovered: 0 })));
        assert!(matches!(decode(&b[..24 + 36 + 5]), Err(PcapError::Truncated { recovered: 1 })));
        assert!(matches!(decode(&b[..10]), Err(PcapError::Truncated { recovered: 0 })));
        b[..4].copy_from_slice(&0xDEADBEEFu32.to_le_bytes());
        assert!(matches!(decode(&b), Err(PcapError::BadMagic(0xDEADBEEF))));
    }

    #[test]
    fn reads_big_endian_files() {
        let mut b = Vec::new();
        b.extend_from_slice(&MAGIC_MICROS.to_be_bytes());
        b.extend_from_slice(&2u16.to_be_bytes());
        b.extend_from_slice(&4u16.to_be_bytes());
        b.extend_from_slice(&[0; 8]);
        b.extend_from_slice(&SNAPLEN.to_be_bytes());
        b.extend_from_slice(&1u32.to_be_bytes());
        for v in [3u32, 250_000, 2, 2] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(&[7, 8]);
        let (h, little) = parse_global_header(&b).unwrap();
        assert!(!little);
        assert_eq!(h.linktype, 1);
        assert_eq!(decode(&b).unwrap(), vec![PcapRecord { timestamp_s: 3.25, data: vec![7, 8] }]);
    }

    #[test]
    fn rejects_negative_timestamp() {
        assert!(matches!(encode([(-1.0, &[][..])]), Err(PcapError::BadTimestamp(_))));
    }

    proptest! {
        #[test]
        fn roundtrip(recs in prop::collection::vec((0u64..4_000_000_000_000u64, prop::collection::vec(any::<u8>(), 0..200)), 0..20)) {
            let records: Vec<PcapRecord> = recs
                .into_iter()
                .map(|(us, data)| PcapRecord { timestamp_s: us as f64 / 1e6, data })
                .collect();
            let bytes = encode(records.iter().map(|r| (r.timestamp_s, r.data.as_slice()))).unwrap();
            prop_assert_eq!(decode(&bytes).unwrap(), records);
        }
    }
}
