//! Binary map container.
//!
//! Layout (all integers and floats little-endian):
//! magic `MCLMAP01`, `u32` header length, UTF-8 JSON header, vocabulary
//! centroids (`W×D` f32), PQ codebook when enabled (`M×K×(D/M)` f32), point
//! table (`u64` id, `3×f64` position, `u32` entry count, `u32` frame count per
//! point), word entries (`u32` word id + `D×f32` or `M` code bytes), frame ids
//! (`u64`), and a trailing CRC32 of every preceding byte.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::store::{GlobalMap, PointRecord, WordPayload};
use super::{MapError, PqCodebook, Vocabulary};

pub const MAP_MAGIC: &[u8; 8] = b"MCLMAP01";
const MAGIC_FAMILY: &[u8; 6] = b"MCLMAP";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    descriptor_dim: usize,
    word_count: usize,
    point_count: usize,
    pq: PqHeader,
    endianness: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "PascalCase")]
struct PqHeader {
    #[serde(rename = "enabled")]
    enabled: bool,
    m: usize,
    k: usize,
}

pub fn write_map(map: &GlobalMap) -> Vec<u8> {
    let dim = map.dim();
    let voc = map.vocabulary();
    let header = Header {
        descriptor_dim: dim,
        word_count: voc.word_count(),
        point_count: map.len(),
        pq: PqHeader {
            enabled: map.pq().is_some(),
            m: map.pq().map_or(0, |c| c.subquantizers()),
            k: map.pq().map_or(0, |c| c.centroids_per_subspace()),
        },
        endianness: "little".into(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::new();
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    put_f32s(&mut out, voc.centroids());
    if let Some(cb) = map.pq() {
        put_f32s(&mut out, cb.centroids());
    }
    let records: Vec<PointRecord> = (0..map.len() as u32).map(|i| map.record(i)).collect();
    for r in &records {
        out.extend_from_slice(&r.id.to_le_bytes());
        for c in r.position.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&(r.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&(r.frames.len() as u32).to_le_bytes());
    }
    for r in &records {
        for (word, payload) in &r.entries {
            out.extend_from_slice(&word.to_le_bytes());
            match payload {
                WordPayload::Plain(v) => put_f32s(&mut out, v),
                WordPayload::Code(c) => out.extend_from_slice(c),
            }
        }
    }
    for r in &records {
        for f in &r.frames {
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_map(map: &GlobalMap, path: impl AsRef<Path>) -> Result<(), MapError> {
    fs::write(path, write_map(map))?;
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<GlobalMap, MapError> {
    read_map(&fs::read(path)?)
}

pub fn read_map(bytes: &[u8]) -> Result<GlobalMap, MapError> {
    if bytes.len() < MAP_MAGIC.len() {
        return Err(if MAP_MAGIC.starts_with(bytes) { MapError::Truncated } else { MapError::BadMagic });
    }
    let magic = &bytes[..8];
    if magic != MAP_MAGIC {
        return Err(if magic.starts_with(MAGIC_FAMILY) {
            MapError::VersionMismatch(String::from_utf8_lossy(magic).into_owned())
        } else {
            MapError::BadMagic
        });
    }
    let mut r = Reader { bytes, pos: 8 };
    let header_len = r.u32()? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| MapError::Format(format!("header: {e}")))?;
    if header.endianness != "little" {
        return Err(MapError::Format(format!("unsupported endianness {:?}", header.endianness)));
    }
    let dim = header.descriptor_dim;
    if dim == 0 || header.word_count == 0 {
        return Err(MapError::Format("descriptor_dim and word_count must be positive".into()));
    }

    let centroids = r.f32s(checked_mul(header.word_count, dim)?)?;
    let vocabulary = Vocabulary::from_centroids(dim, centroids)?;
    let pq = if header.pq.enabled {
        let (m, k) = (header.pq.m, header.pq.k);
        if m == 0 || dim % m != 0 {
            return Err(MapError::Format(format!("PQ M = {m} does not divide D = {dim}")));
        }
        let data = r.f32s(checked_mul(k, dim)?)?;
        Some(PqCodebook::from_parts(dim, m, k, data).map_err(|e| MapError::Format(e.to_string()))?)
    } else {
        None
    };

    // 36 bytes per point table row
    r.ensure(checked_mul(header.point_count, 36)?)?;
    let mut table = Vec::with_capacity(header.point_count);
    for _ in 0..header.point_count {
        let id = r.u64()?;
        let position = Vector3::new(r.f64()?, r.f64()?, r.f64()?);
        let entries = r.u32()? as usize;
        let frames = r.u32()? as usize;
        table.push((id, position, entries, frames));
    }
    let payload_len = match &pq {
        Some(cb) => cb.subquantizers(),
        None => dim * 4,
    };
    let mut records = Vec::with_capacity(table.len());
    for (id, position, entry_count, _) in &table {
        r.ensure(checked_mul(*entry_count, 4 + payload_len)?)?;
        let mut entries = Vec::with_capacity(*entry_count);
        for _ in 0..*entry_count {
            let word = r.u32()?;
            let payload = match &pq {
                Some(cb) => WordPayload::Code(r.take(cb.subquantizers())?.to_vec()),
                None => WordPayload::Plain(r.f32s(dim)?),
            };
            entries.push((word, payload));
        }
        records.push(PointRecord {
            id: *id,
            position: *position,
            entries,
            frames: Vec::new(),
        });
    }
    for (rec, (_, _, _, frame_count)) in records.iter_mut().zip(&table) {
        r.ensure(checked_mul(*frame_count, 8)?)?;
        rec.frames = (0..*frame_count).map(|_| r.u64()).collect::<Result<_, _>>()?;
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(MapError::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(MapError::Checksum { stored, computed });
    }
    GlobalMap::from_records(vocabulary, pq, records).map_err(|e| MapError::Format(e.to_string()))
}

fn checked_mul(a: usize, b: usize) -> Result<usize, MapError> {
    a.checked_mul(b).ok_or(MapError::Truncated)
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn ensure(&self, n: usize) -> Result<(), MapError> {
        if self.bytes.len() - self.pos < n {
            Err(MapError::Truncated)
        } else {
            Ok(())
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MapError> {
        self.ensure(n)?;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], MapError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, MapError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, MapError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, MapError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, MapError> {
        let raw = self.take(checked_mul(n, 4)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{normalize, MapBuilder, ProductQuantizer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_map(pq: bool) -> GlobalMap {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let unit = |rng: &mut ChaCha8Rng| {
            let mut v: Vec<f32> = (0..8).map(|_| rng.random::<f32>() - 0.5).collect();
            normalize(&mut v);
            v
        };
        let voc = Vocabulary::from_centroids(8, (0..4).flat_map(|_| unit(&mut rng)).collect()).unwrap();
        let mut b = MapBuilder::new(voc);
        for id in 0..30u64 {
            b.add_point(id, Vector3::new(id as f64, -1.5, 0.25));
            for f in 0..2 {
                b.add_descriptor(id, &unit(&mut rng), id / 5 + f).unwrap();
            }
        }
        let cb = pq.then(|| {
            let data = crate::map::DescriptorBlock::from_vec(8, (0..64).flat_map(|_| unit(&mut rng)).collect()).unwrap();
            let mut q = ProductQuantizer::new(2, 8);
            q.train(&data, 0).unwrap();
            q.into_codebook().unwrap()
        });
        b.freeze(cb).unwrap()
    }

    #[test]
    fn round_trip_plain_and_quantized() {
        for pq in [false, true] {
            let map = small_map(pq);
            let back = read_map(&write_map(&map)).unwrap();
            assert_eq!(back, map);
        }
    }

    #[test]
    fn empty_map_round_trip() {
        let voc = Vocabulary::from_centroids(4, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let map = MapBuilder::new(voc).freeze(None).unwrap();
        let back = read_map(&write_map(&map)).unwrap();
        assert!(back.is_empty());
        assert_eq!(back, map);
    }

    #[test]
    fn header_is_length_prefixed_json() {
        let bytes = write_map(&small_map(true));
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
        assert_eq!(header["descriptor_dim"], 8);
        assert_eq!(header["point_count"], 30);
        assert_eq!(header["pq"]["enabled"], true);
        assert_eq!(header["pq"]["M"], 2);
        assert_eq!(header["pq"]["K"], 8);
        assert_eq!(header["endianness"], "little");
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = write_map(&small_map(false));
        bytes[0] = b'X';
        assert!(matches!(read_map(&bytes), Err(MapError::BadMagic)));
    }

    #[test]
    fn other_version() {
        let mut bytes = write_map(&small_map(false));
        bytes[7] = b'2';
        assert!(matches!(read_map(&bytes), Err(MapError::VersionMismatch(v)) if v == "MCLMAP02"));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = write_map(&small_map(false));
        let mid = bytes.len() - 200;
        bytes[mid] ^= 0x40;
        assert!(matches!(read_map(&bytes), Err(MapError::Checksum { .. })));
    }

    #[test]
    fn every_truncation_is_detected() {
        let bytes = write_map(&small_map(true));
        for cut in 0..bytes.len() {
            let err = read_map(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, MapError::Truncated | MapError::Format(_)), "cut {cut}: {err:?}");
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let map = small_map(false);
        save_map(&map, &path).unwrap();
        assert_eq!(load_map(&path).unwrap(), map);
        assert!(matches!(load_map(dir.path().join("missing")), Err(MapError::Io(_))));
    }
}
