//! GPAC: a bit-exact, little-endian activation interchange file.
//!
//! Layout:
//!
//! ```text
//! magic   4 bytes  "GPAC"
//! version u16      currently 1
//! layers  u16      layer-table entry count (>= 1)
//! per layer:       name length u8, name bytes, ndim u8, dims u32 x ndim
//! records u64      record count
//! per record:      game id u32, move index u32,
//!                  then per layer its IEEE-754 f32 values, row-major
//! ```
//!
//! Bytes after the last record are ignored, which leaves room for
//! producer-specific trailing metadata. A JSON sidecar (`<file>.json`)
//! duplicates the layer table for human inspection; the binary file is
//! authoritative.

use super::{ActivationError, LayerActivations, LayerTensor, GPAC_VERSION};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const GPAC_MAGIC: [u8; 4] = *b"GPAC";

/// Ordered layer names and shapes shared by every record in a file.
pub type LayerTable = Vec<(String, Vec<u32>)>;

fn dims_len(dims: &[u32]) -> usize {
    dims.iter().map(|&d| d as usize).product()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ActivationError + '_ {
    move |source| ActivationError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Serialize, Deserialize)]
struct SidecarLayer {
    name: String,
    dims: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    magic: String,
    version: u16,
    layers: Vec<SidecarLayer>,
    records: u64,
}

/// Serialize a batch. Records are written sorted by (game id, move
/// index); every record must match the layer table exactly. A sidecar
/// JSON file is written next to the binary.
pub fn write_activations(
    table: &LayerTable,
    batch: &[LayerActivations],
    path: &Path,
) -> Result<(), ActivationError> {
    if table.is_empty() {
        return Err(ActivationError::InvalidSpec(
            "layer table must not be empty".into(),
        ));
    }
    for (name, dims) in table {
        if name.is_empty() || name.len() > u8::MAX as usize {
            return Err(ActivationError::InvalidSpec(format!(
                "layer name '{name}' not in 1..=255 bytes"
            )));
        }
        if dims.is_empty() || dims.len() > u8::MAX as usize || dims.iter().any(|&d| d == 0) {
            return Err(ActivationError::InvalidSpec(format!(
                "layer '{name}' has invalid dims {dims:?}"
            )));
        }
    }
    let mut order: Vec<&LayerActivations> = batch.iter().collect();
    order.sort_by_key(|a| (a.game_id, a.move_index));
    for record in &order {
        let found = record.layer_table();
        if &found != table {
            return Err(ActivationError::InvalidSpec(format!(
                "record ({}, {}) does not match the layer table",
                record.game_id, record.move_index
            )));
        }
        for (layer, (_, dims)) in record.layers.iter().zip(table) {
            if layer.values.len() != dims_len(dims) {
                return Err(ActivationError::InvalidSpec(format!(
                    "layer '{}' has {} values for dims {:?}",
                    layer.name,
                    layer.values.len(),
                    dims
                )));
            }
        }
    }

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(&GPAC_MAGIC);
    buf.extend_from_slice(&GPAC_VERSION.to_le_bytes());
    buf.extend_from_slice(&(table.len() as u16).to_le_bytes());
    for (name, dims) in table {
        buf.push(name.len() as u8);
        buf.extend_from_slice(name.as_bytes());
        buf.push(dims.len() as u8);
        for &d in dims {
            buf.extend_from_slice(&d.to_le_bytes());
        }
    }
    buf.extend_from_slice(&(order.len() as u64).to_le_bytes());
    for record in &order {
        buf.extend_from_slice(&record.game_id.to_le_bytes());
        buf.extend_from_slice(&record.move_index.to_le_bytes());
        for layer in &record.layers {
            for v in &layer.values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;

    let sidecar = Sidecar {
        magic: "GPAC".into(),
        version: GPAC_VERSION,
        layers: table
            .iter()
            .map(|(name, dims)| SidecarLayer {
                name: name.clone(),
                dims: dims.clone(),
            })
            .collect(),
        records: order.len() as u64,
    };
    let sidecar_path = sidecar_path(path);
    std::fs::write(
        &sidecar_path,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(io_err(&sidecar_path))?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    std::path::PathBuf::from(os)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ActivationError> {
        if self.pos + n > self.bytes.len() {
            return Err(ActivationError::Format {
                offset: self.pos as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8, ActivationError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16, ActivationError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, ActivationError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ActivationError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Read a GPAC file back into a batch. Validates the magic, version and
/// shape consistency; trailing bytes after the declared records are
/// tolerated.
pub fn read_activations(path: &Path) -> Result<Vec<LayerActivations>, ActivationError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_activations(&bytes)
}

/// Parse GPAC bytes (see [`read_activations`]).
pub fn parse_activations(bytes: &[u8]) -> Result<Vec<LayerActivations>, ActivationError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != GPAC_MAGIC {
        return Err(ActivationError::Format {
            offset: 0,
            reason: format!("bad magic {magic:?}"),
        });
    }
    let version = r.u16("version")?;
    if version != GPAC_VERSION {
        return Err(ActivationError::Version { found: version });
    }
    let layer_count = r.u16("layer count")? as usize;
    if layer_count == 0 {
        return Err(ActivationError::Format {
            offset: (r.pos - 2) as u64,
            reason: "layer count is zero; the input layer is mandatory".into(),
        });
    }
    let mut table: LayerTable = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let name_offset = r.pos;
        let name_len = r.u8("layer name length")? as usize;
        let name_bytes = r.take(name_len, "layer name")?;
        let name = std::str::from_utf8(name_bytes)
            .map_err(|_| ActivationError::Format {
                offset: name_offset as u64,
                reason: "layer name is not UTF-8".into(),
            })?
            .to_owned();
        if name.is_empty() {
            return Err(ActivationError::Format {
                offset: name_offset as u64,
                reason: "empty layer name".into(),
            });
        }
        let ndim = r.u8("ndim")? as usize;
        if ndim == 0 {
            return Err(ActivationError::Format {
                offset: (r.pos - 1) as u64,
                reason: format!("layer '{name}' has zero dimensions"),
            });
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let dim_offset = r.pos;
            let d = r.u32("dim")?;
            if d == 0 {
                return Err(ActivationError::Format {
                    offset: dim_offset as u64,
                    reason: format!("layer '{name}' has a zero dim"),
                });
            }
            dims.push(d);
        }
        table.push((name, dims));
    }
    let record_count = r.u64("record count")?;
    let mut batch = Vec::new();
    for _ in 0..record_count {
        let game_id = r.u32("game id")?;
        let move_index = r.u32("move index")?;
        let mut layers = Vec::with_capacity(table.len());
        for (name, dims) in &table {
            let count = dims_len(dims);
            let raw = r.take(count * 4, "layer values")?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            layers.push(LayerTensor {
                name: name.clone(),
                dims: dims.clone(),
                values,
            });
        }
        batch.push(LayerActivations {
            game_id,
            move_index,
            layers,
        });
    }
    Ok(batch)
}

/// The layer table of a GPAC file without reading record payloads.
pub fn read_layer_table(path: &Path) -> Result<LayerTable, ActivationError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    let magic = r.take(4, "magic")?;
    if magic != GPAC_MAGIC {
        return Err(ActivationError::Format {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = r.u16("version")?;
    if version != GPAC_VERSION {
        return Err(ActivationError::Version { found: version });
    }
    let layer_count = r.u16("layer count")? as usize;
    let mut table = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let name_len = r.u8("name length")? as usize;
        let name = String::from_utf8_lossy(r.take(name_len, "name")?).into_owned();
        let ndim = r.u8("ndim")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32("dim")?);
        }
        table.push((name, dims));
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_batch() -> (LayerTable, Vec<LayerActivations>) {
        let table: LayerTable = vec![
            ("input".into(), vec![2, 3, 3]),
            ("policy".into(), vec![10]),
        ];
        let make = |game_id, move_index, seedish: f32| LayerActivations {
            game_id,
            move_index,
            layers: vec![
                LayerTensor {
                    name: "input".into(),
                    dims: vec![2, 3, 3],
                    values: (0..18).map(|i| i as f32 * seedish).collect(),
                },
                LayerTensor {
                    name: "policy".into(),
                    dims: vec![10],
                    values: (0..10).map(|i| seedish - i as f32).collect(),
                },
            ],
        };
        (
            table,
            vec![make(1, 4, 0.5), make(0, 2, -1.25), make(1, 2, 3.0)],
        )
    }

    #[test]
    fn write_read_round_trip_and_ordering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("acts.gpac");
        let (table, batch) = sample_batch();
        write_activations(&table, &batch, &path).unwrap();
        let back = read_activations(&path).unwrap();
        assert_eq!(back.len(), 3);
        // Sorted by (game id, move index).
        assert_eq!(
            back.iter()
                .map(|r| (r.game_id, r.move_index))
                .collect::<Vec<_>>(),
            vec![(0, 2), (1, 2), (1, 4)]
        );
        let original: std::collections::BTreeMap<_, _> = batch
            .iter()
            .map(|r| ((r.game_id, r.move_index), r))
            .collect();
        for record in &back {
            assert_eq!(&record, original.get(&(record.game_id, record.move_index)).unwrap());
        }
        // Sidecar exists and matches.
        let sidecar = std::fs::read_to_string(sidecar_path(&path)).unwrap();
        assert!(sidecar.contains("\"records\": 3"));
    }

    #[test]
    fn empty_batch_is_a_valid_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.gpac");
        let (table, _) = sample_batch();
        write_activations(&table, &[], &path).unwrap();
        let back = read_activations(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!(read_layer_table(&path).unwrap(), table);
    }

    #[test]
    fn file_size_matches_format_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sized.gpac");
        let (table, batch) = sample_batch();
        write_activations(&table, &batch, &path).unwrap();
        let header = 4 + 2 + 2;
        let table_bytes: usize = table
            .iter()
            .map(|(name, dims)| 1 + name.len() + 1 + 4 * dims.len())
            .sum();
        let payload: usize = table
            .iter()
            .map(|(_, dims)| dims.iter().map(|&d| d as usize).product::<usize>() * 4)
            .sum();
        let expected = header + table_bytes + 8 + batch.len() * (8 + payload);
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            expected as u64
        );
    }

    #[test]
    fn truncated_file_is_rejected_with_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.gpac");
        let (table, batch) = sample_batch();
        write_activations(&table, &batch, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = &bytes[..bytes.len() - 7];
        let err = parse_activations(cut).unwrap_err();
        match err {
            ActivationError::Format { offset, reason } => {
                assert!(offset > 0);
                assert!(reason.contains("truncated"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trailing_metadata_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trail.gpac");
        let (table, batch) = sample_batch();
        write_activations(&table, &batch, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"producer: something else entirely");
        let back = parse_activations(&bytes).unwrap();
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn bad_magic_version_and_zero_layers() {
        let err = parse_activations(b"NOPE").unwrap_err();
        assert!(matches!(err, ActivationError::Format { offset: 0, .. }));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&GPAC_MAGIC);
        bytes.extend_from_slice(&7u16.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        let err = parse_activations(&bytes).unwrap_err();
        assert!(matches!(err, ActivationError::Version { found: 7 }));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&GPAC_MAGIC);
        bytes.extend_from_slice(&GPAC_VERSION.to_le_bytes());
        bytes.extend_from_slice(&0u16.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        let err = parse_activations(&bytes).unwrap_err();
        match err {
            ActivationError::Format { reason, .. } => assert!(reason.contains("mandatory")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_record_is_rejected_at_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.gpac");
        let (table, mut batch) = sample_batch();
        batch[1].layers[1].values.pop();
        let err = write_activations(&table, &batch, &path).unwrap_err();
        assert!(matches!(err, ActivationError::InvalidSpec(_)));
    }
}
