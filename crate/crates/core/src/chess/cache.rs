//! Position cache files.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic    "NDPOS\0"        6 bytes
//! version  u32              currently 1
//! source   [u8; 32]         SHA-256 of the ingested inputs and label config
//! count    u64
//! records  count x 394 bytes:
//!          tensor   384 x i8 (plane-major)
//!          from     u8      255 = no move
//!          labels   u8      bit i = PropertyKind::ALL[i]
//!          game_id  u32
//!          ply      u32
//! ```
//!
//! The CSV variant carries the same fields with a `# format=...` first line.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::chess::encode::{BoardTensor, BOARD_TENSOR_LEN};
use crate::chess::labels::PropertyKind;
use crate::chess::positions::PositionRecord;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 6] = b"NDPOS\0";
pub const CACHE_VERSION: u32 = 1;
const NO_MOVE: u8 = 255;
const CSV_TAG: &str = "# format=neurodenote-positions";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionCache {
    pub source_hash: [u8; 32],
    pub records: Vec<PositionRecord>,
}

impl PositionCache {
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(CACHE_MAGIC)?;
        w.write_all(&CACHE_VERSION.to_le_bytes())?;
        w.write_all(&self.source_hash)?;
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            let bytes: Vec<u8> = r.tensor.values().iter().map(|&v| v as u8).collect();
            w.write_all(&bytes)?;
            w.write_all(&[r.from_square.unwrap_or(NO_MOVE), label_bits(&r.labels)])?;
            w.write_all(&r.game_id.to_le_bytes())?;
            w.write_all(&r.ply.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::Format("not a position cache".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CACHE_VERSION {
            return Err(Error::Format(format!("unsupported cache version {version}")));
        }
        let mut source_hash = [0u8; 32];
        r.read_exact(&mut source_hash)?;
        let mut count = [0u8; 8];
        r.read_exact(&mut count)?;
        let count = u64::from_le_bytes(count) as usize;
        let mut records = Vec::with_capacity(count.min(1 << 24));
        let mut buf = vec![0u8; BOARD_TENSOR_LEN];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            let tensor = BoardTensor::from_values(buf.iter().map(|&b| b as i8).collect())?;
            let mut two = [0u8; 2];
            r.read_exact(&mut two)?;
            let from_square = decode_from(two[0])?;
            let labels = bits_label(two[1]);
            let game_id = read_u32(&mut r)?;
            let ply = read_u32(&mut r)?;
            records.push(PositionRecord {
                tensor,
                from_square,
                labels,
                game_id,
                ply,
            });
        }
        Ok(PositionCache { source_hash, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(file)
        } else {
            self.write_binary(file)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(file)
        } else {
            Self::read_binary(file)
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(
            w,
            "{CSV_TAG} version={CACHE_VERSION} source={}",
            hex::encode(self.source_hash)
        )?;
        let mut csv = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..BOARD_TENSOR_LEN).map(|i| format!("x{i}")).collect();
        header.push("from_square".into());
        header.extend(PropertyKind::ALL.iter().map(|p| p.name().to_string()));
        header.push("game_id".into());
        header.push("ply".into());
        csv.write_record(&header)?;
        for r in &self.records {
            let mut row: Vec<String> = r.tensor.values().iter().map(|v| v.to_string()).collect();
            row.push(r.from_square.map_or(String::new(), |s| s.to_string()));
            row.extend(r.labels.iter().map(|&l| u8::from(l).to_string()));
            row.push(r.game_id.to_string());
            row.push(r.ply.to_string());
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut first = String::new();
        r.read_line(&mut first)?;
        let source = first
            .strip_prefix(CSV_TAG)
            .and_then(|rest| {
                let mut version = None;
                let mut source = None;
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("version", v)) => version = v.parse::<u32>().ok(),
                        Some(("source", s)) => source = Some(s.to_string()),
                        _ => {}
                    }
                }
                (version == Some(CACHE_VERSION)).then_some(source).flatten()
            })
            .ok_or_else(|| Error::Format("missing or unsupported CSV cache header".into()))?;
        let mut source_hash = [0u8; 32];
        hex::decode_to_slice(source.trim(), &mut source_hash)
            .map_err(|e| Error::Format(format!("bad source hash: {e}")))?;

        let mut reader = csv::Reader::from_reader(r);
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            if row.len() != BOARD_TENSOR_LEN + 6 {
                return Err(Error::Format(format!("row has {} fields", row.len())));
            }
            let parse = |s: &str| -> Result<i64> {
                s.parse::<i64>()
                    .map_err(|e| Error::Format(format!("bad integer `{s}`: {e}")))
            };
            let mut values = Vec::with_capacity(BOARD_TENSOR_LEN);
            for field in row.iter().take(BOARD_TENSOR_LEN) {
                values.push(parse(field)? as i8);
            }
            let from = &row[BOARD_TENSOR_LEN];
            let from_square = if from.is_empty() {
                None
            } else {
                decode_from(parse(from)? as u8)?
            };
            let mut labels = [false; 3];
            for (i, l) in labels.iter_mut().enumerate() {
                *l = parse(&row[BOARD_TENSOR_LEN + 1 + i])? != 0;
            }
            records.push(PositionRecord {
                tensor: BoardTensor::from_values(values)?,
                from_square,
                labels,
                game_id: parse(&row[BOARD_TENSOR_LEN + 4])? as u32,
                ply: parse(&row[BOARD_TENSOR_LEN + 5])? as u32,
            });
        }
        Ok(PositionCache { source_hash, records })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn decode_from(b: u8) -> Result<Option<u8>> {
    match b {
        NO_MOVE => Ok(None),
        0..=63 => Ok(Some(b)),
        _ => Err(Error::Format(format!("bad from-square {b}"))),
    }
}

fn label_bits(labels: &[bool; 3]) -> u8 {
    labels
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &l)| acc | (u8::from(l) << i))
}

fn bits_label(bits: u8) -> [bool; 3] {
    [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0]
}
