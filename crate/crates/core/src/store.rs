//! Occurrence embeddings on disk and in memory.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! header (24 bytes)
//!   magic         4 bytes  "CIEM"
//!   version       u32      FORMAT_VERSION
//!   dim           u32      > 0
//!   reserved      u32      0 (keeps the record count 8-byte aligned)
//!   record count  u64
//! record (repeated)
//!   id            u32 byte length + UTF-8
//!   lemma         u32 byte length + UTF-8
//!   sentence_id   u32 byte length + UTF-8
//!   token_index   u32
//!   gold_concept  u32 byte length + UTF-8 (length 0 = absent)
//!   vector        dim x f32 (IEEE-754)
//! ```
//!
//! The JSONL mirror holds one object per line with the same fields plus an
//! optional `pos` tag and a `vector` array.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, CowArray, Ix2};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, OccurrenceRecord};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CIEM";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 24;

const MAX_STRING_LEN: u32 = 1 << 20;

/// Metadata of one stored occurrence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StoreRecord {
    pub id: String,
    pub lemma: String,
    pub sentence_id: String,
    pub token_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_concept: Option<String>,
}

impl StoreRecord {
    pub fn to_occurrence_record(&self) -> OccurrenceRecord {
        OccurrenceRecord {
            id: self.id.clone(),
            lemma: self.lemma.clone(),
            pos: None,
            sentence_id: self.sentence_id.clone(),
            token_index: self.token_index,
            gold_concept: self.gold_concept.clone(),
        }
    }
}

/// Validated occurrence embeddings, kept in file order.
///
/// Vectors are stored as `f32`; every accessor that feeds the clustering
/// engine widens them to `f64`.
#[derive(Clone, Debug)]
pub struct EmbeddingStore {
    dim: usize,
    records: Vec<StoreRecord>,
    data: Vec<f32>,
    rows_by_lemma: BTreeMap<String, Vec<usize>>,
    row_by_id: HashMap<String, usize>,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.records == other.records
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingStore {
    /// Builds a store from records and a row-major `records.len() x dim`
    /// buffer, rejecting non-finite or zero vectors and duplicate ids.
    pub fn new(dim: usize, records: Vec<StoreRecord>, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDim);
        }
        if data.len() != records.len() * dim {
            return Err(Error::Consistency(format!(
                "{} records need {} components, got {}",
                records.len(),
                records.len() * dim,
                data.len()
            )));
        }
        let mut row_by_id = HashMap::with_capacity(records.len());
        for (row, (record, vector)) in records.iter().zip(data.chunks_exact(dim)).enumerate() {
            if record.id.is_empty() {
                return Err(Error::InvalidVector {
                    id: String::new(),
                    reason: format!("record {row} has an empty id"),
                });
            }
            check_vector(&record.id, vector)?;
            if row_by_id.insert(record.id.clone(), row).is_some() {
                return Err(Error::DuplicateOccurrence {
                    key: format!("id {:?}", record.id),
                });
            }
        }
        let mut rows_by_lemma: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (row, record) in records.iter().enumerate() {
            rows_by_lemma
                .entry(record.lemma.clone())
                .or_default()
                .push(row);
        }
        for rows in rows_by_lemma.values_mut() {
            rows.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
        }
        Ok(EmbeddingStore {
            dim,
            records,
            data,
            rows_by_lemma,
            row_by_id,
        })
    }

    pub fn from_rows(dim: usize, rows: Vec<(StoreRecord, Vec<f32>)>) -> Result<Self> {
        let mut records = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (record, vector) in rows {
            if vector.len() != dim {
                return Err(Error::InvalidVector {
                    id: record.id,
                    reason: format!("expected {dim} components, got {}", vector.len()),
                });
            }
            records.push(record);
            data.extend(vector);
        }
        Self::new(dim, records, data)
    }

    /// Keeps only the rows of occurrences present in `corpus`, in corpus
    /// order, with the corpus' (case-folded) lemma.
    pub fn restrict_to_corpus(&self, corpus: &Corpus) -> Result<Self> {
        let mut records = Vec::with_capacity(corpus.len());
        let mut data = Vec::with_capacity(corpus.len() * self.dim);
        for occ in corpus.occurrences() {
            let row = self
                .row_of(&occ.id)
                .ok_or_else(|| Error::MissingVector(occ.id.clone()))?;
            let mut record = self.records[row].clone();
            record.lemma = occ.lemma.clone();
            records.push(record);
            data.extend_from_slice(self.vector(row));
        }
        Self::new(self.dim, records, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[StoreRecord] {
        &self.records
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.row_by_id.get(id).copied()
    }

    pub fn vector_of(&self, id: &str) -> Option<&[f32]> {
        self.row_of(id).map(|r| self.vector(r))
    }

    /// The whole store as an `n x dim` view.
    pub fn matrix(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.len(), self.dim), &self.data).expect("shape checked at construction")
    }

    pub fn lemmas(&self) -> impl Iterator<Item = &str> + '_ {
        self.rows_by_lemma.keys().map(String::as_str)
    }

    /// Rows of `lemma`, ordered by occurrence id.
    pub fn lemma_rows(&self, lemma: &str) -> Result<&[usize]> {
        self.rows_by_lemma
            .get(lemma)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownLemma(lemma.to_string()))
    }

    /// `m_w x dim` block of the lemma's vectors, ordered by occurrence id.
    /// Borrowed when those rows are contiguous and ordered in the store.
    pub fn lemma_block(&self, lemma: &str) -> Result<CowArray<'_, f32, Ix2>> {
        let rows = self.lemma_rows(lemma)?;
        let contiguous = rows.windows(2).all(|w| w[1] == w[0] + 1);
        if contiguous {
            let start = rows[0];
            let view = self.matrix().slice_move(ndarray::s![start..start + rows.len(), ..]);
            Ok(CowArray::from(view))
        } else {
            let mut out = Array2::zeros((rows.len(), self.dim));
            for (mut dst, &row) in out.rows_mut().into_iter().zip(rows) {
                dst.assign(&ndarray::ArrayView1::from(self.vector(row)));
            }
            Ok(CowArray::from(out))
        }
    }

    /// `m_w x dim` matrix of the lemma's vectors widened to `f64`.
    pub fn vectors_for_lemma(&self, lemma: &str) -> Result<Array2<f64>> {
        Ok(self.lemma_block(lemma)?.mapv(f64::from))
    }

    /// Rows for the given occurrence ids, widened to `f64`.
    pub fn gather(&self, ids: &[&str]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((ids.len(), self.dim));
        for (mut dst, id) in out.rows_mut().into_iter().zip(ids) {
            let v = self
                .vector_of(id)
                .ok_or_else(|| Error::MissingVector(id.to_string()))?;
            for (d, &s) in dst.iter_mut().zip(v) {
                *d = f64::from(s);
            }
        }
        Ok(out)
    }

    pub fn occurrence_records(&self) -> Vec<OccurrenceRecord> {
        self.records.iter().map(StoreRecord::to_occurrence_record).collect()
    }

    /// Opens a store file, binary or JSONL (detected from the first byte).
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let first = reader.fill_buf()?.first().copied();
        match first {
            Some(b'{') => read_store_jsonl(reader),
            _ => read_store(reader),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64> {
        let file = File::create(path)?;
        let mut writer = io::BufWriter::new(file);
        let n = write_store(self, &mut writer)?;
        writer.flush().map_err(|source| Error::Write { position: n, source })?;
        Ok(n)
    }
}

fn check_vector(id: &str, vector: &[f32]) -> Result<()> {
    if let Some(i) = vector.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidVector {
            id: id.to_string(),
            reason: format!("component {i} is not finite"),
        });
    }
    if vector.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidVector {
            id: id.to_string(),
            reason: "zero vector".into(),
        });
    }
    Ok(())
}

struct TrackedWriter<W> {
    inner: W,
    position: u64,
}

impl<W: Write> TrackedWriter<W> {
    fn put(&mut self, mut buf: &[u8]) -> Result<()> {
        while !buf.is_empty() {
            match self.inner.write(buf) {
                Ok(0) => {
                    return Err(Error::Write {
                        position: self.position,
                        source: io::ErrorKind::WriteZero.into(),
                    })
                }
                Ok(n) => {
                    self.position += n as u64;
                    buf = &buf[n..];
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(source) => {
                    return Err(Error::Write {
                        position: self.position,
                        source,
                    })
                }
            }
        }
        Ok(())
    }
}

fn push_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

/// Writes the binary format, returning the number of bytes written.
pub fn write_store<W: Write>(store: &EmbeddingStore, sink: W) -> Result<u64> {
    let mut out = TrackedWriter {
        inner: sink,
        position: 0,
    };
    let mut header = Vec::with_capacity(HEADER_LEN as usize);
    header.extend_from_slice(&MAGIC);
    header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    header.extend_from_slice(&(store.dim as u32).to_le_bytes());
    header.extend_from_slice(&0u32.to_le_bytes());
    header.extend_from_slice(&(store.len() as u64).to_le_bytes());
    out.put(&header)?;

    let mut buf = Vec::new();
    for (row, record) in store.records.iter().enumerate() {
        buf.clear();
        push_str(&mut buf, &record.id);
        push_str(&mut buf, &record.lemma);
        push_str(&mut buf, &record.sentence_id);
        buf.extend_from_slice(&record.token_index.to_le_bytes());
        push_str(&mut buf, record.gold_concept.as_deref().unwrap_or(""));
        for x in store.vector(row) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        out.put(&buf)?;
    }
    Ok(out.position)
}

struct RecordReader<R> {
    inner: R,
    expected: u64,
    record: u64,
}

impl<R: Read> RecordReader<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                Error::Truncated {
                    expected: self.expected,
                    actual: self.record,
                }
            } else {
                Error::Io(e)
            }
        })
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn string(&mut self, field: &str) -> Result<String> {
        let len = self.u32()?;
        if len > MAX_STRING_LEN {
            return Err(Error::Corrupt(format!(
                "record {}: {field} length {len} exceeds limit",
                self.record
            )));
        }
        let mut bytes = vec![0u8; len as usize];
        self.fill(&mut bytes)?;
        String::from_utf8(bytes).map_err(|_| {
            Error::Corrupt(format!("record {}: {field} is not UTF-8", self.record))
        })
    }
}

/// Reads and validates the binary format in a single pass.
pub fn read_store<R: Read>(source: R) -> Result<EmbeddingStore> {
    let mut source = source;
    let mut header = [0u8; HEADER_LEN as usize];
    source.read_exact(&mut header).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Corrupt("header shorter than 24 bytes".into())
        } else {
            Error::Io(e)
        }
    })?;
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    let magic: [u8; 4] = header[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic { found: magic });
    }
    let version = word(4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let dim = word(8) as usize;
    if dim == 0 {
        return Err(Error::ZeroDim);
    }
    if word(12) != 0 {
        return Err(Error::Corrupt("reserved header field is not zero".into()));
    }
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap());

    let mut reader = RecordReader {
        inner: source,
        expected: count,
        record: 0,
    };
    let cap = count.min(1 << 16) as usize;
    let mut records = Vec::with_capacity(cap);
    let mut data = Vec::with_capacity(cap * dim);
    let mut vbuf = vec![0u8; dim * 4];
    while reader.record < count {
        let id = reader.string("id")?;
        let lemma = reader.string("lemma")?;
        let sentence_id = reader.string("sentence_id")?;
        let token_index = reader.u32()?;
        let gold = reader.string("gold_concept")?;
        reader.fill(&mut vbuf)?;
        data.extend(
            vbuf.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap())),
        );
        records.push(StoreRecord {
            id,
            lemma,
            sentence_id,
            token_index,
            gold_concept: (!gold.is_empty()).then_some(gold),
        });
        reader.record += 1;
    }
    let mut probe = [0u8; 1];
    loop {
        match reader.inner.read(&mut probe) {
            Ok(0) => break,
            Ok(_) => return Err(Error::Corrupt("trailing bytes after last record".into())),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Io(e)),
        }
    }
    EmbeddingStore::new(dim, records, data)
}

/// One line of the JSONL mirror.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonlRecord {
    pub id: String,
    pub lemma: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<String>,
    pub sentence_id: String,
    pub token_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_concept: Option<String>,
    pub vector: Vec<f32>,
}

impl JsonlRecord {
    pub fn occurrence_record(&self) -> OccurrenceRecord {
        OccurrenceRecord {
            id: self.id.clone(),
            lemma: self.lemma.clone(),
            pos: self.pos.clone(),
            sentence_id: self.sentence_id.clone(),
            token_index: self.token_index,
            gold_concept: self.gold_concept.clone(),
        }
    }

    fn into_row(self) -> (StoreRecord, Vec<f32>) {
        (
            StoreRecord {
                id: self.id,
                lemma: self.lemma,
                sentence_id: self.sentence_id,
                token_index: self.token_index,
                gold_concept: self.gold_concept,
            },
            self.vector,
        )
    }
}

/// Parses JSONL mirror lines, keeping the optional POS tags.
pub fn read_jsonl_records<R: BufRead>(reader: R) -> Result<Vec<JsonlRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| Error::Json {
                line: n + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

pub fn store_from_jsonl_records(records: Vec<JsonlRecord>) -> Result<EmbeddingStore> {
    let dim = records.first().map(|r| r.vector.len()).unwrap_or(0);
    EmbeddingStore::from_rows(dim, records.into_iter().map(JsonlRecord::into_row).collect())
}

pub fn read_store_jsonl<R: BufRead>(reader: R) -> Result<EmbeddingStore> {
    store_from_jsonl_records(read_jsonl_records(reader)?)
}

pub fn write_store_jsonl<W: Write>(store: &EmbeddingStore, mut sink: W) -> Result<()> {
    for (row, record) in store.records.iter().enumerate() {
        let line = JsonlRecord {
            id: record.id.clone(),
            lemma: record.lemma.clone(),
            pos: None,
            sentence_id: record.sentence_id.clone(),
            token_index: record.token_index,
            gold_concept: record.gold_concept.clone(),
            vector: store.vector(row).to_vec(),
        };
        serde_json::to_writer(&mut sink, &line).map_err(io::Error::from)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}
