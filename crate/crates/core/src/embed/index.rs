use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{cosine_with_norms, EmbedError, Embedder, EmbeddingVector};

const MAGIC: &[u8; 8] = b"KGQAVEC1";

/// Window parameters in whitespace-delimited words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Chunking {
    pub size: usize,
    pub overlap: usize,
}

impl Default for Chunking {
    fn default() -> Self {
        Self {
            size: 256,
            overlap: 32,
        }
    }
}

impl Chunking {
    pub fn new(size: usize, overlap: usize) -> Result<Self, EmbedError> {
        if size <= overlap {
            return Err(EmbedError::Chunking { size, overlap });
        }
        Ok(Self { size, overlap })
    }
}

/// Splits text into windows of `size` words, consecutive windows sharing
/// `overlap` words. The last window ends at the last word.
pub fn chunk_text(text: &str, chunking: Chunking) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let n = words.len();
    if n == 0 {
        return Vec::new();
    }
    let step = chunking.size - chunking.overlap;
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + chunking.size).min(n);
        out.push(words[start..end].join(" "));
        if end == n {
            break;
        }
        start += step;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentChunk {
    pub id: u64,
    pub source_id: String,
    pub text: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub chunk_id: u64,
    pub score: f64,
}

/// Result of a similarity query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Retrieval {
    /// Descending score, ties by ascending chunk id.
    pub hits: Vec<Hit>,
    pub empty_index: bool,
    pub degenerate_query: bool,
}

/// Append-only exact-search index. Chunk ids are assigned sequentially.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    dim: usize,
    chunks: Vec<DocumentChunk>,
    norms: Vec<f64>,
}

impl EmbeddingIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            chunks: Vec::new(),
            norms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[DocumentChunk] {
        &self.chunks
    }

    pub fn chunk(&self, id: u64) -> Option<&DocumentChunk> {
        self.chunks.get(usize::try_from(id).ok()?)
    }

    /// Stores a pre-computed vector. Empty text is rejected.
    pub fn insert(
        &mut self,
        source_id: &str,
        text: &str,
        vector: EmbeddingVector,
    ) -> Result<u64, EmbedError> {
        if vector.dim() != self.dim {
            return Err(EmbedError::Dimension {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if text.is_empty() {
            return Err(EmbedError::Format {
                path: source_id.to_owned(),
                message: "chunk text is empty".into(),
            });
        }
        let id = self.chunks.len() as u64;
        self.norms.push(vector.norm());
        self.chunks.push(DocumentChunk {
            id,
            source_id: source_id.to_owned(),
            text: text.to_owned(),
            vector,
        });
        Ok(id)
    }

    /// Chunks, embeds and stores `text`. Adding the same source twice stores
    /// it twice under fresh chunk ids.
    pub fn add(
        &mut self,
        embedder: &dyn Embedder,
        source_id: &str,
        text: &str,
        chunking: Chunking,
    ) -> Result<Vec<u64>, EmbedError> {
        let mut ids = Vec::new();
        for piece in chunk_text(text, chunking) {
            let v = embedder.embed(&piece)?;
            ids.push(self.insert(source_id, &piece, v)?);
        }
        Ok(ids)
    }

    pub fn top_k(
        &self,
        embedder: &dyn Embedder,
        query: &str,
        k: usize,
    ) -> Result<Retrieval, EmbedError> {
        let q = embedder.embed(query)?;
        self.top_k_vector(&q, k)
    }

    /// Exhaustive cosine scan returning `min(k, len)` hits.
    pub fn top_k_vector(&self, query: &EmbeddingVector, k: usize) -> Result<Retrieval, EmbedError> {
        if query.dim() != self.dim {
            return Err(EmbedError::Dimension {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let qn = query.norm();
        let mut hits: Vec<Hit> = self
            .chunks
            .iter()
            .zip(&self.norms)
            .map(|(c, &n)| Hit {
                chunk_id: c.id,
                score: cosine_with_norms(query.values(), qn, c.vector.values(), n),
            })
            .collect();
        let k = k.min(hits.len());
        let order = |a: &Hit, b: &Hit| {
            b.score
                .total_cmp(&a.score)
                .then(a.chunk_id.cmp(&b.chunk_id))
        };
        if k < hits.len() && k > 0 {
            hits.select_nth_unstable_by(k - 1, order);
        }
        hits.truncate(k);
        hits.sort_unstable_by(order);
        Ok(Retrieval {
            hits,
            empty_index: self.chunks.is_empty(),
            degenerate_query: qn == 0.0,
        })
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".tsv");
        PathBuf::from(s)
    }

    /// Writes `path` (binary vectors) and `path.tsv` (chunk id, source id,
    /// escaped text).
    pub fn save(&self, path: &Path) -> Result<(), EmbedError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |source| EmbedError::Io { path: p, source }
        };
        let mut w = BufWriter::new(File::create(path).map_err(io(path))?);
        self.write_binary(&mut w).map_err(io(path))?;
        w.flush().map_err(io(path))?;
        let side = Self::sidecar(path);
        let mut t = BufWriter::new(File::create(&side).map_err(io(&side))?);
        for c in &self.chunks {
            writeln!(t, "{}\t{}\t{}", c.id, escape(&c.source_id), escape(&c.text))
                .map_err(io(&side))?;
        }
        t.flush().map_err(io(&side))
    }

    fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(self.dim as u32)?;
        w.write_u64::<LittleEndian>(self.chunks.len() as u64)?;
        for c in &self.chunks {
            w.write_u64::<LittleEndian>(c.id)?;
            for &v in c.vector.values() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    /// The binary file as bytes, for digests.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf).expect("writing to memory");
        buf
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let shown = path.display().to_string();
        let fmt = |m: String| EmbedError::Format {
            path: shown.clone(),
            message: m,
        };
        let io = |source| EmbedError::Io {
            path: shown.clone(),
            source,
        };
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(fmt("not an embedding index file".into()));
        }
        let dim = r.read_u32::<LittleEndian>().map_err(io)? as usize;
        let count = r.read_u64::<LittleEndian>().map_err(io)?;
        let mut vectors = Vec::new();
        for _ in 0..count {
            let id = r.read_u64::<LittleEndian>().map_err(io)?;
            let mut values = vec![0.0; dim];
            r.read_f64_into::<LittleEndian>(&mut values).map_err(io)?;
            vectors.push((id, EmbeddingVector::new(values)?));
        }

        let side = Self::sidecar(path);
        let side_shown = side.display().to_string();
        let file = File::open(&side).map_err(|source| EmbedError::Io {
            path: side_shown.clone(),
            source,
        })?;
        let mut texts = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| EmbedError::Io {
                path: side_shown.clone(),
                source,
            })?;
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(src), Some(text)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(EmbedError::Format {
                    path: side_shown,
                    message: format!("line {}: expected 3 columns", n + 1),
                });
            };
            let id: u64 = id.parse().map_err(|_| EmbedError::Format {
                path: side_shown.clone(),
                message: format!("line {}: bad chunk id {id:?}", n + 1),
            })?;
            texts.push((id, unescape(src), unescape(text)));
        }
        if texts.len() != vectors.len() {
            return Err(fmt(format!(
                "{} vectors but {} sidecar rows",
                vectors.len(),
                texts.len()
            )));
        }

        let mut index = Self::new(dim);
        for ((id, v), (tid, src, text)) in vectors.into_iter().zip(texts) {
            if id != tid || id != index.len() as u64 {
                return Err(fmt(format!("chunk id {id} out of sequence")));
            }
            index.insert(&src, &text, v)?;
        }
        Ok(index)
    }
}

pub(crate) fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    #[test]
    fn windowing_arithmetic() {
        let text = (1..=10).map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
        let chunks = chunk_text(&text, Chunking::new(4, 1).unwrap());
        assert_eq!(chunks, vec!["1 2 3 4", "4 5 6 7", "7 8 9 10"]);
    }

    #[test]
    fn short_text_is_one_chunk_and_empty_is_none() {
        assert_eq!(chunk_text("a b c", Chunking::default()).len(), 1);
        assert!(chunk_text("   ", Chunking::default()).is_empty());
        assert!(Chunking::new(3, 3).is_err());
    }

    #[test]
    fn single_chunk_index_returns_it() {
        let e = HashEmbedder::new(16, 0);
        let mut idx = EmbeddingIndex::new(16);
        idx.add(&e, "s", "directed_by", Chunking::default()).unwrap();
        let r = idx.top_k(&e, "anything at all", 5).unwrap();
        assert_eq!(r.hits.len(), 1);
        assert_eq!(r.hits[0].chunk_id, 0);
    }

    #[test]
    fn adding_twice_appends() {
        let e = HashEmbedder::new(16, 0);
        let mut idx = EmbeddingIndex::new(16);
        let a = idx.add(&e, "s", "text", Chunking::default()).unwrap();
        let b = idx.add(&e, "s", "text", Chunking::default()).unwrap();
        assert_ne!(a, b);
        assert_eq!(idx.chunk(a[0]).unwrap().text, idx.chunk(b[0]).unwrap().text);
    }

    #[test]
    fn ties_order_by_chunk_id() {
        let mut idx = EmbeddingIndex::new(2);
        for i in 0..4 {
            let v = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
            idx.insert(&format!("s{i}"), "t", v).unwrap();
        }
        let q = EmbeddingVector::new(vec![2.0, 0.0]).unwrap();
        let ids: Vec<u64> = idx
            .top_k_vector(&q, 3)
            .unwrap()
            .hits
            .iter()
            .map(|h| h.chunk_id)
            .collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn empty_index_and_zero_query_are_flagged() {
        let idx = EmbeddingIndex::new(4);
        let r = idx.top_k_vector(&EmbeddingVector::zeros(4), 3).unwrap();
        assert!(r.empty_index && r.degenerate_query && r.hits.is_empty());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.bin");
        let e = HashEmbedder::new(8, 3);
        let mut idx = EmbeddingIndex::new(8);
        idx.add(&e, "a\tb", "line one\nwith tab\tand \\ slash", Chunking::default())
            .unwrap();
        idx.add(&e, "c", "second", Chunking::default()).unwrap();
        idx.save(&path).unwrap();
        let back = EmbeddingIndex::load(&path).unwrap();
        assert_eq!(back.chunks(), idx.chunks());
        assert_eq!(back.to_bytes(), std::fs::read(&path).unwrap());
    }
}
