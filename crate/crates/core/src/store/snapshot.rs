//! Binary graph snapshot for fast reload.
//!
//! Layout (little endian): magic `KGQASNP1`; entity count `u32`, then per
//! entity a length-prefixed external id, a presence byte plus length-prefixed
//! label, and a CVT byte; relation count and the same records without the CVT
//! byte; source-id tables as sorted `(u64, u32)` pairs; triple count `u64`
//! followed by `(u32, u32, u32)` records.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::catalog::{EntityCatalog, EntityId, RelationCatalog, RelationId};
use super::graph::{KnowledgeGraph, Triple};
use super::StoreError;

const MAGIC: &[u8; 8] = b"KGQASNP1";

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    out.extend_from_slice(s.as_bytes());
}

fn put_opt_str(out: &mut Vec<u8>, s: Option<&str>) {
    match s {
        Some(s) => {
            out.push(1);
            put_str(out, s);
        }
        None => out.push(0),
    }
}

pub fn encode_snapshot(graph: &KnowledgeGraph) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + graph.triples().len() * 12);
    out.extend_from_slice(MAGIC);
    let ents = graph.entities();
    out.write_u32::<LittleEndian>(ents.len() as u32).unwrap();
    for id in ents.ids() {
        put_str(&mut out, ents.external_id(id).unwrap_or_default());
        put_opt_str(&mut out, ents.label(id));
        out.push(ents.is_cvt(id) as u8);
    }
    let rels = graph.relations();
    out.write_u32::<LittleEndian>(rels.len() as u32).unwrap();
    for id in rels.ids() {
        put_str(&mut out, rels.external_id(id).unwrap_or_default());
        put_opt_str(&mut out, rels.label(id));
    }
    let mut ent_src: Vec<(u64, u32)> = ents.source_ids().map(|(s, e)| (s, e.0)).collect();
    ent_src.sort_unstable();
    let mut rel_src: Vec<(u64, u32)> = rels.source_ids().map(|(s, r)| (s, r.0)).collect();
    rel_src.sort_unstable();
    for table in [&ent_src, &rel_src] {
        out.write_u64::<LittleEndian>(table.len() as u64).unwrap();
        for &(s, i) in table {
            out.write_u64::<LittleEndian>(s).unwrap();
            out.write_u32::<LittleEndian>(i).unwrap();
        }
    }
    out.write_u64::<LittleEndian>(graph.triples().len() as u64)
        .unwrap();
    for t in graph.triples() {
        out.write_u32::<LittleEndian>(t.head.0).unwrap();
        out.write_u32::<LittleEndian>(t.relation.0).unwrap();
        out.write_u32::<LittleEndian>(t.tail.0).unwrap();
    }
    out
}

pub fn write_snapshot(graph: &KnowledgeGraph, mut writer: impl Write) -> Result<String, StoreError> {
    let bytes = encode_snapshot(graph);
    writer
        .write_all(&bytes)
        .map_err(|e| StoreError::Read(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn snapshot_digest(graph: &KnowledgeGraph) -> String {
    hex::encode(Sha256::digest(encode_snapshot(graph)))
}

fn snap_err(e: std::io::Error) -> StoreError {
    StoreError::Snapshot(e.to_string())
}

fn get_str(r: &mut impl Read) -> Result<String, StoreError> {
    let len = r.read_u32::<LittleEndian>().map_err(snap_err)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(snap_err)?;
    String::from_utf8(buf).map_err(|e| StoreError::Snapshot(e.to_string()))
}

fn get_opt_str(r: &mut impl Read) -> Result<Option<String>, StoreError> {
    match r.read_u8().map_err(snap_err)? {
        0 => Ok(None),
        1 => get_str(r).map(Some),
        b => Err(StoreError::Snapshot(format!("bad presence byte {b}"))),
    }
}

pub fn read_snapshot(mut r: impl Read) -> Result<KnowledgeGraph, StoreError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(snap_err)?;
    if &magic != MAGIC {
        return Err(StoreError::Snapshot("not a graph snapshot".into()));
    }
    let mut ents = EntityCatalog::new();
    let n = r.read_u32::<LittleEndian>().map_err(snap_err)?;
    for _ in 0..n {
        let id = ents.intern(&get_str(&mut r)?);
        if let Some(label) = get_opt_str(&mut r)? {
            ents.set_label(id, &label);
        }
        ents.set_cvt(id, r.read_u8().map_err(snap_err)? != 0);
    }
    let mut rels = RelationCatalog::new();
    let n = r.read_u32::<LittleEndian>().map_err(snap_err)?;
    for _ in 0..n {
        let id = rels.intern(&get_str(&mut r)?);
        if let Some(label) = get_opt_str(&mut r)? {
            rels.set_label(id, &label);
        }
    }
    for is_entity in [true, false] {
        let n = r.read_u64::<LittleEndian>().map_err(snap_err)?;
        for _ in 0..n {
            let s = r.read_u64::<LittleEndian>().map_err(snap_err)?;
            let i = r.read_u32::<LittleEndian>().map_err(snap_err)?;
            if is_entity {
                ents.set_source_id(s, EntityId(i));
            } else {
                rels.set_source_id(s, RelationId(i));
            }
        }
    }
    let n = r.read_u64::<LittleEndian>().map_err(snap_err)?;
    let mut triples = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let h = r.read_u32::<LittleEndian>().map_err(snap_err)?;
        let rel = r.read_u32::<LittleEndian>().map_err(snap_err)?;
        let t = r.read_u32::<LittleEndian>().map_err(snap_err)?;
        if h as usize >= ents.len() || t as usize >= ents.len() || rel as usize >= rels.len() {
            return Err(StoreError::Snapshot("triple references unknown id".into()));
        }
        triples.push(Triple::new(EntityId(h), RelationId(rel), EntityId(t)));
    }
    Ok(KnowledgeGraph::from_parts(ents, rels, triples))
}
