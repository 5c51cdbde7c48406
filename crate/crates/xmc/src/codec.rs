//! Model components to and from XAST containers.

use xmc_core::dense::Matrix;
use xmc_core::hnsw::{HnswIndex, HnswParams, HnswParts};
use xmc_core::nn::{ClassifierBank, EmbeddingBank};
use xmc_core::reranker::RerankerModel;
use xmc_core::shortlist::{Caps, Entry, Shortlist, ShortlistParams, Shortlister, Source};
use xmc_core::spectral::ResidualBlock;
use xmc_core::train::Network;
use xmc_core::LabelId;

use crate::error::{Result, XmcError};
use crate::xast::Container;

const NONE: u32 = u32::MAX;

fn key(prefix: &str, name: &str) -> String {
    format!("{prefix}.{name}")
}

fn usize_of(v: u64) -> usize {
    v as usize
}

fn bad(msg: impl Into<String>) -> XmcError {
    XmcError::Container(msg.into())
}

pub fn put_embeddings(c: &mut Container, prefix: &str, e: &EmbeddingBank) -> Result<()> {
    c.put_f64(&key(prefix, "embeddings"), &[e.vocab(), e.dim()], e.as_slice().to_vec())
}

pub fn get_embeddings(c: &Container, prefix: &str) -> Result<EmbeddingBank> {
    let (dims, v) = c.f64(&key(prefix, "embeddings"))?;
    if dims.len() != 2 {
        return Err(bad("embeddings must be rank 2"));
    }
    Ok(EmbeddingBank::from_token_major(usize_of(dims[0]), usize_of(dims[1]), v.to_vec())?)
}

pub fn put_residual(c: &mut Container, prefix: &str, b: &ResidualBlock) -> Result<()> {
    let d = b.dim();
    c.put_f64(&key(prefix, "residual"), &[d, d], b.r.as_slice().to_vec())?;
    c.put_f64(&key(prefix, "lambda"), &[1], vec![b.lambda])?;
    c.put_f64(&key(prefix, "power_u"), &[d], b.u.clone())?;
    c.put_f64(&key(prefix, "power_v"), &[d], b.v.clone())
}

pub fn get_residual(c: &Container, prefix: &str) -> Result<ResidualBlock> {
    let (dims, r) = c.f64(&key(prefix, "residual"))?;
    if dims.len() != 2 || dims[0] != dims[1] {
        return Err(bad("residual must be square"));
    }
    let d = usize_of(dims[0]);
    let u = c.f64(&key(prefix, "power_u"))?.1.to_vec();
    let v = c.f64(&key(prefix, "power_v"))?.1.to_vec();
    if u.len() != d || v.len() != d {
        return Err(bad("power vectors do not match residual"));
    }
    Ok(ResidualBlock {
        r: Matrix::from_vec(d, d, r.to_vec()),
        lambda: c.scalar_f64(&key(prefix, "lambda"))?,
        u,
        v,
    })
}

pub fn put_network(c: &mut Container, prefix: &str, n: &Network) -> Result<()> {
    put_embeddings(c, prefix, &n.embeddings)?;
    put_residual(c, prefix, &n.residual)?;
    let w = &n.classifiers;
    c.put_f64(&key(prefix, "classifiers"), &[w.num_labels(), w.dim()], w.as_slice().to_vec())
}

pub fn get_network(c: &Container, prefix: &str) -> Result<Network> {
    let (dims, w) = c.f64(&key(prefix, "classifiers"))?;
    if dims.len() != 2 {
        return Err(bad("classifiers must be rank 2"));
    }
    Ok(Network {
        embeddings: get_embeddings(c, prefix)?,
        residual: get_residual(c, prefix)?,
        classifiers: ClassifierBank::from_label_major(usize_of(dims[0]), usize_of(dims[1]), w.to_vec())?,
    })
}

pub fn put_reranker(c: &mut Container, prefix: &str, r: &RerankerModel) -> Result<()> {
    put_network(c, prefix, &r.net)?;
    c.put_u8(&key(prefix, "trained"), r.trained.iter().map(|&b| u8::from(b)).collect())
}

pub fn get_reranker(c: &Container, prefix: &str) -> Result<RerankerModel> {
    Ok(RerankerModel {
        net: get_network(c, prefix)?,
        trained: c.u8(&key(prefix, "trained"))?.iter().map(|&b| b != 0).collect(),
    })
}

pub fn put_hnsw(c: &mut Container, prefix: &str, idx: &HnswIndex) -> Result<()> {
    let p = idx.to_parts();
    let n = p.levels.len();
    c.put_u64(
        &key(prefix, "meta"),
        vec![
            p.dim as u64,
            p.params.m as u64,
            p.params.ef_construction as u64,
            p.params.seed,
            p.entry.map_or(u64::MAX, u64::from),
            p.max_level as u64,
        ],
    )?;
    c.put_f64(&key(prefix, "vectors"), &[n, p.dim], p.vectors)?;
    c.put_u8(&key(prefix, "levels"), p.levels)?;
    c.put_u64(&key(prefix, "offsets"), p.offsets)?;
    c.put_u32(&key(prefix, "links"), p.ids)
}

pub fn get_hnsw(c: &Container, prefix: &str) -> Result<HnswIndex> {
    let meta = c.u64(&key(prefix, "meta"))?;
    if meta.len() != 6 {
        return Err(bad("HNSW meta must have 6 entries"));
    }
    let parts = HnswParts {
        dim: usize_of(meta[0]),
        params: HnswParams {
            m: usize_of(meta[1]),
            ef_construction: usize_of(meta[2]),
            seed: meta[3],
        },
        vectors: c.f64(&key(prefix, "vectors"))?.1.to_vec(),
        levels: c.u8(&key(prefix, "levels"))?.to_vec(),
        offsets: c.u64(&key(prefix, "offsets"))?.to_vec(),
        ids: c.u32(&key(prefix, "links"))?.to_vec(),
        entry: (meta[4] != u64::MAX).then_some(meta[4] as u32),
        max_level: usize_of(meta[5]),
    };
    Ok(HnswIndex::from_parts(parts)?)
}

fn put_csr(c: &mut Container, prefix: &str, rows: &[Vec<u32>]) -> Result<()> {
    let mut offsets = vec![0u64];
    let mut ids = Vec::new();
    for r in rows {
        ids.extend_from_slice(r);
        offsets.push(ids.len() as u64);
    }
    c.put_u64(&key(prefix, "offsets"), offsets)?;
    c.put_u32(&key(prefix, "ids"), ids)
}

fn get_csr(c: &Container, prefix: &str) -> Result<Vec<Vec<u32>>> {
    let offsets = c.u64(&key(prefix, "offsets"))?;
    let ids = c.u32(&key(prefix, "ids"))?;
    if offsets.first() != Some(&0) || offsets.last().map(|&o| o as usize) != Some(ids.len()) {
        return Err(bad(format!("{prefix}: bad offsets")));
    }
    offsets
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0] as usize, w[1] as usize);
            ids.get(a..b).map(<[u32]>::to_vec).ok_or_else(|| bad(format!("{prefix}: bad offsets")))
        })
        .collect()
}

pub fn put_shortlister(c: &mut Container, prefix: &str, s: &Shortlister) -> Result<()> {
    let p = &s.params;
    c.put_u64(
        &key(prefix, "params"),
        vec![
            p.caps.doc_route as u64,
            p.caps.centroid_route as u64,
            p.caps.random as u64,
            p.caps.total as u64,
            p.doc_neighbors as u64,
            p.ef_search as u64,
            s.num_labels as u64,
        ],
    )?;
    put_hnsw(c, &key(prefix, "docs"), &s.doc_index)?;
    put_hnsw(c, &key(prefix, "reps"), &s.rep_index)?;
    c.put_u32(&key(prefix, "doc_ids"), s.doc_ids.clone())?;
    put_csr(c, &key(prefix, "doc_labels"), &s.doc_labels)?;
    c.put_u32(&key(prefix, "rep_owner"), s.rep_owner.clone())?;
    c.put_u32(&key(prefix, "centroid_row"), s.centroid_row.iter().map(|r| r.unwrap_or(NONE)).collect())
}

pub fn get_shortlister(c: &Container, prefix: &str) -> Result<Shortlister> {
    let p = c.u64(&key(prefix, "params"))?;
    if p.len() != 7 {
        return Err(bad("shortlister params must have 7 entries"));
    }
    let centroid_row = c
        .u32(&key(prefix, "centroid_row"))?
        .iter()
        .map(|&r| (r != NONE).then_some(r))
        .collect();
    Ok(Shortlister {
        params: ShortlistParams {
            caps: Caps {
                doc_route: usize_of(p[0]),
                centroid_route: usize_of(p[1]),
                random: usize_of(p[2]),
                total: usize_of(p[3]),
            },
            doc_neighbors: usize_of(p[4]),
            ef_search: usize_of(p[5]),
        },
        num_labels: usize_of(p[6]),
        doc_index: get_hnsw(c, &key(prefix, "docs"))?,
        doc_ids: c.u32(&key(prefix, "doc_ids"))?.to_vec(),
        doc_labels: get_csr(c, &key(prefix, "doc_labels"))?,
        rep_index: get_hnsw(c, &key(prefix, "reps"))?,
        rep_owner: c.u32(&key(prefix, "rep_owner"))?.to_vec(),
        centroid_row,
    })
}

fn source_tag(s: Source) -> u8 {
    match s {
        Source::Doc => 0,
        Source::Centroid => 1,
        Source::Random => 2,
    }
}

pub fn put_shortlist(c: &mut Container, prefix: &str, sl: &Shortlist) -> Result<()> {
    let labels: Vec<Vec<LabelId>> = sl.rows.iter().map(|r| r.iter().map(|e| e.label).collect()).collect();
    put_csr(c, prefix, &labels)?;
    let scores: Vec<f64> = sl.rows.iter().flatten().map(|e| e.score).collect();
    let n = scores.len();
    c.put_f64(&key(prefix, "scores"), &[n], scores)?;
    c.put_u8(&key(prefix, "sources"), sl.rows.iter().flatten().map(|e| source_tag(e.source)).collect())?;
    c.put_u64(&key(prefix, "num_labels"), vec![sl.num_labels as u64])
}

pub fn get_shortlist(c: &Container, prefix: &str) -> Result<Shortlist> {
    let labels = get_csr(c, prefix)?;
    let scores = c.f64(&key(prefix, "scores"))?.1;
    let sources = c.u8(&key(prefix, "sources"))?;
    let total: usize = labels.iter().map(Vec::len).sum();
    if scores.len() != total || sources.len() != total {
        return Err(bad("shortlist payload lengths disagree"));
    }
    let mut k = 0;
    let mut rows = Vec::with_capacity(labels.len());
    for r in labels {
        let mut row = Vec::with_capacity(r.len());
        for l in r {
            let source = match sources[k] {
                0 => Source::Doc,
                1 => Source::Centroid,
                2 => Source::Random,
                t => return Err(bad(format!("unknown shortlist source {t}"))),
            };
            row.push(Entry {
                label: l,
                score: scores[k],
                source,
            });
            k += 1;
        }
        rows.push(row);
    }
    Ok(Shortlist {
        num_labels: usize_of(c.scalar_u64(&key(prefix, "num_labels"))?),
        rows,
    })
}
