//! Corpus and model persistence.
//!
//! Binary layouts are little-endian with `f32` payloads:
//!
//! - `EMB1`: magic, `u32 n`, `u32 d`, then `n` records of `u32 id_len`, id
//!   bytes, `d` floats. Ids are stored inline so corpora round-trip; a record
//!   with zero-length id is named by its row index.
//! - `RQK1`: magic, `u32 d`, `u32 L`, `L × u32 K_l`, `f32 beta`, then `W_e`,
//!   `b_e`, each level's centroids, `W_d`, `b_d`, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use super::rq::Codebook;
use super::rqkp::RqkpModel;
use super::EmbeddingCorpus;
use crate::error::{GprError, Result};

const EMB_MAGIC: &[u8; 4] = b"EMB1";
const RQK_MAGIC: &[u8; 4] = b"RQK1";

pub fn read_corpus_csv<R: Read>(reader: R) -> Result<EmbeddingCorpus> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("item_id") || headers.len() < 2 {
        return Err(GprError::Format("corpus CSV must start with item_id followed by v0..".into()));
    }
    for (j, h) in headers.iter().skip(1).enumerate() {
        if h != format!("v{j}") {
            return Err(GprError::Format(format!("unexpected corpus column {h:?}, want v{j}")));
        }
    }
    let d = headers.len() - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| GprError::Format(format!("row {}: bad number {field:?}", line + 1)))?;
            values.push(v);
        }
    }
    let n = ids.len();
    let vectors = Array2::from_shape_vec((n, d), values).map_err(|e| GprError::Format(e.to_string()))?;
    EmbeddingCorpus::new(ids, vectors)
}

pub fn write_corpus_csv<W: Write>(corpus: &EmbeddingCorpus, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["item_id".to_string()];
    header.extend((0..corpus.dim()).map(|j| format!("v{j}")));
    w.write_record(&header)?;
    for (i, id) in corpus.ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(corpus.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn check_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(GprError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0f32; n];
    r.read_f32_into::<LittleEndian>(&mut buf)?;
    Ok(buf.into_iter().map(f64::from).collect())
}

fn write_f32s<'a, W: Write>(w: &mut W, vals: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    for &v in vals {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    Ok(())
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| GprError::Format(format!("{what} {v} does not fit in u32")))
}

pub fn read_emb1<R: Read>(reader: R) -> Result<EmbeddingCorpus> {
    let mut r = BufReader::new(reader);
    check_magic(&mut r, EMB_MAGIC)?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let mut ids = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut raw = vec![0u8; len];
        r.read_exact(&mut raw)?;
        let id = String::from_utf8(raw).map_err(|_| GprError::Format(format!("record {i}: id is not UTF-8")))?;
        ids.push(if id.is_empty() { i.to_string() } else { id });
        values.extend(read_f32s(&mut r, d)?);
    }
    let vectors = Array2::from_shape_vec((n, d), values).map_err(|e| GprError::Format(e.to_string()))?;
    EmbeddingCorpus::new(ids, vectors)
}

pub fn write_emb1<W: Write>(corpus: &EmbeddingCorpus, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(EMB_MAGIC)?;
    w.write_u32::<LittleEndian>(to_u32(corpus.len(), "item count")?)?;
    w.write_u32::<LittleEndian>(to_u32(corpus.dim(), "dimension")?)?;
    for (i, id) in corpus.ids().iter().enumerate() {
        w.write_u32::<LittleEndian>(to_u32(id.len(), "id length")?)?;
        w.write_all(id.as_bytes())?;
        write_f32s(&mut w, corpus.row(i).iter())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rqk1<W: Write>(model: &RqkpModel, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    w.write_all(RQK_MAGIC)?;
    w.write_u32::<LittleEndian>(to_u32(model.dim(), "dimension")?)?;
    let sizes = model.codebook.level_sizes();
    w.write_u32::<LittleEndian>(to_u32(sizes.len(), "level count")?)?;
    for &k in &sizes {
        w.write_u32::<LittleEndian>(to_u32(k, "codebook size")?)?;
    }
    w.write_f32::<LittleEndian>(model.beta as f32)?;
    write_f32s(&mut w, model.enc_weight.iter())?;
    write_f32s(&mut w, model.enc_bias.iter())?;
    for level in model.codebook.levels() {
        write_f32s(&mut w, level.iter())?;
    }
    write_f32s(&mut w, model.dec_weight.iter())?;
    write_f32s(&mut w, model.dec_bias.iter())?;
    w.flush()?;
    Ok(())
}

pub fn read_rqk1<R: Read>(reader: R) -> Result<RqkpModel> {
    let mut r = BufReader::new(reader);
    check_magic(&mut r, RQK_MAGIC)?;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let l = r.read_u32::<LittleEndian>()? as usize;
    let sizes = (0..l)
        .map(|_| r.read_u32::<LittleEndian>().map(|k| k as usize))
        .collect::<std::io::Result<Vec<_>>>()?;
    let beta = f64::from(r.read_f32::<LittleEndian>()?);
    let shape = |rows, v: Vec<f64>| Array2::from_shape_vec((rows, d), v).map_err(|e| GprError::Format(e.to_string()));
    let enc_weight = shape(d, read_f32s(&mut r, d * d)?)?;
    let enc_bias = Array1::from(read_f32s(&mut r, d)?);
    let levels = sizes
        .iter()
        .map(|&k| shape(k, read_f32s(&mut r, k * d)?))
        .collect::<Result<Vec<_>>>()?;
    let dec_weight = shape(d, read_f32s(&mut r, d * d)?)?;
    let dec_bias = Array1::from(read_f32s(&mut r, d)?);
    let model = RqkpModel {
        enc_weight,
        enc_bias,
        codebook: Codebook::new(levels)?,
        dec_weight,
        dec_bias,
        beta,
    };
    model.validate()?;
    Ok(model)
}

/// Loads a corpus by extension: `.csv` as CSV, anything else as `EMB1`.
pub fn load_corpus(path: &Path) -> Result<EmbeddingCorpus> {
    let f = File::open(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        read_corpus_csv(f)
    } else {
        read_emb1(f)
    }
}

pub fn save_corpus(corpus: &EmbeddingCorpus, path: &Path) -> Result<()> {
    let f = File::create(path)?;
    if path.extension().is_some_and(|e| e == "csv") {
        write_corpus_csv(corpus, f)
    } else {
        write_emb1(corpus, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::rqkp_init;
    use ndarray::array;

    fn corpus() -> EmbeddingCorpus {
        let ids = vec!["a".into(), "b".into(), "c".into()];
        EmbeddingCorpus::new(ids, array![[0.5, -1.0], [2.0, 0.25], [3.0, 4.0]]).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_corpus_csv(&corpus(), &mut buf).unwrap();
        let back = read_corpus_csv(buf.as_slice()).unwrap();
        assert_eq!(back.ids(), corpus().ids());
        assert_eq!(back.vectors(), corpus().vectors());
    }

    #[test]
    fn csv_rejects_bad_header() {
        let text = "id,v0\nx,1\n";
        assert!(matches!(read_corpus_csv(text.as_bytes()), Err(GprError::Format(_))));
    }

    #[test]
    fn emb1_round_trip_and_magic() {
        let mut buf = Vec::new();
        write_emb1(&corpus(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"EMB1");
        let back = read_emb1(buf.as_slice()).unwrap();
        assert_eq!(back.vectors(), corpus().vectors());
        buf[0] = b'X';
        assert!(read_emb1(buf.as_slice()).is_err());
    }

    #[test]
    fn rqk1_round_trip() {
        let m = rqkp_init(&corpus(), &[2, 1], 3).unwrap();
        let mut buf = Vec::new();
        write_rqk1(&m, &mut buf).unwrap();
        let back = read_rqk1(buf.as_slice()).unwrap();
        // values here are exactly representable in f32
        assert_eq!(back, m);
    }
}
