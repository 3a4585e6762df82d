//! Bundle container.
//!
//! ```text
//! magic "WSCNBNDL" | version u32 | total length u64
//! metadata: length u64 + JSON
//! arrays:   count u64 + little-endian f64 values, in order
//!           per model: alpha, beta, ecdf
//!           sigma_n lower triangle (column-major), cholesky lower triangle,
//!           u block
//! SHA-256 of everything above
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TrainedBundle, TrainingReport};
use crate::copula::{CopulaDiagnostics, CopulaModel, IndexMap};
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureSpec};
use crate::hetero::{EcdfTable, HeteroModel, ModelFlags};
use crate::timeseries::{FarmRegistry, HorizonGrid};

pub const BUNDLE_MAGIC: &[u8; 8] = b"WSCNBNDL";
pub const BUNDLE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 8 + 4 + 8;
const CHECKSUM_LEN: u64 = 32;
const CHUNK: usize = 8192;

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    layout: FeatureLayout,
    h_floor: f64,
    flags: ModelFlags,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    registry: FarmRegistry,
    grid: HorizonGrid,
    features: FeatureSpec,
    seed: u64,
    s_max: usize,
    index: IndexMap,
    copula: CopulaDiagnostics,
    models: Vec<ModelMeta>,
    report: TrainingReport,
}

fn pack_lower(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for j in 0..n {
        out.extend(a.column(j).iter().skip(j));
    }
    out
}

fn unpack_lower(v: &[f64], n: usize, symmetric: bool) -> Result<DMatrix<f64>> {
    if v.len() != n * (n + 1) / 2 {
        return Err(Error::BundleFormat(format!("triangle of {} values for dimension {n}", v.len())));
    }
    let mut a = DMatrix::zeros(n, n);
    let mut it = v.iter();
    for j in 0..n {
        for i in j..n {
            let x = *it.next().expect("length checked");
            a[(i, j)] = x;
            if symmetric {
                a[(j, i)] = x;
            }
        }
    }
    Ok(a)
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> HashingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        self.inner.write_all(bytes)?;
        Ok(())
    }

    fn put_array(&mut self, values: &[f64]) -> Result<()> {
        self.put(&(values.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(CHUNK * 8);
        for chunk in values.chunks(CHUNK) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            self.put(&buf)?;
        }
        Ok(())
    }
}

/// Write `bundle` to `path`.
pub fn save_bundle(bundle: &TrainedBundle, path: &Path) -> Result<()> {
    bundle.validate()?;
    let meta = Metadata {
        registry: bundle.registry.clone(),
        grid: bundle.grid,
        features: bundle.features.clone(),
        seed: bundle.seed,
        s_max: bundle.s_max,
        index: bundle.copula.index,
        copula: bundle.copula.diagnostics.clone(),
        models: bundle
            .models
            .iter()
            .map(|m| ModelMeta {
                layout: m.layout.clone(),
                h_floor: m.h_floor,
                flags: m.flags,
            })
            .collect(),
        report: bundle.report.clone(),
    };
    let meta = serde_json::to_vec(&meta)?;
    let sigma = pack_lower(&bundle.copula.sigma_n);
    let chol = pack_lower(&bundle.copula.chol);
    let array_bytes = |n: usize| 8 + 8 * n as u64;
    let mut total = HEADER_LEN + 8 + meta.len() as u64 + CHECKSUM_LEN;
    for m in &bundle.models {
        total += array_bytes(m.alpha.len()) + array_bytes(m.beta.len()) + array_bytes(m.ecdf.len());
    }
    total += array_bytes(sigma.len()) + array_bytes(chol.len()) + array_bytes(bundle.u_block.len());

    let mut out = HashingWriter {
        inner: BufWriter::new(File::create(path)?),
        hasher: Sha256::new(),
    };
    out.put(BUNDLE_MAGIC)?;
    out.put(&BUNDLE_VERSION.to_le_bytes())?;
    out.put(&total.to_le_bytes())?;
    out.put(&(meta.len() as u64).to_le_bytes())?;
    out.put(&meta)?;
    for m in &bundle.models {
        out.put_array(&m.alpha)?;
        out.put_array(&m.beta)?;
        out.put_array(m.ecdf.sorted())?;
    }
    out.put_array(&sigma)?;
    out.put_array(&chol)?;
    out.put_array(&bundle.u_block)?;
    let digest = out.hasher.finalize();
    out.inner.write_all(&digest)?;
    out.inner.flush()?;
    Ok(())
}

struct Cursor<R: Read> {
    inner: R,
    remaining: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: u64) -> Result<Vec<u8>> {
        if n > self.remaining {
            return Err(Error::BundleFormat("record runs past the payload".into()));
        }
        let mut buf = vec![0u8; n as usize];
        self.inner.read_exact(&mut buf)?;
        self.remaining -= n;
        Ok(buf)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.bytes(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn array(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        if n.checked_mul(8).is_none_or(|b| b > self.remaining) {
            return Err(Error::BundleFormat("array runs past the payload".into()));
        }
        let mut out = Vec::with_capacity(n as usize);
        let mut left = n as usize;
        while left > 0 {
            let c = left.min(CHUNK);
            let b = self.bytes(8 * c as u64)?;
            out.extend(b.chunks_exact(8).map(|x| f64::from_le_bytes(x.try_into().expect("8 bytes"))));
            left -= c;
        }
        Ok(out)
    }
}

/// Read a bundle written by [`save_bundle`]. The whole file is verified
/// against its checksum before any of it is decoded.
pub fn load_bundle(path: &Path) -> Result<TrainedBundle> {
    let mut file = File::open(path)?;
    let found = file.metadata()?.len();
    let mut header = [0u8; HEADER_LEN as usize];
    if found < HEADER_LEN {
        file.read_exact(&mut header[..found as usize])?;
        if header[..found as usize] != BUNDLE_MAGIC[..(found as usize).min(8)] {
            return Err(Error::BundleFormat("not a bundle file".into()));
        }
        return Err(Error::BundleTruncated { declared: HEADER_LEN, found });
    }
    file.read_exact(&mut header)?;
    if &header[..8] != BUNDLE_MAGIC {
        return Err(Error::BundleFormat("not a bundle file".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if version != BUNDLE_VERSION {
        return Err(Error::BundleVersion {
            found: version,
            expected: BUNDLE_VERSION,
        });
    }
    let declared = u64::from_le_bytes(header[12..20].try_into().expect("8 bytes"));
    if found < declared {
        return Err(Error::BundleTruncated { declared, found });
    }
    if found > declared || declared < HEADER_LEN + 8 + CHECKSUM_LEN {
        return Err(Error::BundleFormat(format!("declared length {declared}, file has {found} bytes")));
    }

    let payload_end = declared - CHECKSUM_LEN;
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::with_capacity(1 << 20, file);
    let mut hasher = Sha256::new();
    let mut left = payload_end;
    let mut buf = vec![0u8; 1 << 20];
    while left > 0 {
        let n = left.min(buf.len() as u64) as usize;
        reader.read_exact(&mut buf[..n])?;
        hasher.update(&buf[..n]);
        left -= n as u64;
    }
    let mut stored = [0u8; CHECKSUM_LEN as usize];
    reader.read_exact(&mut stored)?;
    if hasher.finalize().as_slice() != stored {
        return Err(Error::BundleChecksum);
    }

    let mut file = reader.into_inner();
    file.seek(SeekFrom::Start(HEADER_LEN))?;
    let mut cur = Cursor {
        inner: BufReader::with_capacity(1 << 20, file),
        remaining: payload_end - HEADER_LEN,
    };
    let meta_len = cur.u64()?;
    let meta: Metadata = serde_json::from_slice(&cur.bytes(meta_len)?)?;
    let mut models = Vec::with_capacity(meta.models.len());
    for m in meta.models {
        let alpha = cur.array()?;
        let beta = cur.array()?;
        let ecdf = EcdfTable::new(cur.array()?).map_err(|e| Error::BundleFormat(e.to_string()))?;
        models.push(HeteroModel {
            alpha,
            beta,
            ecdf,
            layout: m.layout,
            h_floor: m.h_floor,
            flags: m.flags,
        });
    }
    let d = meta.index.dim();
    let sigma_n = unpack_lower(&cur.array()?, d, true)?;
    let chol = unpack_lower(&cur.array()?, d, false)?;
    let u_block = cur.array()?;
    if cur.remaining != 0 {
        return Err(Error::BundleFormat(format!("{} unread payload bytes", cur.remaining)));
    }
    let bundle = TrainedBundle {
        registry: meta.registry,
        grid: meta.grid,
        features: meta.features,
        models,
        copula: CopulaModel {
            index: meta.index,
            sigma_n,
            chol,
            diagnostics: meta.copula,
        },
        s_max: meta.s_max,
        u_block,
        seed: meta.seed,
        report: meta.report,
    };
    bundle.validate()?;
    Ok(bundle)
}
