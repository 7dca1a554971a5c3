//! On-disk formats: the binary model file, landscape grids (CSV and
//! binary), dataset CSVs and small key=value text files.
//!
//! Binary layouts are little-endian throughout.
//!
//! Model file:
//!
//! ```text
//! "SAEW"  u32 version=1  u32 flags  u64 d  u64 m  8 bytes hyper
//! flags: bit0 has_whitener, bit1 arch (0 relu, 1 topk), bit2 normalize_decoder
//! hyper: lambda as f64 (relu) or k as u64 (topk)
//! [if has_whitener] mu[d] W[d*d] W^-1[d*d] eigenvalues[d] eps
//! W_e[m*d] b_e[m] W_d[d*m] b_d[d]                 (f64, row-major)
//! ```
//!
//! Whitener file:
//!
//! ```text
//! "WHTN"  u32 version=1  u64 d  mu[d] W[d*d] W^-1[d*d] eigenvalues[d] eps
//! ```
//!
//! Grid file:
//!
//! ```text
//! "LGRD"  u32 version=1  u32 resolution  u8 metric (0 sparsity, 1 recovery)
//! u8 data (0 raw, 1 whitened)  f64 values[res*res]  u8 mask[res*res]
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::landscape::{DataTag, LandscapeGrid, MetricTag};
use crate::metrics::fmt_real;
use crate::numkit::Matrix;
use crate::pipeline::{Mode, WhitenedSae};
use crate::sae::{Arch, LossParts, SaeParams};
use crate::synthgen::SynthDataset;
use crate::whitening::Whitener;

pub const MODEL_MAGIC: [u8; 4] = *b"SAEW";
pub const MODEL_VERSION: u32 = 1;
pub const WHITENER_MAGIC: [u8; 4] = *b"WHTN";
pub const WHITENER_VERSION: u32 = 1;
pub const GRID_MAGIC: [u8; 4] = *b"LGRD";
pub const GRID_VERSION: u32 = 1;

const FLAG_WHITENER: u32 = 1;
const FLAG_TOPK: u32 = 1 << 1;
const FLAG_NORMALIZE: u32 = 1 << 2;

/// A model together with the training flag the file records.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: WhitenedSae,
    pub normalize_decoder: bool,
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

fn put_whitener(out: &mut Vec<u8>, w: &Whitener) {
    put_f64s(out, w.mean());
    put_f64s(out, w.whiten_matrix().as_slice());
    put_f64s(out, w.dewhiten_matrix().as_slice());
    put_f64s(out, w.eigenvalues());
    put_f64s(out, &[w.epsilon()]);
}

fn read_whitener(r: &mut Reader, d: usize) -> Result<Whitener> {
    let mean = r.f64s(d)?;
    let w = r.matrix(d, d)?;
    let wi = r.matrix(d, d)?;
    let eig = r.f64s(d)?;
    let eps = r.f64()?;
    Whitener::from_parts(mean, w, wi, eig, eps)
}

pub fn whitener_to_bytes(w: &Whitener) -> Vec<u8> {
    let d = w.dim();
    let mut out = Vec::with_capacity(16 + 8 * (2 * d * d + 2 * d + 1));
    out.extend_from_slice(&WHITENER_MAGIC);
    out.extend_from_slice(&WHITENER_VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    put_whitener(&mut out, w);
    out
}

pub fn whitener_from_bytes(bytes: &[u8]) -> Result<Whitener> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, WHITENER_MAGIC, WHITENER_VERSION)?;
    let d = dim(r.u64()?, "d")?;
    let w = read_whitener(&mut r, d)?;
    r.finish()?;
    Ok(w)
}

pub fn save_whitener(path: &Path, w: &Whitener) -> Result<()> {
    fs::write(path, whitener_to_bytes(w)).map_err(|e| Error::io(path, e))
}

pub fn load_whitener(path: &Path) -> Result<Whitener> {
    whitener_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn model_to_bytes(file: &ModelFile) -> Vec<u8> {
    let p = &file.model.sae;
    let (m, d) = p.enc_weights.shape();
    let whitener = file.model.whitener();
    let mut flags = 0;
    if whitener.is_some() {
        flags |= FLAG_WHITENER;
    }
    if matches!(p.arch, Arch::TopK { .. }) {
        flags |= FLAG_TOPK;
    }
    if file.normalize_decoder {
        flags |= FLAG_NORMALIZE;
    }
    let mut out = Vec::with_capacity(36 + 8 * (p.num_params() + 2 * d * d + 2 * d + 1));
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(m as u64).to_le_bytes());
    match p.arch {
        Arch::Relu { lambda } => out.extend_from_slice(&lambda.to_le_bytes()),
        Arch::TopK { k } => out.extend_from_slice(&(k as u64).to_le_bytes()),
    }
    if let Some(w) = whitener {
        put_whitener(&mut out, w);
    }
    put_f64s(&mut out, p.enc_weights.as_slice());
    put_f64s(&mut out, &p.enc_bias);
    put_f64s(&mut out, p.dec_weights.as_slice());
    put_f64s(&mut out, &p.dec_bias);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Malformed(format!(
                    "truncated: needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Malformed("array length overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        Matrix::from_vec(rows, cols, self.f64s(rows * cols)?)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Malformed(format!(
                "{} trailing bytes after offset {}",
                self.bytes.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

fn check_header(r: &mut Reader, magic: [u8; 4], version: u32) -> Result<()> {
    let found = r.array::<4>()?;
    if found != magic {
        return Err(Error::BadMagic { expected: magic, found });
    }
    let v = r.u32()?;
    if v != version {
        return Err(Error::UnsupportedVersion(v));
    }
    Ok(())
}

fn dim(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v)
        .ok()
        .filter(|&n| n > 0 && n <= 1 << 20)
        .ok_or_else(|| Error::Malformed(format!("implausible {what} = {v}")))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<ModelFile> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, MODEL_MAGIC, MODEL_VERSION)?;
    let flags = r.u32()?;
    if flags & !(FLAG_WHITENER | FLAG_TOPK | FLAG_NORMALIZE) != 0 {
        return Err(Error::Malformed(format!("unknown flag bits {flags:#x}")));
    }
    let d = dim(r.u64()?, "d")?;
    let m = dim(r.u64()?, "m")?;
    let hyper = r.array::<8>()?;
    let arch = if flags & FLAG_TOPK != 0 {
        Arch::TopK {
            k: dim(u64::from_le_bytes(hyper), "k")?,
        }
    } else {
        Arch::Relu {
            lambda: f64::from_le_bytes(hyper),
        }
    };
    let mode = if flags & FLAG_WHITENER != 0 {
        Mode::Whitened(read_whitener(&mut r, d)?)
    } else {
        Mode::Passthrough
    };
    let enc_weights = r.matrix(m, d)?;
    let enc_bias = r.f64s(m)?;
    let dec_weights = r.matrix(d, m)?;
    let dec_bias = r.f64s(d)?;
    r.finish()?;
    let sae = SaeParams::new(enc_weights, enc_bias, dec_weights, dec_bias, arch)?;
    if !sae.is_finite() {
        return Err(Error::NonFinite("model file parameters"));
    }
    Ok(ModelFile {
        model: WhitenedSae::new(sae, mode)?,
        normalize_decoder: flags & FLAG_NORMALIZE != 0,
    })
}

pub fn save_model(path: &Path, file: &ModelFile) -> Result<()> {
    fs::write(path, model_to_bytes(file)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    model_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn grid_to_bytes(g: &LandscapeGrid) -> Vec<u8> {
    let cells = g.resolution * g.resolution;
    let mut out = Vec::with_capacity(18 + 9 * cells);
    out.extend_from_slice(&GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.extend_from_slice(&(g.resolution as u32).to_le_bytes());
    out.push(g.metric.code());
    out.push(g.data.code());
    for (&v, &m) in g.values.iter().zip(&g.mask) {
        let v = if m { f64::NAN } else { v };
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(g.mask.iter().map(|&m| u8::from(m)));
    out
}

pub fn grid_from_bytes(bytes: &[u8]) -> Result<LandscapeGrid> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, GRID_MAGIC, GRID_VERSION)?;
    let res = r.u32()? as usize;
    if res == 0 || res > 1 << 14 {
        return Err(Error::Malformed(format!("implausible resolution {res}")));
    }
    let metric = MetricTag::from_code(r.u8()?).ok_or_else(|| Error::Malformed("unknown metric tag".into()))?;
    let data = DataTag::from_code(r.u8()?).ok_or_else(|| Error::Malformed("unknown data tag".into()))?;
    let values = r.f64s(res * res)?;
    let mask = r
        .take(res * res)?
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Malformed(format!("mask byte {other}"))),
        })
        .collect::<Result<Vec<bool>>>()?;
    r.finish()?;
    LandscapeGrid::new(res, values, mask, metric, data)
}

/// First line `resolution,metric,data`; then one line of comma-separated
/// values per `theta0` index, `nan` in masked cells.
pub fn grid_to_csv(g: &LandscapeGrid) -> String {
    let mut out = format!("{},{},{}\n", g.resolution, g.metric.name(), g.data.name());
    for i in 0..g.resolution {
        let row: Vec<String> = (0..g.resolution)
            .map(|j| match g.get(i, j) {
                Some(v) => fmt_real(v),
                None => "nan".into(),
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn grid_from_csv(text: &str) -> Result<LandscapeGrid> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Malformed("empty grid CSV".into()))?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    let [res, metric, data] = parts[..] else {
        return Err(Error::Malformed(format!("grid CSV header {header:?}")));
    };
    let res: usize = res
        .parse()
        .map_err(|_| Error::Malformed(format!("grid resolution {res:?}")))?;
    let metric = MetricTag::from_name(metric).ok_or_else(|| Error::Malformed(format!("metric {metric:?}")))?;
    let data = DataTag::from_name(data).ok_or_else(|| Error::Malformed(format!("data tag {data:?}")))?;
    let mut values = Vec::with_capacity(res * res);
    let mut mask = Vec::with_capacity(res * res);
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != res || i >= res {
            return Err(Error::Malformed(format!("grid CSV row {i} has {} cells", cells.len())));
        }
        for c in cells {
            if c.trim() == "nan" {
                values.push(f64::NAN);
                mask.push(true);
            } else {
                values.push(parse_real(c)?);
                mask.push(false);
            }
        }
    }
    LandscapeGrid::new(res, values, mask, metric, data)
}

pub fn parse_real(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Malformed(format!("not a number: {s:?}")))
}

/// Matrix as CSV with a header of `prefix0,prefix1,...`.
pub fn matrix_to_csv(m: &Matrix, prefix: &str) -> String {
    let mut out = (0..m.cols())
        .map(|j| format!("{prefix}{j}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in m.row_iter() {
        out.push_str(&row.iter().map(|&v| fmt_real(v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Matrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let cols = lines
        .next()
        .ok_or_else(|| Error::Malformed("empty CSV".into()))?
        .split(',')
        .count();
    let mut data = Vec::new();
    let mut rows = 0;
    for line in lines {
        let before = data.len();
        for c in line.split(',') {
            data.push(parse_real(c)?);
        }
        if data.len() - before != cols {
            return Err(Error::Malformed(format!(
                "CSV row {rows} has {} fields, expected {cols}",
                data.len() - before
            )));
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols, data)
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn format_key_values(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

pub const OBSERVATIONS_CSV: &str = "observations.csv";
pub const SOURCES_CSV: &str = "sources.csv";
pub const DICTIONARY_CSV: &str = "dictionary.csv";
pub const LABELS_CSV: &str = "labels.csv";
pub const MANIFEST: &str = "manifest.txt";

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes the dataset CSVs and a manifest holding `manifest` plus the seed and shapes.
pub fn write_dataset(dir: &Path, data: &SynthDataset, manifest: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(OBSERVATIONS_CSV), &matrix_to_csv(&data.observations, "y"))?;
    write_text(&dir.join(SOURCES_CSV), &matrix_to_csv(&data.sources, "z"))?;
    write_text(&dir.join(DICTIONARY_CSV), &matrix_to_csv(&data.dictionary, "a"))?;
    if let Some(labels) = &data.labels {
        let mut text = String::from("label\n");
        for l in labels {
            let _ = writeln!(text, "{l}");
        }
        write_text(&dir.join(LABELS_CSV), &text)?;
    }
    let mut entries = manifest.to_vec();
    let shape = [
        ("seed", data.seed.to_string()),
        ("rows", data.len().to_string()),
        ("dim", data.dim().to_string()),
        ("sources", data.num_sources().to_string()),
        ("labeled", data.labels.is_some().to_string()),
    ];
    for (k, v) in shape {
        if !entries.iter().any(|(e, _)| e == k) {
            entries.push((k.into(), v));
        }
    }
    write_text(&dir.join(MANIFEST), &format_key_values(&entries))
}

pub fn read_dataset(dir: &Path) -> Result<SynthDataset> {
    let observations = matrix_from_csv(&read_text(&dir.join(OBSERVATIONS_CSV))?)?;
    let sources = matrix_from_csv(&read_text(&dir.join(SOURCES_CSV))?)?;
    let dictionary = matrix_from_csv(&read_text(&dir.join(DICTIONARY_CSV))?)?;
    let labels_path = dir.join(LABELS_CSV);
    let labels = if labels_path.exists() {
        let text = read_text(&labels_path)?;
        let labels = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| match l.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Malformed(format!("label {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Some(labels)
    } else {
        None
    };
    let manifest = parse_key_values(&read_text(&dir.join(MANIFEST))?)?;
    let seed = manifest
        .iter()
        .find(|(k, _)| k == "seed")
        .map(|(_, v)| v.parse::<u64>())
        .transpose()
        .map_err(|_| Error::Malformed("manifest seed".into()))?
        .unwrap_or(0);
    let n = observations.rows();
    if sources.rows() != n
        || sources.cols() != dictionary.rows()
        || dictionary.cols() != observations.cols()
        || labels.as_ref().is_some_and(|l| l.len() != n)
    {
        return Err(Error::Malformed(format!(
            "inconsistent dataset in {}: observations {n}x{}, sources {}x{}, dictionary {}x{}",
            dir.display(),
            observations.cols(),
            sources.rows(),
            sources.cols(),
            dictionary.rows(),
            dictionary.cols()
        )));
    }
    Ok(SynthDataset {
        observations,
        sources,
        dictionary,
        labels,
        seed,
    })
}

pub fn loss_trace_csv(trace: &[LossParts]) -> String {
    let mut out = String::from("step,total,recon,sparsity\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{}",
            fmt_real(l.total),
            fmt_real(l.recon),
            fmt_real(l.sparsity)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::SeededRng;
    use crate::sae::init_params;

    fn whitened_model(seed: u64) -> ModelFile {
        let mut rng = SeededRng::new(seed);
        let x = Matrix::from_vec(50, 3, (0..150).map(|_| rng.normal()).collect()).unwrap();
        let w = Whitener::fit(&x, 1e-8).unwrap();
        let p = init_params(3, 5, Arch::TopK { k: 2 }, seed).unwrap();
        ModelFile {
            model: WhitenedSae::new(p, Mode::Whitened(w)).unwrap(),
            normalize_decoder: false,
        }
    }

    #[test]
    fn model_round_trip() {
        let f = whitened_model(1);
        let bytes = model_to_bytes(&f);
        assert_eq!(model_from_bytes(&bytes).unwrap(), f);
        let raw = ModelFile {
            model: WhitenedSae::passthrough(init_params(4, 6, Arch::Relu { lambda: 0.25 }, 2).unwrap()),
            normalize_decoder: true,
        };
        assert_eq!(model_from_bytes(&model_to_bytes(&raw)).unwrap(), raw);
    }

    #[test]
    fn whitener_round_trip() {
        let f = whitened_model(5);
        let w = f.model.whitener().unwrap();
        let bytes = whitener_to_bytes(w);
        assert_eq!(&whitener_from_bytes(&bytes).unwrap(), w);
        assert!(matches!(model_from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn model_header_errors_are_distinct() {
        let mut bytes = model_to_bytes(&whitened_model(2));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(model_from_bytes(&bad), Err(Error::BadMagic { .. })));
        bytes[4] = 2;
        assert!(matches!(model_from_bytes(&bytes), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn model_truncation_and_trailing_bytes() {
        let bytes = model_to_bytes(&whitened_model(3));
        assert!(matches!(
            model_from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Malformed(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(model_from_bytes(&long), Err(Error::Malformed(_))));
    }

    #[test]
    fn header_layout() {
        let bytes = model_to_bytes(&whitened_model(4));
        assert_eq!(&bytes[0..4], b"SAEW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 0b011);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[28..36].try_into().unwrap()), 2);
        // header + whitener (3 + 9 + 9 + 3 + 1) + sae (15 + 5 + 15 + 3)
        assert_eq!(bytes.len(), 36 + 8 * (25 + 38));
    }

    fn small_grid() -> LandscapeGrid {
        let mut mask = vec![false; 256];
        mask[0] = true;
        mask[17] = true;
        let values = (0..256).map(|i| (i as f64).sqrt() / 3.0).collect();
        LandscapeGrid::new(16, values, mask, MetricTag::Recovery, DataTag::Whitened).unwrap()
    }

    #[test]
    fn grid_round_trips() {
        let g = small_grid();
        assert!(grid_from_bytes(&grid_to_bytes(&g)).unwrap().bit_eq(&g));
        let csv = grid_to_csv(&g);
        assert!(csv.starts_with("16,recovery,whitened\nnan,"));
        assert!(grid_from_csv(&csv).unwrap().bit_eq(&g));
    }

    #[test]
    fn grid_errors() {
        let bytes = grid_to_bytes(&small_grid());
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(grid_from_bytes(&bad), Err(Error::BadMagic { .. })));
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(grid_from_bytes(&v), Err(Error::UnsupportedVersion(9))));
        assert!(grid_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(grid_from_csv("16,recovery\n").is_err());
    }

    #[test]
    fn matrix_csv_round_trip_is_exact() {
        let mut rng = SeededRng::new(9);
        let m = Matrix::from_vec(7, 3, (0..21).map(|_| rng.normal() * 1e-7).collect()).unwrap();
        assert_eq!(matrix_from_csv(&matrix_to_csv(&m, "c")).unwrap(), m);
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# note\na = 1\n\nb=x=y\n").unwrap();
        assert_eq!(kv, vec![("a".into(), "1".into()), ("b".into(), "x=y".into())]);
        assert!(parse_key_values("novalue\n").is_err());
    }
}
