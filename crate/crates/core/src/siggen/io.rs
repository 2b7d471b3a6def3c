//! On-disk dataset formats.
//!
//! **SISO CSV** (no header): one row per record,
//! `id, I_1..I_L, Q_1..Q_L, label`, where the streams are the received
//! samples and `label` is the class id or `-1` when unlabeled. Transmit
//! streams are not stored, so records read back from this format are blind.
//!
//! **Container**: a first line `#ntx=<N_T>,nrx=<N_R>,L=<L>`, then one row per
//! antenna stream, `id, role, index, I_1..I_L, Q_1..Q_L, label`, with `role`
//! `T` (transmit) or `R` (receive). A record's rows are contiguous, transmit
//! rows first, each group in index order. A record with no `T` rows is blind.
//!
//! Both formats get a sidecar `<stem>.meta.csv` with header
//! `id,snr_db,ntx,nrx` carrying per-record SNR. Floats are written in Rust's
//! shortest round-trip form, so write/read is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ChannelSpec, Fading, IqStream, ModulationScheme, SignalRecord};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SisoFormat {
    /// Receive stream only, one row per record.
    #[default]
    Csv,
    /// The container format, keeping transmit streams.
    Container,
}

/// `<dir>/<stem>.meta.csv` for `<dir>/<stem>.csv`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.csv"))
}

fn label_field(label: Option<ModulationScheme>) -> String {
    label.map_or_else(|| "-1".to_string(), |l| l.class_id().to_string())
}

fn parse_label(s: &str, line: usize) -> Result<Option<ModulationScheme>> {
    let v: i64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad label `{s}`")))?;
    if v == -1 {
        return Ok(None);
    }
    usize::try_from(v)
        .ok()
        .and_then(ModulationScheme::from_class_id)
        .map(Some)
        .ok_or_else(|| Error::Parse(format!("line {line}: label {v} out of range")))
}

fn parse_f64s(fields: &[&str], line: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line}: bad number `{f}`")))
        })
        .collect()
}

fn parse_id(s: &str, line: usize) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad id `{s}`")))
}

fn write_stream(w: &mut impl Write, s: &IqStream) -> Result<()> {
    for v in s.i.iter().chain(&s.q) {
        write!(w, ",{v}")?;
    }
    Ok(())
}

fn write_meta(path: &Path, records: &[&SignalRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(meta_path(path))?);
    writeln!(w, "id,snr_db,ntx,nrx")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.id, r.channel.snr_db, r.channel.n_tx, r.channel.n_rx)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-record SNR from the sidecar; empty when the sidecar is absent.
fn read_meta(path: &Path) -> Result<HashMap<u64, f64>> {
    let mp = meta_path(path);
    if !mp.exists() {
        return Ok(HashMap::new());
    }
    let mut out = HashMap::new();
    for (n, line) in BufReader::new(File::open(mp)?).lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 4, Error::Parse(format!("meta line {}: expected 4 fields", n + 1)));
        let snr = parse_f64s(&f[1..2], n + 1)?[0];
        out.insert(parse_id(f[0], n + 1)?, snr);
    }
    Ok(out)
}

/// Writes SISO records as one CSV row each (receive stream only).
pub fn write_siso_csv(path: &Path, records: &[&SignalRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        ensure!(
            r.channel.is_siso() && r.rx.len() == 1,
            Error::Contract(format!("record {} is not SISO", r.id))
        );
        write!(w, "{}", r.id)?;
        write_stream(&mut w, &r.rx[0])?;
        writeln!(w, ",{}", label_field(r.label))?;
    }
    w.flush()?;
    write_meta(path, records)
}

fn blind_channel(n_tx: usize, n_rx: usize, snr_db: f64) -> ChannelSpec {
    ChannelSpec {
        n_tx,
        n_rx,
        h: None,
        snr_db,
        fading: Fading::Rayleigh,
    }
}

/// Reads a SISO CSV. Records are blind; SNR comes from the sidecar, or NaN
/// when there is none.
pub fn read_siso_csv(path: &Path) -> Result<Vec<SignalRecord>> {
    let meta = read_meta(path)?;
    let mut out = Vec::new();
    let mut width = None;
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(
            f.len() >= 4 && f.len() % 2 == 0,
            Error::Parse(format!("line {}: {} fields", n + 1, f.len()))
        );
        ensure!(
            *width.get_or_insert(f.len()) == f.len(),
            Error::Parse(format!("line {}: row width changed", n + 1))
        );
        let l = (f.len() - 2) / 2;
        let id = parse_id(f[0], n + 1)?;
        let vals = parse_f64s(&f[1..1 + 2 * l], n + 1)?;
        let snr = meta.get(&id).copied().unwrap_or(f64::NAN);
        out.push(SignalRecord {
            id,
            tx: Vec::new(),
            rx: vec![IqStream {
                i: vals[..l].to_vec(),
                q: vals[l..].to_vec(),
            }],
            channel: blind_channel(1, 1, snr),
            label: parse_label(f[f.len() - 1], n + 1)?,
        });
    }
    Ok(out)
}

/// Writes records of one geometry in the container format.
pub fn write_container(path: &Path, records: &[&SignalRecord]) -> Result<()> {
    let (n_tx, n_rx, len) = records
        .first()
        .map_or((1, 1, 0), |r| (r.channel.n_tx, r.channel.n_rx, r.len()));
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "#ntx={n_tx},nrx={n_rx},L={len}")?;
    for r in records {
        ensure!(
            r.channel.n_tx == n_tx && r.channel.n_rx == n_rx && r.len() == len,
            Error::Contract(format!("record {} does not match the container geometry", r.id))
        );
        ensure!(
            r.rx.len() == n_rx && (r.tx.is_empty() || r.tx.len() == n_tx),
            Error::Contract(format!("record {} has the wrong stream count", r.id))
        );
        let label = label_field(r.label);
        for (role, streams) in [("T", &r.tx), ("R", &r.rx)] {
            for (k, s) in streams.iter().enumerate() {
                write!(w, "{},{role},{k}", r.id)?;
                write_stream(&mut w, s)?;
                writeln!(w, ",{label}")?;
            }
        }
    }
    w.flush()?;
    write_meta(path, records)
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("container header must start with `#`".into()))?;
    let mut vals = HashMap::new();
    for part in body.trim().split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field `{part}`")))?;
        let v: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad header value `{part}`")))?;
        vals.insert(k.trim().to_string(), v);
    }
    let get = |k: &str| vals.get(k).copied().ok_or_else(|| Error::Parse(format!("header lacks `{k}`")));
    Ok((get("ntx")?, get("nrx")?, get("L")?))
}

/// Reads a container file.
pub fn read_container(path: &Path) -> Result<Vec<SignalRecord>> {
    let meta = read_meta(path)?;
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty container".into()))??;
    let (n_tx, n_rx, len) = parse_header(&header)?;

    let mut out: Vec<SignalRecord> = Vec::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        ensure!(
            f.len() == 4 + 2 * len,
            Error::Parse(format!("line {lineno}: expected {} fields, got {}", 4 + 2 * len, f.len()))
        );
        let id = parse_id(f[0], lineno)?;
        let index: usize = f[2]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {lineno}: bad antenna index")))?;
        let vals = parse_f64s(&f[3..3 + 2 * len], lineno)?;
        let stream = IqStream {
            i: vals[..len].to_vec(),
            q: vals[len..].to_vec(),
        };
        let label = parse_label(f[f.len() - 1], lineno)?;
        if out.last().map_or(true, |r| r.id != id) {
            let snr = meta.get(&id).copied().unwrap_or(f64::NAN);
            out.push(SignalRecord {
                id,
                tx: Vec::new(),
                rx: Vec::new(),
                channel: blind_channel(n_tx, n_rx, snr),
                label,
            });
        }
        let rec = out.last_mut().expect("pushed above");
        ensure!(rec.label == label, Error::Parse(format!("line {lineno}: label differs within record {id}")));
        let (group, limit) = match f[1].trim() {
            "T" => (&mut rec.tx, n_tx),
            "R" => (&mut rec.rx, n_rx),
            other => return Err(Error::Parse(format!("line {lineno}: unknown role `{other}`"))),
        };
        ensure!(
            index == group.len() && index < limit,
            Error::Parse(format!("line {lineno}: antenna index {index} out of order"))
        );
        group.push(stream);
    }
    for r in &out {
        ensure!(
            r.rx.len() == n_rx && (r.tx.is_empty() || r.tx.len() == n_tx),
            Error::Parse(format!("record {} has incomplete streams", r.id))
        );
    }
    Ok(out)
}

/// Reads either format, telling them apart by the container header.
pub fn read_records(path: &Path) -> Result<Vec<SignalRecord>> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    if first.starts_with('#') {
        read_container(path)
    } else {
        read_siso_csv(path)
    }
}

/// Reads every data file in `dir` (sidecars excluded), sorted by file name.
pub fn read_dir(dir: &Path) -> Result<Vec<SignalRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && !p.to_string_lossy().ends_with(".meta.csv")
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        out.extend(read_records(&p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siggen::{generate_records, GenerateConfig, Geometry, SnrSpec};

    fn records(g: Geometry) -> Vec<SignalRecord> {
        let cfg = GenerateConfig {
            schemes: vec![ModulationScheme::Qam16, ModulationScheme::Fsk2],
            samples_per_cell: 2,
            snr: SnrSpec::Uniform { min: -5.0, max: 5.0 },
            geometries: vec![g],
            length: 32,
            ..Default::default()
        };
        generate_records(&cfg, 3).unwrap()
    }

    #[test]
    fn siso_csv_round_trip_drops_tx() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("siso.csv");
        let mut recs = records(Geometry::SISO);
        recs[1].label = None;
        write_siso_csv(&path, &recs.iter().collect::<Vec<_>>()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap().split(',').count(), 2 + 64);
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.rx, b.rx);
            assert_eq!(a.label, b.label);
            assert_eq!(a.snr_db(), b.snr_db());
            assert!(b.is_blind());
        }
    }

    #[test]
    fn container_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mimo_4x2.csv");
        let recs = records(Geometry { n_tx: 4, n_rx: 2 });
        write_container(&path, &recs.iter().collect::<Vec<_>>()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "#ntx=4,nrx=2,L=32");
        assert_eq!(text.lines().count(), 1 + recs.len() * 6);
        let back = read_dir(dir.path()).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.tx, b.tx);
            assert_eq!(a.rx, b.rx);
            assert_eq!(a.label, b.label);
            assert_eq!(a.snr_db(), b.snr_db());
            assert_eq!((b.channel.n_tx, b.channel.n_rx), (4, 2));
        }
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "0,1,2,x,4,0\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Parse(_))));
        std::fs::write(&path, "0,1,2,3,4,11\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Parse(_))));
        std::fs::write(&path, "#ntx=1,nrx=1,L=1\n0,X,0,1,2,0\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Parse(_))));
    }
}
