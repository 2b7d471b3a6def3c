use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{self, SisoFormat};
use super::{apply_channel, draw_channel, modulate, ChannelSpec, Fading, IqStream, ModulationParams, ModulationScheme, SignalRecord};
use crate::error::{ensure, Error, Result};

/// Antenna counts of one signal system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    pub n_tx: usize,
    pub n_rx: usize,
}

impl Geometry {
    pub const SISO: Geometry = Geometry { n_tx: 1, n_rx: 1 };

    pub fn is_siso(self) -> bool {
        self == Self::SISO
    }
}

/// How per-sample SNRs are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrSpec {
    /// `samples_per_cell` records at every listed SNR (dB).
    Grid(Vec<f64>),
    /// `samples_per_cell` records with SNR drawn uniformly from `[min, max]`.
    Uniform { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub schemes: Vec<ModulationScheme>,
    pub samples_per_cell: usize,
    pub snr: SnrSpec,
    pub geometries: Vec<Geometry>,
    pub length: usize,
    pub modulation: ModulationParams,
    pub fading: Fading,
    pub siso_format: SisoFormat,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            schemes: ModulationScheme::ALL.to_vec(),
            samples_per_cell: 10,
            snr: SnrSpec::Grid((-20..=20).step_by(2).map(f64::from).collect()),
            geometries: vec![Geometry::SISO],
            length: 1024,
            modulation: ModulationParams::default(),
            fading: Fading::Rayleigh,
            siso_format: SisoFormat::Csv,
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(!self.schemes.is_empty(), Error::Config("no modulation schemes".into()));
        ensure!(self.samples_per_cell > 0, Error::Config("samples_per_cell must be positive".into()));
        ensure!(!self.geometries.is_empty(), Error::Config("no geometries".into()));
        ensure!(
            self.geometries.iter().all(|g| g.n_tx > 0 && g.n_rx > 0),
            Error::Config("antenna counts must be positive".into())
        );
        ensure!(self.length >= 2, Error::Config("length must be at least 2".into()));
        ensure!(
            self.modulation.sps > 0 && self.length % self.modulation.sps == 0,
            Error::Length(format!(
                "length {} is not divisible by {} samples per symbol",
                self.length, self.modulation.sps
            ))
        );
        match &self.snr {
            SnrSpec::Grid(g) => ensure!(!g.is_empty(), Error::Config("empty SNR grid".into())),
            SnrSpec::Uniform { min, max } => {
                ensure!(min <= max, Error::Config("SNR range is reversed".into()))
            }
        }
        Ok(())
    }

    /// Planned `(geometry, scheme, fixed snr)` of every record, by id.
    fn plan(&self) -> Vec<(Geometry, ModulationScheme, Option<f64>)> {
        let snrs: Vec<Option<f64>> = match &self.snr {
            SnrSpec::Grid(g) => g.iter().copied().map(Some).collect(),
            SnrSpec::Uniform { .. } => vec![None],
        };
        let mut out = Vec::new();
        for &g in &self.geometries {
            for &s in &self.schemes {
                for &snr in &snrs {
                    out.extend(std::iter::repeat((g, s, snr)).take(self.samples_per_cell));
                }
            }
        }
        out
    }
}

/// Random stream owned by record `id`; independent of generation order.
fn record_rng(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generates one labeled record from its own `(seed, id)` random stream.
pub fn generate_record(
    id: u64,
    scheme: ModulationScheme,
    geometry: Geometry,
    snr_db: Option<f64>,
    config: &GenerateConfig,
    seed: u64,
) -> Result<SignalRecord> {
    let mut rng = record_rng(seed, id);
    let snr_db = match (snr_db, &config.snr) {
        (Some(s), _) => s,
        (None, SnrSpec::Uniform { min, max }) if min < max => rng.gen_range(*min..*max),
        (None, SnrSpec::Uniform { min, .. }) => *min,
        (None, SnrSpec::Grid(_)) => return Err(Error::Contract("grid records need an SNR".into())),
    };
    let h = draw_channel(geometry.n_tx, geometry.n_rx, config.fading, &mut rng);
    let n_bits = config.length / config.modulation.sps * scheme.bits_per_symbol();
    let tx: Vec<_> = (0..geometry.n_tx)
        .map(|_| {
            let bits: Vec<u8> = (0..n_bits).map(|_| rng.gen_range(0..2u8)).collect();
            modulate(&bits, scheme, &config.modulation, config.length)
        })
        .collect::<Result<_>>()?;
    let channel = ChannelSpec {
        n_tx: geometry.n_tx,
        n_rx: geometry.n_rx,
        h: Some(h),
        snr_db,
        fading: config.fading,
    };
    let rx = apply_channel(&tx, &channel, &mut rng)?;
    Ok(SignalRecord {
        id,
        tx: tx.iter().map(|s| IqStream::from_complex(s)).collect(),
        rx: rx.iter().map(|s| IqStream::from_complex(s)).collect(),
        channel,
        label: Some(scheme),
    })
}

/// Generates every planned record and returns them in shuffled order.
pub fn generate_records(config: &GenerateConfig, seed: u64) -> Result<Vec<SignalRecord>> {
    config.validate()?;
    let plan = config.plan();
    let mut records = plan
        .par_iter()
        .enumerate()
        .map(|(id, &(g, s, snr))| generate_record(id as u64, s, g, snr, config, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = record_rng(seed, u64::MAX);
    records.shuffle(&mut rng);
    Ok(records)
}

/// Generates a dataset and writes one file (plus metadata sidecar) per
/// geometry into `out_dir`. Returns the data file paths.
pub fn generate_dataset(config: &GenerateConfig, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let records = generate_records(config, seed)?;
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for &g in &config.geometries {
        let group: Vec<&SignalRecord> = records
            .iter()
            .filter(|r| r.channel.n_tx == g.n_tx && r.channel.n_rx == g.n_rx)
            .collect();
        let path = if g.is_siso() {
            out_dir.join("siso.csv")
        } else {
            out_dir.join(format!("mimo_{}x{}.csv", g.n_tx, g.n_rx))
        };
        if g.is_siso() && config.siso_format == SisoFormat::Csv {
            io::write_siso_csv(&path, &group)?;
        } else {
            io::write_container(&path, &group)?;
        }
        paths.push(path);
    }
    Ok(paths)
}
