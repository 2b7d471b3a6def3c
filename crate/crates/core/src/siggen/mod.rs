//! Labeled IQ dataset synthesis over SISO and MIMO flat-fading channels.

mod channel;
mod dataset;
pub mod io;
mod modulate;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use channel::{apply_channel, draw_channel, measured_snr_db, Fading};
pub use dataset::{generate_dataset, generate_record, generate_records, GenerateConfig, Geometry, SnrSpec};
pub use modulate::{constellation, modulate, Family, ModulationParams};

/// The eleven modulation classes; the declaration order fixes class ids 0..=10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModulationScheme {
    Qam16,
    Ask2,
    Fsk2,
    Psk2,
    Qam32,
    Ask4,
    Fsk4,
    Psk4,
    Qam64,
    Fsk8,
    Psk8,
}

/// Number of modulation classes.
pub const NUM_CLASSES: usize = 11;

impl ModulationScheme {
    pub const ALL: [ModulationScheme; NUM_CLASSES] = [
        Self::Qam16,
        Self::Ask2,
        Self::Fsk2,
        Self::Psk2,
        Self::Qam32,
        Self::Ask4,
        Self::Fsk4,
        Self::Psk4,
        Self::Qam64,
        Self::Fsk8,
        Self::Psk8,
    ];

    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Qam16 => "16QAM",
            Self::Ask2 => "2ASK",
            Self::Fsk2 => "2FSK",
            Self::Psk2 => "2PSK",
            Self::Qam32 => "32QAM",
            Self::Ask4 => "4ASK",
            Self::Fsk4 => "4FSK",
            Self::Psk4 => "4PSK",
            Self::Qam64 => "64QAM",
            Self::Fsk8 => "8FSK",
            Self::Psk8 => "8PSK",
        }
    }

    pub fn order(self) -> usize {
        match self {
            Self::Ask2 | Self::Fsk2 | Self::Psk2 => 2,
            Self::Ask4 | Self::Fsk4 | Self::Psk4 => 4,
            Self::Fsk8 | Self::Psk8 => 8,
            Self::Qam16 => 16,
            Self::Qam32 => 32,
            Self::Qam64 => 64,
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        self.order().trailing_zeros() as usize
    }

    pub fn family(self) -> Family {
        match self {
            Self::Ask2 | Self::Ask4 => Family::Ask,
            Self::Psk2 | Self::Psk4 | Self::Psk8 => Family::Psk,
            Self::Fsk2 | Self::Fsk4 | Self::Fsk8 => Family::Fsk,
            Self::Qam16 | Self::Qam32 | Self::Qam64 => Family::Qam,
        }
    }
}

impl fmt::Display for ModulationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModulationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let wanted = s.trim().to_ascii_uppercase();
        Self::ALL
            .into_iter()
            .find(|m| m.name() == wanted)
            .ok_or_else(|| Error::Contract(format!("unknown modulation scheme `{s}`")))
    }
}

impl Serialize for ModulationScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ModulationScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One antenna stream: in-phase and quadrature sample sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct IqStream {
    pub i: Vec<f64>,
    pub q: Vec<f64>,
}

impl IqStream {
    pub fn from_complex(x: &[Complex64]) -> Self {
        Self {
            i: x.iter().map(|c| c.re).collect(),
            q: x.iter().map(|c| c.im).collect(),
        }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.i.iter().zip(&self.q).map(|(&i, &q)| Complex64::new(i, q)).collect()
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }
}

/// Channel geometry and conditions of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Row-major `n_rx x n_tx` gains; `None` when unknown (e.g. loaded data).
    pub h: Option<Vec<Complex64>>,
    pub snr_db: f64,
    pub fading: Fading,
}

impl ChannelSpec {
    pub fn is_siso(&self) -> bool {
        self.n_tx == 1 && self.n_rx == 1
    }
}

/// One sample: per-antenna IQ series, channel, and optional label.
///
/// `tx` is empty for blind records, where only the received streams are known.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub id: u64,
    pub tx: Vec<IqStream>,
    pub rx: Vec<IqStream>,
    pub channel: ChannelSpec,
    pub label: Option<ModulationScheme>,
}

impl SignalRecord {
    /// Samples per stream.
    pub fn len(&self) -> usize {
        self.rx.first().or(self.tx.first()).map_or(0, IqStream::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_blind(&self) -> bool {
        self.tx.is_empty()
    }

    pub fn snr_db(&self) -> f64 {
        self.channel.snr_db
    }

    /// `(streams, L, 2)` extents of the stacked IQ input.
    pub fn stacked_shape(&self) -> (usize, usize, usize) {
        (self.tx.len() + self.rx.len(), self.len(), 2)
    }

    pub fn unlabeled(&self) -> Self {
        Self {
            label: None,
            ..self.clone()
        }
    }
}
