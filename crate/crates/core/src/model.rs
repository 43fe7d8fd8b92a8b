//! The system instance: sources feeding one edge server that forwards
//! processed updates to one fog node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelParams, PacketSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("system needs at least one source")]
    NoSources,
    #[error("invalid {field} = {value}: {reason}")]
    InvalidParam {
        field: String,
        value: f64,
        reason: &'static str,
    },
    #[error("source index {index} out of range for {count} sources")]
    SourceIndex { index: usize, count: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    /// Poisson update rate in packets per second.
    pub arrival_rate: f64,
    pub packet_bits: f64,
    pub uplink: ChannelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub sources: Vec<Source>,
    /// Edge service rate in packets per second.
    pub edge_rate: f64,
    /// Fog service rate in packets per second.
    pub fog_rate: f64,
    pub downlink: ChannelParams,
    /// Processed size as a fraction of the original packet size.
    pub processed_ratio: f64,
}

fn check(field: impl Into<String>, value: f64, ok: bool, reason: &'static str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParam {
            field: field.into(),
            value,
            reason,
        })
    }
}

impl SystemModel {
    /// Validates shapes and parameter domains. Stability is checked separately.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.sources.is_empty() {
            return Err(ModelError::NoSources);
        }
        for (j, s) in self.sources.iter().enumerate() {
            check(
                format!("sources[{j}].arrival_rate"),
                s.arrival_rate,
                s.arrival_rate.is_finite() && s.arrival_rate >= 0.0,
                "must be finite and non-negative",
            )?;
            check(
                format!("sources[{j}].packet_bits"),
                s.packet_bits,
                s.packet_bits.is_finite() && s.packet_bits > 0.0,
                "must be finite and positive",
            )?;
            s.uplink.validate()?;
        }
        check(
            "edge_rate",
            self.edge_rate,
            self.edge_rate.is_finite() && self.edge_rate > 0.0,
            "must be finite and positive",
        )?;
        check(
            "fog_rate",
            self.fog_rate,
            self.fog_rate.is_finite() && self.fog_rate > 0.0,
            "must be finite and positive",
        )?;
        check(
            "processed_ratio",
            self.processed_ratio,
            self.processed_ratio > 0.0 && self.processed_ratio <= 1.0,
            "must lie in (0, 1]",
        )?;
        self.downlink.validate()?;
        Ok(())
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn source(&self, j: usize) -> Result<&Source, ModelError> {
        self.sources.get(j).ok_or(ModelError::SourceIndex {
            index: j,
            count: self.sources.len(),
        })
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.sources.iter().map(|s| s.arrival_rate).sum()
    }

    /// Per-source edge load `λ_j / μ`.
    pub fn edge_loads(&self) -> Vec<f64> {
        self.sources
            .iter()
            .map(|s| s.arrival_rate / self.edge_rate)
            .collect()
    }

    pub fn edge_service_time(&self) -> f64 {
        1.0 / self.edge_rate
    }

    pub fn uplink_packet(&self, j: usize) -> Result<PacketSpec, ModelError> {
        Ok(PacketSpec::new(self.source(j)?.packet_bits)?)
    }

    pub fn downlink_packet(&self, j: usize) -> Result<PacketSpec, ModelError> {
        Ok(PacketSpec::new(
            self.source(j)?.packet_bits * self.processed_ratio,
        )?)
    }

    /// Same model with every link's transmit power replaced.
    pub fn with_tx_power(&self, watts: f64) -> Result<Self, ModelError> {
        let mut m = self.clone();
        for s in &mut m.sources {
            s.uplink = s.uplink.with_tx_power(watts)?;
        }
        m.downlink = m.downlink.with_tx_power(watts)?;
        Ok(m)
    }
}
