// SPDX-License-Identifier: Apache-2.0

//! Conversion between bits/second and packets/second for a fixed mean packet
//! length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketUnits {
    mean_packet_bits: f64,
}

impl PacketUnits {
    pub fn new(mean_packet_bits: f64) -> Result<Self> {
        if mean_packet_bits.is_finite() && mean_packet_bits > 0.0 {
            Ok(Self { mean_packet_bits })
        } else {
            Err(Error::InvalidArgument(format!(
                "mean packet size must be positive, got {mean_packet_bits}"
            )))
        }
    }

    pub fn mean_packet_bits(&self) -> f64 {
        self.mean_packet_bits
    }

    pub fn to_pps(&self, bits_per_second: f64) -> f64 {
        bits_per_second / self.mean_packet_bits
    }

    pub fn to_bps(&self, packets_per_second: f64) -> f64 {
        packets_per_second * self.mean_packet_bits
    }
}
