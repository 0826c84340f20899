//! The analytic protocol families, built by kind and duration.

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::protocol::{
    build_metric_table, cd_correct_double, cd_correct_single, geodesic_protocol, transport_cubic,
    MetricTable, Protocol, ProtocolKind, DEFAULT_RAMP_FRACTION,
};

pub const DEFAULT_METRIC_SAMPLES: usize = 101;

/// Metric table over `[-1, 1]`, the span of the default tweezer lattice.
pub fn default_metric_table(cfg: &PhysicsConfig) -> Result<MetricTable> {
    build_metric_table(cfg, -1.0, 1.0, DEFAULT_METRIC_SAMPLES)
}

/// Everything needed to generate reference protocols for one configuration.
#[derive(Debug, Clone)]
pub struct ReferenceFamily {
    pub cfg: PhysicsConfig,
    pub table: MetricTable,
    pub ramp_fraction: f64,
}

impl ReferenceFamily {
    pub fn new(cfg: &PhysicsConfig) -> Result<Self> {
        Ok(Self {
            cfg: cfg.clone(),
            table: default_metric_table(cfg)?,
            ramp_fraction: DEFAULT_RAMP_FRACTION,
        })
    }

    /// `cd_double` is the double-tweezer correction applied to the geodesic, and
    /// `cd_single` the single-tweezer correction applied to the cubic ramp.
    pub fn protocol(&self, kind: ProtocolKind, duration: f64) -> Result<Protocol> {
        match kind {
            ProtocolKind::Cubic => transport_cubic(&self.cfg, duration),
            ProtocolKind::CdSingle => {
                cd_correct_single(&transport_cubic(&self.cfg, duration)?, &self.cfg)
            }
            ProtocolKind::Geodesic => self.geodesic(duration),
            ProtocolKind::CdDouble => {
                cd_correct_double(&self.geodesic(duration)?, &self.table, &self.cfg)
            }
            ProtocolKind::Optimized | ProtocolKind::Human => Err(Error::Domain(format!(
                "'{kind}' protocols are not generated analytically"
            ))),
        }
    }

    fn geodesic(&self, duration: f64) -> Result<Protocol> {
        geodesic_protocol(&self.table, duration, &self.cfg, self.ramp_fraction)
    }
}
