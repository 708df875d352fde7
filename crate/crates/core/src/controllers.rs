//! Finite-dimensional feedback laws acting on the follower/master difference
//! `z`: the modal law `-mu Σ_{k<=N} (z, w_k) w_k` and the volume-element law
//! `-mu Σ_{k<=N} z̄_k χ_{J_k}`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::basis::{self, GridField, GridSpec, ModalBasis, VolumePartition};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerFamily {
    Modal,
    Volume,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub family: ControllerFamily,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub count: usize,
}

impl ControllerSpec {
    pub fn none() -> Self {
        ControllerSpec {
            family: ControllerFamily::None,
            mu: 0.0,
            count: 0,
        }
    }

    pub fn modal(mu: f64, count: usize) -> Result<Self> {
        ControllerSpec {
            family: ControllerFamily::Modal,
            mu,
            count,
        }
        .validated()
    }

    pub fn volume(mu: f64, count: usize) -> Result<Self> {
        ControllerSpec {
            family: ControllerFamily::Volume,
            mu,
            count,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::param(
                "controller.mu",
                format!("gain must be finite and >= 0, got {}", self.mu),
            ));
        }
        if self.family != ControllerFamily::None && self.count == 0 {
            return Err(Error::param(
                "controller.count",
                "need N >= 1 for an active controller",
            ));
        }
        Ok(self)
    }

    pub fn is_active(&self) -> bool {
        self.family != ControllerFamily::None
    }

    pub fn partition(&self) -> Result<VolumePartition> {
        VolumePartition::new(self.count)
    }
}

pub fn modal_feedback(z: &GridField, spec: &ControllerSpec) -> Result<GridField> {
    if spec.family != ControllerFamily::Modal {
        return Err(Error::param(
            "controller.family",
            "modal feedback needs the modal family",
        ));
    }
    let coeffs = basis::modal_coeffs(z, spec.count)?;
    Ok(basis::modal_reconstruct(&coeffs, z.grid())?.scaled(-spec.mu))
}

pub fn volume_feedback(z: &GridField, spec: &ControllerSpec) -> Result<GridField> {
    if spec.family != ControllerFamily::Volume {
        return Err(Error::param(
            "controller.family",
            "volume feedback needs the volume family",
        ));
    }
    let part = spec.partition()?;
    let avgs = basis::volume_averages(z, &part)?;
    Ok(basis::piecewise_reconstruct(&avgs, &part, z.grid())?.scaled(-spec.mu))
}

/// A controller prepared for one grid; caches the sampled modes or the node
/// ranges of the partition so each evaluation is a single pass.
#[derive(Debug, Clone)]
pub struct Controller {
    spec: ControllerSpec,
    kind: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    None,
    Modal(ModalBasis),
    Volume(Vec<Range<usize>>),
}

impl Controller {
    pub fn new(spec: ControllerSpec, grid: GridSpec) -> Result<Self> {
        let spec = spec.validated()?;
        let kind = match spec.family {
            ControllerFamily::None => Prepared::None,
            ControllerFamily::Modal => Prepared::Modal(ModalBasis::new(grid, spec.count)?),
            ControllerFamily::Volume => Prepared::Volume(spec.partition()?.node_ranges(grid)?),
        };
        Ok(Controller { spec, kind })
    }

    pub fn spec(&self) -> &ControllerSpec {
        &self.spec
    }

    pub fn is_active(&self) -> bool {
        !matches!(self.kind, Prepared::None)
    }

    /// Feedback for the difference `z`; `None` for the inactive controller.
    pub fn apply(&self, z: &GridField) -> Result<Option<GridField>> {
        let mu = self.spec.mu;
        match &self.kind {
            Prepared::None => Ok(None),
            Prepared::Modal(b) => {
                let c: Vec<f64> = b.coeffs(z)?.into_iter().map(|c| -mu * c).collect();
                b.reconstruct(&c).map(Some)
            }
            Prepared::Volume(ranges) => {
                let avgs = basis::averages_over(z.values(), ranges);
                let mut out = GridField::zeros(z.grid());
                let vals = out.values_mut();
                for (r, a) in ranges.iter().zip(avgs) {
                    vals[r.clone()].fill(-mu * a);
                }
                Ok(Some(out))
            }
        }
    }
}
