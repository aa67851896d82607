//! File bundling every kernel manifold of one experiment.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{ContinuationParams, KernelManifold};
use crate::kinematics::WorkingSpace;

pub const MANIFOLD_SET_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldSet {
    pub format_version: u32,
    pub experiment_seed: u64,
    pub workspace: WorkingSpace,
    pub params: ContinuationParams,
    pub manifolds: Vec<KernelManifold>,
}

impl ManifoldSet {
    pub fn new(
        experiment_seed: u64,
        workspace: WorkingSpace,
        params: ContinuationParams,
        manifolds: Vec<KernelManifold>,
    ) -> Self {
        ManifoldSet {
            format_version: MANIFOLD_SET_FORMAT,
            experiment_seed,
            workspace,
            params,
            manifolds,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let set: ManifoldSet = serde_json::from_reader(r)?;
        if set.format_version != MANIFOLD_SET_FORMAT {
            return Err(Error::format(
                "manifold set",
                format!("unsupported version {}", set.format_version),
            ));
        }
        if let Some(i) = set.manifolds.iter().position(|m| m.samples.iter().any(|s| !s.is_finite())) {
            return Err(Error::format("manifold set", format!("manifold {i} has non-finite samples")));
        }
        Ok(set)
    }
}
