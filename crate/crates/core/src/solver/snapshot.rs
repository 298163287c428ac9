//! Restart snapshots: a self-describing JSON container with the mesh
//! refinement tree, the coefficient vectors and the history field.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FieldState, Simulation};
use crate::error::{Error, Result};
use crate::geometry::Aabb;
use crate::mesh::MlhpMesh;

const FORMAT: &str = "vnotch-snapshot";
const VERSION: u32 = 1;

/// Enough to rebuild a refined mesh deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDescription {
    pub domain: Aabb,
    pub base: [usize; 3],
    pub order: usize,
    pub dim: usize,
    pub max_depth: u8,
    /// `(level, index)` of every refined cell.
    pub refined: Vec<(u8, [u32; 3])>,
}

impl MeshDescription {
    pub fn of(mesh: &MlhpMesh) -> Self {
        let mut refined: Vec<(u8, [u32; 3])> =
            mesh.cells().iter().filter(|c| !c.is_leaf()).map(|c| (c.level, c.index)).collect();
        refined.sort();
        Self {
            domain: *mesh.domain(),
            base: mesh.base(),
            order: mesh.order(),
            dim: mesh.dim(),
            max_depth: mesh.max_depth(),
            refined,
        }
    }

    pub fn build(&self) -> Result<MlhpMesh> {
        let mut mesh =
            MlhpMesh::create_base_grid(self.domain, self.base, self.order, self.dim)?.with_max_depth(self.max_depth);
        let maxl = self.refined.iter().map(|r| r.0).max();
        if let Some(maxl) = maxl {
            for level in 0..=maxl {
                let ids: Vec<_> = self
                    .refined
                    .iter()
                    .filter(|r| r.0 == level)
                    .map(|r| {
                        mesh.find_cell(r.0, r.1).ok_or_else(|| {
                            Error::format(FORMAT, format!("refined cell {:?} at level {} does not exist", r.1, r.0))
                        })
                    })
                    .collect::<Result<_>>()?;
                mesh.refine_leaves(&ids);
            }
        }
        Ok(mesh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub format: String,
    pub version: u32,
    pub load: f64,
    pub mesh: MeshDescription,
    pub state: FieldState,
}

impl Snapshot {
    pub fn of(sim: &Simulation) -> Self {
        Self {
            format: FORMAT.into(),
            version: VERSION,
            load: sim.load(),
            mesh: MeshDescription::of(sim.mesh()),
            state: sim.state.clone(),
        }
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer(&mut w, self).map_err(|e| Error::format(FORMAT, e.to_string()))?;
        Ok(())
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let snap: Snapshot = serde_json::from_reader(r).map_err(|e| Error::format(FORMAT, e.to_string()))?;
        if snap.format != FORMAT || snap.version != VERSION {
            return Err(Error::format(FORMAT, format!("unsupported container {} v{}", snap.format, snap.version)));
        }
        Ok(snap)
    }
}
