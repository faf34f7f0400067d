use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    #[default]
    Cosine,
    Euclidean,
}

/// Distances below this are reported as exactly zero, so an example is
/// always at distance 0 from itself under either kind.
const SNAP_TO_ZERO: f64 = 1e-12;

pub fn distance(a: &SparseVec, b: &SparseVec, kind: DistanceKind) -> Result<f64> {
    let d = match kind {
        DistanceKind::Euclidean => a.squared_distance(b).sqrt(),
        DistanceKind::Cosine => {
            let (na, nb) = (a.norm(), b.norm());
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroNorm);
            }
            let sim = (a.dot(b) / (na * nb)).clamp(-1.0, 1.0);
            1.0 - sim
        }
    };
    Ok(if d < SNAP_TO_ZERO { 0.0 } else { d })
}
