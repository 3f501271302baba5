//! Anomaly scoring backends over frozen feature vectors.
//!
//! * [`lp`]: a softmax linear probe trained on labeled evaluation rows; the
//!   anomaly score is the anomaly-class probability.
//! * [`md`]: squared Mahalanobis distance to one global normal-data Gaussian.

pub mod linalg;
pub mod lp;
pub mod md;
pub mod persist;

use serde::{Deserialize, Serialize};

pub use lp::{fit_lp, fit_lp_traced, lp_predict_class, score_lp, LpHyper, LpModel};
pub use md::{fit_md, score_md, MdModel, Regularization};

/// Class index of the anomalous class.
pub const ANOMALY_CLASS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Lp,
    Md,
}

/// Per-row anomaly scores from one backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    pub backend: Backend,
}

impl ScoreVector {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}
