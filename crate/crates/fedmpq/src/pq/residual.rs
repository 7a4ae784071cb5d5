//! Magnitude pruning of quantization residuals.

use crate::error::{Error, Result};

/// Top-k entries of a residual vector as (position, value) pairs,
/// positions strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseResidual {
    pub entries: Vec<(u32, f32)>,
    pub original_len: u32,
}

impl SparseResidual {
    pub fn empty(original_len: u32) -> Self {
        Self {
            entries: Vec::new(),
            original_len,
        }
    }

    /// Expand back to a dense vector with zeros elsewhere.
    pub fn densify(&self) -> Vec<f32> {
        let mut out = vec![0.0f32; self.original_len as usize];
        for &(pos, val) in &self.entries {
            out[pos as usize] = val;
        }
        out
    }
}

/// Keep the `ceil(ratio * len)` entries of largest magnitude (ties:
/// lowest position). `ratio = 1` keeps everything, `ratio = 0` nothing.
pub fn prune_residual(residual: &[f32], ratio: f64) -> Result<SparseResidual> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!(
            "residual ratio must be in [0, 1], got {ratio}"
        )));
    }
    let len = residual.len();
    let keep = ((ratio * len as f64).ceil() as usize).min(len);
    if keep == 0 {
        return Ok(SparseResidual::empty(len as u32));
    }
    let mut order: Vec<u32> = (0..len as u32).collect();
    order.sort_by(|&a, &b| {
        let ma = residual[a as usize].abs();
        let mb = residual[b as usize].abs();
        mb.total_cmp(&ma).then(a.cmp(&b))
    });
    let mut picked = order[..keep].to_vec();
    picked.sort_unstable();
    Ok(SparseResidual {
        entries: picked
            .into_iter()
            .map(|p| (p, residual[p as usize]))
            .collect(),
        original_len: len as u32,
    })
}
