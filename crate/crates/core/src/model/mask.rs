use super::ModelError;
use crate::autodiff::{Tensor, MASK_SENTINEL};

/// Additive `L × L` attention mask: `0` where key `j <= i` (visible to query
/// `i`), [`MASK_SENTINEL`] where `j > i`.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalMask(pub(crate) Tensor);

impl CausalMask {
    pub fn len(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn is_visible(&self, query: usize, key: usize) -> bool {
        self.0.data()[query * self.len() + key] == 0.0
    }
}

pub fn build_causal_mask(len: usize) -> Result<CausalMask, ModelError> {
    if len == 0 {
        return Err(ModelError::Config("causal mask length must be positive".into()));
    }
    let mut t = Tensor::zeros(&[len, len]);
    for i in 0..len {
        for j in i + 1..len {
            t.data_mut()[i * len + j] = MASK_SENTINEL;
        }
    }
    Ok(CausalMask(t))
}
