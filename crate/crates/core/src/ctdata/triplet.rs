use super::{CtError, Result, Volume};
use crate::tensor::{Shape, Tensor};

/// Three adjacent low-dose slices and the full-dose middle slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTriplet {
    /// `(1, 3, h, w)`, channels ordered `i-1, i, i+1`.
    pub input: Tensor,
    /// `(1, 1, h, w)`.
    pub target: Tensor,
    pub patient_id: String,
    /// Index of the middle slice.
    pub slice_index: usize,
}

/// Slice `i` of a volume as an `(1, 1, h, w)` tensor.
pub fn slice_tensor(v: &Volume, i: usize) -> Tensor {
    Tensor::new(Shape::new(1, 1, v.height, v.width), v.slice_f64(i)).expect("slice length matches")
}

/// One triplet per interior slice, `1..=n-2`.
pub fn build_triplets(low: &Volume, full: &Volume, patient_id: &str) -> Result<Vec<SliceTriplet>> {
    if !low.same_geometry(full) {
        return Err(CtError::GeometryMismatch(format!(
            "low-dose volume is {}x{}x{}, full-dose {}x{}x{}",
            low.n_slices, low.height, low.width, full.n_slices, full.height, full.width
        )));
    }
    if low.n_slices < 3 {
        return Err(CtError::TooFewSlices(low.n_slices));
    }
    (1..low.n_slices - 1)
        .map(|i| {
            let parts = [i - 1, i, i + 1].map(|k| slice_tensor(low, k));
            let input = Tensor::stack(&parts)?.reshape(Shape::new(1, 3, low.height, low.width))?;
            Ok(SliceTriplet {
                input,
                target: slice_tensor(full, i),
                patient_id: patient_id.to_string(),
                slice_index: i,
            })
        })
        .collect()
}
