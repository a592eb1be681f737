//! Fixtures shared by the benchmarks.

use addressee_core::model::ModelProfile;
use addressee_core::numerics::Tensor;

/// Deterministic values in `[-1, 1]` without pulling in an RNG.
pub fn filled(shape: &[usize], salt: u64) -> Tensor {
    Tensor::from_fn(shape, |i| ((i as u64 * 2654435761 + salt * 40503) % 2001) as f64 / 1000.0 - 1.0)
}

/// Faces `[B*10, 3, R, R]` in `[0, 1]` and poses `[B*10, 1, 18, 3]` for `sequences` sequences.
pub fn batch_inputs(profile: &ModelProfile, sequences: usize) -> (Tensor, Tensor) {
    let r = profile.face_resolution;
    let mut faces = filled(&[sequences * 10, 3, r, r], 1);
    for v in faces.data_mut() {
        *v = (*v + 1.0) / 2.0;
    }
    (faces, filled(&[sequences * 10, 1, 18, 3], 2))
}
