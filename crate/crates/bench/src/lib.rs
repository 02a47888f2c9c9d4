//! Shared fixtures for the pipeline benchmarks.

use vsfat_core::{generate_phantom, HuVolume, PhantomSpec};

/// Ring-plus-disk phantom scaled to a square `size` image with `nz` slices.
pub fn fixture(size: usize, nz: usize) -> HuVolume {
    let s = size as f64 / 512.0;
    let spec = PhantomSpec::annulus(size, size, 50.0 * s, 100.0 * s)
        .with_blob(0.0, 0.0, 20.0 * s)
        .with_table_artifacts()
        .with_slices(nz);
    generate_phantom(&spec).expect("fixture geometry is valid").0
}
