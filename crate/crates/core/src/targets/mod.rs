//! Dense supervision for the structure-prior head.

mod boundaries;
mod raster;
mod tensor_file;

pub use boundaries::{align_boundaries, Boundaries};
pub use raster::{downsample_targets, rasterize, RidgeConfig, StructMaps};
pub use tensor_file::{read_tsqt, write_tsqt};

use crate::error::Result;
use crate::table::Table;

/// Full-resolution targets for a boxed table with a known image size.
pub fn build_targets(table: &Table, cfg: &RidgeConfig) -> Result<StructMaps> {
    let b = align_boundaries(table)?;
    let (h, w) = table.image_size().expect("checked by align_boundaries");
    Ok(rasterize(&b, h as usize, w as usize, cfg))
}
