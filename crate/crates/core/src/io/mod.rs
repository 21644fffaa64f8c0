//! Array and image containers.

pub mod npy;
pub mod pgm;

pub use npy::{
    array_content, map_to_array, nested_to_array, read_array, stack_to_array, write_map, write_stack,
    ArrayContent, Dtype, NpyArray, NpyData, ReadOptions,
};
pub use pgm::{decode_pgm, encode_pgm, preview, read_image_pgm, write_image_pgm};
