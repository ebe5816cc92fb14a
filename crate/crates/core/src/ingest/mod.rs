//! Dataset loaders, the synthetic benchmark generator and image augmentation.

mod augment;
mod csv;
mod stl10;
mod synthetic;

pub use augment::{augment, hflip, pixel_index, shift, vflip, AugmentSpec};
pub use csv::{load_csv, read_csv, write_csv};
pub use stl10::{
    encode_stl10_images, encode_stl10_labels, load_stl10, parse_stl10, STL10_CHANNELS, STL10_CLASSES,
    STL10_RECORD_BYTES, STL10_SIDE,
};
pub use synthetic::{gen_synthetic, HiddenLabel, HiddenLabels, SyntheticData, SyntheticSpec};
