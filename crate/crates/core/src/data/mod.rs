//! Band metadata, synthetic multi-band rasters, scale pyramids and
//! patch sequences.

pub mod bands;
pub mod io;
pub mod patch;
pub mod resample;
pub mod synth;

pub use bands::{default_grouping, rgb_bands, sentinel2_band_table, BandSpec, ChannelGrouping};
pub use patch::{num_patches, patchify, unpatchify};
pub use resample::{bilinear_downsample, build_scale_pyramid, resize_bilinear, ScalePyramid};
pub use synth::{synth_dataset, synth_sample, ImageSample, Sample, SynthConfig};

/// The ten bands kept by [`default_grouping`], in table order.
pub fn sentinel_retained_bands() -> Vec<BandSpec> {
    let table = sentinel2_band_table();
    default_grouping().retained().iter().map(|&i| table[i].clone()).collect()
}
