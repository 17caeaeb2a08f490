//! Sentinel-2 band metadata and GSD-homogeneous channel grouping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub gsd_m: f64,
    pub wavelength_nm: f64,
}

impl BandSpec {
    pub fn new(name: &str, gsd_m: f64, wavelength_nm: f64) -> Self {
        Self {
            name: name.to_string(),
            gsd_m,
            wavelength_nm,
        }
    }
}

/// All 13 Sentinel-2 bands in table order.
pub fn sentinel2_band_table() -> Vec<BandSpec> {
    [
        ("B1", 60.0, 443.0),
        ("B2", 10.0, 490.0),
        ("B3", 10.0, 560.0),
        ("B4", 10.0, 665.0),
        ("B5", 20.0, 705.0),
        ("B6", 20.0, 740.0),
        ("B7", 20.0, 783.0),
        ("B8", 10.0, 842.0),
        ("B8A", 20.0, 865.0),
        ("B9", 60.0, 940.0),
        ("B10", 60.0, 1375.0),
        ("B11", 20.0, 1610.0),
        ("B12", 20.0, 2190.0),
    ]
    .into_iter()
    .map(|(n, g, w)| BandSpec::new(n, g, w))
    .collect()
}

/// Red, green and blue at 10 m, in that order.
pub fn rgb_bands() -> Vec<BandSpec> {
    let table = sentinel2_band_table();
    ["B4", "B3", "B2"]
        .iter()
        .map(|n| table.iter().find(|b| b.name == *n).cloned().expect("rgb band"))
        .collect()
}

/// Ordered partition of a band list into same-GSD groups. Group entries
/// index the band list the grouping was validated against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGrouping {
    groups: Vec<Vec<usize>>,
}

impl ChannelGrouping {
    pub fn new(groups: Vec<Vec<usize>>, bands: &[BandSpec]) -> Result<Self> {
        let mut seen = vec![false; bands.len()];
        for group in &groups {
            let first = *group
                .first()
                .ok_or_else(|| Error::Config("empty channel group".into()))?;
            if first >= bands.len() {
                return Err(Error::Config(format!("band index {first} out of range")));
            }
            for &b in group {
                if b >= bands.len() {
                    return Err(Error::Config(format!("band index {b} out of range")));
                }
                if std::mem::replace(&mut seen[b], true) {
                    return Err(Error::Config(format!("band {} in more than one group", bands[b].name)));
                }
                if bands[b].gsd_m != bands[first].gsd_m {
                    return Err(Error::Config(format!(
                        "group mixes GSDs: {} ({} m) and {} ({} m)",
                        bands[first].name, bands[first].gsd_m, bands[b].name, bands[b].gsd_m
                    )));
                }
            }
        }
        Ok(Self { groups })
    }

    /// Every band in one group, with no GSD check.
    pub fn single(bands: usize) -> Self {
        Self {
            groups: vec![(0..bands).collect()],
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Union of grouped bands, ascending.
    pub fn retained(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.groups.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    /// Groups re-expressed as positions in [`Self::retained`], i.e. as
    /// channel indices of an image holding only the retained bands.
    pub fn channel_groups(&self) -> Vec<Vec<usize>> {
        let retained = self.retained();
        self.groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|b| retained.binary_search(b).expect("retained"))
                    .collect()
            })
            .collect()
    }
}

/// B1, B9 and B10 dropped; {B2, B3, B4, B8}, {B5, B6, B7, B8A}, {B11, B12}
/// over [`sentinel2_band_table`].
pub fn default_grouping() -> ChannelGrouping {
    let table = sentinel2_band_table();
    let idx = |name: &str| table.iter().position(|b| b.name == name).expect("band");
    let groups = [
        &["B2", "B3", "B4", "B8"][..],
        &["B5", "B6", "B7", "B8A"][..],
        &["B11", "B12"][..],
    ]
    .iter()
    .map(|g| g.iter().map(|n| idx(n)).collect())
    .collect();
    ChannelGrouping::new(groups, &table).expect("default grouping is valid")
}
