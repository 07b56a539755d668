//! Strip histograms and scheme composition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Mask;

use super::channels::ChannelStack;

pub const DEFAULT_STRIPS: usize = 6;
pub const DEFAULT_BINS: usize = 16;

/// Which region histograms a feature vector concatenates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Whole crop, mask ignored.
    Whole,
    /// Masked (foreground) region only.
    Fore,
    /// Foreground then background.
    ForeBack,
    /// Foreground then whole crop.
    ForeWhole,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Whole, Scheme::Fore, Scheme::ForeBack, Scheme::ForeWhole];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Whole => "whole",
            Scheme::Fore => "fore",
            Scheme::ForeBack => "fore-back",
            Scheme::ForeWhole => "fore-whole",
        }
    }

    /// Number of single-region blocks the scheme concatenates.
    pub fn region_count(self) -> usize {
        match self {
            Scheme::Whole | Scheme::Fore => 1,
            Scheme::ForeBack | Scheme::ForeWhole => 2,
        }
    }

    pub fn needs_mask(self) -> bool {
        !matches!(self, Scheme::Whole)
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "whole" => Ok(Scheme::Whole),
            "fore" => Ok(Scheme::Fore),
            "fore-back" => Ok(Scheme::ForeBack),
            "fore-whole" => Ok(Scheme::ForeWhole),
            other => Err(format!(
                "unknown scheme {other:?}; expected whole, fore, fore-back, fore-whole"
            )),
        }
    }
}

/// Histogram feature vector with its layout parameters.
///
/// Layout is channel-major: value index = (channel * strips + strip) * bins
/// + bin, with concatenated schemes appending a second such block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub scheme: Scheme,
    pub channels: usize,
    pub strips: usize,
    pub bins: usize,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Checks that two vectors share layout parameters.
    pub fn compatible(&self, other: &FeatureVector) -> Result<()> {
        if self.channels != other.channels
            || self.strips != other.strips
            || self.bins != other.bins
        {
            return Err(Error::config_mismatch(format!(
                "layouts differ: {}x{}x{} vs {}x{}x{}",
                self.channels, self.strips, self.bins, other.channels, other.strips, other.bins
            )));
        }
        Ok(())
    }
}

/// Histograms every channel over horizontal strips.
///
/// Only pixels selected by `region` count (all pixels when `region` is
/// absent). Each (channel, strip) block is L1-normalized; blocks with no
/// selected pixel stay all-zero. Strip s covers rows
/// [floor(s H / strips), floor((s+1) H / strips)).
pub fn strip_histograms(
    stack: &ChannelStack,
    region: Option<&Mask>,
    strips: usize,
    bins: usize,
) -> Result<FeatureVector> {
    if strips == 0 || bins == 0 {
        return Err(Error::invalid(format!(
            "strips = {strips}, bins = {bins}; both must be at least 1"
        )));
    }
    let h = stack.height();
    let w = stack.width();
    if strips > h {
        return Err(Error::invalid(format!(
            "strips = {strips} exceeds image height {h}"
        )));
    }
    if let Some(mask) = region {
        if mask.width() != w || mask.height() != h {
            return Err(Error::config_mismatch(format!(
                "region mask is {}x{} but channels are {w}x{h}",
                mask.width(),
                mask.height()
            )));
        }
    }

    let channels = stack.channel_count();
    let mut values = vec![0.0f64; channels * strips * bins];
    for c in 0..channels {
        let plane = stack.channel(c);
        for s in 0..strips {
            let row_lo = s * h / strips;
            let row_hi = (s + 1) * h / strips;
            let block = &mut values[(c * strips + s) * bins..(c * strips + s + 1) * bins];
            let mut count = 0usize;
            for y in row_lo..row_hi {
                for x in 0..w {
                    if region.map_or(true, |m| m.get(x, y)) {
                        let v = plane.get(x, y);
                        let bin = ((v * bins as f64) as usize).min(bins - 1);
                        block[bin] += 1.0;
                        count += 1;
                    }
                }
            }
            if count > 0 {
                let inv = 1.0 / count as f64;
                for b in block {
                    *b *= inv;
                }
            }
        }
    }

    Ok(FeatureVector {
        values,
        scheme: if region.is_some() {
            Scheme::Fore
        } else {
            Scheme::Whole
        },
        channels,
        strips,
        bins,
    })
}

/// Concatenates single-region histograms into the requested scheme.
///
/// Parts may be omitted when the scheme does not use them; a missing
/// required part is an error, as is any layout disagreement between the
/// parts used.
pub fn compose_scheme(
    fore: Option<&FeatureVector>,
    back: Option<&FeatureVector>,
    whole: Option<&FeatureVector>,
    scheme: Scheme,
) -> Result<FeatureVector> {
    fn need<'a>(
        part: Option<&'a FeatureVector>,
        name: &str,
        scheme: Scheme,
    ) -> Result<&'a FeatureVector> {
        part.ok_or_else(|| {
            Error::config_mismatch(format!(
                "scheme {} requires the {name} histogram",
                scheme.as_str()
            ))
        })
    }
    let single = |v: &FeatureVector| FeatureVector {
        values: v.values.clone(),
        scheme,
        channels: v.channels,
        strips: v.strips,
        bins: v.bins,
    };
    let pair = |a: &FeatureVector, b: &FeatureVector| -> Result<FeatureVector> {
        a.compatible(b)?;
        if a.values.len() != b.values.len() {
            return Err(Error::DimMismatch {
                expected: a.values.len(),
                got: b.values.len(),
            });
        }
        let mut values = Vec::with_capacity(a.values.len() * 2);
        values.extend_from_slice(&a.values);
        values.extend_from_slice(&b.values);
        Ok(FeatureVector {
            values,
            scheme,
            channels: a.channels,
            strips: a.strips,
            bins: a.bins,
        })
    };
    match scheme {
        Scheme::Whole => Ok(single(need(whole, "whole", scheme)?)),
        Scheme::Fore => Ok(single(need(fore, "fore", scheme)?)),
        Scheme::ForeBack => pair(need(fore, "fore", scheme)?, need(back, "back", scheme)?),
        Scheme::ForeWhole => pair(need(fore, "fore", scheme)?, need(whole, "whole", scheme)?),
    }
}
