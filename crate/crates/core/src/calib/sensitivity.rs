use std::f64::consts::PI;

use crate::coils::CoilSensitivities;
use crate::error::{shape_err, Error};
use crate::fft::ifft2c;
use crate::sim::{acs_start, embed_rows};
use crate::tensor::ComplexArray;
use crate::Result;

/// Relative RSS level below which estimated maps are set to zero.
pub const DEFAULT_RSS_THRESHOLD: f64 = 0.02;

fn hann(len: usize, i: usize) -> f64 {
    0.5 - 0.5 * (2.0 * PI * (i as f64 + 0.5) / len as f64).cos()
}

/// Low-resolution sensitivity estimate from a centered ACS block
/// `[nc, acs, nx]` of an `ny x nx` grid.
///
/// The ACS is zero-padded, apodized with a separable raised-cosine window
/// (isotropic: the kx window spans `acs * nx / ny` columns), transformed to the
/// image domain and divided by the root-sum-of-squares. Pixels whose RSS is
/// at most `rss_threshold * max(RSS)` get zero maps.
pub fn estimate_sensitivities(
    acs: &ComplexArray,
    ny: usize,
    nx: usize,
    rss_threshold: f64,
) -> Result<CoilSensitivities> {
    if acs.ndim() != 3 || acs.shape()[2] != nx || acs.shape()[1] > ny {
        return shape_err(format!("ACS {:?} does not fit a {ny}x{nx} grid", acs.shape()));
    }
    if acs.norm_sqr() == 0.0 {
        return Err(Error::DegenerateInput("all-zero ACS block".into()));
    }
    let (nc, h) = (acs.shape()[0], acs.shape()[1]);
    let wx_len = ((h * nx + ny / 2) / ny).clamp(1, nx);
    let wx_start = nx / 2 - wx_len / 2;
    let mut windowed = acs.clone();
    for (i, v) in windowed.data_mut().iter_mut().enumerate() {
        let y = (i / nx) % h;
        let x = i % nx;
        let wx = if (wx_start..wx_start + wx_len).contains(&x) {
            hann(wx_len, x - wx_start)
        } else {
            0.0
        };
        *v *= hann(h, y) * wx;
    }
    let padded = embed_rows(&windowed, ny, acs_start(ny, h))?;
    let low = ifft2c(&padded)?;
    let n = ny * nx;
    let rss: Vec<f64> = (0..n)
        .map(|p| (0..nc).map(|c| low.data()[c * n + p].norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let peak = rss.iter().cloned().fold(0.0, f64::max);
    CoilSensitivities::normalized(low, rss_threshold * peak)
}
