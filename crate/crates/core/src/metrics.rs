//! Image-quality metrics on real (magnitude) images.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Error};
use crate::tensor::{ComplexArray, RealArray};
use crate::Result;

fn check_pair(reference: &RealArray, test: &RealArray) -> Result<()> {
    if reference.shape() != test.shape() {
        return shape_err(format!(
            "metric inputs differ in shape: {:?} vs {:?}",
            reference.shape(),
            test.shape()
        ));
    }
    if reference.is_empty() {
        return arg_err("metric inputs are empty");
    }
    Ok(())
}

/// `|test - ref|^2 / |ref|^2`
pub fn nmse(reference: &RealArray, test: &RealArray) -> Result<f64> {
    check_pair(reference, test)?;
    let den: f64 = reference.data().iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::DegenerateInput("NMSE reference is all zero".into()));
    }
    let num: f64 = reference.data().iter().zip(test.data()).map(|(r, t)| (t - r).powi(2)).sum();
    Ok(num / den)
}

/// `10 log10(peak^2 / MSE)` with `peak = max |ref|`; `+inf` when the images agree.
pub fn psnr(reference: &RealArray, test: &RealArray) -> Result<f64> {
    check_pair(reference, test)?;
    let n = reference.len() as f64;
    let mse: f64 = reference.data().iter().zip(test.data()).map(|(r, t)| (t - r).powi(2)).sum::<f64>() / n;
    let peak = reference.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range `L`; `None` uses the peak of the reference.
    pub dynamic_range: Option<f64>,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: None,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size).map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Separable "valid" filtering of a `[ny, nx]` image with a 1-D window.
fn filter_valid(img: &[f64], ny: usize, nx: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let (oy, ox) = (ny + 1 - k, nx + 1 - k);
    let mut rows = vec![0.0; ny * ox];
    for y in 0..ny {
        for x in 0..ox {
            rows[y * ox + x] = (0..k).map(|j| w[j] * img[y * nx + x + j]).sum();
        }
    }
    let mut out = vec![0.0; oy * ox];
    for y in 0..oy {
        for x in 0..ox {
            out[y * ox + x] = (0..k).map(|j| w[j] * rows[(y + j) * ox + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over all fully contained Gaussian windows of a
/// 2-D image pair.
pub fn ssim(reference: &RealArray, test: &RealArray, params: &SsimParams) -> Result<f64> {
    check_pair(reference, test)?;
    if reference.shape().len() != 2 {
        return shape_err(format!("SSIM needs 2-D images, got {:?}", reference.shape()));
    }
    let (ny, nx) = (reference.shape()[0], reference.shape()[1]);
    if params.window == 0 || ny < params.window || nx < params.window {
        return arg_err(format!("image {ny}x{nx} smaller than SSIM window {}", params.window));
    }
    let range = params
        .dynamic_range
        .unwrap_or_else(|| reference.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let c1 = (params.k1 * range).powi(2);
    let c2 = (params.k2 * range).powi(2);
    let w = gaussian_window(params.window, params.sigma);
    let (a, b) = (reference.data(), test.data());
    let prod = |f: &dyn Fn(usize) -> f64| (0..a.len()).map(f).collect::<Vec<f64>>();
    let mu_a = filter_valid(a, ny, nx, &w);
    let mu_b = filter_valid(b, ny, nx, &w);
    let aa = filter_valid(&prod(&|i| a[i] * a[i]), ny, nx, &w);
    let bb = filter_valid(&prod(&|i| b[i] * b[i]), ny, nx, &w);
    let ab = filter_valid(&prod(&|i| a[i] * b[i]), ny, nx, &w);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += if den == 0.0 { 1.0 } else { num / den };
    }
    Ok(total / mu_a.len() as f64)
}

/// One row of a metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    /// Slice index, or `"mean"`.
    pub slice: String,
    pub nmse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-slice metrics on magnitude images scaled by the reference peak of
/// each slice, plus a mean row. Inputs are `[n_slices, ny, nx]` or `[ny, nx]`.
pub fn recon_report(truth: &ComplexArray, recon: &ComplexArray, method: &str) -> Result<Vec<MetricsRow>> {
    recon_report_with(truth, recon, method, &SsimParams::default())
}

pub fn recon_report_with(
    truth: &ComplexArray,
    recon: &ComplexArray,
    method: &str,
    ssim_params: &SsimParams,
) -> Result<Vec<MetricsRow>> {
    if truth.shape() != recon.shape() {
        return shape_err(format!(
            "truth {:?} and reconstruction {:?} differ in shape",
            truth.shape(),
            recon.shape()
        ));
    }
    let (n_slices, ny, nx) = truth.plane_dims()?;
    let (ta, ra) = (truth.abs(), recon.abs());
    let n = ny * nx;
    let mut rows = Vec::with_capacity(n_slices + 1);
    for s in 0..n_slices {
        let t = &ta.data()[s * n..(s + 1) * n];
        let peak = t.iter().fold(0.0f64, |m, v| m.max(*v));
        if peak == 0.0 {
            return Err(Error::DegenerateInput(format!("truth slice {s} is all zero")));
        }
        let tr = RealArray::new(vec![ny, nx], t.iter().map(|v| v / peak).collect())?;
        let rr = RealArray::new(vec![ny, nx], ra.data()[s * n..(s + 1) * n].iter().map(|v| v / peak).collect())?;
        rows.push(MetricsRow {
            method: method.to_string(),
            slice: s.to_string(),
            nmse: nmse(&tr, &rr)?,
            psnr_db: psnr(&tr, &rr)?,
            ssim: ssim(&tr, &rr, ssim_params)?,
        });
    }
    let k = n_slices as f64;
    rows.push(MetricsRow {
        method: method.to_string(),
        slice: "mean".into(),
        nmse: rows.iter().map(|r| r.nmse).sum::<f64>() / k,
        psnr_db: rows.iter().map(|r| r.psnr_db).sum::<f64>() / k,
        ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / k,
    });
    Ok(rows)
}
