//! Coil sensitivity maps and the coil-consistency projector.

use crate::error::shape_err;
use crate::fft::{fft2c, ifft2c};
use crate::tensor::{ComplexArray, RealArray, C64};
use crate::Result;

/// Per-coil complex maps `S`, shape `[nc, ny, nx]`.
///
/// Maps are expected to be pixelwise normalized: `sum_c |S_c|^2` is 1 where
/// any coil sees the pixel and 0 elsewhere. [`CoilSensitivities::normalized`]
/// enforces that on arbitrary raw maps.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilSensitivities {
    maps: ComplexArray,
}

impl CoilSensitivities {
    pub fn new(maps: ComplexArray) -> Result<Self> {
        if maps.ndim() != 3 {
            return shape_err(format!("coil maps must be [nc, ny, nx], got {:?}", maps.shape()));
        }
        Ok(Self { maps })
    }

    /// Divides raw maps by their root-sum-of-squares; pixels with RSS at or
    /// below `floor` are zeroed.
    pub fn normalized(raw: ComplexArray, floor: f64) -> Result<Self> {
        let mut s = Self::new(raw)?;
        let (nc, ny, nx) = s.dims();
        let n = ny * nx;
        let data = s.maps.data_mut();
        for p in 0..n {
            let rss: f64 = (0..nc).map(|c| data[c * n + p].norm_sqr()).sum::<f64>().sqrt();
            for c in 0..nc {
                let v = &mut data[c * n + p];
                *v = if rss > floor { *v / rss } else { C64::new(0.0, 0.0) };
            }
        }
        Ok(s)
    }

    pub fn maps(&self) -> &ComplexArray {
        &self.maps
    }

    pub fn into_maps(self) -> ComplexArray {
        self.maps
    }

    /// `(nc, ny, nx)`
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.maps.shape();
        (s[0], s[1], s[2])
    }

    pub fn n_coils(&self) -> usize {
        self.maps.shape()[0]
    }

    /// `sum_c |S_c|^2` per pixel.
    pub fn energy(&self) -> RealArray {
        let (nc, ny, nx) = self.dims();
        let n = ny * nx;
        let d = self.maps.data();
        let e = (0..n)
            .map(|p| (0..nc).map(|c| d[c * n + p].norm_sqr()).sum())
            .collect();
        RealArray::new(vec![ny, nx], e).expect("shape is consistent")
    }

    /// Pixels where the maps are nonzero.
    pub fn support(&self) -> Vec<bool> {
        self.energy().data().iter().map(|&e| e > 1e-12).collect()
    }

    /// Image-domain coil combination `x = sum_c conj(S_c) x_c`.
    pub fn combine(&self, coil_images: &ComplexArray) -> Result<ComplexArray> {
        let (nc, ny, nx) = self.dims();
        if coil_images.shape() != [nc, ny, nx] {
            return shape_err(format!(
                "combine: coil images {:?} vs maps {:?}",
                coil_images.shape(),
                self.maps.shape()
            ));
        }
        let n = ny * nx;
        let (s, x) = (self.maps.data(), coil_images.data());
        let mut out = vec![C64::new(0.0, 0.0); n];
        for c in 0..nc {
            for p in 0..n {
                out[p] += s[c * n + p].conj() * x[c * n + p];
            }
        }
        ComplexArray::new(vec![ny, nx], out)
    }

    /// Image-domain expansion `x_c = S_c x`.
    pub fn expand(&self, image: &ComplexArray) -> Result<ComplexArray> {
        let (nc, ny, nx) = self.dims();
        if image.shape() != [ny, nx] {
            return shape_err(format!(
                "expand: image {:?} vs maps {:?}",
                image.shape(),
                self.maps.shape()
            ));
        }
        let n = ny * nx;
        let (s, x) = (self.maps.data(), image.data());
        Ok(ComplexArray::from_fn(&[nc, ny, nx], |i| s[i] * x[i % n]))
    }

    /// `S̄* = S* F⁻¹`: multicoil k-space to combined image.
    pub fn combine_kspace(&self, ksp: &ComplexArray) -> Result<ComplexArray> {
        self.combine(&ifft2c(ksp)?)
    }

    /// `S̄ = F S`: combined image to multicoil k-space.
    pub fn expand_to_kspace(&self, image: &ComplexArray) -> Result<ComplexArray> {
        fft2c(&self.expand(image)?)
    }
}

/// Projection `S̄ S̄*` onto the coil-consistent subspace of multicoil k-space.
///
/// For normalized maps this is an orthogonal projector: linear, idempotent
/// and self-adjoint.
pub fn coil_project(ksp: &ComplexArray, maps: &CoilSensitivities) -> Result<ComplexArray> {
    maps.expand_to_kspace(&maps.combine_kspace(ksp)?)
}
