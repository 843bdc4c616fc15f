//! Shared k-space kernel machinery: tap geometry, calibration patch matrices
//! and circular kernel application.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err};
use crate::fft::{fft2c, ifft2c};
use crate::tensor::{ComplexArray, C64};
use crate::Result;

/// Kernel footprint. Taps along ky are spaced `ky_stride` lines apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelGeometry {
    pub kh: usize,
    pub kw: usize,
    #[serde(default = "one")]
    pub ky_stride: usize,
}

fn one() -> usize {
    1
}

impl Default for KernelGeometry {
    fn default() -> Self {
        Self::new(5, 5)
    }
}

impl KernelGeometry {
    pub fn new(kh: usize, kw: usize) -> Self {
        Self { kh, kw, ky_stride: 1 }
    }

    pub fn with_stride(self, ky_stride: usize) -> Self {
        Self { ky_stride, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kh.is_multiple_of(2) || self.kw.is_multiple_of(2) {
            return arg_err(format!("kernel size {}x{} must be odd", self.kh, self.kw));
        }
        if self.ky_stride == 0 {
            return arg_err("ky_stride must be at least 1");
        }
        Ok(())
    }

    /// Rows spanned by the kernel.
    pub fn extent_y(&self) -> usize {
        (self.kh - 1) * self.ky_stride + 1
    }

    pub fn half_y(&self) -> usize {
        (self.kh / 2) * self.ky_stride
    }

    pub fn half_x(&self) -> usize {
        self.kw / 2
    }

    pub fn taps_per_coil(&self) -> usize {
        self.kh * self.kw
    }

    /// `(dy, dx)` sample offset of tap `(ty, tx)`.
    pub fn offset(&self, ty: usize, tx: usize) -> (isize, isize) {
        (
            (ty as isize - (self.kh / 2) as isize) * self.ky_stride as isize,
            tx as isize - (self.kw / 2) as isize,
        )
    }

    /// Flat column index of tap `(coil, ty, tx)`.
    pub fn column(&self, coil: usize, ty: usize, tx: usize) -> usize {
        (coil * self.kh + ty) * self.kw + tx
    }

    pub fn center_column(&self, coil: usize) -> usize {
        self.column(coil, self.kh / 2, self.kw / 2)
    }
}

/// Calibration patch matrix over all fully-contained kernel positions of a
/// block `[nc, h, w]`. Row order is ky-major, then kx.
pub(crate) struct Patches {
    pub matrix: DMatrix<C64>,
    pub centers: Vec<(usize, usize)>,
}

pub(crate) fn patch_matrix(block: &ComplexArray, geom: &KernelGeometry) -> Result<Patches> {
    geom.validate()?;
    if block.ndim() != 3 {
        return shape_err(format!("calibration block must be [nc, h, w], got {:?}", block.shape()));
    }
    let (nc, h, w) = (block.shape()[0], block.shape()[1], block.shape()[2]);
    if h < geom.extent_y() || w < geom.kw {
        return arg_err(format!(
            "calibration region {h}x{w} smaller than kernel extent {}x{}",
            geom.extent_y(),
            geom.kw
        ));
    }
    let (hy, hx) = (geom.half_y(), geom.half_x());
    let centers: Vec<(usize, usize)> = (hy..h - hy)
        .flat_map(|y| (hx..w - hx).map(move |x| (y, x)))
        .collect();
    let ncol = nc * geom.taps_per_coil();
    let d = block.data();
    let matrix = DMatrix::from_fn(centers.len(), ncol, |r, j| {
        let (y, x) = centers[r];
        let c = j / geom.taps_per_coil();
        let t = j % geom.taps_per_coil();
        let (dy, dx) = geom.offset(t / geom.kw, t % geom.kw);
        let yy = (y as isize + dy) as usize;
        let xx = (x as isize + dx) as usize;
        d[(c * h + yy) * w + xx]
    });
    Ok(Patches { matrix, centers })
}

/// Center samples of coil `coil` of `block` at the given patch centers.
pub(crate) fn center_samples(block: &ComplexArray, coil: usize, centers: &[(usize, usize)]) -> Vec<C64> {
    let (h, w) = (block.shape()[1], block.shape()[2]);
    centers
        .iter()
        .map(|&(y, x)| block.data()[(coil * h + y) * w + x])
        .collect()
}

/// Reshapes a weight column into `[nc, kh, kw]`.
pub(crate) fn weights_from_column(col: &[C64], nc: usize, geom: &KernelGeometry) -> ComplexArray {
    ComplexArray::new(vec![nc, geom.kh, geom.kw], col.to_vec()).expect("column length matches geometry")
}

/// Reference circular k-space correlation:
/// `out[t](y, x) = sum_{c,ty,tx} w_t[c,ty,tx] * in[c](y + dy, x + dx)` (indices mod size).
pub fn apply_kernels_direct(
    input: &ComplexArray,
    weights: &[ComplexArray],
    geom: &KernelGeometry,
) -> Result<ComplexArray> {
    let (nc, ny, nx) = check_input(input, weights, geom)?;
    let mut out = ComplexArray::zeros(&[weights.len(), ny, nx]);
    let src = input.data();
    for (t, w) in weights.iter().enumerate() {
        let plane = out.slab_view_mut(t);
        for c in 0..nc {
            for ty in 0..geom.kh {
                for tx in 0..geom.kw {
                    let wt = w.data()[geom.column(c, ty, tx)];
                    if wt == C64::new(0.0, 0.0) {
                        continue;
                    }
                    let (dy, dx) = geom.offset(ty, tx);
                    for y in 0..ny {
                        let sy = (y as isize + dy).rem_euclid(ny as isize) as usize;
                        let row = &src[(c * ny + sy) * nx..(c * ny + sy + 1) * nx];
                        for x in 0..nx {
                            let sx = (x as isize + dx).rem_euclid(nx as isize) as usize;
                            plane[y * nx + x] += wt * row[sx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_input(
    input: &ComplexArray,
    weights: &[ComplexArray],
    geom: &KernelGeometry,
) -> Result<(usize, usize, usize)> {
    if input.ndim() != 3 {
        return shape_err(format!("kernel input must be [nc, ny, nx], got {:?}", input.shape()));
    }
    let nc = input.shape()[0];
    for w in weights {
        if w.shape() != [nc, geom.kh, geom.kw] {
            return shape_err(format!(
                "kernel weights {:?} do not match {nc} input coils and {}x{} taps",
                w.shape(),
                geom.kh,
                geom.kw
            ));
        }
    }
    Ok((nc, input.shape()[1], input.shape()[2]))
}

/// A set of k-space kernels prepared for one grid size. Circular convolution
/// in k-space is a pixelwise product in the image domain, so application is
/// two FFT passes plus an `n_targets x n_sources` mix per pixel.
#[derive(Clone, Debug)]
pub struct KernelOperator {
    n_targets: usize,
    n_sources: usize,
    ny: usize,
    nx: usize,
    /// `[target][source][pixel]`
    image_weights: Vec<C64>,
}

impl KernelOperator {
    pub fn new(weights: &[ComplexArray], geom: &KernelGeometry, ny: usize, nx: usize) -> Result<Self> {
        geom.validate()?;
        let n_sources = match weights.first() {
            Some(w) => w.shape()[0],
            None => return arg_err("kernel operator needs at least one weight set"),
        };
        let probe = ComplexArray::zeros(&[n_sources, ny, nx]);
        check_input(&probe, weights, geom)?;
        let n = ny * nx;
        let (cy, cx) = ((ny / 2) as isize, (nx / 2) as isize);
        let scale = (n as f64).sqrt();
        let mut image_weights = Vec::with_capacity(weights.len() * n_sources * n);
        // place each tap at center - offset; a centered inverse FFT then
        // yields sum_taps w * exp(-i 2 pi offset . r / N)
        let mut grid = ComplexArray::zeros(&[n_sources, ny, nx]);
        for w in weights {
            grid.data_mut().iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            for c in 0..n_sources {
                for ty in 0..geom.kh {
                    for tx in 0..geom.kw {
                        let (dy, dx) = geom.offset(ty, tx);
                        let y = (cy - dy).rem_euclid(ny as isize) as usize;
                        let x = (cx - dx).rem_euclid(nx as isize) as usize;
                        grid.data_mut()[(c * ny + y) * nx + x] += w.data()[geom.column(c, ty, tx)];
                    }
                }
            }
            let img = ifft2c(&grid)?;
            image_weights.extend(img.data().iter().map(|v| v * scale));
        }
        Ok(Self {
            n_targets: weights.len(),
            n_sources,
            ny,
            nx,
            image_weights,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    /// Applies the kernels to k-space `[n_sources, ny, nx]`.
    pub fn apply(&self, input: &ComplexArray) -> Result<ComplexArray> {
        self.apply_image(&ifft2c(input)?).and_then(|img| fft2c(&img))
    }

    /// Image-domain form of [`KernelOperator::apply`]: mixes coil images
    /// pixelwise without the surrounding transforms.
    pub fn apply_image(&self, coil_images: &ComplexArray) -> Result<ComplexArray> {
        if coil_images.shape() != [self.n_sources, self.ny, self.nx] {
            return shape_err(format!(
                "kernel operator expects [{}, {}, {}], got {:?}",
                self.n_sources,
                self.ny,
                self.nx,
                coil_images.shape()
            ));
        }
        let n = self.ny * self.nx;
        let x = coil_images.data();
        let mut out = ComplexArray::zeros(&[self.n_targets, self.ny, self.nx]);
        for t in 0..self.n_targets {
            let plane = out.slab_view_mut(t);
            for c in 0..self.n_sources {
                let w = &self.image_weights[(t * self.n_sources + c) * n..(t * self.n_sources + c + 1) * n];
                let xc = &x[c * n..(c + 1) * n];
                for p in 0..n {
                    plane[p] += w[p] * xc[p];
                }
            }
        }
        Ok(out)
    }
}
