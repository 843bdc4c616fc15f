//! Centered, orthonormal 2-D Fourier transforms over the last two axes.
//!
//! DC sits at `(ny / 2, nx / 2)` (floor division) in k-space and both
//! directions are scaled by `1 / sqrt(ny * nx)`, so the pair is unitary.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use crate::tensor::{ComplexArray, C64};
use crate::Result;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Forward centered transform (image to k-space).
pub fn fft2c(img: &ComplexArray) -> Result<ComplexArray> {
    transform(img, FftDirection::Forward)
}

/// Inverse centered transform (k-space to image).
pub fn ifft2c(ksp: &ComplexArray) -> Result<ComplexArray> {
    transform(ksp, FftDirection::Inverse)
}

fn transform(input: &ComplexArray, direction: FftDirection) -> Result<ComplexArray> {
    let (_, ny, nx) = input.plane_dims()?;
    let row_fft = plan(nx, direction);
    let col_fft = plan(ny, direction);
    let scale = 1.0 / ((ny * nx) as f64).sqrt();
    let (hy, hx) = (ny / 2, nx / 2);

    let mut out = input.clone();
    let mut buf = vec![C64::new(0.0, 0.0); ny * nx];
    let mut tbuf = vec![C64::new(0.0, 0.0); ny * nx];
    let mut scratch = vec![
        C64::new(0.0, 0.0);
        row_fft
            .get_inplace_scratch_len()
            .max(col_fft.get_inplace_scratch_len())
    ];

    for plane in out.data_mut().chunks_mut(ny * nx) {
        // ifftshift on the way in
        for y in 0..ny {
            let sy = (y + hy) % ny;
            for x in 0..nx {
                buf[y * nx + x] = plane[sy * nx + (x + hx) % nx];
            }
        }
        row_fft.process_with_scratch(&mut buf, &mut scratch);
        for y in 0..ny {
            for x in 0..nx {
                tbuf[x * ny + y] = buf[y * nx + x];
            }
        }
        col_fft.process_with_scratch(&mut tbuf, &mut scratch);
        // fftshift on the way out
        for y in 0..ny {
            let sy = (y + ny - hy) % ny;
            for x in 0..nx {
                let sx = (x + nx - hx) % nx;
                plane[y * nx + x] = tbuf[sx * ny + sy] * scale;
            }
        }
    }
    Ok(out)
}
