#![allow(dead_code)]

use rand::Rng;
use smsdiff::rng::{complex_normal, seeded};
use smsdiff::{ComplexArray, C64};

pub fn random_array(shape: &[usize], seed: u64) -> ComplexArray {
    let mut rng = seeded(seed);
    ComplexArray::from_fn(shape, |_| complex_normal(&mut rng))
}

pub fn random_real(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

pub fn nmse(test: &ComplexArray, reference: &ComplexArray) -> f64 {
    test.sub(reference).unwrap().norm_sqr() / reference.norm_sqr()
}

pub fn max_abs_diff(a: &ComplexArray, b: &ComplexArray) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Centered orthonormal 2-D DFT by direct summation over one plane.
pub fn direct_dft(plane: &[C64], ny: usize, nx: usize, inverse: bool) -> Vec<C64> {
    let sign = if inverse { 1.0 } else { -1.0 };
    let (cy, cx) = ((ny / 2) as f64, (nx / 2) as f64);
    let scale = 1.0 / ((ny * nx) as f64).sqrt();
    let mut out = vec![C64::new(0.0, 0.0); ny * nx];
    for ky in 0..ny {
        for kx in 0..nx {
            let mut acc = C64::new(0.0, 0.0);
            for y in 0..ny {
                for x in 0..nx {
                    let phase = sign
                        * 2.0
                        * std::f64::consts::PI
                        * ((ky as f64 - cy) * (y as f64 - cy) / ny as f64
                            + (kx as f64 - cx) * (x as f64 - cx) / nx as f64);
                    acc += plane[y * nx + x] * C64::from_polar(1.0, phase);
                }
            }
            out[ky * nx + kx] = acc * scale;
        }
    }
    out
}

/// Cyclic roll of every plane by `dy` rows.
pub fn roll_rows(arr: &ComplexArray, dy: usize) -> ComplexArray {
    let (planes, ny, nx) = arr.plane_dims().unwrap();
    let mut out = ComplexArray::zeros(arr.shape());
    for p in 0..planes {
        for y in 0..ny {
            for x in 0..nx {
                out.data_mut()[(p * ny + (y + dy) % ny) * nx + x] = arr.data()[(p * ny + y) * nx + x];
            }
        }
    }
    out
}
