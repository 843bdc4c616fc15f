//! Row-major complex and real arrays.
//!
//! `ComplexArray` is the one container used for images and k-space alike. The
//! last two axes are always `(ny, nx)`; leading axes index coils and slices.

use num_complex::Complex64;

use crate::error::{shape_err, Result};

pub type C64 = Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexArray {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl ComplexArray {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.contains(&0) {
            return shape_err(format!("dimension sizes must be positive, got {shape:?}"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return shape_err(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, C64::new(0.0, 0.0))
    }

    pub fn filled(shape: &[usize], value: C64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> C64) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// Builds an array from real values (imaginary parts zero).
    pub fn from_real(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(
            shape.to_vec(),
            values.iter().map(|&v| C64::new(v, 0.0)).collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    /// `(planes, ny, nx)` where `planes` is the product of the leading axes.
    pub fn plane_dims(&self) -> Result<(usize, usize, usize)> {
        if self.ndim() < 2 {
            return shape_err(format!(
                "need at least 2 dimensions, got shape {:?}",
                self.shape
            ));
        }
        let n = self.ndim();
        let ny = self.shape[n - 2];
        let nx = self.shape[n - 1];
        Ok((self.len() / (ny * nx), ny, nx))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Sub-array `i` along the first axis.
    pub fn slab(&self, i: usize) -> Result<ComplexArray> {
        let (n0, rest) = self.split_first()?;
        if i >= n0 {
            return shape_err(format!("index {i} out of range for axis of length {n0}"));
        }
        let sz: usize = rest.iter().product();
        Ok(Self {
            shape: rest.to_vec(),
            data: self.data[i * sz..(i + 1) * sz].to_vec(),
        })
    }

    pub fn slab_view(&self, i: usize) -> &[C64] {
        let sz: usize = self.shape[1..].iter().product();
        &self.data[i * sz..(i + 1) * sz]
    }

    pub fn slab_view_mut(&mut self, i: usize) -> &mut [C64] {
        let sz: usize = self.shape[1..].iter().product();
        &mut self.data[i * sz..(i + 1) * sz]
    }

    pub fn set_slab(&mut self, i: usize, value: &ComplexArray) -> Result<()> {
        let (n0, rest) = self.split_first()?;
        if i >= n0 || rest != value.shape() {
            return shape_err(format!(
                "cannot place array of shape {:?} at index {i} of {:?}",
                value.shape(),
                self.shape
            ));
        }
        self.slab_view_mut(i).copy_from_slice(&value.data);
        Ok(())
    }

    /// Stacks equally shaped arrays along a new leading axis.
    pub fn stack(items: &[ComplexArray]) -> Result<ComplexArray> {
        let first = match items.first() {
            Some(f) => f,
            None => return shape_err("cannot stack zero arrays"),
        };
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * items.len());
        for it in items {
            if it.shape() != first.shape() {
                return shape_err(format!(
                    "stack: shape {:?} differs from {:?}",
                    it.shape(),
                    first.shape()
                ));
            }
            data.extend_from_slice(&it.data);
        }
        Ok(Self { shape, data })
    }

    pub fn unstack(&self) -> Result<Vec<ComplexArray>> {
        let (n0, _) = self.split_first()?;
        (0..n0).map(|i| self.slab(i)).collect()
    }

    fn split_first(&self) -> Result<(usize, &[usize])> {
        match self.shape.split_first() {
            Some((&n0, rest)) if !rest.is_empty() => Ok((n0, rest)),
            _ => shape_err(format!("cannot index leading axis of {:?}", self.shape)),
        }
    }

    fn check_same(&self, other: &ComplexArray, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return shape_err(format!(
                "{op}: shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            ));
        }
        Ok(())
    }

    fn zip_with(&self, other: &ComplexArray, op: &str, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        self.check_same(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &ComplexArray) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexArray) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &ComplexArray) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: C64, other: &ComplexArray) -> Result<()> {
        self.check_same(other, "axpy")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    /// Multiplies every `(ny, nx)` plane by a real mask of that shape.
    pub fn mul_plane_mask(&self, mask: &RealArray) -> Result<Self> {
        let (_, ny, nx) = self.plane_dims()?;
        if mask.shape() != [ny, nx] {
            return shape_err(format!(
                "plane mask {:?} does not match planes of {:?}",
                mask.shape(),
                self.shape
            ));
        }
        let m = mask.data();
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .enumerate()
                .map(|(i, &v)| v * m[i % (ny * nx)])
                .collect(),
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// l2 norm of the flattened array.
    pub fn norm2(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Inner product `sum(conj(self) * other)`.
    pub fn dot(&self, other: &ComplexArray) -> Result<C64> {
        self.check_same(other, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn abs(&self) -> RealArray {
        RealArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.norm()).collect(),
        }
    }

    /// Relative l2 distance `|self - other| / |other|`.
    pub fn rel_err(&self, reference: &ComplexArray) -> Result<f64> {
        Ok(self.sub(reference)?.norm2() / reference.norm2())
    }
}

/// Row-major real array; used for masks, magnitude images and metric inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RealArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.contains(&0) {
            return shape_err(format!(
                "shape {shape:?} incompatible with {} elements",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn slab(&self, i: usize) -> Result<RealArray> {
        if self.shape.len() < 2 || i >= self.shape[0] {
            return shape_err(format!("cannot take slab {i} of {:?}", self.shape));
        }
        let sz: usize = self.shape[1..].iter().product();
        Ok(Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * sz..(i + 1) * sz].to_vec(),
        })
    }

    pub fn to_complex(&self) -> ComplexArray {
        ComplexArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| C64::new(v, 0.0)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn hadamard_with_ones_is_identity() {
        let x = ComplexArray::from_fn(&[3, 4], |i| c(i as f64, -(i as f64) * 0.5));
        let ones = ComplexArray::filled(&[3, 4], c(1.0, 0.0));
        assert_eq!(x.hadamard(&ones).unwrap(), x);
    }

    #[test]
    fn hadamard_hand_values() {
        let a = ComplexArray::new(vec![2, 2], vec![c(1., 2.), c(0., 1.), c(3., 0.), c(-1., -1.)]).unwrap();
        let b = ComplexArray::new(vec![2, 2], vec![c(2., 0.), c(0., 1.), c(1., 1.), c(1., -1.)]).unwrap();
        // (1+2i)*2 = 2+4i; i*i = -1; 3*(1+i) = 3+3i; (-1-i)(1-i) = -1+i-i+i^2 = -2
        let want = [c(2., 4.), c(-1., 0.), c(3., 3.), c(-2., 0.)];
        assert_eq!(a.hadamard(&b).unwrap().data(), &want[..]);
    }

    #[test]
    fn norm_of_zero_is_zero() {
        assert_eq!(ComplexArray::zeros(&[5, 7]).norm2(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = ComplexArray::zeros(&[2, 3]);
        let b = ComplexArray::zeros(&[3, 2]);
        assert!(matches!(a.add(&b), Err(crate::Error::Shape(_))));
        assert!(ComplexArray::new(vec![2, 2], vec![c(0., 0.); 3]).is_err());
        assert!(ComplexArray::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn stack_and_slab() {
        let a = ComplexArray::filled(&[2, 2], c(1., 0.));
        let b = ComplexArray::filled(&[2, 2], c(0., 1.));
        let s = ComplexArray::stack(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.slab(1).unwrap(), b);
        assert_eq!(s.unstack().unwrap(), vec![a, b]);
    }
}
