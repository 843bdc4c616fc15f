//! Synthetic multi-slice, multi-coil ground truth and SMS acquisition.
//!
//! The acquisition model is: per-slice coil k-space, CAIPIRINHA phase ramp
//! along the phase-encode (row) axis, sum over slices, receiver noise, then
//! the uniform-plus-ACS line mask.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coils::CoilSensitivities;
use crate::error::{arg_err, shape_err};
use crate::fft::fft2c;
use crate::rng::{child_seed, complex_normal, seeded};
use crate::tensor::{ComplexArray, C64};
use crate::Result;

/// Which phase-encode lines were acquired.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingMask {
    pub ny: usize,
    pub pattern: Vec<bool>,
    pub accel: usize,
    pub acs_lines: usize,
}

impl SamplingMask {
    /// First row of the centered ACS block.
    pub fn acs_start(&self) -> usize {
        acs_start(self.ny, self.acs_lines)
    }

    pub fn acs_range(&self) -> std::ops::Range<usize> {
        let s = self.acs_start();
        s..s + self.acs_lines
    }

    pub fn n_acquired(&self) -> usize {
        self.pattern.iter().filter(|&&b| b).count()
    }

    pub fn is_acquired(&self, row: usize) -> bool {
        self.pattern[row]
    }

    /// The same acquisition without the ACS block (pure uniform lattice).
    pub fn uniform_only(&self) -> SamplingMask {
        SamplingMask {
            ny: self.ny,
            pattern: (0..self.ny).map(|r| r % self.accel == 0).collect(),
            accel: self.accel,
            acs_lines: 0,
        }
    }

    /// Zeroes every row (axis -2) that was not acquired.
    pub fn apply(&self, ksp: &ComplexArray) -> Result<ComplexArray> {
        let (_, ny, nx) = ksp.plane_dims()?;
        if ny != self.ny {
            return shape_err(format!("mask has {} lines, data has {ny}", self.ny));
        }
        let mut out = ksp.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            if !self.pattern[(i / nx) % ny] {
                *v = C64::new(0.0, 0.0);
            }
        }
        Ok(out)
    }
}

pub(crate) fn acs_start(ny: usize, acs_lines: usize) -> usize {
    (ny / 2).saturating_sub(acs_lines / 2)
}

/// Every `accel`-th line from line 0 plus a centered block of `acs_lines`.
pub fn make_uniform_mask(ny: usize, accel: usize, acs_lines: usize) -> Result<SamplingMask> {
    if ny == 0 {
        return arg_err("mask needs at least one line");
    }
    if accel == 0 || accel > ny {
        return arg_err(format!("acceleration {accel} outside 1..={ny}"));
    }
    if acs_lines > ny {
        return arg_err(format!("{acs_lines} ACS lines exceed {ny} lines"));
    }
    let start = acs_start(ny, acs_lines);
    let pattern = (0..ny)
        .map(|r| r % accel == 0 || (start..start + acs_lines).contains(&r))
        .collect();
    Ok(SamplingMask {
        ny,
        pattern,
        accel,
        acs_lines,
    })
}

fn default_mb() -> usize {
    3
}
fn default_caipi() -> f64 {
    1.0 / 3.0
}
fn default_accel() -> usize {
    3
}
fn default_acs() -> usize {
    32
}

/// SMS acquisition parameters. The defaults are MB=3 with FOV/3 shift per
/// slice step (2/3 FOV for the last slice), R=3 and 32 ACS lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSpec {
    #[serde(default = "default_mb")]
    pub mb: usize,
    /// Shift per slice step, in units of FOV.
    #[serde(default = "default_caipi")]
    pub caipi_fraction: f64,
    #[serde(default = "default_accel")]
    pub accel: usize,
    #[serde(default = "default_acs")]
    pub acs_lines: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            mb: default_mb(),
            caipi_fraction: default_caipi(),
            accel: default_accel(),
            acs_lines: default_acs(),
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl AcquisitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mb == 0 {
            return arg_err("multiband factor must be at least 1");
        }
        if !(0.0..1.0).contains(&self.caipi_fraction) {
            return arg_err(format!("caipi_fraction {} outside [0, 1)", self.caipi_fraction));
        }
        if self.accel == 0 {
            return arg_err("acceleration must be at least 1");
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return arg_err(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        Ok(())
    }

    /// Image-domain shift of slice `i` in rows.
    pub fn shift_rows(&self, slice_idx: usize, ny: usize) -> f64 {
        slice_idx as f64 * self.caipi_fraction * ny as f64
    }
}

/// Multiplies row `r` of every plane by `exp(-i 2 pi cycles (first_k + r))`.
pub(crate) fn ky_phase_ramp(arr: &ComplexArray, cycles: f64, first_k: i64) -> Result<ComplexArray> {
    let (_, ny, nx) = arr.plane_dims()?;
    let ramp: Vec<C64> = (0..ny)
        .map(|r| {
            // reduce the phase exactly before converting to radians
            let turns = (cycles * (first_k + r as i64) as f64).rem_euclid(1.0);
            C64::from_polar(1.0, -2.0 * PI * turns)
        })
        .collect();
    let mut out = arr.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v *= ramp[(i / nx) % ny];
    }
    Ok(out)
}

/// Centered frequency index of row 0 of a full `ny`-line grid.
pub(crate) fn first_k(ny: usize) -> i64 {
    -((ny / 2) as i64)
}

fn check_slice(slice_idx: usize, spec: &AcquisitionSpec) -> Result<()> {
    if slice_idx >= spec.mb {
        return arg_err(format!("slice index {slice_idx} out of range for MB={}", spec.mb));
    }
    Ok(())
}

/// CAIPIRINHA phase ramp for slice `slice_idx` on full-grid k-space
/// `[..., ny, nx]`: a cyclic image shift of `slice_idx * caipi_fraction` FOV
/// along rows. `invert` undoes it.
pub fn caipi_shift(
    ksp: &ComplexArray,
    slice_idx: usize,
    spec: &AcquisitionSpec,
    invert: bool,
) -> Result<ComplexArray> {
    check_slice(slice_idx, spec)?;
    let (_, ny, _) = ksp.plane_dims()?;
    caipi_shift_block(ksp, slice_idx, spec, invert, ny, 0)
}

/// As [`caipi_shift`] for a block of rows starting at `row_offset` of a full
/// `full_ny` grid (used for ACS blocks).
pub fn caipi_shift_block(
    block: &ComplexArray,
    slice_idx: usize,
    spec: &AcquisitionSpec,
    invert: bool,
    full_ny: usize,
    row_offset: usize,
) -> Result<ComplexArray> {
    check_slice(slice_idx, spec)?;
    let mut cycles = slice_idx as f64 * spec.caipi_fraction;
    if invert {
        cycles = -cycles;
    }
    if cycles == 0.0 {
        return Ok(block.clone());
    }
    ky_phase_ramp(block, cycles, first_k(full_ny) + row_offset as i64)
}

/// Multiband encoding: CAIPIRINHA-shift each slice and sum.
/// `slices` is `[mb, ...]`; the output drops the leading axis.
pub fn collapse_sms(slices: &ComplexArray, spec: &AcquisitionSpec) -> Result<ComplexArray> {
    let (_, ny, _) = slices.plane_dims()?;
    collapse_block(slices, spec, ny, 0)
}

pub(crate) fn collapse_block(
    slices: &ComplexArray,
    spec: &AcquisitionSpec,
    full_ny: usize,
    row_offset: usize,
) -> Result<ComplexArray> {
    if slices.ndim() < 3 || slices.shape()[0] != spec.mb {
        return shape_err(format!(
            "expected {} slices along axis 0, got shape {:?}",
            spec.mb,
            slices.shape()
        ));
    }
    let mut out = ComplexArray::zeros(&slices.shape()[1..]);
    for s in 0..spec.mb {
        let shifted = caipi_shift_block(&slices.slab(s)?, s, spec, false, full_ny, row_offset)?;
        out.axpy(C64::new(1.0, 0.0), &shifted)?;
    }
    Ok(out)
}

/// Output of [`acquire`].
#[derive(Clone, Debug)]
pub struct Acquisition {
    /// Masked collapsed k-space `[nc, ny, nx]`.
    pub sms_ksp: ComplexArray,
    /// Fully sampled, unshifted central rows per slice `[mb, nc, acs, nx]`.
    pub acs: ComplexArray,
    pub mask: SamplingMask,
}

/// Simulates the SMS acquisition of `truth` (`[mb, ny, nx]` images) with one
/// set of coil maps per slice.
pub fn acquire(
    truth: &ComplexArray,
    maps: &[CoilSensitivities],
    spec: &AcquisitionSpec,
) -> Result<Acquisition> {
    spec.validate()?;
    if truth.ndim() != 3 || truth.shape()[0] != spec.mb || maps.len() != spec.mb {
        return shape_err(format!(
            "acquire: truth {:?} and {} map sets for MB={}",
            truth.shape(),
            maps.len(),
            spec.mb
        ));
    }
    let (ny, nx) = (truth.shape()[1], truth.shape()[2]);
    let nc = maps[0].n_coils();
    if maps.iter().any(|m| m.dims() != (nc, ny, nx)) {
        return shape_err("acquire: coil maps do not match truth images");
    }
    let mask = make_uniform_mask(ny, spec.accel, spec.acs_lines)?;
    let mut per_slice = Vec::with_capacity(spec.mb);
    for (s, m) in maps.iter().enumerate() {
        per_slice.push(fft2c(&m.expand(&truth.slab(s)?)?)?);
    }
    let stacked = ComplexArray::stack(&per_slice)?;
    let acs = extract_rows(&stacked, mask.acs_range())?;
    let mut collapsed = collapse_sms(&stacked, spec)?;
    if spec.noise_sigma > 0.0 {
        let mut rng = seeded(spec.seed);
        for v in collapsed.data_mut() {
            *v += complex_normal(&mut rng) * spec.noise_sigma;
        }
    }
    Ok(Acquisition {
        sms_ksp: mask.apply(&collapsed)?,
        acs,
        mask,
    })
}

/// Copies rows `rows` (axis -2) out of every plane.
pub fn extract_rows(arr: &ComplexArray, rows: std::ops::Range<usize>) -> Result<ComplexArray> {
    let (planes, ny, nx) = arr.plane_dims()?;
    if rows.end > ny || rows.is_empty() {
        return shape_err(format!("rows {rows:?} out of range for {ny} lines"));
    }
    let h = rows.len();
    let mut data = Vec::with_capacity(planes * h * nx);
    for p in 0..planes {
        let base = p * ny * nx;
        data.extend_from_slice(&arr.data()[base + rows.start * nx..base + rows.end * nx]);
    }
    let mut shape = arr.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = h;
    ComplexArray::new(shape, data)
}

/// Writes a row block back into zero k-space of `ny` lines at `row_offset`.
pub fn embed_rows(block: &ComplexArray, ny: usize, row_offset: usize) -> Result<ComplexArray> {
    let (planes, h, nx) = block.plane_dims()?;
    if row_offset + h > ny {
        return shape_err(format!("block of {h} rows at {row_offset} exceeds {ny} lines"));
    }
    let mut shape = block.shape().to_vec();
    let n = shape.len();
    shape[n - 2] = ny;
    let mut out = ComplexArray::zeros(&shape);
    for p in 0..planes {
        let src = &block.data()[p * h * nx..(p + 1) * h * nx];
        let dst = p * ny * nx + row_offset * nx;
        out.data_mut()[dst..dst + h * nx].copy_from_slice(src);
    }
    Ok(out)
}

fn smooth_step(x: f64) -> f64 {
    // logistic edge
    1.0 / (1.0 + (-x).exp())
}

struct Ellipse {
    cy: f64,
    cx: f64,
    ay: f64,
    ax: f64,
    angle: f64,
}

impl Ellipse {
    fn random<R: Rng>(rng: &mut R, center_spread: f64, size: (f64, f64)) -> Self {
        Ellipse {
            cy: rng.random_range(-center_spread..center_spread),
            cx: rng.random_range(-center_spread..center_spread),
            ay: rng.random_range(size.0..size.1),
            ax: rng.random_range(size.0..size.1),
            angle: rng.random_range(0.0..PI),
        }
    }

    /// Normalized elliptical radius of point `(y, x)` in FOV-relative units.
    fn radius(&self, y: f64, x: f64) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dy = y - self.cy;
        let dx = x - self.cx;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        ((u / self.ax).powi(2) + (v / self.ay).powi(2)).sqrt()
    }

    /// Soft indicator with an edge roughly `edge` FOV units wide.
    fn soft(&self, y: f64, x: f64, edge: f64) -> f64 {
        let scale = self.ax.min(self.ay) / edge;
        smooth_step((1.0 - self.radius(y, x)) * scale)
    }
}

/// Smooth random head-like phantoms, `[n_slices, ny, nx]`, magnitude in
/// `[0, 1]` and slowly varying phase. Each slice gets its own layout.
pub fn make_phantom(ny: usize, nx: usize, n_slices: usize, seed: u64) -> Result<ComplexArray> {
    if ny < 8 || nx < 8 {
        return arg_err(format!("phantom needs at least 8x8, got {ny}x{nx}"));
    }
    if n_slices == 0 {
        return arg_err("phantom needs at least one slice");
    }
    let mut slices = Vec::with_capacity(n_slices);
    for s in 0..n_slices {
        slices.push(phantom_slice(ny, nx, child_seed(seed, s as u64)));
    }
    ComplexArray::stack(&slices)
}

fn phantom_slice(ny: usize, nx: usize, seed: u64) -> ComplexArray {
    let mut rng = seeded(seed);
    let edge = 1.5 / ny.min(nx) as f64;
    let head = Ellipse {
        cy: rng.random_range(-0.03..0.03),
        cx: rng.random_range(-0.03..0.03),
        ay: rng.random_range(0.36..0.44),
        ax: rng.random_range(0.30..0.38),
        angle: rng.random_range(-0.2..0.2) + PI / 2.0,
    };
    let n_bright = rng.random_range(3..6);
    let n_dark = rng.random_range(2..5);
    let bright: Vec<(Ellipse, f64)> = (0..n_bright)
        .map(|_| (Ellipse::random(&mut rng, 0.2, (0.04, 0.16)), rng.random_range(0.2..0.6)))
        .collect();
    let dark: Vec<(Ellipse, f64)> = (0..n_dark)
        .map(|_| (Ellipse::random(&mut rng, 0.2, (0.03, 0.12)), rng.random_range(0.3..0.75)))
        .collect();
    // gaussian texture blobs
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-0.25..0.25),
                rng.random_range(-0.25..0.25),
                rng.random_range(0.03..0.1),
                rng.random_range(-0.15..0.2),
            )
        })
        .collect();
    let phase: [f64; 4] = [
        rng.random_range(-PI..PI),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.5..1.5),
    ];

    let mut mag = vec![0.0; ny * nx];
    let mut phi = vec![0.0; ny * nx];
    for y in 0..ny {
        let fy = (y as f64 - (ny / 2) as f64) / ny as f64;
        for x in 0..nx {
            let fx = (x as f64 - (nx / 2) as f64) / nx as f64;
            let mut v = 0.45;
            for (e, a) in &bright {
                v += a * e.soft(fy, fx, edge);
            }
            for (cy, cx, w, a) in &blobs {
                v += a * (-((fy - cy).powi(2) + (fx - cx).powi(2)) / (2.0 * w * w)).exp();
            }
            for (e, d) in &dark {
                v *= 1.0 - d * e.soft(fy, fx, edge);
            }
            mag[y * nx + x] = v.max(0.0) * head.soft(fy, fx, edge);
            phi[y * nx + x] =
                phase[0] + phase[1] * fx + phase[2] * fy + phase[3] * (fx * fx + fy * fy);
        }
    }
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    ComplexArray::new(
        vec![ny, nx],
        mag.iter()
            .zip(&phi)
            .map(|(&m, &p)| C64::from_polar(m / peak, p))
            .collect(),
    )
    .expect("shape is consistent")
}

/// Smooth synthetic receive coils on a ring around the FOV, evaluated in the
/// plane `z = 0`. Output maps are pixelwise normalized.
pub fn simulate_coils(ny: usize, nx: usize, nc: usize, seed: u64) -> Result<CoilSensitivities> {
    simulate_coils_at(ny, nx, nc, seed, 0.0)
}

/// As [`simulate_coils`] in the plane at height `z` (FOV units). Coils sit
/// alternately above and below `z = 0`, so different slices see different maps.
pub fn simulate_coils_at(
    ny: usize,
    nx: usize,
    nc: usize,
    seed: u64,
    z: f64,
) -> Result<CoilSensitivities> {
    if nc == 0 {
        return arg_err("need at least one coil");
    }
    if ny == 0 || nx == 0 {
        return arg_err("empty grid");
    }
    if nc == 1 {
        return CoilSensitivities::new(ComplexArray::filled(&[1, ny, nx], C64::new(1.0, 0.0)));
    }
    let mut rng = seeded(seed);
    let mut raw = ComplexArray::zeros(&[nc, ny, nx]);
    let n = ny * nx;
    for c in 0..nc {
        let theta = 2.0 * PI * c as f64 / nc as f64 + rng.random_range(-0.2..0.2);
        let ring = rng.random_range(0.6..0.7);
        let (py, px) = (ring * theta.sin(), ring * theta.cos());
        let pz = if c % 2 == 0 { 0.25 } else { -0.25 } + rng.random_range(-0.05..0.05);
        let width = rng.random_range(0.45..0.6);
        let phase0 = rng.random_range(-PI..PI);
        let tilt = rng.random_range(0.5..1.5);
        let plane = raw.slab_view_mut(c);
        for y in 0..ny {
            let fy = (y as f64 - (ny / 2) as f64) / ny as f64;
            for x in 0..nx {
                let fx = (x as f64 - (nx / 2) as f64) / nx as f64;
                let d2 = (fy - py).powi(2) + (fx - px).powi(2) + (z - pz).powi(2);
                let amp = (-d2 / (2.0 * width * width)).exp();
                // phase winds slowly with the direction to the coil
                let ph = phase0 + tilt * ((fy - py) * py + (fx - px) * px);
                plane[y * nx + x] = C64::from_polar(amp, ph);
            }
        }
    }
    debug_assert_eq!(raw.len(), nc * n);
    CoilSensitivities::normalized(raw, 0.0)
}

/// Coil maps for each slice of an SMS stack; slices are spread over
/// `[-slice_gap, slice_gap]` in z.
pub fn simulate_slice_coils(
    ny: usize,
    nx: usize,
    nc: usize,
    mb: usize,
    seed: u64,
    slice_gap: f64,
) -> Result<Vec<CoilSensitivities>> {
    (0..mb)
        .map(|s| {
            let z = if mb == 1 {
                0.0
            } else {
                slice_gap * (2.0 * s as f64 / (mb - 1) as f64 - 1.0)
            };
            simulate_coils_at(ny, nx, nc, seed, z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::ifft2c;

    fn roll_rows(img: &ComplexArray, d: usize) -> ComplexArray {
        let (_, ny, nx) = img.plane_dims().unwrap();
        let mut out = img.clone();
        let src = img.data();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let p = i / (ny * nx);
            let y = (i / nx) % ny;
            let x = i % nx;
            let sy = (y + ny - d % ny) % ny;
            *v = src[p * ny * nx + sy * nx + x];
        }
        out
    }

    #[test]
    fn uniform_mask_examples() {
        let m = make_uniform_mask(8, 1, 0).unwrap();
        assert!(m.pattern.iter().all(|&b| b));

        let m = make_uniform_mask(12, 3, 0).unwrap();
        let on: Vec<usize> = (0..12).filter(|&r| m.pattern[r]).collect();
        assert_eq!(on, vec![0, 3, 6, 9]);

        let m = make_uniform_mask(320, 4, 32).unwrap();
        assert_eq!(m.acs_range(), 144..176);
        let uniform = (0..320).filter(|r| r % 4 == 0).count();
        assert_eq!(uniform, 80);
        for r in 0..320 {
            assert_eq!(m.pattern[r], r % 4 == 0 || (144..176).contains(&r));
        }
        assert_eq!(m.n_acquired(), 80 + 24);
    }

    #[test]
    fn mask_rejects_bad_arguments() {
        assert!(make_uniform_mask(8, 2, 9).is_err());
        assert!(make_uniform_mask(8, 0, 0).is_err());
        assert!(make_uniform_mask(8, 9, 0).is_err());
    }

    #[test]
    fn mask_is_idempotent() {
        let m = make_uniform_mask(10, 3, 2).unwrap();
        let mut rng = seeded(3);
        let x = ComplexArray::from_fn(&[2, 10, 4], |_| complex_normal(&mut rng));
        let once = m.apply(&x).unwrap();
        assert_eq!(m.apply(&once).unwrap(), once);
    }

    #[test]
    fn caipi_zero_slice_is_identity() {
        let spec = AcquisitionSpec::default();
        let mut rng = seeded(1);
        let k = ComplexArray::from_fn(&[2, 9, 5], |_| complex_normal(&mut rng));
        assert_eq!(caipi_shift(&k, 0, &spec, false).unwrap(), k);
    }

    #[test]
    fn caipi_matches_image_roll() {
        let spec = AcquisitionSpec {
            caipi_fraction: 1.0 / 3.0,
            ..Default::default()
        };
        let mut rng = seeded(2);
        let img = ComplexArray::from_fn(&[2, 9, 6], |_| complex_normal(&mut rng));
        let k = fft2c(&img).unwrap();
        let shifted = ifft2c(&caipi_shift(&k, 1, &spec, false).unwrap()).unwrap();
        assert!(shifted.rel_err(&roll_rows(&img, 3)).unwrap() < 1e-12);
        let shifted2 = ifft2c(&caipi_shift(&k, 2, &spec, false).unwrap()).unwrap();
        assert!(shifted2.rel_err(&roll_rows(&img, 6)).unwrap() < 1e-12);
    }

    #[test]
    fn caipi_inverse_roundtrip() {
        let spec = AcquisitionSpec {
            mb: 4,
            caipi_fraction: 0.37,
            ..Default::default()
        };
        let mut rng = seeded(4);
        let k = ComplexArray::from_fn(&[3, 10, 7], |_| complex_normal(&mut rng));
        let fwd = caipi_shift(&k, 3, &spec, false).unwrap();
        let back = caipi_shift(&fwd, 3, &spec, true).unwrap();
        assert!(back.rel_err(&k).unwrap() < 1e-12);
        assert!(caipi_shift(&k, 4, &spec, false).is_err());
    }

    #[test]
    fn collapse_examples() {
        let mut rng = seeded(5);
        let x = ComplexArray::from_fn(&[2, 6, 6], |_| complex_normal(&mut rng));
        let spec1 = AcquisitionSpec { mb: 1, ..Default::default() };
        let one = ComplexArray::stack(std::slice::from_ref(&x)).unwrap();
        assert_eq!(collapse_sms(&one, &spec1).unwrap(), x);

        let spec3 = AcquisitionSpec::default();
        let z = ComplexArray::zeros(&[2, 6, 6]);
        let three = ComplexArray::stack(&[x.clone(), z.clone(), z]).unwrap();
        assert!(collapse_sms(&three, &spec3).unwrap().rel_err(&x).unwrap() < 1e-15);

        assert!(collapse_sms(&one, &spec3).is_err());
    }

    #[test]
    fn collapse_matches_explicit_sum() {
        let spec = AcquisitionSpec::default();
        let mut rng = seeded(6);
        let s = ComplexArray::from_fn(&[3, 2, 12, 5], |_| complex_normal(&mut rng));
        let got = collapse_sms(&s, &spec).unwrap();
        // explicit per-sample oracle
        let (nc, ny, nx) = (2, 12, 5);
        for c in 0..nc {
            for y in 0..ny {
                let k = y as f64 - (ny / 2) as f64;
                for x in 0..nx {
                    let mut acc = C64::new(0.0, 0.0);
                    for sl in 0..3 {
                        let ph = -2.0 * PI * k * sl as f64 / 3.0;
                        acc += s.data()[((sl * nc + c) * ny + y) * nx + x] * C64::from_polar(1.0, ph);
                    }
                    let g = got.data()[(c * ny + y) * nx + x];
                    assert!((g - acc).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn phantom_properties() {
        let p = make_phantom(8, 8, 1, 7).unwrap();
        assert_eq!(p.shape(), &[1, 8, 8]);
        assert!(p.abs().max() <= 1.0 + 1e-15);
        let a = make_phantom(32, 32, 3, 0).unwrap();
        let b = make_phantom(32, 32, 3, 0).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.slab(0).unwrap(), a.slab(1).unwrap());
        assert!(make_phantom(4, 8, 1, 0).is_err());
    }

    #[test]
    fn coils_are_normalized_and_deterministic() {
        let one = simulate_coils(16, 16, 1, 3).unwrap();
        assert!(one.maps().data().iter().all(|v| *v == C64::new(1.0, 0.0)));
        let m = simulate_coils(64, 64, 8, 3).unwrap();
        for e in m.energy().data() {
            assert!((e - 1.0).abs() < 1e-12);
        }
        assert_eq!(m, simulate_coils(64, 64, 8, 3).unwrap());
    }

    #[test]
    fn coils_are_smooth() {
        let m = simulate_coils(64, 64, 8, 11).unwrap();
        let k = fft2c(m.maps()).unwrap();
        let (ny, nx) = (64usize, 64usize);
        let mut total = 0.0;
        let mut high = 0.0;
        for (i, v) in k.data().iter().enumerate() {
            let ky = ((i / nx) % ny) as i64 - 32;
            let kx = (i % nx) as i64 - 32;
            let e = v.norm_sqr();
            total += e;
            if ky.abs() > 16 || kx.abs() > 16 {
                high += e;
            }
        }
        assert!(high / total < 0.01, "high-band fraction {}", high / total);
    }

    #[test]
    fn acquire_identity_case() {
        let truth = make_phantom(16, 16, 1, 1).unwrap();
        let maps = vec![simulate_coils(16, 16, 4, 2).unwrap()];
        let spec = AcquisitionSpec {
            mb: 1,
            accel: 1,
            acs_lines: 4,
            ..Default::default()
        };
        let acq = acquire(&truth, &maps, &spec).unwrap();
        let want = fft2c(&maps[0].expand(&truth.slab(0).unwrap()).unwrap()).unwrap();
        assert_eq!(acq.sms_ksp, want);
        assert_eq!(acq.acs.shape(), &[1, 4, 4, 16]);
        assert_eq!(acq.acs.slab(0).unwrap(), extract_rows(&want, 6..10).unwrap());
    }

    #[test]
    fn acquire_masks_unacquired_lines() {
        let truth = make_phantom(24, 16, 3, 1).unwrap();
        let maps = simulate_slice_coils(24, 16, 4, 3, 2, 0.1).unwrap();
        let spec = AcquisitionSpec {
            accel: 3,
            acs_lines: 6,
            noise_sigma: 0.01,
            seed: 9,
            ..Default::default()
        };
        let acq = acquire(&truth, &maps, &spec).unwrap();
        for (i, v) in acq.sms_ksp.data().iter().enumerate() {
            let row = (i / 16) % 24;
            if !acq.mask.pattern[row] {
                assert_eq!(*v, C64::new(0.0, 0.0));
            }
        }
    }
}
