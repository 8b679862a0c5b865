//! Cartesian k-t sampling: shear-grid masks, retrospective undersampling and
//! zero-filled reconstruction.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft2c, ifft2c};
use crate::volume::{ComplexVolume, Domain};

/// Acquisition protocol for a shear-grid pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AcquisitionSpec {
    /// Acceleration factor R: lattice spacing along the phase-encode axis.
    pub accel: usize,
    /// Central phase-encode lines sampled in every frame.
    pub n_center: usize,
    /// Nominal phase-encode count the acceleration is quoted against.
    pub pe_lines: usize,
    /// Lattice shift per frame.
    pub shear_step: usize,
}

impl Default for AcquisitionSpec {
    fn default() -> Self {
        Self {
            accel: 1,
            n_center: 4,
            pe_lines: 190,
            shear_step: 1,
        }
    }
}

impl AcquisitionSpec {
    pub fn new(accel: usize, n_center: usize) -> Self {
        Self {
            accel,
            n_center,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.accel == 0 {
            return Err(Error::InvalidSpec("accel must be >= 1".into()));
        }
        if self.n_center > self.pe_lines {
            return Err(Error::InvalidSpec(format!(
                "n_center {} exceeds pe_lines {}",
                self.n_center, self.pe_lines
            )));
        }
        Ok(())
    }
}

/// Binary phase-encode mask indexed `[t][x]`; every readout row shares it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplingMask {
    t_frames: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl SamplingMask {
    pub fn from_bits(t_frames: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if t_frames == 0 || cols == 0 {
            return Err(Error::EmptyVolume);
        }
        if bits.len() != t_frames * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} mask bits for {}x{}",
                bits.len(),
                t_frames,
                cols
            )));
        }
        Ok(Self { t_frames, cols, bits })
    }

    /// Every column sampled in every frame.
    pub fn full(t_frames: usize, cols: usize) -> Result<Self> {
        Self::from_bits(t_frames, cols, vec![true; t_frames * cols])
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_sampled(&self, t: usize, x: usize) -> bool {
        self.bits[t * self.cols + x]
    }

    pub fn sampled_columns(&self, t: usize) -> Vec<usize> {
        (0..self.cols).filter(|&x| self.is_sampled(t, x)).collect()
    }

    /// Number of frames in which column `x` is sampled.
    pub fn column_count(&self, x: usize) -> usize {
        (0..self.t_frames).filter(|&t| self.is_sampled(t, x)).count()
    }

    pub fn total_sampled(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// `cols · frames / sampled`, counting the central lines.
    pub fn effective_acceleration(&self) -> f64 {
        (self.cols * self.t_frames) as f64 / self.total_sampled().max(1) as f64
    }
}

/// Columns always acquired: `n_center` lines centred on `cols / 2`.
pub fn center_columns(n_center: usize, cols: usize) -> std::ops::Range<usize> {
    let start = (cols / 2).saturating_sub(n_center / 2);
    start..(start + n_center).min(cols)
}

/// Shear-grid mask: frame `t` samples `{x : (x - t·shear_step) mod accel = 0}`
/// plus the central lines.
pub fn make_shear_mask(spec: &AcquisitionSpec, t_frames: usize, cols: usize) -> Result<SamplingMask> {
    make_shear_mask_with_phase(spec, t_frames, cols, 0)
}

/// As [`make_shear_mask`] with the whole lattice shifted by `phase` columns.
pub fn make_shear_mask_with_phase(
    spec: &AcquisitionSpec,
    t_frames: usize,
    cols: usize,
    phase: usize,
) -> Result<SamplingMask> {
    spec.validate()?;
    if cols < spec.n_center {
        return Err(Error::InvalidSpec(format!(
            "cols {} smaller than n_center {}",
            cols, spec.n_center
        )));
    }
    if t_frames == 0 || cols == 0 {
        return Err(Error::EmptyVolume);
    }
    let r = spec.accel;
    let center = center_columns(spec.n_center, cols);
    let mut bits = vec![false; t_frames * cols];
    for t in 0..t_frames {
        let offset = (t * spec.shear_step + phase) % r;
        let row = &mut bits[t * cols..(t + 1) * cols];
        for (x, b) in row.iter_mut().enumerate() {
            *b = (x + r - offset) % r == 0 || center.contains(&x);
        }
        if !row.iter().any(|&b| b) {
            return Err(Error::InvalidSpec(format!(
                "frame {t} samples no column (cols {cols} < accel {r} without center lines)"
            )));
        }
    }
    SamplingMask::from_bits(t_frames, cols, bits)
}

/// Acquired k-t data: zero wherever the mask is unset.
#[derive(Clone, Debug, PartialEq)]
pub struct KtMeasurement {
    kspace: ComplexVolume,
    mask: SamplingMask,
}

impl KtMeasurement {
    pub fn new(kspace: ComplexVolume, mask: SamplingMask) -> Result<Self> {
        if kspace.domain() != Domain::KSpace {
            return Err(Error::WrongDomain {
                expected: "k-space",
                found: kspace.domain().name(),
            });
        }
        check_mask_dims(&kspace, &mask)?;
        for t in 0..kspace.t_frames() {
            for y in 0..kspace.rows() {
                for x in 0..kspace.cols() {
                    if !mask.is_sampled(t, x) && kspace.get(t, y, x) != Complex64::new(0.0, 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "nonzero k-space at unsampled position t={t} x={x}"
                        )));
                    }
                }
            }
        }
        Ok(Self { kspace, mask })
    }

    pub fn kspace(&self) -> &ComplexVolume {
        &self.kspace
    }

    pub fn mask(&self) -> &SamplingMask {
        &self.mask
    }

    pub fn dims(&self) -> [usize; 3] {
        self.kspace.dims()
    }
}

pub(crate) fn check_mask_dims(v: &ComplexVolume, mask: &SamplingMask) -> Result<()> {
    if v.t_frames() != mask.t_frames() || v.cols() != mask.cols() {
        return Err(Error::DimensionMismatch(format!(
            "volume {:?} vs mask {}x{}",
            v.dims(),
            mask.t_frames(),
            mask.cols()
        )));
    }
    Ok(())
}

/// Zeroes every unsampled (t, x) line of a k-space volume.
pub fn apply_mask(kspace: &ComplexVolume, mask: &SamplingMask) -> Result<ComplexVolume> {
    check_mask_dims(kspace, mask)?;
    let mut out = kspace.clone();
    let (rows, cols) = (out.rows(), out.cols());
    for t in 0..out.t_frames() {
        for x in (0..cols).filter(|&x| !mask.is_sampled(t, x)) {
            for y in 0..rows {
                out.set(t, y, x, Complex64::new(0.0, 0.0));
            }
        }
    }
    Ok(out)
}

/// Simulates a single-coil acquisition: `mask ⊙ fft2c(img)`.
pub fn undersample(img: &ComplexVolume, mask: &SamplingMask) -> Result<KtMeasurement> {
    if img.domain() != Domain::Image {
        return Err(Error::WrongDomain {
            expected: "image",
            found: img.domain().name(),
        });
    }
    check_mask_dims(img, mask)?;
    let kspace = apply_mask(&fft2c(img)?, mask)?;
    Ok(KtMeasurement {
        kspace,
        mask: mask.clone(),
    })
}

/// Zero-filled reconstruction σ_u.
pub fn zero_filled(m: &KtMeasurement) -> Result<ComplexVolume> {
    ifft2c(&m.kspace)
}
