//! Dense complex-valued dynamic volumes.
//!
//! A [`ComplexVolume`] stores `t_frames × rows × cols` complex samples in
//! `[t][y][x]` order. The same container is used for image sequences, k-t
//! data, and x-f spectra; the [`Domain`] tag records which one it holds.
//! `y` is the fully sampled readout axis and `x` the phase-encode axis.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Which representation a volume currently holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Image sequence, σ(x, t).
    Image,
    /// k-t space, v(k, t).
    KSpace,
    /// x-f space, ρ(x, f): image along space, spectrum along time.
    XF,
    /// k-f space: spectrum along both space and time.
    KF,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Image => "image",
            Domain::KSpace => "k-space",
            Domain::XF => "x-f",
            Domain::KF => "k-f",
        }
    }

    pub(crate) fn spatial_forward(self) -> Domain {
        match self {
            Domain::Image => Domain::KSpace,
            Domain::XF => Domain::KF,
            other => other,
        }
    }

    pub(crate) fn spatial_inverse(self) -> Domain {
        match self {
            Domain::KSpace => Domain::Image,
            Domain::KF => Domain::XF,
            other => other,
        }
    }

    pub(crate) fn temporal_forward(self) -> Domain {
        match self {
            Domain::Image => Domain::XF,
            Domain::KSpace => Domain::KF,
            other => other,
        }
    }

    pub(crate) fn temporal_inverse(self) -> Domain {
        match self {
            Domain::XF => Domain::Image,
            Domain::KF => Domain::KSpace,
            other => other,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Volume axis selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    T,
    Y,
    X,
}

impl Axis {
    pub(crate) fn index(self) -> usize {
        match self {
            Axis::T => 0,
            Axis::Y => 1,
            Axis::X => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVolume {
    t_frames: usize,
    rows: usize,
    cols: usize,
    domain: Domain,
    data: Vec<Complex64>,
}

impl ComplexVolume {
    pub fn zeros(t_frames: usize, rows: usize, cols: usize, domain: Domain) -> Result<Self> {
        check_dims(t_frames, rows, cols)?;
        Ok(Self {
            t_frames,
            rows,
            cols,
            domain,
            data: vec![Complex64::new(0.0, 0.0); t_frames * rows * cols],
        })
    }

    /// Wraps an existing buffer laid out `[t][y][x]`.
    pub fn from_vec(
        t_frames: usize,
        rows: usize,
        cols: usize,
        domain: Domain,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        check_dims(t_frames, rows, cols)?;
        if data.len() != t_frames * rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "buffer of {} samples for {}x{}x{} volume",
                data.len(),
                t_frames,
                rows,
                cols
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFinite("volume data"));
        }
        Ok(Self {
            t_frames,
            rows,
            cols,
            domain,
            data,
        })
    }

    pub fn from_fn<F>(t_frames: usize, rows: usize, cols: usize, domain: Domain, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize, usize) -> Complex64,
    {
        check_dims(t_frames, rows, cols)?;
        let mut data = Vec::with_capacity(t_frames * rows * cols);
        for t in 0..t_frames {
            for y in 0..rows {
                for x in 0..cols {
                    data.push(f(t, y, x));
                }
            }
        }
        Self::from_vec(t_frames, rows, cols, domain, data)
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.t_frames, self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn axis_len(&self, axis: Axis) -> usize {
        self.dims()[axis.index()]
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Relabels the volume without touching the samples.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Mutable access to the raw samples. Callers must keep every value finite.
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, t: usize, y: usize, x: usize) -> usize {
        (t * self.rows + y) * self.cols + x
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize) -> Complex64 {
        self.data[self.offset(t, y, x)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, y: usize, x: usize, value: Complex64) {
        debug_assert!(value.re.is_finite() && value.im.is_finite());
        let i = self.offset(t, y, x);
        self.data[i] = value;
    }

    /// Samples of frame `t`, laid out `[y][x]`.
    pub fn frame(&self, t: usize) -> &[Complex64] {
        let n = self.rows * self.cols;
        &self.data[t * n..(t + 1) * n]
    }

    pub fn same_shape(&self, other: &ComplexVolume) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_same_shape(&self, other: &ComplexVolume, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.dims(),
                other.dims()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Element-wise magnitude, laid out like the volume.
    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self {
            data: self.data.iter().map(|&z| f(z)).collect(),
            ..self.clone()
        }
    }

    pub fn zip_map<F>(&self, other: &ComplexVolume, f: F) -> Result<Self>
    where
        F: Fn(Complex64, Complex64) -> Complex64,
    {
        self.ensure_same_shape(other, "zip_map")?;
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..self.clone()
        })
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.map(|z| z * factor)
    }

    /// Largest absolute difference between corresponding samples.
    pub fn max_abs_diff(&self, other: &ComplexVolume) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

fn check_dims(t: usize, y: usize, x: usize) -> Result<()> {
    if t == 0 || y == 0 || x == 0 {
        return Err(Error::EmptyVolume);
    }
    t.checked_mul(y)
        .and_then(|n| n.checked_mul(x))
        .ok_or_else(|| Error::DimensionMismatch("volume size overflows".into()))?;
    Ok(())
}
