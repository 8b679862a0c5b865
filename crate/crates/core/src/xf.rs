//! The x-f transform layer: temporal-average baseline, per-frame data
//! consistency, and the residual/baseline pair handed to the x-f network.
//!
//! All acquisition support is read from the sampling mask rather than from
//! numeric zeros in the data.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft2c, fft_t, ifft2c, ifft_t};
use crate::sampling::{check_mask_dims, KtMeasurement, SamplingMask};
use crate::volume::{ComplexVolume, Domain};

/// Data-consistency weight λ. `Hard` (λ = ∞) replaces sampled entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DcLambda {
    Hard,
    Soft(f64),
}

impl DcLambda {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!("DC lambda must be >= 0, got {lambda}")));
        }
        Ok(if lambda.is_infinite() {
            DcLambda::Hard
        } else {
            DcLambda::Soft(lambda)
        })
    }

    pub fn value(self) -> f64 {
        match self {
            DcLambda::Hard => f64::INFINITY,
            DcLambda::Soft(l) => l,
        }
    }

    /// Output at a sampled entry.
    #[inline]
    pub fn blend(self, pred: Complex64, acquired: Complex64) -> Complex64 {
        match self {
            DcLambda::Hard => acquired,
            DcLambda::Soft(l) => (pred + acquired * l) / (1.0 + l),
        }
    }

    /// Derivative of [`Self::blend`] with respect to the prediction.
    #[inline]
    pub fn pred_weight(self) -> f64 {
        match self {
            DcLambda::Hard => 0.0,
            DcLambda::Soft(l) => 1.0 / (1.0 + l),
        }
    }
}

impl Default for DcLambda {
    fn default() -> Self {
        DcLambda::Hard
    }
}

impl fmt::Display for DcLambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DcLambda::Hard => f.write_str("inf"),
            DcLambda::Soft(l) => write!(f, "{l}"),
        }
    }
}

impl FromStr for DcLambda {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
            return Ok(DcLambda::Hard);
        }
        let v: f64 = s
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad lambda {s:?}")))?;
        DcLambda::new(v)
    }
}

/// Per-position temporal mean of the sampled entries:
/// `Σ_t v ./ max(1, Σ_t δ)`, with δ taken from the mask. Returns one frame.
pub fn temporal_average(kspace: &ComplexVolume, mask: &SamplingMask) -> Result<ComplexVolume> {
    check_mask_dims(kspace, mask)?;
    let (t_frames, rows, cols) = (kspace.t_frames(), kspace.rows(), kspace.cols());
    let counts: Vec<f64> = (0..cols).map(|x| mask.column_count(x).max(1) as f64).collect();
    let mut out = ComplexVolume::zeros(1, rows, cols, kspace.domain())?;
    for t in 0..t_frames {
        for y in 0..rows {
            for x in 0..cols {
                if mask.is_sampled(t, x) {
                    let i = out.offset(0, y, x);
                    out.data_mut()[i] += kspace.get(t, y, x);
                }
            }
        }
    }
    for y in 0..rows {
        for (x, &n) in counts.iter().enumerate() {
            let i = out.offset(0, y, x);
            out.data_mut()[i] /= n;
        }
    }
    Ok(out)
}

/// Temporal average of the acquired data.
pub fn kspace_temporal_average(m: &KtMeasurement) -> Result<ComplexVolume> {
    temporal_average(m.kspace(), m.mask())
}

/// Repeats a single frame `t_frames` times.
pub fn broadcast_frame(plane: &ComplexVolume, t_frames: usize) -> Result<ComplexVolume> {
    if plane.t_frames() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "broadcast expects one frame, got {}",
            plane.t_frames()
        )));
    }
    let mut data = Vec::with_capacity(t_frames * plane.len());
    for _ in 0..t_frames {
        data.extend_from_slice(plane.data());
    }
    ComplexVolume::from_vec(t_frames, plane.rows(), plane.cols(), plane.domain(), data)
}

/// Baseline k-t data: every frame is `avg` with that frame's own acquired
/// samples re-imposed.
pub fn dc_baseline_kspace(avg: &ComplexVolume, m: &KtMeasurement) -> Result<ComplexVolume> {
    let [t_frames, rows, cols] = m.dims();
    if avg.t_frames() != 1 || avg.rows() != rows || avg.cols() != cols {
        return Err(Error::DimensionMismatch(format!(
            "baseline plane {:?} vs measurement {:?}",
            avg.dims(),
            m.dims()
        )));
    }
    let base = broadcast_frame(&avg.clone().with_domain(Domain::KSpace), t_frames)?;
    data_consistency(&base, m, DcLambda::Hard)
}

/// Re-imposes acquired samples: `(pred + λ·acq) / (1 + λ)` at sampled
/// positions, pass-through elsewhere.
pub fn data_consistency(pred_k: &ComplexVolume, m: &KtMeasurement, lambda: DcLambda) -> Result<ComplexVolume> {
    if let DcLambda::Soft(l) = lambda {
        if !(l >= 0.0) {
            return Err(Error::InvalidArgument(format!("DC lambda must be >= 0, got {l}")));
        }
    }
    pred_k.ensure_same_shape(m.kspace(), "data consistency")?;
    let mask = m.mask();
    let acq = m.kspace();
    let mut out = pred_k.clone();
    let (rows, cols) = (out.rows(), out.cols());
    for t in 0..out.t_frames() {
        for x in (0..cols).filter(|&x| mask.is_sampled(t, x)) {
            for y in 0..rows {
                let i = out.offset(t, y, x);
                let v = lambda.blend(pred_k.data()[i], acq.data()[i]);
                out.data_mut()[i] = v;
            }
        }
    }
    Ok(out)
}

/// Operands of the x-f de-aliasing step, both in x-f space.
#[derive(Clone, Debug, PartialEq)]
pub struct XfPair {
    /// ρ_rec − ρ̄_rec.
    pub residual: ComplexVolume,
    /// DC(ρ̄_rec).
    pub dc_baseline: ComplexVolume,
}

/// k-t → image → x-f: `fft_t(ifft2c(k))`.
pub fn kt_to_xf(k: &ComplexVolume) -> Result<ComplexVolume> {
    fft_t(&ifft2c(k)?)
}

/// Splits the current image estimate into its residual against the
/// temporal-average baseline and the data-consistent baseline, in x-f space.
pub fn xf_transform(sigma: &ComplexVolume, m: &KtMeasurement) -> Result<XfPair> {
    if sigma.domain() != Domain::Image {
        return Err(Error::WrongDomain {
            expected: "image",
            found: sigma.domain().name(),
        });
    }
    sigma.ensure_same_shape(m.kspace(), "xf_transform")?;
    let v = fft2c(sigma)?;
    let merged = data_consistency(&v, m, DcLambda::Hard)?;
    let avg = temporal_average(&merged, m.mask())?;
    let baseline = broadcast_frame(&avg, v.t_frames())?;
    let residual_k = v.zip_map(&baseline, |a, b| a - b)?;
    let dc_k = dc_baseline_kspace(&avg, m)?;
    Ok(XfPair {
        residual: kt_to_xf(&residual_k)?,
        dc_baseline: kt_to_xf(&dc_k)?,
    })
}

/// x-f → image sequence (inverse temporal transform).
pub fn xf_to_image(rho: &ComplexVolume) -> Result<ComplexVolume> {
    ifft_t(rho)
}
