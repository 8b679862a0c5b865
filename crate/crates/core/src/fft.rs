//! Centered, orthonormal discrete Fourier transforms.
//!
//! Zero frequency sits at index `N / 2` (integer division) for even and odd
//! `N`, and both directions are scaled by `1/sqrt(N)`, so the inverse is the
//! adjoint and energy is preserved exactly:
//!
//! ```text
//! X[k] = 1/sqrt(N) * sum_n x[n] exp(-2πi (k - c)(n - c) / N),   c = N / 2
//! ```

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::volume::{Axis, ComplexVolume, Domain};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

/// Applies the centered orthonormal transform along `axis` (0 = t, 1 = y,
/// 2 = x) of a `[t][y][x]` buffer in place.
pub fn transform_axis_in_place(data: &mut [Complex64], dims: [usize; 3], axis: usize, inverse: bool) {
    let n = dims[axis];
    assert_eq!(data.len(), dims.iter().product::<usize>());
    if n == 1 {
        return;
    }
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let lines = outer * stride;
    let center = n / 2;
    let scale = 1.0 / (n as f64).sqrt();

    // gather every line with the ifftshift applied, transform in one batch
    let mut buf = vec![Complex64::new(0.0, 0.0); lines * n];
    for o in 0..outer {
        for s in 0..stride {
            let line = o * stride + s;
            let base = o * n * stride + s;
            let dst = &mut buf[line * n..(line + 1) * n];
            for (m, d) in dst.iter_mut().enumerate() {
                *d = data[base + ((m + center) % n) * stride];
            }
        }
    }
    let direction = if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    };
    plan(n, direction).process(&mut buf);
    for o in 0..outer {
        for s in 0..stride {
            let line = o * stride + s;
            let base = o * n * stride + s;
            let src = &buf[line * n..(line + 1) * n];
            for k in 0..n {
                data[base + k * stride] = src[(k + n - center) % n] * scale;
            }
        }
    }
}

fn transform(v: &ComplexVolume, axis: Axis, inverse: bool) -> Result<ComplexVolume> {
    if v.is_empty() {
        return Err(Error::EmptyVolume);
    }
    let dims = v.dims();
    let domain = match (axis, inverse) {
        (Axis::T, false) => v.domain().temporal_forward(),
        (Axis::T, true) => v.domain().temporal_inverse(),
        (_, false) => v.domain().spatial_forward(),
        (_, true) => v.domain().spatial_inverse(),
    };
    let mut data = v.data().to_vec();
    transform_axis_in_place(&mut data, dims, axis.index(), inverse);
    ComplexVolume::from_vec(dims[0], dims[1], dims[2], domain, data)
}

/// Forward centered transform along one axis.
///
/// The domain tag moves image → k-space (x-f → k-f) for spatial axes and
/// image → x-f (k-space → k-f) for the temporal axis.
pub fn fft1c(v: &ComplexVolume, axis: Axis) -> Result<ComplexVolume> {
    transform(v, axis, false)
}

/// Inverse (and adjoint) of [`fft1c`].
pub fn ifft1c(v: &ComplexVolume, axis: Axis) -> Result<ComplexVolume> {
    transform(v, axis, true)
}

/// Per-frame 2D transform over (y, x). Accepts image or x-f volumes.
pub fn fft2c(v: &ComplexVolume) -> Result<ComplexVolume> {
    match v.domain() {
        Domain::Image | Domain::XF => {}
        found => {
            return Err(Error::WrongDomain {
                expected: "image or x-f",
                found: found.name(),
            })
        }
    }
    fft1c(&fft1c(v, Axis::Y)?, Axis::X)
}

/// Per-frame inverse 2D transform over (y, x). Accepts k-space or k-f volumes.
pub fn ifft2c(v: &ComplexVolume) -> Result<ComplexVolume> {
    match v.domain() {
        Domain::KSpace | Domain::KF => {}
        found => {
            return Err(Error::WrongDomain {
                expected: "k-space or k-f",
                found: found.name(),
            })
        }
    }
    ifft1c(&ifft1c(v, Axis::Y)?, Axis::X)
}

/// Temporal transform t → f. Maps an image sequence into x-f space.
pub fn fft_t(v: &ComplexVolume) -> Result<ComplexVolume> {
    fft1c(v, Axis::T)
}

/// Inverse temporal transform f → t.
pub fn ifft_t(v: &ComplexVolume) -> Result<ComplexVolume> {
    ifft1c(v, Axis::T)
}

/// Sum of squared magnitudes.
pub fn energy(v: &ComplexVolume) -> f64 {
    v.data().iter().map(|z| z.norm_sqr()).sum()
}
