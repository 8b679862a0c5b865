use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::volume::{ComplexVolume, Domain};

/// Dense real tensor laid out `[n][c][h][w]`.
///
/// Complex volumes enter the network as `[t][2][y][x]`: channel 0 holds the
/// real part and channel 1 the imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            dims: [1, 1, 1, 1],
            data: vec![v],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::EmptyVolume);
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for tensor {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn<F: FnMut(usize, usize, usize, usize) -> f64>(dims: [usize; 4], mut f: F) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for h in 0..dims[2] {
                    for w in 0..dims[3] {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + h) * self.dims[3] + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    /// Size of one `[c][h][w]` item.
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn plane_len(&self) -> usize {
        self.dims[2] * self.dims[3]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor4) {
        assert_eq!(self.dims, other.dims, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor4 {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor4, f: impl Fn(f64, f64) -> f64) -> Tensor4 {
        assert_eq!(self.dims, other.dims, "zip_map shape mismatch");
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// `[t][y][x]` complex volume → `[t][2][y][x]` real tensor.
    pub fn from_volume(v: &ComplexVolume) -> Tensor4 {
        let [t, y, x] = v.dims();
        let plane = y * x;
        let mut data = vec![0.0; t * 2 * plane];
        for f in 0..t {
            let src = v.frame(f);
            let (re, im) = data[f * 2 * plane..(f + 1) * 2 * plane].split_at_mut(plane);
            for (i, z) in src.iter().enumerate() {
                re[i] = z.re;
                im[i] = z.im;
            }
        }
        Tensor4 {
            dims: [t, 2, y, x],
            data,
        }
    }

    /// Inverse of [`Tensor4::from_volume`]; requires exactly two channels.
    pub fn to_volume(&self, domain: Domain) -> Result<ComplexVolume> {
        let [t, c, y, x] = self.dims;
        if c != 2 {
            return Err(Error::DimensionMismatch(format!(
                "complex embedding needs 2 channels, got {c}"
            )));
        }
        ComplexVolume::from_vec(t, y, x, domain, self.to_complex())
    }

    pub(crate) fn to_complex(&self) -> Vec<Complex64> {
        let [t, c, y, x] = self.dims;
        debug_assert_eq!(c, 2);
        let plane = y * x;
        let mut out = Vec::with_capacity(t * plane);
        for f in 0..t {
            let base = f * 2 * plane;
            for i in 0..plane {
                out.push(Complex64::new(self.data[base + i], self.data[base + plane + i]));
            }
        }
        out
    }

    pub(crate) fn from_complex(dims: [usize; 4], z: &[Complex64]) -> Tensor4 {
        let [t, c, y, x] = dims;
        debug_assert_eq!(c, 2);
        let plane = y * x;
        let mut data = vec![0.0; t * 2 * plane];
        for f in 0..t {
            let base = f * 2 * plane;
            for i in 0..plane {
                let v = z[f * plane + i];
                data[base + i] = v.re;
                data[base + plane + i] = v.im;
            }
        }
        Tensor4 { dims, data }
    }

    /// Swaps the `n` and `h` axes: `[n][c][h][w] → [h][c][n][w]`.
    pub fn swap_nh(&self) -> Tensor4 {
        let [n, c, h, w] = self.dims;
        let mut out = Tensor4::zeros([h, c, n, w]);
        for a in 0..n {
            for ch in 0..c {
                for b in 0..h {
                    let src = self.offset(a, ch, b, 0);
                    let dst = out.offset(b, ch, a, 0);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        out
    }

    /// Item `i` along `n`, as a one-item tensor.
    pub fn slice_n(&self, i: usize) -> Tensor4 {
        let len = self.item_len();
        Tensor4 {
            dims: [1, self.dims[1], self.dims[2], self.dims[3]],
            data: self.data[i * len..(i + 1) * len].to_vec(),
        }
    }

    /// Concatenates one-or-more-item tensors along `n`.
    pub fn stack_n(parts: &[&Tensor4]) -> Tensor4 {
        let first = parts[0].dims;
        let mut n = 0;
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.dims[1..], first[1..], "stack_n shape mismatch");
            n += p.dims[0];
            data.extend_from_slice(&p.data);
        }
        Tensor4 {
            dims: [n, first[1], first[2], first[3]],
            data,
        }
    }

    /// Concatenates along channels.
    pub fn concat_c(a: &Tensor4, b: &Tensor4) -> Tensor4 {
        let [n, ca, h, w] = a.dims;
        let cb = b.dims[1];
        assert_eq!([n, h, w], [b.dims[0], b.dims[2], b.dims[3]], "concat_c shape mismatch");
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (ca + cb) * plane);
        for i in 0..n {
            data.extend_from_slice(&a.data[i * ca * plane..(i + 1) * ca * plane]);
            data.extend_from_slice(&b.data[i * cb * plane..(i + 1) * cb * plane]);
        }
        Tensor4 {
            dims: [n, ca + cb, h, w],
            data,
        }
    }

    /// Splits channels at `ca`; inverse of [`Tensor4::concat_c`].
    pub fn split_c(&self, ca: usize) -> (Tensor4, Tensor4) {
        let [n, c, h, w] = self.dims;
        let cb = c - ca;
        let plane = h * w;
        let mut a = Vec::with_capacity(n * ca * plane);
        let mut b = Vec::with_capacity(n * cb * plane);
        for i in 0..n {
            let base = i * c * plane;
            a.extend_from_slice(&self.data[base..base + ca * plane]);
            b.extend_from_slice(&self.data[base + ca * plane..base + c * plane]);
        }
        (
            Tensor4 {
                dims: [n, ca, h, w],
                data: a,
            },
            Tensor4 {
                dims: [n, cb, h, w],
                data: b,
            },
        )
    }
}
