//! Dilated 2D convolution kernels with "same" zero padding.
//!
//! Weights are `[c_out][c_in][kh][kw]` with odd kernel sides; the padding on
//! each side is `dilation · (k − 1) / 2`, so spatial size is preserved.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor4;

fn check_shapes(x: &Tensor4, w: &Tensor4, bias: Option<&Tensor4>, dilation: usize) -> Result<()> {
    let [_, c_in, _, _] = x.dims();
    let [c_out, wc_in, kh, kw] = w.dims();
    if dilation == 0 {
        return Err(Error::InvalidArgument("dilation must be >= 1".into()));
    }
    if wc_in != c_in {
        return Err(Error::DimensionMismatch(format!(
            "conv input has {c_in} channels, weights expect {wc_in}"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::InvalidArgument(format!("kernel {kh}x{kw} must have odd sides")));
    }
    if let Some(b) = bias {
        if b.len() != c_out {
            return Err(Error::DimensionMismatch(format!(
                "bias of {} for {c_out} output channels",
                b.len()
            )));
        }
    }
    Ok(())
}

/// Valid output range along one axis for a tap at offset `d`.
#[inline]
fn span(len: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

pub fn conv2d(x: &Tensor4, w: &Tensor4, bias: Option<&Tensor4>, dilation: usize) -> Result<Tensor4> {
    check_shapes(x, w, bias, dilation)?;
    let [n, c_in, h, wd] = x.dims();
    let [c_out, _, kh, kw] = w.dims();
    let pad_h = (dilation * (kh - 1) / 2) as isize;
    let pad_w = (dilation * (kw - 1) / 2) as isize;
    let plane = h * wd;
    let mut out = Tensor4::zeros([n, c_out, h, wd]);
    let xd = x.data();
    let wdat = w.data();
    let od = out.data_mut();
    for b in 0..n {
        for co in 0..c_out {
            let o_plane = &mut od[(b * c_out + co) * plane..(b * c_out + co + 1) * plane];
            if let Some(bias) = bias {
                o_plane.fill(bias.data()[co]);
            }
            for ci in 0..c_in {
                let i_plane = &xd[(b * c_in + ci) * plane..(b * c_in + ci + 1) * plane];
                for ky in 0..kh {
                    let dy = (ky * dilation) as isize - pad_h;
                    let (y0, y1) = span(h, dy);
                    for kx in 0..kw {
                        let dx = (kx * dilation) as isize - pad_w;
                        let (x0, x1) = span(wd, dx);
                        if x0 == x1 {
                            continue;
                        }
                        let wv = wdat[((co * c_in + ci) * kh + ky) * kw + kx];
                        for oy in y0..y1 {
                            let iy = (oy as isize + dy) as usize;
                            let orow = &mut o_plane[oy * wd + x0..oy * wd + x1];
                            let is = (x0 as isize + dx) as usize;
                            let irow = &i_plane[iy * wd + is..iy * wd + is + (x1 - x0)];
                            for (o, &i) in orow.iter_mut().zip(irow) {
                                *o += wv * i;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] given the upstream gradient `gout`.
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Tensor4,
    pub bias: Tensor4,
}

pub fn conv2d_backward(x: &Tensor4, w: &Tensor4, gout: &Tensor4, dilation: usize) -> Result<ConvGrads> {
    check_shapes(x, w, None, dilation)?;
    let [n, c_in, h, wd] = x.dims();
    let [c_out, _, kh, kw] = w.dims();
    if gout.dims() != [n, c_out, h, wd] {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient {:?} for conv output {:?}",
            gout.dims(),
            [n, c_out, h, wd]
        )));
    }
    let pad_h = (dilation * (kh - 1) / 2) as isize;
    let pad_w = (dilation * (kw - 1) / 2) as isize;
    let plane = h * wd;
    let mut gx = Tensor4::zeros(x.dims());
    let mut gw = Tensor4::zeros(w.dims());
    let mut gb = Tensor4::zeros([c_out, 1, 1, 1]);
    let xd = x.data();
    let wdat = w.data();
    let gd = gout.data();

    for co in 0..c_out {
        gb.data_mut()[co] = (0..n)
            .map(|b| gd[(b * c_out + co) * plane..(b * c_out + co + 1) * plane].iter().sum::<f64>())
            .sum();
    }
    let gxd = gx.data_mut();
    let gwd = gw.data_mut();
    for b in 0..n {
        for co in 0..c_out {
            let g_plane = &gd[(b * c_out + co) * plane..(b * c_out + co + 1) * plane];
            for ci in 0..c_in {
                let base_in = (b * c_in + ci) * plane;
                for ky in 0..kh {
                    let dy = (ky * dilation) as isize - pad_h;
                    let (y0, y1) = span(h, dy);
                    for kx in 0..kw {
                        let dx = (kx * dilation) as isize - pad_w;
                        let (x0, x1) = span(wd, dx);
                        if x0 == x1 {
                            continue;
                        }
                        let wi = ((co * c_in + ci) * kh + ky) * kw + kx;
                        let wv = wdat[wi];
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = (oy as isize + dy) as usize;
                            let is = (x0 as isize + dx) as usize;
                            let grow = &g_plane[oy * wd + x0..oy * wd + x1];
                            let irow = &xd[base_in + iy * wd + is..base_in + iy * wd + is + (x1 - x0)];
                            acc += grow.iter().zip(irow).map(|(&g, &i)| g * i).sum::<f64>();
                            let gxrow = &mut gxd[base_in + iy * wd + is..base_in + iy * wd + is + (x1 - x0)];
                            for (o, &g) in gxrow.iter_mut().zip(grow) {
                                *o += wv * g;
                            }
                        }
                        gwd[wi] += acc;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    })
}
