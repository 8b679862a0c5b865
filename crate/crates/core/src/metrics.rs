//! PSNR, SSIM and HFEN on magnitude images.
//!
//! The dynamic range is the peak magnitude of the reference over the whole
//! sequence. SSIM uses an 11×11 Gaussian window (σ = 1.5) that is truncated
//! and renormalised at frame borders, so frames smaller than the window are
//! still scored. HFEN filters each frame with a zero-sum 15×15
//! Laplacian-of-Gaussian (σ = 1.5) under zero padding and pools all frames
//! before taking the norm ratio.

use crate::error::{Error, Result};
use crate::volume::ComplexVolume;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const LOG_SIZE: usize = 15;
const LOG_SIGMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconMetrics {
    /// dB; `f64::INFINITY` when the reconstruction is exact.
    pub psnr: f64,
    pub ssim: f64,
    pub hfen: f64,
}

pub fn evaluate(rec: &ComplexVolume, gt: &ComplexVolume) -> Result<ReconMetrics> {
    Ok(ReconMetrics {
        psnr: psnr(rec, gt)?,
        ssim: ssim(rec, gt)?,
        hfen: hfen(rec, gt)?,
    })
}

fn magnitudes(rec: &ComplexVolume, gt: &ComplexVolume) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    rec.ensure_same_shape(gt, "metric inputs")?;
    let a = rec.magnitude();
    let b = gt.magnitude();
    let peak = b.iter().copied().fold(0.0, f64::max);
    Ok((a, b, peak))
}

/// `10·log10(peak² / MSE)` over all frames.
pub fn psnr(rec: &ComplexVolume, gt: &ComplexVolume) -> Result<f64> {
    let (a, b, peak) = magnitudes(rec, gt)?;
    let mse = a.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    if peak == 0.0 {
        return Err(Error::UndefinedMetric("PSNR of an all-zero reference"));
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Normalised 2D Gaussian window, `size × size`, row-major.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size * size)
        .map(|i| {
            let dy = (i / size) as f64 - c;
            let dx = (i % size) as f64 - c;
            (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Zero-sum Laplacian-of-Gaussian kernel, `size × size`, row-major.
pub fn log_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let s2 = sigma * sigma;
    let g: Vec<f64> = (0..size * size)
        .map(|i| {
            let dy = (i / size) as f64 - c;
            let dx = (i % size) as f64 - c;
            (-(dx * dx + dy * dy) / (2.0 * s2)).exp()
        })
        .collect();
    let gs: f64 = g.iter().sum();
    let mut h: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let dy = (i / size) as f64 - c;
            let dx = (i % size) as f64 - c;
            v / gs * (dx * dx + dy * dy - 2.0 * s2) / (s2 * s2)
        })
        .collect();
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    h.iter_mut().for_each(|v| *v -= mean);
    h
}

fn ssim_frame(a: &[f64], b: &[f64], rows: usize, cols: usize, window: &[f64], c1: f64, c2: f64) -> f64 {
    let half = (SSIM_WINDOW / 2) as isize;
    let mut total = 0.0;
    for y in 0..rows as isize {
        for x in 0..cols as isize {
            let (mut ws, mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in -half..=half {
                let yy = y + dy;
                if yy < 0 || yy >= rows as isize {
                    continue;
                }
                for dx in -half..=half {
                    let xx = x + dx;
                    if xx < 0 || xx >= cols as isize {
                        continue;
                    }
                    let w = window[((dy + half) as usize) * SSIM_WINDOW + (dx + half) as usize];
                    let i = yy as usize * cols + xx as usize;
                    ws += w;
                    ma += w * a[i];
                    mb += w * b[i];
                    saa += w * a[i] * a[i];
                    sbb += w * b[i] * b[i];
                    sab += w * a[i] * b[i];
                }
            }
            let (ma, mb) = (ma / ws, mb / ws);
            let va = saa / ws - ma * ma;
            let vb = sbb / ws - mb * mb;
            let cov = sab / ws - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    total / (rows * cols) as f64
}

/// Mean local SSIM per frame, averaged over frames.
pub fn ssim(rec: &ComplexVolume, gt: &ComplexVolume) -> Result<f64> {
    let (a, b, peak) = magnitudes(rec, gt)?;
    if peak == 0.0 {
        return Err(Error::UndefinedMetric("SSIM of an all-zero reference"));
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let window = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let (rows, cols) = (gt.rows(), gt.cols());
    let n = rows * cols;
    let sum: f64 = (0..gt.t_frames())
        .map(|t| ssim_frame(&a[t * n..(t + 1) * n], &b[t * n..(t + 1) * n], rows, cols, &window, c1, c2))
        .sum();
    Ok(sum / gt.t_frames() as f64)
}

fn filter_same(img: &[f64], rows: usize, cols: usize, kernel: &[f64], size: usize) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut out = vec![0.0; rows * cols];
    for y in 0..rows as isize {
        for x in 0..cols as isize {
            let mut acc = 0.0;
            for ky in -half..=half {
                let yy = y + ky;
                if yy < 0 || yy >= rows as isize {
                    continue;
                }
                for kx in -half..=half {
                    let xx = x + kx;
                    if xx < 0 || xx >= cols as isize {
                        continue;
                    }
                    acc += kernel[((ky + half) as usize) * size + (kx + half) as usize] * img[yy as usize * cols + xx as usize];
                }
            }
            out[y as usize * cols + x as usize] = acc;
        }
    }
    out
}

/// `‖LoG(|rec|) − LoG(|gt|)‖₂ / ‖LoG(|gt|)‖₂`, pooled over frames.
pub fn hfen(rec: &ComplexVolume, gt: &ComplexVolume) -> Result<f64> {
    let (a, b, _) = magnitudes(rec, gt)?;
    let kernel = log_kernel(LOG_SIZE, LOG_SIGMA);
    let (rows, cols) = (gt.rows(), gt.cols());
    let n = rows * cols;
    let (mut num, mut den) = (0.0, 0.0);
    for t in 0..gt.t_frames() {
        let la = filter_same(&a[t * n..(t + 1) * n], rows, cols, &kernel, LOG_SIZE);
        let lb = filter_same(&b[t * n..(t + 1) * n], rows, cols, &kernel, LOG_SIZE);
        num += la.iter().zip(&lb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        den += lb.iter().map(|q| q * q).sum::<f64>();
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric("HFEN with zero LoG energy in the reference"));
    }
    Ok((num / den).sqrt())
}
