//! Independent reference implementations and randomized suites shared by
//! the integration tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use ktnext::fft::{fft1c, fft2c, fft_t, ifft1c, ifft2c, ifft_t};
use ktnext::metrics::{hfen, psnr, ssim};
use ktnext::model::network::{bind_model, forward_graph, CascadeVars};
use ktnext::model::train::evaluate_sample;
use ktnext::model::{ktnext_forward, xf_target};
use ktnext::nn::conv::conv2d;
use ktnext::nn::gradcheck::{check_gradient, GradCheckReport};
use ktnext::nn::graph::{Graph, Var};
use ktnext::nn::tensor::Tensor4;
use ktnext::sampling::{apply_mask, make_shear_mask, undersample, zero_filled};
use ktnext::xf::{broadcast_frame, data_consistency, temporal_average};
use ktnext::{AcquisitionSpec, Axis, ComplexVolume, DcLambda, Domain, KtMeasurement, KtNextConfig, SamplingMask};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume<R: Rng>(r: &mut R, dims: [usize; 3], domain: Domain) -> ComplexVolume {
    ComplexVolume::from_fn(dims[0], dims[1], dims[2], domain, |_, _, _| {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    })
    .unwrap()
}

pub fn random_mask<R: Rng>(r: &mut R, t: usize, cols: usize, p: f64) -> SamplingMask {
    let bits = (0..t * cols).map(|_| r.random_bool(p)).collect();
    SamplingMask::from_bits(t, cols, bits).unwrap()
}

pub fn measurement_of(k: &ComplexVolume, mask: &SamplingMask) -> KtMeasurement {
    KtMeasurement::new(apply_mask(k, mask).unwrap(), mask.clone()).unwrap()
}

fn max_rel(a: &ComplexVolume, b: &ComplexVolume) -> f64 {
    a.max_abs_diff(b) / b.max_abs().max(f64::MIN_POSITIVE)
}

/// Literal centered orthonormal DFT along one axis by direct summation.
pub fn dft_axis(v: &ComplexVolume, axis: Axis, inverse: bool) -> ComplexVolume {
    let [t, y, x] = v.dims();
    let n = v.axis_len(axis);
    let c = (n / 2) as f64;
    let sign = if inverse { 1.0 } else { -1.0 };
    let norm = 1.0 / (n as f64).sqrt();
    ComplexVolume::from_fn(t, y, x, v.domain(), |a, b, d| {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in 0..n {
            let (sa, sb, sd) = match axis {
                Axis::T => (m, b, d),
                Axis::Y => (a, m, d),
                Axis::X => (a, b, m),
            };
            let k = match axis {
                Axis::T => a,
                Axis::Y => b,
                Axis::X => d,
            };
            let phase = sign * 2.0 * PI * (k as f64 - c) * (m as f64 - c) / n as f64;
            acc += v.get(sa, sb, sd) * Complex64::from_polar(1.0, phase);
        }
        acc * norm
    })
    .unwrap()
}

/// Largest relative deviation of every transform from direct summation over
/// `cases` random volumes with all axis lengths in `1..=8`.
pub fn fft_oracle_suite(seed: u64, cases: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        // cycle lengths so every length appears on every axis
        let dims = [
            case % 8 + 1,
            (case / 8) % 8 + 1,
            r.random_range(1..=8),
        ];
        let img = random_volume(&mut r, dims, Domain::Image);
        let ksp = random_volume(&mut r, dims, Domain::KSpace);
        for axis in [Axis::T, Axis::Y, Axis::X] {
            worst = worst.max(max_rel(&fft1c(&img, axis).unwrap(), &dft_axis(&img, axis, false)));
            worst = worst.max(max_rel(&ifft1c(&img, axis).unwrap(), &dft_axis(&img, axis, true)));
        }
        let f2 = dft_axis(&dft_axis(&img, Axis::Y, false), Axis::X, false);
        worst = worst.max(max_rel(&fft2c(&img).unwrap(), &f2));
        let i2 = dft_axis(&dft_axis(&ksp, Axis::Y, true), Axis::X, true);
        worst = worst.max(max_rel(&ifft2c(&ksp).unwrap(), &i2));
        worst = worst.max(max_rel(&fft_t(&img).unwrap(), &dft_axis(&img, Axis::T, false)));
        worst = worst.max(max_rel(&ifft_t(&img).unwrap(), &dft_axis(&img, Axis::T, true)));
    }
    worst
}

/// Literal two-pass temporal average: count the samples at each position,
/// then sum and divide; positions never sampled stay zero.
pub fn two_pass_average(k: &ComplexVolume, mask: &SamplingMask) -> ComplexVolume {
    let [t, rows, cols] = k.dims();
    let counts: Vec<usize> = (0..cols).map(|x| (0..t).filter(|&f| mask.is_sampled(f, x)).count()).collect();
    ComplexVolume::from_fn(1, rows, cols, k.domain(), |_, y, x| {
        if counts[x] == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let mut s = Complex64::new(0.0, 0.0);
        for f in 0..t {
            if mask.is_sampled(f, x) {
                s += k.get(f, y, x);
            }
        }
        s / counts[x] as f64
    })
    .unwrap()
}

/// Outcome of a randomized suite: number of cases and the worst error seen.
#[derive(Clone, Copy, Debug)]
pub struct Suite {
    pub cases: usize,
    pub worst: f64,
}

/// Temporal average vs [`two_pass_average`] on random masked sequences,
/// plus a forced never-sampled column and a forced two-sample column.
pub fn temporal_average_suite(seed: u64, cases: usize) -> Suite {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let t = r.random_range(2..=8);
        let rows = r.random_range(1..=6);
        let cols = r.random_range(3..=10);
        let mut bits: Vec<bool> = (0..t * cols).map(|_| r.random_bool(0.4)).collect();
        let never = r.random_range(0..cols);
        let twice = (never + 1 + r.random_range(0..cols - 1)) % cols;
        for f in 0..t {
            bits[f * cols + never] = false;
            bits[f * cols + twice] = false;
        }
        let (a, b) = (r.random_range(0..t), r.random_range(0..t - 1));
        let b = if b >= a { b + 1 } else { b };
        bits[a * cols + twice] = true;
        bits[b * cols + twice] = true;
        let mask = SamplingMask::from_bits(t, cols, bits).unwrap();
        let k = apply_mask(&random_volume(&mut r, [t, rows, cols], Domain::KSpace), &mask).unwrap();
        let got = temporal_average(&k, &mask).unwrap();
        let want = two_pass_average(&k, &mask);
        worst = worst.max(got.max_abs_diff(&want));
        for y in 0..rows {
            worst = worst.max(got.get(0, y, never).norm());
            let mean = (k.get(a, y, twice) + k.get(b, y, twice)) / 2.0;
            worst = worst.max((got.get(0, y, twice) - mean).norm());
        }
    }
    Suite { cases, worst }
}

/// Idempotence and sampled-entry exactness of hard DC, and the λ = 1
/// midpoint identity.
pub fn dc_suite(seed: u64, cases: usize) -> Suite {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let dims = [r.random_range(1..=6), r.random_range(1..=6), r.random_range(1..=8)];
        let mask = random_mask(&mut r, dims[0], dims[2], 0.5);
        let m = measurement_of(&random_volume(&mut r, dims, Domain::KSpace), &mask);
        let pred = random_volume(&mut r, dims, Domain::KSpace);
        let once = data_consistency(&pred, &m, DcLambda::Hard).unwrap();
        let twice = data_consistency(&once, &m, DcLambda::Hard).unwrap();
        worst = worst.max(once.max_abs_diff(&twice));
        let half = data_consistency(&pred, &m, DcLambda::new(1.0).unwrap()).unwrap();
        for t in 0..dims[0] {
            for y in 0..dims[1] {
                for x in 0..dims[2] {
                    let (p, a) = (pred.get(t, y, x), m.kspace().get(t, y, x));
                    if mask.is_sampled(t, x) {
                        worst = worst.max((once.get(t, y, x) - a).norm());
                        worst = worst.max((half.get(t, y, x) - (p + a) / 2.0).norm());
                    } else {
                        worst = worst.max((once.get(t, y, x) - p).norm());
                        worst = worst.max((half.get(t, y, x) - p).norm());
                    }
                }
            }
        }
    }
    Suite { cases, worst }
}

/// Zero-weight network composed by hand from the primitives: every cascade
/// is `σ ← F⁻¹ DC(broadcast(avg(DC(F σ))))`.
pub fn zero_weight_pipeline(m: &KtMeasurement, cascades: usize) -> ComplexVolume {
    let mut sigma = zero_filled(m).unwrap();
    for _ in 0..cascades {
        let merged = data_consistency(&fft2c(&sigma).unwrap(), m, DcLambda::Hard).unwrap();
        let avg = temporal_average(&merged, m.mask()).unwrap();
        let base = broadcast_frame(&avg, m.dims()[0]).unwrap();
        sigma = ifft2c(&data_consistency(&base, m, DcLambda::Hard).unwrap()).unwrap();
    }
    sigma
}

pub fn small_config(cascades: usize, channels: usize) -> KtNextConfig {
    KtNextConfig {
        n_cascades: cascades,
        channels,
        ..KtNextConfig::default()
    }
}

/// Zero-weight forward vs [`zero_weight_pipeline`] on random shear-sampled
/// measurements.
pub fn zero_weight_suite(seed: u64, cases: usize) -> Suite {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let t = r.random_range(2..=6);
        let dims = [t, r.random_range(4..=8), r.random_range(6..=10)];
        let spec = AcquisitionSpec::new(r.random_range(2..=4), r.random_range(0..=2));
        let mask = make_shear_mask(&spec, t, dims[2]).unwrap();
        let m = undersample(&random_volume(&mut r, dims, Domain::Image), &mask).unwrap();
        let config = small_config(r.random_range(1..=3), 4);
        let out = ktnext_forward(&m, &config.zero_params().unwrap(), &config).unwrap();
        let want = zero_weight_pipeline(&m, config.n_cascades);
        worst = worst.max(out.image.max_abs_diff(&want));
    }
    Suite { cases, worst }
}

/// With every column acquired and hard DC, the output is the ground truth
/// whatever the weights.
pub fn full_mask_suite(seed: u64, cases: usize) -> Suite {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let dims = [r.random_range(2..=5), 6, 8];
        let gt = random_volume(&mut r, dims, Domain::Image);
        let m = undersample(&gt, &SamplingMask::full(dims[0], dims[2]).unwrap()).unwrap();
        let config = small_config(2, 4);
        let params = config.init_params(seed + case as u64).unwrap();
        let out = ktnext_forward(&m, &params, &config).unwrap();
        worst = worst.max(out.image.max_abs_diff(&gt));
    }
    Suite { cases, worst }
}

/// Zero-filled x-f image of a static point object predicted from the
/// lattice: replica `j` of `R` sits at `x − j·N/R`, `f = c_t − j·T/R`,
/// scaled by `√T / R` and rotated by `exp(2πi·j·(c_x − c_t)/R)`.
pub fn replica_prediction(obj: &ComplexVolume, accel: usize) -> ComplexVolume {
    let [t, rows, cols] = obj.dims();
    let (ct, cx) = ((t / 2) as i64, (cols / 2) as i64);
    let r = accel as i64;
    let mut out = ComplexVolume::zeros(t, rows, cols, Domain::XF).unwrap();
    for j in 0..r {
        let f = (ct - j * t as i64 / r).rem_euclid(t as i64) as usize;
        let rot = Complex64::from_polar((t as f64).sqrt() / accel as f64, 2.0 * PI * (j * (cx - ct)) as f64 / accel as f64);
        for y in 0..rows {
            for x in 0..cols {
                let src = (x as i64 + j * cols as i64 / r).rem_euclid(cols as i64) as usize;
                let v = out.get(f, y, x) + rot * obj.get(0, y, src);
                out.set(f, y, x, v);
            }
        }
    }
    out
}

/// Worst deviation of the zero-filled x-f transform of a lattice-sampled
/// static point from [`replica_prediction`].
pub fn aliasing_replica_error(accel: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (t, rows, cols) = (16, 8, 32);
    let (py, px) = (r.random_range(0..rows), r.random_range(0..cols));
    let amp = Complex64::from_polar(1.0, r.random_range(0.0..2.0 * PI));
    let obj = ComplexVolume::from_fn(t, rows, cols, Domain::Image, |_, y, x| {
        if (y, x) == (py, px) {
            amp
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
    .unwrap();
    let mask = make_shear_mask(&AcquisitionSpec::new(accel, 0), t, cols).unwrap();
    let m = undersample(&obj, &mask).unwrap();
    let xf = fft_t(&zero_filled(&m).unwrap()).unwrap();
    xf.max_abs_diff(&replica_prediction(&obj, accel))
}

/// Direct-loop "same" convolution with zero padding.
pub fn naive_conv(x: &Tensor4, w: &Tensor4, b: Option<&Tensor4>, dil: usize) -> Tensor4 {
    let [n, c_in, h, wd] = x.dims();
    let [c_out, _, kh, kw] = w.dims();
    let (ph, pw) = ((dil * (kh - 1) / 2) as i64, (dil * (kw - 1) / 2) as i64);
    Tensor4::from_fn([n, c_out, h, wd], |bn, co, oy, ox| {
        let mut acc = b.map_or(0.0, |b| b.data()[co]);
        for ci in 0..c_in {
            for ky in 0..kh {
                for kx in 0..kw {
                    let iy = oy as i64 + (ky * dil) as i64 - ph;
                    let ix = ox as i64 + (kx * dil) as i64 - pw;
                    if iy >= 0 && iy < h as i64 && ix >= 0 && ix < wd as i64 {
                        acc += w.at(co, ci, ky, kx) * x.at(bn, ci, iy as usize, ix as usize);
                    }
                }
            }
        }
        acc
    })
}

pub fn random_tensor<R: Rng>(r: &mut R, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_, _, _, _| r.random_range(-1.0..1.0))
}

/// Values bounded away from zero so ReLU kinks stay far from the probe.
pub fn random_tensor_off_zero<R: Rng>(r: &mut R, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_, _, _, _| {
        let v: f64 = r.random_range(0.05..1.0);
        if r.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Finite-difference check of a graph expression with respect to each of
/// `inputs`. The scalar loss is `mean (out + offset)²` with a fixed random
/// offset, so every output entry carries a distinct upstream gradient; the
/// mean keeps round-off in the differences near 1e-10.
pub fn check_graph<F>(inputs: &[Tensor4], seed: u64, build: F) -> GradCheckReport
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut r = rng(seed);
    let offset = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars);
        random_tensor(&mut r, g.value(out).dims())
    };
    let eval = |xs: &[Tensor4], grad: bool| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.input(t.clone())).collect();
        let out = build(&mut g, &vars);
        let off = g.constant(offset.clone());
        let shifted = g.add(out, off).unwrap();
        let n = g.value(shifted).len() as f64;
        let ss = g.sum_squares(shifted);
        let loss = g.scale(ss, 1.0 / n);
        let value = g.value(loss).data()[0];
        if !grad {
            return (value, Vec::new());
        }
        let grads = g.backward(loss).unwrap();
        let gs = vars
            .iter()
            .zip(xs)
            .map(|(&v, t)| grads.get_or_zeros(v, t).into_vec())
            .collect();
        (value, gs)
    };
    let (_, analytic) = eval(inputs, true);
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for (which, input) in inputs.iter().enumerate() {
        let dims = input.dims();
        let f = |flat: &[f64]| {
            let mut xs = inputs.to_vec();
            xs[which] = Tensor4::from_vec(dims, flat.to_vec()).unwrap();
            eval(&xs, false).0
        };
        let indices: Vec<usize> = (0..input.len()).collect();
        let rep = check_gradient(f, input.data(), &analytic[which], &indices, FD_STEP);
        report.checked += rep.checked;
        if rep.max_rel_error >= report.max_rel_error {
            report.max_rel_error = rep.max_rel_error;
            report.worst = rep.worst;
        }
    }
    report
}

/// Joint-loss gradient of the full model checked on a random fraction of
/// the parameters.
pub fn model_gradient_check(config: &KtNextConfig, dims: [usize; 3], fraction: f64, seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let gt = random_volume(&mut r, dims, Domain::Image);
    let mask = make_shear_mask(&AcquisitionSpec::new(2, 2), dims[0], dims[2]).unwrap();
    let params = config.init_params(seed).unwrap();
    let eval = evaluate_sample(&gt, &mask, &params, config, 1).unwrap();
    let analytic: Vec<f64> = eval.grads.concat();
    let flat = params.flatten();
    let count = ((flat.len() as f64 * fraction).ceil() as usize).max(1);
    let mut indices = sample(&mut r, flat.len(), count).into_vec();
    indices.sort_unstable();
    let f = |x: &[f64]| {
        let mut p = params.clone();
        p.set_flat(x).unwrap();
        forward_loss(&gt, &mask, &p, config)
    };
    check_gradient(f, &flat, &analytic, &indices, FD_STEP)
}

/// Joint loss without a backward pass.
pub fn forward_loss(gt: &ComplexVolume, mask: &SamplingMask, params: &ktnext::nn::ParamStore, config: &KtNextConfig) -> f64 {
    let meas = Arc::new(undersample(gt, mask).unwrap());
    let mut g = Graph::new();
    let vars = bind_model(&mut g, params, config, false).unwrap();
    let fv = forward_graph(&mut g, &meas, &vars, config).unwrap();
    let target = xf_target(gt).unwrap();
    let joint = |rho: Var, sigma: Var| {
        let s = g.value(sigma).to_volume(Domain::Image).unwrap();
        let r = g.value(rho).to_volume(Domain::XF).unwrap();
        ktnext::model::joint_loss(&[s], &[r], &[gt.clone()], &[target.clone()]).unwrap()
    };
    let mut loss = joint(fv.xf, fv.image);
    if config.intermediate_supervision {
        for &(rho, sigma) in &fv.cascades[..fv.cascades.len() - 1] {
            loss += joint(rho, sigma);
        }
    }
    loss
}

pub fn psnr_oracle(rec: &[f64], gt: &[f64]) -> f64 {
    let peak = gt.iter().cloned().fold(0.0, f64::max);
    let mse = rec.iter().zip(gt).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / gt.len() as f64;
    10.0 * (peak * peak / mse).log10()
}

/// Windowed SSIM on one frame: every pixel gets its own weight map (the
/// Gaussian clipped to the frame and renormalised).
pub fn ssim_oracle(a: &[f64], b: &[f64], rows: usize, cols: usize, peak: f64) -> f64 {
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let mut total = 0.0;
    for y in 0..rows {
        for x in 0..cols {
            let mut w = vec![0.0; rows * cols];
            for v in 0..rows {
                for u in 0..cols {
                    let (dy, dx) = (v as f64 - y as f64, u as f64 - x as f64);
                    if dy.abs() <= 5.0 && dx.abs() <= 5.0 {
                        w[v * cols + u] = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
                    }
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            let dot = |p: &[f64], q: &[f64]| w.iter().zip(p).zip(q).map(|((w, p), q)| w * p * q).sum::<f64>();
            let ones = vec![1.0; rows * cols];
            let (ma, mb) = (dot(a, &ones), dot(b, &ones));
            let va = dot(a, a) - ma * ma;
            let vb = dot(b, b) - mb * mb;
            let cov = dot(a, b) - ma * mb;
            total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    total / (rows * cols) as f64
}

/// 15×15 LoG in the usual image-toolbox form: normalised Gaussian times
/// `(r² − 2σ²)/σ⁴`, then shifted to zero sum.
pub fn log_oracle_kernel() -> Vec<Vec<f64>> {
    let s2: f64 = 1.5 * 1.5;
    let g: Vec<Vec<f64>> = (-7..=7)
        .map(|y: i32| (-7..=7).map(|x: i32| (-((x * x + y * y) as f64) / (2.0 * s2)).exp()).collect())
        .collect();
    let gs: f64 = g.iter().flatten().sum();
    let mut h: Vec<Vec<f64>> = (0..15)
        .map(|i| {
            (0..15)
                .map(|j| {
                    let (y, x) = (i as f64 - 7.0, j as f64 - 7.0);
                    g[i][j] / gs * (x * x + y * y - 2.0 * s2) / (s2 * s2)
                })
                .collect()
        })
        .collect();
    let mean = h.iter().flatten().sum::<f64>() / 225.0;
    h.iter_mut().flatten().for_each(|v| *v -= mean);
    h
}

pub fn hfen_oracle(a: &[f64], b: &[f64], frames: usize, rows: usize, cols: usize) -> f64 {
    let k = log_oracle_kernel();
    let filt = |img: &[f64], f: usize, y: usize, x: usize| {
        let mut acc = 0.0;
        for i in 0..15 {
            for j in 0..15 {
                let (yy, xx) = (y as i64 + i as i64 - 7, x as i64 + j as i64 - 7);
                if yy >= 0 && yy < rows as i64 && xx >= 0 && xx < cols as i64 {
                    acc += k[i][j] * img[f * rows * cols + yy as usize * cols + xx as usize];
                }
            }
        }
        acc
    };
    let (mut num, mut den) = (0.0, 0.0);
    for f in 0..frames {
        for y in 0..rows {
            for x in 0..cols {
                let (p, q) = (filt(a, f, y, x), filt(b, f, y, x));
                num += (p - q) * (p - q);
                den += q * q;
            }
        }
    }
    (num / den).sqrt()
}

/// Worst disagreement of the library metrics with the oracles on random
/// single-frame 8×8 pairs.
pub fn metric_oracle_suite(seed: u64, cases: usize) -> Suite {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let gt = random_volume(&mut r, [1, 8, 8], Domain::Image);
        let rec = random_volume(&mut r, [1, 8, 8], Domain::Image);
        let (a, b) = (rec.magnitude(), gt.magnitude());
        let peak = b.iter().cloned().fold(0.0, f64::max);
        worst = worst.max((psnr(&rec, &gt).unwrap() - psnr_oracle(&a, &b)).abs());
        worst = worst.max((ssim(&rec, &gt).unwrap() - ssim_oracle(&a, &b, 8, 8, peak)).abs());
        worst = worst.max((hfen(&rec, &gt).unwrap() - hfen_oracle(&a, &b, 1, 8, 8)).abs());
    }
    Suite { cases, worst }
}

/// Inner product `⟨a, b⟩ = Σ conj(a)·b`.
pub fn inner(a: &ComplexVolume, b: &ComplexVolume) -> Complex64 {
    a.data().iter().zip(b.data()).map(|(p, q)| p.conj() * q).sum()
}

/// Max conv2d deviation from [`naive_conv`] on random shapes.
pub fn conv_oracle_suite(seed: u64, cases: usize) -> Suite {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.random_range(1..=3);
        let c_in = r.random_range(1..=3);
        let c_out = r.random_range(1..=3);
        let k = [1, 3, 5][r.random_range(0..3)];
        let dil = r.random_range(1..=3);
        let (h, w) = (r.random_range(1..=9), r.random_range(1..=9));
        let x = random_tensor(&mut r, [n, c_in, h, w]);
        let w = random_tensor(&mut r, [c_out, c_in, k, k]);
        let b = random_tensor(&mut r, [c_out, 1, 1, 1]);
        let got = conv2d(&x, &w, Some(&b), dil).unwrap();
        let want = naive_conv(&x, &w, Some(&b), dil);
        worst = worst.max(got.data().iter().zip(want.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
    }
    Suite { cases, worst }
}

fn complex_input<R: Rng>(r: &mut R, dims: [usize; 3]) -> Tensor4 {
    Tensor4::from_volume(&random_volume(r, dims, Domain::Image))
}

/// Finite-difference report for every differentiable graph op.
pub fn op_gradient_suite(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let dims = [3, 4, 5];
    let mask = random_mask(&mut r, dims[0], dims[2], 0.5);
    let meas = Arc::new(measurement_of(&random_volume(&mut r, dims, Domain::KSpace), &mask));
    let mask = Arc::new(mask);

    for dil in [1, 3] {
        let x = random_tensor(&mut r, [2, 3, 6, 5]);
        let w = random_tensor(&mut r, [2, 3, 3, 3]);
        let b = random_tensor(&mut r, [2, 1, 1, 1]);
        let name = if dil == 1 { "conv2d" } else { "conv2d dilated" };
        out.push((name, check_graph(&[x, w, b], seed, |g, v| g.conv2d(v[0], v[1], Some(v[2]), dil).unwrap())));
    }
    let a = random_tensor(&mut r, [2, 3, 3, 4]);
    let b = random_tensor(&mut r, [2, 3, 3, 4]);
    out.push(("add", check_graph(&[a.clone(), b.clone()], seed, |g, v| g.add(v[0], v[1]).unwrap())));
    out.push(("sub", check_graph(&[a.clone(), b.clone()], seed, |g, v| g.sub(v[0], v[1]).unwrap())));
    out.push(("scale", check_graph(&[a.clone()], seed, |g, v| g.scale(v[0], -1.7))));
    let kinked = random_tensor_off_zero(&mut r, [2, 3, 3, 4]);
    out.push(("relu", check_graph(&[kinked.clone()], seed, |g, v| g.relu(v[0]))));
    out.push(("leaky_relu", check_graph(&[kinked], seed, |g, v| g.leaky_relu(v[0], 0.1))));
    let c = random_tensor(&mut r, [2, 1, 3, 4]);
    out.push(("concat_c", check_graph(&[a.clone(), c], seed, |g, v| g.concat_c(v[0], v[1]).unwrap())));
    out.push(("swap_nh", check_graph(&[a.clone()], seed, |g, v| g.swap_nh(v[0]))));
    out.push(("slice_n", check_graph(&[a.clone()], seed, |g, v| g.slice_n(v[0], 1).unwrap())));
    out.push((
        "stack_n",
        check_graph(&[a.clone(), b.clone()], seed, |g, v| {
            let p = g.slice_n(v[0], 0).unwrap();
            g.stack_n(&[p, v[1], p]).unwrap()
        }),
    ));
    let one = random_tensor(&mut r, [1, 3, 3, 4]);
    out.push(("broadcast_n", check_graph(&[one], seed, |g, v| g.broadcast_n(v[0], 4).unwrap())));
    out.push(("sum", check_graph(&[a.clone()], seed, |g, v| g.sum(v[0]))));
    out.push(("sum_squares", check_graph(&[a], seed, |g, v| g.sum_squares(v[0]))));

    let z = complex_input(&mut r, dims);
    out.push(("fft2c", check_graph(&[z.clone()], seed, |g, v| g.fft2c(v[0], false).unwrap())));
    out.push(("ifft2c", check_graph(&[z.clone()], seed, |g, v| g.fft2c(v[0], true).unwrap())));
    out.push(("fft_t", check_graph(&[z.clone()], seed, |g, v| g.fft_t(v[0], false).unwrap())));
    out.push(("ifft_t", check_graph(&[z.clone()], seed, |g, v| g.fft_t(v[0], true).unwrap())));
    let m2 = Arc::clone(&meas);
    out.push(("dc hard", check_graph(&[z.clone()], seed, move |g, v| g.data_consistency(v[0], &m2, DcLambda::Hard).unwrap())));
    let m3 = Arc::clone(&meas);
    out.push((
        "dc soft",
        check_graph(&[z.clone()], seed, move |g, v| {
            g.data_consistency(v[0], &m3, DcLambda::new(0.7).unwrap()).unwrap()
        }),
    ));
    out.push(("temporal_average", check_graph(&[z], seed, move |g, v| g.temporal_average(v[0], &mask).unwrap())));
    out
}

/// One bidirectional recurrent layer, all weights and both inputs checked.
pub fn crnn_layer_gradient(seed: u64, t_frames: usize) -> GradCheckReport {
    use ktnext::nn::crnn::{bidir_layer, CrnnLayerVars};
    let mut r = rng(seed);
    let c = 3;
    let inputs = vec![
        random_tensor(&mut r, [t_frames, 2, 8, 8]),
        random_tensor(&mut r, [t_frames, c, 8, 8]),
        random_tensor(&mut r, [c, 2, 3, 3]).map(|v| v * 0.5),
        random_tensor(&mut r, [c, c, 3, 3]).map(|v| v * 0.3),
        random_tensor(&mut r, [c, c, 3, 3]).map(|v| v * 0.3),
        random_tensor(&mut r, [c, 1, 1, 1]).map(|v| v * 0.1),
    ];
    check_graph(&inputs, seed, |g, v| {
        let layer = CrnnLayerVars {
            input: v[2],
            hidden: v[3],
            iteration: Some(v[4]),
            bias: v[5],
        };
        bidir_layer(g, v[0], &layer, Some(v[1]), 1).unwrap()
    })
}

/// Gradient of a scalar built from one cascade sub-block with respect to
/// every parameter and the block input.
fn block_gradient<F>(config: &KtNextConfig, input: Tensor4, seed: u64, build: F) -> GradCheckReport
where
    F: Fn(&mut Graph, Var, &CascadeVars) -> Var,
{
    let params = config.init_params(seed).unwrap();
    let mut inputs = vec![input];
    inputs.extend(params.iter().map(|p| p.to_tensor()));
    check_graph(&inputs, seed, move |g, v| {
        let mv = bind_model(g, &params, config, false).unwrap();
        let cv = rebind(mv.cascade(0), &v[1..], &mv.params);
        build(g, v[0], &cv)
    })
}

/// Swaps the constant leaves from `bind_model` for the checked inputs.
fn rebind(cv: &CascadeVars, inputs: &[Var], bound: &[Var]) -> CascadeVars {
    let map = |v: Var| inputs[bound.iter().position(|&b| b == v).unwrap()];
    let mut out = cv.clone();
    for (w, b) in &mut out.xf {
        *w = map(*w);
        *b = map(*b);
    }
    for l in &mut out.crnn {
        l.input = map(l.input);
        l.hidden = map(l.hidden);
        l.iteration = l.iteration.map(map);
        l.bias = map(l.bias);
    }
    out.out = (map(out.out.0), map(out.out.1));
    out
}

/// x-f network: residual and baseline inputs plus all weights.
pub fn xfcnn_gradient(seed: u64) -> GradCheckReport {
    use ktnext::model::network::xfcnn_graph;
    let mut r = rng(seed);
    let config = small_config(1, 3);
    let pair = Tensor4::concat_c(&complex_input(&mut r, [4, 6, 6]), &complex_input(&mut r, [4, 6, 6]));
    block_gradient(&config, pair, seed, |g, x, cv| {
        let (res, base) = split_channels(g, x);
        xfcnn_graph(g, res, base, cv, &small_config(1, 3)).unwrap()
    })
}

/// Picks channels {0,1} and {2,3} with selector 1×1 convolutions.
fn split_channels(g: &mut Graph, x: Var) -> (Var, Var) {
    let sel = |offset: usize| Tensor4::from_fn([2, 4, 1, 1], move |o, i, _, _| if i == o + offset { 1.0 } else { 0.0 });
    let wa = g.constant(sel(0));
    let wb = g.constant(sel(2));
    (g.conv2d(x, wa, None, 1).unwrap(), g.conv2d(x, wb, None, 1).unwrap())
}

/// Image block (recurrent layers, output conv, residual, DC) with carried
/// hidden states, checked with respect to its input and all weights.
pub fn crnn_recon_gradient(seed: u64) -> GradCheckReport {
    use ktnext::model::network::crnn_graph;
    let mut r = rng(seed);
    let config = small_config(1, 3);
    let dims = [3, 8, 8];
    let mask = make_shear_mask(&AcquisitionSpec::new(2, 2), dims[0], dims[2]).unwrap();
    let meas = Arc::new(undersample(&random_volume(&mut r, dims, Domain::Image), &mask).unwrap());
    let hidden: Vec<Tensor4> = (0..config.crnn_layers)
        .map(|_| random_tensor(&mut r, [dims[0], config.channels, 8, 8]).map(|v| v.abs()))
        .collect();
    block_gradient(&config, complex_input(&mut r, dims), seed, move |g, x, cv| {
        let h: Vec<Var> = hidden.iter().map(|t| g.constant(t.clone())).collect();
        crnn_graph(g, x, &meas, cv, Some(&h), &small_config(1, 3)).unwrap().0
    })
}
