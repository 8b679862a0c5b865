//! Synthetic cardiac-like dynamic phantoms and geometric augmentation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::{ComplexVolume, Domain};

const MIN_DIM: usize = 8;

#[derive(Clone, Debug)]
struct Ellipse {
    cx: f64,
    cy: f64,
    ra: f64,
    rb: f64,
    angle: f64,
    intensity: f64,
    // motion: radius modulation and centre excursion, one cycle per period
    radius_amp: f64,
    shift: (f64, f64),
    phase: f64,
}

impl Ellipse {
    /// Soft membership in [0, 1] with a ramp about one pixel wide.
    fn coverage(&self, u: f64, v: f64, s: f64, pixel: f64) -> f64 {
        let scale = 1.0 + self.radius_amp * s;
        let cx = self.cx + self.shift.0 * s;
        let cy = self.cy + self.shift.1 * s;
        let (sin, cos) = self.angle.sin_cos();
        let du = u - cx;
        let dv = v - cy;
        let pu = (cos * du + sin * dv) / (self.ra * scale);
        let pv = (-sin * du + cos * dv) / (self.rb * scale);
        let r = (pu * pu + pv * pv).sqrt();
        let edge = (1.0 - r) * self.ra.min(self.rb) * scale / pixel + 0.5;
        edge.clamp(0.0, 1.0)
    }
}

fn draw_ellipses(rng: &mut ChaCha8Rng) -> Vec<Ellipse> {
    let mut out = vec![Ellipse {
        cx: rng.random_range(-0.03..0.03),
        cy: rng.random_range(-0.03..0.03),
        ra: rng.random_range(0.75..0.9),
        rb: rng.random_range(0.65..0.85),
        angle: rng.random_range(-0.3..0.3),
        intensity: rng.random_range(0.25..0.4),
        radius_amp: rng.random_range(0.0..0.03),
        shift: (0.0, 0.0),
        phase: rng.random_range(0.0..2.0 * PI),
    }];
    let inner = rng.random_range(2..=4);
    for _ in 0..inner {
        let r = rng.random_range(0.0..0.35);
        let theta = rng.random_range(0.0..2.0 * PI);
        let dir = rng.random_range(0.0..2.0 * PI);
        let excursion = rng.random_range(0.02..0.08);
        out.push(Ellipse {
            cx: r * theta.cos(),
            cy: r * theta.sin(),
            ra: rng.random_range(0.1..0.28),
            rb: rng.random_range(0.1..0.28),
            angle: rng.random_range(0.0..PI),
            intensity: rng.random_range(0.2..0.55),
            radius_amp: rng.random_range(0.1..0.25),
            shift: (excursion * dir.cos(), excursion * dir.sin()),
            phase: rng.random_range(0.0..2.0 * PI),
        });
    }
    out
}

/// Deterministic dynamic phantom with one motion cycle per `t_frames`.
pub fn generate_phantom(seed: u64, t_frames: usize, rows: usize, cols: usize) -> Result<ComplexVolume> {
    generate_phantom_with_cycle(seed, t_frames, rows, cols, t_frames)
}

/// Phantom whose motion repeats every `cycle_frames` frames.
pub fn generate_phantom_with_cycle(
    seed: u64,
    t_frames: usize,
    rows: usize,
    cols: usize,
    cycle_frames: usize,
) -> Result<ComplexVolume> {
    if t_frames == 0 || cycle_frames == 0 {
        return Err(Error::EmptyVolume);
    }
    if rows < MIN_DIM || cols < MIN_DIM {
        return Err(Error::InvalidArgument(format!(
            "phantom frames must be at least {MIN_DIM}x{MIN_DIM}, got {rows}x{cols}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ellipses = draw_ellipses(&mut rng);
    let phase_coef = [
        rng.random_range(-1.2..1.2),
        rng.random_range(-1.2..1.2),
        rng.random_range(-0.8..0.8),
        rng.random_range(-PI..PI),
    ];
    let half_x = cols as f64 / 2.0;
    let half_y = rows as f64 / 2.0;
    let pixel = 1.0 / half_x.min(half_y);

    ComplexVolume::from_fn(t_frames, rows, cols, Domain::Image, |t, y, x| {
        let u = (x as f64 + 0.5 - half_x) / half_x;
        let v = (y as f64 + 0.5 - half_y) / half_y;
        let cycle = 2.0 * PI * (t % cycle_frames) as f64 / cycle_frames as f64;
        let mut mag = 0.0;
        for e in &ellipses {
            let s = (cycle + e.phase).sin();
            mag += e.intensity * e.coverage(u, v, s, pixel);
        }
        let mag = mag.clamp(0.0, 1.0);
        let phi = phase_coef[0] * u + phase_coef[1] * v + phase_coef[2] * u * v + phase_coef[3];
        Complex64::from_polar(mag, phi)
    })
}

/// Rotation in degrees and isotropic scale applied by [`augment_with`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentDraw {
    pub angle_deg: f64,
    pub scale: f64,
}

pub fn draw_augment<R: Rng + ?Sized>(rng: &mut R) -> AugmentDraw {
    AugmentDraw {
        angle_deg: rng.random_range(-15.0..=15.0),
        scale: rng.random_range(0.9..=1.1),
    }
}

/// Random rotation in ±15° and scale in [0.9, 1.1], shared by every frame.
pub fn augment<R: Rng + ?Sized>(img: &ComplexVolume, rng: &mut R) -> ComplexVolume {
    let draw = draw_augment(rng);
    augment_with(img, draw)
}

/// Applies one similarity transform about the frame centre to every frame,
/// with bilinear interpolation and zeros outside the field of view.
pub fn augment_with(img: &ComplexVolume, draw: AugmentDraw) -> ComplexVolume {
    let (rows, cols) = (img.rows(), img.cols());
    let cx = (cols as f64 - 1.0) / 2.0;
    let cy = (rows as f64 - 1.0) / 2.0;
    let (sin, cos) = draw.angle_deg.to_radians().sin_cos();
    let inv_scale = 1.0 / draw.scale;

    // inverse map: output pixel -> source position
    let mut coords = Vec::with_capacity(rows * cols);
    for y in 0..rows {
        for x in 0..cols {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = (cos * dx + sin * dy) * inv_scale + cx;
            let sy = (-sin * dx + cos * dy) * inv_scale + cy;
            coords.push((sx, sy));
        }
    }

    let mut out = img.clone();
    for t in 0..img.t_frames() {
        let frame = img.frame(t);
        let sample = |xi: isize, yi: isize| -> Complex64 {
            if xi < 0 || yi < 0 || xi as usize >= cols || yi as usize >= rows {
                Complex64::new(0.0, 0.0)
            } else {
                frame[yi as usize * cols + xi as usize]
            }
        };
        for y in 0..rows {
            for x in 0..cols {
                let (sx, sy) = coords[y * cols + x];
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                let (x0, y0) = (x0 as isize, y0 as isize);
                let v = sample(x0, y0) * ((1.0 - fx) * (1.0 - fy))
                    + sample(x0 + 1, y0) * (fx * (1.0 - fy))
                    + sample(x0, y0 + 1) * ((1.0 - fx) * fy)
                    + sample(x0 + 1, y0 + 1) * (fx * fy);
                out.set(t, y, x, v);
            }
        }
    }
    out
}
