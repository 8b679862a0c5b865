use crate::error::{Error, Result};
use crate::fft::fft_t;
use crate::nn::graph::{Graph, Var};
use crate::volume::ComplexVolume;

/// x-f ground truth: the temporal spectrum of the fully sampled sequence.
pub fn xf_target(sigma_gt: &ComplexVolume) -> Result<ComplexVolume> {
    fft_t(sigma_gt)
}

/// Joint image and x-f squared error, averaged over the batch:
/// `1/n_S · Σ (‖σ_gt − σ‖² + ‖ρ_gt − ρ‖²)`.
pub fn joint_loss(
    sigma_pred: &[ComplexVolume],
    rho_pred: &[ComplexVolume],
    sigma_gt: &[ComplexVolume],
    rho_gt: &[ComplexVolume],
) -> Result<f64> {
    let n = sigma_pred.len();
    if n == 0 || rho_pred.len() != n || sigma_gt.len() != n || rho_gt.len() != n {
        return Err(Error::InvalidArgument("joint loss needs equally sized, non-empty batches".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        sigma_pred[i].ensure_same_shape(&sigma_gt[i], "image term")?;
        rho_pred[i].ensure_same_shape(&rho_gt[i], "x-f term")?;
        total += squared_error(&sigma_pred[i], &sigma_gt[i]) + squared_error(&rho_pred[i], &rho_gt[i]);
    }
    Ok(total / n as f64)
}

fn squared_error(a: &ComplexVolume, b: &ComplexVolume) -> f64 {
    a.data().iter().zip(b.data()).map(|(p, q)| (p - q).norm_sqr()).sum()
}

/// One sample's contribution on the tape, scaled by `1/batch`.
pub fn joint_loss_graph(
    g: &mut Graph,
    sigma: Var,
    rho: Var,
    sigma_gt: Var,
    rho_gt: Var,
    batch: usize,
) -> Result<Var> {
    let ds = g.sub(sigma, sigma_gt)?;
    let dr = g.sub(rho, rho_gt)?;
    let es = g.sum_squares(ds);
    let er = g.sum_squares(dr);
    let total = g.add(es, er)?;
    Ok(g.scale(total, 1.0 / batch as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Domain;
    use num_complex::Complex64;

    fn vol(seed: u64) -> ComplexVolume {
        ComplexVolume::from_fn(2, 3, 3, Domain::Image, |t, y, x| {
            let k = (seed as usize * 13 + t * 7 + y * 3 + x) % 10;
            Complex64::new(k as f64 * 0.1, -(k as f64) * 0.05)
        })
        .unwrap()
    }

    #[test]
    fn identical_inputs_give_zero() {
        let s = vec![vol(1), vol(2)];
        let r = vec![vol(3), vol(4)];
        assert_eq!(joint_loss(&s, &r, &s, &r).unwrap(), 0.0);
    }

    #[test]
    fn single_voxel_difference_over_batch() {
        let s = vec![vol(1), vol(2), vol(5)];
        let r = vec![vol(3), vol(4), vol(6)];
        let mut shifted = s.clone();
        let z = shifted[1].get(1, 2, 0);
        shifted[1].set(1, 2, 0, z + Complex64::new(1.0, 0.0));
        let l = joint_loss(&shifted, &r, &s, &r).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(joint_loss(&[], &[], &[], &[]).is_err());
    }
}
