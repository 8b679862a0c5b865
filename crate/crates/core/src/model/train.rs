//! End-to-end training with the joint loss and ADAM.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::model::config::KtNextConfig;
use crate::model::loss::{joint_loss_graph, xf_target};
use crate::model::network::{bind_model, forward_graph};
use crate::nn::adam::{adam_step, AdamConfig, AdamState};
use crate::nn::graph::Graph;
use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor4;
use crate::phantom::augment;
use crate::sampling::{make_shear_mask_with_phase, undersample, AcquisitionSpec, SamplingMask};
use crate::volume::{ComplexVolume, Domain};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Random rotation/scaling of each drawn sequence.
    pub augment: bool,
    /// Redraw the shear lattice phase per sample from this protocol.
    pub random_shear: Option<AcquisitionSpec>,
    /// Sequences per step; gradients are averaged.
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 1e-4,
            seed: 0,
            augment: false,
            random_shear: None,
            batch: 1,
        }
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub step: usize,
    pub loss: f64,
    /// Mean PSNR of the step's reconstructions against their targets.
    pub psnr_train: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub history: Vec<TrainRecord>,
    pub adam: AdamState,
}

/// Loss, parameter gradients and PSNR for one fully sampled sequence.
pub struct SampleEval {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
    pub psnr: f64,
}

/// Undersamples `gt` with `mask`, runs the network and backpropagates the
/// joint loss scaled by `1/batch`.
pub fn evaluate_sample(
    gt: &ComplexVolume,
    mask: &SamplingMask,
    params: &ParamStore,
    config: &KtNextConfig,
    batch: usize,
) -> Result<SampleEval> {
    let meas = Arc::new(undersample(gt, mask)?);
    let mut g = Graph::new();
    let vars = bind_model(&mut g, params, config, true)?;
    let fv = forward_graph(&mut g, &meas, &vars, config)?;
    let sigma_gt = g.constant(Tensor4::from_volume(gt));
    let rho_gt = g.constant(Tensor4::from_volume(&xf_target(gt)?));
    let mut loss = joint_loss_graph(&mut g, fv.image, fv.xf, sigma_gt, rho_gt, batch)?;
    if config.intermediate_supervision {
        for &(rho, sigma) in &fv.cascades[..fv.cascades.len() - 1] {
            let extra = joint_loss_graph(&mut g, sigma, rho, sigma_gt, rho_gt, batch)?;
            loss = g.add(loss, extra)?;
        }
    }
    let grads = g.backward(loss)?;
    let recon = g.value(fv.image).to_volume(Domain::Image)?;
    Ok(SampleEval {
        loss: g.value(loss).data()[0],
        grads: params.gradients(&vars.params, &grads),
        psnr: psnr(&recon, gt)?,
    })
}

/// Trains from a fresh initialisation seeded by `train.seed`.
pub fn fit(
    dataset: &[ComplexVolume],
    mask: &SamplingMask,
    config: &KtNextConfig,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    let params = config.init_params(train.seed)?;
    fit_from(dataset, mask, config, train, params, |_| {})
}

/// Trains starting from `params`, reporting each step to `on_step`.
pub fn fit_from<F>(
    dataset: &[ComplexVolume],
    mask: &SamplingMask,
    config: &KtNextConfig,
    train: &TrainConfig,
    mut params: ParamStore,
    mut on_step: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&TrainRecord),
{
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.batch == 0 {
        return Err(Error::InvalidArgument("batch must be >= 1".into()));
    }
    config.check_params(&params)?;
    let adam_cfg = AdamConfig::with_lr(train.lr);
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed.wrapping_add(0x6b74_6e78));
    let mut history = Vec::with_capacity(train.steps);

    for step in 0..train.steps {
        let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        let mut loss = 0.0;
        let mut psnr_sum = 0.0;
        for _ in 0..train.batch {
            let idx = rng.random_range(0..dataset.len());
            let gt = if train.augment {
                augment(&dataset[idx], &mut rng)
            } else {
                dataset[idx].clone()
            };
            let sample_mask = match &train.random_shear {
                Some(spec) => {
                    let phase = rng.random_range(0..spec.accel);
                    make_shear_mask_with_phase(spec, gt.t_frames(), gt.cols(), phase)?
                }
                None => mask.clone(),
            };
            let eval = evaluate_sample(&gt, &sample_mask, &params, config, train.batch)?;
            loss += eval.loss;
            psnr_sum += eval.psnr;
            for (acc, g) in grads.iter_mut().zip(&eval.grads) {
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step, loss });
        }
        let record = TrainRecord {
            step,
            loss,
            psnr_train: psnr_sum / train.batch as f64,
        };
        on_step(&record);
        history.push(record);
        adam_step(&mut params, &grads, &mut adam, &adam_cfg)?;
    }
    Ok(TrainOutcome { params, history, adam })
}
