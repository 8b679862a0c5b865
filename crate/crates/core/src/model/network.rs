//! The cascaded network on the autodiff tape.
//!
//! One cascade:
//!
//! ```text
//! (residual, baseline) = xf_transform(σ, v0)           x-f space
//! ρ = baseline + xfcnn(residual [, baseline])
//! σ' = DC(ifft_t(ρ) + crnn(ifft_t(ρ)); v0)              image space
//! ```

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::config::{KtNextConfig, XfInputMode};
use crate::nn::crnn::{bidir_layer, CrnnLayerVars};
use crate::nn::graph::{Graph, Var};
use crate::nn::params::ParamStore;
use crate::nn::tensor::Tensor4;
use crate::sampling::{zero_filled, KtMeasurement};
use crate::volume::{ComplexVolume, Domain};
use crate::xf::{DcLambda, XfPair};

/// Tape handles for one weight set.
#[derive(Clone, Debug)]
pub struct CascadeVars {
    pub xf: Vec<(Var, Var)>,
    pub crnn: Vec<CrnnLayerVars>,
    pub out: (Var, Var),
}

/// Tape handles for every parameter, grouped per cascade.
#[derive(Clone, Debug)]
pub struct ModelVars {
    /// All parameter leaves in store order.
    pub params: Vec<Var>,
    sets: Vec<CascadeVars>,
    share: bool,
}

impl ModelVars {
    pub fn cascade(&self, n: usize) -> &CascadeVars {
        if self.share {
            &self.sets[0]
        } else {
            &self.sets[n]
        }
    }
}

fn lookup(store: &ParamStore, vars: &[Var], name: &str) -> Result<Var> {
    store
        .index_of(name)
        .map(|i| vars[i])
        .ok_or_else(|| Error::ParamMismatch(format!("missing parameter {name}")))
}

/// Puts every parameter on the tape. With `trainable = false` the leaves
/// are constants and no parameter gradients are tracked.
pub fn bind_model(g: &mut Graph, store: &ParamStore, config: &KtNextConfig, trainable: bool) -> Result<ModelVars> {
    config.check_params(store)?;
    let params: Vec<Var> = if trainable {
        store.bind(g)
    } else {
        store.iter().map(|p| g.constant(p.to_tensor())).collect()
    };
    let mut sets = Vec::with_capacity(config.weight_sets());
    for set in 0..config.weight_sets() {
        let p = config.prefix(set);
        let xf = (0..config.xf_layers)
            .map(|i| {
                Ok((
                    lookup(store, &params, &format!("{p}xf.conv{i}.weight"))?,
                    lookup(store, &params, &format!("{p}xf.conv{i}.bias"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let crnn = (0..config.crnn_layers)
            .map(|l| {
                Ok(CrnnLayerVars {
                    input: lookup(store, &params, &format!("{p}crnn.layer{l}.input.weight"))?,
                    hidden: lookup(store, &params, &format!("{p}crnn.layer{l}.hidden.weight"))?,
                    iteration: if config.iteration_hidden {
                        Some(lookup(store, &params, &format!("{p}crnn.layer{l}.iteration.weight"))?)
                    } else {
                        None
                    },
                    bias: lookup(store, &params, &format!("{p}crnn.layer{l}.bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = (
            lookup(store, &params, &format!("{p}crnn.out.weight"))?,
            lookup(store, &params, &format!("{p}crnn.out.bias"))?,
        );
        sets.push(CascadeVars { xf, crnn, out });
    }
    Ok(ModelVars {
        params,
        sets,
        share: config.share_weights,
    })
}

/// Tape version of the x-f transform layer: returns `(residual, dc_baseline)`
/// in x-f space, both `[f][2][y][x]`.
pub fn xf_transform_graph(g: &mut Graph, sigma: Var, meas: &Arc<KtMeasurement>) -> Result<(Var, Var)> {
    let t_frames = g.value(sigma).dims()[0];
    let mask = Arc::new(meas.mask().clone());
    let v = g.fft2c(sigma, false)?;
    let merged = g.data_consistency(v, meas, DcLambda::Hard)?;
    let avg = g.temporal_average(merged, &mask)?;
    let baseline = g.broadcast_n(avg, t_frames)?;
    let residual_k = g.sub(v, baseline)?;
    let dc_k = g.data_consistency(baseline, meas, DcLambda::Hard)?;
    let residual_img = g.fft2c(residual_k, true)?;
    let residual = g.fft_t(residual_img, false)?;
    let dc_img = g.fft2c(dc_k, true)?;
    let dc_baseline = g.fft_t(dc_img, false)?;
    Ok((residual, dc_baseline))
}

/// x-f de-aliasing: `baseline + CNN(input)`, the CNN convolving (x, f)
/// planes with one plane per readout row.
pub fn xfcnn_graph(
    g: &mut Graph,
    residual: Var,
    dc_baseline: Var,
    vars: &CascadeVars,
    config: &KtNextConfig,
) -> Result<Var> {
    let input = match config.xf_input_mode {
        XfInputMode::ResidualOnly => residual,
        XfInputMode::ResidualPlusBaseline => g.concat_c(residual, dc_baseline)?,
    };
    // [f][c][y][x] -> [y][c][f][x]
    let mut h = g.swap_nh(input);
    let last = vars.xf.len() - 1;
    for (i, &(w, b)) in vars.xf.iter().enumerate() {
        h = g.conv2d(h, w, Some(b), config.dilation)?;
        if i != last {
            h = g.relu(h);
        }
    }
    let correction = g.swap_nh(h);
    g.add(dc_baseline, correction)
}

/// Image-domain refinement: recurrent layers, output convolution, residual
/// connection and data consistency. Returns the image and each layer's
/// output (the hidden state for the next cascade).
pub fn crnn_graph(
    g: &mut Graph,
    img_in: Var,
    meas: &Arc<KtMeasurement>,
    vars: &CascadeVars,
    hidden: Option<&[Var]>,
    config: &KtNextConfig,
) -> Result<(Var, Vec<Var>)> {
    let mut x = img_in;
    let mut states = Vec::with_capacity(vars.crnn.len());
    for (l, layer) in vars.crnn.iter().enumerate() {
        let h_iter = hidden.map(|h| h[l]);
        x = bidir_layer(g, x, layer, h_iter, config.dilation)?;
        states.push(x);
    }
    let (w, b) = vars.out;
    let correction = g.conv2d(x, w, Some(b), config.dilation)?;
    let refined = g.add(img_in, correction)?;
    let k = g.fft2c(refined, false)?;
    let k = g.data_consistency(k, meas, config.dc_lambda)?;
    Ok((g.fft2c(k, true)?, states))
}

/// Tape handles produced by [`forward_graph`].
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// Final image σ⁽ᴺ⁾, `[t][2][y][x]`.
    pub image: Var,
    /// Final x-f estimate ρ⁽ᴺ⁾, `[f][2][y][x]`.
    pub xf: Var,
    /// `(ρ⁽ⁿ⁾, σ⁽ⁿ⁾)` for every cascade.
    pub cascades: Vec<(Var, Var)>,
}

/// Records the full N-cascade forward pass.
pub fn forward_graph(
    g: &mut Graph,
    meas: &Arc<KtMeasurement>,
    vars: &ModelVars,
    config: &KtNextConfig,
) -> Result<ForwardVars> {
    config.validate()?;
    let mut sigma = g.constant(Tensor4::from_volume(&zero_filled(meas)?));
    let mut hidden: Option<Vec<Var>> = None;
    let mut cascades = Vec::with_capacity(config.n_cascades);
    for n in 0..config.n_cascades {
        let cv = vars.cascade(n);
        let (residual, baseline) = xf_transform_graph(g, sigma, meas)?;
        let rho = xfcnn_graph(g, residual, baseline, cv, config)?;
        let img_in = g.fft_t(rho, true)?;
        let carried = if config.iteration_hidden { hidden.as_deref() } else { None };
        let (next, states) = crnn_graph(g, img_in, meas, cv, carried, config)?;
        hidden = Some(states);
        sigma = next;
        cascades.push((rho, sigma));
    }
    let &(xf, image) = cascades.last().expect("at least one cascade");
    Ok(ForwardVars { image, xf, cascades })
}

/// Hidden states carried between cascades, one tensor per recurrent layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CrnnHidden(pub Vec<Tensor4>);

/// Per-cascade outputs of [`ktnext_forward`].
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeOutput {
    pub xf: ComplexVolume,
    pub image: ComplexVolume,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KtNextOutput {
    pub image: ComplexVolume,
    pub xf: ComplexVolume,
    pub cascades: Vec<CascadeOutput>,
}

/// Reconstructs an image sequence from acquired k-t data.
pub fn ktnext_forward(m: &KtMeasurement, params: &ParamStore, config: &KtNextConfig) -> Result<KtNextOutput> {
    let meas = Arc::new(m.clone());
    let mut g = Graph::new();
    let vars = bind_model(&mut g, params, config, false)?;
    let fv = forward_graph(&mut g, &meas, &vars, config)?;
    let cascades = fv
        .cascades
        .iter()
        .map(|&(rho, sigma)| {
            Ok(CascadeOutput {
                xf: g.value(rho).to_volume(Domain::XF)?,
                image: g.value(sigma).to_volume(Domain::Image)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KtNextOutput {
        image: g.value(fv.image).to_volume(Domain::Image)?,
        xf: g.value(fv.xf).to_volume(Domain::XF)?,
        cascades,
    })
}

/// Applies the x-f network of cascade `cascade` to an [`XfPair`].
pub fn xfcnn_forward(pair: &XfPair, params: &ParamStore, config: &KtNextConfig, cascade: usize) -> Result<ComplexVolume> {
    pair.residual.ensure_same_shape(&pair.dc_baseline, "xf pair")?;
    let mut g = Graph::new();
    let vars = bind_model(&mut g, params, config, false)?;
    let r = g.constant(Tensor4::from_volume(&pair.residual));
    let b = g.constant(Tensor4::from_volume(&pair.dc_baseline));
    let rho = xfcnn_graph(&mut g, r, b, vars.cascade(cascade), config)?;
    g.value(rho).to_volume(Domain::XF)
}

/// Applies the image-domain block of cascade `cascade`.
pub fn crnn_recon(
    img_in: &ComplexVolume,
    m: &KtMeasurement,
    params: &ParamStore,
    config: &KtNextConfig,
    cascade: usize,
    hidden: Option<&CrnnHidden>,
) -> Result<(ComplexVolume, CrnnHidden)> {
    if img_in.domain() != Domain::Image {
        return Err(Error::WrongDomain {
            expected: "image",
            found: img_in.domain().name(),
        });
    }
    img_in.ensure_same_shape(m.kspace(), "crnn input")?;
    let meas = Arc::new(m.clone());
    let mut g = Graph::new();
    let vars = bind_model(&mut g, params, config, false)?;
    let x = g.constant(Tensor4::from_volume(img_in));
    let h: Option<Vec<Var>> = match hidden {
        Some(CrnnHidden(states)) if config.iteration_hidden => {
            if states.len() != config.crnn_layers {
                return Err(Error::DimensionMismatch("hidden state layer count".into()));
            }
            Some(states.iter().map(|s| g.constant(s.clone())).collect())
        }
        _ => None,
    };
    let (out, states) = crnn_graph(&mut g, x, &meas, vars.cascade(cascade), h.as_deref(), config)?;
    let hidden = CrnnHidden(states.iter().map(|&s| g.value(s).clone()).collect());
    Ok((g.value(out).to_volume(Domain::Image)?, hidden))
}
