//! Checkpoints: model weights plus `meta.*` records describing the
//! architecture, so reconstruction needs no extra flags.

use std::path::Path;

use ktnext::nn::{load_params, save_params, ParamStore};
use ktnext::{DcLambda, KtNextConfig, XfInputMode};

use crate::error::{at, CliError, CliResult};

const META: &str = "meta.";

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn meta_records(c: &KtNextConfig) -> Vec<(&'static str, f64)> {
    vec![
        ("n_cascades", c.n_cascades as f64),
        ("xf_layers", c.xf_layers as f64),
        ("crnn_layers", c.crnn_layers as f64),
        ("kernel", c.kernel as f64),
        ("dilation", c.dilation as f64),
        ("channels", c.channels as f64),
        ("dc_lambda", c.dc_lambda.value()),
        ("xf_residual_only", flag(c.xf_input_mode == XfInputMode::ResidualOnly)),
        ("share_weights", flag(c.share_weights)),
        ("iteration_hidden", flag(c.iteration_hidden)),
        ("intermediate_supervision", flag(c.intermediate_supervision)),
    ]
}

pub fn save(path: &Path, params: &ParamStore, config: &KtNextConfig) -> CliResult<()> {
    let mut store = params.clone();
    for (name, v) in meta_records(config) {
        store.insert(format!("{META}{name}"), vec![1], vec![v])?;
    }
    save_params(path, &store).map_err(at(path))
}

pub fn load(path: &Path) -> CliResult<(ParamStore, KtNextConfig)> {
    let all = load_params(path).map_err(at(path))?;
    let meta = |name: &str| -> CliResult<f64> {
        all.by_name(&format!("{META}{name}"))
            .and_then(|p| p.data.first().copied())
            .ok_or_else(|| CliError::Format(format!("{}: missing {META}{name}", path.display())))
    };
    let count = |name: &str| -> CliResult<usize> {
        let v = meta(name)?;
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(CliError::Format(format!("{}: {META}{name} = {v}", path.display())))
        }
    };
    let config = KtNextConfig {
        n_cascades: count("n_cascades")?,
        xf_layers: count("xf_layers")?,
        crnn_layers: count("crnn_layers")?,
        kernel: count("kernel")?,
        dilation: count("dilation")?,
        channels: count("channels")?,
        dc_lambda: DcLambda::new(meta("dc_lambda")?).map_err(|e| CliError::Format(e.to_string()))?,
        xf_input_mode: if meta("xf_residual_only")? != 0.0 {
            XfInputMode::ResidualOnly
        } else {
            XfInputMode::ResidualPlusBaseline
        },
        share_weights: meta("share_weights")? != 0.0,
        iteration_hidden: meta("iteration_hidden")? != 0.0,
        intermediate_supervision: meta("intermediate_supervision")? != 0.0,
    };
    let mut params = ParamStore::new();
    for p in all.iter().filter(|p| !p.name.starts_with(META)) {
        params.insert(p.name.clone(), p.shape.clone(), p.data.clone())?;
    }
    config
        .check_params(&params)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok((params, config))
}
