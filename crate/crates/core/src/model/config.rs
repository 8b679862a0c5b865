use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::params::{he_init_with, ParamStore};
use crate::xf::DcLambda;

/// What the x-f network sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XfInputMode {
    /// Residual against the baseline only (2 channels).
    ResidualOnly,
    /// Residual and data-consistent baseline, channel-concatenated (4 channels).
    ResidualPlusBaseline,
}

impl XfInputMode {
    pub fn channels(self) -> usize {
        match self {
            XfInputMode::ResidualOnly => 2,
            XfInputMode::ResidualPlusBaseline => 4,
        }
    }
}

impl fmt::Display for XfInputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XfInputMode::ResidualOnly => "residual_only",
            XfInputMode::ResidualPlusBaseline => "residual_plus_baseline",
        })
    }
}

impl FromStr for XfInputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual_only" => Ok(XfInputMode::ResidualOnly),
            "residual_plus_baseline" => Ok(XfInputMode::ResidualPlusBaseline),
            other => Err(Error::InvalidArgument(format!("unknown xf input mode {other:?}"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct KtNextConfig {
    pub n_cascades: usize,
    /// Convolutions in the x-f network, including the 2-channel output layer.
    pub xf_layers: usize,
    /// Bidirectional recurrent layers in the image-domain block.
    pub crnn_layers: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub channels: usize,
    pub dc_lambda: DcLambda,
    pub xf_input_mode: XfInputMode,
    pub share_weights: bool,
    /// Feed each recurrent layer its own output from the previous cascade.
    pub iteration_hidden: bool,
    /// Supervise every cascade instead of only the last.
    pub intermediate_supervision: bool,
}

impl Default for KtNextConfig {
    fn default() -> Self {
        Self {
            n_cascades: 4,
            xf_layers: 5,
            crnn_layers: 4,
            kernel: 3,
            dilation: 3,
            channels: 16,
            dc_lambda: DcLambda::Hard,
            xf_input_mode: XfInputMode::ResidualPlusBaseline,
            share_weights: true,
            iteration_hidden: true,
            intermediate_supervision: false,
        }
    }
}

impl KtNextConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_cascades", self.n_cascades),
            ("xf_layers", self.xf_layers),
            ("crnn_layers", self.crnn_layers),
            ("channels", self.channels),
            ("dilation", self.dilation),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
            }
        }
        if self.kernel % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel {} must be odd", self.kernel)));
        }
        if let DcLambda::Soft(l) = self.dc_lambda {
            if !(l >= 0.0) {
                return Err(Error::InvalidArgument("dc_lambda must be >= 0".into()));
            }
        }
        Ok(())
    }

    /// Number of distinct weight sets.
    pub fn weight_sets(&self) -> usize {
        if self.share_weights {
            1
        } else {
            self.n_cascades
        }
    }

    pub(crate) fn prefix(&self, cascade: usize) -> String {
        if self.share_weights {
            String::new()
        } else {
            format!("cascade{cascade}.")
        }
    }

    /// `(c_in, c_out)` of every x-f convolution.
    pub fn xf_channels(&self) -> Vec<(usize, usize)> {
        let c = self.channels;
        (0..self.xf_layers)
            .map(|i| {
                let c_in = if i == 0 { self.xf_input_mode.channels() } else { c };
                let c_out = if i + 1 == self.xf_layers { 2 } else { c };
                (c_in, c_out)
            })
            .collect()
    }

    /// Closed-form parameter count for this architecture.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let c = self.channels;
        let xf: usize = self.xf_channels().iter().map(|&(i, o)| i * o * k2 + o).sum();
        let recurrent = if self.iteration_hidden { 2 } else { 1 };
        let crnn: usize = (0..self.crnn_layers)
            .map(|l| {
                let c_in = if l == 0 { 2 } else { c };
                c_in * c * k2 + recurrent * c * c * k2 + c
            })
            .sum();
        let out = c * 2 * k2 + 2;
        (xf + crnn + out) * self.weight_sets()
    }

    /// Allocates the parameter layout and initialises it deterministically.
    /// The input, hidden and iteration convolutions of a recurrent layer
    /// share one fan-in: the sum over all three.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut store = self.zero_params()?;
        let k2 = self.kernel * self.kernel;
        let c = self.channels;
        let recurrent = if self.iteration_hidden { 2 * c } else { c };
        he_init_with(&mut store, seed, |p| {
            let own: usize = p.shape[1..].iter().product();
            let in_cell = p.name.contains(".crnn.layer") || p.name.starts_with("crnn.layer");
            if in_cell {
                let c_in = if p.name.contains("layer0.") { 2 } else { c };
                (c_in + recurrent) * k2
            } else {
                own
            }
        });
        Ok(store)
    }

    /// Parameter layout with every value zero.
    pub fn zero_params(&self) -> Result<ParamStore> {
        self.validate()?;
        let k = self.kernel;
        let c = self.channels;
        let mut s = ParamStore::new();
        for set in 0..self.weight_sets() {
            let p = self.prefix(set);
            for (i, (c_in, c_out)) in self.xf_channels().into_iter().enumerate() {
                s.zeros(format!("{p}xf.conv{i}.weight"), vec![c_out, c_in, k, k])?;
                s.zeros(format!("{p}xf.conv{i}.bias"), vec![c_out])?;
            }
            for l in 0..self.crnn_layers {
                let c_in = if l == 0 { 2 } else { c };
                s.zeros(format!("{p}crnn.layer{l}.input.weight"), vec![c, c_in, k, k])?;
                s.zeros(format!("{p}crnn.layer{l}.hidden.weight"), vec![c, c, k, k])?;
                if self.iteration_hidden {
                    s.zeros(format!("{p}crnn.layer{l}.iteration.weight"), vec![c, c, k, k])?;
                }
                s.zeros(format!("{p}crnn.layer{l}.bias"), vec![c])?;
            }
            s.zeros(format!("{p}crnn.out.weight"), vec![2, c, k, k])?;
            s.zeros(format!("{p}crnn.out.bias"), vec![2])?;
        }
        Ok(s)
    }

    pub fn check_params(&self, store: &ParamStore) -> Result<()> {
        if !self.zero_params()?.same_layout(store) {
            return Err(Error::ParamMismatch(
                "parameter names or shapes do not match the configuration".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_architecture() {
        let c = KtNextConfig::default();
        assert_eq!((c.n_cascades, c.xf_layers, c.crnn_layers), (4, 5, 4));
        assert_eq!((c.kernel, c.dilation), (3, 3));
        assert_eq!(c.dc_lambda, DcLambda::Hard);
    }

    #[test]
    fn layout_count_matches_formula() {
        for share in [true, false] {
            for iteration_hidden in [true, false] {
                for mode in [XfInputMode::ResidualOnly, XfInputMode::ResidualPlusBaseline] {
                    let cfg = KtNextConfig {
                        n_cascades: 3,
                        channels: 5,
                        share_weights: share,
                        iteration_hidden,
                        xf_input_mode: mode,
                        ..Default::default()
                    };
                    assert_eq!(cfg.zero_params().unwrap().total_count(), cfg.parameter_count());
                }
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = KtNextConfig {
            n_cascades: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = KtNextConfig {
            kernel: 4,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn layout_mismatch_detected() {
        let a = KtNextConfig::default();
        let b = KtNextConfig {
            channels: 8,
            ..Default::default()
        };
        assert!(a.check_params(&b.zero_params().unwrap()).is_err());
        assert!(a.check_params(&a.init_params(1).unwrap()).is_ok());
    }
}
