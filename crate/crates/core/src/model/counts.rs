use num_rational::Ratio;

use super::{ModelConfig, Network};
use crate::error::{Error, Result};

/// Nominal fully connected weight counts: a single joint compressor
/// (`baseline`), the three-stream encoder and the two-stream decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcCounts {
    pub baseline: Ratio<i128>,
    pub encoder: Ratio<i128>,
    pub decoder: Ratio<i128>,
}

/// Exact conversion of a compression ratio given as a float.
pub fn sigma_ratio(sigma: f64) -> Result<Ratio<i128>> {
    let r = Ratio::<i128>::approximate_float(sigma)
        .ok_or_else(|| Error::Config(format!("compression ratio {sigma} is not representable")))?;
    if r <= Ratio::from_integer(1) {
        return Err(Error::Config(format!("compression ratio must exceed 1, got {sigma}")));
    }
    Ok(r)
}

/// Weight counts (biases excluded) using the nominal, possibly fractional,
/// latent lengths.
pub fn count_fc_params(n_s: u64, n_t: u64, sigma: Ratio<i128>) -> FcCounts {
    let area = Ratio::from_integer(i128::from(n_s) * i128::from(n_t));
    // A joint codec maps the 2 n_s n_t real inputs to 2 n_s n_t / sigma.
    let baseline = (area * 2) * (area * 2 / sigma);
    // Three streams of length 2 n_s n_t / (3 sigma), each from n_s n_t inputs.
    let stream = area * 2 / (sigma * 3);
    let encoder = area * stream * 3;
    // Two decoders, each expanding 2 streams back to n_s n_t.
    let decoder = (stream * 2) * area * 2;
    FcCounts {
        baseline,
        encoder,
        decoder,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamBreakdown {
    pub encoder_fc: usize,
    pub decoder_fc: usize,
    pub encoder_conv: usize,
    pub decoder_conv: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.encoder_fc + self.decoder_fc + self.encoder_conv + self.decoder_conv
    }

    pub fn conv(&self) -> usize {
        self.encoder_conv + self.decoder_conv
    }
}

/// Learnable element counts of the concrete network (biases and
/// normalization affine parameters included, running statistics excluded).
pub fn count_params_actual(config: &ModelConfig) -> Result<ParamBreakdown> {
    let net = Network::new(config.clone())?;
    let layout = net.param_layout::<f32>();
    let mut b = ParamBreakdown::default();
    for spec in layout.specs() {
        let fc = spec.name.contains(".fc");
        let slot = match (spec.name.starts_with("enc."), fc) {
            (true, true) => &mut b.encoder_fc,
            (true, false) => &mut b.encoder_conv,
            (false, true) => &mut b.decoder_fc,
            (false, false) => &mut b.decoder_conv,
        };
        *slot += spec.len();
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_grid() {
        let c = count_fc_params(32, 32, Ratio::from_integer(8));
        assert_eq!(c.baseline, Ratio::from_integer(524_288));
        assert_eq!(c.encoder, Ratio::from_integer(262_144));
        assert_eq!(c.decoder, Ratio::new(1_048_576, 3));
    }

    #[test]
    fn breakdown_structure() {
        let cfg = ModelConfig::new(32, 32, 8.0).unwrap().with_trunk(4, 1, 1).unwrap();
        let b = count_params_actual(&cfg).unwrap();
        let m = cfg.latent_len;
        assert_eq!(b.encoder_fc, 3 * (1024 * m + m));
        assert_eq!(b.decoder_fc, 2 * (2 * m * 1024 + 1024));
        let net = Network::new(cfg).unwrap();
        assert_eq!(b.total(), net.param_layout::<f32>().len());
    }

    #[test]
    fn trunk_width_only_touches_decoder_conv() {
        let base = ModelConfig::new(16, 16, 8.0).unwrap().with_trunk(4, 2, 2).unwrap();
        let wide = base.clone().with_trunk(4, 2, 4).unwrap();
        let (a, b) = (count_params_actual(&base).unwrap(), count_params_actual(&wide).unwrap());
        assert_eq!(a.encoder_fc, b.encoder_fc);
        assert_eq!(a.decoder_fc, b.decoder_fc);
        assert_eq!(a.encoder_conv, b.encoder_conv);
        // Two pointwise heads of 2x2 weights plus 2 biases sit outside the paths.
        let heads = 2 * 6;
        assert_eq!(b.decoder_conv - heads, 2 * (a.decoder_conv - heads));
    }

    #[test]
    fn conv_counts_do_not_depend_on_sigma() {
        let a = count_params_actual(&ModelConfig::new(16, 16, 4.0).unwrap().with_trunk(4, 1, 1).unwrap()).unwrap();
        let b = count_params_actual(&ModelConfig::new(16, 16, 32.0).unwrap().with_trunk(4, 1, 1).unwrap()).unwrap();
        assert_eq!(a.conv(), b.conv());
        assert_ne!(a.encoder_fc, b.encoder_fc);
    }

    proptest! {
        #[test]
        fn ratios_hold_exactly(n_s in 1u64..128, half in 1u64..64, num in 2i128..200, den in 1i128..7) {
            let sigma = Ratio::new(num, den);
            prop_assume!(sigma > Ratio::from_integer(1));
            let c = count_fc_params(n_s, 2 * half, sigma);
            prop_assert_eq!(c.encoder, c.baseline / 2);
            prop_assert_eq!(c.decoder, c.baseline * 2 / 3);
        }
    }
}
