use crate::error::{Error, Result};
use crate::upconv::{split_weights_5x5, UpConvWeights};

use super::weights::{Param, WeightContainer};

const NAIVE_SUFFIX: &str = ".conv5x5";
const FAST_SUFFIXES: [&str; 4] = [".conv3x3", ".conv3x2", ".conv2x3", ".conv2x2"];

/// Rewrites a container for a naive up-convolution decoder into one for the
/// interleaved decoder: every `<block>.conv5x5` becomes the four branch
/// kernels `<block>.conv3x3`, `.conv3x2`, `.conv2x3`, `.conv2x2`. All other
/// entries are copied unchanged, in order.
pub fn convert_upconv_weights(naive: &WeightContainer) -> Result<WeightContainer> {
    if let Some((name, _)) = naive
        .iter()
        .find(|(name, _)| FAST_SUFFIXES.iter().any(|s| name.ends_with(s)))
    {
        return Err(Error::InvalidModel(format!(
            "`{name}` is already an interleaved branch kernel; nothing to convert"
        )));
    }
    let mut out = WeightContainer::new();
    let mut converted = 0;
    for (name, param) in naive.iter() {
        let Some(block) = name.strip_suffix(NAIVE_SUFFIX) else {
            out.insert(name, param.clone())?;
            continue;
        };
        let Param::Conv(full) = param else {
            return Err(Error::Format(format!("`{name}` is not a convolution")));
        };
        let bn_key = format!("{block}.bn");
        let Some(Param::BatchNorm(bn)) = naive.get(&bn_key) else {
            return Err(Error::MissingWeight {
                layer: block.to_string(),
                key: bn_key,
            });
        };
        let split = split_weights_5x5(&UpConvWeights::new(full.clone(), bn.clone())?)
            .map_err(|e| e.at_layer(block))?;
        for (suffix, k) in FAST_SUFFIXES.iter().zip(split.branches()) {
            out.insert(format!("{block}{suffix}"), Param::Conv(k.clone()))?;
        }
        converted += 1;
    }
    if converted == 0 {
        return Err(Error::InvalidModel(
            "container has no up-convolution kernels to convert".into(),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_model, DecoderKind, ModelSpec};

    #[test]
    fn converted_container_resolves_fast_graph() {
        let naive = ModelSpec::preset("lite_interl", 64, 48)
            .unwrap()
            .with_decoder(DecoderKind::UpconvNaive);
        let fast = naive.with_decoder(DecoderKind::UpconvFast);
        let w = WeightContainer::random_for(&build_model(&naive).unwrap(), 3);
        let c = convert_upconv_weights(&w).unwrap();
        c.check_resolves(&build_model(&fast).unwrap()).unwrap();
        assert!(build_model(&fast).is_ok_and(|g| w.check_resolves(&g).is_err()));
    }

    #[test]
    fn weight_multiset_is_preserved() {
        let naive = ModelSpec::preset("lite_interl", 32, 32)
            .unwrap()
            .with_decoder(DecoderKind::UpconvNaive);
        let w = WeightContainer::random_for(&build_model(&naive).unwrap(), 5);
        let c = convert_upconv_weights(&w).unwrap();
        let bits = |c: &WeightContainer| {
            let mut v: Vec<u32> = c
                .iter()
                .flat_map(|(_, p)| p.values())
                .map(f32::to_bits)
                .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(bits(&w), bits(&c));
    }

    #[test]
    fn rejects_fast_and_non_upconv_containers() {
        let fast = ModelSpec::preset("lite_interl", 32, 32).unwrap();
        let w = WeightContainer::random_for(&build_model(&fast).unwrap(), 1);
        assert!(matches!(
            convert_upconv_weights(&w),
            Err(Error::InvalidModel(_))
        ));

        let nonbt = ModelSpec::preset("lite_sc_nonbt", 32, 32).unwrap();
        let w = WeightContainer::random_for(&build_model(&nonbt).unwrap(), 1);
        assert!(matches!(
            convert_upconv_weights(&w),
            Err(Error::InvalidModel(_))
        ));
    }
}
