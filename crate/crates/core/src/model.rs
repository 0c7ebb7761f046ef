//! ViT geometry and the token/byte arithmetic derived from it.
//!
//! A [`ModelSpec`] captures everything the planning stack needs to know about
//! a transformer variant: how many encoder layers it has, how the input is
//! carved into patches (which fixes the initial token count), and how many
//! bytes one token occupies on the wire.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

/// Input geometry as `(frames, height, width, channels)`.
///
/// Single images use `frames = 1`; video clips use the clip length.
pub type InputDims = (u32, u32, u32, u32);

/// Patch geometry as `(frames, height, width)`. A patch always covers every
/// channel, so channels do not appear here.
pub type PatchDims = (u32, u32, u32);

/// Geometry of one ViT variant.
///
/// Immutable value type; share freely across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Identifier used in configs and on the wire.
    pub name: String,
    /// Number of transformer encoder layers.
    pub num_layers: u32,
    /// Input dimensions `(frames, height, width, channels)` in pixels/frames.
    pub input_dims: InputDims,
    /// Patch dimensions `(frames, height, width)` in pixels/frames.
    pub patch_dims: PatchDims,
    /// Elements per token embedding.
    pub embed_dim: u32,
    /// Bytes per embedding element (4 for f32).
    pub bytes_per_element: u32,
    /// Extra non-patch tokens (class token etc.), never pruned away by count.
    pub special_tokens: u32,
    /// Constant device-side cost (embedding) charged when the device runs at
    /// least one layer.
    #[serde(default)]
    pub device_overhead_ms: f64,
    /// Constant cloud-side cost (task head) charged when the cloud runs at
    /// least one layer.
    #[serde(default)]
    pub cloud_overhead_ms: f64,
    /// Bytes of the final inference result, transferred only in the
    /// device-only configuration.
    #[serde(default)]
    pub result_payload_bytes: u64,
}

impl ModelSpec {
    /// Validate the geometry invariants. Every constructor and loader calls
    /// this; call it again after mutating fields by hand.
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 {
            return Err(Error::Validation(format!(
                "{}: num_layers must be >= 1",
                self.name
            )));
        }
        if self.embed_dim < 1 || self.bytes_per_element < 1 {
            return Err(Error::Validation(format!(
                "{}: embed_dim and bytes_per_element must be >= 1",
                self.name
            )));
        }
        let (fi, hi, wi, _c) = self.input_dims;
        let (fp, hp, wp) = self.patch_dims;
        for (axis, input, patch) in [("frames", fi, fp), ("height", hi, hp), ("width", wi, wp)] {
            if patch == 0 || input == 0 {
                return Err(Error::Validation(format!(
                    "{}: {axis} dimensions must be nonzero",
                    self.name
                )));
            }
            if input % patch != 0 {
                return Err(Error::Validation(format!(
                    "{}: patch {axis} {patch} does not divide input {axis} {input}",
                    self.name
                )));
            }
        }
        if !self.device_overhead_ms.is_finite()
            || !self.cloud_overhead_ms.is_finite()
            || self.device_overhead_ms < 0.0
            || self.cloud_overhead_ms < 0.0
        {
            return Err(Error::Validation(format!(
                "{}: overheads must be finite and non-negative",
                self.name
            )));
        }
        Ok(())
    }

    /// Load a spec from a JSON document. Unknown fields are rejected.
    pub fn from_json(json: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(json)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Load a spec from a JSON file.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Number of tokens entering layer 1: the patch grid product plus any
    /// special tokens.
    pub fn initial_token_count(&self) -> u64 {
        let (fi, hi, wi, _c) = self.input_dims;
        let (fp, hp, wp) = self.patch_dims;
        let patches = u64::from(fi / fp) * u64::from(hi / hp) * u64::from(wi / wp);
        patches + u64::from(self.special_tokens)
    }

    /// Bytes occupied by `tokens` uncompressed fixed-width embeddings.
    pub fn token_payload_bytes(&self, tokens: u64) -> u64 {
        tokens * u64::from(self.embed_dim) * u64::from(self.bytes_per_element)
    }

    /// Bytes of a single token embedding.
    pub fn bytes_per_token(&self) -> u64 {
        u64::from(self.embed_dim) * u64::from(self.bytes_per_element)
    }

    /// ViT-B at 224x224: 12 layers, 16x16 patches, 768-wide embeddings.
    pub fn vit_b() -> Self {
        Self {
            name: "vit-b".into(),
            num_layers: 12,
            input_dims: (1, 224, 224, 3),
            patch_dims: (1, 16, 16),
            embed_dim: 768,
            bytes_per_element: 4,
            special_tokens: 1,
            device_overhead_ms: 0.0,
            cloud_overhead_ms: 0.0,
            result_payload_bytes: 0,
        }
    }

    /// ViT-L at 384x384: 24 layers, 16x16 patches, 1024-wide embeddings.
    pub fn vit_l_384() -> Self {
        Self {
            name: "vit-l-384".into(),
            num_layers: 24,
            input_dims: (1, 384, 384, 3),
            patch_dims: (1, 16, 16),
            embed_dim: 1024,
            bytes_per_element: 4,
            special_tokens: 1,
            device_overhead_ms: 0.0,
            cloud_overhead_ms: 0.0,
            result_payload_bytes: 0,
        }
    }

    /// Video ViT-L over 16x224x224 clips with 2x16x16 patches.
    pub fn video_vit_l() -> Self {
        Self {
            name: "video-vit-l".into(),
            num_layers: 24,
            input_dims: (16, 224, 224, 3),
            patch_dims: (2, 16, 16),
            embed_dim: 1024,
            bytes_per_element: 4,
            special_tokens: 1,
            device_overhead_ms: 0.0,
            cloud_overhead_ms: 0.0,
            result_payload_bytes: 0,
        }
    }

    /// Minimal spec for tests: `tokens` patch tokens, no special token.
    pub fn toy(name: &str, num_layers: u32, tokens: u32) -> Self {
        Self {
            name: name.into(),
            num_layers,
            input_dims: (1, tokens, 1, 1),
            patch_dims: (1, 1, 1),
            embed_dim: 1,
            bytes_per_element: 4,
            special_tokens: 0,
            device_overhead_ms: 0.0,
            cloud_overhead_ms: 0.0,
            result_payload_bytes: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn vit_b_has_197_tokens() {
        let spec = ModelSpec::vit_b();
        spec.validate().unwrap();
        assert_eq!(spec.initial_token_count(), 197);
    }

    #[test]
    fn vit_l_384_has_577_tokens() {
        let spec = ModelSpec::vit_l_384();
        spec.validate().unwrap();
        assert_eq!(spec.initial_token_count(), 577);
    }

    #[test]
    fn video_vit_l_has_1569_tokens() {
        let spec = ModelSpec::video_vit_l();
        spec.validate().unwrap();
        assert_eq!(spec.initial_token_count(), 1569);
    }

    #[test]
    fn vit_b_payload_matches_uncompressed_size() {
        let spec = ModelSpec::vit_b();
        // 197 tokens x 768 elements x 4 bytes.
        assert_eq!(spec.token_payload_bytes(197), 605_184);
    }

    #[test]
    fn zero_tokens_zero_payload() {
        assert_eq!(ModelSpec::vit_b().token_payload_bytes(0), 0);
    }

    #[test]
    fn single_wide_token_payload() {
        let mut spec = ModelSpec::toy("wide", 1, 4);
        spec.embed_dim = 1024;
        assert_eq!(spec.token_payload_bytes(1), 4096);
    }

    #[test]
    fn non_divisible_patch_rejected() {
        let mut spec = ModelSpec::vit_b();
        spec.patch_dims = (1, 15, 16);
        assert!(matches!(spec.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_layers_rejected() {
        let mut spec = ModelSpec::vit_b();
        spec.num_layers = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn unknown_json_field_rejected() {
        let json = r#"{
            "name": "x", "num_layers": 1,
            "input_dims": [1, 16, 16, 3], "patch_dims": [1, 16, 16],
            "embed_dim": 8, "bytes_per_element": 4, "special_tokens": 0,
            "bogus_field": 1
        }"#;
        assert!(ModelSpec::from_json(json).is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = ModelSpec::vit_l_384();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(ModelSpec::from_json(&json).unwrap(), spec);
    }

    proptest! {
        // Swapping the spatial axes together with the patch grid leaves the
        // token count unchanged.
        #[test]
        fn token_count_invariant_under_axis_swap(
            h in 1u32..8, w in 1u32..8, ph in 1u32..4, pw in 1u32..4, special in 0u32..3
        ) {
            let spec = ModelSpec {
                name: "p".into(),
                num_layers: 1,
                input_dims: (1, h * ph, w * pw, 3),
                patch_dims: (1, ph, pw),
                embed_dim: 8,
                bytes_per_element: 4,
                special_tokens: special,
                device_overhead_ms: 0.0,
                cloud_overhead_ms: 0.0,
                result_payload_bytes: 0,
            };
            let mut swapped = spec.clone();
            swapped.input_dims = (1, w * pw, h * ph, 3);
            swapped.patch_dims = (1, pw, ph);
            prop_assert_eq!(spec.initial_token_count(), swapped.initial_token_count());
        }

        // Payload size is linear in the token count.
        #[test]
        fn payload_is_linear(a in 0u64..10_000, b in 0u64..10_000) {
            let spec = ModelSpec::vit_b();
            prop_assert_eq!(
                spec.token_payload_bytes(a + b),
                spec.token_payload_bytes(a) + spec.token_payload_bytes(b)
            );
        }
    }
}
