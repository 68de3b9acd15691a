use std::fmt;
use std::str::FromStr;

use image::RgbImage;

use super::{extract_edge_magnitude, extract_smoothed_color, stack_feature_maps, FeatureMap};
use crate::error::{Error, Result};

/// One feature family contributing channels to a view's stacked map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureComponent {
    /// Edge-preserving smoothed RGB (3 channels).
    Color,
    /// Gradient magnitude (1 channel).
    Edge,
    /// Channels read from an FMAP file produced by an external tool.
    Precomputed,
}

impl FeatureComponent {
    pub fn name(&self) -> &'static str {
        match self {
            FeatureComponent::Color => "color",
            FeatureComponent::Edge => "edge",
            FeatureComponent::Precomputed => "fmap",
        }
    }

    pub fn needs_image(&self) -> bool {
        !matches!(self, FeatureComponent::Precomputed)
    }
}

impl FromStr for FeatureComponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "color" => Ok(FeatureComponent::Color),
            "edge" => Ok(FeatureComponent::Edge),
            "fmap" => Ok(FeatureComponent::Precomputed),
            other => Err(Error::Config(format!("unknown feature component `{other}`"))),
        }
    }
}

/// Ordered list of feature components stacked into one map.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeaturePipeline(pub Vec<FeatureComponent>);

impl FeaturePipeline {
    pub fn precomputed() -> Self {
        FeaturePipeline(vec![FeatureComponent::Precomputed])
    }

    pub fn needs_image(&self) -> bool {
        self.0.iter().any(FeatureComponent::needs_image)
    }

    pub fn needs_fmap(&self) -> bool {
        self.0.contains(&FeatureComponent::Precomputed)
    }

    /// Runs each component and stacks the results in order.
    pub fn extract(&self, image: Option<&RgbImage>, precomputed: Option<&FeatureMap>) -> Result<FeatureMap> {
        let mut maps = Vec::with_capacity(self.0.len());
        for c in &self.0 {
            let map = match c {
                FeatureComponent::Color => extract_smoothed_color(
                    image.ok_or_else(|| Error::InvalidInput("color features need an image".into()))?,
                )?,
                FeatureComponent::Edge => extract_edge_magnitude(
                    image.ok_or_else(|| Error::InvalidInput("edge features need an image".into()))?,
                )?,
                FeatureComponent::Precomputed => precomputed
                    .ok_or_else(|| Error::InvalidInput("missing precomputed feature map".into()))?
                    .clone(),
            };
            maps.push(map);
        }
        stack_feature_maps(&maps)
    }
}

impl fmt::Display for FeaturePipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(FeatureComponent::name).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for FeaturePipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let comps = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        if comps.is_empty() {
            return Err(Error::Config("empty feature pipeline".into()));
        }
        Ok(FeaturePipeline(comps))
    }
}
