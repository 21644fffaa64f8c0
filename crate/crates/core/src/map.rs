//! Dense per-pixel arrays and the sample stacks built from them.
//!
//! A [`DenseMap`] is an `H x W x C` array stored row-major with the channel
//! axis innermost, tagged with a [`MapKind`] that fixes how its values are
//! interpreted. Binary tasks use a single Bernoulli channel.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, UqError};

/// Tolerance on the per-pixel channel sum of a categorical probability map.
pub const SIMPLEX_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Probability,
    Logit,
    Real,
    Label,
    Uncertainty,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MapKind::Probability => "probability",
            MapKind::Logit => "logit",
            MapKind::Real => "real",
            MapKind::Label => "label",
            MapKind::Uncertainty => "uncertainty",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for MapKind {
    type Err = UqError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "probability" => Ok(MapKind::Probability),
            "logit" => Ok(MapKind::Logit),
            "real" => Ok(MapKind::Real),
            "label" => Ok(MapKind::Label),
            "uncertainty" => Ok(MapKind::Uncertainty),
            other => Err(UqError::config(format!("unknown map kind `{other}`"))),
        }
    }
}

/// Spatial and channel extent of a map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_spatial(&self, other: &Shape) -> bool {
        self.height == other.height && self.width == other.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMap {
    shape: Shape,
    values: Vec<f64>,
    kind: MapKind,
}

impl DenseMap {
    /// Builds a map after checking the length and the invariants of `kind`.
    pub fn new(shape: Shape, values: Vec<f64>, kind: MapKind) -> Result<Self> {
        if shape.channels == 0 {
            return Err(UqError::shape("a map needs at least one channel"));
        }
        if values.len() != shape.len() {
            return Err(UqError::shape(format!(
                "{} values do not fill a {shape} map",
                values.len()
            )));
        }
        let map = DenseMap {
            shape,
            values,
            kind,
        };
        map.validate()?;
        Ok(map)
    }

    /// Single-channel convenience constructor.
    pub fn from_vec(height: usize, width: usize, values: Vec<f64>, kind: MapKind) -> Result<Self> {
        Self::new(Shape::new(height, width, 1), values, kind)
    }

    pub fn filled(shape: Shape, value: f64, kind: MapKind) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()], kind)
    }

    /// Creates a map without validating kind invariants. Used for internal
    /// results whose invariants hold by construction.
    pub(crate) fn raw(shape: Shape, values: Vec<f64>, kind: MapKind) -> Self {
        debug_assert_eq!(values.len(), shape.len());
        DenseMap {
            shape,
            values,
            kind,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            MapKind::Probability => {
                for (i, &v) in self.values.iter().enumerate() {
                    if v.is_nan() {
                        return Err(UqError::invalid(format!("NaN probability at index {i}")));
                    }
                    if !(0.0..=1.0).contains(&v) {
                        return Err(UqError::invalid(format!(
                            "probability {v} at index {i} is outside [0, 1]"
                        )));
                    }
                }
                if self.shape.channels >= 2 {
                    for (p, px) in self.values.chunks(self.shape.channels).enumerate() {
                        let sum: f64 = px.iter().sum();
                        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                            return Err(UqError::invalid(format!(
                                "channel sum {sum} at pixel {p} is not 1"
                            )));
                        }
                    }
                }
            }
            MapKind::Label => {
                for (i, &v) in self.values.iter().enumerate() {
                    if !(v >= 0.0 && v.fract() == 0.0 && v.is_finite()) {
                        return Err(UqError::invalid(format!(
                            "label {v} at index {i} is not a non-negative integer"
                        )));
                    }
                }
            }
            MapKind::Real | MapKind::Logit | MapKind::Uncertainty => {
                if let Some(i) = self.values.iter().position(|v| v.is_nan()) {
                    return Err(UqError::invalid(format!("NaN at index {i}")));
                }
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Channel values of pixel `index` (row-major pixel order).
    pub fn pixel(&self, index: usize) -> &[f64] {
        let c = self.shape.channels;
        &self.values[index * c..(index + 1) * c]
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.shape.width + col) * self.shape.channels + channel]
    }

    /// Reinterprets the map under another kind, re-checking invariants.
    pub fn with_kind(self, kind: MapKind) -> Result<Self> {
        DenseMap::new(self.shape, self.values, kind)
    }

    /// Checks that labels are below `classes`.
    pub fn check_labels(&self, classes: usize) -> Result<()> {
        self.expect_kind(MapKind::Label)?;
        if let Some(v) = self.values.iter().find(|&&v| v as usize >= classes) {
            return Err(UqError::invalid(format!(
                "label {v} is out of range for {classes} classes"
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_kind(&self, kind: MapKind) -> Result<()> {
        if self.kind != kind {
            return Err(UqError::KindMismatch {
                expected: kind,
                found: self.kind,
            });
        }
        Ok(())
    }

    pub fn expect_single_channel(&self, what: &str) -> Result<()> {
        if self.shape.channels != 1 {
            return Err(UqError::shape(format!(
                "{what} must be single-channel, got {} channels",
                self.shape.channels
            )));
        }
        Ok(())
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Per-image min-max rescaling to `[0, 1]`. Returns `None` when the map is
    /// constant (range below `1e-12` relative to its magnitude), since the
    /// rescaling is then undefined.
    pub fn normalized(&self) -> Option<DenseMap> {
        let (lo, hi) = self.min_max();
        let range = hi - lo;
        let scale = lo.abs().max(hi.abs()).max(1.0);
        if !(range > 1e-12 * scale) || !range.is_finite() {
            return None;
        }
        let values = self
            .values
            .iter()
            .map(|&v| ((v - lo) / range).clamp(0.0, 1.0))
            .collect();
        Some(DenseMap::raw(self.shape, values, self.kind))
    }

    /// Min-max normalization that maps a constant map to all zeros.
    pub fn normalized_or_zero(&self) -> DenseMap {
        self.normalized()
            .unwrap_or_else(|| DenseMap::raw(self.shape, vec![0.0; self.shape.len()], self.kind))
    }
}

/// Where a sample stack came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    McDropout,
    DeepEnsemble,
    Snapshot,
    Cvae,
    Gan,
    Abp,
    Ebm,
    External,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Origin::McDropout => "mc_dropout",
            Origin::DeepEnsemble => "deep_ensemble",
            Origin::Snapshot => "snapshot",
            Origin::Cvae => "cvae",
            Origin::Gan => "gan",
            Origin::Abp => "abp",
            Origin::Ebm => "ebm",
            Origin::External => "external",
        };
        f.write_str(name)
    }
}

fn check_uniform(maps: &[DenseMap], what: &str) -> Result<(Shape, MapKind)> {
    let first = maps
        .first()
        .ok_or_else(|| UqError::EmptyInput(format!("{what} has no maps")))?;
    for (i, m) in maps.iter().enumerate().skip(1) {
        if m.shape() != first.shape() {
            return Err(UqError::shape(format!(
                "{what}: map {i} has shape {} but map 0 has {}",
                m.shape(),
                first.shape()
            )));
        }
        if m.kind() != first.kind() {
            return Err(UqError::KindMismatch {
                expected: first.kind(),
                found: m.kind(),
            });
        }
    }
    Ok((first.shape(), first.kind()))
}

fn check_heads(heads: &[DenseMap], shape: Shape) -> Result<()> {
    for (i, h) in heads.iter().enumerate() {
        if h.shape() != shape {
            return Err(UqError::shape(format!(
                "variance head {i} has shape {} but samples have {shape}",
                h.shape()
            )));
        }
        if let Some(v) = h.values().iter().find(|v| !(**v >= 0.0)) {
            return Err(UqError::invalid(format!(
                "variance head {i} contains {v}, variances must be non-negative"
            )));
        }
    }
    Ok(())
}

/// `T` sampled dense predictions, optionally with per-sample variance heads.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStack {
    samples: Vec<DenseMap>,
    variance_heads: Option<Vec<DenseMap>>,
    pub origin: Origin,
    pub seed: u64,
}

impl SampleStack {
    pub fn new(samples: Vec<DenseMap>, origin: Origin, seed: u64) -> Result<Self> {
        check_uniform(&samples, "sample stack")?;
        Ok(SampleStack {
            samples,
            variance_heads: None,
            origin,
            seed,
        })
    }

    pub fn with_variance_heads(mut self, heads: Vec<DenseMap>) -> Result<Self> {
        if heads.len() != self.samples.len() {
            return Err(UqError::shape(format!(
                "{} variance heads for {} samples",
                heads.len(),
                self.samples.len()
            )));
        }
        check_heads(&heads, self.shape())?;
        self.variance_heads = Some(heads);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[DenseMap] {
        &self.samples
    }

    pub fn variance_heads(&self) -> Option<&[DenseMap]> {
        self.variance_heads.as_deref()
    }

    pub fn shape(&self) -> Shape {
        self.samples[0].shape()
    }

    pub fn kind(&self) -> MapKind {
        self.samples[0].kind()
    }
}

/// Two-axis stack: `M` parameter samples, each holding `S` latent samples.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedSampleStack {
    groups: Vec<Vec<DenseMap>>,
    variance_heads: Option<Vec<Vec<DenseMap>>>,
}

impl NestedSampleStack {
    pub fn new(groups: Vec<Vec<DenseMap>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(UqError::EmptyInput("nested stack has no groups".into()));
        }
        let inner = groups[0].len();
        if groups.iter().any(|g| g.len() != inner) {
            return Err(UqError::shape("every group needs the same number of latent samples"));
        }
        let flat: Vec<DenseMap> = groups.iter().flatten().cloned().collect();
        check_uniform(&flat, "nested stack")?;
        Ok(NestedSampleStack {
            groups,
            variance_heads: None,
        })
    }

    pub fn with_variance_heads(mut self, heads: Vec<Vec<DenseMap>>) -> Result<Self> {
        if heads.len() != self.groups.len()
            || heads.iter().any(|g| g.len() != self.latent_samples())
        {
            return Err(UqError::shape("variance heads must match the M x S grid"));
        }
        let flat: Vec<DenseMap> = heads.iter().flatten().cloned().collect();
        check_heads(&flat, self.shape())?;
        self.variance_heads = Some(heads);
        Ok(self)
    }

    pub fn groups(&self) -> &[Vec<DenseMap>] {
        &self.groups
    }

    pub fn variance_heads(&self) -> Option<&[Vec<DenseMap>]> {
        self.variance_heads.as_deref()
    }

    pub fn parameter_samples(&self) -> usize {
        self.groups.len()
    }

    pub fn latent_samples(&self) -> usize {
        self.groups[0].len()
    }

    pub fn shape(&self) -> Shape {
        self.groups[0][0].shape()
    }

    pub fn kind(&self) -> MapKind {
        self.groups[0][0].kind()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    EntropyNats,
    Variance,
}

/// Predictive, aleatoric and epistemic maps computed from one stack.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMaps {
    pub predictive: DenseMap,
    pub aleatoric: DenseMap,
    pub epistemic: DenseMap,
    pub measure: Measure,
    pub source: Origin,
    /// Set when a regression stack had no variance heads, so the aleatoric
    /// term is zero and `predictive == epistemic`.
    pub aleatoric_missing: bool,
}
