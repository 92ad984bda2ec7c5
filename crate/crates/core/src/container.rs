//! Versioned JSON container for trained models.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::baseline::AnnModel;
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{LayerSpec, Network};
use crate::scalar::Scalar;
use crate::twin::{Anchors, TwinModel};

pub const FORMAT: &str = "tnnr-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Twin,
    Ann,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel<T> {
    Twin(TwinModel<T>),
    Ann(AnnModel<T>),
}

impl<T> SavedModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            SavedModel::Twin(_) => ModelKind::Twin,
            SavedModel::Ann(_) => ModelKind::Ann,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredAnchors<T> {
    x: Matrix<T>,
    y: Vec<T>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container<T> {
    format: String,
    version: u32,
    kind: ModelKind,
    scalar: String,
    layers: Vec<LayerSpec>,
    weights: Vec<Vec<T>>,
    biases: Vec<Vec<T>>,
    normalizer: Normalizer<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    anchors: Option<StoredAnchors<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_mean: Option<Vec<T>>,
    #[serde(default)]
    dropout_rate: f64,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    scalar: String,
}

fn network_parts<T: Scalar>(net: &Network<T>) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let (w, b) = net.parts();
    (
        w.into_iter().map(<[T]>::to_vec).collect(),
        b.into_iter().map(<[T]>::to_vec).collect(),
    )
}

fn finite_slice<T: Scalar>(v: &[T]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Serializes a model to JSON. Refuses non-finite values, which JSON cannot
/// carry.
pub fn to_json<T: Scalar + Serialize>(model: &SavedModel<T>) -> Result<String> {
    let c = match model {
        SavedModel::Twin(m) => {
            let (weights, biases) = network_parts(&m.network);
            Container {
                format: FORMAT.into(),
                version: VERSION,
                kind: ModelKind::Twin,
                scalar: T::NAME.into(),
                layers: m.network.specs(),
                weights,
                biases,
                normalizer: m.normalizer.clone(),
                anchors: Some(StoredAnchors {
                    x: m.anchors.x.clone(),
                    y: m.anchors.y.clone(),
                }),
                feature_mean: Some(m.feature_mean.clone()),
                dropout_rate: 0.0,
            }
        }
        SavedModel::Ann(m) => {
            let (weights, biases) = network_parts(&m.network);
            Container {
                format: FORMAT.into(),
                version: VERSION,
                kind: ModelKind::Ann,
                scalar: T::NAME.into(),
                layers: m.network.specs(),
                weights,
                biases,
                normalizer: m.normalizer.clone(),
                anchors: None,
                feature_mean: None,
                dropout_rate: m.dropout_rate,
            }
        }
    };
    let finite = c.weights.iter().chain(&c.biases).all(|v| finite_slice(v))
        && finite_slice(&c.normalizer.min)
        && finite_slice(&c.normalizer.max)
        && c.anchors
            .as_ref()
            .is_none_or(|a| a.x.all_finite() && finite_slice(&a.y))
        && c.feature_mean.as_deref().is_none_or(finite_slice);
    if !finite {
        return Err(Error::Serialization(
            "model contains non-finite values".into(),
        ));
    }
    Ok(serde_json::to_string_pretty(&c)?)
}

/// Parses a container, checking format tag, version and scalar type.
pub fn from_json<T: Scalar + DeserializeOwned>(text: &str) -> Result<SavedModel<T>> {
    let h: Header = serde_json::from_str(text)?;
    if h.format != FORMAT {
        return Err(Error::Serialization(format!(
            "not a model file (format {:?})",
            h.format
        )));
    }
    if h.version != VERSION {
        return Err(Error::Serialization(format!(
            "unsupported model version {}",
            h.version
        )));
    }
    if h.scalar != T::NAME {
        return Err(Error::Serialization(format!(
            "model stores {} parameters, expected {}",
            h.scalar,
            T::NAME
        )));
    }
    let c: Container<T> = serde_json::from_str(text)?;
    let network = Network::from_parts(&c.layers, c.weights, c.biases)?;
    match c.kind {
        ModelKind::Twin => {
            let a = c
                .anchors
                .ok_or_else(|| Error::Serialization("twin model without anchors".into()))?;
            let mut m = TwinModel::new(network, Anchors::new(a.x, a.y)?, c.normalizer)?;
            if let Some(mean) = c.feature_mean {
                if mean.len() != m.feature_mean.len() {
                    return Err(Error::Shape {
                        context: "stored feature mean",
                        expected: m.feature_mean.len(),
                        actual: mean.len(),
                    });
                }
                m.feature_mean = mean;
            }
            Ok(SavedModel::Twin(m))
        }
        ModelKind::Ann => Ok(SavedModel::Ann(AnnModel::new(
            network,
            c.normalizer,
            c.dropout_rate,
        )?)),
    }
}

pub fn save_model<T: Scalar + Serialize>(model: &SavedModel<T>, path: &Path) -> Result<()> {
    let text = to_json(model)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar + DeserializeOwned>(path: &Path) -> Result<SavedModel<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
