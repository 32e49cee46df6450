//! Scenario documents: a builtin name with optional adjustments, or a full model.
//!
//! ```json
//! {"builtin": "robot2d", "beta": 10000, "K_scale": 300, "epsilon": 1e-7}
//! ```
//!
//! ```json
//! {
//!   "n": 1,
//!   "A": [[0.0]],
//!   "B": {"type": "cos", "beta": 500},
//!   "bounds": {"A_bar": 0.0, "B_bar": 1.0, "DB_bar": 500},
//!   "K": [[20.0]],
//!   "es": {"epsilon": 1e-5, "sigma0": 1.0, "a": 0.1, "b": 1.0},
//!   "certificate": {"type": "floquet"}
//! }
//! ```

use std::path::Path;

use serde::Deserialize;

use ltv_es_core::builtin::{builtin, BuiltinParams, BUILTIN_NAMES};
use ltv_es_core::certificate::{LowerBoundRule, DEFAULT_GRID};
use ltv_es_core::mat::Mat;
use ltv_es_core::scenario::{
    CertificateRecipe, DelaySpec, EsParams, NoiseModel, Scenario, SystemModel, TimeFn, Xi0Policy,
};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ltv_es_core::Error),
}

impl LoadError {
    fn schema(path: &str, message: impl Into<String>) -> Self {
        LoadError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// A matrix given as nested rows (or a bare number), or a tagged time function.
#[derive(Debug, Clone)]
pub struct TimeDoc(pub TimeFn);

impl<'de> Deserialize<'de> for TimeDoc {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        let f = if v.is_object() {
            serde_json::from_value::<TimeFn>(v)
        } else {
            serde_json::from_value::<Mat>(v).map(TimeFn::constant)
        };
        f.map(TimeDoc).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    #[serde(rename = "A_bar")]
    pub a_bar: f64,
    #[serde(rename = "B_bar")]
    pub b_bar: f64,
    #[serde(rename = "DB_bar")]
    pub db_bar: f64,
}

/// Every field optional: for builtins it overrides the builtin's value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsDoc {
    pub epsilon: Option<f64>,
    pub sigma0: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub xi0_policy: Option<Xi0Policy>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub builtin: Option<String>,
    pub beta: Option<f64>,
    #[serde(rename = "K_scale")]
    pub k_scale: Option<f64>,
    pub epsilon: Option<f64>,

    pub n: Option<usize>,
    #[serde(rename = "A")]
    pub a: Option<TimeDoc>,
    #[serde(rename = "B")]
    pub b: Option<TimeDoc>,
    pub bounds: Option<BoundsDoc>,
    #[serde(rename = "K")]
    pub k: Option<Mat>,

    pub noise: Option<NoiseModel>,
    pub es: Option<EsDoc>,
    pub delay: Option<DelaySpec>,
    pub certificate: Option<CertificateRecipe>,
}

pub fn parse_document(text: &str) -> Result<Document, LoadError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "document".into() } else { path };
        LoadError::schema(&path, e.into_inner().to_string())
    })
}

pub fn load_file(path: &Path) -> Result<Scenario, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_str(&text)
}

pub fn load_str(text: &str) -> Result<Scenario, LoadError> {
    build(parse_document(text)?)
}

/// Expands a builtin name with no adjustments.
pub fn load_builtin(name: &str) -> Result<Scenario, LoadError> {
    build(Document {
        builtin: Some(name.into()),
        ..Default::default()
    })
}

fn apply_es(es: &mut EsParams, doc: &EsDoc) {
    if let Some(v) = doc.epsilon {
        es.epsilon = v;
    }
    if let Some(v) = doc.sigma0 {
        es.sigma0 = v;
    }
    if let Some(v) = doc.a {
        es.weight_a = v;
    }
    if let Some(v) = doc.b {
        es.weight_b = v;
    }
    if let Some(p) = doc.xi0_policy {
        es.xi0_policy = p;
    }
}

pub fn build(doc: Document) -> Result<Scenario, LoadError> {
    let mut scenario = match &doc.builtin {
        Some(name) => from_builtin(name, &doc)?,
        None => from_model(&doc)?,
    };
    if let Some(es) = &doc.es {
        apply_es(&mut scenario.es, es);
    }
    if let Some(noise) = doc.noise {
        scenario.noise = noise;
    }
    if doc.delay.is_some() {
        scenario.delay = doc.delay;
    }
    if let (Some(_), Some(cert)) = (&doc.builtin, doc.certificate) {
        scenario.certificate = cert;
    }
    scenario.validate()?;
    Ok(scenario)
}

fn from_builtin(name: &str, doc: &Document) -> Result<Scenario, LoadError> {
    for (field, present) in [
        ("n", doc.n.is_some()),
        ("A", doc.a.is_some()),
        ("B", doc.b.is_some()),
        ("bounds", doc.bounds.is_some()),
        ("K", doc.k.is_some()),
    ] {
        if present {
            return Err(LoadError::schema(
                field,
                "not allowed together with \"builtin\" (use K_scale, beta or epsilon)",
            ));
        }
    }
    if !BUILTIN_NAMES.contains(&name) {
        return Err(LoadError::schema(
            "builtin",
            format!("unknown builtin {name:?}; expected one of {BUILTIN_NAMES:?}"),
        ));
    }
    let params = BuiltinParams {
        beta: doc.beta,
        k_scale: doc.k_scale,
        epsilon: doc.epsilon,
    };
    Ok(builtin(name, &params)?)
}

fn from_model(doc: &Document) -> Result<Scenario, LoadError> {
    for (field, present) in [
        ("beta", doc.beta.is_some()),
        ("K_scale", doc.k_scale.is_some()),
        ("epsilon", doc.epsilon.is_some()),
    ] {
        if present {
            return Err(LoadError::schema(
                field,
                "only valid with \"builtin\"; put epsilon under \"es\"",
            ));
        }
    }
    let missing = |f: &str| LoadError::schema(f, "required when \"builtin\" is absent");
    let n = doc.n.ok_or_else(|| missing("n"))?;
    let a = doc.a.clone().ok_or_else(|| missing("A"))?.0;
    let b = doc.b.clone().ok_or_else(|| missing("B"))?.0;
    let bounds = doc.bounds.clone().ok_or_else(|| missing("bounds"))?;
    let k = doc.k.clone().ok_or_else(|| missing("K"))?;
    let es_doc = doc.es.clone().ok_or_else(|| missing("es"))?;
    let es = EsParams {
        epsilon: es_doc.epsilon.ok_or_else(|| missing("es.epsilon"))?,
        sigma0: es_doc.sigma0.ok_or_else(|| missing("es.sigma0"))?,
        weight_a: es_doc.a.unwrap_or(1.0),
        weight_b: es_doc.b.unwrap_or(1.0),
        xi0_policy: es_doc.xi0_policy.unwrap_or_default(),
    };
    Ok(Scenario {
        model: SystemModel {
            n,
            a,
            b,
            a_bar: bounds.a_bar,
            b_bar: bounds.b_bar,
            db_bar: bounds.db_bar,
            k,
        },
        noise: NoiseModel::zero(),
        es,
        certificate: doc
            .certificate
            .clone()
            .unwrap_or(CertificateRecipe::Excitation {
                delta: None,
                lower_bound: LowerBoundRule::default(),
                grid: DEFAULT_GRID,
            }),
        delay: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_with_adjustments() {
        let s = load_str(r#"{"builtin":"robot2d","beta":10000,"K_scale":300,"epsilon":1e-7}"#).unwrap();
        assert_eq!(s.model.n, 2);
        assert_eq!(s.model.k, Mat::identity(2).scale(300.0));
        assert_eq!(s.es.epsilon, 1e-7);
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = load_str(r#"{"builtin":"integrator","es":{"epsilon":"small"}}"#).unwrap_err();
        assert!(e.to_string().starts_with("es.epsilon:"), "{e}");
        let e = load_str(r#"{"builtin":"integrator","colour":1}"#).unwrap_err();
        assert!(e.to_string().contains("colour"), "{e}");
        let e = load_str(r#"{"builtin":"robot3d"}"#).unwrap_err();
        assert!(e.to_string().starts_with("builtin:"), "{e}");
    }
}
