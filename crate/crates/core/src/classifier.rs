//! Generative classification with one network per class.
//!
//! Classifier files are JSON:
//!
//! ```text
//! { "format": "xspn-classifier/1", "variable_count": 20,
//!   "classes": [ {"label": 0, "log_prior": ..., "model": { ...model file... }}, ... ] }
//! ```

use rayon::prelude::*;
use serde::Serialize;
use serde_json::value::RawValue;
use serde_json::Value;

use crate::dataset::BinaryDataset;
use crate::error::{Result, XspnError};
use crate::learn::{derive_seed, learn, Hyperparams};
use crate::model::{decode_network, Decimal, Field, Network};
use crate::special::log_sum_exp;

pub const CLASSIFIER_FORMAT: &str = "xspn-classifier/1";

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub label: u32,
    pub log_prior: f64,
    pub network: Network,
}

/// Class-conditional networks with class priors, ordered by label.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeClassifier {
    classes: Vec<ClassModel>,
    variable_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: u32,
    /// Index into [`GenerativeClassifier::classes`].
    pub class_index: usize,
    pub posterior: Vec<f64>,
}

/// Normalizes per-class log-scores; the argmax goes to the first maximal index.
pub fn posterior_from_scores(scores: &[f64]) -> (usize, Vec<f64>) {
    let norm = log_sum_exp(scores);
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let posterior = if norm.is_finite() {
        scores.iter().map(|s| (s - norm).exp()).collect()
    } else {
        vec![1.0 / scores.len() as f64; scores.len()]
    };
    (best, posterior)
}

impl GenerativeClassifier {
    pub fn new(classes: Vec<ClassModel>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(XspnError::input("a classifier needs at least two classes"));
        }
        let variable_count = classes[0].network.variable_count();
        if classes.iter().any(|c| c.network.variable_count() != variable_count) {
            return Err(XspnError::input("class networks disagree on the variable count"));
        }
        if classes.windows(2).any(|w| w[0].label >= w[1].label) {
            return Err(XspnError::input("class labels must be strictly increasing"));
        }
        let total: f64 = classes.iter().map(|c| c.log_prior.exp()).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(XspnError::input(format!("class priors sum to {total}")));
        }
        Ok(Self {
            classes,
            variable_count,
        })
    }

    /// Fits one network per distinct label; priors are `(c_y + α)/(N + αK)`.
    pub fn fit(data: &BinaryDataset, labels: &[u32], hp: &Hyperparams) -> Result<Self> {
        let mut classes: Vec<u32> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        Self::fit_with_classes(data, labels, &classes, hp)
    }

    /// Like [`fit`](Self::fit) but with an explicit class list; a listed class
    /// without samples is an error.
    pub fn fit_with_classes(
        data: &BinaryDataset,
        labels: &[u32],
        classes: &[u32],
        hp: &Hyperparams,
    ) -> Result<Self> {
        if labels.len() != data.rows() {
            return Err(XspnError::input(format!(
                "{} labels for {} rows",
                labels.len(),
                data.rows()
            )));
        }
        let mut classes = classes.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(XspnError::input(format!(
                "need at least two classes, found {}",
                classes.len()
            )));
        }
        if let Some(stray) = labels.iter().find(|l| classes.binary_search(l).is_err()) {
            return Err(XspnError::input(format!("label {stray} is not a declared class")));
        }
        let rows_per_class: Vec<Vec<usize>> = classes
            .iter()
            .map(|&c| (0..labels.len()).filter(|&r| labels[r] == c).collect())
            .collect();
        if let Some(i) = rows_per_class.iter().position(Vec::is_empty) {
            return Err(XspnError::input(format!("class {} has no samples", classes[i])));
        }
        let n = labels.len() as f64;
        let k = classes.len() as f64;
        let models = classes
            .par_iter()
            .zip(&rows_per_class)
            .enumerate()
            .map(|(i, (&label, rows))| {
                let hp = Hyperparams {
                    seed: derive_seed(hp.seed, i as u64),
                    ..hp.clone()
                };
                let network = learn(&data.select_rows(rows), &hp)?;
                let prior = (rows.len() as f64 + hp.alpha) / (n + hp.alpha * k);
                Ok(ClassModel {
                    label,
                    log_prior: prior.ln(),
                    network,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(models)
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn labels(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.label).collect()
    }

    pub fn variable_count(&self) -> usize {
        self.variable_count
    }

    /// `ln P(y) + ln P(x | y)` per class.
    pub fn log_scores(&self, x: &[u8]) -> Result<Vec<f64>> {
        self.classes
            .iter()
            .map(|c| Ok(c.log_prior + c.network.log_evaluate(x)?))
            .collect()
    }

    pub fn predict(&self, x: &[u8]) -> Result<Prediction> {
        let (best, posterior) = posterior_from_scores(&self.log_scores(x)?);
        Ok(Prediction {
            label: self.classes[best].label,
            class_index: best,
            posterior,
        })
    }

    pub fn predict_dataset(&self, data: &BinaryDataset) -> Result<Vec<Prediction>> {
        (0..data.rows())
            .into_par_iter()
            .map(|r| self.predict(data.row(r)))
            .collect()
    }

    /// Fraction of rows whose predicted label matches; 0 for an empty set.
    pub fn accuracy(&self, data: &BinaryDataset, labels: &[u32]) -> Result<f64> {
        if labels.len() != data.rows() {
            return Err(XspnError::input(format!(
                "{} labels for {} rows",
                labels.len(),
                data.rows()
            )));
        }
        if labels.is_empty() {
            return Ok(0.0);
        }
        let correct = self
            .predict_dataset(data)?
            .iter()
            .zip(labels)
            .filter(|(p, &l)| p.label == l)
            .count();
        Ok(correct as f64 / labels.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct ClassRecord {
            label: u32,
            log_prior: Decimal,
            model: Box<RawValue>,
        }
        #[derive(Serialize)]
        struct Record {
            format: &'static str,
            variable_count: usize,
            classes: Vec<ClassRecord>,
        }
        let fail = |e: serde_json::Error| XspnError::schema("$", e.to_string());
        let classes = self
            .classes
            .iter()
            .map(|c| {
                Ok(ClassRecord {
                    label: c.label,
                    log_prior: Decimal(c.log_prior),
                    model: RawValue::from_string(c.network.to_json()?).map_err(fail)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let record = Record {
            format: CLASSIFIER_FORMAT,
            variable_count: self.variable_count,
            classes,
        };
        serde_json::to_string_pretty(&record).map_err(fail)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            XspnError::schema(format!("$ (line {}, column {})", e.line(), e.column()), e.to_string())
        })?;
        let top = Field::root(&value, "$");
        let format = top.get("format")?;
        if format.str()? != CLASSIFIER_FORMAT {
            return Err(format.fail(format!("unsupported format, expected {CLASSIFIER_FORMAT}")));
        }
        let variable_count = top.get("variable_count")?.usize()?;
        let mut classes = Vec::new();
        for f in top.get("classes")?.array()? {
            let label = f.get("label")?;
            let model = f.get("model")?;
            let network = decode_network(model.value, &model.path)?;
            if network.variable_count() != variable_count {
                return Err(model.fail("variable_count differs from the classifier's"));
            }
            classes.push(ClassModel {
                label: u32::try_from(label.usize()?).map_err(|_| label.fail("label out of range"))?,
                log_prior: f.get("log_prior")?.f64()?,
                network,
            });
        }
        Self::new(classes).map_err(|e| match e {
            XspnError::Input(msg) => XspnError::schema("$.classes", msg),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
