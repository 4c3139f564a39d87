//! Python bindings: `import xspn`.
//!
//! Datasets cross the boundary as lists of 0/1 rows. Evidence for marginals is a
//! list with `None` for unobserved variables.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

use xspn_core::classifier::GenerativeClassifier;
use xspn_core::datagen::{self, ConstraintSpec, MevmSpec};
use xspn_core::leaves::{ExchangeableLeaf, LeafKind};
use xspn_core::learn::{learn_with_stats, TestMode, Variant};
use xspn_core::stats::{self, PairCorrection};
use xspn_core::{BinaryDataset, Hyperparams, PartialEvidence, Scope, XspnError};

create_exception!(xspn, ModelError, PyException, "Malformed data, model file or network structure.");
create_exception!(xspn, CapacityError, PyException, "A request beyond a hard resource limit.");

fn err(e: XspnError) -> PyErr {
    match e {
        XspnError::Input(_) => PyValueError::new_err(e.to_string()),
        XspnError::Capacity(_) => CapacityError::new_err(e.to_string()),
        XspnError::Io(_) => PyOSError::new_err(e.to_string()),
        _ => ModelError::new_err(e.to_string()),
    }
}

fn dataset(rows: &[Vec<u8>]) -> PyResult<BinaryDataset> {
    BinaryDataset::from_rows(rows).map_err(err)
}

fn evidence(values: Vec<Option<u8>>) -> PyResult<PartialEvidence> {
    PartialEvidence::from_options(values).map_err(err)
}

fn rows_of(data: &BinaryDataset) -> Vec<Vec<u8>> {
    data.iter_rows().map(<[u8]>::to_vec).collect()
}

#[allow(clippy::too_many_arguments)]
fn hyperparams(
    variant: &str,
    rho: f64,
    min_instances: usize,
    p: f64,
    alpha: f64,
    max_children: usize,
    seed: u64,
    test_mode: &str,
    full_test_max_vars: usize,
    bonferroni: bool,
) -> PyResult<Hyperparams> {
    let hp = Hyperparams {
        variant: variant.parse::<Variant>().map_err(err)?,
        rho,
        min_instances,
        exch_significance: p,
        alpha,
        max_children,
        seed,
        test_mode: test_mode.parse::<TestMode>().map_err(err)?,
        full_test_max_vars,
        pair_correction: if bonferroni {
            PairCorrection::Bonferroni
        } else {
            PairCorrection::None
        },
        ..Hyperparams::default()
    };
    hp.check().map_err(err)?;
    Ok(hp)
}

/// A learned or loaded sum-product network.
#[pyclass(module = "xspn", frozen)]
struct Network(xspn_core::Network);

#[pymethods]
impl Network {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        xspn_core::Network::load(path).map(Network).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        xspn_core::Network::from_json(text).map(Network).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn variable_count(&self) -> usize {
        self.0.variable_count()
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    #[getter]
    fn depth(&self) -> PyResult<usize> {
        self.0.depth().map_err(err)
    }

    /// Leaf counts keyed by leaf kind.
    fn leaf_census(&self) -> BTreeMap<&'static str, usize> {
        let census = self.0.leaf_census();
        LeafKind::ALL
            .iter()
            .map(|k| (k.as_str(), census.get(k).copied().unwrap_or(0)))
            .collect()
    }

    /// Structural problems, empty for a valid network.
    fn validate(&self) -> Vec<String> {
        self.0.validate().iter().map(ToString::to_string).collect()
    }

    fn log_evaluate(&self, x: Vec<u8>) -> PyResult<f64> {
        self.0.log_evaluate(&x).map_err(err)
    }

    fn log_marginal(&self, values: Vec<Option<u8>>) -> PyResult<f64> {
        self.0.log_marginal(&evidence(values)?).map_err(err)
    }

    fn log_likelihoods(&self, py: Python<'_>, rows: Vec<Vec<u8>>) -> PyResult<Vec<f64>> {
        let data = dataset(&rows)?;
        py.detach(|| self.0.log_likelihoods(&data)).map_err(err)
    }

    fn mean_log_likelihood(&self, py: Python<'_>, rows: Vec<Vec<u8>>) -> PyResult<f64> {
        let data = dataset(&rows)?;
        py.detach(|| self.0.mean_log_likelihood(&data)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(variables={}, nodes={}, parameters={})",
            self.0.variable_count(),
            self.0.len(),
            self.0.parameter_count()
        )
    }
}

/// Learn a network from 0/1 rows. Returns the network and a dict of learner counters.
#[pyfunction]
#[pyo3(signature = (
    rows, *, variant = "XSPN_TF", rho = 5.0, min_instances = 200, p = 0.1, alpha = 0.1,
    max_children = 2, seed = 0, test_mode = "pairwise", full_test_max_vars = 8, bonferroni = true
))]
#[allow(clippy::too_many_arguments)]
fn learn(
    py: Python<'_>,
    rows: Vec<Vec<u8>>,
    variant: &str,
    rho: f64,
    min_instances: usize,
    p: f64,
    alpha: f64,
    max_children: usize,
    seed: u64,
    test_mode: &str,
    full_test_max_vars: usize,
    bonferroni: bool,
) -> PyResult<(Network, BTreeMap<&'static str, usize>)> {
    let hp = hyperparams(
        variant,
        rho,
        min_instances,
        p,
        alpha,
        max_children,
        seed,
        test_mode,
        full_test_max_vars,
        bonferroni,
    )?;
    let data = dataset(&rows)?;
    let (net, s) = py.detach(|| learn_with_stats(&data, &hp)).map_err(err)?;
    let counters = BTreeMap::from([
        ("exchangeability_tests", s.exchangeability_tests),
        ("clusterings", s.clusterings),
        ("degenerate_clusterings", s.degenerate_clusterings),
    ]);
    Ok((Network(net), counters))
}

/// One network per class label combined with class priors.
#[pyclass(module = "xspn", frozen)]
struct Classifier(GenerativeClassifier);

#[pymethods]
impl Classifier {
    #[staticmethod]
    #[pyo3(signature = (
        rows, labels, *, variant = "XSPN_TF", rho = 5.0, min_instances = 200, p = 0.1, alpha = 0.1,
        max_children = 2, seed = 0, test_mode = "pairwise", full_test_max_vars = 8, bonferroni = true
    ))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        rows: Vec<Vec<u8>>,
        labels: Vec<u32>,
        variant: &str,
        rho: f64,
        min_instances: usize,
        p: f64,
        alpha: f64,
        max_children: usize,
        seed: u64,
        test_mode: &str,
        full_test_max_vars: usize,
        bonferroni: bool,
    ) -> PyResult<Self> {
        let hp = hyperparams(
            variant,
            rho,
            min_instances,
            p,
            alpha,
            max_children,
            seed,
            test_mode,
            full_test_max_vars,
            bonferroni,
        )?;
        let data = dataset(&rows)?;
        py.detach(|| GenerativeClassifier::fit(&data, &labels, &hp))
            .map(Classifier)
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        GenerativeClassifier::load(path).map(Classifier).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        GenerativeClassifier::from_json(text).map(Classifier).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<u32> {
        self.0.labels()
    }

    #[getter]
    fn priors(&self) -> Vec<f64> {
        self.0.classes().iter().map(|c| c.log_prior.exp()).collect()
    }

    /// The class network for `label`.
    fn network(&self, label: u32) -> PyResult<Network> {
        self.0
            .classes()
            .iter()
            .find(|c| c.label == label)
            .map(|c| Network(c.network.clone()))
            .ok_or_else(|| PyValueError::new_err(format!("unknown label {label}")))
    }

    fn predict(&self, py: Python<'_>, rows: Vec<Vec<u8>>) -> PyResult<Vec<u32>> {
        let data = dataset(&rows)?;
        let out = py.detach(|| self.0.predict_dataset(&data)).map_err(err)?;
        Ok(out.into_iter().map(|p| p.label).collect())
    }

    /// Posterior class probabilities per row, ordered like `labels`.
    fn posteriors(&self, py: Python<'_>, rows: Vec<Vec<u8>>) -> PyResult<Vec<Vec<f64>>> {
        let data = dataset(&rows)?;
        let out = py.detach(|| self.0.predict_dataset(&data)).map_err(err)?;
        Ok(out.into_iter().map(|p| p.posterior).collect())
    }

    fn accuracy(&self, py: Python<'_>, rows: Vec<Vec<u8>>, labels: Vec<u32>) -> PyResult<f64> {
        let data = dataset(&rows)?;
        py.detach(|| self.0.accuracy(&data, &labels)).map_err(err)
    }
}

/// Distribution over variables that is invariant under permutation, one weight per
/// number of ones.
#[pyclass(module = "xspn", name = "ExchangeableLeaf", frozen)]
struct PyExchangeableLeaf(ExchangeableLeaf);

#[pymethods]
impl PyExchangeableLeaf {
    /// `weights[t]` is the probability of each single assignment with `t` ones.
    #[new]
    fn new(scope: Vec<usize>, weights: Vec<f64>) -> PyResult<Self> {
        let scope = Scope::from_indices(scope).map_err(err)?;
        ExchangeableLeaf::new(scope, weights).map(Self).map_err(err)
    }

    /// Laplace-smoothed fit of the count distribution over `scope` columns of `rows`.
    #[staticmethod]
    #[pyo3(signature = (scope, rows, alpha = 0.1))]
    fn fit(scope: Vec<usize>, rows: Vec<Vec<u8>>, alpha: f64) -> PyResult<Self> {
        let scope = Scope::from_indices(scope).map_err(err)?;
        let data = dataset(&rows)?;
        if let Some(v) = scope.iter().find(|v| v.index() >= data.cols()) {
            return Err(PyValueError::new_err(format!("variable {} outside the data", v.index())));
        }
        Ok(Self(ExchangeableLeaf::fit(scope, &data, alpha)))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn scope(&self) -> Vec<usize> {
        self.0.scope().iter().map(|v| v.index()).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    /// Probability of observing exactly `t` ones, for each `t`.
    fn class_probabilities(&self) -> Vec<f64> {
        self.0.class_probabilities()
    }

    /// Log probability of a full assignment indexed by variable id.
    fn log_prob(&self, x: Vec<u8>) -> PyResult<f64> {
        self.check_len(x.len())?;
        Ok(self.0.log_prob(&x))
    }

    fn log_marginal(&self, values: Vec<Option<u8>>) -> PyResult<f64> {
        self.check_len(values.len())?;
        Ok(self.0.log_marginal(&evidence(values)?))
    }

    fn __repr__(&self) -> String {
        format!("ExchangeableLeaf(n={})", self.0.n())
    }
}

impl PyExchangeableLeaf {
    fn check_len(&self, len: usize) -> PyResult<()> {
        let need = self.0.scope().max().index() + 1;
        if len < need {
            return Err(PyValueError::new_err(format!("need at least {need} values, got {len}")));
        }
        Ok(())
    }
}

fn constraint(kind: &str, n: usize, bound: Option<usize>, divisor: usize, residue: usize) -> PyResult<ConstraintSpec> {
    let spec = match kind.to_ascii_lowercase().as_str() {
        "threshold" => ConstraintSpec::threshold(
            n,
            bound.ok_or_else(|| PyValueError::new_err("threshold needs bound"))?,
        ),
        "exact" => ConstraintSpec::exact(n, divisor),
        "parity" => ConstraintSpec::parity(n),
        "counting" => ConstraintSpec::counting(n, divisor, residue),
        other => return Err(PyValueError::new_err(format!("unknown constraint kind {other:?}"))),
    };
    spec.check().map_err(err)?;
    Ok(spec)
}

/// Uniform samples from the assignments satisfying a counting constraint. With
/// `labeled`, rows are uniform and a last column marks whether the constraint holds.
#[pyfunction]
#[pyo3(signature = (kind, n, samples, seed = 0, *, bound = None, divisor = 5, residue = 3, labeled = false))]
#[allow(clippy::too_many_arguments)]
fn generate(
    py: Python<'_>,
    kind: &str,
    n: usize,
    samples: usize,
    seed: u64,
    bound: Option<usize>,
    divisor: usize,
    residue: usize,
    labeled: bool,
) -> PyResult<Vec<Vec<u8>>> {
    let spec = constraint(kind, n, bound, divisor, residue)?;
    let data = py
        .detach(|| {
            if labeled {
                datagen::generate_labeled(&spec, samples, seed)
            } else {
                datagen::generate_constraint(&spec, samples, seed)
            }
        })
        .map_err(err)?;
    Ok(rows_of(&data))
}

/// Expected per-sample log-likelihood of the true constrained distribution.
#[pyfunction]
#[pyo3(signature = (kind, n, *, bound = None, divisor = 5, residue = 3))]
fn analytic_loglik(kind: &str, n: usize, bound: Option<usize>, divisor: usize, residue: usize) -> PyResult<f64> {
    datagen::analytic_loglik(&constraint(kind, n, bound, divisor, residue)?).map_err(err)
}

/// Samples from a random mixture of exchangeable blocks. Returns the rows, the
/// generating network and the true mean log-likelihood of the rows.
#[pyfunction]
#[pyo3(signature = (n, samples, seed = 0, *, components = 1, blocks = 4))]
fn generate_mevm(
    py: Python<'_>,
    n: usize,
    samples: usize,
    seed: u64,
    components: usize,
    blocks: usize,
) -> PyResult<(Vec<Vec<u8>>, Network, Option<f64>)> {
    let spec = MevmSpec::random(n, components, blocks, seed).map_err(err)?;
    let data = py.detach(|| datagen::generate_mevm(&spec, samples, seed));
    let ll = if samples > 0 {
        Some(datagen::mevm_loglik(&spec, &data).map_err(err)?)
    } else {
        None
    };
    Ok((rows_of(&data), Network(spec.to_network()), ll))
}

/// Exchangeability test on all columns of `rows`. Returns `(exchangeable, min p-value)`.
#[pyfunction]
#[pyo3(signature = (rows, p = 0.1, *, mode = "pairwise", max_vars = 8, bonferroni = true))]
fn exchangeability_test(rows: Vec<Vec<u8>>, p: f64, mode: &str, max_vars: usize, bonferroni: bool) -> PyResult<(bool, f64)> {
    let data = dataset(&rows)?;
    match mode.parse::<TestMode>().map_err(err)? {
        TestMode::Full => {
            let r = stats::chi2_exchangeability_full(&data, p, max_vars).map_err(err)?;
            Ok((r.verdict.is_exchangeable(), r.p_value))
        }
        TestMode::Pairwise => {
            let correction = if bonferroni {
                PairCorrection::Bonferroni
            } else {
                PairCorrection::None
            };
            let r = stats::chi2_exchangeability_pairwise(&data, p, correction);
            let min_p = r.pairs.iter().map(|(_, _, c)| c.p_value).fold(1.0, f64::min);
            Ok((r.verdict.is_exchangeable(), min_p))
        }
    }
}

#[pymodule]
fn xspn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Classifier>()?;
    m.add_class::<PyExchangeableLeaf>()?;
    m.add("ModelError", m.py().get_type::<ModelError>())?;
    m.add("CapacityError", m.py().get_type::<CapacityError>())?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_loglik, m)?)?;
    m.add_function(wrap_pyfunction!(generate_mevm, m)?)?;
    m.add_function(wrap_pyfunction!(exchangeability_test, m)?)?;
    m.add("VARIANTS", Variant::ALL.iter().map(|v| v.as_str()).collect::<Vec<_>>())?;
    Ok(())
}
