//! JSON model files.
//!
//! ```text
//! { "format": "xspn-model/1",
//!   "exchangeable_smoothing": "class_counts_then_divide",
//!   "variable_count": 3, "root": 2,
//!   "nodes": [
//!     {"id": 0, "kind": "leaf", "scope": [0, 1], "leaf_kind": "exchangeable_counting",
//!      "n": 2, "weights": [...]},
//!     {"id": 1, "kind": "leaf", "scope": [2], "leaf_kind": "bernoulli", "p_one": ...},
//!     {"id": 2, "kind": "product", "scope": [0, 1, 2], "children": [0, 1]} ] }
//! ```
//!
//! Sum nodes carry `children` and `weights` in the same order. Factorized leaves
//! store `p_one` per scope variable; Chow-Liu leaves store `parents` (variable ids,
//! `null` for the root) and `cpt`, one `[P(0), P(1)]` row per parent value.
//! All reals are written with 17 significant digits.

use serde::ser::Error as _;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::error::{Result, XspnError};
use crate::leaves::{BernoulliLeaf, ChowLiuLeaf, ExchangeableLeaf, FactorizedLeaf, LeafDistribution, LeafKind};
use crate::model::{Network, Node, NodeId, NodeKind, Scope, VariableId};

pub const MODEL_FORMAT: &str = "xspn-model/1";
/// Smoothing is added to class counts before dividing by the class size.
pub const EXCHANGEABLE_SMOOTHING: &str = "class_counts_then_divide";

/// A real written with 17 significant digits.
#[derive(Clone, Copy)]
pub(crate) struct Decimal(pub f64);

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("cannot serialize non-finite value {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

fn decimals(values: &[f64]) -> Vec<Decimal> {
    values.iter().copied().map(Decimal).collect()
}

#[derive(Serialize)]
struct ModelRecord<'a> {
    format: &'static str,
    exchangeable_smoothing: &'static str,
    variable_count: usize,
    root: usize,
    nodes: Vec<NodeRecord<'a>>,
}

#[derive(Serialize)]
struct NodeRecord<'a> {
    id: usize,
    kind: &'static str,
    scope: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    children: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<Decimal>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    leaf_kind: Option<&'static str>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    leaf: Option<LeafRecord<'a>>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum LeafRecord<'a> {
    Bernoulli {
        p_one: Decimal,
    },
    Factorized {
        p_one: Vec<Decimal>,
    },
    Exchangeable {
        n: usize,
        weights: Vec<Decimal>,
    },
    ChowLiu {
        parents: Vec<Option<usize>>,
        cpt: Vec<Vec<[Decimal; 2]>>,
        #[serde(skip)]
        _marker: std::marker::PhantomData<&'a ()>,
    },
}

fn node_record(id: usize, node: &Node) -> NodeRecord<'_> {
    let scope = node.scope.iter().map(VariableId::index).collect();
    let mut rec = NodeRecord {
        id,
        kind: "leaf",
        scope,
        children: None,
        weights: None,
        leaf_kind: None,
        leaf: None,
    };
    match &node.kind {
        NodeKind::Sum { children, weights } => {
            rec.kind = "sum";
            rec.children = Some(children.iter().map(|c| c.0).collect());
            rec.weights = Some(decimals(weights));
        }
        NodeKind::Product { children } => {
            rec.kind = "product";
            rec.children = Some(children.iter().map(|c| c.0).collect());
        }
        NodeKind::Leaf(dist) => {
            rec.leaf_kind = Some(dist.kind().as_str());
            rec.leaf = Some(match dist {
                LeafDistribution::Bernoulli(b) => LeafRecord::Bernoulli {
                    p_one: Decimal(b.p_one),
                },
                LeafDistribution::Factorized(f) => LeafRecord::Factorized {
                    p_one: f.factors().iter().map(|b| Decimal(b.p_one)).collect(),
                },
                LeafDistribution::Exchangeable(e) => LeafRecord::Exchangeable {
                    n: e.n(),
                    weights: decimals(e.weights()),
                },
                LeafDistribution::ChowLiu(c) => LeafRecord::ChowLiu {
                    parents: (0..c.scope().len())
                        .map(|i| c.parent_variable(i).map(VariableId::index))
                        .collect(),
                    cpt: c
                        .cpt()
                        .iter()
                        .map(|rows| rows.iter().map(|r| [Decimal(r[0]), Decimal(r[1])]).collect())
                        .collect(),
                    _marker: std::marker::PhantomData,
                },
            });
        }
    }
    rec
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        let record = ModelRecord {
            format: MODEL_FORMAT,
            exchangeable_smoothing: EXCHANGEABLE_SMOOTHING,
            variable_count: self.variable_count(),
            root: self.root().0,
            nodes: self.nodes().iter().enumerate().map(|(i, n)| node_record(i, n)).collect(),
        };
        serde_json::to_string_pretty(&record).map_err(|e| XspnError::schema("$", e.to_string()))
    }

    pub fn to_json_value(&self) -> Result<Value> {
        let text = self.to_json()?;
        serde_json::from_str(&text).map_err(|e| XspnError::schema("$", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            XspnError::schema(format!("$ (line {}, column {})", e.line(), e.column()), e.to_string())
        })?;
        Self::from_json_value(&value)
    }

    pub fn from_json_value(value: &Value) -> Result<Self> {
        decode_network(value, "$")
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Field accessors that report the JSON path of whatever is wrong.
pub(crate) struct Field<'a> {
    pub value: &'a Value,
    pub path: String,
}

impl<'a> Field<'a> {
    pub fn root(value: &'a Value, path: &str) -> Self {
        Self {
            value,
            path: path.to_string(),
        }
    }

    pub fn get(&self, key: &str) -> Result<Field<'a>> {
        let path = format!("{}.{key}", self.path);
        let obj = self
            .value
            .as_object()
            .ok_or_else(|| XspnError::schema(&self.path, "expected an object"))?;
        let value = obj.get(key).ok_or_else(|| XspnError::schema(&path, "missing field"))?;
        Ok(Field { value, path })
    }

    pub fn opt(&self, key: &str) -> Option<Field<'a>> {
        self.get(key).ok().filter(|f| !f.value.is_null())
    }

    pub fn array(&self) -> Result<Vec<Field<'a>>> {
        let arr = self
            .value
            .as_array()
            .ok_or_else(|| XspnError::schema(&self.path, "expected an array"))?;
        Ok(arr
            .iter()
            .enumerate()
            .map(|(i, value)| Field {
                value,
                path: format!("{}[{i}]", self.path),
            })
            .collect())
    }

    pub fn usize(&self) -> Result<usize> {
        self.value
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| XspnError::schema(&self.path, "expected a non-negative integer"))
    }

    pub fn f64(&self) -> Result<f64> {
        self.value
            .as_f64()
            .ok_or_else(|| XspnError::schema(&self.path, "expected a number"))
    }

    pub fn str(&self) -> Result<&'a str> {
        self.value
            .as_str()
            .ok_or_else(|| XspnError::schema(&self.path, "expected a string"))
    }

    pub fn usizes(&self) -> Result<Vec<usize>> {
        self.array()?.iter().map(Field::usize).collect()
    }

    pub fn f64s(&self) -> Result<Vec<f64>> {
        self.array()?.iter().map(Field::f64).collect()
    }

    pub fn fail(&self, message: impl Into<String>) -> XspnError {
        XspnError::schema(&self.path, message)
    }
}

pub(crate) fn decode_network(value: &Value, path: &str) -> Result<Network> {
    let top = Field::root(value, path);
    if let Some(format) = top.opt("format") {
        if format.str()? != MODEL_FORMAT {
            return Err(format.fail(format!("unsupported format, expected {MODEL_FORMAT}")));
        }
    }
    let variable_count = top.get("variable_count")?.usize()?;
    let root = top.get("root")?.usize()?;
    let node_fields = top.get("nodes")?.array()?;
    let mut nodes = Vec::with_capacity(node_fields.len());
    for (i, f) in node_fields.iter().enumerate() {
        if let Some(id) = f.opt("id") {
            if id.usize()? != i {
                return Err(id.fail(format!("node ids must equal array positions, expected {i}")));
            }
        }
        nodes.push(decode_node(f)?);
    }
    Ok(Network::new(nodes, NodeId(root), variable_count))
}

fn decode_scope(f: &Field) -> Result<Scope> {
    let vars = f.usizes()?.into_iter().map(VariableId).collect();
    Scope::from_sorted(vars).map_err(|e| f.fail(e.to_string()))
}

fn decode_node(f: &Field) -> Result<Node> {
    let scope_field = f.get("scope")?;
    let scope = decode_scope(&scope_field)?;
    let kind_field = f.get("kind")?;
    let children = |f: &Field| -> Result<Vec<NodeId>> {
        Ok(f.get("children")?.usizes()?.into_iter().map(NodeId).collect())
    };
    let kind = match kind_field.str()? {
        "sum" => NodeKind::Sum {
            children: children(f)?,
            weights: f.get("weights")?.f64s()?,
        },
        "product" => NodeKind::Product { children: children(f)? },
        "leaf" => NodeKind::Leaf(decode_leaf(f, &scope)?),
        other => return Err(kind_field.fail(format!("unknown node kind {other:?}"))),
    };
    Ok(Node { scope, kind })
}

fn decode_leaf(f: &Field, scope: &Scope) -> Result<LeafDistribution> {
    let kind_field = f.get("leaf_kind")?;
    let kind = LeafKind::ALL
        .into_iter()
        .find(|k| k.as_str() == kind_field.str().unwrap_or(""))
        .ok_or_else(|| kind_field.fail("unknown leaf kind"))?;
    Ok(match kind {
        LeafKind::Bernoulli => {
            if scope.len() != 1 {
                return Err(f.get("scope")?.fail("bernoulli leaf needs a single variable"));
            }
            BernoulliLeaf::new(scope.vars()[0], f.get("p_one")?.f64()?).into()
        }
        LeafKind::Factorized => {
            let p = f.get("p_one")?;
            let values = p.f64s()?;
            if values.len() != scope.len() {
                return Err(p.fail(format!("expected {} probabilities", scope.len())));
            }
            FactorizedLeaf::new(
                scope
                    .iter()
                    .zip(values)
                    .map(|(v, p)| BernoulliLeaf::new(v, p))
                    .collect(),
            )
            .into()
        }
        LeafKind::ExchangeableCounting => {
            let n = f.get("n")?;
            if n.usize()? != scope.len() {
                return Err(n.fail(format!("n must equal the scope size {}", scope.len())));
            }
            let w = f.get("weights")?;
            let weights = w.f64s()?;
            if weights.len() != scope.len() + 1 {
                return Err(w.fail(format!("expected {} weights", scope.len() + 1)));
            }
            ExchangeableLeaf::new_unchecked(scope.clone(), weights).into()
        }
        LeafKind::ChowLiu => {
            let pf = f.get("parents")?;
            let mut parents = Vec::with_capacity(scope.len());
            for p in pf.array()? {
                if p.value.is_null() {
                    parents.push(None);
                } else {
                    let var = VariableId(p.usize()?);
                    let pos = scope
                        .vars()
                        .binary_search(&var)
                        .map_err(|_| p.fail(format!("parent {var} is outside the leaf scope")))?;
                    parents.push(Some(pos));
                }
            }
            let cf = f.get("cpt")?;
            let mut cpt = Vec::new();
            for rows in cf.array()? {
                let mut table = Vec::new();
                for row in rows.array()? {
                    let vals = row.f64s()?;
                    if vals.len() != 2 {
                        return Err(row.fail("each table row needs two probabilities"));
                    }
                    table.push([vals[0], vals[1]]);
                }
                cpt.push(table);
            }
            ChowLiuLeaf::new(scope.clone(), parents, cpt)
                .map_err(|e| f.fail(e.to_string()))?
                .into()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::BinaryDataset;

    fn sample_network() -> Network {
        let data = BinaryDataset::from_rows(&[[0u8, 1, 1], [1, 1, 0], [0, 0, 1], [1, 1, 1]]).unwrap();
        let s01 = Scope::full(2).unwrap();
        let ex = ExchangeableLeaf::fit(s01.clone(), &data.select_columns(&[0, 1]), 0.1);
        let cl = ChowLiuLeaf::fit(s01.clone(), &data.select_columns(&[0, 1]), 0.1);
        let nodes = vec![
            Node::leaf(ex),
            Node::leaf(cl),
            Node {
                scope: s01,
                kind: NodeKind::Sum {
                    children: vec![NodeId(0), NodeId(1)],
                    weights: vec![0.3, 0.7],
                },
            },
            Node::leaf(BernoulliLeaf::new(VariableId(2), 1.0 / 3.0)),
            Node {
                scope: Scope::full(3).unwrap(),
                kind: NodeKind::Product {
                    children: vec![NodeId(2), NodeId(3)],
                },
            },
        ];
        Network::new(nodes, NodeId(4), 3)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = sample_network();
        assert!(net.validate().is_empty());
        let text = net.to_json().unwrap();
        let back = Network::from_json(&text).unwrap();
        assert_eq!(back, net);
        for bits in 0..8u8 {
            let x: Vec<u8> = (0..3).map(|i| (bits >> i) & 1).collect();
            assert_eq!(
                net.log_evaluate(&x).unwrap().to_bits(),
                back.log_evaluate(&x).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn writes_seventeen_significant_digits() {
        let net = sample_network();
        let text = net.to_json().unwrap();
        assert!(text.contains("3.3333333333333331e-1"), "{text}");
        assert!(text.contains("\"leaf_kind\": \"exchangeable_counting\""));
        assert!(text.contains("\"format\": \"xspn-model/1\""));
    }

    #[test]
    fn schema_errors_carry_field_paths() {
        let net = sample_network();
        let mut v = net.to_json_value().unwrap();
        v["nodes"][2]["weights"] = Value::String("oops".into());
        let err = Network::from_json_value(&v).unwrap_err();
        match err {
            XspnError::Schema { path, .. } => assert_eq!(path, "$.nodes[2].weights"),
            other => panic!("{other:?}"),
        }
        let mut v = net.to_json_value().unwrap();
        v["nodes"][0].as_object_mut().unwrap().remove("leaf_kind");
        let err = Network::from_json_value(&v).unwrap_err();
        assert!(matches!(err, XspnError::Schema { ref path, .. } if path == "$.nodes[0].leaf_kind"));
        assert!(matches!(Network::from_json("{not json"), Err(XspnError::Schema { .. })));
    }
}
