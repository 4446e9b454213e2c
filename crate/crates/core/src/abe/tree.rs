use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::AbeError;
use crate::canonical;
use crate::rng::RandomSource;
use crate::share::{dedup_shares, shamir_reconstruct, shamir_share, PrimeField, SharePoint};

/// `namespace/name`; the name may contain spaces, the namespace may not
/// contain `/`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeId {
    namespace: String,
    name: String,
}

impl AttributeId {
    pub fn new(namespace: &str, name: &str) -> Result<Self, AbeError> {
        if namespace.is_empty() || name.is_empty() || namespace.contains('/') {
            return Err(AbeError::InvalidAttribute(format!("{namespace}/{name}")));
        }
        Ok(Self { namespace: namespace.to_string(), name: name.to_string() })
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl FromStr for AttributeId {
    type Err = AbeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (ns, name) = s.split_once('/').ok_or_else(|| AbeError::InvalidAttribute(s.to_string()))?;
        Self::new(ns, name)
    }
}

impl fmt::Display for AttributeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.namespace, self.name)
    }
}

impl Serialize for AttributeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AttributeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EvaluationContext {
    pub now_epoch: u64,
    pub declared_location: String,
}

impl EvaluationContext {
    pub fn new(now_epoch: u64, declared_location: &str) -> Self {
        Self { now_epoch, declared_location: declared_location.to_string() }
    }
}

/// Policy tree. AND and OR are threshold gates with `m = n` and `m = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AccessTree {
    Attr(AttributeId),
    Time { start: u64, end: u64 },
    Location(BTreeSet<String>),
    Gate { threshold: usize, children: Vec<AccessTree> },
}

/// Child positions from the root, e.g. `[0, 2]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    fn child(&self, j: usize) -> Self {
        let mut v = self.0.clone();
        v.push(j);
        NodePath(v)
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "/{}", parts.join("/"))
    }
}

impl AccessTree {
    pub fn attr(s: &str) -> Result<Self, AbeError> {
        Ok(AccessTree::Attr(s.parse()?))
    }

    pub fn time(start: u64, end: u64) -> Result<Self, AbeError> {
        if start > end {
            return Err(AbeError::InvalidTree(format!("time window [{start}, {end}] is empty")));
        }
        Ok(AccessTree::Time { start, end })
    }

    pub fn location<I: IntoIterator<Item = S>, S: Into<String>>(labels: I) -> Result<Self, AbeError> {
        let set: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(AbeError::InvalidTree("empty location set".into()));
        }
        Ok(AccessTree::Location(set))
    }

    pub fn thresh(threshold: usize, children: Vec<AccessTree>) -> Result<Self, AbeError> {
        if children.is_empty() || threshold < 1 || threshold > children.len() {
            return Err(AbeError::InvalidTree(format!(
                "threshold {threshold} over {} children",
                children.len()
            )));
        }
        Ok(AccessTree::Gate { threshold, children })
    }

    pub fn and(children: Vec<AccessTree>) -> Result<Self, AbeError> {
        Self::thresh(children.len(), children)
    }

    pub fn or(children: Vec<AccessTree>) -> Result<Self, AbeError> {
        Self::thresh(1, children)
    }

    pub fn validate(&self) -> Result<(), AbeError> {
        match self {
            AccessTree::Attr(_) => Ok(()),
            AccessTree::Time { start, end } => Self::time(*start, *end).map(|_| ()),
            AccessTree::Location(set) if set.is_empty() => Err(AbeError::InvalidTree("empty location set".into())),
            AccessTree::Location(_) => Ok(()),
            AccessTree::Gate { threshold, children } => {
                if children.is_empty() || *threshold < 1 || *threshold > children.len() {
                    return Err(AbeError::InvalidTree(format!(
                        "threshold {threshold} over {} children",
                        children.len()
                    )));
                }
                children.iter().try_for_each(AccessTree::validate)
            }
        }
    }

    /// Leaves in depth-first declaration order.
    pub fn leaves(&self) -> Vec<(NodePath, &AccessTree)> {
        fn walk<'a>(node: &'a AccessTree, path: NodePath, out: &mut Vec<(NodePath, &'a AccessTree)>) {
            match node {
                AccessTree::Gate { children, .. } => {
                    for (j, c) in children.iter().enumerate() {
                        walk(c, path.child(j), out);
                    }
                }
                leaf => out.push((path, leaf)),
            }
        }
        let mut out = Vec::new();
        walk(self, NodePath::default(), &mut out);
        out
    }

    /// Attributes mentioned anywhere in the tree.
    pub fn attributes(&self) -> BTreeSet<AttributeId> {
        self.leaves()
            .into_iter()
            .filter_map(|(_, l)| match l {
                AccessTree::Attr(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn max_fan_out(&self) -> usize {
        match self {
            AccessTree::Gate { children, .. } => {
                children.iter().map(AccessTree::max_fan_out).max().unwrap_or(0).max(children.len())
            }
            _ => 0,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            AccessTree::Gate { children, .. } => 1 + children.iter().map(AccessTree::depth).max().unwrap_or(0),
            _ => 1,
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        canonical::digest(self)
    }

    fn to_value(&self) -> Value {
        match self {
            AccessTree::Attr(a) => json!({ "attr": a.to_string() }),
            AccessTree::Time { start, end } => json!({ "time": [start, end] }),
            AccessTree::Location(set) => json!({ "loc": set }),
            AccessTree::Gate { threshold, children } => json!({
                "thresh": threshold,
                "children": children.iter().map(AccessTree::to_value).collect::<Vec<_>>(),
            }),
        }
    }

    fn from_value(v: &Value) -> Result<Self, AbeError> {
        let bad = |m: &str| AbeError::InvalidTree(format!("{m}: {v}"));
        let obj = v.as_object().ok_or_else(|| bad("node must be an object"))?;
        let children_of = |key: &str| -> Result<Vec<AccessTree>, AbeError> {
            obj.get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| bad("gate needs a children list"))?
                .iter()
                .map(Self::from_value)
                .collect()
        };
        let keys: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
        let tree = match keys.iter().copied().collect::<Vec<_>>().as_slice() {
            ["attr"] => {
                let s = obj["attr"].as_str().ok_or_else(|| bad("attr must be a string"))?;
                AccessTree::attr(s)?
            }
            ["time"] => match obj["time"].as_array().map(Vec::as_slice) {
                Some([a, b]) => {
                    let (a, b) = a.as_u64().zip(b.as_u64()).ok_or_else(|| bad("time bounds must be integers"))?;
                    AccessTree::time(a, b)?
                }
                _ => return Err(bad("time must be [start, end]")),
            },
            ["loc"] => {
                let labels = obj["loc"]
                    .as_array()
                    .ok_or_else(|| bad("loc must be a list"))?
                    .iter()
                    .map(|l| l.as_str().map(str::to_string).ok_or_else(|| bad("loc labels must be strings")))
                    .collect::<Result<Vec<_>, _>>()?;
                AccessTree::location(labels)?
            }
            ["children", "thresh"] => {
                let m = obj["thresh"].as_u64().ok_or_else(|| bad("thresh must be an integer"))?;
                AccessTree::thresh(m as usize, children_of("children")?)?
            }
            ["and"] => AccessTree::and(children_of("and")?)?,
            ["or"] => AccessTree::or(children_of("or")?)?,
            _ => return Err(bad("unrecognised node")),
        };
        Ok(tree)
    }
}

impl Serialize for AccessTree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for AccessTree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        AccessTree::from_value(&v).map_err(serde::de::Error::custom)
    }
}

/// Whether a non-attribute leaf's predicate holds under `ctx`.
fn context_leaf_holds(leaf: &AccessTree, ctx: &EvaluationContext) -> bool {
    match leaf {
        AccessTree::Time { start, end } => *start <= ctx.now_epoch && ctx.now_epoch <= *end,
        AccessTree::Location(set) => set.contains(&ctx.declared_location),
        _ => false,
    }
}

pub fn satisfies(tree: &AccessTree, attrs: &BTreeSet<AttributeId>, ctx: &EvaluationContext) -> bool {
    match tree {
        AccessTree::Attr(a) => attrs.contains(a),
        AccessTree::Gate { threshold, children } => {
            children.iter().filter(|c| satisfies(c, attrs, ctx)).count() >= *threshold
        }
        leaf => context_leaf_holds(leaf, ctx),
    }
}

/// Splits `secret` down the tree. The root holds point `(1, secret)`; a
/// gate with `m >= 2` Shamir-shares its value `m`-of-`c` and child `j`
/// gets `(j, f(j))`; an OR gate hands its own point to every child.
pub fn distribute_tree_shares(
    tree: &AccessTree,
    secret: &BigUint,
    field: &PrimeField,
    rng: &mut dyn RandomSource,
) -> Result<BTreeMap<NodePath, SharePoint>, AbeError> {
    tree.validate()?;
    if BigUint::from(tree.max_fan_out()) >= *field.modulus() {
        return Err(AbeError::FieldTooSmall);
    }
    if !field.contains(secret) {
        return Err(crate::share::ShareError::SecretOutOfField.into());
    }
    fn walk(
        node: &AccessTree,
        path: NodePath,
        point: SharePoint,
        field: &PrimeField,
        rng: &mut dyn RandomSource,
        out: &mut BTreeMap<NodePath, SharePoint>,
    ) -> Result<(), AbeError> {
        match node {
            AccessTree::Gate { threshold, children } if *threshold >= 2 => {
                let set = shamir_share(&point.value, *threshold, children.len(), field, rng)?;
                for (j, (child, pt)) in children.iter().zip(set.points).enumerate() {
                    walk(child, path.child(j), pt, field, rng, out)?;
                }
            }
            AccessTree::Gate { children, .. } => {
                for (j, child) in children.iter().enumerate() {
                    walk(child, path.child(j), point.clone(), field, rng, out)?;
                }
            }
            _ => {
                out.insert(path, point);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(tree, NodePath::default(), SharePoint::new(1, secret.clone()), field, rng, &mut out)?;
    Ok(out)
}

/// Recovers the root secret from whichever leaf shares are available.
/// Time and location leaves only count when their predicate holds.
pub fn reconstruct_from_leaves(
    tree: &AccessTree,
    available: &BTreeMap<NodePath, SharePoint>,
    ctx: &EvaluationContext,
    field: &PrimeField,
) -> Result<BigUint, AbeError> {
    fn walk(
        node: &AccessTree,
        path: NodePath,
        index: u64,
        available: &BTreeMap<NodePath, SharePoint>,
        ctx: &EvaluationContext,
        field: &PrimeField,
    ) -> Result<Option<SharePoint>, AbeError> {
        match node {
            AccessTree::Gate { threshold, children } if *threshold >= 2 => {
                let mut points = Vec::new();
                for (j, child) in children.iter().enumerate() {
                    if let Some(pt) = walk(child, path.child(j), j as u64 + 1, available, ctx, field)? {
                        points.push(pt);
                    }
                }
                match shamir_reconstruct(&points, *threshold, field) {
                    Ok(v) => Ok(Some(SharePoint::new(index, v))),
                    Err(crate::share::ShareError::InsufficientShares { .. }) => Ok(None),
                    Err(e) => Err(e.into()),
                }
            }
            AccessTree::Gate { children, .. } => {
                let mut points = Vec::new();
                for (j, child) in children.iter().enumerate() {
                    if let Some(pt) = walk(child, path.child(j), index, available, ctx, field)? {
                        points.push(pt);
                    }
                }
                Ok(dedup_shares(&points, field)?.into_iter().next())
            }
            AccessTree::Attr(_) => Ok(available.get(&path).filter(|p| p.index == index).cloned()),
            leaf => Ok(available
                .get(&path)
                .filter(|p| p.index == index && context_leaf_holds(leaf, ctx))
                .cloned()),
        }
    }
    walk(tree, NodePath::default(), 1, available, ctx, field)?
        .map(|p| p.value)
        .ok_or(AbeError::Unsatisfied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{DeterministicRng, ScriptedRng};

    fn a(s: &str) -> AccessTree {
        AccessTree::attr(&format!("lab/{s}")).unwrap()
    }

    fn set(names: &[&str]) -> BTreeSet<AttributeId> {
        names.iter().map(|n| format!("lab/{n}").parse().unwrap()).collect()
    }

    fn ctx() -> EvaluationContext {
        EvaluationContext::new(15, "campus")
    }

    fn f11() -> PrimeField {
        PrimeField::new(11u32).unwrap()
    }

    fn available(shares: &BTreeMap<NodePath, SharePoint>, keep: &[usize]) -> BTreeMap<NodePath, SharePoint> {
        shares
            .iter()
            .filter(|(p, _)| keep.contains(&p.0[0]))
            .map(|(p, s)| (p.clone(), s.clone()))
            .collect()
    }

    #[test]
    fn satisfaction_examples() {
        let and = AccessTree::and(vec![a("A"), a("B")]).unwrap();
        assert!(satisfies(&and, &set(&["A", "B"]), &ctx()));
        let t = AccessTree::thresh(2, vec![a("A"), a("B"), a("C")]).unwrap();
        assert!(satisfies(&t, &set(&["A", "C"]), &ctx()));
        assert!(!satisfies(&t, &set(&["A"]), &ctx()));
        let timed = AccessTree::and(vec![a("A"), AccessTree::time(10, 20).unwrap()]).unwrap();
        assert!(!satisfies(&timed, &set(&["A"]), &EvaluationContext::new(25, "campus")));
        assert!(satisfies(&timed, &set(&["A"]), &ctx()));
        let loc = AccessTree::location(["campus", "lab"]).unwrap();
        assert!(satisfies(&loc, &set(&[]), &ctx()));
        assert!(!satisfies(&loc, &set(&[]), &EvaluationContext::new(15, "home")));
    }

    #[test]
    fn worked_threshold_shares() {
        let t = AccessTree::thresh(2, vec![a("A"), a("B"), a("C")]).unwrap();
        let mut rng = ScriptedRng::new([2u32]);
        let shares = distribute_tree_shares(&t, &5u32.into(), &f11(), &mut rng).unwrap();
        let pts: Vec<&SharePoint> = shares.values().collect();
        assert_eq!(pts, vec![&SharePoint::new(1, 7u32), &SharePoint::new(2, 9u32), &SharePoint::new(3, 0u32)]);
        assert_eq!(reconstruct_from_leaves(&t, &available(&shares, &[0, 2]), &ctx(), &f11()), Ok(5u32.into()));
        assert_eq!(reconstruct_from_leaves(&t, &available(&shares, &[0]), &ctx(), &f11()), Err(AbeError::Unsatisfied));
    }

    #[test]
    fn or_passes_secret_through() {
        let t = AccessTree::or(vec![a("A"), a("B")]).unwrap();
        let mut rng = DeterministicRng::from_u64(1);
        let shares = distribute_tree_shares(&t, &5u32.into(), &f11(), &mut rng).unwrap();
        assert!(shares.values().all(|p| p.value == BigUint::from(5u32)));
        assert_eq!(reconstruct_from_leaves(&t, &shares, &ctx(), &f11()), Ok(5u32.into()));
        assert_eq!(reconstruct_from_leaves(&t, &available(&shares, &[1]), &ctx(), &f11()), Ok(5u32.into()));
    }

    #[test]
    fn and_needs_both() {
        let t = AccessTree::and(vec![a("A"), a("B")]).unwrap();
        let mut rng = DeterministicRng::from_u64(2);
        let shares = distribute_tree_shares(&t, &5u32.into(), &f11(), &mut rng).unwrap();
        assert_eq!(reconstruct_from_leaves(&t, &shares, &ctx(), &f11()), Ok(5u32.into()));
        assert!(reconstruct_from_leaves(&t, &available(&shares, &[0]), &ctx(), &f11()).is_err());
    }

    #[test]
    fn field_must_exceed_fan_out() {
        let t = AccessTree::or((0..11).map(|i| a(&format!("x{i}"))).collect()).unwrap();
        let mut rng = DeterministicRng::from_u64(2);
        assert_eq!(distribute_tree_shares(&t, &5u32.into(), &f11(), &mut rng), Err(AbeError::FieldTooSmall));
    }

    #[test]
    fn context_leaves_gate_their_shares() {
        let t = AccessTree::and(vec![a("A"), AccessTree::time(10, 20).unwrap()]).unwrap();
        let mut rng = DeterministicRng::from_u64(3);
        let shares = distribute_tree_shares(&t, &5u32.into(), &f11(), &mut rng).unwrap();
        assert_eq!(reconstruct_from_leaves(&t, &shares, &ctx(), &f11()), Ok(5u32.into()));
        assert_eq!(
            reconstruct_from_leaves(&t, &shares, &EvaluationContext::new(21, "campus"), &f11()),
            Err(AbeError::Unsatisfied)
        );
    }

    #[test]
    fn serialization_normalizes_gates() {
        let t = AccessTree::and(vec![a("A"), AccessTree::or(vec![a("B"), AccessTree::location(["x"]).unwrap()]).unwrap()])
            .unwrap();
        let s = canonical::to_canonical_string(&t);
        assert_eq!(
            s,
            r#"{"children":[{"attr":"lab/A"},{"children":[{"attr":"lab/B"},{"loc":["x"]}],"thresh":1}],"thresh":2}"#
        );
        let back: AccessTree = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let sugared: AccessTree = serde_json::from_str(r#"{"and":[{"attr":"lab/A"},{"time":[1,2]}]}"#).unwrap();
        assert_eq!(sugared, AccessTree::and(vec![a("A"), AccessTree::time(1, 2).unwrap()]).unwrap());
        for bad in [
            r#"{"thresh":3,"children":[{"attr":"lab/A"}]}"#,
            r#"{"attr":"noslash"}"#,
            r#"{"time":[5,1]}"#,
            r#"{"attr":"lab/A","extra":1}"#,
            r#"{"or":[]}"#,
        ] {
            assert!(serde_json::from_str::<AccessTree>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn attribute_ids() {
        let id: AttributeId = "lab/head of security lab".parse().unwrap();
        assert_eq!(id.namespace(), "lab");
        assert_eq!(id.name(), "head of security lab");
        assert!("lab/".parse::<AttributeId>().is_err());
        assert!("/x".parse::<AttributeId>().is_err());
    }
}
