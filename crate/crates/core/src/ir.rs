//! Elementary operations and the operation DAG.
//!
//! Every node produces one or more tensors addressed by port: contractions,
//! transpositions and inputs have a single port `0`; a QR split produces
//! `Q` on port 0 and `R` on port 1; an SVD split produces `U`, `S`, `V` on
//! ports 0, 1, 2. Node ids double as tensor names: port `p` of node `n` is
//! the tensor `T{n + p}`.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keyed::{self, Keyed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PortRef {
    pub node: NodeId,
    #[serde(default)]
    pub port: usize,
}

impl PortRef {
    pub fn new(node: NodeId, port: usize) -> Self {
        PortRef { node, port }
    }

    pub fn single(node: NodeId) -> Self {
        PortRef { node, port: 0 }
    }

    /// Tensor number used for naming this value.
    pub fn tensor_number(&self) -> u64 {
        self.node.0 + self.port as u64
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node.0, self.port)
    }
}

pub type Label = u32;

/// Integer labels, one per dimension of an operand (or of the output).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelList(pub Vec<Label>);

impl LabelList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Label> {
        self.0.iter()
    }
}

impl From<Vec<Label>> for LabelList {
    fn from(v: Vec<Label>) -> Self {
        LabelList(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operand {
    #[serde(flatten)]
    pub source: PortRef,
    pub labels: LabelList,
}

/// `einsum(T0, s0, T1, s1, ..., s_out)`: labels occurring more than once
/// across operands are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionNode {
    pub operands: Vec<Operand>,
    pub output_labels: LabelList,
}

impl ContractionNode {
    /// Occurrence count of every label across all operands.
    pub fn label_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for op in &self.operands {
            for &l in op.labels.iter() {
                *counts.entry(l).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Renames labels to `0..L` in first-appearance order, scanning operands
    /// left to right. Output labels absent from every operand are numbered
    /// after the rest.
    pub fn normalize(&mut self) {
        let mut map: BTreeMap<Label, Label> = BTreeMap::new();
        let mut next = 0;
        let mut rename = |l: Label, map: &mut BTreeMap<Label, Label>| {
            *map.entry(l).or_insert_with(|| {
                next += 1;
                next - 1
            })
        };
        for op in &mut self.operands {
            for l in &mut op.labels.0 {
                *l = rename(*l, &mut map);
            }
        }
        for l in &mut self.output_labels.0 {
            *l = rename(*l, &mut map);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.clone().normalized() == *self
    }

    pub fn max_label(&self) -> Option<Label> {
        self.operands
            .iter()
            .flat_map(|op| op.labels.iter())
            .chain(self.output_labels.iter())
            .copied()
            .max()
    }
}

/// Permutes dimensions: output dimension `k` is input dimension `perm[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranspositionNode {
    pub operand: PortRef,
    pub perm: Vec<usize>,
}

/// QR factorization of the matricization with `leading` row dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrSplitNode {
    pub operand: PortRef,
    pub leading: usize,
}

/// Truncated SVD of the matricization with `leading` row dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdSplitNode {
    pub operand: PortRef,
    pub leading: usize,
    pub sv_cutoff_abs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bond: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Op {
    Input { rank: usize },
    Contraction(ContractionNode),
    Transposition(TranspositionNode),
    QrSplit(QrSplitNode),
    SvdSplit(SvdSplitNode),
}

impl Op {
    pub fn port_count(&self) -> usize {
        match self {
            Op::QrSplit(_) => 2,
            Op::SvdSplit(_) => 3,
            _ => 1,
        }
    }

    pub fn operands(&self) -> Vec<PortRef> {
        match self {
            Op::Input { .. } => Vec::new(),
            Op::Contraction(c) => c.operands.iter().map(|o| o.source).collect(),
            Op::Transposition(t) => vec![t.operand],
            Op::QrSplit(q) => vec![q.operand],
            Op::SvdSplit(s) => vec![s.operand],
        }
    }

    pub(crate) fn operands_mut(&mut self) -> Vec<&mut PortRef> {
        match self {
            Op::Input { .. } => Vec::new(),
            Op::Contraction(c) => c.operands.iter_mut().map(|o| &mut o.source).collect(),
            Op::Transposition(t) => vec![&mut t.operand],
            Op::QrSplit(q) => vec![&mut q.operand],
            Op::SvdSplit(s) => vec![&mut s.operand],
        }
    }

    /// Rank of the tensor on each port, given the rank of the (single)
    /// operand for transpositions and splits.
    pub fn output_ranks(&self, operand_rank: usize) -> Vec<usize> {
        match self {
            Op::Input { rank } => vec![*rank],
            Op::Contraction(c) => vec![c.output_labels.len()],
            Op::Transposition(_) => vec![operand_rank],
            Op::QrSplit(q) => vec![q.leading + 1, operand_rank.saturating_sub(q.leading) + 1],
            Op::SvdSplit(s) => vec![s.leading + 1, 1, operand_rank.saturating_sub(s.leading) + 1],
        }
    }

    pub fn output_rank(&self, port: usize, operand_rank: usize) -> Option<usize> {
        self.output_ranks(operand_rank).get(port).copied()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Contraction(_) => "contraction",
            Op::Transposition(_) => "transposition",
            Op::QrSplit(_) => "qr_split",
            Op::SvdSplit(_) => "svd_split",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(flatten)]
    pub op: Op,
}

impl Keyed for Node {
    type Key = NodeId;
    fn key(&self) -> NodeId {
        self.id
    }
}

/// Where a port's value is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Use {
    /// Operand slot `slot` of node `node`.
    Operand { node: NodeId, slot: usize },
    /// Entry `index` of the result list.
    Result { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("cycle through nodes {0:?}")]
    CycleDetected(Vec<NodeId>),
    #[error("{node} references missing {source_ref}")]
    DanglingReference { node: NodeId, source_ref: PortRef },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("{node} references missing node of {source_ref}")]
    DanglingOperand { node: NodeId, source_ref: PortRef },
    #[error("{node} references nonexistent port {source_ref}")]
    InvalidPort { node: NodeId, source_ref: PortRef },
    #[error("{0} lies on or behind a cycle")]
    Cycle(NodeId),
    #[error("{node} operand {slot}: expected rank {expected}, producer has rank {found}")]
    RankMismatch {
        node: NodeId,
        slot: usize,
        expected: usize,
        found: usize,
    },
    #[error("{0} has an invalid permutation")]
    InvalidPermutation(NodeId),
    #[error("{node}: leading {leading} not strictly between 0 and rank {rank}")]
    InvalidLeading { node: NodeId, leading: usize, rank: usize },
    #[error("{0}: singular value cutoff must be finite and non-negative")]
    InvalidCutoff(NodeId),
    #[error("{0}: max_bond must be positive")]
    InvalidMaxBond(NodeId),
    #[error("{0}: contraction without operands")]
    EmptyContraction(NodeId),
    #[error("{node}: output label {label} must occur exactly once among operands and once in the output")]
    OutputLabel { node: NodeId, label: Label },
    #[error("{0}: labels are not in first-appearance normal form")]
    NotNormalized(NodeId),
    #[error("result {index} references missing {source_ref}")]
    DanglingResult { index: usize, source_ref: PortRef },
}

/// Directed acyclic graph of elementary operations plus the ordered list of
/// program results.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OpDag {
    #[serde(with = "keyed")]
    pub(crate) nodes: BTreeMap<NodeId, Node>,
    pub(crate) results: Vec<PortRef>,
}

impl OpDag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn insert(&mut self, id: NodeId, op: Op) -> Option<Op> {
        self.nodes.insert(id, Node { id, op }).map(|n| n.op)
    }

    pub fn remove(&mut self, id: NodeId) -> Option<Op> {
        self.nodes.remove(&id).map(|n| n.op)
    }

    pub fn op(&self, id: NodeId) -> Option<&Op> {
        self.nodes.get(&id).map(|n| &n.op)
    }

    pub fn op_mut(&mut self, id: NodeId) -> Option<&mut Op> {
        self.nodes.get_mut(&id).map(|n| &mut n.op)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn results(&self) -> &[PortRef] {
        &self.results
    }

    pub fn set_results(&mut self, results: Vec<PortRef>) {
        self.results = results;
    }

    /// Input nodes in ascending id, which is also parameter order.
    pub fn inputs(&self) -> Vec<(NodeId, usize)> {
        self.nodes
            .values()
            .filter_map(|n| match n.op {
                Op::Input { rank } => Some((n.id, rank)),
                _ => None,
            })
            .collect()
    }

    pub fn uses(&self) -> BTreeMap<PortRef, Vec<Use>> {
        let mut uses: BTreeMap<PortRef, Vec<Use>> = BTreeMap::new();
        for node in self.nodes.values() {
            for (slot, src) in node.op.operands().into_iter().enumerate() {
                uses.entry(src).or_default().push(Use::Operand { node: node.id, slot });
            }
        }
        for (index, r) in self.results.iter().enumerate() {
            uses.entry(*r).or_default().push(Use::Result { index });
        }
        uses
    }

    /// Redirects every use of `from` (operands and results) to `to`.
    pub(crate) fn replace_uses(&mut self, from: PortRef, to: PortRef) {
        for node in self.nodes.values_mut() {
            for src in node.op.operands_mut() {
                if *src == from {
                    *src = to;
                }
            }
        }
        for r in &mut self.results {
            if *r == from {
                *r = to;
            }
        }
    }

    /// Topological order preferring the smallest available id, so a dag whose
    /// ids already respect dependencies comes out in id order.
    pub fn topo_order(&self) -> Result<Vec<NodeId>, IrError> {
        let mut indegree: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut consumers: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for node in self.nodes.values() {
            let deps: BTreeSet<NodeId> = node.op.operands().iter().map(|p| p.node).collect();
            for dep in &deps {
                if !self.nodes.contains_key(dep) {
                    return Err(IrError::DanglingReference {
                        node: node.id,
                        source_ref: PortRef::single(*dep),
                    });
                }
                consumers.entry(*dep).or_default().push(node.id);
            }
            indegree.insert(node.id, deps.len());
        }
        let mut ready: BinaryHeap<Reverse<NodeId>> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| Reverse(id))
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(Reverse(id)) = ready.pop() {
            order.push(id);
            for c in consumers.get(&id).into_iter().flatten() {
                let d = indegree.get_mut(c).expect("consumer is a node");
                *d -= 1;
                if *d == 0 {
                    ready.push(Reverse(*c));
                }
            }
        }
        if order.len() != self.nodes.len() {
            let done: BTreeSet<NodeId> = order.iter().copied().collect();
            let stuck = self.nodes.keys().filter(|id| !done.contains(id)).copied().collect();
            return Err(IrError::CycleDetected(stuck));
        }
        Ok(order)
    }

    /// Non-input nodes grouped by longest dependency distance from the
    /// inputs; everything in one level can run in parallel.
    pub fn topo_levels(&self) -> Result<Vec<Vec<NodeId>>, IrError> {
        let order = self.topo_order()?;
        let mut depth: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut levels: Vec<Vec<NodeId>> = Vec::new();
        for id in order {
            let op = &self.nodes[&id].op;
            let d = match op {
                Op::Input { .. } => 0,
                _ => 1 + op.operands().iter().map(|p| depth[&p.node]).max().unwrap_or(0),
            };
            depth.insert(id, d);
            if d > 0 {
                if levels.len() < d {
                    levels.resize_with(d, Vec::new);
                }
                levels[d - 1].push(id);
            }
        }
        for level in &mut levels {
            level.sort();
        }
        Ok(levels)
    }

    /// Rank of every port, following a topological order. Ports downstream of
    /// a broken reference are omitted.
    pub fn port_ranks(&self) -> BTreeMap<PortRef, usize> {
        let mut ranks = BTreeMap::new();
        let order = match self.topo_order() {
            Ok(o) => o,
            Err(_) => return ranks,
        };
        for id in order {
            let op = &self.nodes[&id].op;
            let operand_rank = match op {
                Op::Transposition(TranspositionNode { operand, .. })
                | Op::QrSplit(QrSplitNode { operand, .. })
                | Op::SvdSplit(SvdSplitNode { operand, .. }) => match ranks.get(operand) {
                    Some(&r) => r,
                    None => continue,
                },
                _ => 0,
            };
            for (port, r) in op.output_ranks(operand_rank).into_iter().enumerate() {
                ranks.insert(PortRef::new(id, port), r);
            }
        }
        ranks
    }

    pub fn port_rank(&self, port: PortRef) -> Option<usize> {
        self.port_ranks().get(&port).copied()
    }

    /// Checks references, acyclicity, rank consistency and label
    /// normalization without modifying the dag.
    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        for node in self.nodes.values() {
            for src in node.op.operands() {
                match self.nodes.get(&src.node) {
                    None => violations.push(Violation::DanglingOperand {
                        node: node.id,
                        source_ref: src,
                    }),
                    Some(p) if src.port >= p.op.port_count() => violations.push(Violation::InvalidPort {
                        node: node.id,
                        source_ref: src,
                    }),
                    _ => {}
                }
            }
        }
        for (index, r) in self.results.iter().enumerate() {
            let ok = self.nodes.get(&r.node).is_some_and(|n| r.port < n.op.port_count());
            if !ok {
                violations.push(Violation::DanglingResult { index, source_ref: *r });
            }
        }
        if !violations.is_empty() {
            return Err(violations);
        }
        if let Err(IrError::CycleDetected(stuck)) = self.topo_order() {
            return Err(stuck.into_iter().map(Violation::Cycle).collect());
        }

        let ranks = self.port_ranks();
        for node in self.nodes.values() {
            let id = node.id;
            match &node.op {
                Op::Input { .. } => {}
                Op::Contraction(c) => {
                    if c.operands.is_empty() {
                        violations.push(Violation::EmptyContraction(id));
                    }
                    for (slot, op) in c.operands.iter().enumerate() {
                        let found = ranks[&op.source];
                        if found != op.labels.len() {
                            violations.push(Violation::RankMismatch {
                                node: id,
                                slot,
                                expected: op.labels.len(),
                                found,
                            });
                        }
                    }
                    let counts = c.label_counts();
                    let mut seen = BTreeSet::new();
                    for &l in c.output_labels.iter() {
                        if counts.get(&l) != Some(&1) || !seen.insert(l) {
                            violations.push(Violation::OutputLabel { node: id, label: l });
                        }
                    }
                    if !c.is_normalized() {
                        violations.push(Violation::NotNormalized(id));
                    }
                }
                Op::Transposition(t) => {
                    let r = ranks[&t.operand];
                    if !is_permutation(&t.perm) {
                        violations.push(Violation::InvalidPermutation(id));
                    } else if t.perm.len() != r {
                        violations.push(Violation::RankMismatch {
                            node: id,
                            slot: 0,
                            expected: t.perm.len(),
                            found: r,
                        });
                    }
                }
                Op::QrSplit(q) => {
                    let r = ranks[&q.operand];
                    if q.leading == 0 || q.leading >= r {
                        violations.push(Violation::InvalidLeading {
                            node: id,
                            leading: q.leading,
                            rank: r,
                        });
                    }
                }
                Op::SvdSplit(s) => {
                    let r = ranks[&s.operand];
                    if s.leading == 0 || s.leading >= r {
                        violations.push(Violation::InvalidLeading {
                            node: id,
                            leading: s.leading,
                            rank: r,
                        });
                    }
                    if s.sv_cutoff_abs < 0.0 || !s.sv_cutoff_abs.is_finite() {
                        violations.push(Violation::InvalidCutoff(id));
                    }
                    if s.max_bond == Some(0) {
                        violations.push(Violation::InvalidMaxBond(id));
                    }
                }
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    perm.iter()
        .all(|&p| p < perm.len() && !std::mem::replace(&mut seen[p], true))
}

pub fn is_identity(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(k, &p)| k == p)
}

/// Builds a normalized contraction from raw label vectors.
pub fn contraction(operands: Vec<(PortRef, Vec<Label>)>, output: Vec<Label>) -> ContractionNode {
    ContractionNode {
        operands: operands
            .into_iter()
            .map(|(source, labels)| Operand {
                source,
                labels: LabelList(labels),
            })
            .collect(),
        output_labels: LabelList(output),
    }
    .normalized()
}
