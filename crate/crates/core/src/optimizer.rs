//! Structural rewrite passes on the operation dag.
//!
//! All passes look only at ranks and labels, never at dimension sizes. Each
//! pass runs to its own fixpoint and returns a fresh dag plus a report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ir::{
    is_identity, ContractionNode, Label, LabelList, NodeId, Op, OpDag, Operand, PortRef, TranspositionNode, Use,
};

pub const FOLD_TRANSPOSE: &str = "fold_transpose_into_contraction";
pub const MERGE_CONTRACTIONS: &str = "merge_contractions";
pub const PUSH_TRANSPOSE_QR: &str = "push_transpose_through_qr";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewrite {
    pub nodes: Vec<NodeId>,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassReport {
    pub pass: String,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub rewrites: Vec<Rewrite>,
}

impl PassReport {
    fn new(pass: &str, before: usize) -> Self {
        PassReport {
            pass: pass.to_string(),
            nodes_before: before,
            nodes_after: before,
            rewrites: Vec::new(),
        }
    }

    fn record(&mut self, rule: &str, nodes: Vec<NodeId>) {
        self.rewrites.push(Rewrite {
            nodes,
            rule: rule.to_string(),
        });
    }
}

/// Optimization level accepted by [`run_pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum OptLevel {
    O0,
    O1,
    #[default]
    O2,
}

impl TryFrom<u8> for OptLevel {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(OptLevel::O0),
            1 => Ok(OptLevel::O1),
            2 => Ok(OptLevel::O2),
            _ => Err(format!("optimization level must be 0, 1 or 2, got {v}")),
        }
    }
}

impl From<OptLevel> for u8 {
    fn from(l: OptLevel) -> u8 {
        l as u8
    }
}

fn single_use(uses: &BTreeMap<PortRef, Vec<Use>>, port: PortRef) -> Option<Use> {
    match uses.get(&port).map(Vec::as_slice) {
        Some([u]) => Some(*u),
        _ => None,
    }
}

fn transposes(dag: &OpDag) -> Vec<(NodeId, TranspositionNode)> {
    dag.nodes()
        .filter_map(|n| match &n.op {
            Op::Transposition(t) => Some((n.id, t.clone())),
            _ => None,
        })
        .collect()
}

/// Removes identity transpositions and absorbs the others into adjacent
/// contractions: into the producer's output labels when the transposition
/// is the producer's only use, or into the operand labels of every consumer
/// when all consumers are contractions.
pub fn fold_transpose_into_contraction(dag: &OpDag) -> (OpDag, PassReport) {
    let mut dag = dag.clone();
    let mut report = PassReport::new(FOLD_TRANSPOSE, dag.len());
    while let Some((rule, nodes)) = fold_once(&mut dag) {
        report.record(rule, nodes);
    }
    report.nodes_after = dag.len();
    (dag, report)
}

fn fold_once(dag: &mut OpDag) -> Option<(&'static str, Vec<NodeId>)> {
    let uses = dag.uses();
    for (id, t) in transposes(dag) {
        let me = PortRef::single(id);
        if is_identity(&t.perm) {
            dag.remove(id);
            dag.replace_uses(me, t.operand);
            return Some(("identity", vec![id]));
        }

        let producer_is_private = single_use(&uses, t.operand) == Some(Use::Operand { node: id, slot: 0 });
        if producer_is_private {
            if let Some(Op::Contraction(c)) = dag.op_mut(t.operand.node) {
                let old = c.output_labels.0.clone();
                c.output_labels = LabelList(t.perm.iter().map(|&p| old[p]).collect());
                c.normalize();
                dag.remove(id);
                dag.replace_uses(me, t.operand);
                return Some(("into_producer", vec![id, t.operand.node]));
            }
        }

        let consumers = uses.get(&me).cloned().unwrap_or_default();
        let all_contractions = !consumers.is_empty()
            && consumers.iter().all(|u| match u {
                Use::Operand { node, .. } => matches!(dag.op(*node), Some(Op::Contraction(_))),
                Use::Result { .. } => false,
            });
        if all_contractions {
            let mut touched = vec![id];
            for u in consumers {
                let Use::Operand { node, slot } = u else { unreachable!() };
                let Some(Op::Contraction(c)) = dag.op_mut(node) else {
                    unreachable!()
                };
                let labels = &c.operands[slot].labels.0;
                let mut relabeled = vec![0; labels.len()];
                for (k, &p) in t.perm.iter().enumerate() {
                    relabeled[p] = labels[k];
                }
                c.operands[slot] = Operand {
                    source: t.operand,
                    labels: LabelList(relabeled),
                };
                c.normalize();
                if !touched.contains(&node) {
                    touched.push(node);
                }
            }
            dag.remove(id);
            return Some(("into_consumers", touched));
        }
    }
    None
}

/// Inlines a contraction into its consumer when the consumer is a
/// contraction and the only user of the producer's output.
pub fn merge_contractions(dag: &OpDag) -> (OpDag, PassReport) {
    let mut dag = dag.clone();
    let mut report = PassReport::new(MERGE_CONTRACTIONS, dag.len());
    while let Some(nodes) = merge_once(&mut dag) {
        report.record("inline_producer", nodes);
    }
    report.nodes_after = dag.len();
    (dag, report)
}

fn merge_once(dag: &mut OpDag) -> Option<Vec<NodeId>> {
    let uses = dag.uses();
    let candidates: Vec<(NodeId, NodeId, usize)> = dag
        .nodes()
        .filter(|n| matches!(n.op, Op::Contraction(_)))
        .filter_map(|n| match single_use(&uses, PortRef::single(n.id)) {
            Some(Use::Operand { node, slot }) if matches!(dag.op(node), Some(Op::Contraction(_))) => {
                Some((n.id, node, slot))
            }
            _ => None,
        })
        .collect();
    let (pid, cid, slot) = candidates.into_iter().next()?;
    let Some(Op::Contraction(producer)) = dag.remove(pid) else {
        unreachable!()
    };
    let Some(Op::Contraction(consumer)) = dag.op_mut(cid) else {
        unreachable!()
    };
    *consumer = inline(&producer, consumer, slot);
    Some(vec![pid, cid])
}

/// Substitutes `producer` into operand `slot` of `consumer`.
fn inline(producer: &ContractionNode, consumer: &ContractionNode, slot: usize) -> ContractionNode {
    let slot_labels = &consumer.operands[slot].labels.0;
    let mut fresh: Label = consumer.max_label().map_or(0, |m| m + 1);
    let mut map: BTreeMap<Label, Label> = producer
        .output_labels
        .iter()
        .zip(slot_labels)
        .map(|(&from, &to)| (from, to))
        .collect();
    let mut rename = |l: Label| {
        *map.entry(l).or_insert_with(|| {
            fresh += 1;
            fresh - 1
        })
    };
    let substituted: Vec<Operand> = producer
        .operands
        .iter()
        .map(|op| Operand {
            source: op.source,
            labels: LabelList(op.labels.iter().map(|&l| rename(l)).collect()),
        })
        .collect();
    let mut operands = consumer.operands[..slot].to_vec();
    operands.extend(substituted);
    operands.extend_from_slice(&consumer.operands[slot + 1..]);
    ContractionNode {
        operands,
        output_labels: consumer.output_labels.clone(),
    }
    .normalized()
}

/// Moves permutations of the leading dimensions of `Q` (or of the trailing
/// dimensions of `R`) onto the operand of the QR split.
///
/// The Q-side rewrite leaves both factors unchanged for full-rank operands.
/// The R-side rewrite permutes the columns of the matricization, so `Q`
/// and `R` change by a gauge on the bond while their product is preserved.
pub fn push_transpose_through_qr(dag: &OpDag) -> (OpDag, PassReport) {
    let mut dag = dag.clone();
    let mut report = PassReport::new(PUSH_TRANSPOSE_QR, dag.len());
    while let Some((rule, nodes)) = push_once(&mut dag) {
        report.record(rule, nodes);
    }
    report.nodes_after = dag.len();
    (dag, report)
}

fn push_once(dag: &mut OpDag) -> Option<(&'static str, Vec<NodeId>)> {
    let uses = dag.uses();
    let ranks = dag.port_ranks();
    for (id, t) in transposes(dag) {
        let Some(Op::QrSplit(qr)) = dag.op(t.operand.node) else {
            continue;
        };
        let qr = qr.clone();
        let qr_id = t.operand.node;
        if single_use(&uses, t.operand) != Some(Use::Operand { node: id, slot: 0 }) {
            continue;
        }
        let Some(&rank) = ranks.get(&qr.operand) else { continue };
        let leading = qr.leading;
        let (rule, operand_perm): (&'static str, Vec<usize>) = match t.operand.port {
            0 if t.perm.last() == Some(&leading) => (
                "q_leading",
                t.perm[..leading].iter().copied().chain(leading..rank).collect(),
            ),
            1 if t.perm.first() == Some(&0) => (
                "r_trailing",
                (0..leading)
                    .chain(t.perm[1..].iter().map(|&p| leading + p - 1))
                    .collect(),
            ),
            _ => continue,
        };

        let mut touched = vec![id, qr_id];
        let upstream_private = single_use(&uses, qr.operand) == Some(Use::Operand { node: qr_id, slot: 0 });
        let upstream = match dag.op(qr.operand.node) {
            Some(Op::Transposition(up)) if upstream_private => Some(up.clone()),
            _ => None,
        };
        dag.remove(id);
        dag.replace_uses(PortRef::single(id), t.operand);
        match upstream {
            Some(up) => {
                let up_id = qr.operand.node;
                touched.push(up_id);
                let combined: Vec<usize> = operand_perm.iter().map(|&k| up.perm[k]).collect();
                if is_identity(&combined) {
                    dag.remove(up_id);
                    set_qr_operand(dag, qr_id, up.operand);
                } else {
                    dag.insert(
                        up_id,
                        Op::Transposition(TranspositionNode {
                            operand: up.operand,
                            perm: combined,
                        }),
                    );
                }
            }
            None => {
                dag.insert(
                    id,
                    Op::Transposition(TranspositionNode {
                        operand: qr.operand,
                        perm: operand_perm,
                    }),
                );
                set_qr_operand(dag, qr_id, PortRef::single(id));
            }
        }
        return Some((rule, touched));
    }
    None
}

fn set_qr_operand(dag: &mut OpDag, qr: NodeId, operand: PortRef) {
    if let Some(Op::QrSplit(q)) = dag.op_mut(qr) {
        q.operand = operand;
    }
}

type Pass = fn(&OpDag) -> (OpDag, PassReport);

/// Runs the passes of `level` repeatedly until none of them rewrites
/// anything. Returns one aggregated report per pass.
pub fn run_pipeline(dag: &OpDag, level: OptLevel) -> (OpDag, Vec<PassReport>) {
    let passes: Vec<Pass> = match level {
        OptLevel::O0 => Vec::new(),
        OptLevel::O1 => vec![fold_transpose_into_contraction, merge_contractions],
        OptLevel::O2 => vec![
            fold_transpose_into_contraction,
            merge_contractions,
            push_transpose_through_qr,
        ],
    };
    let mut current = dag.clone();
    let mut reports: Vec<PassReport> = Vec::new();
    loop {
        let mut changed = false;
        for (i, pass) in passes.iter().enumerate() {
            let (next, report) = pass(&current);
            changed |= !report.rewrites.is_empty();
            current = next;
            match reports.get_mut(i) {
                Some(agg) => {
                    agg.nodes_after = report.nodes_after;
                    agg.rewrites.extend(report.rewrites);
                }
                None => reports.push(report),
            }
        }
        if !changed {
            return (current, reports);
        }
    }
}
