//! Turns user actions into elementary IR nodes.
//!
//! Labels of a contraction are handed out by scanning the operands in
//! ascending tensor id and their legs in dimension order: a leg whose
//! junction already has a label reuses it, every other leg takes the next
//! integer. Output labels are the open legs in the same scan order, which is
//! the canonical open-leg order of the network model.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ir::{
    ContractionNode, Label, LabelList, NodeId, Op, OpDag, Operand, PortRef, QrSplitNode, SvdSplitNode,
    TranspositionNode,
};
use crate::network::{ContractOperand, NetworkError, NetworkEvent, NetworkState, SplitKind, TensorId, UserAction};

/// Labelled contraction over network tensors, before binding to dag ports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractionSpec {
    pub operands: Vec<(TensorId, LabelList)>,
    pub output_labels: LabelList,
}

pub fn assign_labels(operands: &[ContractOperand]) -> ContractionSpec {
    let mut junction_labels = BTreeMap::new();
    let mut next: Label = 0;
    let mut output = Vec::new();
    let mut lists = Vec::with_capacity(operands.len());
    for op in operands {
        let mut labels = Vec::with_capacity(op.legs.len());
        for junction in &op.legs {
            let label = match junction {
                Some(j) => *junction_labels.entry(*j).or_insert_with(|| {
                    next += 1;
                    next - 1
                }),
                None => {
                    next += 1;
                    output.push(next - 1);
                    next - 1
                }
            };
            labels.push(label);
        }
        lists.push((op.tensor, LabelList(labels)));
    }
    ContractionSpec {
        operands: lists,
        output_labels: LabelList(output),
    }
}

/// One labelled contraction per connected component of the selection that
/// carries a junction.
pub fn lower_contract(state: &NetworkState, selection: &[TensorId]) -> Result<Vec<ContractionSpec>, NetworkError> {
    Ok(state
        .plan_contract(selection)?
        .iter()
        .map(|ops| assign_labels(ops))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitLowering {
    /// Reordering applied first, absent for the identity.
    pub transposition: Option<Vec<usize>>,
    pub leading: usize,
}

pub fn lower_split(
    state: &NetworkState,
    tensor: TensorId,
    row_dims: &[usize],
    col_dims: &[usize],
) -> Result<SplitLowering, NetworkError> {
    let rank = state.tensor(tensor)?.rank();
    let perm = crate::network::split_permutation(rank, row_dims, col_dims)?;
    let identity = crate::ir::is_identity(&perm);
    Ok(SplitLowering {
        transposition: (!identity).then_some(perm),
        leading: row_dims.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoweringError {
    #[error("{0} is not bound to a dag value")]
    Unbound(TensorId),
    #[error("legs attached to {0}, which is not an input")]
    NotAnInput(TensorId),
}

/// Binding of live tensors to dag ports while a dag is being built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoweringContext {
    binding: BTreeMap<TensorId, PortRef>,
    dag: OpDag,
}

impl LoweringContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn binding(&self, tensor: TensorId) -> Option<PortRef> {
        self.binding.get(&tensor).copied()
    }

    fn take(&mut self, tensor: TensorId) -> Result<PortRef, LoweringError> {
        self.binding.remove(&tensor).ok_or(LoweringError::Unbound(tensor))
    }

    pub fn apply_event(&mut self, event: &NetworkEvent) -> Result<(), LoweringError> {
        match event {
            NetworkEvent::TensorCreated { tensor } => {
                let node = NodeId(tensor.0);
                self.dag.insert(node, Op::Input { rank: 0 });
                self.binding.insert(*tensor, PortRef::single(node));
            }
            NetworkEvent::LegAttached { tensor, rank, .. } => {
                let port = self.binding(*tensor).ok_or(LoweringError::Unbound(*tensor))?;
                match self.dag.op_mut(port.node) {
                    Some(Op::Input { rank: r }) => *r = *rank,
                    _ => return Err(LoweringError::NotAnInput(*tensor)),
                }
            }
            NetworkEvent::Contracted { output, operands } => {
                let spec = assign_labels(operands);
                let mut lowered = Vec::with_capacity(spec.operands.len());
                for (tensor, labels) in spec.operands {
                    lowered.push(Operand {
                        source: self.take(tensor)?,
                        labels,
                    });
                }
                let node = NodeId(output.0);
                self.dag.insert(
                    node,
                    Op::Contraction(ContractionNode {
                        operands: lowered,
                        output_labels: spec.output_labels,
                    }),
                );
                self.binding.insert(*output, PortRef::single(node));
            }
            NetworkEvent::Transposed { output, operand, perm } => {
                let source = self.take(*operand)?;
                let node = NodeId(output.0);
                self.dag.insert(
                    node,
                    Op::Transposition(TranspositionNode {
                        operand: source,
                        perm: perm.clone(),
                    }),
                );
                self.binding.insert(*output, PortRef::single(node));
            }
            NetworkEvent::Split {
                operand,
                leading,
                kind,
                outputs,
                ..
            } => {
                let source = self.take(*operand)?;
                let node = NodeId(outputs[0].0);
                debug_assert!(outputs.iter().enumerate().all(|(i, t)| t.0 == node.0 + i as u64));
                let op = match kind {
                    SplitKind::Qr => Op::QrSplit(QrSplitNode {
                        operand: source,
                        leading: *leading,
                    }),
                    SplitKind::Svd(params) => Op::SvdSplit(SvdSplitNode {
                        operand: source,
                        leading: *leading,
                        sv_cutoff_abs: params.sv_cutoff_abs,
                        max_bond: params.max_bond,
                    }),
                };
                self.dag.insert(node, op);
                for (port, tensor) in outputs.iter().enumerate() {
                    self.binding.insert(*tensor, PortRef::new(node, port));
                }
            }
        }
        Ok(())
    }

    /// The dag built so far with every bound (live) tensor as a result, in
    /// ascending tensor id.
    pub fn dag(&self) -> OpDag {
        let mut dag = self.dag.clone();
        dag.set_results(self.binding.values().copied().collect());
        dag
    }
}

/// A network together with the dag of everything done to it so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lowerer {
    state: NetworkState,
    ctx: LoweringContext,
}

impl Lowerer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn context(&self) -> &LoweringContext {
        &self.ctx
    }

    pub fn dag(&self) -> OpDag {
        self.ctx.dag()
    }

    /// Applies one action; on error nothing changes.
    pub fn apply(&mut self, action: &UserAction) -> Result<Vec<NetworkEvent>, NetworkError> {
        let mut state = self.state.clone();
        let events = state.apply(action)?;
        for e in &events {
            self.ctx
                .apply_event(e)
                .expect("events of a consistent network always lower");
        }
        self.state = state;
        Ok(events)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action {index}: {error}")]
pub struct ScriptError {
    pub index: usize,
    pub error: NetworkError,
}

pub fn lower_script(actions: &[UserAction]) -> Result<Lowerer, ScriptError> {
    let mut lowerer = Lowerer::new();
    for (index, action) in actions.iter().enumerate() {
        lowerer.apply(action).map_err(|error| ScriptError { index, error })?;
    }
    Ok(lowerer)
}
