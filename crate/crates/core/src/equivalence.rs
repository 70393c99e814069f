//! Numerical comparison of two programs built from the same network.
//!
//! Factor tensors of a QR or SVD split are only defined up to a gauge on
//! their bond, so they are never compared entry by entry. Instead every
//! connected component of the final network is contracted over its
//! junctions; the resulting component values are gauge invariant.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::interp::{eval_contraction, eval_dag, DagEvalError, DenseTensor, EvalError};
use crate::ir::{ContractionNode, NodeId, Op, OpDag, Operand, PortRef};
use crate::lowering::{assign_labels, lower_script, ScriptError};
use crate::network::{ContractOperand, NetworkState, TensorId, UserAction};
use crate::optimizer::{run_pipeline, OptLevel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquivalenceError {
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("no shape given for input {0}")]
    MissingShape(TensorId),
    #[error("shape {shape:?} given for {tensor}, which has rank {rank}")]
    ShapeRank {
        tensor: TensorId,
        shape: Vec<usize>,
        rank: usize,
    },
    #[error(transparent)]
    Eval(#[from] DagEvalError),
    #[error("component evaluation failed: {0}")]
    Component(#[from] EvalError),
    #[error("programs return {reference} and {candidate} results")]
    ResultCount { reference: usize, candidate: usize },
}

/// Standard-normal entries for every input node of `dag`; input `n` takes
/// the shape listed for tensor `n`.
pub fn random_inputs(
    dag: &OpDag,
    shapes: &BTreeMap<TensorId, Vec<usize>>,
    rng: &mut impl Rng,
) -> Result<BTreeMap<NodeId, DenseTensor>, EquivalenceError> {
    let mut inputs = BTreeMap::new();
    for (id, rank) in dag.inputs() {
        let tensor = TensorId(id.0);
        let shape = match shapes.get(&tensor) {
            Some(s) => s.clone(),
            None if rank == 0 => Vec::new(),
            None => return Err(EquivalenceError::MissingShape(tensor)),
        };
        if shape.len() != rank {
            return Err(EquivalenceError::ShapeRank { tensor, shape, rank });
        }
        let t = DenseTensor::from_fn(shape, |_| rng.sample(StandardNormal));
        inputs.insert(id, t);
    }
    Ok(inputs)
}

/// Contracts each connected component of `state` over its junctions.
/// `results` holds the value of every live tensor in ascending id.
pub fn component_values(state: &NetworkState, results: &[DenseTensor]) -> Result<Vec<DenseTensor>, EvalError> {
    let ids = state.tensor_ids();
    if ids.len() != results.len() {
        return Err(EvalError::OperandCount {
            expected: ids.len(),
            found: results.len(),
        });
    }
    let value: BTreeMap<TensorId, &DenseTensor> = ids.iter().copied().zip(results).collect();
    let mut out = Vec::new();
    for component in state.connected_components(&ids).expect("live ids are known") {
        let operands: Vec<ContractOperand> = component
            .iter()
            .map(|&tensor| ContractOperand {
                tensor,
                legs: state.leg_junctions(tensor).expect("live tensor"),
            })
            .collect();
        let spec = assign_labels(&operands);
        let node = ContractionNode {
            operands: spec
                .operands
                .iter()
                .map(|(t, labels)| Operand {
                    source: PortRef::single(NodeId(t.0)),
                    labels: labels.clone(),
                })
                .collect(),
            output_labels: spec.output_labels,
        };
        let tensors: Vec<&DenseTensor> = component.iter().map(|t| value[t]).collect();
        out.push(eval_contraction(&node, &tensors)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EquivalenceReport {
    /// Largest relative Frobenius error over all compared tensors.
    pub max_rel_error: f64,
    pub direct_results: usize,
    pub components: usize,
}

impl EquivalenceReport {
    fn observe(&mut self, a: &DenseTensor, b: &DenseTensor) {
        let e = a.relative_error(b);
        if e.is_nan() || e > self.max_rel_error {
            self.max_rel_error = if e.is_nan() { f64::INFINITY } else { e };
        }
    }
}

fn split_ports(dag: &OpDag, port: &PortRef) -> bool {
    matches!(dag.op(port.node), Some(Op::QrSplit(_) | Op::SvdSplit(_)))
}

/// Compares result lists of two programs for the network `state`: results
/// not produced by a split directly, then every component value.
pub fn compare_results(
    state: &NetworkState,
    reference_dag: &OpDag,
    reference: &[DenseTensor],
    candidate: &[DenseTensor],
) -> Result<EquivalenceReport, EquivalenceError> {
    if reference.len() != candidate.len() {
        return Err(EquivalenceError::ResultCount {
            reference: reference.len(),
            candidate: candidate.len(),
        });
    }
    let mut report = EquivalenceReport::default();
    for ((port, a), b) in reference_dag.results().iter().zip(reference).zip(candidate) {
        if !split_ports(reference_dag, port) {
            report.observe(b, a);
            report.direct_results += 1;
        }
    }
    let ra = component_values(state, reference)?;
    let rb = component_values(state, candidate)?;
    for (a, b) in ra.iter().zip(&rb) {
        report.observe(b, a);
        report.components += 1;
    }
    Ok(report)
}

/// Lowers `actions`, optimizes at `level` and compares against the
/// unoptimized program on random inputs.
pub fn check_script(
    actions: &[UserAction],
    shapes: &BTreeMap<TensorId, Vec<usize>>,
    level: OptLevel,
    rng: &mut impl Rng,
) -> Result<EquivalenceReport, EquivalenceError> {
    let lowerer = lower_script(actions)?;
    let reference_dag = lowerer.dag();
    let (optimized, _) = run_pipeline(&reference_dag, level);
    let inputs = random_inputs(&reference_dag, shapes, rng)?;
    let reference = eval_dag(&reference_dag, &inputs)?;
    let candidate = eval_dag(&optimized, &inputs)?;
    compare_results(lowerer.state(), &reference_dag, &reference, &candidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::eval_transpose;
    use crate::scripts;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn listing_shapes() -> BTreeMap<TensorId, Vec<usize>> {
        BTreeMap::from([
            (TensorId(0), vec![2, 3, 4]),
            (TensorId(1), vec![5, 4]),
            (TensorId(2), vec![2, 6, 7]),
        ])
    }

    #[test]
    fn listing_survives_every_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for level in [OptLevel::O0, OptLevel::O1, OptLevel::O2] {
            let r = check_script(&scripts::listing_script(), &listing_shapes(), level, &mut rng).unwrap();
            assert!(r.max_rel_error <= 1e-12, "{level:?}: {}", r.max_rel_error);
            assert_eq!((r.direct_results, r.components), (0, 1));
        }
    }

    #[test]
    fn gauge_change_is_invisible() {
        let lowerer = lower_script(&scripts::listing_script()).unwrap();
        let dag = lowerer.dag();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let inputs = random_inputs(&dag, &listing_shapes(), &mut rng).unwrap();
        let results = eval_dag(&dag, &inputs).unwrap();
        // Flip the sign of one bond column of Q and the matching row of R.
        let flip = |t: &DenseTensor, axis: usize| {
            let shape = t.shape().to_vec();
            DenseTensor::from_fn(shape, |i| if i[axis] == 0 { -t.get(i) } else { t.get(i) })
        };
        let gauged = vec![flip(&results[0], 2), flip(&results[1], 0)];
        let r = compare_results(lowerer.state(), &dag, &results, &gauged).unwrap();
        assert!(r.max_rel_error < 1e-14);
        let broken = vec![flip(&results[0], 2), results[1].clone()];
        let r = compare_results(lowerer.state(), &dag, &results, &broken).unwrap();
        assert!(r.max_rel_error > 1e-3);
    }

    #[test]
    fn listing_shapes_follow_bond_rule() {
        let lowerer = lower_script(&scripts::listing_script()).unwrap();
        let dag = lowerer.dag();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let inputs = random_inputs(&dag, &listing_shapes(), &mut rng).unwrap();
        let results = eval_dag(&dag, &inputs).unwrap();
        // Contraction output (3, 5, 6, 7) is reordered to (7, 3, 6, 5) and
        // matricized as 21 x 30.
        assert_eq!(results[0].shape(), &[7, 3, 21]);
        assert_eq!(results[1].shape(), &[21, 6, 5]);
        let t3 = crate::interp::eval_dag_ports(&dag, &inputs).unwrap()[&PortRef::single(NodeId(3))].clone();
        assert_eq!(t3.shape(), &[3, 5, 6, 7]);
        let t4 = eval_transpose(&[3, 0, 2, 1], &t3).unwrap();
        assert!(component_values(lowerer.state(), &results).unwrap()[0].relative_error(&t4) < 1e-12);
    }

    #[test]
    fn missing_shape_is_reported() {
        let dag = lower_script(&scripts::listing_script()).unwrap().dag();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut shapes = listing_shapes();
        shapes.remove(&TensorId(1));
        assert_eq!(
            random_inputs(&dag, &shapes, &mut rng).unwrap_err(),
            EquivalenceError::MissingShape(TensorId(1))
        );
    }
}
