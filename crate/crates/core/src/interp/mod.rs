//! Reference interpreter: evaluates an [`OpDag`] on concrete dense tensors.
//!
//! This is the semantic oracle for the optimizer and the code generator, so
//! it depends on nothing but its own kernels.

pub mod linalg;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{
    is_permutation, ContractionNode, IrError, Label, NodeId, Op, OpDag, PortRef, QrSplitNode, SvdSplitNode,
};

/// Row-major dense tensor. Rank 0 is a scalar holding one value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, EvalError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(EvalError::DataLength { shape, len: data.len() });
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        DenseTensor {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn scalar(value: f64) -> Self {
        DenseTensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = DenseTensor::zeros(shape);
        let mut idx = vec![0; t.rank()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            increment(&mut idx, &t.shape);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let off: usize = idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum();
        self.data[off]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self, EvalError> {
        DenseTensor::new(shape, self.data)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `||self - other|| / ||other||` in the Frobenius norm; infinite when the
    /// shapes differ.
    pub fn relative_error(&self, other: &DenseTensor) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        let diff = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm = other.frobenius_norm();
        if norm == 0.0 {
            diff
        } else {
            diff / norm
        }
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Odometer step over `shape`; returns false after wrapping around.
fn increment(idx: &mut [usize], shape: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("data of length {len} does not fit shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("label {label} has conflicting sizes {first} and {second}")]
    ShapeMismatch { label: Label, first: usize, second: usize },
    #[error("expected {expected} operands, got {found}")]
    OperandCount { expected: usize, found: usize },
    #[error("operand {slot} has rank {found} but {expected} labels")]
    RankMismatch { slot: usize, expected: usize, found: usize },
    #[error("output label {0} does not occur among the operands")]
    UnknownOutputLabel(Label),
    #[error("contraction without operands")]
    EmptyContraction,
    #[error("{perm:?} is not a permutation of a rank-{rank} tensor")]
    InvalidPermutation { perm: Vec<usize>, rank: usize },
    #[error("leading {leading} not strictly between 0 and rank {rank}")]
    InvalidLeading { leading: usize, rank: usize },
    #[error("singular value cutoff {0} is negative or not finite")]
    InvalidCutoff(f64),
    #[error("no tensor supplied for input {0}")]
    MissingInput(NodeId),
    #[error("input {node} declared with rank {expected}, got shape {shape:?}")]
    InputRank {
        node: NodeId,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("malformed dag: {0}")]
    MalformedDag(String),
    #[error("operand unavailable because {0} failed")]
    UpstreamFailed(NodeId),
}

/// Labelled tensor used while evaluating a contraction.
struct Term {
    labels: Vec<Label>,
    tensor: DenseTensor,
}

fn label_sizes(node: &ContractionNode, operands: &[&DenseTensor]) -> Result<BTreeMap<Label, usize>, EvalError> {
    if node.operands.is_empty() {
        return Err(EvalError::EmptyContraction);
    }
    if node.operands.len() != operands.len() {
        return Err(EvalError::OperandCount {
            expected: node.operands.len(),
            found: operands.len(),
        });
    }
    let mut sizes: BTreeMap<Label, usize> = BTreeMap::new();
    for (slot, (op, t)) in node.operands.iter().zip(operands).enumerate() {
        if op.labels.len() != t.rank() {
            return Err(EvalError::RankMismatch {
                slot,
                expected: op.labels.len(),
                found: t.rank(),
            });
        }
        for (&l, &d) in op.labels.iter().zip(t.shape()) {
            match sizes.get(&l) {
                Some(&prev) if prev != d => {
                    return Err(EvalError::ShapeMismatch {
                        label: l,
                        first: prev,
                        second: d,
                    })
                }
                _ => {
                    sizes.insert(l, d);
                }
            }
        }
    }
    for &l in node.output_labels.iter() {
        if !sizes.contains_key(&l) {
            return Err(EvalError::UnknownOutputLabel(l));
        }
    }
    Ok(sizes)
}

/// Multiplies two labelled tensors, summing every label not in `keep`.
/// Result labels are the kept labels in first-appearance order.
fn contract_pair(a: &Term, b: &Term, keep: &BTreeSet<Label>, sizes: &BTreeMap<Label, usize>) -> Term {
    let mut union: Vec<Label> = Vec::new();
    for &l in a.labels.iter().chain(&b.labels) {
        if !union.contains(&l) {
            union.push(l);
        }
    }
    let out_labels: Vec<Label> = union.iter().copied().filter(|l| keep.contains(l)).collect();
    let out_shape: Vec<usize> = out_labels.iter().map(|l| sizes[l]).collect();
    let out_strides = strides(&out_shape);

    let stride_for = |labels: &[Label], tensor_strides: &[usize], l: Label| -> usize {
        labels
            .iter()
            .zip(tensor_strides)
            .filter(|(x, _)| **x == l)
            .map(|(_, s)| *s)
            .sum()
    };
    let (sa, sb) = (a.tensor.strides(), b.tensor.strides());
    let union_shape: Vec<usize> = union.iter().map(|l| sizes[l]).collect();
    let steps: Vec<(usize, usize, usize)> = union
        .iter()
        .map(|&l| {
            let so = out_labels.iter().position(|&x| x == l).map_or(0, |p| out_strides[p]);
            (stride_for(&a.labels, &sa, l), stride_for(&b.labels, &sb, l), so)
        })
        .collect();

    let mut out = DenseTensor::zeros(out_shape);
    if union_shape.contains(&0) {
        return Term {
            labels: out_labels,
            tensor: out,
        };
    }
    let (da, db) = (a.tensor.data(), b.tensor.data());
    let mut idx = vec![0usize; union.len()];
    let (mut oa, mut ob, mut oo) = (0usize, 0usize, 0usize);
    loop {
        out.data[oo] += da[oa] * db[ob];
        // Advance the odometer, keeping the three offsets in step.
        let mut k = union.len();
        loop {
            if k == 0 {
                return Term {
                    labels: out_labels,
                    tensor: out,
                };
            }
            k -= 1;
            let (xa, xb, xo) = steps[k];
            idx[k] += 1;
            oa += xa;
            ob += xb;
            oo += xo;
            if idx[k] < union_shape[k] {
                break;
            }
            let back = idx[k];
            oa -= xa * back;
            ob -= xb * back;
            oo -= xo * back;
            idx[k] = 0;
        }
    }
}

/// Evaluates an einsum-style contraction.
///
/// Operands are combined pairwise, greedily picking the pair with the
/// smallest joint index space, and every label is summed as soon as no
/// remaining operand or the output needs it.
pub fn eval_contraction(node: &ContractionNode, operands: &[&DenseTensor]) -> Result<DenseTensor, EvalError> {
    let sizes = label_sizes(node, operands)?;
    let output: Vec<Label> = node.output_labels.0.clone();
    let mut terms: Vec<Term> = node
        .operands
        .iter()
        .zip(operands)
        .map(|(op, t)| Term {
            labels: op.labels.0.clone(),
            tensor: (*t).clone(),
        })
        .collect();

    let needed = |terms: &[Term], skip: &[usize]| -> BTreeSet<Label> {
        let mut keep: BTreeSet<Label> = output.iter().copied().collect();
        for (i, t) in terms.iter().enumerate() {
            if !skip.contains(&i) {
                keep.extend(t.labels.iter().copied());
            }
        }
        keep
    };

    while terms.len() > 1 {
        let mut best: Option<(u128, usize, usize)> = None;
        for i in 0..terms.len() {
            for j in i + 1..terms.len() {
                let mut seen = BTreeSet::new();
                let cost: u128 = terms[i]
                    .labels
                    .iter()
                    .chain(&terms[j].labels)
                    .filter(|l| seen.insert(**l))
                    .map(|l| sizes[l] as u128)
                    .product();
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least two terms");
        let keep = needed(&terms, &[i, j]);
        let merged = contract_pair(&terms[i], &terms[j], &keep, &sizes);
        terms.remove(j);
        terms[i] = merged;
    }

    let last = terms.pop().expect("one term left");
    let unit = Term {
        labels: Vec::new(),
        tensor: DenseTensor::scalar(1.0),
    };
    let keep: BTreeSet<Label> = output.iter().copied().collect();
    let reduced = contract_pair(&last, &unit, &keep, &sizes);
    let perm: Vec<usize> = output
        .iter()
        .map(|l| reduced.labels.iter().position(|x| x == l).expect("output label kept"))
        .collect();
    eval_transpose(&perm, &reduced.tensor)
}

/// Output dimension `k` is input dimension `perm[k]`.
pub fn eval_transpose(perm: &[usize], t: &DenseTensor) -> Result<DenseTensor, EvalError> {
    if perm.len() != t.rank() || !is_permutation(perm) {
        return Err(EvalError::InvalidPermutation {
            perm: perm.to_vec(),
            rank: t.rank(),
        });
    }
    let in_strides = t.strides();
    let shape: Vec<usize> = perm.iter().map(|&p| t.shape[p]).collect();
    let step: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = DenseTensor::zeros(shape);
    if out.is_empty() {
        return Ok(out);
    }
    let mut idx = vec![0usize; perm.len()];
    let mut src = 0usize;
    for slot in out.data.iter_mut() {
        *slot = t.data[src];
        for k in (0..idx.len()).rev() {
            idx[k] += 1;
            src += step[k];
            if idx[k] < out.shape[k] {
                break;
            }
            src -= step[k] * idx[k];
            idx[k] = 0;
        }
    }
    Ok(out)
}

fn matricize(leading: usize, t: &DenseTensor) -> Result<(usize, usize), EvalError> {
    if leading == 0 || leading >= t.rank() {
        return Err(EvalError::InvalidLeading {
            leading,
            rank: t.rank(),
        });
    }
    let m = t.shape[..leading].iter().product();
    let n = t.shape[leading..].iter().product();
    Ok((m, n))
}

/// Reduced QR of the matricization; `Q` gets the leading dimensions plus the
/// bond, `R` the bond plus the trailing dimensions.
pub fn eval_qr(leading: usize, t: &DenseTensor) -> Result<(DenseTensor, DenseTensor), EvalError> {
    let (m, n) = matricize(leading, t)?;
    let (q, r, k) = linalg::householder_qr(m, n, t.data());
    let mut q_shape = t.shape[..leading].to_vec();
    q_shape.push(k);
    let mut r_shape = vec![k];
    r_shape.extend_from_slice(&t.shape[leading..]);
    Ok((DenseTensor::new(q_shape, q)?, DenseTensor::new(r_shape, r)?))
}

/// Truncated SVD of the matricization: `U` with leading dims plus bond,
/// `S` as a vector, `V` with the bond plus trailing dims.
pub fn eval_svd(
    leading: usize,
    sv_cutoff_abs: f64,
    max_bond: Option<usize>,
    t: &DenseTensor,
) -> Result<(DenseTensor, DenseTensor, DenseTensor), EvalError> {
    if sv_cutoff_abs < 0.0 || !sv_cutoff_abs.is_finite() {
        return Err(EvalError::InvalidCutoff(sv_cutoff_abs));
    }
    let (m, n) = matricize(leading, t)?;
    let full = linalg::jacobi_svd(m, n, t.data());
    let k = linalg::kept_count(&full.s, sv_cutoff_abs, max_bond);
    let svd = full.truncated(k);
    let mut u_shape = t.shape[..leading].to_vec();
    u_shape.push(k);
    let mut v_shape = vec![k];
    v_shape.extend_from_slice(&t.shape[leading..]);
    Ok((
        DenseTensor::new(u_shape, svd.u)?,
        DenseTensor::new(vec![k], svd.s)?,
        DenseTensor::new(v_shape, svd.vt)?,
    ))
}

/// Errors of a dag evaluation, one entry per failing node.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", .0.iter().map(|(n, e)| format!("{n}: {e}")).collect::<Vec<_>>().join("; "))]
pub struct DagEvalError(pub Vec<(NodeId, EvalError)>);

/// Evaluates every node; returns the value of every port.
pub fn eval_dag_ports(
    dag: &OpDag,
    inputs: &BTreeMap<NodeId, DenseTensor>,
) -> Result<BTreeMap<PortRef, DenseTensor>, DagEvalError> {
    let order = dag.topo_order().map_err(|e| {
        let at = match &e {
            IrError::CycleDetected(nodes) => nodes.first().copied(),
            IrError::DanglingReference { node, .. } => Some(*node),
        };
        DagEvalError(vec![(at.unwrap_or(NodeId(0)), EvalError::MalformedDag(e.to_string()))])
    })?;
    let mut values: BTreeMap<PortRef, DenseTensor> = BTreeMap::new();
    let mut errors: Vec<(NodeId, EvalError)> = Vec::new();
    let mut failed: BTreeSet<NodeId> = BTreeSet::new();

    for id in order {
        let op = dag.op(id).expect("ordered node exists");
        if let Some(bad) = op.operands().iter().find(|p| failed.contains(&p.node)) {
            errors.push((id, EvalError::UpstreamFailed(bad.node)));
            failed.insert(id);
            continue;
        }
        let fetch = |p: &PortRef| values.get(p).expect("operand evaluated");
        let outcome: Result<Vec<DenseTensor>, EvalError> = match op {
            Op::Input { rank } => match inputs.get(&id) {
                None => Err(EvalError::MissingInput(id)),
                Some(t) if t.rank() != *rank => Err(EvalError::InputRank {
                    node: id,
                    expected: *rank,
                    shape: t.shape().to_vec(),
                }),
                Some(t) => Ok(vec![t.clone()]),
            },
            Op::Contraction(c) => {
                let ops: Vec<&DenseTensor> = c.operands.iter().map(|o| fetch(&o.source)).collect();
                eval_contraction(c, &ops).map(|t| vec![t])
            }
            Op::Transposition(t) => eval_transpose(&t.perm, fetch(&t.operand)).map(|t| vec![t]),
            Op::QrSplit(QrSplitNode { operand, leading }) => eval_qr(*leading, fetch(operand)).map(|(q, r)| vec![q, r]),
            Op::SvdSplit(SvdSplitNode {
                operand,
                leading,
                sv_cutoff_abs,
                max_bond,
            }) => eval_svd(*leading, *sv_cutoff_abs, *max_bond, fetch(operand)).map(|(u, s, v)| vec![u, s, v]),
        };
        match outcome {
            Ok(outs) => {
                for (port, t) in outs.into_iter().enumerate() {
                    values.insert(PortRef::new(id, port), t);
                }
            }
            Err(e) => {
                errors.push((id, e));
                failed.insert(id);
            }
        }
    }
    if errors.is_empty() {
        Ok(values)
    } else {
        Err(DagEvalError(errors))
    }
}

/// Evaluates the dag and returns its results in order.
pub fn eval_dag(dag: &OpDag, inputs: &BTreeMap<NodeId, DenseTensor>) -> Result<Vec<DenseTensor>, DagEvalError> {
    let values = eval_dag_ports(dag, inputs)?;
    Ok(dag.results().iter().map(|r| values[r].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{contraction, TranspositionNode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        DenseTensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    fn p(n: u64) -> PortRef {
        PortRef::single(NodeId(n))
    }

    /// Nested loops over every label, written independently of the pairwise
    /// evaluator.
    fn brute_force(node: &ContractionNode, ops: &[&DenseTensor]) -> DenseTensor {
        let mut sizes = BTreeMap::new();
        for (o, t) in node.operands.iter().zip(ops) {
            for (l, d) in o.labels.iter().zip(t.shape()) {
                sizes.insert(*l, *d);
            }
        }
        let labels: Vec<Label> = sizes.keys().copied().collect();
        let dims: Vec<usize> = labels.iter().map(|l| sizes[l]).collect();
        let out_shape: Vec<usize> = node.output_labels.iter().map(|l| sizes[l]).collect();
        let mut out = DenseTensor::zeros(out_shape);
        let total: usize = dims.iter().product();
        for flat in 0..total {
            let mut rem = flat;
            let mut value = BTreeMap::new();
            for (l, d) in labels.iter().zip(&dims).rev() {
                value.insert(*l, rem % d);
                rem /= d;
            }
            let mut prod = 1.0;
            for (o, t) in node.operands.iter().zip(ops) {
                let idx: Vec<usize> = o.labels.iter().map(|l| value[l]).collect();
                prod *= t.get(&idx);
            }
            let oidx: Vec<usize> = node.output_labels.iter().map(|l| value[l]).collect();
            let off: usize = oidx.iter().zip(out.strides()).map(|(i, s)| i * s).sum();
            out.data[off] += prod;
        }
        out
    }

    #[test]
    fn trace_of_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&[2, 2], &mut rng);
        let b = random(&[2, 2], &mut rng);
        let c = contraction(vec![(p(0), vec![0, 1]), (p(1), vec![1, 0])], vec![]);
        let out = eval_contraction(&c, &[&a, &b]).unwrap();
        let mut expected = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                expected += a.get(&[i, j]) * b.get(&[j, i]);
            }
        }
        assert_eq!(out.shape(), &[] as &[usize]);
        assert!((out.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn identity_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&[3, 4], &mut rng);
        let c = contraction(vec![(p(0), vec![0, 1])], vec![0, 1]);
        assert_eq!(eval_contraction(&c, &[&a]).unwrap(), a);
    }

    #[test]
    fn hyperedge_network_matches_nested_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // s0=(0,1,2), s1=(0,1,3), s2=(0,4), s3=(4,5) -> (2,3,5)
        let t0 = random(&[2, 3, 4], &mut rng);
        let t1 = random(&[2, 3, 2], &mut rng);
        let t2 = random(&[2, 3], &mut rng);
        let t3 = random(&[3, 4], &mut rng);
        let c = contraction(
            vec![
                (p(0), vec![0, 1, 2]),
                (p(1), vec![0, 1, 3]),
                (p(2), vec![0, 4]),
                (p(3), vec![4, 5]),
            ],
            vec![2, 3, 5],
        );
        let out = eval_contraction(&c, &[&t0, &t1, &t2, &t3]).unwrap();
        let mut expected = DenseTensor::zeros(vec![4, 2, 4]);
        for a in 0..2 {
            for b in 0..3 {
                for e in 0..3 {
                    for i in 0..4 {
                        for j in 0..2 {
                            for k in 0..4 {
                                let v = t0.get(&[a, b, i]) * t1.get(&[a, b, j]) * t2.get(&[a, e]) * t3.get(&[e, k]);
                                expected.data[i * 8 + j * 4 + k] += v;
                            }
                        }
                    }
                }
            }
        }
        assert!(out.relative_error(&expected) < 1e-12);
    }

    #[test]
    fn shape_mismatch_names_label() {
        let a = DenseTensor::zeros(vec![2, 3]);
        let b = DenseTensor::zeros(vec![4, 2]);
        let c = contraction(vec![(p(0), vec![0, 1]), (p(1), vec![1, 2])], vec![0, 2]);
        assert_eq!(
            eval_contraction(&c, &[&a, &b]).unwrap_err(),
            EvalError::ShapeMismatch {
                label: 1,
                first: 3,
                second: 4
            }
        );
    }

    #[test]
    fn transpose_follows_index_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random(&[10, 11, 12], &mut rng);
        let out = eval_transpose(&[1, 2, 0], &t).unwrap();
        assert_eq!(out.shape(), &[11, 12, 10]);
        for i in 0..10 {
            for j in 0..11 {
                for k in 0..12 {
                    assert_eq!(out.get(&[j, k, i]), t.get(&[i, j, k]));
                }
            }
        }
        assert_eq!(eval_transpose(&[0, 1, 2], &t).unwrap(), t);
        let m = random(&[3, 5], &mut rng);
        let twice = eval_transpose(&[1, 0], &eval_transpose(&[1, 0], &m).unwrap()).unwrap();
        assert_eq!(twice, m);
        assert!(matches!(
            eval_transpose(&[0, 0, 1], &t),
            Err(EvalError::InvalidPermutation { .. })
        ));
    }

    #[test]
    fn qr_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random(&[2, 3, 4, 5], &mut rng);
        let (q, r) = eval_qr(2, &t).unwrap();
        assert_eq!(q.shape(), &[2, 3, 6]);
        assert_eq!(r.shape(), &[6, 4, 5]);
        let t5 = random(&[2, 2, 3, 2, 2], &mut rng);
        let (q, r) = eval_qr(3, &t5).unwrap();
        assert_eq!(q.shape(), &[2, 2, 3, 4]);
        assert_eq!(r.shape(), &[4, 2, 2]);
        assert!(matches!(eval_qr(0, &t), Err(EvalError::InvalidLeading { .. })));
        assert!(matches!(eval_qr(4, &t), Err(EvalError::InvalidLeading { .. })));
    }

    #[test]
    fn qr_orthogonality_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random(&[3, 4, 5], &mut rng);
        let (q, r) = eval_qr(1, &t).unwrap();
        let qtq = contraction(vec![(p(0), vec![0, 1]), (p(1), vec![0, 2])], vec![1, 2]);
        let gram = eval_contraction(&qtq, &[&q, &q]).unwrap();
        let eye = DenseTensor::from_fn(vec![3, 3], |i| if i[0] == i[1] { 1.0 } else { 0.0 });
        assert!(gram.data().iter().zip(eye.data()).all(|(a, b)| (a - b).abs() < 1e-12));
        let qr = contraction(vec![(p(0), vec![0, 1]), (p(1), vec![1, 2, 3])], vec![0, 2, 3]);
        let back = eval_contraction(&qr, &[&q, &r]).unwrap();
        assert!(back.relative_error(&t) < 1e-10);
    }

    #[test]
    fn svd_of_outer_product_has_bond_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&[6], &mut rng);
        let y = random(&[5], &mut rng);
        let t = DenseTensor::from_fn(vec![2, 3, 5], |i| x.get(&[i[0] * 3 + i[1]]) * y.get(&[i[2]]));
        let (u, s, v) = eval_svd(2, 1e-8, None, &t).unwrap();
        assert_eq!(s.shape(), &[1]);
        assert_eq!(u.shape(), &[2, 3, 1]);
        assert_eq!(v.shape(), &[1, 5]);
    }

    #[test]
    fn svd_max_bond_and_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = random(&[4, 4], &mut rng);
        let (_, s, _) = eval_svd(1, 0.0, Some(2), &t).unwrap();
        assert_eq!(s.len(), 2);
        let (_, s, _) = eval_svd(1, 1e9, None, &t).unwrap();
        assert_eq!(s.len(), 1);
        assert!(matches!(eval_svd(1, -1.0, None, &t), Err(EvalError::InvalidCutoff(_))));
    }

    #[test]
    fn dag_evaluation_echoes_input_and_reports_failures() {
        let mut dag = OpDag::new();
        dag.insert(NodeId(0), Op::Input { rank: 2 });
        dag.set_results(vec![p(0)]);
        let t = DenseTensor::from_fn(vec![2, 3], |i| (i[0] * 3 + i[1]) as f64);
        let inputs = BTreeMap::from([(NodeId(0), t.clone())]);
        assert_eq!(eval_dag(&dag, &inputs).unwrap(), vec![t.clone()]);
        assert!(eval_dag(&OpDag::new(), &BTreeMap::new()).unwrap().is_empty());

        dag.insert(
            NodeId(1),
            Op::Transposition(TranspositionNode {
                operand: p(0),
                perm: vec![0, 0],
            }),
        );
        dag.insert(
            NodeId(2),
            Op::Transposition(TranspositionNode {
                operand: p(1),
                perm: vec![1, 0],
            }),
        );
        let err = eval_dag(&dag, &inputs).unwrap_err();
        assert_eq!(err.0.len(), 2);
        assert_eq!(err.0[0].0, NodeId(1));
        assert_eq!(err.0[1], (NodeId(2), EvalError::UpstreamFailed(NodeId(1))));
        assert_eq!(
            eval_dag(&dag, &BTreeMap::new()).unwrap_err().0[0],
            (NodeId(0), EvalError::MissingInput(NodeId(0)))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn contraction_case() -> impl Strategy<Value = (ContractionNode, Vec<DenseTensor>)> {
            // Up to 4 operands over 5 labels with sizes 1..=3.
            (
                proptest::collection::vec(1usize..4, 5),
                proptest::collection::vec(proptest::collection::vec(0u32..5, 0..4), 1..4),
                any::<u64>(),
            )
                .prop_map(|(sizes, lists, seed)| {
                    let mut counts = BTreeMap::new();
                    for l in lists.iter().flatten() {
                        *counts.entry(*l).or_insert(0) += 1;
                    }
                    let out: Vec<Label> = counts.iter().filter(|(_, &c)| c == 1).map(|(&l, _)| l).rev().collect();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let tensors: Vec<DenseTensor> = lists
                        .iter()
                        .map(|ls| random(&ls.iter().map(|&l| sizes[l as usize]).collect::<Vec<_>>(), &mut rng))
                        .collect();
                    let node = ContractionNode {
                        operands: lists
                            .into_iter()
                            .enumerate()
                            .map(|(i, ls)| crate::ir::Operand {
                                source: p(i as u64),
                                labels: ls.into(),
                            })
                            .collect(),
                        output_labels: out.into(),
                    };
                    (node, tensors)
                })
        }

        proptest! {
            #[test]
            fn pairwise_matches_brute_force((node, tensors) in contraction_case()) {
                let ops: Vec<&DenseTensor> = tensors.iter().collect();
                let fast = eval_contraction(&node, &ops).unwrap();
                let slow = brute_force(&node, &ops);
                prop_assert!(fast.relative_error(&slow) <= 1e-12);
            }

            #[test]
            fn contraction_is_multilinear((node, tensors) in contraction_case(), alpha in -3.0f64..3.0, which in 0usize..4) {
                let which = which % tensors.len();
                let ops: Vec<&DenseTensor> = tensors.iter().collect();
                let base = eval_contraction(&node, &ops).unwrap();
                let scaled_t = tensors[which].scale(alpha);
                let mut ops2 = ops.clone();
                ops2[which] = &scaled_t;
                let scaled = eval_contraction(&node, &ops2).unwrap();
                prop_assert!(scaled.relative_error(&base.scale(alpha)) <= 1e-12);
            }

            #[test]
            fn transpose_inverse_roundtrip(shape in proptest::collection::vec(1usize..4, 0..5), seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = random(&shape, &mut rng);
                let mut perm: Vec<usize> = (0..shape.len()).collect();
                use rand::seq::SliceRandom;
                perm.shuffle(&mut rng);
                let mut inverse = vec![0; perm.len()];
                for (k, &p) in perm.iter().enumerate() {
                    inverse[p] = k;
                }
                let back = eval_transpose(&inverse, &eval_transpose(&perm, &t).unwrap()).unwrap();
                prop_assert_eq!(back, t);
            }
        }
    }
}
