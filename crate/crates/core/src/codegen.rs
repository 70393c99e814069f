//! Python/NumPy source emission.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{LabelList, NodeId, Op, OpDag, PortRef, Violation};

/// Lines, including indentation, are wrapped to this width when possible.
pub const LINE_WIDTH: usize = 79;
const INDENT: &str = "    ";
/// numpy's einsum accepts sublist labels `0..52`.
pub const MAX_LABELS: u32 = 52;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("unsupported target `{0}`; the only target is `numpy`")]
    UnsupportedTarget(String),
    #[error("dag is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidDag(Vec<Violation>),
    #[error("{node} uses {count} distinct labels, more than numpy's einsum accepts ({MAX_LABELS})")]
    TooManyLabels { node: NodeId, count: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmittedProgram {
    pub function_name: String,
    pub parameters: Vec<String>,
    /// Body lines without the function indentation; continuation lines keep
    /// their own leading spaces.
    pub statements: Vec<String>,
    pub returns: Vec<String>,
}

pub fn var(port: PortRef) -> String {
    format!("T{}", port.tensor_number())
}

fn tuple(items: impl IntoIterator<Item = impl ToString>) -> String {
    let items: Vec<String> = items.into_iter().map(|i| i.to_string()).collect();
    match items.len() {
        1 => format!("({},)", items[0]),
        _ => format!("({})", items.join(", ")),
    }
}

fn labels(l: &LabelList) -> String {
    tuple(l.iter())
}

pub fn emit(dag: &OpDag, target: &str) -> Result<EmittedProgram, CodegenError> {
    if target != "numpy" {
        return Err(CodegenError::UnsupportedTarget(target.to_string()));
    }
    dag.validate().map_err(CodegenError::InvalidDag)?;
    let order = dag.topo_order().expect("validated dag is acyclic");

    let parameters = dag
        .inputs()
        .into_iter()
        .map(|(id, _)| var(PortRef::single(id)))
        .collect();
    let mut statements = Vec::new();
    for id in order {
        let op = dag.op(id).expect("ordered node exists");
        let out = |port: usize| var(PortRef::new(id, port));
        match op {
            Op::Input { .. } => {}
            Op::Contraction(c) => {
                let count = c.max_label().map_or(0, |m| m + 1);
                if count > MAX_LABELS {
                    return Err(CodegenError::TooManyLabels { node: id, count });
                }
                let mut pieces: Vec<String> = c
                    .operands
                    .iter()
                    .map(|o| format!("{}, {}", var(o.source), labels(&o.labels)))
                    .collect();
                let last = pieces.pop().unwrap_or_default();
                pieces.push(format!("{last}, {})", labels(&c.output_labels)));
                let head = format!("{} = np.einsum(", out(0));
                statements.extend(wrap_call(&head, &pieces));
            }
            Op::Transposition(t) => {
                statements.push(format!(
                    "{} = np.transpose({}, {})",
                    out(0),
                    var(t.operand),
                    tuple(&t.perm)
                ));
            }
            Op::QrSplit(q) => {
                let (a, l) = (var(q.operand), q.leading);
                let (qn, rn) = (out(0), out(1));
                statements.push(format!(
                    "{qn}, {rn} = np.linalg.qr({a}.reshape((np.prod({a}.shape[:{l}]),"
                ));
                statements.push(format!("{:14}np.prod({a}.shape[{l}:]))), mode='reduced')", ""));
                statements.extend(dematricize(&a, l, &qn, &rn));
            }
            Op::SvdSplit(s) => {
                let (a, l) = (var(s.operand), s.leading);
                let (un, sn, vn) = (out(0), out(1), out(2));
                statements.push(format!(
                    "{un}, {sn}, {vn} = np.linalg.svd({a}.reshape((np.prod({a}.shape[:{l}]),"
                ));
                statements.push(format!("{:14}np.prod({a}.shape[{l}:]))), full_matrices=False)", ""));
                let k = format!("k{}", id.0);
                let kept = format!("max(1, int(np.count_nonzero({sn} > {:?})))", s.sv_cutoff_abs);
                statements.push(match s.max_bond {
                    Some(cap) => format!("{k} = min({kept}, {cap})"),
                    None => format!("{k} = {kept}"),
                });
                statements.push(format!("{un}, {sn}, {vn} = {un}[:, :{k}], {sn}[:{k}], {vn}[:{k}, :]"));
                statements.extend(dematricize(&a, l, &un, &vn));
            }
        }
    }
    let returns = dag.results().iter().map(|r| var(*r)).collect();
    Ok(EmittedProgram {
        function_name: "f".to_string(),
        parameters,
        statements,
        returns,
    })
}

fn dematricize(a: &str, l: usize, left: &str, right: &str) -> [String; 2] {
    [
        format!("{left} = {left}.reshape({a}.shape[:{l}] + ({left}.shape[1],))"),
        format!("{right} = {right}.reshape(({right}.shape[0],) + {a}.shape[{l}:])"),
    ]
}

/// Lays out `head piece, piece, ...` over as few lines as fit in
/// [`LINE_WIDTH`], then balances line lengths. Continuation lines align with
/// the opening parenthesis.
fn wrap_call(head: &str, pieces: &[String]) -> Vec<String> {
    let cont = head.len();
    let n = pieces.len();
    let width = |range: std::ops::Range<usize>| -> usize {
        INDENT.len()
            + cont
            + pieces[range.clone()].iter().map(String::len).sum::<usize>()
            + 2 * (range.len() - 1)
            + usize::from(range.end < n)
    };
    // best[i] = (lines, max width) for laying out pieces[i..], with the
    // chosen end of the first line.
    let mut best: Vec<Option<(usize, usize, usize)>> = vec![None; n + 1];
    best[n] = Some((0, 0, n));
    for i in (0..n).rev() {
        for j in i + 1..=n {
            let w = width(i..j);
            let (lines, widest, _) = best[j].expect("suffix solved");
            let cand = (lines + 1, widest.max(w), j);
            let fits = w <= LINE_WIDTH || j == i + 1;
            if fits && best[i].is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                best[i] = Some(cand);
            }
        }
    }
    let mut lines = Vec::new();
    let mut i = 0;
    while i < n {
        let j = best[i].expect("solved").2;
        let mut line = if i == 0 { head.to_string() } else { " ".repeat(cont) };
        line.push_str(&pieces[i..j].join(", "));
        if j < n {
            line.push(',');
        }
        lines.push(line);
        i = j;
    }
    lines
}

pub fn emit_module(program: &EmittedProgram) -> String {
    let mut text = String::from("import numpy as np\n\n");
    let _ = writeln!(
        text,
        "def {}({}):",
        program.function_name,
        program.parameters.join(", ")
    );
    for s in &program.statements {
        let _ = writeln!(text, "{INDENT}{s}");
    }
    let ret = match program.returns.as_slice() {
        [single] => single.clone(),
        many => format!("({})", many.join(", ")),
    };
    let _ = writeln!(text, "{INDENT}return {ret}");
    text
}

/// Convenience wrapper: validate, emit and render in one step.
pub fn generate(dag: &OpDag, target: &str) -> Result<String, CodegenError> {
    emit(dag, target).map(|p| emit_module(&p))
}
