//! Subcommand bodies of the `tnet` binary, kept free of process handling
//! so they can be tested directly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use tnet_core::codegen::{generate, var};
use tnet_core::equivalence::{compare_results, random_inputs, EquivalenceError};
use tnet_core::interp::eval_dag;
use tnet_core::optimizer::{run_pipeline, OptLevel, PassReport};
use tnet_core::{lower_script, OpDag, TensorId};

use crate::script::ActionScript;
use crate::session::{Session, SessionSettings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{0}")]
    Rejected(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Malformed { .. } => 1,
            CliError::Rejected(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

pub fn read_script(path: &Path) -> Result<ActionScript, CliError> {
    ActionScript::parse(&read(path)?).map_err(|e| CliError::Malformed {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn lower(path: &Path) -> Result<OpDag, CliError> {
    let script = read_script(path)?;
    let lowerer = lower_script(&script.actions).map_err(|e| CliError::Rejected(e.to_string()))?;
    Ok(lowerer.dag())
}

#[derive(Debug, Clone)]
pub struct CompileOptions {
    pub opt_level: OptLevel,
    pub target: String,
    pub output: Option<PathBuf>,
    pub emit_ir: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            opt_level: OptLevel::O0,
            target: "numpy".into(),
            output: None,
            emit_ir: None,
            schedule: None,
        }
    }
}

#[derive(Serialize)]
struct IrDump<'a> {
    opt_level: OptLevel,
    dag: &'a OpDag,
    reports: &'a [PassReport],
}

/// Compiles a script. Returns the module text, which is also written to
/// `output` if one is given.
pub fn compile(script: &Path, options: &CompileOptions) -> Result<String, CliError> {
    let (dag, reports) = run_pipeline(&lower(script)?, options.opt_level);
    let text = generate(&dag, &options.target).map_err(|e| CliError::Rejected(e.to_string()))?;
    if let Some(path) = &options.output {
        write(path, &text)?;
    }
    if let Some(path) = &options.emit_ir {
        let dump = IrDump {
            opt_level: options.opt_level,
            dag: &dag,
            reports: &reports,
        };
        write(path, &to_json(&dump))?;
    }
    if let Some(path) = &options.schedule {
        let levels = dag.topo_levels().map_err(|e| CliError::Rejected(e.to_string()))?;
        write(path, &to_json(&levels))?;
    }
    Ok(text)
}

/// Reads a shapes file: a JSON object from tensor names (`"T0"` or `"0"`)
/// to lists of dimensions.
pub fn read_shapes(path: &Path) -> Result<BTreeMap<TensorId, Vec<usize>>, CliError> {
    let malformed = |message: String| CliError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    let value: Value = serde_json::from_str(&read(path)?).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(entries) = value else {
        return Err(malformed(
            "shapes must be an object mapping tensor names to dimension lists".into(),
        ));
    };
    let mut shapes = BTreeMap::new();
    for (key, dims) in entries {
        let id = key
            .strip_prefix('T')
            .unwrap_or(&key)
            .parse::<u64>()
            .map_err(|_| malformed(format!("`{key}` is not a tensor name")))?;
        let dims: Vec<usize> = serde_json::from_value(dims).map_err(|e| malformed(format!("shape of `{key}`: {e}")))?;
        if dims.contains(&0) {
            return Err(malformed(format!("shape of `{key}` has a zero dimension")));
        }
        shapes.insert(TensorId(id), dims);
    }
    Ok(shapes)
}

/// Runs the program on seeded random inputs at level 0 and at `level` and
/// summarizes the results and their largest relative deviation.
pub fn run(script: &Path, shapes: &Path, seed: u64, level: OptLevel) -> Result<String, CliError> {
    let actions = read_script(script)?.actions;
    let shapes = read_shapes(shapes)?;
    let rejected = |e: EquivalenceError| CliError::Rejected(e.to_string());
    let lowerer = lower_script(&actions).map_err(|e| rejected(e.into()))?;
    let reference_dag = lowerer.dag();
    let (optimized, _) = run_pipeline(&reference_dag, level);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = random_inputs(&reference_dag, &shapes, &mut rng).map_err(rejected)?;
    let reference = eval_dag(&reference_dag, &inputs).map_err(|e| rejected(e.into()))?;
    let candidate = eval_dag(&optimized, &inputs).map_err(|e| rejected(e.into()))?;
    let report = compare_results(lowerer.state(), &reference_dag, &reference, &candidate).map_err(rejected)?;

    let mut out = String::new();
    out.push_str(&format!("seed {seed}\n"));
    for (port, value) in reference_dag.results().iter().zip(&reference) {
        out.push_str(&format!(
            "{} shape {:?} norm {:.12e}\n",
            var(*port),
            value.shape(),
            value.frobenius_norm()
        ));
    }
    out.push_str(&format!(
        "compared {} results directly and {} component values\n",
        report.direct_results, report.components
    ));
    out.push_str(&format!(
        "max relative deviation between opt levels 0 and {}: {:.3e}\n",
        u8::from(level),
        report.max_rel_error
    ));
    Ok(out)
}

/// Replays a script and returns the session snapshot as JSON.
pub fn replay(script: &Path, level: OptLevel) -> Result<String, CliError> {
    let actions = read_script(script)?.actions;
    let settings = SessionSettings {
        opt_level: level,
        ..SessionSettings::default()
    };
    let session = Session::replay(&actions, settings).map_err(|e| CliError::Rejected(e.to_string()))?;
    let snapshot = session.snapshot().map_err(|e| CliError::Rejected(e.to_string()))?;
    Ok(snapshot.to_json())
}
