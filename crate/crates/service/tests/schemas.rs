use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use tnet_core::fuzz::{random_case, FuzzConfig};
use tnet_core::optimizer::OptLevel;
use tnet_core::scripts;
use tnet_service::cli::{compile, CompileOptions};
use tnet_service::http::{ApplyRequest, CodeResponse, DagResponse, ErrorBody, SessionView};
use tnet_service::script::ActionScript;
use tnet_service::session::{Session, SessionSettings};

const SCHEMA: &str = include_str!("../schemas/v1.schema.json");

fn validator(name: &str) -> jsonschema::Validator {
    let mut schema: Value = serde_json::from_str(SCHEMA).unwrap();
    assert!(schema["$defs"].get(name).is_some(), "no definition {name}");
    schema["$ref"] = json!(format!("#/$defs/{name}"));
    jsonschema::validator_for(&schema).unwrap()
}

fn check(name: &str, value: &impl Serialize) {
    let instance = serde_json::to_value(value).unwrap();
    let v = validator(name);
    let errors: Vec<String> = v
        .iter_errors(&instance)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance:#}");
}

fn sessions() -> Vec<Session> {
    let mut out = vec![Session::replay(&scripts::listing_script(), SessionSettings::default()).unwrap()];
    let cfg = FuzzConfig {
        actions: 40,
        ..FuzzConfig::default()
    };
    for seed in 0..25 {
        let case = random_case(&mut ChaCha8Rng::seed_from_u64(seed), &cfg);
        let settings = SessionSettings {
            opt_level: OptLevel::try_from((seed % 3) as u8).unwrap(),
            ..SessionSettings::default()
        };
        out.push(Session::replay(&case.actions, settings).unwrap());
    }
    out
}

#[test]
fn session_documents_conform() {
    for s in sessions() {
        check("action_script", &s.script());
        for a in s.log() {
            check("user_action", a);
        }
        check("network_state", s.state());
        let snapshot = s.snapshot().unwrap();
        check("snapshot", &snapshot);
        check("op_dag", &snapshot.dag);
        check(
            "session_view",
            &SessionView {
                id: "x".into(),
                revision: s.revision(),
                opt_level: s.settings().opt_level,
                target: s.settings().target.clone(),
                action_count: s.log().len(),
                state: s.state().clone(),
                code_text: snapshot.code_text.clone(),
            },
        );
        for level in [OptLevel::O0, OptLevel::O1, OptLevel::O2] {
            let view = s.dag(level);
            check("schedule", &view.schedule);
            check(
                "dag_response",
                &DagResponse {
                    revision: s.revision(),
                    view,
                },
            );
            check(
                "code_response",
                &CodeResponse {
                    revision: s.revision(),
                    opt_level: level,
                    code_text: s.code(level).unwrap(),
                },
            );
        }
        if let Some(action) = s.log().last() {
            check(
                "apply_request",
                &ApplyRequest {
                    revision: 0,
                    action: action.clone(),
                },
            );
        }
    }
}

#[test]
fn small_documents_conform() {
    check("session_settings", &SessionSettings::default());
    check(
        "error",
        &ErrorBody {
            error: "stale_revision".into(),
            message: "m".into(),
            current_revision: Some(3),
        },
    );
    check(
        "error",
        &ErrorBody {
            error: "unknown_session".into(),
            message: "m".into(),
            current_revision: None,
        },
    );
}

#[test]
fn ir_dump_conforms() {
    let dir = tempfile::TempDir::new().unwrap();
    let script = dir.path().join("s.json");
    std::fs::write(&script, ActionScript::new(scripts::listing_script()).to_json()).unwrap();
    let ir = dir.path().join("ir.json");
    let options = CompileOptions {
        opt_level: OptLevel::O2,
        emit_ir: Some(ir.clone()),
        ..CompileOptions::default()
    };
    compile(&script, &options).unwrap();
    let dump: Value = serde_json::from_str(&std::fs::read_to_string(ir).unwrap()).unwrap();
    check("ir_dump", &dump);
}

#[test]
fn schema_rejects_what_the_parser_rejects() {
    let v = validator("user_action");
    for bad in [
        json!({"type": "teleport"}),
        json!({"type": "attach_leg"}),
        json!({"type": "split", "tensor": 0, "row_dims": [0], "col_dims": [], "kind": "lu"}),
        json!({"type": "contract", "tensors": [-1]}),
    ] {
        assert!(!v.is_valid(&bad), "{bad}");
        assert!(serde_json::from_value::<tnet_core::UserAction>(bad).is_err());
    }
    let v = validator("action_script");
    assert!(!v.is_valid(&json!({"version": 2, "actions": []})));
    assert!(v.is_valid(&json!({"version": 1, "actions": [{"type": "create_tensor"}]})));
}
