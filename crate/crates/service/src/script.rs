//! The action script file format: a versioned list of user actions.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tnet_core::UserAction;

pub const SCRIPT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionScript {
    pub version: u64,
    pub actions: Vec<UserAction>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptFormatError {
    #[error("script is not valid JSON: {0}")]
    Json(String),
    #[error("script must be an object with `version` and `actions`")]
    NotAnObject,
    #[error("unknown script field `{0}`")]
    UnknownField(String),
    #[error("unsupported script version {0}, expected 1")]
    Version(String),
    #[error("`actions` must be an array")]
    ActionsNotArray,
    #[error("action {index}: {message}")]
    Action { index: usize, message: String },
}

impl ScriptFormatError {
    /// Index of the offending action, if the error is about one action.
    pub fn action_index(&self) -> Option<usize> {
        match self {
            ScriptFormatError::Action { index, .. } => Some(*index),
            _ => None,
        }
    }
}

impl ActionScript {
    pub fn new(actions: Vec<UserAction>) -> Self {
        ActionScript {
            version: SCRIPT_VERSION,
            actions,
        }
    }

    /// Parses a script, checking actions one at a time so that an error
    /// names the first bad action.
    pub fn parse(text: &str) -> Result<Self, ScriptFormatError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ScriptFormatError::Json(e.to_string()))?;
        let Value::Object(mut fields) = value else {
            return Err(ScriptFormatError::NotAnObject);
        };
        if let Some(key) = fields.keys().find(|k| *k != "version" && *k != "actions") {
            return Err(ScriptFormatError::UnknownField(key.clone()));
        }
        match fields.get("version") {
            Some(v) if v.as_u64() == Some(SCRIPT_VERSION) => {}
            Some(v) => return Err(ScriptFormatError::Version(v.to_string())),
            None => return Err(ScriptFormatError::NotAnObject),
        }
        let Some(Value::Array(items)) = fields.remove("actions") else {
            return Err(ScriptFormatError::ActionsNotArray);
        };
        let actions = items
            .into_iter()
            .enumerate()
            .map(|(index, item)| {
                serde_json::from_value(item).map_err(|e| ScriptFormatError::Action {
                    index,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ActionScript::new(actions))
    }

    /// Canonical text form: pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scripts always serialize");
        text.push('\n');
        text
    }
}
