use duplexcap_core::{ConfigError, ConfigPatch, RetractError, UtteranceId};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::wire::{ErrorCode, ErrorPayload, Role};

/// A client action against the session.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlCommand {
    /// Retract the most recently finalized caption.
    RetractLast,
    RetractId(UtteranceId),
    ConfigPatch(ConfigPatch),
    /// Expire every caption now.
    Clear,
}

impl ControlCommand {
    pub fn action(&self) -> &'static str {
        match self {
            ControlCommand::RetractLast => "retract_last",
            ControlCommand::RetractId(_) => "retract_id",
            ControlCommand::ConfigPatch(_) => "config_patch",
            ControlCommand::Clear => "clear",
        }
    }

    /// Parses `{"action": ..., "args": ...}`.
    pub fn from_payload(payload: &Value) -> Result<Self, String> {
        let obj = payload.as_object().ok_or("control payload must be an object")?;
        let action = obj
            .get("action")
            .and_then(Value::as_str)
            .ok_or("control payload needs a string `action`")?;
        let args = obj.get("args").cloned().unwrap_or(Value::Null);
        Self::from_parts(action, args)
    }

    pub fn from_parts(action: &str, args: Value) -> Result<Self, String> {
        match action {
            "retract_last" => Ok(ControlCommand::RetractLast),
            "clear" => Ok(ControlCommand::Clear),
            "retract_id" => args
                .get("utterance_id")
                .and_then(Value::as_str)
                .filter(|id| !id.is_empty())
                .map(|id| ControlCommand::RetractId(id.into()))
                .ok_or_else(|| "retract_id needs args.utterance_id".to_owned()),
            "config_patch" => match args {
                Value::Object(map) => Ok(ControlCommand::ConfigPatch(ConfigPatch(map))),
                _ => Err("config_patch needs an object of config fields in args".to_owned()),
            },
            other => Err(format!("unknown action {other:?}")),
        }
    }

    pub fn to_payload(&self) -> Value {
        match self {
            ControlCommand::RetractId(id) => json!({"action": self.action(), "args": {"utterance_id": id}}),
            ControlCommand::ConfigPatch(p) => json!({"action": self.action(), "args": p}),
            _ => {
                let mut m = Map::new();
                m.insert("action".into(), self.action().into());
                Value::Object(m)
            }
        }
    }

    /// Face clients on the DHH side may only restyle captions; the hearing
    /// face and control clients may do anything.
    pub fn permitted_for(&self, role: Role) -> bool {
        match role {
            Role::Control | Role::FaceHearing => true,
            Role::FaceDhh => matches!(self, ControlCommand::ConfigPatch(_)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error(transparent)]
    Retract(#[from] RetractError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("role {0:?} may not send {1}")]
    Forbidden(Role, &'static str),
    #[error("bad control message: {0}")]
    BadMessage(String),
}

impl CommandError {
    pub fn code(&self) -> ErrorCode {
        match self {
            CommandError::Retract(RetractError::NothingToRetract) => ErrorCode::NothingToRetract,
            CommandError::Retract(RetractError::NotFound(_)) => ErrorCode::NotFound,
            CommandError::Retract(RetractError::InvalidState { .. }) => ErrorCode::InvalidState,
            CommandError::Config(ConfigError::UnknownField(_)) => ErrorCode::UnknownField,
            CommandError::Config(_) => ErrorCode::OutOfRange,
            CommandError::Forbidden(..) => ErrorCode::Forbidden,
            CommandError::BadMessage(_) => ErrorCode::BadMessage,
        }
    }

    pub fn to_payload(&self) -> ErrorPayload {
        let mut p = ErrorPayload::new(self.code(), self.to_string());
        if let CommandError::Config(ConfigError::OutOfRange(fields)) = self {
            p.fields = fields.clone();
        }
        p
    }
}
