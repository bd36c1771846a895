//! Websocket message schema: one JSON document per text frame.
//!
//! Client → server: a [`SimCommand`] tagged by `type`, plus an optional
//! correlation `id` echoed back in exactly one `ack` or `error`.
//! Server → client: [`ServerMessage`], also tagged by `type`.

use ccsim_core::sim::{SimCommand, SimEvent, Snapshot};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientCommand {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<Value>,
    #[serde(flatten)]
    pub command: SimCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Snapshot(Snapshot),
    Event(SimEvent),
    Ack { id: Option<Value> },
    Error { id: Option<Value>, reason: String },
}

impl ClientCommand {
    pub fn new(id: impl Into<Value>, command: SimCommand) -> Self {
        Self {
            id: Some(id.into()),
            command,
        }
    }

    /// Parses one frame. On failure returns the correlation id, if one could
    /// be recovered, and the reason.
    pub fn parse(text: &str) -> Result<Self, (Option<Value>, String)> {
        serde_json::from_str(text).map_err(|e| {
            let id = serde_json::from_str::<Value>(text)
                .ok()
                .and_then(|v| v.get("id").cloned());
            (id, format!("malformed command: {e}"))
        })
    }
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn as_snapshot(&self) -> Option<&Snapshot> {
        match self {
            ServerMessage::Snapshot(s) => Some(s),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccsim_core::chamber::EntityKind;
    use ccsim_core::config::SimConfig;
    use ccsim_core::sim::{Mode, Simulation};

    #[test]
    fn command_wire_format() {
        let c = ClientCommand::parse(r#"{"type":"set_velocity","id":"c1","entity":"ue","vx":0.6}"#).unwrap();
        assert_eq!(c.id, Some(Value::from("c1")));
        assert_eq!(
            c.command,
            SimCommand::SetVelocity {
                entity: EntityKind::Ue,
                vx: 0.6
            }
        );
        let c = ClientCommand::parse(r#"{"type":"set_action_override","id":7,"action":2}"#).unwrap();
        assert_eq!(c.id, Some(Value::from(7)));
        let c = ClientCommand::parse(r#"{"type":"set_mode","mode":"live"}"#).unwrap();
        assert_eq!(c.command, SimCommand::SetMode { mode: Mode::Live });
        let c = ClientCommand::parse(
            r#"{"type":"set_motion_model","id":"m","entity":"obstacle","motion":{"model":"bounce_x","speed":0.6,"min_x":0.4,"max_x":7.6}}"#,
        )
        .unwrap();
        assert!(matches!(c.command, SimCommand::SetMotionModel { .. }));
    }

    #[test]
    fn malformed_commands_keep_the_id() {
        let (id, reason) = ClientCommand::parse(r#"{"type":"warp","id":"x9"}"#).unwrap_err();
        assert_eq!(id, Some(Value::from("x9")));
        assert!(reason.starts_with("malformed command"));
        let (id, _) = ClientCommand::parse("not json").unwrap_err();
        assert_eq!(id, None);
    }

    #[test]
    fn snapshot_round_trip() {
        let sim = Simulation::new(SimConfig::default(), 1).unwrap();
        let msg = ServerMessage::Snapshot(sim.snapshot());
        let text = msg.to_json();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "snapshot");
        assert_eq!(v["tick"], 0);
        assert_eq!(v["los"], 1);
        assert_eq!(ServerMessage::from_json(&text).unwrap(), msg);
    }

    #[test]
    fn other_messages_round_trip() {
        for msg in [
            ServerMessage::Ack {
                id: Some(Value::from("a")),
            },
            ServerMessage::Error {
                id: None,
                reason: "bridge not configured".into(),
            },
            ServerMessage::Event(SimEvent::SnapshotsDropped { count: 3 }),
            ServerMessage::Event(SimEvent::ScenarioTransition { scenario: "B".into() }),
        ] {
            assert_eq!(ServerMessage::from_json(&msg.to_json()).unwrap(), msg);
        }
        let v: Value =
            serde_json::from_str(&ServerMessage::Event(SimEvent::SnapshotsDropped { count: 3 }).to_json()).unwrap();
        assert_eq!(v["type"], "event");
        assert_eq!(v["kind"], "snapshots_dropped");
    }
}
