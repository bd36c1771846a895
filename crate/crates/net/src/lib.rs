//! Network edges of the chamber simulator: the line-oriented RF emulator
//! bridge, real-time pacing, and the websocket control server.

pub mod bridge;
pub mod pacing;
pub mod protocol;
pub mod server;

pub use bridge::{BridgeConfig, BridgeHandle, MockRfServer, RfSession};
pub use pacing::Pacer;
pub use protocol::{ClientCommand, ServerMessage};
pub use server::{ServerConfig, ServerHandle};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("bridge config: {0}")]
    Config(String),
    #[error("non-finite path loss {0} rejected")]
    NonFinite(f64),
    #[error("rf endpoint {addr}: {reason}")]
    Endpoint { addr: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sim(#[from] ccsim_core::Error),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;
