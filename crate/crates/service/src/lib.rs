//! Online synthesis: a replayed (or live) thermal stream goes through the EMA
//! generator with a user-selected latent code and is served to clients.

mod error;
mod header;
pub mod http;
mod session;
mod source;

pub use error::{Result, ServiceError};
pub use header::{FrameHeader, HEADER_LEN};
pub use session::{
    encode, CodeInfo, EncodedFrame, Encoding, Frame, SelectAck, Session, SessionConfig, SessionHandle, Stats,
};
pub use source::{online_thermal_params, FrameSource, LiveFeed, LiveSource, ReplaySource};
