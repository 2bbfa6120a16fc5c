//! Online decoding: stream windowing, the decoder, the UDP wire protocol and
//! the haptic device simulator.

pub mod decoder;
pub mod haptic;
pub mod protocol;
pub mod run;
pub mod transport;
pub mod window;

pub use decoder::{arbitrate, decode_scores, decode_window, Decoder, DecoderConfig, ScoreBuffer, WindowOutcome};
pub use haptic::{haptic_step, HapticState, WORKSPACE_HALF_WIDTH_CM};
pub use protocol::{decode, decode_datagram, encode_datagram, Command, Datagram, Direction, ProtocolError};
pub use run::{run_stream, StreamConfig, StreamReport, TaskPeriod};
pub use transport::{CommandSender, Delivery, SenderConfig, Simulator, DEFAULT_DECODER_PORT, DEFAULT_SIMULATOR_PORT};
pub use window::{session_samples, window_stream, BlockTag, StreamError, StreamSample, Window, Windower};
