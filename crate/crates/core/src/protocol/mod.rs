//! Wire format and the event-driven source/destination automata.
//!
//! The automata hold no clocks, sockets or timers; the simulator and the UDP
//! harness drive the same code with their own event pumps.

pub mod destination;
pub mod fragment;
pub mod source;
pub mod sync;
pub mod wire;

pub use destination::{
    Delivery, DestinationEvent, DestinationMachine, DestinationOptions, DestinationOutput,
    DestinationState, APP_TIMEOUT, RT_TIMEOUT,
};
pub use fragment::{fragment, Assembled, FragmentError, Reassembler, DEFAULT_MTU_PAYLOAD};
pub use source::{SourceEvent, SourceMachine, SourceOptions, SourceState};
pub use sync::{sync_offset, SyncError, SyncSample, SyncSession};
pub use wire::{DecodeError, FragAck, Packet, PacketKind, HEADER_LEN};
