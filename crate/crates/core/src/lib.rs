//! Core of a software traffic generator and analyzer.
//!
//! Everything in this crate is `no_std` (with `alloc`) and free of I/O:
//! stream configuration and validation, the frame codec with its in-band
//! measurement header, pacing arithmetic, the receive-side analyzer, the
//! impairment model used as a virtual device under test, a virtual-time
//! simulator tying those together, and the IMIX / RFC 2544 profile drivers.
//! Threads, sockets and the HTTP control plane live in the `swtg` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analyzer;
pub mod clock;
pub mod codec;
pub mod impair;
pub mod model;
pub mod pacing;
pub mod profiles;
pub mod sim;

pub use model::{
    validate_config, DeviceProfile, GenerationConfig, MacAddr, Mode, PortId, StreamDescription,
    ValidatedConfig, ValidationError,
};
