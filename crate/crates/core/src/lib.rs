//! Link-level simulation of LDPC-coded uplink over a multi-RIS-assisted
//! multiuser MIMO channel, with iterative detection, decoding and channel
//! estimation at the access point.

pub mod channel;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod idd;
pub mod ldpc;
pub mod linalg;
pub mod modem;
pub mod ris;
pub mod sim;

pub use error::{Error, Result};
