//! Monte Carlo simulation of two-hop cooperative MIMO amplify-and-forward
//! relay networks with delay-tolerant distributed space-time codes and
//! adaptive code matrices chosen by stochastic gradient.

pub mod acmoro;
pub mod channel;
pub mod detection;
pub mod error;
pub mod harness;
pub mod modem;
pub mod numerics;
pub mod relaying;
pub mod stcodes;

pub use error::{Error, Result};
