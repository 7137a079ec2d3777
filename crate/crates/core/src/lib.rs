//! Behavioral model of a low-swing capacitively coupled on-chip link with its
//! DFT hardware: fault enumeration, DC / scan / BIST test procedures and a
//! parallel fault campaign.

pub mod analog;
pub mod circuit;
pub mod config;
pub mod digital;
pub mod error;
pub mod fault;
pub mod prbs;
pub mod sim;
pub mod dft;
pub mod campaign;
pub mod cli;

pub use error::{Error, Result};
