//! Files, images and the command line around [`ssmcodec_core`].
//!
//! * [`container`]: the `.ssmc` bitstream file.
//! * [`archive`]: the `.ssmw` weight archive.
//! * [`image_io`]: PNG / binary PPM input and output.
//! * [`bench`] and [`analyze`]: the reporting subcommands.
//! * [`cli`]: argument definitions and subcommand dispatch.

pub mod analyze;
pub mod archive;
pub mod bench;
pub mod cli;
pub mod container;
pub mod error;
pub mod image_io;

pub use error::{CodecError, Result};
pub use ssmcodec_core as core;
