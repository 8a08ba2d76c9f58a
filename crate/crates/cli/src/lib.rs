//! Library half of the `guesswho` command.

pub mod bench;
pub mod play;
