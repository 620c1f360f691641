//! Library side of the command-line interface: the game file format,
//! discount-list specifications, table/CSV rendering, and the acceptance
//! battery behind the `selftest` subcommand.

pub mod gamefile;
pub mod lambdas;
pub mod selftest;
pub mod table;
