//! Session service of the tensor-network compiler: the action script file
//! format, the session store, its HTTP API and the bodies of the `tnet`
//! subcommands.

pub mod cli;
pub mod http;
pub mod script;
pub mod session;
