//! Library side of the `fapnet` command: configuration, output layout and
//! the subcommands, callable without going through the binary.
//!
//! Output layout under the output directory (paths configurable):
//!
//! ```text
//! scenarios/<set>.jsonl
//! runs/<agent>-<strategy>/manifest.json
//!                         training_log.csv
//!                         episode-NNNNNN/        one checkpoint per sweep point
//! results/<label>/manifest.json
//!                 results.csv cdf.csv bins.csv   (evaluate)
//!                 episode-NNNNNN.csv sweep.csv   (sweep)
//! ```

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{evaluate, generate, sweep, train, Combo, Context, EvalTarget};
pub use config::{RunConfig, SCHEMA_VERSION};
pub use error::{CliError, CliResult};
