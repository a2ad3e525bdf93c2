//! One module per subcommand (with `train`/`eval`/`sweep` sharing the
//! corpus-loading path and `curate` covering the annotation stages).

pub mod analyze;
pub mod curate;
pub mod eval;
pub mod prepare;
pub mod sweep;
pub mod synth;
pub mod train;
