//! Symbolic and concrete execution of strands.

mod concrete;
mod exec;
mod expr;
mod oracle;
mod print;
mod simplify;

pub use expr::{mask, to_signed, BinOp, Env, EvalError, Expr, MapEnv, Pred, UnOp, MAX_WIDTH};
pub use print::{parse_expr, print, print_annotated, print_short, ParseError, SymAssign, Target};
pub use simplify::{expr_equal, simplify};
pub use exec::{execute_instructions, execute_strand, RepresentativeSet, Slot, SymError};
pub use concrete::{concrete_eval, run_concrete, ConcreteError, ConcreteResult, InputSource, MapInputs, RecordingInputs};
pub use oracle::{differential_check, DiffReport};
