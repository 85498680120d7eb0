pub mod basis_plot;
pub mod gen;
pub mod ppl;
pub mod score;
pub mod toy_eval;
pub mod toy_train;
