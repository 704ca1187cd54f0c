pub mod batch;
pub mod fuzz;
pub mod gen;
pub mod interp;
pub mod pipeline;
