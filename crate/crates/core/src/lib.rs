pub mod attention;
pub mod geometry;
pub mod session;
pub mod simworld;
pub mod tools;
pub mod view_memory;
pub mod runtime;
pub mod eval;
