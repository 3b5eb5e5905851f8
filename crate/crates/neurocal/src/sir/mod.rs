pub mod abm;
pub mod flow;
