pub mod checks;
pub mod experiment;
pub mod value;
