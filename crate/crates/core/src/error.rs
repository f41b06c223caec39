use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(String),
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("routing: {0}")]
    Routing(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("simulation: {0}")]
    Simulation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
