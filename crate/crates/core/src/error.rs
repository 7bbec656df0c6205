use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("time {t} is outside the control window [0, {horizon}]")]
    Domain { t: f64, horizon: f64 },

    #[error("Lambert W argument {0} is below the branch point -1/e")]
    LambertDomain(f64),

    #[error("malformed control schedule: {0}")]
    Schedule(String),

    #[error("boundary arc overrun at t = {t}: susceptible fraction would be {x}")]
    ArcOverrun { t: f64, x: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("derivative of the border objective is undefined at the crossover time {0}")]
    Kink(f64),

    #[error("infeasible problem: {0}")]
    Infeasible(String),
}
