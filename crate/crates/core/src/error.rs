use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("frame too short: path delay {delay_s:e} s does not fit in a {frame_s:e} s frame")]
    FrameTooShort { delay_s: f64, frame_s: f64 },

    #[error("zone {zone} has {count} samples but the neighbour count is {neighbors}")]
    ZoneTooSmall { zone: usize, count: usize, neighbors: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
