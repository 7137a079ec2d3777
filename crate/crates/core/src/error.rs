use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("netlist line {line}: {msg}")]
    NetlistSyntax { line: usize, msg: String },

    #[error("netlist line {line}: duplicate device id `{id}`")]
    DuplicateDevice { line: usize, id: String },

    #[error("netlist line {line}: unknown block `{block}`")]
    UnknownBlock { line: usize, block: String },

    #[error("fault `{0}` is not in the fault universe")]
    FaultNotInUniverse(String),

    #[error("device `{device}` has behavior role `{role}` which the model does not implement")]
    UnknownRole { device: String, role: String },

    #[error("config: {0}")]
    Config(String),

    #[error("ring counter has {0} bits set; switch matrix expects one-hot or all-zero")]
    OneHotViolation(usize),

    #[error("scan chain `{0}` is in functional mode; shift requires shift or capture mode")]
    ScanMode(String),

    #[error("capture width {got} does not match chain length {expected}")]
    CaptureWidth { expected: usize, got: usize },

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
