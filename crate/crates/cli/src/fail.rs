use circinv_core::Error;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, flags or input documents.
    Config(anyhow::Error),
    Io(anyhow::Error),
    Eval(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::Eval(_) => 4,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Io(e) | Failure::Eval(e) => e,
        }
    }

    /// Classifies a library error, prefixing `what` for context.
    pub fn from_core(err: Error, what: impl Into<String>) -> Self {
        let what = what.into();
        match err {
            Error::Io(e) => Failure::Io(anyhow::Error::new(e).context(what)),
            Error::Eval(e) => Failure::Eval(anyhow::Error::new(e).context(what)),
            other => Failure::Config(anyhow::Error::new(other).context(what)),
        }
    }
}

pub fn io(err: std::io::Error, what: impl Into<String>) -> Failure {
    Failure::Io(anyhow::Error::new(err).context(what.into()))
}
