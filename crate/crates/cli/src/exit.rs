use neuromap::analysis::AnalysisError;
use neuromap::compiler::CompileError;
use neuromap::config::ConfigError;
use neuromap::connectome::ConnectomeError;
use neuromap::hw::HwError;
use neuromap::record::RecordError;
use neuromap::reference::SimError;

pub const RUNTIME: u8 = 1;
pub const INVALID: u8 = 2;

/// Bad user input that has no library error type.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn connectome(e: &ConnectomeError) -> u8 {
    match e {
        ConnectomeError::Io(_) => RUNTIME,
        _ => INVALID,
    }
}

fn hw(e: &HwError) -> u8 {
    match e {
        HwError::Io(_) => RUNTIME,
        _ => INVALID,
    }
}

pub fn code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<Invalid>() {
            return INVALID;
        }
        if let Some(e) = cause.downcast_ref::<CompileError>() {
            return match e {
                CompileError::Io(_) => RUNTIME,
                CompileError::Hw(h) => hw(h),
                CompileError::Connectome(c) => connectome(c),
                _ => INVALID,
            };
        }
        if let Some(e) = cause.downcast_ref::<ConnectomeError>() {
            return connectome(e);
        }
        if let Some(e) = cause.downcast_ref::<HwError>() {
            return hw(e);
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            return match e {
                SimError::Config(_) => INVALID,
                SimError::Connectome(c) => connectome(c),
            };
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return match e {
                ConfigError::Io(_) => RUNTIME,
                _ => INVALID,
            };
        }
        if let Some(e) = cause.downcast_ref::<RecordError>() {
            return match e {
                RecordError::Io(_) => RUNTIME,
                _ => INVALID,
            };
        }
        if let Some(e) = cause.downcast_ref::<AnalysisError>() {
            return match e {
                AnalysisError::Mismatch(_) | AnalysisError::Parse { .. } => INVALID,
                _ => RUNTIME,
            };
        }
    }
    RUNTIME
}
