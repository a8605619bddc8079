//! CLI error with its exit code and JSON rendering.

use std::process::ExitCode;

use nvmag::ErrorClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            class: Class::Usage,
            kind: "Usage".into(),
            message: message.into(),
        }
    }

    pub fn data(kind: &str, message: impl Into<String>) -> Self {
        Self {
            class: Class::Data,
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self.class {
            Class::Usage => 2,
            Class::Data => 3,
            Class::Numeric => 4,
        })
    }

    pub fn to_json(&self) -> String {
        let class = match self.class {
            Class::Usage => "usage",
            Class::Data => "data",
            Class::Numeric => "numeric",
        };
        serde_json::json!({ "error": self.kind, "class": class, "message": self.message }).to_string()
    }
}

impl From<nvmag::Error> for CliError {
    fn from(e: nvmag::Error) -> Self {
        Self {
            class: match e.class() {
                ErrorClass::Data => Class::Data,
                ErrorClass::Numeric => Class::Numeric,
            },
            kind: e.kind().into(),
            message: e.to_string(),
        }
    }
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                nvmag::Error::from(e).into()
            }
        }
    )*};
}

via_core!(
    nvmag::nv::NvError,
    nvmag::stray::StrayError,
    nvmag::synth::SynthError,
    nvmag::fit::FitError,
    nvmag::maps::MapsError,
    nvmag::io::IoError
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        nvmag::io::IoError::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data("ParseError", e.to_string())
    }
}
