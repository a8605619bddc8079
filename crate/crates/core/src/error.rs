//! Crate-wide error and its coarse classification for process exit codes.

use thiserror::Error;

use crate::fit::FitError;
use crate::io::IoError;
use crate::maps::MapsError;
use crate::nv::NvError;
use crate::stray::StrayError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nv(#[from] NvError),
    #[error(transparent)]
    Stray(#[from] StrayError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Maps(#[from] MapsError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Whether a failure stems from bad input or from the numerics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        let numeric = match self {
            Error::Nv(e) => nv_numeric(e),
            Error::Stray(e) => matches!(e, StrayError::SingularPoint),
            Error::Synth(SynthError::Nv(e)) => nv_numeric(e),
            Error::Synth(_) => false,
            Error::Fit(e) => fit_numeric(e),
            Error::Maps(e) => match e {
                MapsError::Nv(e) => nv_numeric(e),
                MapsError::Fit(e) => fit_numeric(e),
                MapsError::TooManyUnconverged { .. } => true,
                _ => false,
            },
            Error::Io(_) => false,
        };
        if numeric {
            ErrorClass::Numeric
        } else {
            ErrorClass::Data
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Nv(e) => match e {
                NvError::OutOfBand { .. } => "OutOfBand",
                NvError::NegativeSplit(_) => "NegativeSplit",
                NvError::AmbiguousSigns { .. } => "AmbiguousSigns",
                NvError::InvalidConstants(_) => "InvalidConstants",
            },
            Error::Stray(e) => match e {
                StrayError::BadState(_) => "BadState",
                StrayError::EmptyScene => "EmptyScene",
                StrayError::SingularPoint => "SingularPoint",
                StrayError::InsidePrism => "InsidePrism",
                StrayError::InvalidScene(_) => "InvalidScene",
            },
            Error::Synth(e) => match e {
                SynthError::BadSweep => "BadSweep",
                SynthError::BadTiming => "BadTiming",
                SynthError::BadDims(_) => "BadDims",
                SynthError::AlreadyMirrored => "AlreadyMirrored",
                SynthError::BadDurations => "BadDurations",
                SynthError::Nv(_) => "OutOfBand",
            },
            Error::Fit(e) => fit_kind(e),
            Error::Maps(e) => match e {
                MapsError::Nv(_) => "AmbiguousSigns",
                MapsError::Fit(e) => fit_kind(e),
                MapsError::BadRegion(_) => "BadRegion",
                MapsError::Mismatch(_) => "Mismatch",
                MapsError::NonPositive(_) => "NonPositive",
                MapsError::TooManyUnconverged { .. } => "NotConverged",
            },
            Error::Io(e) => match e {
                IoError::Io(_) => "IoError",
                IoError::CorruptMagic => "CorruptMagic",
                IoError::HeaderMismatch(_) => "HeaderMismatch",
                IoError::Parse(_) => "ParseError",
                IoError::AllInvalid => "AllInvalid",
            },
        }
    }
}

fn nv_numeric(e: &NvError) -> bool {
    matches!(e, NvError::AmbiguousSigns { .. })
}

fn fit_numeric(e: &FitError) -> bool {
    matches!(e, FitError::NotConverged | FitError::NoPeaks)
}

fn fit_kind(e: &FitError) -> &'static str {
    match e {
        FitError::TooSmall { .. } => "TooSmall",
        FitError::NoPeaks => "NoPeaks",
        FitError::BadGuess => "BadGuess",
        FitError::NotConverged => "NotConverged",
        FitError::InsufficientData(_) => "InsufficientData",
        FitError::NonFiniteData => "NonFiniteData",
    }
}
