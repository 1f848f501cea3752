//! Arabic scene and video text recognition.
//!
//! The crate covers the whole pipeline: contextual shaping of Arabic labels
//! ([`shaper`]), synthetic image rendering ([`render`]), hand-differentiated
//! convolutional and recurrent layers ([`nn`], [`recurrent`]), CTC
//! transcription ([`ctc`]), the assembled CNN-BLSTM network ([`model`]),
//! Adadelta training ([`trainer`]) and recognition-rate metrics ([`eval`]).

pub mod config;
pub mod ctc;
pub mod eval;
pub mod model;
pub mod nn;
pub mod recurrent;
pub mod render;
pub mod seed;
pub mod shaper;
pub mod trainer;
