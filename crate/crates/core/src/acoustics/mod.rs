//! Impulse responses, contamination and correlation analytics.

mod correlation;
mod dsp;
mod ir;
mod room;
mod signal;
pub mod wav;

pub use correlation::{
    autocorr_effective_length, avg_xcorr_envelope, side_energy_ratio, xcorr, xcorr_direct,
    CorrelationSeries,
};
pub use dsp::{convolve, convolve_direct, fft_convolve, mix_noise_at_snr, power};
pub use ir::{
    exp_decay_ir, exp_decay_ir_with_level, schroeder_t60, ImpulseResponse, DECAY_60DB, EXP_TAIL_STD,
};
pub use room::{image_method_ir, sabine_reflection_coefficient, Absorption, RoomSpec};
pub use signal::Signal;
