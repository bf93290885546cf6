//! Desk-scale pipeline for moving-bar DVS emulation, foveal-pit inspired
//! Difference-of-Gaussian filtering of the spike responses, frame-based
//! dataset construction, and a spiking convolutional classifier trained with
//! a rate-based differentiable approximation.

pub mod aer;
pub mod dog;
pub mod events;
pub mod framing;
pub mod pipeline;
pub mod scnn;
pub mod stimulus;

pub use events::{DvsEvent, EventStream};
pub use framing::{Dataset, FrameTensor, Split};
