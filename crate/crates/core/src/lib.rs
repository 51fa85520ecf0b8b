//! Domain-randomized synthetic brain MRI generation, a hierarchical 3D
//! segmentation cascade with automated quality control, and the volumetry and
//! population statistics built on top of it.

pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod schema;
pub mod stats;
pub mod synthgen;
pub mod tensor;
pub mod trainer;
pub mod volume;
