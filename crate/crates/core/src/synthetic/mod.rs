//! Seeded synthetic data: Gaussian blobs, stick-figure flood scenes with
//! planted water levels and a complete study-area fixture.

mod blobs;
pub mod scenes;
pub mod world;

pub use blobs::{gaussian_blobs, nearest_center, Blobs};
pub use scenes::{mil_bags, ImageSpec, ImageTruth, InstanceTruth, SceneConfig, SceneCorpus, SceneGenerator};
pub use world::{generate_world, World, WorldConfig, WorldTruth};
