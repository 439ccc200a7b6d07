//! Multi-camera visual localization against a sparse 3D map.

pub mod geometry;
pub mod map;
pub mod prior;
pub mod matcher;
pub mod ransac;
pub mod fusion;
pub mod sim;
