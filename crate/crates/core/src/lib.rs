//! Flood mapping from volunteered geographic information.
//!
//! The crate turns precomputed per-image perception data (person boxes, body
//! keypoints, scene label maps and deep-feature vectors) plus geotagged posts
//! into census-tract flood extent and severity layers:
//!
//! 1. [`relevance`] scores every image for flood relevance with a boosted-tree
//!    classifier and bins the scores.
//! 2. [`dedup`] clusters image embeddings with DBSCAN and keeps the earliest
//!    post of every duplicate cluster.
//! 3. [`waterlevel`] derives per-person keypoint-height features, classifies
//!    the water level of every person and votes an image-level class.
//! 4. [`geomap`] aggregates posts and estimates onto tract polygons and
//!    compares them with reference layers.
//!
//! [`interchange`] holds the shared data model and file formats, [`gbdt`] the
//! tree-boosting engine used by stages 1 and 3, and [`synthetic`] generates
//! planted-truth fixtures for testing the whole chain.

pub mod dedup;
pub mod gbdt;
pub mod geomap;
pub mod interchange;
pub mod metrics;
pub mod relevance;
pub mod synthetic;
pub mod waterlevel;
