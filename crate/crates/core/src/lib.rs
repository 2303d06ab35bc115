//! Core algorithms for monocular multi-layer shelf layout estimation.
//!
//! The crate covers the full desk-scale pipeline: procedural warehouse rack
//! synthesis ([`scenegen`]), a deterministic software rasterizer ([`render`]),
//! ground-truth layout labelling ([`gtlayout`]), a small reverse-mode autodiff
//! stack with the layout network built on top ([`tensornet`], [`racklaynet`]),
//! evaluation metrics ([`metrics`]), and post-hoc 3D reasoning over predicted
//! layouts ([`reason3d`]).
//!
//! Everything here is `no_std`-compatible (with `alloc`); file formats, the
//! CLI, and dataset orchestration live in the companion binary crate. All
//! floating-point transcendentals go through `libm` so results are
//! bit-identical across platforms, and all randomness flows from explicit
//! [`rng::SplitMix64`] states, so every artifact is reproducible from a seed.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod gtlayout;
pub mod metrics;
pub mod reason3d;
pub mod render;
pub mod rng;
pub mod scenegen;
pub mod tensornet;
pub mod viz;

pub mod geom;
pub mod racklaynet;
