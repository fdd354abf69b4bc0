// `Real` is f64 by default; the casts matter for the `f32` build.
#![allow(clippy::unnecessary_cast)]

pub mod expctl;
pub mod gridpix;
pub mod netcore;
pub mod rollout;
pub mod seeding;
pub mod tdcore;
pub mod tensorgrad;
