//! Distributed random number generator testing on an opportunistic pool.
//!
//! The crate bundles a small statistical battery ([`battery`]), the
//! generators it tests ([`generators`]), an HTCondor-like scheduler
//! ([`pool`]) and the pipeline that drives a battery through it: submit file
//! generation ([`submitfile`]), output monitoring ([`monitor`]), result
//! stitching ([`stitch`]) and the end-to-end [`orchestrator`].

pub mod battery;
pub mod cli;
pub mod generators;
pub mod monitor;
pub mod orchestrator;
pub mod pool;
pub mod runner;
pub mod stitch;
pub mod submitfile;
