pub mod audit;
pub mod axiom;
pub mod cli;
pub mod draft;
pub mod expr;
pub mod gateway;
pub mod generation;
pub mod pipeline;
pub mod plan;
pub mod record;
pub mod sanity;
pub mod seed;
pub mod units;
pub mod verify;
