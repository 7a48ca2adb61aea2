pub mod calculus;
pub mod cli;
pub mod eliminator;
pub mod gtc;
pub mod proofgraph;
pub mod proofio;
pub mod psc;
pub mod syntax;
