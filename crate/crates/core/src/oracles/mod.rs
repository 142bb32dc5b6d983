//! Oracle implementations and lower-bound certificates.

mod adversarial;
mod coverage;
mod honest;

pub use adversarial::{adversarial_respond, AdversarialOracle, PopulationOracle};
pub use coverage::{
    coverage_certificate, distinguishable_set, replay, CoverageCertificate, DistinguishableSet, GmmFamily,
    HypothesisFamily, RegFamily,
};
pub use honest::{honest_respond, HonestOracle};
