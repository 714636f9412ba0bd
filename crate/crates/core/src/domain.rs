//! Shared domain types: covariates on the unit cube, paired control/treatment
//! samples, Hölder-ball descriptors and seeded random sub-streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HteError, Result};

/// A point of `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Covariate(Vec<f64>);

impl Covariate {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid(
                "coords",
                "a covariate needs at least one coordinate",
            ));
        }
        for (index, &value) in coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(HteError::CoordinateOutOfRange { index, value });
            }
        }
        Ok(Self(coords))
    }

    pub fn scalar(x: f64) -> Result<Self> {
        Self::new(vec![x])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Covariate {
    type Error = HteError;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl From<Covariate> for Vec<f64> {
    fn from(c: Covariate) -> Self {
        c.0
    }
}

impl AsRef<[f64]> for Covariate {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One observed unit: covariate and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Covariate,
    pub y: f64,
}

impl Observation {
    pub fn new(x: Covariate, y: f64) -> Self {
        Self { x, y }
    }
}

/// Control and treatment samples sharing one ambient dimension. Group sizes
/// may differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    dimension: usize,
    control: Vec<Observation>,
    treatment: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(
        dimension: usize,
        control: Vec<Observation>,
        treatment: Vec<Observation>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        for obs in control.iter().chain(&treatment) {
            if obs.x.dim() != dimension {
                return Err(HteError::DimensionMismatch {
                    expected: dimension,
                    got: obs.x.dim(),
                });
            }
        }
        Ok(Self {
            dimension,
            control,
            treatment,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn control(&self) -> &[Observation] {
        &self.control
    }

    pub fn treatment(&self) -> &[Observation] {
        &self.treatment
    }

    pub fn control_covariates(&self) -> Vec<&[f64]> {
        self.control.iter().map(|o| o.x.coords()).collect()
    }

    pub fn treatment_covariates(&self) -> Vec<&[f64]> {
        self.treatment.iter().map(|o| o.x.coords()).collect()
    }
}

/// A Hölder ball `H_d(beta)` of radius `radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderSpec {
    pub dimension: usize,
    pub beta: f64,
    pub radius: f64,
}

impl HolderSpec {
    pub fn new(dimension: usize, beta: f64, radius: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("beta", format!("must be positive, got {beta}")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("radius", format!("must be positive, got {radius}")));
        }
        Ok(Self {
            dimension,
            beta,
            radius,
        })
    }
}

/// Independent random sub-streams drawn from one [`RngSeed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ControlCovariates = 1,
    TreatmentCovariates = 2,
    ControlNoise = 3,
    TreatmentNoise = 4,
    /// Randomised test functions (e.g. random phases).
    Functions = 5,
    Bootstrap = 6,
}

/// Root of all randomness in an experiment.
///
/// Replication `r` uses the seed `derive(r)`; inside a replication each
/// [`Stream`] is a distinct ChaCha8 stream keyed by that seed, so covariates,
/// noise and function draws never share state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn derive(self, replication: u64) -> RngSeed {
        RngSeed(splitmix64(self.0 ^ splitmix64(replication.wrapping_add(1))))
    }

    pub fn rng(self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(stream as u64);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn covariate_rejects_out_of_range() {
        assert!(matches!(
            Covariate::new(vec![0.2, 1.5]),
            Err(HteError::CoordinateOutOfRange { index: 1, .. })
        ));
        assert!(Covariate::new(vec![]).is_err());
        assert!(Covariate::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn covariate_deserialization_validates() {
        let ok: Covariate = serde_json::from_str("[0.1, 0.9]").unwrap();
        assert_eq!(ok.coords(), &[0.1, 0.9]);
        assert!(serde_json::from_str::<Covariate>("[-0.1]").is_err());
    }

    #[test]
    fn observation_set_checks_dimension() {
        let a = Observation::new(Covariate::new(vec![0.1, 0.2]).unwrap(), 1.0);
        let b = Observation::new(Covariate::scalar(0.3).unwrap(), 1.0);
        assert!(ObservationSet::new(2, vec![a.clone()], vec![a.clone()]).is_ok());
        assert!(matches!(
            ObservationSet::new(2, vec![a], vec![b]),
            Err(HteError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn unequal_group_sizes_are_allowed() {
        let o = |x| Observation::new(Covariate::scalar(x).unwrap(), 0.0);
        let set = ObservationSet::new(1, vec![o(0.1), o(0.2), o(0.3)], vec![o(0.5)]).unwrap();
        assert_eq!(set.control().len(), 3);
        assert_eq!(set.treatment().len(), 1);
    }

    #[test]
    fn holder_spec_validation() {
        assert!(HolderSpec::new(1, 0.0, 1.0).is_err());
        assert!(HolderSpec::new(1, 0.5, -1.0).is_err());
        assert!(HolderSpec::new(0, 0.5, 1.0).is_err());
        assert!(HolderSpec::new(2, 0.5, 1.0).is_ok());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let seed = RngSeed(42);
        let mut r1 = seed.rng(Stream::ControlNoise);
        let mut r2 = seed.rng(Stream::ControlNoise);
        let a: Vec<u64> = (0..4).map(|_| r1.random()).collect();
        let b: Vec<u64> = (0..4).map(|_| r2.random()).collect();
        assert_eq!(a, b);
        let x: u64 = seed.rng(Stream::ControlNoise).random();
        let y: u64 = seed.rng(Stream::TreatmentNoise).random();
        assert_ne!(x, y);
        assert_ne!(seed.derive(0), seed.derive(1));
        assert_eq!(seed.derive(7), RngSeed(42).derive(7));
    }
}
