//! The named 14-subproblem instance suite.

use super::config::InstanceConfig;
use crate::bench::BasicFunction;
use crate::error::{Error, Result};

/// Subproblem dimensions in ascending order; they sum to 3000.
pub const SUITE_DIMS: [usize; 14] = [25, 25, 50, 50, 50, 100, 100, 100, 200, 200, 300, 300, 500, 1000];

/// Function ids of the heterogeneous instances, one per subproblem.
pub const HETEROGENEOUS_MAP: [u8; 14] = [6, 2, 3, 1, 6, 7, 6, 7, 3, 4, 2, 5, 3, 2];

#[derive(Debug, Clone, PartialEq)]
pub struct NamedConfig {
    pub name: String,
    pub config: InstanceConfig,
}

/// Divide every dimension by `scale` (at least 1 each); the largest
/// subproblem absorbs the rounding loss so the total is `3000 / scale`.
pub fn scaled_dims(scale: usize) -> Result<Vec<usize>> {
    if scale == 0 {
        return Err(Error::config("scale divisor must be positive"));
    }
    let mut dims: Vec<usize> = SUITE_DIMS.iter().map(|d| (d / scale).max(1)).collect();
    let target = SUITE_DIMS.iter().sum::<usize>() / scale;
    let sum: usize = dims.iter().sum();
    if sum < target {
        *dims.last_mut().expect("non-empty") += target - sum;
    }
    Ok(dims)
}

fn family(name: &str, func: BasicFunction, degrees: &[u8]) -> Vec<(String, Vec<BasicFunction>, u8)> {
    degrees
        .iter()
        .map(|&d| (format!("{name}{d}"), vec![func; SUITE_DIMS.len()], d))
        .collect()
}

/// The 18 suite instances: Ackley 1-5, AttractiveSector 1-5, Katsuura 1, 4, 5
/// and He 1-5. Each instance's seed mixes `seed` with its position in the suite.
pub fn appendix_suite(seed: u64, scale: usize) -> Result<Vec<NamedConfig>> {
    let dims = scaled_dims(scale)?;
    let he: Vec<BasicFunction> = HETEROGENEOUS_MAP
        .iter()
        .map(|&id| BasicFunction::try_from(id))
        .collect::<Result<_>>()?;
    let mut entries = family("Ackley", BasicFunction::Ackley, &[1, 2, 3, 4, 5]);
    entries.extend(family("AttractiveSector", BasicFunction::AttractiveSector, &[1, 2, 3, 4, 5]));
    entries.extend(family("Katsuura", BasicFunction::Katsuura, &[1, 4, 5]));
    entries.extend((1..=5).map(|d| (format!("He{d}"), he.clone(), d)));

    Ok(entries
        .into_iter()
        .enumerate()
        .map(|(i, (name, functions, degree))| NamedConfig {
            name,
            config: InstanceConfig::new(dims.clone(), functions, degree, mix_seed(seed, i as u64)),
        })
        .collect())
}

/// SplitMix64 finaliser over `seed + index`.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
