use std::f64::consts::{E, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::transforms::{
    asy_in_place, index_fraction, lambda_in_place, osz_in_place, DEFAULT_ASY_BETA,
    DEFAULT_LAMBDA_ALPHA,
};
use crate::error::{Error, Result};

/// Largest finite cost reported; anything above (or non-finite) saturates here.
pub const COST_CEILING: f64 = 1e300;

/// The seven basic functions, numbered as in the He mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
#[repr(u8)]
pub enum BasicFunction {
    Sphere = 1,
    Elliptic = 2,
    Rastrigin = 3,
    Ackley = 4,
    Schwefel12 = 5,
    Katsuura = 6,
    AttractiveSector = 7,
}

impl BasicFunction {
    pub const ALL: [BasicFunction; 7] = [
        BasicFunction::Sphere,
        BasicFunction::Elliptic,
        BasicFunction::Rastrigin,
        BasicFunction::Ackley,
        BasicFunction::Schwefel12,
        BasicFunction::Katsuura,
        BasicFunction::AttractiveSector,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            BasicFunction::Sphere => "Sphere",
            BasicFunction::Elliptic => "Elliptic",
            BasicFunction::Rastrigin => "Rastrigin",
            BasicFunction::Ackley => "Ackley",
            BasicFunction::Schwefel12 => "Schwefel",
            BasicFunction::Katsuura => "Katsuura",
            BasicFunction::AttractiveSector => "AttractiveSector",
        }
    }

    /// Internal transform composition `(osz, asy, lambda)` each function uses.
    pub fn internal_chain(self) -> (bool, bool, bool) {
        match self {
            BasicFunction::Elliptic => (true, false, false),
            BasicFunction::Schwefel12 => (true, true, false),
            _ => (true, true, true),
        }
    }
}

impl TryFrom<u8> for BasicFunction {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        BasicFunction::ALL
            .get((id as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::config(format!("basic function id must be in 1..=7, got {id}")))
    }
}

impl From<BasicFunction> for u8 {
    fn from(f: BasicFunction) -> u8 {
        f.id()
    }
}

impl fmt::Display for BasicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A cost value plus whether it hit [`COST_CEILING`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub value: f64,
    pub saturated: bool,
}

impl Cost {
    fn clamp(raw: f64) -> Self {
        if raw.is_finite() && raw <= COST_CEILING {
            Cost {
                value: raw,
                saturated: false,
            }
        } else {
            Cost {
                value: COST_CEILING,
                saturated: true,
            }
        }
    }
}

fn katsuura_raw(z: &[f64]) -> f64 {
    let dim = z.len() as f64;
    let exponent = 10.0 / dim.powf(1.2);
    let mut product = 1.0;
    for (i, &v) in z.iter().enumerate() {
        let mut inner = 0.0;
        let mut scale = 1.0;
        for _ in 1..=32 {
            scale *= 2.0;
            let t = scale * v;
            inner += (t - t.round()).abs() / scale;
        }
        product *= (1.0 + (i + 1) as f64 * inner).powf(exponent);
    }
    product
}

fn raw_value(func: BasicFunction, z: &[f64]) -> f64 {
    let dim = z.len();
    match func {
        BasicFunction::Sphere => z.iter().map(|v| v * v).sum(),
        BasicFunction::Elliptic => z
            .iter()
            .enumerate()
            .map(|(i, v)| 10f64.powf(6.0 * index_fraction(i, dim)) * v * v)
            .sum(),
        BasicFunction::Rastrigin => z
            .iter()
            .map(|v| v * v - 10.0 * (2.0 * PI * v).cos() + 10.0)
            .sum(),
        BasicFunction::Ackley => {
            let n = dim as f64;
            let sq = z.iter().map(|v| v * v).sum::<f64>() / n;
            let cs = z.iter().map(|v| (2.0 * PI * v).cos()).sum::<f64>() / n;
            20.0 * (1.0 - (-0.2 * sq.sqrt()).exp()) + (E - cs.exp())
        }
        BasicFunction::Schwefel12 => {
            let mut partial = 0.0;
            let mut total = 0.0;
            for v in z {
                partial += v;
                total += partial * partial;
            }
            total
        }
        // normalized so that the optimum value is 0 like the others
        BasicFunction::Katsuura => katsuura_raw(z) - 1.0,
        BasicFunction::AttractiveSector => z
            .iter()
            .map(|&v| {
                let sq = v * v;
                if v > 0.0 {
                    100.0 * sq + sq * sq
                } else {
                    sq + 100.0 * sq * sq
                }
            })
            .sum(),
    }
}

/// Evaluate a basic function on an already transformed vector.
pub fn eval_basic(func: BasicFunction, z_prime: &[f64]) -> Result<Cost> {
    if z_prime.is_empty() {
        return Err(Error::contract("basic function needs at least one coordinate"));
    }
    Ok(Cost::clamp(raw_value(func, z_prime)))
}

/// Orthogonal matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    dim: usize,
    data: Vec<f64>,
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        Rotation { dim, data }
    }

    /// Wraps a row-major matrix, rejecting anything that is not orthogonal to 1e-10.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::contract(format!(
                "rotation expects {} entries, got {}",
                dim * dim,
                data.len()
            )));
        }
        let rot = Rotation { dim, data };
        let err = rot.orthogonality_error();
        if !(err < 1e-10) {
            return Err(Error::contract(format!(
                "rotation is not orthogonal: max |R^T R - I| = {err:e}"
            )));
        }
        Ok(rot)
    }

    pub(crate) fn from_parts_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Rotation { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// max |RᵀR − I| over all entries.
    pub fn orthogonality_error(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|r| self.data[r * n + a] * self.data[r * n + b]).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }
}

/// Shift, local permutation, optional rotation, then the per-function chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformChain {
    pub shift: Vec<f64>,
    /// `permuted[j] = shifted[permutation[j]]`; a bijection on `0..dim`.
    pub permutation: Vec<usize>,
    pub rotation: Option<Rotation>,
    pub use_osz: bool,
    pub use_asy: bool,
    pub use_lambda: bool,
    pub asy_beta: f64,
    pub lambda_alpha: f64,
}

impl TransformChain {
    /// Zero shift, identity permutation, no rotation, with `func`'s internal chain.
    pub fn identity(func: BasicFunction, dim: usize) -> Self {
        let (use_osz, use_asy, use_lambda) = func.internal_chain();
        TransformChain {
            shift: vec![0.0; dim],
            permutation: (0..dim).collect(),
            rotation: None,
            use_osz,
            use_asy,
            use_lambda,
            asy_beta: DEFAULT_ASY_BETA,
            lambda_alpha: DEFAULT_LAMBDA_ALPHA,
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn without_internal_transforms(mut self) -> Self {
        self.use_osz = false;
        self.use_asy = false;
        self.use_lambda = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::contract("transform chain has zero dimension"));
        }
        if self.permutation.len() != dim {
            return Err(Error::contract("permutation length differs from shift length"));
        }
        let mut seen = vec![false; dim];
        for &p in &self.permutation {
            if p >= dim || seen[p] {
                return Err(Error::contract("permutation is not a bijection"));
            }
            seen[p] = true;
        }
        if let Some(rot) = &self.rotation {
            if rot.dim() != dim {
                return Err(Error::contract("rotation dimension differs from subproblem dimension"));
            }
        }
        if !(self.asy_beta > 0.0) || !(self.lambda_alpha >= 1.0) {
            return Err(Error::contract("asy_beta must be > 0 and lambda_alpha >= 1"));
        }
        Ok(())
    }

    /// Map raw subproblem coordinates to the vector the basic function sees.
    pub fn transform(&self, x_sub: &[f64]) -> Vec<f64> {
        let permuted: Vec<f64> = self
            .permutation
            .iter()
            .map(|&p| x_sub[p] - self.shift[p])
            .collect();
        let mut z = match &self.rotation {
            Some(rot) => {
                let mut out = vec![0.0; permuted.len()];
                rot.apply(&permuted, &mut out);
                out
            }
            None => permuted,
        };
        if self.use_osz {
            osz_in_place(&mut z);
        }
        if self.use_asy {
            asy_in_place(&mut z, self.asy_beta);
        }
        if self.use_lambda {
            lambda_in_place(&mut z, self.lambda_alpha);
        }
        z
    }
}

/// Full subproblem evaluation: transform chain followed by the basic function.
pub fn eval_subproblem(func: BasicFunction, chain: &TransformChain, x_sub: &[f64]) -> Result<Cost> {
    if x_sub.len() != chain.dim() {
        return Err(Error::contract(format!(
            "subproblem expects {} coordinates, got {}",
            chain.dim(),
            x_sub.len()
        )));
    }
    eval_basic(func, &chain.transform(x_sub))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for f in BasicFunction::ALL {
            assert_eq!(BasicFunction::try_from(f.id()).unwrap(), f);
        }
        assert!(BasicFunction::try_from(0).is_err());
        assert!(BasicFunction::try_from(8).is_err());
    }

    #[test]
    fn all_zero_at_origin() {
        for f in BasicFunction::ALL {
            for dim in [1, 2, 10] {
                let c = eval_basic(f, &vec![0.0; dim]).unwrap();
                assert!(c.value.abs() < 1e-12, "{f} dim {dim}: {}", c.value);
            }
        }
    }

    #[test]
    fn worked_examples() {
        let v = |f, z: &[f64]| eval_basic(f, z).unwrap().value;
        assert_eq!(v(BasicFunction::Schwefel12, &[1.0, 1.0]), 5.0);
        assert_eq!(v(BasicFunction::AttractiveSector, &[-2.0]), 1604.0);
        assert_eq!(v(BasicFunction::Elliptic, &[1.0, 1.0]), 1_000_001.0);
        assert!(v(BasicFunction::Ackley, &[0.0; 10]).abs() < 1e-14);
    }

    #[test]
    fn overflow_saturates() {
        let c = eval_basic(BasicFunction::AttractiveSector, &[-1e80, 2.0]).unwrap();
        assert!(c.saturated);
        assert_eq!(c.value, COST_CEILING);
        let c = eval_basic(BasicFunction::Sphere, &[f64::NAN]).unwrap();
        assert!(c.saturated);
    }

    #[test]
    fn subproblem_zero_at_shift() {
        let mut chain = TransformChain::identity(BasicFunction::Katsuura, 3);
        chain.shift = vec![1.5, -2.0, 40.0];
        chain.permutation = vec![2, 0, 1];
        for f in BasicFunction::ALL {
            let (o, a, l) = f.internal_chain();
            let ch = TransformChain {
                use_osz: o,
                use_asy: a,
                use_lambda: l,
                ..chain.clone()
            };
            assert_eq!(eval_subproblem(f, &ch, &ch.shift.clone()).unwrap().value, 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let chain = TransformChain::identity(BasicFunction::Sphere, 3);
        assert!(matches!(
            eval_subproblem(BasicFunction::Sphere, &chain, &[1.0, 2.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn rotation_preserves_plain_sphere() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rot = Rotation::from_row_major(2, vec![c, -c, c, c]).unwrap();
        let mut chain = TransformChain::identity(BasicFunction::Sphere, 2).without_internal_transforms();
        chain.shift = vec![1.0, -1.0];
        let x = [4.0, 3.0];
        let plain = eval_subproblem(BasicFunction::Sphere, &chain, &x).unwrap().value;
        chain.rotation = Some(rot);
        let rotated = eval_subproblem(BasicFunction::Sphere, &chain, &x).unwrap().value;
        assert!((plain - rotated).abs() < 1e-12);
        assert!((plain - 25.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_orthogonal() {
        assert!(Rotation::from_row_major(2, vec![1.0, 0.1, 0.0, 1.0]).is_err());
    }
}
