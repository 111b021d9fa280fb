//! Coordinate transformations applied before a basic function is evaluated.
//!
//! The `*_in_place` variants are used on the hot evaluation path; the
//! allocating wrappers validate their input and are what callers outside the
//! crate normally use.

use crate::error::{Error, Result};

/// Default asymmetry strength.
pub const DEFAULT_ASY_BETA: f64 = 0.2;
/// Default conditioning factor of the diagonal scaling.
pub const DEFAULT_LAMBDA_ALPHA: f64 = 10.0;

fn check_finite(z: &[f64]) -> Result<()> {
    match z.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("non-finite input at index {i}"))),
        None => Ok(()),
    }
}

/// Fraction (i-1)/(D-1) with the single-coordinate case pinned to zero.
#[inline]
pub(crate) fn index_fraction(i: usize, dim: usize) -> f64 {
    if dim <= 1 {
        0.0
    } else {
        i as f64 / (dim - 1) as f64
    }
}

#[inline]
fn osz_scalar(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let zhat = z.abs().ln();
    let (c1, c2, sign) = if z > 0.0 {
        (10.0, 7.9, 1.0)
    } else {
        (5.5, 3.1, -1.0)
    };
    sign * (zhat + 0.049 * ((c1 * zhat).sin() + (c2 * zhat).sin())).exp()
}

pub fn osz_in_place(z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = osz_scalar(*v);
    }
}

pub fn asy_in_place(z: &mut [f64], beta: f64) {
    let dim = z.len();
    for (i, v) in z.iter_mut().enumerate() {
        if *v > 0.0 {
            *v = v.powf(1.0 + beta * index_fraction(i, dim) * v.sqrt());
        }
    }
}

pub fn lambda_in_place(z: &mut [f64], alpha: f64) {
    let dim = z.len();
    if dim <= 1 {
        return;
    }
    for (i, v) in z.iter_mut().enumerate() {
        *v *= alpha.powf(0.5 * index_fraction(i, dim));
    }
}

/// Oscillation transform: smooth local irregularities that preserve sign.
pub fn apply_osz(z: &[f64]) -> Result<Vec<f64>> {
    check_finite(z)?;
    let mut out = z.to_vec();
    osz_in_place(&mut out);
    Ok(out)
}

/// Asymmetry transform; non-positive coordinates pass through untouched.
pub fn apply_asy(z: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_finite(z)?;
    if !(beta > 0.0) {
        return Err(Error::contract(format!("asymmetry beta must be > 0, got {beta}")));
    }
    let mut out = z.to_vec();
    asy_in_place(&mut out, beta);
    Ok(out)
}

/// Diagonal scaling by alpha^(0.5 (i-1)/(D-1)).
pub fn apply_lambda(z: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_finite(z)?;
    if !(alpha >= 1.0) {
        return Err(Error::contract(format!("lambda alpha must be >= 1, got {alpha}")));
    }
    let mut out = z.to_vec();
    lambda_in_place(&mut out, alpha);
    Ok(out)
}
