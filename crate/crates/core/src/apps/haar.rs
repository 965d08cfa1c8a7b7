//! Orthonormal Haar wavelet transform.
//!
//! Full-depth decomposition. Coefficients are ordered
//! `[approximation, coarsest detail, next detail level, ..., finest details]`.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{GaugeError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaarDirection {
    Analysis,
    Synthesis,
}

fn check_len(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(GaugeError::Contract(format!("Haar length must be a power of two, got {len}")));
    }
    Ok(())
}

pub fn haar_transform<T>(x: &[T], direction: HaarDirection) -> Result<Vec<T>>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    match direction {
        HaarDirection::Analysis => haar_analysis(x),
        HaarDirection::Synthesis => haar_synthesis(x),
    }
}

pub fn haar_analysis<T>(x: &[T]) -> Result<Vec<T>>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    check_len(x.len())?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = x.to_vec();
    let mut buf = x.to_vec();
    let mut len = x.len();
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let a = out[2 * i];
            let b = out[2 * i + 1];
            buf[i] = (a + b) * h;
            buf[half + i] = (a - b) * h;
        }
        out[..len].copy_from_slice(&buf[..len]);
        len = half;
    }
    Ok(out)
}

pub fn haar_synthesis<T>(c: &[T]) -> Result<Vec<T>>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    check_len(c.len())?;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = c.to_vec();
    let mut buf = c.to_vec();
    let mut len = 2;
    while len <= c.len() {
        let half = len / 2;
        for i in 0..half {
            let a = out[i];
            let d = out[half + i];
            buf[2 * i] = (a + d) * h;
            buf[2 * i + 1] = (a - d) * h;
        }
        out[..len].copy_from_slice(&buf[..len]);
        len *= 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_point_examples() {
        let s = std::f64::consts::SQRT_2;
        let a = haar_analysis(&[1.0, 1.0]).unwrap();
        assert!((a[0] - s).abs() < 1e-15 && a[1].abs() < 1e-15);
        let b = haar_analysis(&[1.0, -1.0]).unwrap();
        assert!(b[0].abs() < 1e-15 && (b[1] - s).abs() < 1e-15);
    }

    #[test]
    fn ordering_coarse_to_fine() {
        // constant signal lives entirely in the approximation coefficient
        let a = haar_analysis(&[1.0; 8]).unwrap();
        assert!((a[0] - 8f64.sqrt()).abs() < 1e-14);
        assert!(a[1..].iter().all(|v| v.abs() < 1e-14));
        // alternating signal lives in the finest details
        let alt: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = haar_analysis(&alt).unwrap();
        assert!(a[..4].iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn roundtrip_and_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..16).map(|_| rng.random::<f64>() - 0.5).collect();
        let c = haar_transform(&x, HaarDirection::Analysis).unwrap();
        let back = haar_transform(&c, HaarDirection::Synthesis).unwrap();
        let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        let nx: f64 = x.iter().map(|v| v * v).sum();
        let nc: f64 = c.iter().map(|v| v * v).sum();
        assert!((nx - nc).abs() < 1e-12);

        let z: Vec<C64> = (0..16).map(|_| C64::new(rng.random(), rng.random())).collect();
        let back = haar_synthesis(&haar_analysis(&z).unwrap()).unwrap();
        assert!(z.iter().zip(&back).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(haar_analysis(&[1.0, 2.0, 3.0]).is_err());
        assert!(haar_synthesis::<f64>(&[]).is_err());
    }
}
