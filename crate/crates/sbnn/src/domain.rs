//! The affine binary weight domain.
//!
//! Every layer's two weight values are an affine image of a binary symbol.
//! There are two equivalent parameterizations:
//!
//! - zero/one: w = (w' + alpha') * beta' with w' in {0, 1}
//! - antipodal: w = w'' * beta'' + alpha'' with w'' in {-1, +1}
//!
//! Training works in the antipodal form (the backbone trainer manipulates
//! +/-1 weights); export converts to the zero/one form used by the popcount
//! inference engine and the codecs.

use crate::error::{Result, SbnnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainFlavor {
    ZeroOne,
    Antipodal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineBinaryDomain {
    alpha: f32,
    beta: f32,
    flavor: DomainFlavor,
}

impl AffineBinaryDomain {
    pub fn new(alpha: f32, beta: f32, flavor: DomainFlavor) -> Result<Self> {
        if beta == 0.0 || !beta.is_finite() || !alpha.is_finite() {
            return Err(SbnnError::Domain(format!(
                "beta must be finite and nonzero, alpha finite (got alpha={alpha}, beta={beta})"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            flavor,
        })
    }

    pub fn zero_one(alpha: f32, beta: f32) -> Result<Self> {
        Self::new(alpha, beta, DomainFlavor::ZeroOne)
    }

    pub fn antipodal(alpha: f32, beta: f32) -> Result<Self> {
        Self::new(alpha, beta, DomainFlavor::Antipodal)
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    pub fn beta(&self) -> f32 {
        self.beta
    }

    pub fn flavor(&self) -> DomainFlavor {
        self.flavor
    }

    /// Real weight value of a stored bit: (w' + alpha') * beta'.
    pub fn map_bit(&self, bit: bool) -> f32 {
        debug_assert_eq!(self.flavor, DomainFlavor::ZeroOne);
        (bit as u8 as f32 + self.alpha) * self.beta
    }

    /// Same map evaluated in f64, for reference paths.
    pub fn map_bit_f64(&self, bit: bool) -> f64 {
        debug_assert_eq!(self.flavor, DomainFlavor::ZeroOne);
        (bit as u8 as f64 + self.alpha as f64) * self.beta as f64
    }

    /// Real weight value of an antipodal symbol: w'' * beta'' + alpha''.
    pub fn map_antipodal(&self, sign: f32) -> f32 {
        debug_assert_eq!(self.flavor, DomainFlavor::Antipodal);
        sign * self.beta + self.alpha
    }

    /// Same map evaluated in f64, for reference paths.
    pub fn map_antipodal_f64(&self, sign: f64) -> f64 {
        debug_assert_eq!(self.flavor, DomainFlavor::Antipodal);
        sign * self.beta as f64 + self.alpha as f64
    }

    /// Converts the learned antipodal domain to the zero/one domain the
    /// inference engine stores: the unique affine solution making both
    /// parameterizations agree on {-1, +1} is beta' = 2 beta'',
    /// alpha' = (alpha'' - beta'') / (2 beta'').
    pub fn to_zero_one(&self) -> Result<AffineBinaryDomain> {
        if self.flavor != DomainFlavor::Antipodal {
            return Err(SbnnError::Domain(
                "to_zero_one requires an antipodal domain".into(),
            ));
        }
        let a = self.alpha as f64;
        let b = self.beta as f64;
        let beta_p = 2.0 * b;
        let alpha_p = (a - b) / beta_p;
        AffineBinaryDomain::zero_one(alpha_p as f32, beta_p as f32)
    }
}

/// Free-function form of the bit map, matching the by-value operation shape.
pub fn map_zero_one_to_real(w_prime: bool, domain: &AffineBinaryDomain) -> f32 {
    domain.map_bit(w_prime)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ulp_f32_of(x: f64) -> f64 {
        let x = x.abs() as f32;
        let up = f32::from_bits(x.to_bits() + 1);
        (up - x) as f64
    }

    #[test]
    fn identity_like_case() {
        let d = AffineBinaryDomain::zero_one(0.0, 1.0).unwrap();
        assert_eq!(d.map_bit(false), 0.0);
        assert_eq!(d.map_bit(true), 1.0);
    }

    #[test]
    fn direct_map_values() {
        let d = AffineBinaryDomain::zero_one(-0.25, 0.4).unwrap();
        assert!((d.map_bit(true) - 0.3).abs() < 1e-7);
        assert!((d.map_bit(false) - (-0.1)).abs() < 1e-7);
    }

    #[test]
    fn zero_beta_rejected() {
        assert!(AffineBinaryDomain::zero_one(0.1, 0.0).is_err());
        assert!(AffineBinaryDomain::antipodal(0.0, 0.0).is_err());
    }

    #[test]
    fn conversion_example() {
        let d = AffineBinaryDomain::antipodal(0.1, 0.2).unwrap();
        let z = d.to_zero_one().unwrap();
        assert!((z.beta() - 0.4).abs() < 1e-7);
        assert!((z.alpha() - (-0.25)).abs() < 1e-7);
        assert!((z.map_bit(true) - 0.3).abs() < 1e-7); // t(+1) = 0.3
        assert!((z.map_bit(false) - (-0.1)).abs() < 1e-7); // t(-1) = -0.1
    }

    #[test]
    fn canonical_bnn_domain() {
        let d = AffineBinaryDomain::antipodal(0.0, 1.0).unwrap();
        let z = d.to_zero_one().unwrap();
        assert_eq!(z.beta(), 2.0);
        assert_eq!(z.alpha(), -0.5);
        assert_eq!(z.map_bit(true), 1.0);
        assert_eq!(z.map_bit(false), -1.0);
    }

    #[test]
    fn conversion_agrees_within_one_ulp() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a: f32 = rng.random_range(-3.0..3.0);
            let mut b: f32 = rng.random_range(-3.0..3.0);
            if b.abs() < 1e-4 {
                b = 1e-4;
            }
            let anti = AffineBinaryDomain::antipodal(a, b).unwrap();
            let zo = anti.to_zero_one().unwrap();
            for sign in [-1.0f64, 1.0] {
                let t = anti.map_antipodal_f64(sign);
                let r = zo.map_bit_f64(sign > 0.0);
                // the only rounding is alpha' to f32; its half-ulp scaled by
                // beta' bounds the disagreement, so measure the ulp at the
                // magnitude of the alpha'*beta' term
                let scale = t.abs().max(r.abs()).max((zo.alpha() * zo.beta()).abs() as f64);
                let tol = ulp_f32_of(scale);
                assert!(
                    (t - r).abs() <= tol,
                    "t={t} r={r} tol={tol} (alpha={a}, beta={b}, sign={sign})"
                );
            }
        }
    }
}
