//! Complex-vector kernels.
//!
//! Only the handful of products the beamforming and DC code need. Inner
//! products conjugate the *first* argument: `cdot(a, b) = a^H b`.

use std::ops::{Index, IndexMut};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense complex column vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CVec<T>(pub Vec<Complex<T>>);

impl<T: Real> CVec<T> {
    pub fn zeros(len: usize) -> Self {
        CVec(vec![Complex::new(T::zero(), T::zero()); len])
    }

    pub fn from_pairs(pairs: &[(T, T)]) -> Self {
        CVec(pairs.iter().map(|&(re, im)| Complex::new(re, im)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex<T>> {
        self.0.iter()
    }

    pub fn norm_sqr(&self) -> T {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == T::zero() && z.im == T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, s: T) -> Self {
        CVec(self.0.iter().map(|z| z * s).collect())
    }

    /// `self += coeff * x`.
    pub fn add_scaled(&mut self, coeff: Complex<T>, x: &CVec<T>) {
        debug_assert_eq!(self.len(), x.len());
        for (a, b) in self.0.iter_mut().zip(&x.0) {
            *a = *a + coeff * b;
        }
    }

    /// Unit vector in the direction of `self`, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = cnorm(self);
        if n > T::zero() && n.is_finite() {
            Some(self.scaled(T::one() / n))
        } else {
            None
        }
    }
}

impl<T> Index<usize> for CVec<T> {
    type Output = Complex<T>;
    fn index(&self, i: usize) -> &Complex<T> {
        &self.0[i]
    }
}

impl<T> IndexMut<usize> for CVec<T> {
    fn index_mut(&mut self, i: usize) -> &mut Complex<T> {
        &mut self.0[i]
    }
}

fn check_len<T>(a: &CVec<T>, b: &CVec<T>) -> Result<()> {
    if a.0.len() != b.0.len() {
        return Err(Error::LengthMismatch { left: a.0.len(), right: b.0.len() });
    }
    Ok(())
}

/// `a^H b`.
pub fn cdot<T: Real>(a: &CVec<T>, b: &CVec<T>) -> Result<Complex<T>> {
    check_len(a, b)?;
    Ok(cdot_unchecked(a, b))
}

#[inline]
pub(crate) fn cdot_unchecked<T: Real>(a: &CVec<T>, b: &CVec<T>) -> Complex<T> {
    let mut acc = Complex::new(T::zero(), T::zero());
    for (x, y) in a.0.iter().zip(&b.0) {
        acc = acc + x.conj() * y;
    }
    acc
}

pub fn cnorm<T: Real>(a: &CVec<T>) -> T {
    a.norm_sqr().sqrt()
}

/// `coeff * h * (h^H w_prev)`.
pub fn axpy_outer<T: Real>(w_prev: &CVec<T>, h: &CVec<T>, coeff: T) -> Result<CVec<T>> {
    check_len(w_prev, h)?;
    let proj = cdot_unchecked(h, w_prev) * coeff;
    Ok(CVec(h.0.iter().map(|hi| hi * proj).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn cdot_examples() {
        let a = CVec(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(cdot(&a, &a).unwrap(), c(2.0, 0.0));

        let e1 = CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let e2 = CVec(vec![c(0.0, 1.0), c(0.0, 0.0)]);
        let e3 = CVec(vec![c(0.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(cdot(&e1, &e3).unwrap(), c(0.0, 0.0));
        // conj(i) * 1 = -i
        assert_eq!(cdot(&e2, &e1).unwrap(), c(0.0, -1.0));
    }

    #[test]
    fn cdot_length_mismatch() {
        let a = CVec::<f64>::zeros(2);
        let b = CVec::<f64>::zeros(3);
        assert!(matches!(cdot(&a, &b), Err(Error::LengthMismatch { left: 2, right: 3 })));
        assert!(axpy_outer(&a, &b, 1.0).is_err());
    }

    #[test]
    fn cnorm_examples() {
        assert_eq!(cnorm(&CVec(vec![c(3.0, 0.0), c(0.0, 4.0)])), 5.0);
        assert_eq!(cnorm(&CVec::<f64>::zeros(4)), 0.0);
        let s = 0.5f64.sqrt();
        let u = CVec(vec![c(s, 0.0), c(0.0, s)]);
        assert!((cnorm(&u) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn axpy_outer_examples() {
        let w = CVec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let h = CVec(vec![c(0.0, 0.0), c(0.0, 1.0)]);
        assert!(axpy_outer(&w, &h, 3.0).unwrap().is_zero());

        let s = 0.5f64.sqrt();
        let u = CVec(vec![c(s, 0.0), c(0.0, s)]);
        let out = axpy_outer(&u, &u, 2.0).unwrap();
        for (o, x) in out.iter().zip(u.iter()) {
            assert!((o - x * 2.0).norm() < 1e-15);
        }

        // h = (1, i), w = (2, 1): h^H w = 2 - i; result = 0.5 * (2 - i) * (1, i) = (1 - 0.5i, 0.5 + i)
        let h = CVec(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let w = CVec(vec![c(2.0, 0.0), c(1.0, 0.0)]);
        let out = axpy_outer(&w, &h, 0.5).unwrap();
        assert!((out[0] - c(1.0, -0.5)).norm() < 1e-15);
        assert!((out[1] - c(0.5, 1.0)).norm() < 1e-15);
    }

    fn cvec_strategy(len: usize) -> impl Strategy<Value = CVec<f64>> {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), len)
            .prop_map(|v| CVec(v.into_iter().map(|(r, i)| c(r, i)).collect()))
    }

    proptest! {
        #[test]
        fn hermitian_symmetry_and_cauchy_schwarz(
            (a, b) in (1usize..8).prop_flat_map(|n| (cvec_strategy(n), cvec_strategy(n)))
        ) {
            let ab = cdot(&a, &b).unwrap();
            let ba = cdot(&b, &a).unwrap();
            prop_assert!((ab - ba.conj()).norm() <= 1e-12 * (1.0 + ab.norm()));
            prop_assert!(ab.norm() <= cnorm(&a) * cnorm(&b) * (1.0 + 1e-12) + 1e-12);
        }
    }
}
