use crate::error::{Error, Result};
use crate::Real;

/// Neumaier's compensated summation.
#[derive(Clone, Copy, Debug)]
pub struct NeumaierSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> Default for NeumaierSum<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> NeumaierSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

impl<T: Real> FromIterator<T> for NeumaierSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `log Σ wᵢ e^{aᵢ}`, shifted by `max aᵢ` so that large exponents never
/// overflow. Weights must be positive.
pub fn log_sum_exp<T: Real>(exponents: &[T], weights: &[T]) -> Result<T> {
    if exponents.is_empty() {
        return Err(Error::input("log_sum_exp of an empty list"));
    }
    if exponents.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: exponents.len(),
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(**w > T::zero())) {
        return Err(Error::input(format!("nonpositive weight {w}")));
    }
    let top = max_exponent(exponents)?;
    if top == T::neg_infinity() {
        return Ok(top);
    }
    let acc: NeumaierSum<T> = exponents
        .iter()
        .zip(weights)
        .map(|(&a, &w)| w * (a - top).exp())
        .collect();
    Ok(top + acc.value().ln())
}

/// `log Σ e^{aᵢ}`
pub fn log_sum_exp_unweighted<T: Real>(exponents: &[T]) -> Result<T> {
    if exponents.is_empty() {
        return Err(Error::input("log_sum_exp of an empty list"));
    }
    let top = max_exponent(exponents)?;
    if top == T::neg_infinity() {
        return Ok(top);
    }
    let acc: NeumaierSum<T> = exponents.iter().map(|&a| (a - top).exp()).collect();
    Ok(top + acc.value().ln())
}

fn max_exponent<T: Real>(exponents: &[T]) -> Result<T> {
    let mut top = T::neg_infinity();
    for &a in exponents {
        if a.is_nan() || a == T::infinity() {
            return Err(Error::numerical(format!("non-finite exponent {a}")));
        }
        top = top.max(a);
    }
    Ok(top)
}
