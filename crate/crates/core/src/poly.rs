use serde::{Deserialize, Serialize};

/// Real polynomial stored as ascending-power coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    /// Trailing zero coefficients are kept; the degree is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        Polynomial { coeffs }
    }

    pub fn one() -> Self {
        Polynomial { coeffs: vec![1.0] }
    }

    /// Monic polynomial `∏ (x - r)`.
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut c = vec![1.0];
        for &r in roots {
            c.push(0.0);
            for k in (1..c.len()).rev() {
                c[k] = c[k - 1] - r * c[k];
            }
            c[0] *= -r;
        }
        Polynomial { coeffs: c }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// `(p(x), p'(x))` by Horner's scheme.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let mut p = 0.0;
        let mut dp = 0.0;
        for &c in self.coeffs.iter().rev() {
            dp = dp * x + p;
            p = p * x + c;
        }
        (p, dp)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut c = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Polynomial { coeffs: c }
    }

    /// Upper bound on the modulus of every root of a monic polynomial (Fujiwara).
    pub fn root_bound(&self) -> f64 {
        let n = self.degree();
        let lead = self.leading();
        (1..=n)
            .map(|i| {
                let c = (self.coeffs[n - i] / lead).abs();
                let c = if i == n { c / 2.0 } else { c };
                c.powf(1.0 / i as f64)
            })
            .fold(0.0, f64::max)
            * 2.0
    }
}
