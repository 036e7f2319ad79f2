//! The Gaussian kernel and its derived family.
//!
//! Differentiating the kernel estimator in `h` produces the kernels
//! `L(u) = -u K'(u)` and `H(u) = -u L'(u)`; the derivatives of the CV
//! criterion are U-statistics in the convolutions
//!
//! ```text
//! A = K * K,   B = K * L,   C = L * L,   D = K * H
//! ```
//!
//! and the combinations
//!
//! ```text
//! V = A - B - K + L
//! W = 3A + C - 5B + D - 2K + 3L - H
//! ```
//!
//! For the Gaussian kernel every one of these is a sum of
//! `polynomial(u) * φ_s(u)` terms with `s ∈ {1, √2}`, so evaluation,
//! moments and cross-functionals are all closed form.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DerivedKernelId {
    K,
    L,
    H,
    A,
    B,
    C,
    D,
    V,
    W,
}

impl DerivedKernelId {
    pub const ALL: [DerivedKernelId; 9] = [
        DerivedKernelId::K,
        DerivedKernelId::L,
        DerivedKernelId::H,
        DerivedKernelId::A,
        DerivedKernelId::B,
        DerivedKernelId::C,
        DerivedKernelId::D,
        DerivedKernelId::V,
        DerivedKernelId::W,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossFunctional {
    /// `∫ K²`
    IntK2,
    /// `∫ V²`
    IntV2,
    /// `∫ V W`
    IntVW,
}

/// A base kernel together with its variance and roughness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// `σ_K² = ∫ u² K(u) du`
    pub sigma2: f64,
    /// `R(K) = ∫ K²`
    pub roughness: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::gaussian()
    }
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(u: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// `N(0, s²)` density.
#[inline]
pub fn normal_pdf(u: f64, s: f64) -> f64 {
    std_normal_pdf(u / s) / s
}

/// `E[Z^m]` for `Z ~ N(0, s²)`.
fn normal_moment(m: u32, s: f64) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    // (m - 1)!! * s^m
    let double_factorial: f64 = (1..m).step_by(2).map(f64::from).product();
    double_factorial * s.powi(m as i32)
}

/// `Σ_t poly_t(u) · φ_{s_t}(u)`, polynomial coefficients in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GaussPoly {
    terms: Vec<(f64, Vec<f64>)>,
}

impl GaussPoly {
    fn new(terms: Vec<(f64, Vec<f64>)>) -> Self {
        GaussPoly { terms }
    }

    pub(crate) fn eval(&self, u: f64) -> f64 {
        self.terms
            .iter()
            .map(|(s, coeffs)| {
                let poly = coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c);
                poly * normal_pdf(u, *s)
            })
            .sum()
    }

    pub(crate) fn moment(&self, j: u32) -> f64 {
        self.terms
            .iter()
            .map(|(s, coeffs)| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c * normal_moment(k as u32 + j, *s))
                    .sum::<f64>()
            })
            .sum()
    }

    /// `∫ self(u) · other(u) du`, using
    /// `φ_a(u) φ_b(u) = φ_{√(a²+b²)}(0) · φ_t(u)` with `t = ab / √(a²+b²)`.
    pub(crate) fn inner(&self, other: &GaussPoly) -> f64 {
        let mut total = 0.0;
        for (a, p) in &self.terms {
            for (b, q) in &other.terms {
                let sum2 = a * a + b * b;
                let factor = normal_pdf(0.0, sum2.sqrt());
                let t = a * b / sum2.sqrt();
                let mut integral = 0.0;
                for (i, &pi) in p.iter().enumerate() {
                    for (k, &qk) in q.iter().enumerate() {
                        integral += pi * qk * normal_moment((i + k) as u32, t);
                    }
                }
                total += factor * integral;
            }
        }
        total
    }
}

fn gaussian_family(id: DerivedKernelId) -> &'static GaussPoly {
    static TABLE: OnceLock<Vec<GaussPoly>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let r = SQRT_2;
        DerivedKernelId::ALL
            .iter()
            .map(|id| match id {
                DerivedKernelId::K => GaussPoly::new(vec![(1.0, vec![1.0])]),
                DerivedKernelId::L => GaussPoly::new(vec![(1.0, vec![0.0, 0.0, 1.0])]),
                DerivedKernelId::H => GaussPoly::new(vec![(1.0, vec![0.0, 0.0, -2.0, 0.0, 1.0])]),
                DerivedKernelId::A => GaussPoly::new(vec![(r, vec![1.0])]),
                DerivedKernelId::B => GaussPoly::new(vec![(r, vec![0.5, 0.0, 0.25])]),
                DerivedKernelId::C => {
                    GaussPoly::new(vec![(r, vec![0.75, 0.0, -0.25, 0.0, 0.0625])])
                }
                DerivedKernelId::D => {
                    GaussPoly::new(vec![(r, vec![-0.25, 0.0, 0.25, 0.0, 0.0625])])
                }
                DerivedKernelId::V => GaussPoly::new(vec![
                    (r, vec![0.5, 0.0, -0.25]),
                    (1.0, vec![-1.0, 0.0, 1.0]),
                ]),
                DerivedKernelId::W => GaussPoly::new(vec![
                    (r, vec![1.0, 0.0, -1.25, 0.0, 0.125]),
                    (1.0, vec![-2.0, 0.0, 5.0, 0.0, -1.0]),
                ]),
            })
            .collect()
    });
    &table[id as usize]
}

impl KernelSpec {
    pub fn gaussian() -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            sigma2: 1.0,
            roughness: 1.0 / (2.0 * PI.sqrt()),
        }
    }

    fn family_table(&self, id: DerivedKernelId) -> &'static GaussPoly {
        match self.family {
            KernelFamily::Gaussian => gaussian_family(id),
        }
    }

    /// Base kernel value `K(u)`.
    #[inline]
    pub fn k(&self, u: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => std_normal_pdf(u),
        }
    }

    pub fn eval_derived(&self, id: DerivedKernelId, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(Error::domain(format!(
                "kernel argument must be finite, got {u}"
            )));
        }
        Ok(self.family_table(id).eval(u))
    }

    /// `∫ u^j g(u) du` for the identified member `g` of the family.
    pub fn moment(&self, id: DerivedKernelId, j: u32) -> Result<f64> {
        if j > 6 {
            return Err(Error::UnsupportedMoment(j));
        }
        Ok(self.family_table(id).moment(j))
    }

    pub fn cross_functional(&self, name: CrossFunctional) -> f64 {
        static GAUSSIAN: [OnceLock<f64>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        let slot = match self.family {
            KernelFamily::Gaussian => &GAUSSIAN[name as usize],
        };
        *slot.get_or_init(|| {
            let (f, g) = match name {
                CrossFunctional::IntK2 => (DerivedKernelId::K, DerivedKernelId::K),
                CrossFunctional::IntV2 => (DerivedKernelId::V, DerivedKernelId::V),
                CrossFunctional::IntVW => (DerivedKernelId::V, DerivedKernelId::W),
            };
            self.family_table(f).inner(self.family_table(g))
        })
    }

    /// `σ_K⁴`
    pub fn sigma4(&self) -> f64 {
        self.sigma2 * self.sigma2
    }
}
