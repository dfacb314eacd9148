//! Small dense complex helpers built on real GEMM.
//!
//! Complex products are split into real and imaginary parts so that the
//! heavy lifting goes through the optimized `f64` matrix multiply.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// `Z = X + iY` as two real matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitComplex {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl SplitComplex {
    pub fn from_complex(m: &DMatrix<Complex64>) -> Self {
        Self { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        self.re.zip_map(&self.im, Complex64::new)
    }

    /// `Z† M Z` for real symmetric `M`; the result is Hermitian.
    pub fn congruence(&self, m: &DMatrix<f64>) -> SplitComplex {
        let mx = m * &self.re;
        let my = m * &self.im;
        self.adjoint_times(&SplitComplex { re: mx, im: my })
    }

    /// `Z† W`.
    pub fn adjoint_times(&self, w: &SplitComplex) -> SplitComplex {
        let xt = self.re.transpose();
        let yt = self.im.transpose();
        let re = &xt * &w.re + &yt * &w.im;
        let im = &xt * &w.im - &yt * &w.re;
        SplitComplex { re, im }
    }

    /// `max |Z†Z - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let mut g = self.adjoint_times(self);
        for i in 0..g.re.nrows() {
            g.re[(i, i)] -= 1.0;
        }
        g.re.zip_map(&g.im, |a, b| a.hypot(b)).max()
    }
}

/// `Tr[ρ A]` for real symmetric `ρ` and Hermitian `A`; the imaginary part
/// vanishes identically so only `Re A` enters.
pub fn trace_real_hermitian(rho: &DMatrix<f64>, a: &SplitComplex) -> f64 {
    rho.component_mul(&a.re).sum()
}
