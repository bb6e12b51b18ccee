//! Clamped cubic B-spline basis on equally spaced knots.

/// Cubic B-spline basis with `interior` equally spaced interior knots on
/// `[lo, hi]`. Arguments outside the interval are clamped to it.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    lo: f64,
    hi: f64,
    interior: usize,
    knots: Vec<f64>,
}

pub const DEGREE: usize = 3;

impl BSplineBasis {
    pub fn new(lo: f64, hi: f64, interior: usize) -> Self {
        // widen a degenerate range so knots stay distinct
        let (lo, hi) = if hi - lo > 1e-12 {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        let step = (hi - lo) / (interior + 1) as f64;
        let mut knots = vec![lo; DEGREE + 1];
        knots.extend((1..=interior).map(|k| lo + k as f64 * step));
        knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
        BSplineBasis {
            lo,
            hi,
            interior,
            knots,
        }
    }

    pub fn len(&self) -> usize {
        self.interior + DEGREE + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn interior_knots(&self) -> usize {
        self.interior
    }

    pub fn clamp(&self, z: f64) -> f64 {
        z.clamp(self.lo, self.hi)
    }

    fn span(&self, z: f64) -> usize {
        let step = (self.hi - self.lo) / (self.interior + 1) as f64;
        let k = ((z - self.lo) / step).floor().max(0.0) as usize;
        DEGREE + k.min(self.interior)
    }

    fn basis_funs(&self, span: usize, z: f64, p: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = [0.0; DEGREE + 1];
        let mut right = [0.0; DEGREE + 1];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = z - t[span + 1 - j];
            right[j] = t[span + j] - z;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Index of the first nonzero basis function at `z` and the four
    /// nonzero values.
    pub fn eval(&self, z: f64) -> (usize, [f64; 4]) {
        let z = self.clamp(z);
        let span = self.span(z);
        let mut v = [0.0; 4];
        self.basis_funs(span, z, DEGREE, &mut v);
        (span - DEGREE, v)
    }

    /// Derivatives of the four nonzero basis functions at `z`. Zero outside
    /// `[lo, hi]`, where the spline is held constant.
    pub fn eval_derivative(&self, z: f64) -> (usize, [f64; 4]) {
        let span = self.span(self.clamp(z));
        if z < self.lo || z > self.hi {
            return (span - DEGREE, [0.0; 4]);
        }
        let t = &self.knots;
        let mut lower = [0.0; 4];
        self.basis_funs(span, z, DEGREE - 1, &mut lower);
        // lower[r] = N_{span-2+r, 2}
        let p = DEGREE as f64;
        let first = span - DEGREE;
        let mut d = [0.0; 4];
        for (r, slot) in d.iter_mut().enumerate() {
            let i = first + r;
            let n_i = if r >= 1 { lower[r - 1] } else { 0.0 };
            let n_next = if r < DEGREE { lower[r] } else { 0.0 };
            let a = t[i + DEGREE] - t[i];
            let b = t[i + DEGREE + 1] - t[i + 1];
            let ta = if a > 0.0 { n_i / a } else { 0.0 };
            let tb = if b > 0.0 { n_next / b } else { 0.0 };
            *slot = p * (ta - tb);
        }
        (first, d)
    }

    /// Spline value `Σ_k B_k(z) coef_k`.
    pub fn value(&self, coef: &[f64], z: f64) -> f64 {
        let (first, v) = self.eval(z);
        v.iter().zip(&coef[first..first + 4]).map(|(a, b)| a * b).sum()
    }

    pub fn slope(&self, coef: &[f64], z: f64) -> f64 {
        let (first, v) = self.eval_derivative(z);
        v.iter().zip(&coef[first..first + 4]).map(|(a, b)| a * b).sum()
    }
}
