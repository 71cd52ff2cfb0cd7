//! 1-D complex FFT: iterative radix-2 for power-of-two lengths, Bluestein's
//! chirp-z convolution for everything else.
//!
//! Plans compute unnormalized transforms; callers apply `1/√n` for the
//! unitary convention.

use num_complex::Complex;

use super::Real;

#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    n: usize,
    kind: Kind<T>,
}

#[derive(Debug, Clone)]
enum Kind<T> {
    Trivial,
    Radix2(Radix2<T>),
    Bluestein(Box<Bluestein<T>>),
}

#[derive(Debug, Clone)]
struct Radix2<T> {
    n: usize,
    /// `e^{-2πi k/n}` for `k < n/2`.
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Bluestein<T> {
    /// `e^{-πi j²/n}` for `j < n`.
    chirp: Vec<Complex<T>>,
    /// Forward transform of the zero-padded conjugate chirp filter.
    filter: Vec<Complex<T>>,
    inner: Radix2<T>,
}

impl<T: Real> FftPlan<T> {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "FFT length must be at least 1");
        let kind = if n == 1 {
            Kind::Trivial
        } else if n.is_power_of_two() {
            Kind::Radix2(Radix2::new(n))
        } else {
            Kind::Bluestein(Box::new(Bluestein::new(n)))
        };
        Self { n, kind }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unnormalized forward transform, `X_k = Σ x_j e^{-2πi jk/n}`.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.n);
        match &self.kind {
            Kind::Trivial => {}
            Kind::Radix2(p) => p.run(buf),
            Kind::Bluestein(p) => p.run(buf),
        }
    }

    /// In-place unnormalized inverse transform (conjugate sign, no `1/n`).
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        for v in buf.iter_mut() {
            *v = v.conj();
        }
        self.forward(buf);
        for v in buf.iter_mut() {
            *v = v.conj();
        }
    }
}

fn unit<T: Real>(angle: f64) -> Complex<T> {
    Complex::new(T::of(angle.cos()), T::of(angle.sin()))
}

impl<T: Real> Radix2<T> {
    fn new(n: usize) -> Self {
        let bits = n.trailing_zeros();
        let twiddles = (0..n / 2).map(|k| unit(-2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect();
        let bitrev = (0..n).map(|i| i.reverse_bits() >> (usize::BITS - bits)).collect();
        Self { n, twiddles, bitrev }
    }

    fn run(&self, buf: &mut [Complex<T>]) {
        let n = self.n;
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let stride = n / (2 * half);
            for start in (0..n).step_by(2 * half) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            half *= 2;
        }
    }
}

impl<T: Real> Bluestein<T> {
    fn new(n: usize) -> Self {
        let m = (2 * n - 1).next_power_of_two();
        let inner = Radix2::new(m);
        // j² mod 2n keeps the chirp angle small and exact
        let angle = |j: usize| std::f64::consts::PI * ((j * j) % (2 * n)) as f64 / n as f64;
        let chirp: Vec<Complex<T>> = (0..n).map(|j| unit(-angle(j))).collect();
        let mut filter = vec![Complex::new(T::zero(), T::zero()); m];
        for j in 0..n {
            let w = unit::<T>(angle(j));
            filter[j] = w;
            if j > 0 {
                filter[m - j] = w;
            }
        }
        inner.run(&mut filter);
        Self { chirp, filter, inner }
    }

    fn run(&self, buf: &mut [Complex<T>]) {
        let n = buf.len();
        let m = self.filter.len();
        let mut work = vec![Complex::new(T::zero(), T::zero()); m];
        for j in 0..n {
            work[j] = buf[j] * self.chirp[j];
        }
        self.inner.run(&mut work);
        for (w, f) in work.iter_mut().zip(&self.filter) {
            *w = *w * *f;
        }
        // inverse of the inner transform via conjugation
        for w in work.iter_mut() {
            *w = w.conj();
        }
        self.inner.run(&mut work);
        let scale = T::of(1.0 / m as f64);
        for k in 0..n {
            buf[k] = work[k].conj() * self.chirp[k] * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex<f64>]) -> Vec<Complex<f64>> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| v * Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for n in [1usize, 2, 3, 5, 6, 8, 12, 17, 32, 40, 64] {
            let x: Vec<Complex<f64>> = (0..n).map(|j| Complex::new((j as f64 * 0.37).sin(), (j as f64 * 1.3).cos())).collect();
            let mut y = x.clone();
            FftPlan::new(n).forward(&mut y);
            let r = naive(&x);
            for k in 0..n {
                assert!((y[k] - r[k]).norm() < 1e-10 * n as f64, "n={n} k={k}");
            }
            let mut back = y.clone();
            FftPlan::new(n).inverse(&mut back);
            for k in 0..n {
                assert!((back[k] / n as f64 - x[k]).norm() < 1e-12 * n as f64);
            }
        }
    }

    #[test]
    fn single_precision_roundtrip() {
        let n = 48;
        let x: Vec<Complex<f32>> = (0..n).map(|j| Complex::new((j as f32).sin(), 0.5)).collect();
        let plan = FftPlan::<f32>::new(n);
        let mut y = x.clone();
        plan.forward(&mut y);
        plan.inverse(&mut y);
        for k in 0..n {
            assert!((y[k] / n as f32 - x[k]).norm() < 1e-5);
        }
    }
}
