//! Discrete Fourier transforms on uniform periodic grids and the spectral
//! derivative built on them. Power-of-two sizes use an iterative radix-2
//! transform; other sizes fall back to the direct O(M²) sum.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{cos, sin, PI};

#[derive(Debug, Clone)]
pub struct Dft {
    size: usize,
    // e^{-2πi j/M} for j in 0..M
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

impl Dft {
    pub fn new(size: usize) -> Self {
        assert!(size > 0, "transform size must be positive");
        let (cos_table, sin_table) = (0..size)
            .map(|j| {
                let a = -2.0 * PI * j as f64 / size as f64;
                (cos(a), sin(a))
            })
            .unzip();
        Self {
            size,
            cos_table,
            sin_table,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// In-place transform. `inverse` flips the sign of the exponent and does
    /// not normalise.
    pub fn transform(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        debug_assert_eq!(re.len(), self.size);
        debug_assert_eq!(im.len(), self.size);
        if self.size.is_power_of_two() {
            self.radix2(re, im, inverse);
        } else {
            self.direct(re, im, inverse);
        }
    }

    fn twiddle(&self, index: usize, inverse: bool) -> (f64, f64) {
        let s = self.sin_table[index];
        (self.cos_table[index], if inverse { -s } else { s })
    }

    fn radix2(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.size;
        let bits = n.trailing_zeros();
        if bits == 0 {
            return;
        }
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            let half = len / 2;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let (wr, wi) = self.twiddle(k * stride, inverse);
                    let (a, b) = (start + k, start + k + half);
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len <<= 1;
        }
    }

    fn direct(&self, re: &mut [f64], im: &mut [f64], inverse: bool) {
        let n = self.size;
        let mut out_re = vec![0.0; n];
        let mut out_im = vec![0.0; n];
        for k in 0..n {
            let (mut sr, mut si) = (0.0, 0.0);
            for j in 0..n {
                let (wr, wi) = self.twiddle((j * k) % n, inverse);
                sr += re[j] * wr - im[j] * wi;
                si += re[j] * wi + im[j] * wr;
            }
            out_re[k] = sr;
            out_im[k] = si;
        }
        re.copy_from_slice(&out_re);
        im.copy_from_slice(&out_im);
    }
}

/// First derivative of band-limited periodic samples, exact for trigonometric
/// polynomials below the grid's Nyquist order.
#[derive(Debug, Clone)]
pub struct SpectralDerivative {
    dft: Dft,
    wavenumbers: Vec<f64>,
}

impl SpectralDerivative {
    pub fn new(size: usize, period: f64) -> Self {
        let base = 2.0 * PI / period;
        let wavenumbers = (0..size)
            .map(|j| {
                if 2 * j < size {
                    base * j as f64
                } else if 2 * j == size {
                    // Nyquist mode has no real odd derivative.
                    0.0
                } else {
                    base * (j as f64 - size as f64)
                }
            })
            .collect();
        Self {
            dft: Dft::new(size),
            wavenumbers,
        }
    }

    pub fn size(&self) -> usize {
        self.dft.size()
    }

    /// Differentiates `values` into `out`, using `scratch` (len ≥ 2M) as workspace.
    pub fn apply(&self, values: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let m = self.size();
        let (re, rest) = scratch.split_at_mut(m);
        let im = &mut rest[..m];
        re.copy_from_slice(values);
        im.iter_mut().for_each(|v| *v = 0.0);
        self.dft.transform(re, im, false);
        for j in 0..m {
            let k = self.wavenumbers[j];
            let (r, i) = (re[j], im[j]);
            re[j] = -k * i;
            im[j] = k * r;
        }
        self.dft.transform(re, im, true);
        let scale = 1.0 / m as f64;
        for (o, r) in out.iter_mut().zip(re.iter()) {
            *o = r * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(size: usize) {
        let dft = Dft::new(size);
        let mut re: Vec<f64> = (0..size).map(|j| sin(0.3 * j as f64) + 0.1 * j as f64).collect();
        let orig = re.clone();
        let mut im = vec![0.0; size];
        dft.transform(&mut re, &mut im, false);
        dft.transform(&mut re, &mut im, true);
        for (a, b) in re.iter().zip(orig.iter()) {
            assert!((a / size as f64 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_recovers_input() {
        roundtrip(64);
        roundtrip(45);
        roundtrip(1);
    }

    #[test]
    fn derivative_of_trig_polynomial_is_exact() {
        for &size in &[32usize, 30] {
            let period = 3.0;
            let w = 2.0 * PI / period;
            let x: Vec<f64> = (0..size).map(|j| period * j as f64 / size as f64).collect();
            let f: Vec<f64> = x.iter().map(|&x| cos(3.0 * w * x) + 0.5 * sin(7.0 * w * x)).collect();
            let expected: Vec<f64> = x
                .iter()
                .map(|&x| -3.0 * w * sin(3.0 * w * x) + 3.5 * w * cos(7.0 * w * x))
                .collect();
            let d = SpectralDerivative::new(size, period);
            let mut out = vec![0.0; size];
            let mut scratch = vec![0.0; 2 * size];
            d.apply(&f, &mut out, &mut scratch);
            for (a, b) in out.iter().zip(expected.iter()) {
                assert!((a - b).abs() < 1e-11, "{a} vs {b}");
            }
        }
    }
}
