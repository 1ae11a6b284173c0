//! Complex FFT of arbitrary length with an explicit multiply counter.
//!
//! Power-of-two lengths run radix-2 Cooley-Tukey; every other length goes
//! through Bluestein's chirp-z embedding (which itself only needs
//! power-of-two transforms). The counter tallies executed complex
//! multiplications so cost-scaling claims can be asserted on operation
//! counts instead of wall time.

use num_complex::Complex64;
use std::f64::consts::PI;

/// In-place forward DFT (no normalization).
pub fn forward(buf: &mut [Complex64], mults: &mut u64) {
    transform(buf, false, mults);
}

/// In-place inverse DFT carrying the 1/n factor.
pub fn inverse(buf: &mut [Complex64], mults: &mut u64) {
    transform(buf, true, mults);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

fn transform(buf: &mut [Complex64], inv: bool, mults: &mut u64) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(buf, inv, mults);
    } else {
        bluestein(buf, inv, mults);
    }
}

fn radix2(buf: &mut [Complex64], inv: bool, mults: &mut u64) {
    let n = buf.len();
    let levels = n.trailing_zeros();

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            buf.swap(i, j);
        }
    }

    let sign = if inv { 1.0 } else { -1.0 };
    for s in 1..=levels {
        let m = 1usize << s;
        let wm = Complex64::from_polar(1.0, sign * 2.0 * PI / m as f64);
        let mut k = 0;
        while k < n {
            let mut w = Complex64::new(1.0, 0.0);
            for t in 0..m / 2 {
                let u = buf[k + t];
                let v = buf[k + t + m / 2] * w;
                *mults += 1;
                buf[k + t] = u + v;
                buf[k + t + m / 2] = u - v;
                w *= wm;
            }
            k += m;
        }
    }
}

fn bluestein(buf: &mut [Complex64], inv: bool, mults: &mut u64) {
    let n = buf.len();
    let m = (2 * n - 1).next_power_of_two();
    let sign = if inv { 1.0 } else { -1.0 };

    // chirp[k] = exp(sign * i*pi*k^2/n); k^2 reduced mod 2n keeps angles exact.
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let kk = (k * k) % (2 * n);
            Complex64::from_polar(1.0, sign * PI * kk as f64 / n as f64)
        })
        .collect();

    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = buf[k] * chirp[k];
        *mults += 1;
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        let c = chirp[k].conj();
        b[k] = c;
        b[m - k] = c;
    }

    radix2(&mut a, false, mults);
    radix2(&mut b, false, mults);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
        *mults += 1;
    }
    // Unnormalized inverse of length m.
    radix2(&mut a, true, mults);
    let scale = 1.0 / m as f64;
    for (k, out) in buf.iter_mut().enumerate() {
        *out = a[k] * scale * chirp[k];
        *mults += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64], inv: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inv { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, v) in x.iter().enumerate() {
                    let ang = sign * 2.0 * PI * (k * j) as f64 / n as f64;
                    acc += v * Complex64::from_polar(1.0, ang);
                }
                if inv {
                    acc / n as f64
                } else {
                    acc
                }
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_for_all_small_lengths() {
        for n in 1..=40usize {
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new((i as f64).sin() + 0.3, (i as f64 * 0.7).cos()))
                .collect();
            let mut mults = 0u64;

            let mut f = x.clone();
            forward(&mut f, &mut mults);
            let expect = naive_dft(&x, false);
            for (a, b) in f.iter().zip(&expect) {
                assert!((a - b).norm() < 1e-9, "forward mismatch at n={n}");
            }

            let mut g = f.clone();
            inverse(&mut g, &mut mults);
            for (a, b) in g.iter().zip(&x) {
                assert!((a - b).norm() < 1e-9, "round trip mismatch at n={n}");
            }
        }
    }

    #[test]
    fn radix2_multiply_count_is_half_n_log_n() {
        for n in [2usize, 4, 8, 16, 64, 256] {
            let mut x = vec![Complex64::new(1.0, 0.0); n];
            let mut mults = 0u64;
            forward(&mut x, &mut mults);
            assert_eq!(mults, (n as u64 / 2) * n.trailing_zeros() as u64);
        }
    }
}
