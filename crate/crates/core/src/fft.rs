use num_complex::Complex64;
use rustfft::FftPlanner;

/// Forward FFT of `data` zero-padded to `len`.
pub(crate) fn forward_real(data: &[f64], len: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    buf
}

/// Normalized inverse FFT, real part.
pub(crate) fn inverse_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let len = spectrum.len();
    FftPlanner::new()
        .plan_fft_inverse(len)
        .process(&mut spectrum);
    spectrum.iter().map(|c| c.re / len as f64).collect()
}

/// Smallest power of two ≥ `n`, times `factor`.
pub(crate) fn padded_len(n: usize, factor: usize) -> usize {
    n.max(1).next_power_of_two() * factor.max(1).next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let x = [1.0, -2.0, 3.5, 0.25, 7.0];
        let y = inverse_real(forward_real(&x, 8));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(y[5..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn padding() {
        assert_eq!(padded_len(5, 2), 16);
        assert_eq!(padded_len(8, 1), 8);
    }
}
