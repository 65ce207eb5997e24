use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{ImpulseResponse, Signal};
use crate::error::{Error, Result};

/// Below this many multiply-adds the direct sum is used.
const DIRECT_LIMIT: usize = 1 << 16;

/// Linear convolution `x * h`, output length `len(x) + M - 1`.
pub fn convolve(x: &Signal, h: &ImpulseResponse) -> Result<Signal> {
    x.check_rate(h.signal())?;
    if x.is_empty() || h.is_empty() {
        return Err(Error::Empty("convolution input"));
    }
    let out = convolve_slices(x.samples(), h.signal().samples());
    Signal::new(out, x.sample_rate())
}

pub(crate) fn convolve_slices(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.len().saturating_mul(b.len()) <= DIRECT_LIMIT {
        convolve_direct(a, b)
    } else {
        fft_convolve(a, b)
    }
}

/// Plain O(N·M) double loop.
pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &av) in a.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        for (j, &bv) in b.iter().enumerate() {
            out[i + j] += av * bv;
        }
    }
    out
}

/// Zero-padded FFT convolution.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut fa = to_complex(a, n);
    let mut fb = to_complex(b, n);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / n as f64;
    fa[..out_len].iter().map(|c| c.re * scale).collect()
}

pub(crate) fn to_complex(x: &[f64], n: usize) -> Vec<Complex<f64>> {
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    for (c, &v) in buf.iter_mut().zip(x) {
        c.re = v;
    }
    buf
}

/// Mean squared amplitude.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Returns `y + alpha * v` with `alpha` chosen so that the power ratio of
/// the two addends equals `snr_db`. The noise is truncated or zero-padded to
/// the length of `y`. `f64::INFINITY` means no noise.
pub fn mix_noise_at_snr(y: &Signal, v: &Signal, snr_db: f64) -> Result<Signal> {
    y.check_rate(v)?;
    if y.is_empty() || v.is_empty() {
        return Err(Error::Empty("signal for noise mixing"));
    }
    if snr_db == f64::INFINITY {
        return Ok(y.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("snr_db is NaN".into()));
    }
    let noise = v.resized(y.len());
    let p_noise = power(noise.samples());
    if p_noise == 0.0 {
        return Err(Error::ZeroEnergy("noise signal"));
    }
    let p_sig = power(y.samples());
    let alpha = (p_sig / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let out = y
        .samples()
        .iter()
        .zip(noise.samples())
        .map(|(a, b)| a + alpha * b)
        .collect();
    Signal::new(out, y.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identity_and_shift() {
        let x = Signal::new(vec![1.0, -2.0, 3.0, 0.5], 16000).unwrap();
        let id = ImpulseResponse::from_samples(vec![1.0], 16000).unwrap();
        assert_eq!(convolve(&x, &id).unwrap().samples(), x.samples());

        let d = 3;
        let shift = ImpulseResponse::from_samples(vec![0.0, 0.0, 0.0, 1.0], 16000).unwrap();
        let y = convolve(&x, &shift).unwrap();
        assert_eq!(y.len(), x.len() + d);
        assert_eq!(&y.samples()[..d], &[0.0; 3]);
        assert_eq!(&y.samples()[d..], x.samples());
    }

    #[test]
    fn small_random_matches_double_loop() {
        let mut rng = crate::rng::seeded(11);
        let a = rand_vec(&mut rng, 8);
        let b = rand_vec(&mut rng, 3);
        let mut expect = vec![0.0; 10];
        for n in 0..10 {
            for k in 0..3 {
                if n >= k && n - k < 8 {
                    expect[n] += b[k] * a[n - k];
                }
            }
        }
        let x = Signal::new(a, 16000).unwrap();
        let h = ImpulseResponse::from_samples(b, 16000).unwrap();
        let got = convolve(&x, &h).unwrap();
        for (g, e) in got.samples().iter().zip(&expect) {
            assert!((g - e).abs() <= 1e-12 * e.abs().max(1.0));
        }
    }

    #[test]
    fn fft_path_matches_direct() {
        let mut rng = crate::rng::seeded(5);
        let a = rand_vec(&mut rng, 3000);
        let b = rand_vec(&mut rng, 700);
        let d = convolve_direct(&a, &b);
        let f = fft_convolve(&a, &b);
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in d.iter().zip(&f) {
            assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn convolve_errors() {
        let x = Signal::new(vec![1.0], 16000).unwrap();
        let h = ImpulseResponse::from_samples(vec![1.0], 8000).unwrap();
        assert!(matches!(
            convolve(&x, &h),
            Err(Error::SampleRateMismatch(16000, 8000))
        ));
        let e = Signal::new(vec![], 8000).unwrap();
        assert!(matches!(convolve(&e, &h), Err(Error::Empty(_))));
    }

    #[test]
    fn snr_mixing() {
        let mut rng = crate::rng::seeded(3);
        let y = Signal::new(rand_vec(&mut rng, 4000), 16000).unwrap();
        let v = Signal::new(rand_vec(&mut rng, 4000), 16000).unwrap();

        assert_eq!(mix_noise_at_snr(&y, &v, f64::INFINITY).unwrap(), y);

        let mixed = mix_noise_at_snr(&y, &v, 10.0).unwrap();
        let added: Vec<f64> = mixed
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(m, s)| m - s)
            .collect();
        let snr = 10.0 * (power(y.samples()) / power(&added)).log10();
        assert!((snr - 10.0).abs() < 0.01, "snr {snr}");

        // equal powers at 0 dB: alpha = 1
        let same = mix_noise_at_snr(&y, &y, 0.0).unwrap();
        for (m, s) in same.samples().iter().zip(y.samples()) {
            assert!((m - 2.0 * s).abs() < 1e-12);
        }

        let silent = Signal::zeros(10, 16000).unwrap();
        assert!(matches!(
            mix_noise_at_snr(&y, &silent, 10.0),
            Err(Error::ZeroEnergy(_))
        ));
    }
}
