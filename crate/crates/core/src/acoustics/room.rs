use std::f64::consts::PI;

use super::{schroeder_t60, ImpulseResponse};
use crate::error::{invalid, Error, Result};

const MAX_CALIBRATED_BETA: f64 = 0.995;

/// How wall reflectivity is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Absorption {
    /// Target reverberation time in seconds, converted with Sabine's formula.
    TargetT60(f64),
    /// Uniform pressure reflection coefficient in [0, 1).
    ReflectionCoefficient(f64),
}

/// Shoebox room for the image method.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub source_position: [f64; 3],
    pub mic_position: [f64; 3],
    pub absorption: Absorption,
    pub max_reflection_order: usize,
    pub sample_rate: u32,
    pub speed_of_sound: f64,
}

impl RoomSpec {
    pub const DEFAULT_ORDER: usize = 12;
    pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

    pub fn new(
        dimensions: [f64; 3],
        source_position: [f64; 3],
        mic_position: [f64; 3],
        absorption: Absorption,
        sample_rate: u32,
    ) -> Self {
        Self {
            dimensions,
            source_position,
            mic_position,
            absorption,
            max_reflection_order: Self::DEFAULT_ORDER,
            sample_rate,
            speed_of_sound: Self::DEFAULT_SPEED_OF_SOUND,
        }
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface_area(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + y * z + x * z)
    }

    pub fn source_mic_distance(&self) -> f64 {
        distance(&self.source_position, &self.mic_position)
    }

    /// Uniform wall reflection coefficient implied by the absorption setting.
    ///
    /// A target T60 starts from Sabine's closed form and is then refined by
    /// bisection until the Schroeder estimate of the generated IR matches the
    /// target within 1%: a specular shoebox decays more slowly than the
    /// diffuse-field formula predicts.
    pub fn reflection_coefficient(&self) -> Result<f64> {
        self.validate()?;
        let beta = match self.absorption {
            Absorption::ReflectionCoefficient(b) => b,
            Absorption::TargetT60(t60) => self.calibrate(t60)?,
        };
        if !(0.0..1.0).contains(&beta) {
            return invalid(format!("reflection coefficient {beta} outside [0, 1)"));
        }
        Ok(beta)
    }

    fn calibrate(&self, t60: f64) -> Result<f64> {
        let sabine = sabine_reflection_coefficient(self.volume(), self.surface_area(), t60)?;
        if t60 == 0.0 {
            return Ok(0.0);
        }
        let measure = |beta: f64| schroeder_t60(&render(self, beta)).unwrap_or(0.0);
        let close = |est: f64| (est - t60).abs() <= 0.01 * t60;

        // The estimate grows with beta until the order-limited IR length
        // caps it; bracket the target on the rising part.
        let est = measure(sabine);
        if close(est) {
            return Ok(sabine);
        }
        let (mut lo, mut hi) = if est < t60 {
            let mut lo = sabine;
            let mut hi = None;
            let mut b = sabine;
            while b < MAX_CALIBRATED_BETA {
                b = (b + 0.05).min(MAX_CALIBRATED_BETA);
                if measure(b) >= t60 {
                    hi = Some(b);
                    break;
                }
                lo = b;
            }
            match hi {
                Some(hi) => (lo, hi),
                None => {
                    return invalid(format!(
                        "target t60 {t60} s not reachable with max_reflection_order {}",
                        self.max_reflection_order
                    ))
                }
            }
        } else {
            (0.0, sabine)
        };
        let mut beta = 0.5 * (lo + hi);
        for _ in 0..40 {
            let est = measure(beta);
            if close(est) {
                break;
            }
            if est < t60 {
                lo = beta;
            } else {
                hi = beta;
            }
            beta = 0.5 * (lo + hi);
        }
        Ok(beta)
    }

    /// Reflection order whose images span roughly `duration` seconds:
    /// one reflection per mean room dimension travelled.
    pub fn order_for_duration(&self, duration: f64) -> usize {
        let mean = self.dimensions.iter().sum::<f64>() / 3.0;
        ((self.speed_of_sound * duration / mean).ceil() as usize).max(1)
    }

    fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(*d > 0.0)) {
            return invalid(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions
            ));
        }
        for p in [&self.source_position, &self.mic_position] {
            let inside = p
                .iter()
                .zip(&self.dimensions)
                .all(|(c, d)| *c > 0.0 && *c < *d);
            if !inside {
                return Err(Error::OutsideRoom(*p));
            }
        }
        if self.sample_rate == 0 {
            return invalid("sample rate must be positive");
        }
        if !(self.speed_of_sound > 0.0) {
            return invalid("speed of sound must be positive");
        }
        Ok(())
    }
}

/// Solves `T60 = 0.161 V / (S (1 - beta^2))` for a uniform `beta`.
/// Targets shorter than the formula can reach give an anechoic room.
pub fn sabine_reflection_coefficient(volume: f64, surface: f64, t60: f64) -> Result<f64> {
    if !(t60 >= 0.0) || !t60.is_finite() {
        return invalid(format!("target t60 must be non-negative, got {t60}"));
    }
    if !(volume > 0.0) || !(surface > 0.0) {
        return invalid("zero-volume room");
    }
    if t60 == 0.0 {
        return Ok(0.0);
    }
    let absorption = 0.161 * volume / (surface * t60);
    Ok((1.0 - absorption).max(0.0).sqrt())
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Allen–Berkley image-source IR with `1/(4 pi d)` spreading and
/// nearest-sample delays.
pub fn image_method_ir(room: &RoomSpec) -> Result<ImpulseResponse> {
    let beta = room.reflection_coefficient()?;
    let h = render(room, beta);
    let direct = (room.source_mic_distance() * room.sample_rate as f64 / room.speed_of_sound)
        .round() as usize;
    let ir = ImpulseResponse::with_direct_path(h.signal().clone(), direct)?;
    Ok(ir.with_estimated_t60())
}

fn render(room: &RoomSpec, beta: f64) -> ImpulseResponse {
    let order = room.max_reflection_order as i64;
    let fs = room.sample_rate as f64;
    let c = room.speed_of_sound;
    let [lx, ly, lz] = room.dimensions;
    let s = room.source_position;
    let r = room.mic_position;

    let mut taps: Vec<(usize, f64)> = Vec::new();
    for mx in -order..=order {
        for my in -order..=order {
            for mz in -order..=order {
                for q in 0..8u8 {
                    let (qx, qy, qz) =
                        ((q & 1) as i64, ((q >> 1) & 1) as i64, ((q >> 2) & 1) as i64);
                    let refl = (mx - qx).abs()
                        + mx.abs()
                        + (my - qy).abs()
                        + my.abs()
                        + (mz - qz).abs()
                        + mz.abs();
                    if refl > order {
                        continue;
                    }
                    let amp_refl = beta.powi(refl as i32);
                    if amp_refl == 0.0 {
                        continue;
                    }
                    let img = [
                        (1 - 2 * qx) as f64 * s[0] + 2.0 * mx as f64 * lx,
                        (1 - 2 * qy) as f64 * s[1] + 2.0 * my as f64 * ly,
                        (1 - 2 * qz) as f64 * s[2] + 2.0 * mz as f64 * lz,
                    ];
                    let d = distance(&img, &r);
                    let delay = (d * fs / c).round() as usize;
                    taps.push((delay, amp_refl / (4.0 * PI * d)));
                }
            }
        }
    }

    let len = taps.iter().map(|(d, _)| d + 1).max().unwrap_or(1);
    let mut h = vec![0.0; len];
    for (d, a) in taps {
        h[d] += a;
    }
    ImpulseResponse::from_samples(h, room.sample_rate).expect("validated room gives finite taps")
}
