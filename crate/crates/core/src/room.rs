//! Shoebox room impulse responses with the Allen-Berkley image-source model
//! and the end-to-end reception pipeline built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{round_index, Scalar};
use crate::signals::{
    add_white_noise, extract_window, generate_chirp, quantize, ChirpSpec, NoiseSpec, Waveform,
};

/// Highest reflection order the default truncation rule will ever pick.
pub const MAX_DEFAULT_ORDER: u32 = 12;

/// Image amplitudes below this fraction of the direct path are dropped by the
/// default order rule.
pub const ORDER_TRUNCATION_LEVEL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Self) -> T {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    fn coord(&self, axis: usize) -> T {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

/// Rectangular room with uniform energy absorption on all six planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec<T> {
    /// `(Lx, Ly, Lz)` in meters.
    pub dims: [T; 3],
    /// Energy absorption coefficient in `[0, 1]`.
    pub absorption: T,
    pub speed_of_sound: T,
}

impl<T: Scalar> RoomSpec<T> {
    pub fn new(dims: [T; 3], absorption: T) -> Self {
        Self { dims, absorption, speed_of_sound: T::lit(340.0) }
    }

    /// 6 x 4 x 2.5 m room at the given absorption.
    pub fn reference(absorption: T) -> Self {
        Self::new([T::lit(6.0), T::lit(4.0), T::lit(2.5)], absorption)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|d| !(*d > T::zero()) || !d.is_finite()) {
            return Err(Error::param("room dimensions must be positive"));
        }
        if !(self.absorption >= T::zero() && self.absorption <= T::one()) {
            return Err(Error::param(format!(
                "absorption {} outside [0, 1]",
                self.absorption
            )));
        }
        if !(self.speed_of_sound > T::zero()) || !self.speed_of_sound.is_finite() {
            return Err(Error::param("speed of sound must be positive"));
        }
        Ok(())
    }

    /// Pressure reflection coefficient `sqrt(1 - alpha)`.
    pub fn reflection_coefficient(&self) -> T {
        (T::one() - self.absorption).max(T::zero()).sqrt()
    }

    pub fn center(&self) -> Point3<T> {
        let half = T::lit(0.5);
        Point3::new(self.dims[0] * half, self.dims[1] * half, self.dims[2] * half)
    }

    pub fn contains(&self, p: &Point3<T>) -> bool {
        (0..3).all(|a| {
            let c = p.coord(a);
            c > T::zero() && c < self.dims[a]
        })
    }

    pub fn require_inside(&self, p: &Point3<T>, what: &str) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "{what} ({}, {}, {}) is not strictly inside the {} x {} x {} m room",
                p.x, p.y, p.z, self.dims[0], self.dims[1], self.dims[2]
            )))
        }
    }

    /// Smallest order `N` with `beta^N` below [`ORDER_TRUNCATION_LEVEL`], capped at
    /// [`MAX_DEFAULT_ORDER`]. Every image is at least as far as the direct path,
    /// so this bounds each order-`N` image below the level relative to the direct tap.
    pub fn default_max_order(&self) -> u32 {
        let beta = self.reflection_coefficient().to_f64_lossy();
        if beta <= 0.0 {
            return 0;
        }
        if beta >= 1.0 {
            return MAX_DEFAULT_ORDER;
        }
        let mut n = 0;
        while n < MAX_DEFAULT_ORDER && beta.powi(n as i32) >= ORDER_TRUNCATION_LEVEL * (1.0 - 1e-9) {
            n += 1;
        }
        n
    }
}

/// Virtual source produced by mirroring the real source in the room walls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource<T> {
    pub position: Point3<T>,
    /// Number of wall bounces along the path.
    pub order: u32,
}

/// All image sources of `source` with at most `max_order` reflections.
///
/// Per axis the image coordinate is `(1 - 2q) s + 2 n L` with `|n - q| + |n|`
/// bounces, `q in {0, 1}`, `n` any integer.
pub fn image_sources<T: Scalar>(
    room: &RoomSpec<T>,
    source: &Point3<T>,
    max_order: u32,
) -> Vec<ImageSource<T>> {
    let m = max_order as i64;
    // Per-axis candidates: (coordinate, bounces).
    let axis_images = |axis: usize| -> Vec<(T, u32)> {
        let s = source.coord(axis);
        let len = room.dims[axis];
        let two = T::lit(2.0);
        let mut out = Vec::new();
        for n in -m..=m {
            for q in 0..=1i64 {
                let bounces = ((n - q).abs() + n.abs()) as u32;
                if bounces > max_order {
                    continue;
                }
                let sign = if q == 0 { T::one() } else { -T::one() };
                out.push((sign * s + two * T::from_i64(n).unwrap() * len, bounces));
            }
        }
        out
    };
    let (xs, ys, zs) = (axis_images(0), axis_images(1), axis_images(2));
    let mut images = Vec::new();
    for &(x, ox) in &xs {
        for &(y, oy) in &ys {
            if ox + oy > max_order {
                continue;
            }
            for &(z, oz) in &zs {
                let order = ox + oy + oz;
                if order <= max_order {
                    images.push(ImageSource { position: Point3::new(x, y, z), order });
                }
            }
        }
    }
    images
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse<T> {
    pub taps: Waveform<T>,
    pub source: Point3<T>,
    pub receiver: Point3<T>,
    pub max_order: u32,
    /// Images that landed inside the tap buffer.
    pub image_count: usize,
}

impl<T: Scalar> ImpulseResponse<T> {
    /// Index of the direct-path tap, `round(f_s d / c)`.
    pub fn direct_index(&self, speed_of_sound: T) -> usize {
        let d = self.source.distance(&self.receiver);
        round_index(d / speed_of_sound * self.taps.sample_rate()) as usize
    }
}

/// Room impulse response from `source` to `receiver` covering `length` seconds.
///
/// Each image contributes `beta^k / (4 pi d)` at the sample nearest to `d / c`.
pub fn compute_rir<T: Scalar>(
    room: &RoomSpec<T>,
    source: &Point3<T>,
    receiver: &Point3<T>,
    sample_rate: T,
    max_order: u32,
    length: T,
) -> Result<ImpulseResponse<T>> {
    room.validate()?;
    room.require_inside(source, "source")?;
    room.require_inside(receiver, "receiver")?;
    if !(sample_rate > T::zero()) {
        return Err(Error::param("sample rate must be positive"));
    }
    let c = room.speed_of_sound;
    let direct = source.distance(receiver) / c;
    if !(length >= direct) {
        return Err(Error::param(format!(
            "RIR length {length} s is shorter than the direct-path delay {direct} s"
        )));
    }
    let n_taps = round_index(length * sample_rate) as usize + 1;
    let mut taps = vec![T::zero(); n_taps];
    let beta = room.reflection_coefficient();
    let four_pi = T::lit(4.0) * T::PI();
    let mut image_count = 0;
    for image in image_sources(room, source, max_order) {
        let gain = beta.powi(image.order as i32);
        if gain.is_zero() {
            continue;
        }
        let d = image.position.distance(receiver);
        let idx = round_index(d / c * sample_rate);
        if idx >= 0 && (idx as usize) < n_taps {
            taps[idx as usize] = taps[idx as usize] + gain / (four_pi * d);
            image_count += 1;
        }
    }
    Ok(ImpulseResponse {
        taps: Waveform::new(taps, sample_rate, T::zero())?,
        source: *source,
        receiver: *receiver,
        max_order,
        image_count,
    })
}

fn same_rate<T: Scalar>(a: T, b: T) -> bool {
    (a - b).abs() <= T::lit(1e-9) * a.abs().max(b.abs())
}

/// Full linear convolution of `signal` with the RIR taps.
pub fn convolve<T: Scalar>(signal: &Waveform<T>, rir: &ImpulseResponse<T>) -> Result<Waveform<T>> {
    let n_out = (signal.len() + rir.taps.len()).saturating_sub(1);
    convolve_prefix(signal, rir, n_out)
}

/// First `n_out` samples of the full convolution.
pub(crate) fn convolve_prefix<T: Scalar>(
    signal: &Waveform<T>,
    rir: &ImpulseResponse<T>,
    n_out: usize,
) -> Result<Waveform<T>> {
    if !same_rate(signal.sample_rate(), rir.taps.sample_rate()) {
        return Err(Error::RateMismatch {
            expected: signal.sample_rate().to_f64_lossy(),
            found: rir.taps.sample_rate().to_f64_lossy(),
        });
    }
    let x = signal.samples();
    let mut out = vec![T::zero(); n_out];
    for (k, &h) in rir.taps.samples().iter().enumerate() {
        if h.is_zero() || k >= n_out {
            continue;
        }
        let end = (k + x.len()).min(n_out);
        for (o, &s) in out[k..end].iter_mut().zip(x) {
            *o = *o + h * s;
        }
    }
    Waveform::new(out, signal.sample_rate(), signal.t0())
}

/// Receiver-side acquisition parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiveChain<T> {
    /// Wake-up instant relative to the broadcast start (s).
    pub t_wake: T,
    /// Awake (sampling) duration (s).
    pub tau_rx: T,
    /// ADC resolution; `None` skips quantization.
    pub adc_bits: Option<u32>,
    /// Reflection order; `None` uses [`RoomSpec::default_max_order`].
    pub max_order: Option<u32>,
}

impl<T: Scalar> ReceiveChain<T> {
    pub fn new(t_wake: T, tau_rx: T) -> Self {
        Self { t_wake, tau_rx, adc_bits: Some(12), max_order: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_wake >= T::zero()) {
            return Err(Error::param("wake-up time must be non-negative"));
        }
        if !(self.tau_rx > T::zero()) {
            return Err(Error::param("awake duration must be positive"));
        }
        if let Some(bits) = self.adc_bits {
            if !(2..=24).contains(&bits) {
                return Err(Error::param(format!("ADC bits must lie in [2, 24], got {bits}")));
            }
        }
        Ok(())
    }
}

/// Noise-free part of one node's reception: the clean wake-up snippet plus the
/// ADC full scale derived from the clean trace. Noise trials reuse it.
#[derive(Debug, Clone)]
pub struct CleanReception<T> {
    pub snippet: Waveform<T>,
    pub full_scale: T,
    pub adc_bits: Option<u32>,
    pub true_distance: T,
}

impl<T: Scalar> CleanReception<T> {
    /// Builds the clean snippet from an already synthesized broadcast.
    pub fn from_broadcast(
        broadcast: &Waveform<T>,
        room: &RoomSpec<T>,
        source: &Point3<T>,
        receiver: &Point3<T>,
        chain: &ReceiveChain<T>,
    ) -> Result<Self> {
        chain.validate()?;
        let fs = broadcast.sample_rate();
        let c = room.speed_of_sound;
        let true_distance = source.distance(receiver);
        let window_end = chain.t_wake + chain.tau_rx;
        let length = window_end.max(true_distance / c + T::one() / fs);
        let order = chain.max_order.unwrap_or_else(|| room.default_max_order());
        let rir = compute_rir(room, source, receiver, fs, order, length)?;
        let n_trace = round_index(window_end * fs) as usize + 1;
        let trace = convolve_prefix(broadcast, &rir, n_trace)?;
        let snippet = extract_window(&trace, chain.t_wake, chain.tau_rx)?;
        let full_scale = trace.peak_abs();
        Ok(Self { snippet, full_scale, adc_bits: chain.adc_bits, true_distance })
    }

    /// Adds noise referenced to the clean snippet power, then quantizes.
    pub fn observe(&self, noise: &NoiseSpec<T>) -> Result<Waveform<T>> {
        let noisy = add_white_noise(&self.snippet, noise)?;
        match self.adc_bits {
            Some(bits) if self.full_scale > T::zero() => quantize(&noisy, bits, self.full_scale),
            _ => Ok(noisy),
        }
    }
}

/// Chirp synthesis, room propagation, white noise, wake-up window and 12-bit
/// quantization for one node. The broadcast starts at `t = 0`.
pub fn simulate_reception<T: Scalar>(
    spec: &ChirpSpec<T>,
    room: &RoomSpec<T>,
    source: &Point3<T>,
    receiver: &Point3<T>,
    noise: &NoiseSpec<T>,
    t_wake: T,
    tau_rx: T,
) -> Result<Waveform<T>> {
    let broadcast = generate_chirp(spec)?;
    let chain = ReceiveChain::new(t_wake, tau_rx);
    CleanReception::from_broadcast(&broadcast, room, source, receiver, &chain)?.observe(noise)
}
