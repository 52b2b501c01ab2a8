//! EEG front-end: Butterworth bandpass, decimation, segmentation into
//! normalized fixed-length segments, and decision-window splitting.

use std::f64::consts::PI;

use log::warn;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::covariance::{EegSegment, Label};
use crate::error::{invalid, Error, Result};

/// One biquad `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b0 + self.b1 * z_inv + self.b2 * z2) / (1.0 + self.a1 * z_inv + self.a2 * z2)
    }

    /// Pole magnitudes (roots of `z² + a1 z + a2`).
    pub fn pole_magnitudes(&self) -> [f64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let p1 = (-self.a1 + disc) / 2.0;
        let p2 = (-self.a1 - disc) / 2.0;
        [p1.norm(), p2.norm()]
    }
}

/// Digital Butterworth bandpass as cascaded second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandpassFilter {
    pub order: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    pub fs: f64,
    pub sections: Vec<Biquad>,
}

/// Designs an `order`-th order Butterworth bandpass (`order / 2` sections).
///
/// The analog lowpass prototype of order `order / 2` is moved to the band
/// with `s → (s² + ω₀²) / (B s)`, using band edges prewarped for the
/// bilinear transform so the −3 dB points land exactly on `low` and `high`.
/// Each conjugate pole pair becomes one section with zeros at z = ±1; the
/// gain is set for unit magnitude at the band center.
pub fn design_butterworth_bandpass(order: usize, low: f64, high: f64, fs: f64) -> Result<BandpassFilter> {
    if order < 2 || !order.is_multiple_of(2) {
        return invalid(format!("bandpass order must be even and at least 2, got {order}"));
    }
    if !(fs > 0.0 && 0.0 < low && low < high && high < fs / 2.0) {
        return invalid(format!(
            "band edges must satisfy 0 < low < high < fs/2 (low {low}, high {high}, fs {fs})"
        ));
    }
    let n = order / 2;
    let k = 2.0 * fs;
    let wl = k * (PI * low / fs).tan();
    let wh = k * (PI * high / fs).tan();
    let bw = wh - wl;
    let w0_sq = wl * wh;

    let mut poles = Vec::with_capacity(n);
    for i in 0..n {
        let theta = PI * (2 * i + n + 1) as f64 / (2 * n) as f64;
        let proto = Complex64::from_polar(1.0, theta);
        let half = proto * bw / 2.0;
        let root = (half * half - w0_sq).sqrt();
        for s in [half + root, half - root] {
            let z = (k + s) / (k - s);
            if z.im > 0.0 {
                poles.push(z);
            }
        }
    }
    if poles.len() != n {
        return Err(Error::NumericalFailure(format!(
            "expected {n} upper-half-plane poles, found {}",
            poles.len()
        )));
    }
    poles.sort_by(|a, b| a.arg().total_cmp(&b.arg()));

    let mut sections: Vec<Biquad> = poles
        .iter()
        .map(|p| Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -2.0 * p.re,
            a2: p.norm_sqr(),
        })
        .collect();

    let center_hz = fs / PI * (w0_sq.sqrt() / k).atan();
    let mut filter = BandpassFilter {
        order,
        low_hz: low,
        high_hz: high,
        fs,
        sections: Vec::new(),
    };
    filter.sections = sections.clone();
    let gain = filter.magnitude(center_hz);
    let per_section = gain.powf(-1.0 / n as f64);
    for s in &mut sections {
        s.b0 *= per_section;
        s.b2 *= per_section;
    }
    filter.sections = sections;
    Ok(filter)
}

impl BandpassFilter {
    /// `|H(e^{jω})|` at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let z_inv = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.fs);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .fold(Complex64::new(1.0, 0.0), |acc, h| acc * h)
            .norm()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections
            .iter()
            .all(|s| s.pole_magnitudes().iter().all(|&m| m < 1.0))
    }

    /// Causal filtering of one channel, zero initial state (transposed
    /// direct form II per section).
    pub fn filter_channel(&self, x: &mut [f64]) {
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in x.iter_mut() {
                let input = *v;
                let y = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * y + z2;
                z2 = s.b2 * input - s.a2 * y;
                *v = y;
            }
        }
    }
}

/// A labeled interval `[start_sample, end_sample)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub start_sample: usize,
    pub end_sample: usize,
    pub label: Label,
}

/// A continuous multichannel recording of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject: String,
    /// channels × samples
    pub data: DMatrix<f64>,
    pub fs: f64,
    pub trials: Vec<Trial>,
}

impl Recording {
    /// Validates shape, rate and that trials are in bounds and do not overlap.
    /// Trials are stored sorted by start sample.
    pub fn new(subject: impl Into<String>, data: DMatrix<f64>, fs: f64, mut trials: Vec<Trial>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return invalid(format!("sampling rate must be positive, got {fs}"));
        }
        if data.nrows() == 0 {
            return invalid("recording has no channels");
        }
        trials.sort_by_key(|t| t.start_sample);
        for t in &trials {
            if t.start_sample >= t.end_sample || t.end_sample > data.ncols() {
                return Err(Error::Format(format!(
                    "trial [{}, {}) is empty or exceeds {} samples",
                    t.start_sample,
                    t.end_sample,
                    data.ncols()
                )));
            }
        }
        for pair in trials.windows(2) {
            if pair[1].start_sample < pair[0].end_sample {
                return Err(Error::Format(format!(
                    "trials [{}, {}) and [{}, {}) overlap",
                    pair[0].start_sample, pair[0].end_sample, pair[1].start_sample, pair[1].end_sample
                )));
            }
        }
        Ok(Self {
            subject: subject.into(),
            data,
            fs,
            trials,
        })
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }
}

/// Applies the filter causally to every channel.
pub fn filter_forward(filter: &BandpassFilter, rec: &Recording) -> Result<Recording> {
    if (filter.fs - rec.fs).abs() > 1e-9 * rec.fs {
        return invalid(format!(
            "filter designed for {} Hz applied to a {} Hz recording",
            filter.fs, rec.fs
        ));
    }
    let mut out = rec.clone();
    let mut buf = vec![0.0; rec.samples()];
    for ch in 0..rec.channels() {
        for (dst, src) in buf.iter_mut().zip(rec.data.row(ch).iter()) {
            *dst = *src;
        }
        filter.filter_channel(&mut buf);
        for (t, v) in buf.iter().enumerate() {
            out.data[(ch, t)] = *v;
        }
    }
    Ok(out)
}

/// Keeps every `fs / target_fs`-th sample starting at index 0.
pub fn downsample(rec: &Recording, target_fs: f64) -> Result<Recording> {
    if !(target_fs > 0.0) {
        return invalid("target rate must be positive");
    }
    let ratio_f = rec.fs / target_fs;
    let ratio = ratio_f.round();
    if ratio < 1.0 || (ratio_f - ratio).abs() > 1e-9 {
        return invalid(format!(
            "sampling rate {} is not an integer multiple of {target_fs}",
            rec.fs
        ));
    }
    let r = ratio as usize;
    if r == 1 {
        return Ok(rec.clone());
    }
    let n = rec.samples().div_ceil(r);
    let data = DMatrix::from_fn(rec.channels(), n, |c, j| rec.data[(c, j * r)]);
    // sample j is kept iff start <= j r < end
    let trials = rec
        .trials
        .iter()
        .filter_map(|t| {
            let start = t.start_sample.div_ceil(r);
            let end = t.end_sample.div_ceil(r);
            (start < end).then_some(Trial {
                start_sample: start,
                end_sample: end,
                label: t.label,
            })
        })
        .collect();
    Recording::new(rec.subject.clone(), data, target_fs, trials)
}

fn samples_for(duration_s: f64, fs: f64) -> Result<usize> {
    let n = (duration_s * fs).round();
    if !(n >= 2.0) {
        return invalid(format!("duration {duration_s} s at {fs} Hz is shorter than 2 samples"));
    }
    Ok(n as usize)
}

/// Removes each channel's mean and scales the whole block to unit
/// Frobenius norm.
pub fn normalize(data: &mut DMatrix<f64>) -> Result<()> {
    for mut row in data.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    let norm = data.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateSegment(
            "zero energy after removing channel means".into(),
        ));
    }
    *data /= norm;
    Ok(())
}

/// Cuts every labeled trial into consecutive non-overlapping segments of
/// `seg_len_s`, discarding each trial's remainder, and normalizes each
/// segment. Degenerate (constant) segments are skipped with a warning.
/// Segment `source` ids count up across the returned list.
pub fn segment_and_normalize(rec: &Recording, seg_len_s: f64) -> Result<Vec<EegSegment>> {
    let len = samples_for(seg_len_s, rec.fs)?;
    if rec.samples() < len {
        return invalid(format!(
            "recording of {} samples is shorter than one {seg_len_s} s segment",
            rec.samples()
        ));
    }
    let mut out = Vec::new();
    for trial in &rec.trials {
        let mut start = trial.start_sample;
        while start + len <= trial.end_sample {
            let mut block = rec.data.columns(start, len).into_owned();
            match normalize(&mut block) {
                Ok(()) => {
                    let id = out.len();
                    out.push(EegSegment::new(block, rec.fs, Some(trial.label))?.with_source(id));
                }
                Err(e) => warn!("subject {}: skipping segment at sample {start}: {e}", rec.subject),
            }
            start += len;
        }
    }
    Ok(out)
}

/// Splits a segment into `floor(T / T_win)` consecutive windows; the
/// remainder is dropped. Windows inherit label and source id.
pub fn split_windows(seg: &EegSegment, window_len_s: f64) -> Result<Vec<EegSegment>> {
    let len = samples_for(window_len_s, seg.fs())?;
    if len > seg.samples() {
        return invalid(format!(
            "window of {window_len_s} s is longer than the {} s segment",
            seg.duration_s()
        ));
    }
    (0..seg.samples() / len)
        .map(|i| {
            let block = seg.data().columns(i * len, len).into_owned();
            Ok(EegSegment::new(block, seg.fs(), seg.label)?.with_source(seg.source))
        })
        .collect()
}
