//! Fixed-length input vectors.
//!
//! A segment of `n` samples becomes `3·W` scalars laid out
//! `[x0, y0, z0, x1, y1, z1, ...]`. Short segments are zero-padded at the
//! tail, long ones are center-cropped. Normalization statistics come from the
//! real samples only, so padding stays exactly zero.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{GestureSegment, Label};
use crate::ingest::GestureStyle;

pub const DEFAULT_TIMESTEPS: usize = 1500;

const CACHE_MAGIC: &[u8; 4] = b"MSVC";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WindowError {
    #[error("no segments to fit a window to")]
    EmptyDataset,
    #[error("window must span at least one timestep")]
    ZeroTimesteps,
    #[error("malformed vector cache: {0}")]
    BadCache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    PerWindowZscore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub timesteps: usize,
    pub layout: Layout,
    pub normalization: Normalization,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self::new(DEFAULT_TIMESTEPS)
    }
}

impl WindowSpec {
    pub fn new(timesteps: usize) -> Self {
        Self {
            timesteps,
            layout: Layout::Interleaved,
            normalization: Normalization::PerWindowZscore,
        }
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn input_width(&self) -> usize {
        3 * self.timesteps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Label,
    pub participant_id: String,
    pub session_id: String,
    pub style: GestureStyle,
}

impl FeatureVector {
    pub fn target(&self) -> f64 {
        self.label.as_u8() as f64
    }
}

/// Window length equal to the longest segment.
pub fn fit_window(segments: &[GestureSegment]) -> Result<WindowSpec, WindowError> {
    segments
        .iter()
        .map(GestureSegment::len)
        .max()
        .filter(|&w| w > 0)
        .map(WindowSpec::new)
        .ok_or(WindowError::EmptyDataset)
}

/// Flattens one segment. Total for non-empty segments.
pub fn vectorize(segment: &GestureSegment, spec: &WindowSpec) -> FeatureVector {
    let w = spec.timesteps;
    let n = segment.samples.len();
    let kept = if n > w {
        let offset = (n - w) / 2;
        &segment.samples[offset..offset + w]
    } else {
        &segment.samples[..]
    };

    let mut values = vec![0.0; spec.input_width()];
    for (slot, sample) in values.chunks_exact_mut(3).zip(kept) {
        slot.copy_from_slice(&sample.axes());
    }

    if spec.normalization == Normalization::PerWindowZscore && !kept.is_empty() {
        let real = kept.len();
        for axis in 0..3 {
            let axis_values = || values[..3 * real].iter().skip(axis).step_by(3);
            let mean = axis_values().sum::<f64>() / real as f64;
            let var = axis_values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / real as f64;
            let std = var.sqrt();
            for v in values[..3 * real].iter_mut().skip(axis).step_by(3) {
                *v = if std > 0.0 { (*v - mean) / std } else { 0.0 };
            }
        }
    }

    FeatureVector {
        values,
        label: segment.label,
        participant_id: segment.participant_id.clone(),
        session_id: segment.session_id.clone(),
        style: segment.style,
    }
}

fn style_code(style: GestureStyle) -> u8 {
    match style {
        GestureStyle::Protocol => 0,
        GestureStyle::Natural => 1,
    }
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "identifier too long"))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

/// Writes the vectorized dataset cache.
///
/// ```text
/// "MSVC"  version:u32  timesteps:u32  count:u32            (little-endian)
/// per record: label:u8 style:u8 participant:(u16 len, utf8) session:(u16 len, utf8)
///             3·timesteps × f32
/// ```
pub fn write_cache(
    out: &mut impl Write,
    spec: &WindowSpec,
    vectors: &[FeatureVector],
) -> Result<(), WindowError> {
    out.write_all(CACHE_MAGIC)?;
    out.write_all(&CACHE_VERSION.to_le_bytes())?;
    out.write_all(&(spec.timesteps as u32).to_le_bytes())?;
    out.write_all(&(vectors.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(4 * spec.input_width());
    for v in vectors {
        if v.values.len() != spec.input_width() {
            return Err(WindowError::BadCache(format!(
                "vector of length {} in a window of width {}",
                v.values.len(),
                spec.input_width()
            )));
        }
        out.write_all(&[v.label.as_u8(), style_code(v.style)])?;
        write_str(out, &v.participant_id)?;
        write_str(out, &v.session_id)?;
        buf.clear();
        for &x in &v.values {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32, WindowError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String, WindowError> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut bytes = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|_| WindowError::BadCache("identifier is not UTF-8".into()))
}

pub fn read_cache(input: &mut impl Read) -> Result<(WindowSpec, Vec<FeatureVector>), WindowError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(WindowError::BadCache("bad magic".into()));
    }
    let version = read_u32(input)?;
    if version != CACHE_VERSION {
        return Err(WindowError::BadCache(format!("unsupported version {version}")));
    }
    let timesteps = read_u32(input)? as usize;
    if timesteps == 0 {
        return Err(WindowError::ZeroTimesteps);
    }
    let count = read_u32(input)? as usize;
    let spec = WindowSpec::new(timesteps);

    let mut vectors = Vec::with_capacity(count);
    let mut raw = vec![0u8; 4 * spec.input_width()];
    for _ in 0..count {
        let mut head = [0u8; 2];
        input.read_exact(&mut head)?;
        let label = Label::from_u8(head[0])
            .ok_or_else(|| WindowError::BadCache(format!("bad label byte {}", head[0])))?;
        let style = match head[1] {
            0 => GestureStyle::Protocol,
            1 => GestureStyle::Natural,
            b => return Err(WindowError::BadCache(format!("bad style byte {b}"))),
        };
        let participant_id = read_str(input)?;
        let session_id = read_str(input)?;
        input.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        vectors.push(FeatureVector {
            values,
            label,
            participant_id,
            session_id,
            style,
        });
    }
    Ok((spec, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::Span;
    use crate::ingest::AccelSample;
    use proptest::prelude::*;

    fn segment(accel: &[[f32; 3]]) -> GestureSegment {
        GestureSegment {
            participant_id: "p01".into(),
            session_id: "s01".into(),
            style: GestureStyle::Protocol,
            label: Label::Medication,
            span: Span::new(0, accel.len().max(1)).unwrap(),
            samples: accel
                .iter()
                .enumerate()
                .map(|(i, a)| AccelSample::new(i as u64 * 40, a[0], a[1], a[2]))
                .collect(),
        }
    }

    #[test]
    fn identity_flattening() {
        let seg = segment(&[[1., 2., 3.], [4., 5., 6.], [7., 8., 9.], [10., 11., 12.]]);
        let spec = WindowSpec::new(4).with_normalization(Normalization::None);
        let v = vectorize(&seg, &spec);
        let expected: Vec<f64> = (1..=12).map(f64::from).collect();
        assert_eq!(v.values, expected);
    }

    #[test]
    fn center_crop_keeps_middle() {
        let accel: Vec<[f32; 3]> = (0..6).map(|i| [i as f32; 3]).collect();
        let spec = WindowSpec::new(2).with_normalization(Normalization::None);
        let v = vectorize(&segment(&accel), &spec);
        assert_eq!(v.values, vec![2., 2., 2., 3., 3., 3.]);
    }

    #[test]
    fn short_segment_padded_with_zeros() {
        let accel: Vec<[f32; 3]> = (0..500)
            .map(|i| [(i as f32 * 0.1).sin(), (i as f32 * 0.07).cos(), 9.81 + (i % 7) as f32])
            .collect();
        let v = vectorize(&segment(&accel), &WindowSpec::default());
        assert_eq!(v.values.len(), 4500);
        assert!(v.values[1500..].iter().all(|&x| x == 0.0));
        assert!(v.values[..1500].iter().any(|&x| x != 0.0));
    }

    #[test]
    fn constant_axis_normalizes_to_zero() {
        let accel: Vec<[f32; 3]> = (0..10).map(|i| [i as f32, 5.0, -(i as f32)]).collect();
        let v = vectorize(&segment(&accel), &WindowSpec::new(10));
        assert!(v.values.iter().skip(1).step_by(3).all(|&y| y == 0.0));
    }

    #[test]
    fn fit_window_takes_longest() {
        let segs: Vec<_> = [300usize, 512, 1500]
            .iter()
            .map(|&n| segment(&vec![[0.0; 3]; n]))
            .collect();
        assert_eq!(fit_window(&segs).unwrap().timesteps, 1500);
        assert_eq!(fit_window(&segs[..1]).unwrap().timesteps, 300);
        assert_eq!(fit_window(&[segment(&[[0.0; 3]; 7])]).unwrap().timesteps, 7);
        assert!(matches!(fit_window(&[]), Err(WindowError::EmptyDataset)));
    }

    #[test]
    fn cache_round_trip() {
        let spec = WindowSpec::new(3);
        let seg = segment(&[[1., 2., 3.], [4., 5., 6.]]);
        let mut v = vectorize(&seg, &spec);
        v.session_id = "s-02".into();
        let mut neg = v.clone();
        neg.label = Label::NonMedication;
        neg.style = GestureStyle::Natural;
        let mut bytes = Vec::new();
        write_cache(&mut bytes, &spec, &[v.clone(), neg.clone()]).unwrap();
        let (spec2, back) = read_cache(&mut bytes.as_slice()).unwrap();
        assert_eq!(spec2, spec);
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].label, Label::NonMedication);
        assert_eq!(back[1].style, GestureStyle::Natural);
        assert_eq!(back[0].session_id, "s-02");
        for (a, b) in back[0].values.iter().zip(&v.values) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert!(matches!(
            read_cache(&mut &b"XXXX"[..]),
            Err(WindowError::BadCache(_))
        ));
    }

    fn axis_stats(values: &[f64], real: usize, axis: usize) -> (f64, f64) {
        let xs: Vec<f64> = values[..3 * real].iter().skip(axis).step_by(3).copied().collect();
        let mean = xs.iter().sum::<f64>() / real as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / real as f64;
        (mean, var.sqrt())
    }

    proptest! {
        #[test]
        fn output_width_is_fixed(len in 1usize..80, w in 1usize..60) {
            let accel: Vec<[f32; 3]> = (0..len).map(|i| [i as f32, 1.0, -2.0]).collect();
            let v = vectorize(&segment(&accel), &WindowSpec::new(w));
            prop_assert_eq!(v.values.len(), 3 * w);
            prop_assert!(v.values.iter().all(|x| x.is_finite()));
        }

        #[test]
        fn scaling_commutes_without_normalization(
            accel in proptest::collection::vec(proptest::array::uniform3(-20.0f32..20.0), 1..40),
            k in -4i32..=4,
        ) {
            let spec = WindowSpec::new(25).with_normalization(Normalization::None);
            let scale = 2f32.powi(k);
            let scaled: Vec<[f32; 3]> = accel.iter().map(|a| a.map(|v| v * scale)).collect();
            let base = vectorize(&segment(&accel), &spec);
            let big = vectorize(&segment(&scaled), &spec);
            for (a, b) in base.values.iter().zip(&big.values) {
                prop_assert_eq!(*b, *a * scale as f64);
            }
        }

        #[test]
        fn zscore_axes_are_standardized(
            accel in proptest::collection::vec(proptest::array::uniform3(-20.0f32..20.0), 2..40),
        ) {
            let real = accel.len().min(30);
            let v = vectorize(&segment(&accel), &WindowSpec::new(30));
            for axis in 0..3 {
                let (mean, std) = axis_stats(&v.values, real, axis);
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((std - 1.0).abs() < 1e-9 || std == 0.0);
            }
        }
    }
}
