//! Turn variable-length gestures into fixed-width vectors and round-trip
//! them through the cache format.

use std::error::Error;

use medsensor::annotate::{GestureSegment, Label};
use medsensor::ingest::GestureStyle;
use medsensor::synth::{self, SynthStyle};
use medsensor::window::{self, WindowSpec};

fn main() -> Result<(), Box<dyn Error>> {
    let sig = synth::gen_participant(5);
    let segments: Vec<GestureSegment> = (0..4)
        .map(|k| {
            let g = synth::gen_gesture(&sig, SynthStyle::Natural, 100 + k, 25.0);
            GestureSegment {
                participant_id: "p01".into(),
                session_id: "s01".into(),
                style: GestureStyle::Natural,
                label: Label::Medication,
                span: g.span,
                samples: g.samples,
            }
        })
        .collect();
    for s in &segments {
        println!("gesture of {} samples", s.len());
    }

    let fitted = window::fit_window(&segments)?;
    let spec = WindowSpec::new(500);
    println!("fitted window: {} timesteps; using {}", fitted.timesteps, spec.timesteps);
    let vectors: Vec<_> = segments.iter().map(|s| window::vectorize(s, &spec)).collect();
    println!("vector width {} (3 x {})", vectors[0].values.len(), spec.timesteps);

    let mut bytes = Vec::new();
    window::write_cache(&mut bytes, &spec, &vectors)?;
    let (back_spec, back) = window::read_cache(&mut bytes.as_slice())?;
    let max_err = vectors
        .iter()
        .zip(&back)
        .flat_map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    println!(
        "cache: {} bytes, spec preserved {}, max f32 rounding error {max_err:.2e}",
        bytes.len(),
        back_spec == spec
    );
    Ok(())
}
