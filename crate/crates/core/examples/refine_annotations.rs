//! Compare raw button-mark spans with refined spans against the generator's
//! true gesture boundaries.

use std::error::Error;

use medsensor::annotate::{self, RefineParams, Span};
use medsensor::ingest::{self, GestureStyle, SampleSeries};
use medsensor::synth::{self, SessionParams, SynthStyle};

fn main() -> Result<(), Box<dyn Error>> {
    let params = SessionParams::default();
    let sig = synth::gen_participant(3);
    let session = synth::gen_session(&sig, GestureStyle::Protocol, 5, 4, &params)?;
    let series = SampleSeries::new("p01", "s01", ingest::DEFAULT_RATE_HZ, session.samples);

    let raw = annotate::pair_marks(&series, &session.marks).spans;
    let refined = annotate::extract_positives(&series, GestureStyle::Protocol, &session.marks, &RefineParams::default())?;
    let truth: Vec<Span> = session
        .truth
        .iter()
        .filter(|t| t.style == SynthStyle::Protocol)
        .map(|t| t.span)
        .collect();

    println!("{:>15} {:>15} {:>15}  jaccard raw / refined", "truth", "raw", "refined");
    for ((t, r), seg) in truth.iter().zip(&raw).zip(&refined.segments) {
        println!(
            "{:>15} {:>15} {:>15}  {:.3} / {:.3}",
            t.to_string(),
            r.to_string(),
            seg.span.to_string(),
            r.jaccard(t),
            seg.span.jaccard(t)
        );
    }
    println!("{} flagged", refined.flagged.len());
    Ok(())
}
