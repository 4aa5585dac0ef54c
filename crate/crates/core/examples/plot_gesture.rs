//! Plot one gesture with its refined boundaries, and three gestures
//! superimposed.
//!
//! cargo run --example plot_gesture -- [OUT_DIR]

use std::error::Error;
use std::path::PathBuf;

use medsensor::annotate::{self, RefineParams};
use medsensor::ingest::{self, GestureStyle, SampleSeries};
use medsensor::plot::{self, PlotGesture};
use medsensor::synth::{self, SessionParams};

fn main() -> Result<(), Box<dyn Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    std::fs::create_dir_all(&out)?;

    let sig = synth::gen_participant(21);
    let session = synth::gen_session(&sig, GestureStyle::Natural, 3, 22, &SessionParams::default())?;
    let series = SampleSeries::new("p01", "s03", ingest::DEFAULT_RATE_HZ, session.samples);
    let found = annotate::extract_positives(&series, GestureStyle::Natural, &session.marks, &RefineParams::default())?;

    let names = ["gesture 1", "gesture 2", "gesture 3"];
    let first = found.segments[0].span;
    let context = series.samples_for(2.0);
    let lo = first.start().saturating_sub(context);
    let hi = (first.end() + context).min(series.len());
    let single = PlotGesture {
        name: names[0],
        samples: &series.samples[lo..hi],
        start: first.start() - lo,
        end: first.end() - lo,
    };
    let overlay: Vec<PlotGesture> = found
        .segments
        .iter()
        .zip(names)
        .map(|(seg, name)| PlotGesture { name, samples: &seg.samples, start: 0, end: seg.len() })
        .collect();

    let files = [
        ("gesture.svg", plot::single_svg(&single)),
        ("gesture.csv", plot::gestures_csv(&[single])),
        ("superimposed.svg", plot::superimposed_svg("three natural gestures", &overlay)),
        ("superimposed.csv", plot::gestures_csv(&overlay)),
    ];
    for (name, body) in files {
        let path = out.join(name);
        std::fs::write(&path, body)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
