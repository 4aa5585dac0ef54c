//! Write one session archive, read it back and scan a store.

use std::error::Error;

use medsensor::ingest::{self, GestureStyle};
use medsensor::synth::{self, SessionParams};

fn main() -> Result<(), Box<dyn Error>> {
    let sig = synth::gen_participant(11);
    let session = synth::gen_session(&sig, GestureStyle::Protocol, 3, 12, &SessionParams::default())?;

    let archive = ingest::write_session_archive(&session.samples, &session.marks)?;
    let (series, marks) = ingest::load_session(&archive, "p01", "s01")?;
    println!(
        "archive {} bytes: {} samples ({:.1} s), {} marks",
        archive.len(),
        series.len(),
        series.len() as f64 / series.rate_hz,
        marks.len()
    );
    for m in &marks {
        println!("  {:>7} ms {}", m.t_ms, m.kind.as_str());
    }

    // Lay the archive out the way a store expects and scan it.
    let dir = tempfile::tempdir()?;
    let sessions = dir.path().join("p01").join(GestureStyle::Protocol.dir_name());
    std::fs::create_dir_all(&sessions)?;
    std::fs::write(sessions.join("s01.zip"), &archive)?;
    std::fs::write(dir.path().join("p01").join("notes.txt"), "not a session")?;

    let (index, warnings) = ingest::scan_store(dir.path())?;
    println!("scan: {} participants, {} sessions", index.participants.len(), index.session_count());
    for w in warnings {
        println!("  warning: {w}");
    }
    Ok(())
}
