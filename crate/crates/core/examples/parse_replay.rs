//! Parses a BSOR or canonical-text recording and prints a summary. Without
//! an argument, a synthetic recording is written to BSOR and read back.
//!
//!     cargo run --example parse_replay -- path/to/replay.bsor

use motionleak::synth::{generate_cohort, CohortSpec, Signal};
use motionleak::telemetry::{parse_bsor, read_canonical, write_bsor, write_canonical, Recording};

fn main() -> anyhow::Result<()> {
    let rec = match std::env::args().nth(1) {
        Some(path) => {
            let bytes = std::fs::read(&path)?;
            if path.ends_with(".bsor") {
                parse_bsor(&bytes)?
            } else {
                read_canonical(&bytes)?
            }
        }
        None => {
            let mut spec = CohortSpec::single(1, 1, "Height", Signal::Height, 0.0);
            spec.recordings_per_user = 1;
            let original = generate_cohort(&spec)?.recording(0, 0)?;
            let bytes = write_bsor(&original)?;
            println!("wrote {} BSOR bytes for {} frames", bytes.len(), original.frames.len());
            let back = parse_bsor(&bytes)?;
            assert_eq!(back, original);
            back
        }
    };
    summarize(&rec);
    let text = write_canonical(&rec)?;
    println!("canonical text: {} bytes; first lines:", text.len());
    for line in String::from_utf8_lossy(&text).lines().take(4) {
        println!("  {}", &line[..line.len().min(100)]);
    }
    Ok(())
}

fn summarize(rec: &Recording) {
    println!("recording {:?} by {:?}", rec.recording_id, rec.user_id);
    for (k, v) in &rec.metadata {
        println!("  {k} = {v}");
    }
    let (Some(first), Some(last)) = (rec.frames.first(), rec.frames.last()) else {
        println!("  no frames");
        return;
    };
    println!("  {} frames, {:.2}s to {:.2}s", rec.frames.len(), first.time, last.time);
    let mean_head_y = rec.frames.iter().map(|f| f.head.position[1] as f64).sum::<f64>() / rec.frames.len() as f64;
    println!("  mean head height {mean_head_y:.3} m");
    let violations = rec.validate();
    println!("  {} validation warning(s)", violations.len());
}
