//! Turns a recording into the fixed-size feature matrix a classifier sees:
//! 21 coordinates per frame, the most recent frames kept, zero padded.

use motionleak::featurizer::{featurize, featurize_with_len, FEATURE_WIDTH, SEQ_LEN};
use motionleak::synth::{generate_cohort, CohortSpec, Signal};

fn main() -> anyhow::Result<()> {
    let mut spec = CohortSpec::single(3, 1, "Height", Signal::Height, 0.0);
    spec.recordings_per_user = 2;
    spec.frames_min = 300;
    spec.frames_max = 1500;
    let cohort = generate_cohort(&spec)?;

    for r in 0..2 {
        let rec = cohort.recording(0, r)?;
        let fm = featurize(&rec)?;
        println!(
            "{}: {} frames -> {}x{} matrix, {} valid rows",
            rec.recording_id,
            rec.frames.len(),
            fm.rows(),
            fm.cols(),
            fm.valid_rows()
        );
        assert_eq!((fm.rows(), fm.cols()), (SEQ_LEN, FEATURE_WIDTH));
        let last = fm.valid_rows().saturating_sub(1);
        println!("  head xyz of row {last}: {:?}", &fm.row(last)[..3]);
        if fm.valid_rows() < fm.rows() {
            println!("  row {} is padding: {:?}", fm.rows() - 1, &fm.row(fm.rows() - 1)[..3]);
        }
    }

    let short = featurize_with_len(&cohort.recording(0, 0)?, 128)?;
    println!("desk-size window: {}x{}; text form starts with {:?}", short.rows(), short.cols(), short.to_text().lines().next());
    Ok(())
}
