//! Generates a synthetic cohort with one planted and one label-only
//! attribute and writes it to a directory (argument, or a temp dir).

use motionleak::dataset::Label;
use motionleak::synth::{generate_cohort, AttributePlan, CohortSpec, RecordingFormat, Signal};

fn main() -> anyhow::Result<()> {
    let mut spec = CohortSpec::single(42, 6, "Height", Signal::Height, 0.25);
    spec.recordings_per_user = 3;
    spec.attributes.push(AttributePlan {
        name: "Coin".into(),
        signal: Signal::None,
        effect: 0.0,
        share_class_with: None,
    });
    let cohort = generate_cohort(&spec)?;

    for label in Label::BOTH {
        let heights: Vec<f64> = cohort
            .users
            .iter()
            .filter(|u| u.labels["Height"] == label)
            .map(|u| u.profile.head_height)
            .collect();
        let mean = heights.iter().sum::<f64>() / heights.len() as f64;
        println!("Height class {label}: {} users, mean head height {mean:.3} m", heights.len());
    }

    let tmp;
    let dir = match std::env::args().nth(1) {
        Some(d) => std::path::PathBuf::from(d),
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    cohort.write_dir(&dir, RecordingFormat::Bsor)?;
    let files = std::fs::read_dir(dir.join("recordings"))?.count();
    println!("wrote {files} recordings, manifest.csv, survey.csv and attributes/ to {}", dir.display());
    println!("{}", std::fs::read_to_string(dir.join("survey.csv"))?.lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}
