//! A complete desk-size experiment on a synthetic cohort: train and test
//! every attribute over Monte Carlo folds, then rerun the trained models on
//! fictitious input and test the difference across attributes.

use motionleak::experiment::{null_baseline, render_report, run_experiment, ExperimentConfig};

const COHORT: &str = r#"
seed = 11
users_per_class = 16
recordings_per_user = 10
frames_min = 150
frames_max = 400

[[attributes]]
name = "Height"
signal = "height"
effect = 0.28

[[attributes]]
name = "Coin"
signal = "none"
"#;

const EXPERIMENT: &str = r#"
seed = 1
folds = 2
preset = "desk"

[dataset]
cohort = "cohort.toml"

[protocol]
train_per_class = 80
test_users_per_class = 4
val_users_per_class = 4

[model]
epochs = 4
"#;

fn main() -> anyhow::Result<()> {
    let tmp = tempfile::tempdir()?;
    std::fs::write(tmp.path().join("cohort.toml"), COHORT)?;
    let exp = ExperimentConfig::from_toml_str(EXPERIMENT)?.resolve(tmp.path())?;
    let out = tmp.path().join("results");

    let summary = run_experiment(&exp, &out, 1)?;
    println!("{} fold job(s) trained", summary.trained);
    let null = null_baseline(&out, 0)?;
    print!("{}", render_report(&summary.results, Some(&null)));

    let again = run_experiment(&exp, &out, 1)?;
    println!("second run: {} trained, {} resumed from checkpoints", again.trained, again.resumed);
    Ok(())
}
