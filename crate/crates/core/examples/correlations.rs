//! Pairwise R² between binarized attributes of a synthetic survey: a copy
//! of an attribute correlates perfectly, an independent one barely.

use std::collections::BTreeMap;

use motionleak::dataset::binarize;
use motionleak::stats::pairwise_r2;
use motionleak::synth::{generate_cohort, AttributePlan, CohortSpec, Signal};

fn main() -> anyhow::Result<()> {
    let mut spec = CohortSpec::single(5, 400, "Height", Signal::Height, 0.2);
    spec.recordings_per_user = 1;
    for (name, share) in [("Shoes", Some("Height")), ("Coin", None)] {
        spec.attributes.push(AttributePlan {
            name: name.into(),
            signal: Signal::None,
            effect: 0.0,
            share_class_with: share.map(String::from),
        });
    }
    let cohort = generate_cohort(&spec)?;
    let mut labels = BTreeMap::new();
    for attr in &cohort.attributes {
        let per_user = binarize(&cohort.survey, attr)?
            .into_iter()
            .filter_map(|(u, b)| b.label().map(|l| (u, l)))
            .collect::<BTreeMap<_, _>>();
        labels.insert(attr.name.clone(), per_user);
    }
    let m = pairwise_r2(&labels);
    print!("{}", m.to_tsv());
    println!("Height x Shoes = {:?}, Height x Coin = {:?}", m.get("Height", "Shoes"), m.get("Height", "Coin"));
    Ok(())
}
