use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetError, Label, SurveyTable};

fn yes() -> bool {
    true
}

fn default_separator() -> String {
    ";".into()
}

/// A matching rule for one class of an attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Rule {
    /// The trimmed answer equals one of `values`.
    Categorical { values: BTreeSet<String> },
    /// The answer parses as a number inside the interval. Ends default to
    /// `[min, max)`; an absent end is unbounded.
    Interval {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default = "yes")]
        min_inclusive: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
        #[serde(default)]
        max_inclusive: bool,
    },
    /// A "select all that apply" answer split on `separator`: at least one
    /// selection from `any_of` (if given) and none from `none_of`.
    Multiselect {
        #[serde(default = "default_separator")]
        separator: String,
        #[serde(default)]
        any_of: BTreeSet<String>,
        #[serde(default)]
        none_of: BTreeSet<String>,
    },
    /// Conjunction of rules over several survey columns.
    Predicate { all: Vec<Clause> },
}

/// One conjunct of a predicate rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub column: String,
    #[serde(flatten)]
    pub rule: Rule,
}

impl Rule {
    pub fn categorical<I: IntoIterator<Item = S>, S: Into<String>>(values: I) -> Self {
        Rule::Categorical {
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    /// `value < max`
    pub fn below(max: f64) -> Self {
        Rule::Interval {
            min: None,
            min_inclusive: true,
            max: Some(max),
            max_inclusive: false,
        }
    }

    /// `value ≥ min`
    pub fn at_least(min: f64) -> Self {
        Rule::Interval {
            min: Some(min),
            min_inclusive: true,
            max: None,
            max_inclusive: false,
        }
    }

    fn check(&self, nested: bool) -> Result<(), String> {
        match self {
            Rule::Categorical { values } if values.is_empty() => Err("categorical rule has no values".into()),
            Rule::Categorical { .. } => Ok(()),
            Rule::Interval { min, max, min_inclusive, max_inclusive } => {
                if min.is_none() && max.is_none() {
                    return Err("interval rule needs `min` or `max`".into());
                }
                if min.is_some_and(|v| !v.is_finite()) || max.is_some_and(|v| !v.is_finite()) {
                    return Err("interval bounds must be finite".into());
                }
                if let (Some(lo), Some(hi)) = (min, max) {
                    if lo > hi || (lo == hi && !(*min_inclusive && *max_inclusive)) {
                        return Err(format!("interval [{lo}, {hi}] is empty"));
                    }
                }
                Ok(())
            }
            Rule::Multiselect { separator, any_of, none_of } => {
                if separator.is_empty() {
                    return Err("multiselect separator is empty".into());
                }
                if any_of.is_empty() && none_of.is_empty() {
                    return Err("multiselect rule needs `any_of` or `none_of`".into());
                }
                if !any_of.is_disjoint(none_of) {
                    return Err("multiselect `any_of` and `none_of` overlap".into());
                }
                Ok(())
            }
            Rule::Predicate { .. } if nested => Err("predicates cannot be nested".into()),
            Rule::Predicate { all } if all.is_empty() => Err("predicate has no clauses".into()),
            Rule::Predicate { all } => all.iter().try_for_each(|c| c.rule.check(true)),
        }
    }

    /// The rule as (column, single-column rule) conjuncts.
    fn clauses<'a>(&'a self, column: &'a str) -> Vec<(&'a str, &'a Rule)> {
        match self {
            Rule::Predicate { all } => all.iter().map(|c| (c.column.as_str(), &c.rule)).collect(),
            r => vec![(column, r)],
        }
    }

    fn matches(&self, raw: &str) -> Result<bool, ()> {
        let raw = raw.trim();
        Ok(match self {
            Rule::Categorical { values } => values.contains(raw),
            Rule::Interval { min, min_inclusive, max, max_inclusive } => {
                let x: f64 = raw.parse().map_err(|_| ())?;
                if !x.is_finite() {
                    return Err(());
                }
                let lo_ok = min.map_or(true, |lo| if *min_inclusive { x >= lo } else { x > lo });
                let hi_ok = max.map_or(true, |hi| if *max_inclusive { x <= hi } else { x < hi });
                lo_ok && hi_ok
            }
            Rule::Multiselect { separator, any_of, none_of } => {
                let picks: BTreeSet<&str> = raw
                    .split(separator.as_str())
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .collect();
                (any_of.is_empty() || any_of.iter().any(|v| picks.contains(v.as_str())))
                    && !none_of.iter().any(|v| picks.contains(v.as_str()))
            }
            Rule::Predicate { .. } => unreachable!("predicates are expanded into clauses"),
        })
    }
}

/// Whether two single-column rules can never both match one answer.
fn provably_disjoint(a: &Rule, b: &Rule) -> bool {
    use Rule::*;
    match (a, b) {
        (Categorical { values: x }, Categorical { values: y }) => x.is_disjoint(y),
        (Interval { .. }, Interval { .. }) => intervals_disjoint(a, b),
        (Categorical { values }, i @ Interval { .. }) | (i @ Interval { .. }, Categorical { values }) => {
            // Categories that do not parse as numbers can never satisfy the interval.
            values.iter().all(|v| i.matches(v) != Ok(true))
        }
        (
            Multiselect { separator: s1, any_of: a1, none_of: n1 },
            Multiselect { separator: s2, any_of: a2, none_of: n2 },
        ) => s1 == s2 && ((!a1.is_empty() && a1.is_subset(n2)) || (!a2.is_empty() && a2.is_subset(n1))),
        _ => false,
    }
}

fn intervals_disjoint(a: &Rule, b: &Rule) -> bool {
    let (Rule::Interval { min: amin, min_inclusive: amini, max: amax, max_inclusive: amaxi }, Rule::Interval { min: bmin, min_inclusive: bmini, max: bmax, max_inclusive: bmaxi }) = (a, b) else {
        return false;
    };
    // `a` entirely below `b`, or the reverse.
    let below = |hi: Option<f64>, hi_inc: bool, lo: Option<f64>, lo_inc: bool| match (hi, lo) {
        (Some(h), Some(l)) => h < l || (h == l && !(hi_inc && lo_inc)),
        _ => false,
    };
    below(*amax, *amaxi, *bmin, *bmini) || below(*bmax, *bmaxi, *amin, *amini)
}

/// A named binarization rule: class A, class B, everything else rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    /// Survey column read by non-predicate rules; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub class_a: Rule,
    pub class_b: Rule,
}

impl AttributeSpec {
    /// Builds and validates a spec whose rules read `column` (or `name`).
    pub fn new(name: &str, column: Option<&str>, class_a: Rule, class_b: Rule) -> Result<Self, DatasetError> {
        let spec = Self {
            name: name.to_string(),
            column: column.map(str::to_string),
            units: None,
            description: None,
            class_a,
            class_b,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn column(&self) -> &str {
        self.column.as_deref().unwrap_or(&self.name)
    }

    /// Checks each rule and proves the two classes disjoint; a pair whose
    /// disjointness cannot be shown is rejected.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: String| DatasetError::InvalidSpec {
            name: self.name.clone(),
            reason,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        self.class_a.check(false).map_err(|r| invalid(format!("class_a: {r}")))?;
        self.class_b.check(false).map_err(|r| invalid(format!("class_b: {r}")))?;
        let a = self.class_a.clauses(self.column());
        let b = self.class_b.clauses(self.column());
        let disjoint = a
            .iter()
            .any(|(ca, ra)| b.iter().any(|(cb, rb)| ca == cb && provably_disjoint(ra, rb)));
        if !disjoint {
            return Err(invalid("cannot prove class_a and class_b disjoint".into()));
        }
        Ok(())
    }

    /// Every survey column either rule reads, sorted.
    pub fn columns(&self) -> BTreeSet<&str> {
        self.class_a
            .clauses(self.column())
            .into_iter()
            .chain(self.class_b.clauses(self.column()))
            .map(|(c, _)| c)
            .collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DatasetError> {
        let spec: Self = toml::from_str(text).map_err(|e| DatasetError::InvalidSpec {
            name: "<toml>".into(),
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("attribute spec serializes")
    }

    pub fn from_path(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            DatasetError::InvalidSpec { name, reason } => DatasetError::InvalidSpec {
                name: format!("{name} ({})", path.display()),
                reason,
            },
            e => e,
        })
    }

    /// Loads every `*.toml` in `dir`, sorted by attribute name.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, DatasetError> {
        let mut specs = Vec::new();
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        entries.sort();
        for p in entries {
            specs.push(Self::from_path(&p)?);
        }
        specs.sort_by(|a, b| a.name.cmp(&b.name));
        if let Some(w) = specs.windows(2).find(|w| w[0].name == w[1].name) {
            return Err(DatasetError::InvalidSpec {
                name: w[0].name.clone(),
                reason: "defined twice".into(),
            });
        }
        Ok(specs)
    }
}

/// Outcome of binarizing one user's answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binarized {
    A,
    B,
    Rejected,
    Missing,
}

impl Binarized {
    pub fn label(self) -> Option<Label> {
        match self {
            Binarized::A => Some(Label::A),
            Binarized::B => Some(Label::B),
            _ => None,
        }
    }
}

/// Maps every user in `table` to a class. A user missing any column the
/// rules read is `Missing`; answers matching neither class are `Rejected`.
pub fn binarize(table: &SurveyTable, spec: &AttributeSpec) -> Result<BTreeMap<String, Binarized>, DatasetError> {
    let columns = spec.columns();
    for c in &columns {
        if !table.has_column(c) {
            return Err(DatasetError::UnknownColumn {
                attribute: spec.name.clone(),
                column: c.to_string(),
            });
        }
    }
    let a = spec.class_a.clauses(spec.column());
    let b = spec.class_b.clauses(spec.column());
    let mut out = BTreeMap::new();
    for user in table.users() {
        if columns.iter().any(|c| table.get(user, c).is_none()) {
            out.insert(user.to_string(), Binarized::Missing);
            continue;
        }
        let eval = |clauses: &[(&str, &Rule)]| -> Result<bool, DatasetError> {
            for (col, rule) in clauses {
                let raw = table.get(user, col).expect("checked above");
                match rule.matches(raw) {
                    Ok(true) => {}
                    Ok(false) => return Ok(false),
                    Err(()) => {
                        return Err(DatasetError::UnparsableValue {
                            attribute: spec.name.clone(),
                            user: user.to_string(),
                            column: col.to_string(),
                            value: raw.to_string(),
                        })
                    }
                }
            }
            Ok(true)
        };
        let class = match (eval(&a)?, eval(&b)?) {
            (true, false) => Binarized::A,
            (false, true) => Binarized::B,
            (false, false) => Binarized::Rejected,
            (true, true) => unreachable!("disjointness is proven at construction"),
        };
        out.insert(user.to_string(), class);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn height() -> AttributeSpec {
        AttributeSpec::new("Height", None, Rule::below(1.70), Rule::at_least(1.90)).unwrap()
    }

    fn table(col: &str, vals: &[(&str, Option<&str>)]) -> SurveyTable {
        let mut t = SurveyTable::new([col]);
        for (u, v) in vals {
            t.set(u, col, *v);
        }
        t
    }

    #[test]
    fn height_rejection_band() {
        let t = table(
            "Height",
            &[("a", Some("1.60")), ("b", Some("1.95")), ("c", Some("1.75")), ("d", Some("1.90")), ("e", None)],
        );
        let m = binarize(&t, &height()).unwrap();
        assert_eq!(m["a"], Binarized::A);
        assert_eq!(m["b"], Binarized::B);
        assert_eq!(m["c"], Binarized::Rejected);
        assert_eq!(m["d"], Binarized::B);
        assert_eq!(m["e"], Binarized::Missing);
    }

    #[test]
    fn categorical_other_is_rejected() {
        let spec = AttributeSpec::new("Sex", None, Rule::categorical(["Male"]), Rule::categorical(["Female"])).unwrap();
        let t = table("Sex", &[("u", Some("Other")), ("v", Some(" Female "))]);
        let m = binarize(&t, &spec).unwrap();
        assert_eq!(m["u"], Binarized::Rejected);
        assert_eq!(m["v"], Binarized::B);
    }

    #[test]
    fn non_numeric_answer_errors() {
        let t = table("Height", &[("u", Some("tall"))]);
        assert!(matches!(binarize(&t, &height()), Err(DatasetError::UnparsableValue { .. })));
    }

    #[test]
    fn overlapping_rules_are_rejected() {
        assert!(AttributeSpec::new("X", None, Rule::below(2.0), Rule::at_least(1.5)).is_err());
        assert!(AttributeSpec::new("X", None, Rule::categorical(["a", "b"]), Rule::categorical(["b"])).is_err());
        // Touching at a shared closed end overlaps.
        let closed = Rule::Interval { min: None, min_inclusive: true, max: Some(1.0), max_inclusive: true };
        assert!(AttributeSpec::new("X", None, closed, Rule::at_least(1.0)).is_err());
        assert!(AttributeSpec::new("X", None, Rule::below(1.0), Rule::at_least(1.0)).is_ok());
    }

    #[test]
    fn numeric_categories_against_interval() {
        let cores = AttributeSpec::new("Cores", None, Rule::categorical(["4", "6", "8"]), Rule::at_least(16.0)).unwrap();
        let t = table("Cores", &[("u", Some("6")), ("v", Some("32")), ("w", Some("12"))]);
        let m = binarize(&t, &cores).unwrap();
        assert_eq!((m["u"], m["v"], m["w"]), (Binarized::A, Binarized::B, Binarized::Rejected));
        assert!(AttributeSpec::new("C", None, Rule::categorical(["16"]), Rule::at_least(16.0)).is_err());
    }

    #[test]
    fn multiselect_exclusive_sets() {
        let text = r#"
name = "Athletics"
[class_a]
kind = "multiselect"
any_of = ["Tennis", "Badminton"]
none_of = ["Track"]
[class_b]
kind = "multiselect"
any_of = ["Track"]
none_of = ["Tennis", "Badminton"]
"#;
        let spec = AttributeSpec::from_toml_str(text).unwrap();
        let t = table(
            "Athletics",
            &[("a", Some("Soccer; Tennis")), ("b", Some("Track")), ("c", Some("Track;Tennis")), ("d", Some("Golf"))],
        );
        let m = binarize(&t, &spec).unwrap();
        assert_eq!(
            (m["a"], m["b"], m["c"], m["d"]),
            (Binarized::A, Binarized::B, Binarized::Rejected, Binarized::Rejected)
        );
        let overlapping = text.replace("none_of = [\"Track\"]\n", "");
        let overlapping = overlapping.replacen("none_of = [\"Tennis\", \"Badminton\"]\n", "", 1);
        assert!(AttributeSpec::from_toml_str(&overlapping).is_err());
    }

    #[test]
    fn predicate_over_two_columns() {
        let text = r#"
name = "ArmLength"
[class_a]
kind = "predicate"
all = [
  { column = "LeftArm", kind = "interval", max = 0.60 },
  { column = "RightArm", kind = "interval", max = 0.60 },
]
[class_b]
kind = "predicate"
all = [
  { column = "LeftArm", kind = "interval", min = 0.80 },
  { column = "RightArm", kind = "interval", min = 0.80 },
]
"#;
        let spec = AttributeSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.columns().into_iter().collect::<Vec<_>>(), ["LeftArm", "RightArm"]);
        let mut t = SurveyTable::new(["LeftArm", "RightArm"]);
        for (u, l, r) in [("a", "0.55", "0.58"), ("b", "0.85", "0.81"), ("c", "0.55", "0.85")] {
            t.set(u, "LeftArm", Some(l));
            t.set(u, "RightArm", Some(r));
        }
        t.set("d", "LeftArm", Some("0.5"));
        let m = binarize(&t, &spec).unwrap();
        assert_eq!(
            (m["a"], m["b"], m["c"], m["d"]),
            (Binarized::A, Binarized::B, Binarized::Rejected, Binarized::Missing)
        );
    }

    #[test]
    fn unknown_column_and_unprovable_predicates() {
        let t = table("Other", &[("u", Some("1"))]);
        assert!(matches!(binarize(&t, &height()), Err(DatasetError::UnknownColumn { .. })));
        let a = Rule::Predicate { all: vec![Clause { column: "X".into(), rule: Rule::below(1.0) }] };
        let b = Rule::Predicate { all: vec![Clause { column: "Y".into(), rule: Rule::at_least(2.0) }] };
        assert!(AttributeSpec::new("P", None, a, b).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let spec = height();
        assert_eq!(AttributeSpec::from_toml_str(&spec.to_toml_string()).unwrap(), spec);
    }
}
