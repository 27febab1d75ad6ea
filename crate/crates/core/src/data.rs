//! Records, study designs and threshold policies for sharp multi-cutoff RD data.
//!
//! Groups are identified internally by their rank in the ascending order of
//! baseline cutoffs ([`GroupId`] 0 holds the lowest cutoff). The labels found
//! in input files are kept on the [`StudyDesign`] for reporting.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rank of a group in cutoff-ascending order (0-based). Displays 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId(pub usize);

impl GroupId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0 + 1)
    }
}

/// Group labels with strictly increasing baseline cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyDesign {
    labels: Vec<String>,
    cutoffs: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignDocument {
    #[serde(default = "default_version")]
    version: u32,
    cutoffs: BTreeMap<String, f64>,
}

fn default_version() -> u32 {
    1
}

impl StudyDesign {
    /// Builds a design from `(label, cutoff)` pairs in any order.
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        let mut pairs: Vec<(String, f64)> = groups.into_iter().map(|(l, c)| (l.into(), c)).collect();
        if pairs.len() < 2 {
            return Err(Error::InvalidDesign(format!(
                "need at least 2 groups for cross-group extrapolation, got {}",
                pairs.len()
            )));
        }
        let mut seen = HashMap::new();
        for (label, cutoff) in &pairs {
            if !cutoff.is_finite() {
                return Err(Error::InvalidDesign(format!("cutoff for `{label}` is not finite")));
            }
            if seen.insert(label.clone(), ()).is_some() {
                return Err(Error::InvalidDesign(format!("duplicate group label `{label}`")));
            }
        }
        pairs.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        for w in pairs.windows(2) {
            if w[0].1 == w[1].1 {
                return Err(Error::TiedCutoffs {
                    first: w[0].0.clone(),
                    second: w[1].0.clone(),
                    cutoff: w[0].1,
                });
            }
        }
        let (labels, cutoffs) = pairs.into_iter().unzip();
        Ok(Self { labels, cutoffs })
    }

    /// Parses a design document:
    ///
    /// ```toml
    /// version = 1
    /// [cutoffs]
    /// "Magdalena" = -828
    /// "Distrito Capital" = -559
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: DesignDocument = toml::from_str(text)?;
        if doc.version != 1 {
            return Err(Error::InvalidDesign(format!(
                "unsupported design document version {}",
                doc.version
            )));
        }
        Self::new(doc.cutoffs)
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::from("version = 1\n\n[cutoffs]\n");
        for (label, cutoff) in self.labels.iter().zip(&self.cutoffs) {
            out.push_str(&format!("{} = {:?}\n", toml_key(label), cutoff));
        }
        out
    }

    pub fn num_groups(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn groups(&self) -> impl Iterator<Item = GroupId> + '_ {
        (0..self.cutoffs.len()).map(GroupId)
    }

    pub fn cutoff(&self, g: GroupId) -> f64 {
        self.cutoffs[g.0]
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn label(&self, g: GroupId) -> &str {
        &self.labels[g.0]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn group_by_label(&self, label: &str) -> Option<GroupId> {
        self.labels.iter().position(|l| l == label).map(GroupId)
    }

    pub fn lowest_cutoff(&self) -> f64 {
        self.cutoffs[0]
    }

    pub fn highest_cutoff(&self) -> f64 {
        *self.cutoffs.last().expect("design has at least two groups")
    }

    /// Baseline assignment 1(x >= c̃_g).
    pub fn baseline_treats(&self, x: f64, g: GroupId) -> bool {
        x >= self.cutoffs[g.0]
    }

    /// Index `j` of the cutoff interval holding `x`: `[c̃_j, c̃_{j+1})`, with the
    /// topmost interval closed on the right. `None` outside `[c̃_1, c̃_Q]`.
    pub fn interval_index(&self, x: f64) -> Option<usize> {
        let q = self.cutoffs.len();
        if !(x >= self.cutoffs[0] && x <= self.cutoffs[q - 1]) {
            return None;
        }
        // number of cutoffs <= x, minus one, capped at the top interval
        let above = self.cutoffs.partition_point(|&c| c <= x);
        Some((above - 1).min(q - 2))
    }
}

fn toml_key(label: &str) -> String {
    if !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        label.to_string()
    } else {
        serde_json::to_string(label).expect("string serializes")
    }
}

/// One observation of the running variable, group, treatment and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Record {
    pub x: f64,
    pub group: GroupId,
    pub treated: bool,
    pub y: f64,
}

impl Record {
    pub fn w(&self) -> u8 {
        self.treated as u8
    }
}

/// A validated collection of records under a study design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<Record>,
    design: StudyDesign,
    group_counts: Vec<usize>,
}

pub const DEFAULT_MIN_PER_GROUP: usize = 30;

impl Dataset {
    /// Validates records against the design: finite values, sharp assignment,
    /// and at least `min_per_group` records in every group.
    pub fn new(records: Vec<Record>, design: StudyDesign, min_per_group: usize) -> Result<Self> {
        let mut group_counts = vec![0usize; design.num_groups()];
        for (row, r) in records.iter().enumerate() {
            let line = row + 2;
            if r.group.0 >= design.num_groups() {
                return Err(Error::UnknownGroup {
                    label: r.group.to_string(),
                    line: Some(line),
                });
            }
            if !r.x.is_finite() {
                return Err(parse_err(line, "x", "value is not finite"));
            }
            if !r.y.is_finite() {
                return Err(parse_err(line, "y", "value is not finite"));
            }
            let cutoff = design.cutoff(r.group);
            if design.baseline_treats(r.x, r.group) != r.treated {
                return Err(Error::AssignmentViolation {
                    line,
                    group: design.label(r.group).to_string(),
                    x: r.x,
                    w: r.w(),
                    cutoff,
                });
            }
            group_counts[r.group.0] += 1;
        }
        for g in design.groups() {
            let count = group_counts[g.0];
            if count < min_per_group {
                return Err(Error::TooFewRecords {
                    group: design.label(g).to_string(),
                    count,
                    needed: min_per_group,
                });
            }
        }
        Ok(Self {
            records,
            design,
            group_counts,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn design(&self) -> &StudyDesign {
        &self.design
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn group_count(&self, g: GroupId) -> usize {
        self.group_counts[g.0]
    }

    /// Replaces every outcome by `u(y, w) = y - C·w`.
    pub fn with_utility(&self, utility: &UtilityConfig) -> Dataset {
        if utility.cost == 0.0 {
            return self.clone();
        }
        let records = self
            .records
            .iter()
            .map(|r| Record {
                y: apply_utility(r.y, r.treated, utility),
                ..*r
            })
            .collect();
        Dataset {
            records,
            design: self.design.clone(),
            group_counts: self.group_counts.clone(),
        }
    }
}

fn parse_err(line: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

/// CSV dialect and validation knobs for [`load_dataset`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub min_per_group: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            min_per_group: DEFAULT_MIN_PER_GROUP,
        }
    }
}

/// Reads delimiter-separated text with header columns `x, g, w, y`
/// (case-insensitive, any order, extra columns ignored).
pub fn load_dataset<R: Read>(source: R, design: &StudyDesign, options: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let (ix, ig, iw, iy) = (find("x")?, find("g")?, find("w")?, find("y")?);

    let mut records = Vec::new();
    for (row, result) in reader.records().enumerate() {
        let line = row + 2;
        let rec = result.map_err(|e| parse_err(line, "*", e.to_string()))?;
        let field = |i: usize, name: &str| -> Result<&str> {
            rec.get(i).ok_or_else(|| parse_err(line, name, "missing field"))
        };
        let number = |i: usize, name: &str| -> Result<f64> {
            let text = field(i, name)?;
            let v: f64 = text
                .parse()
                .map_err(|_| parse_err(line, name, format!("cannot parse `{text}` as a number")))?;
            if !v.is_finite() {
                return Err(parse_err(line, name, "value is not finite"));
            }
            Ok(v)
        };
        let x = number(ix, "x")?;
        let y = number(iy, "y")?;
        let label = field(ig, "g")?;
        let group = design.group_by_label(label).ok_or_else(|| Error::UnknownGroup {
            label: label.to_string(),
            line: Some(line),
        })?;
        let treated = match field(iw, "w")? {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(line, "w", format!("expected 0 or 1, got `{other}`"))),
        };
        records.push(Record { x, group, treated, y });
    }
    Dataset::new(records, design.clone(), options.min_per_group)
}

/// Writes the dataset in the same dialect [`load_dataset`] reads.
pub fn write_dataset<W: Write>(sink: W, dataset: &Dataset, delimiter: u8) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(sink);
    writer.write_record(["x", "g", "w", "y"])?;
    for r in dataset.records() {
        writer.write_record([
            r.x.to_string(),
            dataset.design().label(r.group).to_string(),
            r.w().to_string(),
            r.y.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Group-specific cutoffs defining `π(x, g) = 1(x >= c_g)`, restricted to
/// `[c̃_1, c̃_Q]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdPolicy {
    cutoffs: Vec<f64>,
}

impl ThresholdPolicy {
    pub fn new(design: &StudyDesign, cutoffs: Vec<f64>) -> Result<Self> {
        if cutoffs.len() != design.num_groups() {
            return Err(Error::InvalidPolicy(format!(
                "expected {} cutoffs, got {}",
                design.num_groups(),
                cutoffs.len()
            )));
        }
        let (lo, hi) = (design.lowest_cutoff(), design.highest_cutoff());
        for (g, &c) in cutoffs.iter().enumerate() {
            if !(c >= lo && c <= hi) {
                return Err(Error::InvalidPolicy(format!(
                    "cutoff {c} for group `{}` lies outside [{lo}, {hi}]",
                    design.label(GroupId(g))
                )));
            }
        }
        Ok(Self { cutoffs })
    }

    /// The status-quo rule `π̃(x, g) = 1(x >= c̃_g)`.
    pub fn baseline(design: &StudyDesign) -> Self {
        Self {
            cutoffs: design.cutoffs().to_vec(),
        }
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn cutoff(&self, g: GroupId) -> f64 {
        self.cutoffs[g.0]
    }

    pub fn num_groups(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn assign(&self, x: f64, g: GroupId) -> Result<bool> {
        match self.cutoffs.get(g.0) {
            Some(&c) => Ok(x >= c),
            None => Err(Error::UnknownGroup {
                label: g.to_string(),
                line: None,
            }),
        }
    }

    #[inline]
    pub fn treats(&self, x: f64, g: GroupId) -> bool {
        x >= self.cutoffs[g.0]
    }

    pub fn with_cutoff(&self, g: GroupId, c: f64) -> Self {
        let mut cutoffs = self.cutoffs.clone();
        cutoffs[g.0] = c;
        Self { cutoffs }
    }
}

/// Linear treatment cost `u(y, w) = y - C·w`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UtilityConfig {
    pub cost: f64,
}

impl UtilityConfig {
    pub fn new(cost: f64) -> Result<Self> {
        if !cost.is_finite() || cost < 0.0 {
            return Err(Error::InvalidConfig(format!("treatment cost must be finite and >= 0, got {cost}")));
        }
        Ok(Self { cost })
    }
}

pub fn apply_utility(y: f64, treated: bool, utility: &UtilityConfig) -> f64 {
    if treated {
        y - utility.cost
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_group() -> StudyDesign {
        StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap()
    }

    #[test]
    fn loads_consistent_rows() {
        let csv = "x,g,w,y\n0.5,1,1,2.0\n-0.5,1,0,1.0\n";
        let opts = LoadOptions {
            min_per_group: 0,
            ..Default::default()
        };
        let d = load_dataset(csv.as_bytes(), &two_group(), &opts).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.records()[1].y, 1.0);
        let strict = LoadOptions::default();
        assert!(matches!(
            load_dataset(csv.as_bytes(), &two_group(), &strict),
            Err(Error::TooFewRecords { .. })
        ));
    }

    #[test]
    fn rejects_assignment_violation() {
        let csv = "x,g,w,y\n0.5,1,0,2.0\n1.5,2,1,0.0\n";
        let opts = LoadOptions {
            min_per_group: 1,
            ..Default::default()
        };
        match load_dataset(csv.as_bytes(), &two_group(), &opts).unwrap_err() {
            Error::AssignmentViolation { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "x,w,y\n0.5,1,2.0\n";
        let err = load_dataset(csv.as_bytes(), &two_group(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("`g`"));
    }

    #[test]
    fn header_is_case_insensitive_and_delimiter_configurable() {
        let csv = "Y;W;G;X\n2.0;1;1;0.5\n0.0;1;2;1.5\n";
        let opts = LoadOptions {
            delimiter: b';',
            min_per_group: 1,
        };
        let d = load_dataset(csv.as_bytes(), &two_group(), &opts).unwrap();
        assert_eq!(d.records()[0].x, 0.5);
    }

    #[test]
    fn unknown_group_and_bad_numbers() {
        let opts = LoadOptions {
            min_per_group: 1,
            ..Default::default()
        };
        let err = load_dataset("x,g,w,y\n0.5,7,1,2\n".as_bytes(), &two_group(), &opts).unwrap_err();
        assert!(matches!(err, Error::UnknownGroup { line: Some(2), .. }));
        let err = load_dataset("x,g,w,y\nabc,1,1,2\n".as_bytes(), &two_group(), &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = load_dataset("x,g,w,y\n0.5,1,2,2\n".as_bytes(), &two_group(), &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        let err = load_dataset("x,g,w,y\n0.5,1,1,inf\n".as_bytes(), &two_group(), &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn design_sorting_ties_and_size() {
        let d = StudyDesign::new([("b", 1.0), ("a", 0.0), ("c", 2.0)]).unwrap();
        assert_eq!(d.labels(), ["a", "b", "c"]);
        assert!(matches!(
            StudyDesign::new([("a", 0.0), ("b", 0.0)]),
            Err(Error::TiedCutoffs { .. })
        ));
        assert!(StudyDesign::new([("a", 0.0)]).is_err());
        assert!(StudyDesign::new([("a", 0.0), ("b", f64::NAN)]).is_err());
    }

    #[test]
    fn design_document_roundtrip() {
        let text = "version = 1\n[cutoffs]\n\"Distrito Capital\" = -559\nMagdalena = -828\n";
        let d = StudyDesign::from_toml_str(text).unwrap();
        assert_eq!(d.label(GroupId(0)), "Magdalena");
        let again = StudyDesign::from_toml_str(&d.to_toml_string()).unwrap();
        assert_eq!(d, again);
        assert!(StudyDesign::from_toml_str("version = 2\n[cutoffs]\na=1\nb=2\n").is_err());
    }

    #[test]
    fn interval_index_partitions_range() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0), ("3", 2.0)]).unwrap();
        assert_eq!(d.interval_index(-0.1), None);
        assert_eq!(d.interval_index(0.0), Some(0));
        assert_eq!(d.interval_index(0.999), Some(0));
        assert_eq!(d.interval_index(1.0), Some(1));
        assert_eq!(d.interval_index(2.0), Some(1));
        assert_eq!(d.interval_index(2.1), None);
    }

    #[test]
    fn baseline_policy_matches_design() {
        let d = StudyDesign::new([("1", -850.0), ("2", -571.0)]).unwrap();
        let p = ThresholdPolicy::baseline(&d);
        assert_eq!(p.cutoffs(), &[-850.0, -571.0]);
        assert!(ThresholdPolicy::new(&d, p.cutoffs().to_vec()).is_ok());
        let d3 = StudyDesign::new([("1", 0.0), ("2", 1.0), ("3", 2.0)]).unwrap();
        assert_eq!(ThresholdPolicy::baseline(&d3).cutoffs(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn assign_examples() {
        let d = StudyDesign::new([("1", 0.0), ("2", 1.0)]).unwrap();
        let p = ThresholdPolicy::baseline(&d);
        assert!(p.assign(0.0, GroupId(0)).unwrap());
        assert!(!p.assign(-1e-9, GroupId(0)).unwrap());
        assert!(p.assign(0.0, GroupId(5)).is_err());

        let d = StudyDesign::new([("1", -850.0), ("2", -571.0)]).unwrap();
        let p = ThresholdPolicy::baseline(&d);
        assert!(!p.assign(-600.0, GroupId(1)).unwrap());
        assert!(p.assign(-600.0, GroupId(0)).unwrap());
        assert!(ThresholdPolicy::new(&d, vec![-900.0, -600.0]).is_err());
    }

    #[test]
    fn utility_examples() {
        let free = UtilityConfig::new(0.0).unwrap();
        assert_eq!(apply_utility(1.0, true, &free), 1.0);
        let c = UtilityConfig::new(0.8).unwrap();
        assert!((apply_utility(1.0, true, &c) - 0.2).abs() < 1e-15);
        assert_eq!(apply_utility(0.0, false, &UtilityConfig::new(0.5).unwrap()), 0.0);
        assert!(UtilityConfig::new(-1.0).is_err());
        assert!(UtilityConfig::new(f64::INFINITY).is_err());
    }

    #[test]
    fn acces_shaped_design_with_23_groups() {
        // lowest and highest cutoffs from the loan-program design
        let mut groups: Vec<(String, f64)> = (0..21).map(|i| (format!("dept{i:02}"), -800.0 + 10.0 * i as f64)).collect();
        groups.push(("Magdalena".into(), -828.0));
        groups.push(("Distrito Capital".into(), -559.0));
        let design = StudyDesign::new(groups).unwrap();
        assert_eq!(design.num_groups(), 23);
        let mut csv = String::from("x,g,w,y\n");
        for g in design.groups() {
            let c = design.cutoff(g);
            for k in 0..2 {
                let x = c - 5.0 + 10.0 * k as f64;
                csv.push_str(&format!("{x},{},{},0.5\n", design.label(g), (x >= c) as u8));
            }
        }
        let opts = LoadOptions {
            min_per_group: 2,
            ..Default::default()
        };
        let d = load_dataset(csv.as_bytes(), &design, &opts).unwrap();
        assert_eq!(d.design().num_groups(), 23);
        assert_eq!(d.design().label(GroupId(0)), "Magdalena");
        assert_eq!(d.design().label(GroupId(22)), "Distrito Capital");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn csv_roundtrip_and_baseline_consistency(
                raw in prop::collection::vec((-10.0f64..10.0, 0usize..3, -1e6f64..1e6), 3..60)
            ) {
                let design = StudyDesign::new([("a", -1.0), ("b", 0.5), ("c", 3.0)]).unwrap();
                let mut records: Vec<Record> = raw.iter().map(|&(x, g, y)| {
                    let group = GroupId(g);
                    Record { x, group, treated: design.baseline_treats(x, group), y }
                }).collect();
                for g in 0..3 {
                    records.push(Record { x: 0.0, group: GroupId(g), treated: design.baseline_treats(0.0, GroupId(g)), y: 1.0 });
                }
                let d = Dataset::new(records, design.clone(), 1).unwrap();
                let mut buf = Vec::new();
                write_dataset(&mut buf, &d, b',').unwrap();
                let back = load_dataset(buf.as_slice(), &design, &LoadOptions { min_per_group: 1, ..Default::default() }).unwrap();
                prop_assert_eq!(&back, &d);
                let baseline = ThresholdPolicy::baseline(&design);
                for r in back.records() {
                    prop_assert_eq!(baseline.assign(r.x, r.group).unwrap(), r.treated);
                }
            }

            #[test]
            fn utility_is_affine_and_monotone(y in -1e3f64..1e3, c1 in 0.0f64..10.0, c2 in 0.0f64..10.0) {
                let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
                let u = |c: f64, w: bool| apply_utility(y, w, &UtilityConfig { cost: c });
                prop_assert!(u(hi, true) <= u(lo, true));
                prop_assert_eq!(u(hi, false), u(lo, false));
                prop_assert_eq!(u(lo, false), y);
            }
        }
    }
}
