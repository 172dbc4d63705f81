//! Edge-file parsing, canonicalization and group-size resolution.
//!
//! An edge file holds one directed sender/recipient aggregate per line:
//!
//! ```text
//! src,dest,msg,srcT,destT
//! 17,42,3,1,0
//! ```
//!
//! Fields may be comma- or tab-separated. A header row is optional; when
//! present, columns are matched by name and may appear in any order. Lines
//! starting with `#` are comments.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contrasts::{GroupSizes, Normalization};
use crate::error::{Error, Result};
use crate::estimators::AlphaBands;
use crate::permutation::PermutationMode;

pub const COLUMNS: [&str; 5] = ["src", "dest", "msg", "srcT", "destT"];

/// Messages sent from `src` to `dest` during the analysis window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: u64,
    pub dest: u64,
    pub msg: u64,
    pub src_treated: bool,
    pub dest_treated: bool,
}

impl EdgeRecord {
    pub fn new(src: u64, dest: u64, msg: u64, src_treated: bool, dest_treated: bool) -> Self {
        EdgeRecord {
            src,
            dest,
            msg,
            src_treated,
            dest_treated,
        }
    }

    /// Class index in TT, TC, CT, CC order.
    #[inline]
    pub fn class(&self) -> usize {
        (usize::from(!self.src_treated) << 1) | usize::from(!self.dest_treated)
    }
}

/// Settings for one experiment analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Treatment probability of the Bernoulli design.
    pub p: f64,
    /// Treated group size including members absent from the edge file.
    pub n_treated: Option<u64>,
    pub n_control: Option<u64>,
    pub seed: u64,
    pub iterations: u32,
    pub ci_level: f64,
    pub permutation_mode: PermutationMode,
    pub normalization: Normalization,
    /// Length of the data window, used only for report warnings.
    pub window_days: Option<u32>,
    pub alpha_bands: AlphaBands,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: 0.5,
            n_treated: None,
            n_control: None,
            seed: 0,
            iterations: 1000,
            ci_level: 0.90,
            permutation_mode: PermutationMode::Full,
            normalization: Normalization::Realized,
            window_days: None,
            alpha_bands: AlphaBands::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p must lie in (0, 1), got {}",
                self.p
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci_level must lie in (0, 1), got {}",
                self.ci_level
            )));
        }
        if self.n_treated.is_some() != self.n_control.is_some() {
            return Err(Error::InvalidConfig(
                "n_treated and n_control must be supplied together".into(),
            ));
        }
        self.alpha_bands.validate()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Delimiter {
    #[default]
    Auto,
    Comma,
    Tab,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum HeaderMode {
    /// Treat the first data line as a header when its first field is not an integer.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseOptions {
    pub delimiter: Delimiter,
    pub header: HeaderMode,
    /// Drop and count self-loops instead of failing.
    pub drop_self_loops: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    /// Data lines read, excluding header, comments and blank lines.
    pub lines: u64,
    /// Canonical records after merging duplicate pairs.
    pub records: u64,
    pub distinct_members: u64,
    pub distinct_senders: u64,
    pub distinct_recipients: u64,
    pub treated_members: u64,
    pub control_members: u64,
    pub dropped_lines: u64,
    pub dropped_messages: u64,
    pub total_messages: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedEdges {
    pub edges: Vec<EdgeRecord>,
    pub summary: IngestSummary,
}

impl ParsedEdges {
    /// Builds canonical edges from in-memory records, one record per line.
    pub fn from_records(records: Vec<EdgeRecord>) -> Result<Self> {
        if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.src == r.dest) {
            return Err(Error::SelfLoop {
                line: i + 1,
                member: r.src,
            });
        }
        let lines = records.len() as u64;
        let edges = canonicalize(records)?;
        let mut summary = summarize(&edges)?;
        summary.lines = lines;
        Ok(ParsedEdges { edges, summary })
    }
}

pub fn parse_edge_file(path: impl AsRef<Path>, options: ParseOptions) -> Result<ParsedEdges> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_edges(BufReader::new(file), options).map_err(|e| match e {
        Error::Io { source, .. } => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn parse_edges<R: BufRead>(reader: R, options: ParseOptions) -> Result<ParsedEdges> {
    let mut layout: Option<(u8, [usize; 5])> = None;
    let mut raw = Vec::new();
    let mut lines = 0u64;
    let mut dropped_lines = 0u64;
    let mut dropped_messages = 0u64;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            path: Default::default(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }

        let (delim, order) = match layout {
            Some(l) => l,
            None => {
                let delim = match options.delimiter {
                    Delimiter::Comma => b',',
                    Delimiter::Tab => b'\t',
                    Delimiter::Auto if trimmed.contains('\t') => b'\t',
                    Delimiter::Auto => b',',
                };
                let first = trimmed.split(delim as char).next().unwrap_or("").trim();
                let is_header = match options.header {
                    HeaderMode::Present => true,
                    HeaderMode::Absent => false,
                    HeaderMode::Auto => first.parse::<i128>().is_err(),
                };
                if is_header {
                    layout = Some((delim, header_order(trimmed, delim)?));
                    continue;
                }
                let l = (delim, [0, 1, 2, 3, 4]);
                layout = Some(l);
                l
            }
        };

        lines += 1;
        let record = parse_line(trimmed, delim, &order, line_no)?;
        if record.src == record.dest {
            if options.drop_self_loops {
                dropped_lines += 1;
                dropped_messages += record.msg;
                continue;
            }
            return Err(Error::SelfLoop {
                line: line_no,
                member: record.src,
            });
        }
        raw.push(record);
    }

    let edges = canonicalize(raw)?;
    let mut summary = summarize(&edges)?;
    summary.lines = lines;
    summary.dropped_lines = dropped_lines;
    summary.dropped_messages = dropped_messages;
    Ok(ParsedEdges { edges, summary })
}

fn header_order(line: &str, delim: u8) -> Result<[usize; 5]> {
    let names: Vec<String> = line
        .split(delim as char)
        .map(|s| s.trim().to_ascii_lowercase())
        .collect();
    let mut order = [0usize; 5];
    for (slot, col) in order.iter_mut().zip(COLUMNS) {
        let want = col.to_ascii_lowercase();
        *slot = names
            .iter()
            .position(|n| *n == want)
            .ok_or_else(|| Error::MissingColumn(col.to_string()))?;
    }
    Ok(order)
}

fn parse_line(line: &str, delim: u8, order: &[usize; 5], line_no: usize) -> Result<EdgeRecord> {
    let fields: Vec<&str> = line.split(delim as char).map(str::trim).collect();
    let get = |i: usize| -> Result<&str> {
        fields
            .get(order[i])
            .copied()
            .ok_or_else(|| Error::Malformed {
                line: line_no,
                field: COLUMNS[i].to_string(),
                value: String::new(),
                reason: format!(
                    "expected at least {} fields, found {}",
                    order[i] + 1,
                    fields.len()
                ),
            })
    };
    let member = |i: usize| -> Result<u64> {
        let v = get(i)?;
        v.parse::<u64>().map_err(|e| Error::Malformed {
            line: line_no,
            field: COLUMNS[i].to_string(),
            value: v.to_string(),
            reason: e.to_string(),
        })
    };
    let flag = |i: usize| -> Result<bool> {
        let v = get(i)?;
        match v.to_ascii_lowercase().as_str() {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            _ => Err(Error::Malformed {
                line: line_no,
                field: COLUMNS[i].to_string(),
                value: v.to_string(),
                reason: "treatment flag must be 0 or 1".into(),
            }),
        }
    };

    let src = member(0)?;
    let dest = member(1)?;
    let msg_field = get(2)?;
    let msg = match msg_field.parse::<u64>() {
        Ok(m) => m,
        Err(e) => {
            if msg_field.parse::<i128>().is_ok_and(|v| v < 0) {
                return Err(Error::NegativeMessage {
                    line: line_no,
                    value: msg_field.to_string(),
                });
            }
            return Err(Error::Malformed {
                line: line_no,
                field: "msg".into(),
                value: msg_field.to_string(),
                reason: e.to_string(),
            });
        }
    };
    Ok(EdgeRecord::new(src, dest, msg, flag(3)?, flag(4)?))
}

/// Sorts by `(src, dest)`, sums duplicate pairs and checks that every member
/// carries a single treatment status across all records.
pub fn canonicalize(mut records: Vec<EdgeRecord>) -> Result<Vec<EdgeRecord>> {
    records.sort_unstable_by_key(|r| (r.src, r.dest));
    let mut out: Vec<EdgeRecord> = Vec::with_capacity(records.len());
    for r in records {
        match out.last_mut() {
            Some(last) if last.src == r.src && last.dest == r.dest => {
                if last.src_treated != r.src_treated {
                    return Err(Error::InconsistentTreatment { member: r.src });
                }
                if last.dest_treated != r.dest_treated {
                    return Err(Error::InconsistentTreatment { member: r.dest });
                }
                last.msg += r.msg;
            }
            _ => out.push(r),
        }
    }
    member_statuses(&out)?;
    Ok(out)
}

/// Treatment status of every member appearing in `edges`, keyed by id.
pub fn member_statuses(edges: &[EdgeRecord]) -> Result<BTreeMap<u64, bool>> {
    let mut status: HashMap<u64, bool> = HashMap::with_capacity(edges.len());
    for e in edges {
        for (member, treated) in [(e.src, e.src_treated), (e.dest, e.dest_treated)] {
            if *status.entry(member).or_insert(treated) != treated {
                return Err(Error::InconsistentTreatment { member });
            }
        }
    }
    Ok(status.into_iter().collect())
}

fn summarize(edges: &[EdgeRecord]) -> Result<IngestSummary> {
    let statuses = member_statuses(edges)?;
    let mut senders: Vec<u64> = edges.iter().map(|e| e.src).collect();
    senders.dedup();
    let mut recipients: Vec<u64> = edges.iter().map(|e| e.dest).collect();
    recipients.sort_unstable();
    recipients.dedup();
    let treated = statuses.values().filter(|t| **t).count() as u64;
    Ok(IngestSummary {
        lines: 0,
        records: edges.len() as u64,
        distinct_members: statuses.len() as u64,
        distinct_senders: senders.len() as u64,
        distinct_recipients: recipients.len() as u64,
        treated_members: treated,
        control_members: statuses.len() as u64 - treated,
        dropped_lines: 0,
        dropped_messages: 0,
        total_messages: edges.iter().map(|e| e.msg).sum(),
    })
}

/// Writes edges in the canonical file format, header included.
pub fn write_edges<W: Write>(mut out: W, edges: &[EdgeRecord]) -> Result<()> {
    writeln!(out, "{}", COLUMNS.join(",")).map_err(Error::Write)?;
    for e in edges {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.src,
            e.dest,
            e.msg,
            u8::from(e.src_treated),
            u8::from(e.dest_treated)
        )
        .map_err(Error::Write)?;
    }
    out.flush().map_err(Error::Write)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedSizes {
    pub sizes: GroupSizes,
    pub observed: GroupSizes,
    /// Sizes came from the edges alone, so members who never sent or
    /// received a message are not counted.
    pub silent_uncounted: bool,
}

pub fn resolve_group_sizes(
    edges: &[EdgeRecord],
    config: &ExperimentConfig,
) -> Result<ResolvedSizes> {
    let statuses = member_statuses(edges)?;
    let treated = statuses.values().filter(|t| **t).count() as u64;
    let observed = GroupSizes {
        treated,
        control: statuses.len() as u64 - treated,
    };
    match (config.n_treated, config.n_control) {
        (Some(t), Some(c)) => {
            if t < observed.treated {
                return Err(Error::GroupSizeTooSmall {
                    group: "treated",
                    supplied: t,
                    observed: observed.treated,
                });
            }
            if c < observed.control {
                return Err(Error::GroupSizeTooSmall {
                    group: "control",
                    supplied: c,
                    observed: observed.control,
                });
            }
            Ok(ResolvedSizes {
                sizes: GroupSizes {
                    treated: t,
                    control: c,
                },
                observed,
                silent_uncounted: false,
            })
        }
        (None, None) => Ok(ResolvedSizes {
            sizes: observed,
            observed,
            silent_uncounted: true,
        }),
        _ => Err(Error::InvalidConfig(
            "n_treated and n_control must be supplied together".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParsedEdges> {
        parse_edges(text.as_bytes(), ParseOptions::default())
    }

    #[test]
    fn maps_fields_directly() {
        let parsed = parse("17,42,3,1,0\n").unwrap();
        assert_eq!(parsed.edges, vec![EdgeRecord::new(17, 42, 3, true, false)]);
        assert_eq!(parsed.summary.lines, 1);
    }

    #[test]
    fn merges_duplicate_pairs() {
        let parsed = parse("1,2,3,1,0\n1,2,4,1,0\n").unwrap();
        assert_eq!(parsed.edges, vec![EdgeRecord::new(1, 2, 7, true, false)]);
        assert_eq!(parsed.summary.total_messages, 7);
        assert_eq!(parsed.summary.records, 1);
    }

    #[test]
    fn self_loop_names_its_line() {
        let err = parse("# fixture\n1,2,1,1,0\n5,5,1,1,1\n").unwrap_err();
        match err {
            Error::SelfLoop { line, member } => {
                assert_eq!(line, 3);
                assert_eq!(member, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn permissive_mode_drops_self_loops() {
        let opts = ParseOptions {
            drop_self_loops: true,
            ..Default::default()
        };
        let parsed = parse_edges("1,2,1,1,0\n5,5,4,1,1\n".as_bytes(), opts).unwrap();
        assert_eq!(parsed.edges.len(), 1);
        assert_eq!(parsed.summary.dropped_lines, 1);
        assert_eq!(parsed.summary.dropped_messages, 4);
        assert_eq!(parsed.summary.lines, 2);
    }

    #[test]
    fn rejects_negative_and_malformed_counts() {
        assert!(matches!(
            parse("1,2,-3,1,0\n").unwrap_err(),
            Error::NegativeMessage { line: 1, .. }
        ));
        match parse("1,2,3,1,0\n1,x,3,1,0\n").unwrap_err() {
            Error::Malformed { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "dest");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse("1,2,3,2,0\n").unwrap_err(),
            Error::Malformed { .. }
        ));
        assert!(matches!(
            parse("1,2,3\n").unwrap_err(),
            Error::Malformed { .. }
        ));
    }

    #[test]
    fn inconsistent_flags_name_the_member() {
        let err = parse("1,2,1,1,0\n3,1,1,0,0\n").unwrap_err();
        assert!(matches!(err, Error::InconsistentTreatment { member: 1 }));
    }

    #[test]
    fn header_columns_may_be_reordered() {
        let text = "dest\tsrc\tdestT\tsrcT\tmsg\n42\t17\t0\t1\t3\n";
        let parsed = parse(text).unwrap();
        assert_eq!(parsed.edges, vec![EdgeRecord::new(17, 42, 3, true, false)]);

        assert!(matches!(
            parse("src,dest,msg,srcT\n").unwrap_err(),
            Error::MissingColumn(c) if c == "destT"
        ));
    }

    #[test]
    fn zero_message_rows_are_kept() {
        let parsed = parse("1,2,0,1,0\n").unwrap();
        assert_eq!(parsed.edges[0].msg, 0);
        assert_eq!(parsed.summary.distinct_members, 2);
    }

    #[test]
    fn summary_counts_roles() {
        let parsed = parse("1,2,3,1,1\n1,3,2,1,0\n2,4,0,1,0\n3,1,1,0,1\n3,4,5,0,0\n").unwrap();
        let s = parsed.summary;
        assert_eq!(s.distinct_members, 4);
        assert_eq!(s.distinct_senders, 3);
        assert_eq!(s.distinct_recipients, 4);
        assert_eq!((s.treated_members, s.control_members), (2, 2));
        assert_eq!(s.total_messages, 11);
    }

    #[test]
    fn group_sizes_pass_through_or_fall_back() {
        let edges = parse("1,3,1,1,0\n2,4,1,1,0\n").unwrap().edges;
        let mut config = ExperimentConfig {
            n_treated: Some(1000),
            n_control: Some(1000),
            ..Default::default()
        };
        let r = resolve_group_sizes(&edges, &config).unwrap();
        assert_eq!(r.sizes, GroupSizes::new(1000, 1000));
        assert!(!r.silent_uncounted);

        config.n_treated = None;
        config.n_control = None;
        let r = resolve_group_sizes(&edges, &config).unwrap();
        assert_eq!(r.sizes, GroupSizes::new(2, 2));
        assert!(r.silent_uncounted);

        config.n_treated = Some(1);
        config.n_control = Some(1000);
        assert!(matches!(
            resolve_group_sizes(&edges, &config).unwrap_err(),
            Error::GroupSizeTooSmall {
                group: "treated",
                supplied: 1,
                observed: 2
            }
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        for bad in [
            ExperimentConfig {
                p: 0.0,
                ..Default::default()
            },
            ExperimentConfig {
                p: 1.0,
                ..Default::default()
            },
            ExperimentConfig {
                iterations: 0,
                ..Default::default()
            },
            ExperimentConfig {
                ci_level: 1.0,
                ..Default::default()
            },
            ExperimentConfig {
                n_treated: Some(3),
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }
}
