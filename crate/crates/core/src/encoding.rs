//! Category-sequence encoding of a notebook.
//!
//! Calls are mapped through the catalog in linear, innermost-first order with
//! notebook-defined functions spliced at their call sites. The resulting unit
//! list can then be run-collapsed, segmented at load/output boundaries, and
//! scanned for repeated subsequences.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, CategoryCode, CategoryGroup};
use crate::extract::{collect_definitions, extract_items, resolve_aliases, CallOrigin, CellItem};
use crate::notebook::Notebook;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnitSource {
    Call,
    ImportStatement,
    SplicedDefinition,
}

/// Source position range, `first ≤ last` in (cell, line) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub first_cell: usize,
    pub first_line: usize,
    pub last_cell: usize,
    pub last_line: usize,
}

impl Span {
    pub fn new(cell: usize, first_line: usize, last_line: usize) -> Self {
        Self {
            first_cell: cell,
            first_line,
            last_cell: cell,
            last_line,
        }
    }

    pub fn cover(&self, other: &Span) -> Span {
        let (first_cell, first_line) =
            (self.first_cell, self.first_line).min((other.first_cell, other.first_line));
        let (last_cell, last_line) =
            (self.last_cell, self.last_line).max((other.last_cell, other.last_line));
        Span {
            first_cell,
            first_line,
            last_cell,
            last_line,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedUnit {
    pub code: CategoryCode,
    pub span: Span,
    pub multiplicity: usize,
    pub source: UnitSource,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedNotebook {
    pub units: Vec<EncodedUnit>,
    /// Calls that missed the catalog, as (qualified name, cell index).
    pub unknown_calls: Vec<(String, usize)>,
}

impl EncodedNotebook {
    pub fn codes(&self) -> Vec<CategoryCode> {
        self.units.iter().map(|u| u.code).collect()
    }

    pub fn total_multiplicity(&self) -> usize {
        self.units.iter().map(|u| u.multiplicity).sum()
    }

    /// Units starting in cells `cells` (0-based, half-open), with the unknown
    /// calls of those cells.
    pub fn restrict_to_cells(&self, cells: Range<usize>) -> EncodedNotebook {
        EncodedNotebook {
            units: self
                .units
                .iter()
                .filter(|u| cells.contains(&u.span.first_cell))
                .cloned()
                .collect(),
            unknown_calls: self
                .unknown_calls
                .iter()
                .filter(|(_, c)| cells.contains(c))
                .cloned()
                .collect(),
        }
    }

    /// One JSON object per unit: `{"code":"PP3","mult":6,"cells":[4,9]}` with
    /// 1-based display cell numbers.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            out.push_str(&format!(
                "{{\"code\":\"{}\",\"mult\":{},\"cells\":[{},{}]}}\n",
                u.code,
                u.multiplicity,
                u.span.first_cell + 1,
                u.span.last_cell + 1
            ));
        }
        out
    }
}

/// Encodes every code cell in order. The result is not run-collapsed.
pub fn encode_notebook(nb: &Notebook, catalog: &Catalog) -> EncodedNotebook {
    let aliases = resolve_aliases(nb);
    let defs = collect_definitions(nb, &aliases);
    let mut enc = EncodedNotebook::default();
    let l1 = CategoryCode::new(CategoryGroup::L, 1).expect("L1 is valid");

    for cell in nb.code_cells() {
        for item in extract_items(cell, &aliases, &defs) {
            match item {
                CellItem::Import(stmt) => enc.units.push(EncodedUnit {
                    code: l1,
                    span: Span::new(cell.index, stmt.first_line, stmt.last_line),
                    multiplicity: 1,
                    source: UnitSource::ImportStatement,
                }),
                CellItem::Call(ev) => match catalog.lookup(&ev.qualified_name) {
                    Some(code) => enc.units.push(EncodedUnit {
                        code,
                        span: Span::new(ev.cell_index, ev.line_index, ev.line_index),
                        multiplicity: 1,
                        source: match ev.origin {
                            CallOrigin::Direct => UnitSource::Call,
                            CallOrigin::Spliced { .. } => UnitSource::SplicedDefinition,
                        },
                    }),
                    None => enc.unknown_calls.push((ev.qualified_name, ev.cell_index)),
                },
            }
        }
    }
    enc
}

/// Merges maximal runs of equal adjacent codes into one unit each.
pub fn collapse_runs(enc: &EncodedNotebook) -> EncodedNotebook {
    let mut units: Vec<EncodedUnit> = Vec::with_capacity(enc.units.len());
    for unit in &enc.units {
        match units.last_mut() {
            Some(last) if last.code == unit.code => {
                last.span = last.span.cover(&unit.span);
                last.multiplicity += unit.multiplicity;
            }
            _ => units.push(unit.clone()),
        }
    }
    EncodedNotebook {
        units,
        unknown_calls: enc.unknown_calls.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub unit_range: Range<usize>,
    /// Index of the opening load unit; `None` for residual segments.
    pub opener: Option<usize>,
    /// Index of the closing visualization / ML4 unit.
    pub closer: Option<usize>,
}

impl Segment {
    pub fn is_residual(&self) -> bool {
        self.opener.is_none()
    }
}

fn is_closer(code: CategoryCode) -> bool {
    code.is_group(CategoryGroup::V) || (code.is_group(CategoryGroup::ML) && code.index() == 4)
}

/// Greedy, non-nested segmentation: a load unit opens a segment, the first
/// visualization or ML4 unit after it closes it. Everything else is residual.
pub fn segment(enc: &EncodedNotebook) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let mut residual_start: Option<usize> = None;

    for (i, unit) in enc.units.iter().enumerate() {
        match open {
            None if unit.code.is_group(CategoryGroup::L) => {
                if let Some(start) = residual_start.take() {
                    out.push(Segment {
                        unit_range: start..i,
                        opener: None,
                        closer: None,
                    });
                }
                open = Some(i);
                // a load unit is never a closer, so it cannot close itself
            }
            None => {
                residual_start.get_or_insert(i);
            }
            Some(start) if is_closer(unit.code) => {
                out.push(Segment {
                    unit_range: start..i + 1,
                    opener: Some(start),
                    closer: Some(i),
                });
                open = None;
            }
            Some(_) => {}
        }
    }
    let n = enc.units.len();
    if let Some(start) = open {
        out.push(Segment {
            unit_range: start..n,
            opener: Some(start),
            closer: None,
        });
    }
    if let Some(start) = residual_start {
        out.push(Segment {
            unit_range: start..n,
            opener: None,
            closer: None,
        });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub subsequence: Vec<CategoryCode>,
    pub occurrences: Vec<Range<usize>>,
    pub count: usize,
}

pub const DEFAULT_MIN_REPEAT_LEN: usize = 2;
pub const DEFAULT_MIN_REPEAT_COUNT: usize = 2;

/// Reports maximal repeated code substrings for human review.
///
/// A substring is maximal when its occurrences are not all preceded by the
/// same code and not all followed by the same code (an occurrence at either
/// end of the sequence counts as distinct). `count` is the number of
/// left-to-right non-overlapping occurrences.
pub fn flag_repeats(enc: &EncodedNotebook, min_len: usize, min_count: usize) -> Vec<RepeatReport> {
    let codes = enc.codes();
    let n = codes.len();
    let min_len = min_len.max(1);
    let min_count = min_count.max(2);
    let mut reports = Vec::new();

    for len in min_len..=n {
        let mut positions: HashMap<&[CategoryCode], Vec<usize>> = HashMap::new();
        for start in 0..=n - len {
            positions
                .entry(&codes[start..start + len])
                .or_default()
                .push(start);
        }
        let mut any_repeat = false;
        for (sub, starts) in positions {
            if starts.len() < 2 {
                continue;
            }
            any_repeat = true;
            let left_maximal = starts.contains(&0)
                || starts
                    .iter()
                    .map(|&p| codes[p - 1])
                    .collect::<std::collections::BTreeSet<_>>()
                    .len()
                    > 1;
            let right_maximal = starts.iter().any(|&p| p + len == n)
                || starts
                    .iter()
                    .map(|&p| codes[p + len])
                    .collect::<std::collections::BTreeSet<_>>()
                    .len()
                    > 1;
            if !(left_maximal && right_maximal) {
                continue;
            }
            let mut occurrences = Vec::new();
            let mut next_free = 0;
            for &p in &starts {
                if p >= next_free {
                    occurrences.push(p..p + len);
                    next_free = p + len;
                }
            }
            if occurrences.len() >= min_count {
                reports.push(RepeatReport {
                    subsequence: sub.to_vec(),
                    count: occurrences.len(),
                    occurrences,
                });
            }
        }
        // no repeat of this length means none of any longer length
        if !any_repeat {
            break;
        }
    }
    reports.sort_by(|a, b| {
        (a.occurrences[0].start, a.subsequence.len())
            .cmp(&(b.occurrences[0].start, b.subsequence.len()))
    });
    reports
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::load_catalog;
    use crate::notebook::{Cell, CellKind};

    fn c(s: &str) -> CategoryCode {
        s.parse().unwrap()
    }

    fn enc_of(codes: &[&str]) -> EncodedNotebook {
        EncodedNotebook {
            units: codes
                .iter()
                .enumerate()
                .map(|(i, s)| EncodedUnit {
                    code: c(s),
                    span: Span::new(i, 0, 0),
                    multiplicity: 1,
                    source: UnitSource::Call,
                })
                .collect(),
            unknown_calls: vec![],
        }
    }

    fn nb(sources: &[&str]) -> Notebook {
        Notebook::from_cells(
            "t",
            sources
                .iter()
                .map(|s| Cell::new(0, CellKind::Code, *s))
                .collect(),
        )
    }

    fn test_catalog() -> Catalog {
        load_catalog(
            br#"{"version": "t",
                 "functions": {"pandas.read_csv": "L2", "accuracy": "ML4", "numpy.mean": "ST1"},
                 "fallback_names": {"sort": "PP3", "mean": "ST1"}}"#,
        )
        .unwrap()
    }

    #[test]
    fn encodes_import_then_load() {
        let enc = encode_notebook(
            &nb(&["import pandas as pd\npd.read_csv('x')"]),
            &test_catalog(),
        );
        assert_eq!(enc.codes(), [c("L1"), c("L2")]);
        assert_eq!(enc.units[0].source, UnitSource::ImportStatement);
    }

    #[test]
    fn encodes_nested_innermost_first() {
        let enc = encode_notebook(&nb(&["np.mean(accuracy(y_test, pred))"]), &test_catalog());
        assert_eq!(enc.codes(), [c("ML4"), c("ST1")]);
    }

    #[test]
    fn unknown_calls_are_recorded_not_encoded() {
        let enc = encode_notebook(
            &nb(&["x = 1", "df.sort()\nfoo.bar()\ndf.sort()"]),
            &test_catalog(),
        );
        assert_eq!(enc.codes(), [c("PP3"), c("PP3")]);
        assert_eq!(enc.unknown_calls, [("foo.bar".to_string(), 1)]);
        assert_eq!(collapse_runs(&enc).units.len(), 1);
        assert!(
            encode_notebook(&Notebook::from_cells("e", vec![]), &test_catalog())
                .units
                .is_empty()
        );
    }

    #[test]
    fn six_sorts_collapse_to_one() {
        let src = (0..6)
            .map(|i| format!("d{i}.sort()"))
            .collect::<Vec<_>>()
            .join("\n");
        let enc = collapse_runs(&encode_notebook(&nb(&[&src]), &test_catalog()));
        assert_eq!(enc.units.len(), 1);
        assert_eq!(enc.units[0].code, c("PP3"));
        assert_eq!(enc.units[0].multiplicity, 6);
        assert_eq!(
            enc.units[0].span,
            Span {
                first_cell: 0,
                first_line: 0,
                last_cell: 0,
                last_line: 5
            }
        );
    }

    #[test]
    fn collapse_matches_naive_scan() {
        let enc = collapse_runs(&enc_of(&["L2", "PP3", "PP3", "V1", "V1", "L2"]));
        let got: Vec<_> = enc
            .units
            .iter()
            .map(|u| (u.code.to_string(), u.multiplicity))
            .collect();
        assert_eq!(
            got,
            [
                ("L2".into(), 1),
                ("PP3".into(), 2),
                ("V1".into(), 2),
                ("L2".to_string(), 1)
            ]
        );
        assert_eq!(collapse_runs(&enc), enc);
    }

    #[test]
    fn segments() {
        let s = segment(&enc_of(&["L2", "PP3", "V1"]));
        assert_eq!(
            s,
            [Segment {
                unit_range: 0..3,
                opener: Some(0),
                closer: Some(2)
            }]
        );

        let s = segment(&enc_of(&["PP3", "PP4"]));
        assert_eq!(
            s,
            [Segment {
                unit_range: 0..2,
                opener: None,
                closer: None
            }]
        );

        let s = segment(&enc_of(&["L2", "ML2", "ML4", "PP1", "L2", "V1"]));
        assert_eq!(
            s,
            [
                Segment {
                    unit_range: 0..3,
                    opener: Some(0),
                    closer: Some(2)
                },
                Segment {
                    unit_range: 3..4,
                    opener: None,
                    closer: None
                },
                Segment {
                    unit_range: 4..6,
                    opener: Some(4),
                    closer: Some(5)
                },
            ]
        );

        let s = segment(&enc_of(&["PP1", "L1", "L2", "PP2"]));
        assert_eq!(
            s,
            [
                Segment {
                    unit_range: 0..1,
                    opener: None,
                    closer: None
                },
                Segment {
                    unit_range: 1..4,
                    opener: Some(1),
                    closer: None
                },
            ]
        );
        assert!(segment(&enc_of(&[])).is_empty());
    }

    #[test]
    fn repeats() {
        let r = flag_repeats(&enc_of(&["ML2", "ML4", "ML2", "ML4", "ML2", "ML4"]), 2, 2);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].subsequence, [c("ML2"), c("ML4")]);
        assert_eq!(r[0].count, 3);
        assert_eq!(r[0].occurrences, [0..2, 2..4, 4..6]);

        assert!(flag_repeats(&enc_of(&["L1", "L2", "PP1", "V1"]), 2, 2).is_empty());
        assert!(flag_repeats(&enc_of(&[]), 2, 2).is_empty());
    }

    #[test]
    fn json_lines_dump() {
        let enc = collapse_runs(&enc_of(&["PP3", "PP3"]));
        assert_eq!(
            enc.to_json_lines(),
            "{\"code\":\"PP3\",\"mult\":2,\"cells\":[1,2]}\n"
        );
    }
}
