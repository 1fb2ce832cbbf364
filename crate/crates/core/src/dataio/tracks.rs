//! CTC track files: one `L B E P` record per line.

use std::collections::HashMap;

use crate::error::Location;
use crate::{Error, Result};

/// One track: label `label` is present in frames `begin_frame..=end_frame`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrackRecord {
    pub label: u32,
    pub begin_frame: usize,
    pub end_frame: usize,
    /// Label of the parent track; 0 when there is none.
    pub parent: u32,
}

impl TrackRecord {
    pub const fn new(label: u32, begin_frame: usize, end_frame: usize, parent: u32) -> Self {
        Self {
            label,
            begin_frame,
            end_frame,
            parent,
        }
    }
}

/// Parses and validates a track file. Blank lines are skipped.
pub fn parse_track_file(text: &str) -> Result<Vec<TrackRecord>> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    let mut seen: HashMap<u32, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let at = Location::Line(line_no);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 4 {
            return Err(Error::parse(at, format!("expected 4 fields, found {}", tokens.len())));
        }
        let mut fields = [0u64; 4];
        for (slot, tok) in fields.iter_mut().zip(&tokens) {
            *slot = tok
                .parse()
                .map_err(|_| Error::parse(at, format!("'{tok}' is not a non-negative integer")))?;
        }
        let [label, begin, end, parent] = fields;
        let label = u32::try_from(label).map_err(|_| Error::parse(at, "label out of range"))?;
        let parent = u32::try_from(parent).map_err(|_| Error::parse(at, "parent out of range"))?;
        if label == 0 {
            return Err(Error::parse(at, "label 0 is reserved for background"));
        }
        if end < begin {
            return Err(Error::parse(at, format!("track {label} ends ({end}) before it begins ({begin})")));
        }
        if parent == label {
            return Err(Error::parse(at, format!("track {label} is its own parent")));
        }
        if let Some(first) = seen.insert(label, line_no) {
            return Err(Error::parse(at, format!("duplicate label {label} (first on line {first})")));
        }
        records.push(TrackRecord::new(label, begin as usize, end as usize, parent));
        lines.push(line_no);
    }
    let by_label: HashMap<u32, &TrackRecord> = records.iter().map(|r| (r.label, r)).collect();
    for (rec, &line_no) in records.iter().zip(&lines) {
        if rec.parent == 0 {
            continue;
        }
        let at = Location::Line(line_no);
        let parent = by_label
            .get(&rec.parent)
            .ok_or_else(|| Error::parse(at, format!("parent {} of track {} is not declared", rec.parent, rec.label)))?;
        if parent.end_frame >= rec.begin_frame {
            return Err(Error::parse(
                at,
                format!(
                    "parent {} ends at frame {} but child {} begins at frame {}",
                    parent.label, parent.end_frame, rec.label, rec.begin_frame
                ),
            ));
        }
    }
    Ok(records)
}

pub fn format_track_file(records: &[TrackRecord]) -> String {
    records
        .iter()
        .map(|r| format!("{} {} {} {}\n", r.label, r.begin_frame, r.end_frame, r.parent))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_record() {
        assert_eq!(parse_track_file("1 0 10 0").unwrap(), vec![TrackRecord::new(1, 0, 10, 0)]);
    }

    #[test]
    fn children_of_a_parent() {
        let recs = parse_track_file("1 0 4 0\n2 5 9 1\n3 5 9 1\n").unwrap();
        assert_eq!(recs[1], TrackRecord::new(2, 5, 9, 1));
        assert_eq!(recs[2].parent, 1);
        // Parents may be declared after their children.
        assert!(parse_track_file("2 5 9 1\n1 0 4 0").is_ok());
    }

    #[test]
    fn located_errors() {
        let line = |text: &str| parse_track_file(text).unwrap_err().location();
        assert_eq!(line("1 5 4 0"), Some(Location::Line(1)));
        assert_eq!(line("1 0 4 0\n\n1 5 6 0"), Some(Location::Line(3)));
        assert_eq!(line("1 0 4 0\n2 x 6 0"), Some(Location::Line(2)));
        assert_eq!(line("1 0 4 0\n2 3 6 1"), Some(Location::Line(2)));
        assert_eq!(line("2 3 6 9"), Some(Location::Line(1)));
        assert_eq!(line("2 3 6 2"), Some(Location::Line(1)));
        assert_eq!(line("0 3 6 0"), Some(Location::Line(1)));
        assert_eq!(line("1 -1 6 0"), Some(Location::Line(1)));
        assert_eq!(line("1 2 3"), Some(Location::Line(1)));
        assert_eq!(line("1 2 3 0 5"), Some(Location::Line(1)));
    }

    #[test]
    fn format_round_trip() {
        let recs = vec![TrackRecord::new(1, 0, 4, 0), TrackRecord::new(2, 5, 9, 1)];
        assert_eq!(format_track_file(&recs), "1 0 4 0\n2 5 9 1\n");
        assert_eq!(parse_track_file(&format_track_file(&recs)).unwrap(), recs);
    }
}
