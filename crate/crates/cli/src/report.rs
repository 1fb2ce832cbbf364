//! Comma-separated reports with a fixed header row.

use std::fmt::Write as _;
use std::path::Path;

use crate::manifest::write_file;
use crate::Failure;

pub const DRIFT_HEADER: &str = "frame,dy,dx,score";
pub const PROTRUSION_HEADER: &str = "frame,label,centroid_row,centroid_col,tip_row,tip_col,length_um";
pub const PATCH_HEADER: &str =
    "seed,draw_index,center_row,center_col,rect_top,rect_left,rect_height,rect_width,frame_first,frame_last,augmentation,file";
pub const SEG_HEADER: &str = "video,frame,gt_label,res_label,score";
pub const TRA_HEADER: &str =
    "video,tra,aogm,aogm_empty,splits,false_negatives,false_positives,redundant_edges,missing_edges,wrong_semantics";

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self {
            text: format!("{header}\n"),
            columns: header.split(',').count(),
        }
    }

    pub fn row(&mut self, fields: &[&dyn std::fmt::Display]) {
        debug_assert_eq!(fields.len(), self.columns);
        for (i, f) in fields.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            write!(self.text, "{f}").expect("writing to a String");
        }
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        write_file(path, self.text.as_bytes())
    }
}

/// Shortest representation that reads back to the same value, always with a
/// decimal point: `1.0`, `0.65`, `inf`.
pub fn real(v: f64) -> String {
    format!("{v:?}")
}

/// Fixed-precision micrometres.
pub fn micrometres(v: f64) -> String {
    cellmig::morphology::format_distance(v, 4)
}
