//! File formats: field, scene, detections, trap map, vector field, sparse
//! matrix dump and the training trace.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, ScoredBox};
use crate::gps::TrapMap;
use crate::lattice::{normalize_field, CorrelationField, Lattice};
use crate::learn::LossReport;
use crate::mcl::FlowMatrix;

fn parse_err(what: &str, e: serde_json::Error) -> Error {
    Error::InvalidArgument(format!("cannot parse {what}: {e}"))
}

/// Float with 17 significant digits.
fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// `{"rows","cols","factor","logits"}` with every logit at full precision.
pub fn field_to_json(field: &CorrelationField) -> String {
    let l = field.lattice();
    let mut s = String::new();
    let _ = write!(s, "{{\"rows\":{},\"cols\":{},\"factor\":{},\"logits\":[", l.rows(), l.cols(), l.factor());
    for (i, row) in field.logits().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str("\n[");
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            s.push_str(&full(*v));
        }
        s.push(']');
    }
    s.push_str("\n]}\n");
    s
}

#[derive(Deserialize)]
struct FieldFile {
    rows: usize,
    cols: usize,
    factor: usize,
    logits: Vec<[f64; 5]>,
}

pub fn field_from_json(text: &str) -> Result<CorrelationField> {
    let f: FieldFile = serde_json::from_str(text).map_err(|e| parse_err("field", e))?;
    let lattice = Lattice::grid(f.rows, f.cols, f.factor)?;
    normalize_field(&lattice, f.logits)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSpec {
    pub h: usize,
    pub w: usize,
    pub d: usize,
}

/// Scene file: image size and ground-truth boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub image: ImageSpec,
    pub boxes: Vec<OrientedBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SceneFile {
    pub fn new(lattice: &Lattice, boxes: Vec<OrientedBox>, seed: Option<u64>) -> SceneFile {
        SceneFile {
            image: ImageSpec {
                h: lattice.height_px(),
                w: lattice.width_px(),
                d: lattice.factor(),
            },
            boxes,
            seed,
        }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.image.h, self.image.w, self.image.d)
    }

    /// Boxes in canonical form.
    pub fn canonical_boxes(&self) -> Result<Vec<OrientedBox>> {
        self.boxes.iter().map(|b| b.canonical()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialises") + "\n"
    }

    pub fn from_json(text: &str) -> Result<SceneFile> {
        serde_json::from_str(text).map_err(|e| parse_err("scene", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionsFile {
    pub boxes: Vec<ScoredBox>,
}

impl DetectionsFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("detections serialise") + "\n"
    }

    pub fn from_json(text: &str) -> Result<DetectionsFile> {
        serde_json::from_str(text).map_err(|e| parse_err("detections", e))
    }
}

#[derive(Serialize)]
struct TrapFile<'a> {
    trap_of: &'a [Option<usize>],
    candidates: &'a [usize],
}

/// `{"trap_of":[...],"candidates":[...]}`; background nodes are `null`.
pub fn trap_map_to_json(t: &TrapMap) -> String {
    serde_json::to_string(&TrapFile {
        trap_of: &t.trap_of,
        candidates: &t.candidates,
    })
    .expect("trap map serialises")
        + "\n"
}

/// Row-major array of `[vx, vy]`.
pub fn omega_to_json(omega: &[[f64; 2]]) -> String {
    serde_json::to_string(omega).expect("vectors serialise") + "\n"
}

/// One `m n value` line per stored entry, sorted by column, then row.
pub fn sparse_dump(m: &FlowMatrix) -> String {
    let mut s = String::new();
    for (r, c, v) in m.triplets() {
        let _ = writeln!(s, "{r} {c} {}", full(v));
    }
    s
}

pub fn trace_csv(trace: &[LossReport]) -> String {
    let mut s = String::from("iter,total,l_fg,l_center,l_box\n");
    for (i, r) in trace.iter().enumerate() {
        let _ = writeln!(s, "{i},{},{},{},{}", r.total, r.l_fg, r.l_center, r.l_box);
    }
    s
}
