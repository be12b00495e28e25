//! The latticed graph: node indexing, 4-neighbour topology and the
//! per-node correlation field.
//!
//! Every node carries five weights in the fixed slot order
//! `[SELF, UP, DOWN, LEFT, RIGHT]`. Slots whose neighbour falls outside the
//! lattice are masked: they always hold weight exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest logit stored for a slot whose weight is exactly zero.
pub const MASKED_LOGIT: f64 = -1000.0;

/// One of the five weight slots of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    SelfLoop = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

impl Slot {
    pub const ALL: [Slot; 5] = [Slot::SelfLoop, Slot::Up, Slot::Down, Slot::Left, Slot::Right];
    pub const DIRECTIONS: [Slot; 4] = [Slot::Up, Slot::Down, Slot::Left, Slot::Right];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Slot> {
        Slot::ALL.get(index).copied()
    }

    /// The slot pointing back from the neighbour (UP <-> DOWN, LEFT <-> RIGHT).
    pub fn opposite(self) -> Slot {
        match self {
            Slot::SelfLoop => Slot::SelfLoop,
            Slot::Up => Slot::Down,
            Slot::Down => Slot::Up,
            Slot::Left => Slot::Right,
            Slot::Right => Slot::Left,
        }
    }

    /// Row and column offset of the slot.
    pub fn offset(self) -> (isize, isize) {
        match self {
            Slot::SelfLoop => (0, 0),
            Slot::Up => (-1, 0),
            Slot::Down => (1, 0),
            Slot::Left => (0, -1),
            Slot::Right => (0, 1),
        }
    }
}

/// An `rows x cols` grid of nodes obtained by down-sampling an image by `factor`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    height_px: usize,
    width_px: usize,
    factor: usize,
    rows: usize,
    cols: usize,
}

impl Lattice {
    /// Builds the lattice of an `height_px x width_px` image with down-sampling `factor`.
    pub fn new(height_px: usize, width_px: usize, factor: usize) -> Result<Lattice> {
        if height_px == 0 || width_px == 0 || factor == 0 {
            return Err(Error::ZeroDimension {
                height: height_px,
                width: width_px,
                factor,
            });
        }
        if !height_px.is_multiple_of(factor) || !width_px.is_multiple_of(factor) {
            return Err(Error::NonDivisible {
                height: height_px,
                width: width_px,
                factor,
            });
        }
        Ok(Lattice {
            height_px,
            width_px,
            factor,
            rows: height_px / factor,
            cols: width_px / factor,
        })
    }

    /// Lattice given directly by its node grid.
    pub fn grid(rows: usize, cols: usize, factor: usize) -> Result<Lattice> {
        Lattice::new(rows * factor, cols * factor, factor)
    }

    pub fn height_px(&self) -> usize {
        self.height_px
    }

    pub fn width_px(&self) -> usize {
        self.width_px
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn node_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Longest Manhattan distance between two nodes.
    pub fn diameter(&self) -> usize {
        self.rows + self.cols - 2
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.rows && col < self.cols);
        row * self.cols + col
    }

    #[inline]
    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.cols, node % self.cols)
    }

    pub fn check_node(&self, node: usize) -> Result<()> {
        if node < self.node_count() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node,
                node_count: self.node_count(),
            })
        }
    }

    /// Node reached from `node` through `slot`, if it lies inside the lattice.
    #[inline]
    pub fn neighbor(&self, node: usize, slot: Slot) -> Option<usize> {
        let (r, c) = self.coords(node);
        match slot {
            Slot::SelfLoop => Some(node),
            Slot::Up => (r > 0).then(|| node - self.cols),
            Slot::Down => (r + 1 < self.rows).then(|| node + self.cols),
            Slot::Left => (c > 0).then(|| node - 1),
            Slot::Right => (c + 1 < self.cols).then(|| node + 1),
        }
    }

    /// Existing neighbours of `node` in slot order UP, DOWN, LEFT, RIGHT.
    pub fn neighbors(&self, node: usize) -> Result<Vec<(Slot, usize)>> {
        self.check_node(node)?;
        Ok(self.neighbors_iter(node).collect())
    }

    pub fn neighbors_iter(&self, node: usize) -> impl Iterator<Item = (Slot, usize)> + '_ {
        Slot::DIRECTIONS
            .into_iter()
            .filter_map(move |slot| self.neighbor(node, slot).map(|n| (slot, n)))
    }

    /// Whether `slot` of `node` points at an existing node.
    #[inline]
    pub fn slot_exists(&self, node: usize, slot: Slot) -> bool {
        self.neighbor(node, slot).is_some()
    }

    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = self.coords(a);
        let (rb, cb) = self.coords(b);
        ra.abs_diff(rb) + ca.abs_diff(cb)
    }

    pub fn chebyshev(&self, a: usize, b: usize) -> usize {
        let (ra, ca) = self.coords(a);
        let (rb, cb) = self.coords(b);
        ra.abs_diff(rb).max(ca.abs_diff(cb))
    }

    /// Pixel coordinates `(x, y)` of the centre of the node's image cell.
    pub fn pixel_center(&self, node: usize) -> (f64, f64) {
        let (r, c) = self.coords(node);
        let d = self.factor as f64;
        ((c as f64 + 0.5) * d, (r as f64 + 0.5) * d)
    }
}

/// Per-node weights over `[SELF, UP, DOWN, LEFT, RIGHT]`, together with the
/// logits they were normalised from.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationField {
    lattice: Lattice,
    weights: Vec<[f64; 5]>,
    logits: Vec<[f64; 5]>,
}

impl CorrelationField {
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn weights(&self) -> &[[f64; 5]] {
        &self.weights
    }

    pub fn logits(&self) -> &[[f64; 5]] {
        &self.logits
    }

    #[inline]
    pub fn weight(&self, node: usize, slot: Slot) -> f64 {
        self.weights[node][slot.index()]
    }

    /// Field taken from explicit weights. Each row must be non-negative,
    /// zero on masked slots and sum to one; the stored logits are `ln(w)`
    /// clamped at [`MASKED_LOGIT`].
    pub fn from_weights(lattice: &Lattice, weights: Vec<[f64; 5]>) -> Result<CorrelationField> {
        if weights.len() != lattice.node_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight rows for {} nodes",
                weights.len(),
                lattice.node_count()
            )));
        }
        for (node, row) in weights.iter().enumerate() {
            let mut sum = 0.0;
            for slot in Slot::ALL {
                let w = row[slot.index()];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidWeights {
                        node,
                        reason: format!("weight {w} in slot {slot:?}"),
                    });
                }
                if w != 0.0 && !lattice.slot_exists(node, slot) {
                    return Err(Error::InvalidWeights {
                        node,
                        reason: format!("non-zero weight on masked slot {slot:?}"),
                    });
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidWeights {
                    node,
                    reason: format!("weights sum to {sum}"),
                });
            }
        }
        let logits = weights
            .iter()
            .map(|row| row.map(|w| if w > 0.0 { w.ln().max(MASKED_LOGIT) } else { MASKED_LOGIT }))
            .collect();
        Ok(CorrelationField {
            lattice: *lattice,
            weights,
            logits,
        })
    }

    /// Field with all weight on SELF.
    pub fn identity(lattice: &Lattice) -> CorrelationField {
        let mut row = [0.0; 5];
        row[Slot::SelfLoop.index()] = 1.0;
        CorrelationField::from_weights(lattice, vec![row; lattice.node_count()])
            .expect("identity weights are valid")
    }

    /// Restriction to the rectangular window `rows x cols` with top-left
    /// node `(row0, col0)`, renormalised over the slots that stay inside.
    pub fn window(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<CorrelationField> {
        if rows == 0 || cols == 0 || row0 + rows > self.lattice.rows() || col0 + cols > self.lattice.cols() {
            return Err(Error::InvalidArgument(format!(
                "window {rows}x{cols} at ({row0},{col0}) outside {}x{} lattice",
                self.lattice.rows(),
                self.lattice.cols()
            )));
        }
        let sub = Lattice::grid(rows, cols, self.lattice.factor())?;
        let mut logits = Vec::with_capacity(sub.node_count());
        for r in 0..rows {
            for c in 0..cols {
                logits.push(self.logits[self.lattice.index(row0 + r, col0 + c)]);
            }
        }
        normalize_field(&sub, logits)
    }
}

/// Masked softmax of the per-node logits over SELF and the existing
/// neighbour slots.
pub fn normalize_field(lattice: &Lattice, logits: Vec<[f64; 5]>) -> Result<CorrelationField> {
    if logits.len() != lattice.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows for {} nodes",
            logits.len(),
            lattice.node_count()
        )));
    }
    let mut weights = Vec::with_capacity(logits.len());
    for (node, row) in logits.iter().enumerate() {
        weights.push(masked_softmax(lattice, node, row)?);
    }
    Ok(CorrelationField {
        lattice: *lattice,
        weights,
        logits,
    })
}

fn masked_softmax(lattice: &Lattice, node: usize, logits: &[f64; 5]) -> Result<[f64; 5]> {
    let mut max = f64::NEG_INFINITY;
    for slot in Slot::ALL {
        let z = logits[slot.index()];
        if !z.is_finite() {
            return Err(Error::NonFiniteLogit {
                node,
                slot: slot.index(),
            });
        }
        if lattice.slot_exists(node, slot) {
            max = max.max(z);
        }
    }
    let mut out = [0.0; 5];
    let mut sum = 0.0;
    for slot in Slot::ALL {
        if lattice.slot_exists(node, slot) {
            let e = (logits[slot.index()] - max).exp();
            out[slot.index()] = e;
            sum += e;
        }
    }
    for w in &mut out {
        *w /= sum;
    }
    Ok(out)
}
