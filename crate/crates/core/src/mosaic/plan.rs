//! Reference-frame selection with backtracking.
//!
//! Frames are visited in acquisition order. A frame links to the previous frame on its row
//! when their overlap correlates confidently, otherwise to the frame above it. Frames that
//! manage neither wait in a pending chain; the next frame of the row that anchors through
//! the frame above resolves the chain backwards, each pending frame taking the frame
//! acquired after it as reference, until a link fails.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::FramePointing;
use crate::error::{Error, Result};
use crate::registration::ShiftEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    /// Previous frame on the same row.
    Neighbour,
    /// Frame in the row above.
    Up,
    /// Next frame on the same row, used while backtracking.
    Opposite,
}

/// Measures the shift of `current` relative to `reference` across their overlap.
pub trait LinkCorrelator {
    fn correlate(&mut self, current: usize, reference: usize, link: Link) -> Result<ShiftEstimate>;
}

/// Correlator driven by a fixed table of confident (current, reference) pairs.
#[derive(Debug, Clone, Default)]
pub struct ScriptedCorrelator {
    confident: HashSet<(usize, usize)>,
    /// Every call in order.
    pub calls: Vec<(usize, usize, Link)>,
}

impl ScriptedCorrelator {
    pub fn new(confident: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            confident: confident.into_iter().collect(),
            calls: Vec::new(),
        }
    }
}

impl LinkCorrelator for ScriptedCorrelator {
    fn correlate(&mut self, current: usize, reference: usize, link: Link) -> Result<ShiftEstimate> {
        self.calls.push((current, reference, link));
        let ratio = if self.confident.contains(&(current, reference)) {
            10.0
        } else {
            1.0
        };
        Ok(ShiftEstimate::new(0.0, 0.0, ratio))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefEntry {
    pub frame_id: usize,
    pub take_neighbour: bool,
    pub take_up: bool,
    pub take_opposite: bool,
    pub reference: Option<usize>,
    /// Shift measured against the reference with uncorrected geometry.
    pub shift: Option<ShiftEstimate>,
}

impl RefEntry {
    fn system_only(frame_id: usize) -> Self {
        Self {
            frame_id,
            take_neighbour: false,
            take_up: false,
            take_opposite: false,
            reference: None,
            shift: None,
        }
    }

    fn linked(frame_id: usize, link: Link, reference: usize, shift: ShiftEstimate) -> Self {
        Self {
            frame_id,
            take_neighbour: link == Link::Neighbour,
            take_up: link == Link::Up,
            take_opposite: link == Link::Opposite,
            reference: Some(reference),
            shift: Some(shift),
        }
    }

    pub fn link(&self) -> Option<Link> {
        match (self.take_neighbour, self.take_up, self.take_opposite) {
            (true, _, _) => Some(Link::Neighbour),
            (_, true, _) => Some(Link::Up),
            (_, _, true) => Some(Link::Opposite),
            _ => None,
        }
    }

    pub fn is_system_only(&self) -> bool {
        self.link().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefPlan {
    pub entries: Vec<RefEntry>,
}

impl RefPlan {
    /// Frames georeferenced with uncorrected geometry.
    pub fn system_only(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|e| e.is_system_only())
            .map(|e| e.frame_id)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            let flags = [e.take_neighbour, e.take_up, e.take_opposite];
            let set = flags.iter().filter(|f| **f).count();
            if e.frame_id != i || set > 1 || (set == 1) != e.reference.is_some() {
                return Err(Error::Precondition(format!("inconsistent plan entry {e:?}")));
            }
            if e.reference.is_some_and(|r| r >= self.entries.len() || r == i) {
                return Err(Error::Precondition(format!("frame {i} has an invalid reference")));
            }
        }
        self.processing_order().map(|_| ())
    }

    /// Frame ids ordered so every reference precedes the frames that use it; otherwise
    /// acquisition order.
    pub fn processing_order(&self) -> Result<Vec<usize>> {
        let n = self.entries.len();
        let mut state = vec![0u8; n];
        let mut order = Vec::with_capacity(n);
        for start in 0..n {
            let mut path = Vec::new();
            let mut f = start;
            // walk up the reference chain until a frame that is already ordered
            while state[f] != 2 {
                if state[f] == 1 {
                    return Err(Error::Internal(format!("reference cycle through frame {f}")));
                }
                state[f] = 1;
                path.push(f);
                match self.entries[f].reference {
                    Some(r) if r < n => f = r,
                    Some(r) => return Err(Error::Precondition(format!("reference {r} is out of range"))),
                    None => break,
                }
            }
            for &p in path.iter().rev() {
                state[p] = 2;
                order.push(p);
            }
        }
        Ok(order)
    }
}

struct Selector<'a, C: LinkCorrelator + ?Sized> {
    correlator: &'a mut C,
    ratio: f64,
    entries: Vec<RefEntry>,
    /// Confident link of a pending frame to its (then unsettled) previous frame.
    forward: Vec<Option<ShiftEstimate>>,
    pending: Vec<usize>,
}

impl<C: LinkCorrelator + ?Sized> Selector<'_, C> {
    fn attempt(&mut self, current: usize, reference: usize, link: Link) -> Option<ShiftEstimate> {
        match self.correlator.correlate(current, reference, link) {
            Ok(e) if e.confidence >= self.ratio => Some(e),
            Ok(_) => None,
            Err(e) => {
                log::debug!("link {current} -> {reference} ({link:?}) failed: {e}");
                None
            }
        }
    }

    /// Pending frames nobody resolved keep a confident link to their previous frame if
    /// they had one; the rest stay on system knowledge.
    fn settle(&mut self, frames: &[usize]) {
        for &f in frames {
            if let Some(e) = self.forward[f] {
                self.entries[f] = RefEntry::linked(f, Link::Neighbour, f - 1, e);
            }
        }
    }

    fn backtrack(&mut self) {
        let chain = std::mem::take(&mut self.pending);
        let mut unresolved = chain.len();
        for &j in chain.iter().rev() {
            match self.attempt(j, j + 1, Link::Opposite) {
                Some(e) => {
                    self.entries[j] = RefEntry::linked(j, Link::Opposite, j + 1, e);
                    unresolved -= 1;
                }
                None => break,
            }
        }
        self.settle(&chain[..unresolved]);
    }
}

/// Chooses a reference frame for every frame of a scan.
///
/// `pointings` are in acquisition order with `frame_id` equal to the position.
pub fn select_references<C: LinkCorrelator + ?Sized>(
    pointings: &[FramePointing],
    correlator: &mut C,
    confidence_ratio: f64,
) -> Result<RefPlan> {
    let n = pointings.len();
    if let Some((i, _)) = pointings.iter().enumerate().find(|(i, p)| p.frame_id != *i) {
        return Err(Error::Precondition(format!("frame at position {i} has a different id")));
    }
    let at: HashMap<(usize, usize), usize> = pointings
        .iter()
        .map(|p| ((p.grid_row, p.grid_col), p.frame_id))
        .collect();
    if at.len() != n {
        return Err(Error::Precondition("grid positions are not unique".into()));
    }
    let mut s = Selector {
        correlator,
        ratio: confidence_ratio,
        entries: (0..n).map(RefEntry::system_only).collect(),
        forward: vec![None; n],
        pending: Vec::new(),
    };
    for (i, p) in pointings.iter().enumerate() {
        let prev = i.checked_sub(1).filter(|&j| pointings[j].grid_row == p.grid_row);
        if prev.is_none() {
            let chain = std::mem::take(&mut s.pending);
            s.settle(&chain);
        }
        if let Some(j) = prev {
            if let Some(e) = s.attempt(i, j, Link::Neighbour) {
                if s.pending.is_empty() {
                    s.entries[i] = RefEntry::linked(i, Link::Neighbour, j, e);
                    continue;
                }
                s.forward[i] = Some(e);
            }
        }
        let up = p
            .grid_row
            .checked_sub(1)
            .and_then(|r| at.get(&(r, p.grid_col)).copied());
        if let Some(u) = up {
            if let Some(e) = s.attempt(i, u, Link::Up) {
                s.entries[i] = RefEntry::linked(i, Link::Up, u, e);
                s.backtrack();
                continue;
            }
        }
        if i > 0 {
            s.pending.push(i);
        }
    }
    let chain = std::mem::take(&mut s.pending);
    s.settle(&chain);
    let plan = RefPlan { entries: s.entries };
    plan.validate()?;
    Ok(plan)
}
